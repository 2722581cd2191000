"""Legacy-VTK (ASCII unstructured grid) export of meshes and fields."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .geometry import TriMesh

_VTK_TRIANGLE = 5


def write_vtk(path, mesh: TriMesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "cloakopt") -> None:
    """Write the mesh with optional nodal and element fields.

    Scalar fields are (N,) arrays; vector fields are (N, 2) and padded
    with a zero third component.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{x:.12g} {y:.12g} 0")
    lines.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    for a, b, c in mesh.elements:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines.extend([str(_VTK_TRIANGLE)] * mesh.n_elements)

    def emit(section: str, count: int, data: dict):
        lines.append(f"{section} {count}")
        for name, values in data.items():
            values = np.asarray(values)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.12g}" for v in values)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{v[0]:.12g} {v[1]:.12g} 0" for v in values)

    if cell_data is None:
        cell_data = {}
    cell_data = {"region": mesh.element_region.astype(float), **cell_data}
    emit("CELL_DATA", mesh.n_elements, cell_data)
    if point_data:
        emit("POINT_DATA", mesh.n_nodes, point_data)
    path.write_text("\n".join(lines) + "\n")


def flux_vectors(mesh: TriMesh, tensors: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Element-wise heat flux -K grad T for export."""
    g = mesh.element_gradient(values)
    return -np.einsum("eij,ej->ei", tensors, g)
