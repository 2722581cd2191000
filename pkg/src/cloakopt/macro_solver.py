"""Macroscale conduction state, its adjoints, and objective evaluation.

The state problem is steady conduction on the half domain with fixed
temperatures on the left/right edges and adiabatic top/bottom, the
conductivity being the per-region tensor map (homogenized tensors in the
design sectors, isotropic elsewhere). The two adjoint problems share the
operator but carry objective-derivative loads and homogeneous Dirichlet
data; their loads are the exact derivatives of the discrete objective
values, so adjoint-based gradients match finite differences of the
discrete objectives to solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem, objectives, vtkio
from .geometry import (GAMMA_A, GAMMA_B, REGION_EXTERIOR, REGION_OBSTACLE,
                       SECTOR_FIRST, SECTOR_LAST, TriMesh)


@dataclass
class BoundaryData:
    """Fixed edge temperatures; the remaining edges are adiabatic."""

    t_low: float = 0.0
    t_high: float = 1.0

    def validate(self) -> None:
        if not (np.isfinite(self.t_low) and np.isfinite(self.t_high)):
            raise ValueError("boundary temperatures must be finite")
        if self.t_low == self.t_high:
            raise ValueError("equal edge temperatures make the problem trivial")


@dataclass
class MacroMaterialMap:
    """Per-region conductivity: sector tensors plus two isotropic fills."""

    sector_tensors: list          # one 2x2 array (or EffectiveTensor) per sector
    k_exterior: float
    k_obstacle: float

    def element_tensors(self, mesh: TriMesh) -> np.ndarray:
        t = np.zeros((mesh.n_elements, 2, 2))
        ext = mesh.region_mask(REGION_EXTERIOR)
        t[ext] = self.k_exterior * np.eye(2)
        obs = mesh.region_mask(REGION_OBSTACLE)
        t[obs] = self.k_obstacle * np.eye(2)
        for l in range(SECTOR_FIRST, SECTOR_LAST + 1):
            tensor = self.sector_tensors[l - 1]
            mat = tensor.matrix if hasattr(tensor, "matrix") else np.asarray(tensor)
            t[mesh.region_mask(l)] = mat
        return t


def uniform_map(k: float) -> MacroMaterialMap:
    return MacroMaterialMap(sector_tensors=[k * np.eye(2)] * 8,
                            k_exterior=k, k_obstacle=k)


def ring_filled_map(k_ring: float, k_exterior: float, k_obstacle: float) -> MacroMaterialMap:
    return MacroMaterialMap(sector_tensors=[k_ring * np.eye(2)] * 8,
                            k_exterior=k_exterior, k_obstacle=k_obstacle)


def _dirichlet_nodes(mesh: TriMesh, tag: str) -> np.ndarray:
    return np.unique(mesh.boundary_edges[tag])


def state_system(mesh: TriMesh, matmap: MacroMaterialMap,
                 bc: BoundaryData) -> fem.SparseSystem:
    bc.validate()
    system = fem.assemble_diffusion(mesh, matmap.element_tensors(mesh))
    system = fem.apply_dirichlet(system, _dirichlet_nodes(mesh, GAMMA_A), bc.t_low)
    system = fem.apply_dirichlet(system, _dirichlet_nodes(mesh, GAMMA_B), bc.t_high)
    return system


def solve_state(mesh: TriMesh, matmap: MacroMaterialMap,
                bc: BoundaryData) -> fem.ScalarField:
    """Temperature field for the given material map and edge temperatures."""
    return fem.solve(state_system(mesh, matmap, bc))


def adjoint_load(mesh: TriMesh, objective: str, state: fem.ScalarField,
                 reference: fem.ScalarField | None = None) -> np.ndarray:
    """Derivative of the discrete objective w.r.t. nodal temperatures.

    j1: 2 * M_E (T - T_ref) on the evaluation region; j2: 2 * A_C T with
    A_C the unit-conductivity stiffness of the obstacle region (the
    divergence-form load of the gradient-energy objective).
    """
    if objective == "j1":
        if reference is None:
            raise ValueError("j1 adjoint needs the reference field")
        m = fem.mass_matrix(mesh, mesh.region_mask(REGION_EXTERIOR))
        return 2.0 * (m @ (state.values - reference.values))
    if objective == "j2":
        a = fem.stiffness_matrix(
            mesh, fem.isotropic_tensors(np.ones(mesh.n_elements)),
            mesh.region_mask(REGION_OBSTACLE))
        return 2.0 * (a @ state.values)
    raise ValueError(f"unknown objective {objective!r}")


def solve_adjoint(mesh: TriMesh, matmap: MacroMaterialMap, objective: str,
                  state: fem.ScalarField,
                  reference: fem.ScalarField | None = None) -> fem.ScalarField:
    """Adjoint field: same operator, objective-derivative load, zero edge values."""
    system = fem.assemble_diffusion(mesh, matmap.element_tensors(mesh))
    system = fem.with_rhs(system, adjoint_load(mesh, objective, state, reference))
    system = fem.apply_dirichlet(system, _dirichlet_nodes(mesh, GAMMA_A), 0.0)
    system = fem.apply_dirichlet(system, _dirichlet_nodes(mesh, GAMMA_B), 0.0)
    return fem.solve(system)


def evaluate_objectives(state: fem.ScalarField, reference: fem.ScalarField,
                        mesh: TriMesh) -> tuple[float, float]:
    """(J1, J2): exterior mismatch energy and obstacle gradient energy."""
    j1 = objectives.mismatch(state.values, reference.values, mesh)
    j2 = objectives.gradient_energy(state.values, mesh)
    return j1, j2


def flux_balance_error(mesh: TriMesh, matmap: MacroMaterialMap, bc: BoundaryData,
                       state: fem.ScalarField) -> float:
    """Relative mismatch between inflow and outflow through the fixed edges."""
    system = state_system(mesh, matmap, bc)
    fa = fem.boundary_reaction(system, state.values, GAMMA_A)
    fb = fem.boundary_reaction(system, state.values, GAMMA_B)
    scale = max(abs(fa), abs(fb), 1e-300)
    return abs(fa + fb) / scale


def temperature_bounds_violation(state: fem.ScalarField, bc: BoundaryData) -> float:
    """How far nodal temperatures overshoot the prescribed edge range."""
    lo, hi = sorted((bc.t_low, bc.t_high))
    return max(float(lo - state.values.min()), float(state.values.max() - hi), 0.0)


def export_fields(path, mesh: TriMesh, state: fem.ScalarField,
                  reference: fem.ScalarField, matmap: MacroMaterialMap) -> None:
    """VTK dump of T, the deviation from the reference, and the heat flux."""
    tensors = matmap.element_tensors(mesh)
    vtkio.write_vtk(
        path, mesh,
        point_data={"T": state.values, "T_sub": state.values - reference.values},
        cell_data={"flux": vtkio.flux_vectors(mesh, tensors, state.values)},
    )
