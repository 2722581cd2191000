"""Design sensitivities: macro tensor derivatives contracted with the
cell-level insertion derivatives, normalized into the level-set reaction.

The macro half carries dJ/dK* per sector (a symmetric 2x2 from the state
and adjoint gradients). The cell half carries the pointwise derivative
of K* when a small inclusion of the other phase appears, built from the
corrector gradients. Their contraction, split by insertion direction and
blended by the smoothed indicator, is L1-normalized per cell so the two
objectives contribute with weights w and 1-w regardless of units.
"""

from __future__ import annotations

import logging

import numpy as np

from . import fem
from .geometry import TriMesh
from .homogenization import CellMaterialField

log = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-300


def tensor_sensitivity(mesh: TriMesh, state: fem.ScalarField,
                       adjoint: fem.ScalarField, sector: int) -> np.ndarray:
    """Symmetrized dJ/dK* over one design sector: -int grad T (x) grad v.

    Only the symmetric part is identifiable since K* is symmetric; the
    off-diagonal entry is the derivative along half of a symmetric
    (1,2)+(2,1) perturbation.
    """
    mask = mesh.region_mask(sector)
    gt = state.gradient()[mask]
    gv = adjoint.gradient()[mask]
    a = mesh.areas[mask]
    s = -np.einsum("e,ei,ej->ij", a, gt, gv)
    return 0.5 * (s + s.T)


def insertion_prefactor(k_host: float, k_insert: float) -> float:
    """Scalar factor of the tensor insertion derivative for a small disk."""
    return 2.0 * k_host * (k_insert - k_host) / (k_insert + k_host)


def topological_tensor_fields(mesh: TriMesh, mat: CellMaterialField,
                              w1: fem.ScalarField, w2: fem.ScalarField):
    """Nodal insertion derivatives of K* for both phase swaps.

    Returns (insert_a, insert_b): (n_nodes, 2, 2) arrays for inserting
    phase a into b-host and phase b into a-host. Element values
    prefactor * (e_i + grad w_i).(e_j + grad w_j) are transferred to
    nodes by area-weighted averaging, accumulated on periodic masters so
    paired boundary nodes agree exactly.
    """
    e1 = w1.gradient()
    e2 = w2.gradient()
    e1[:, 0] += 1.0
    e2[:, 1] += 1.0
    outer = np.empty((mesh.n_elements, 2, 2))
    outer[:, 0, 0] = np.einsum("ei,ei->e", e1, e1)
    outer[:, 0, 1] = np.einsum("ei,ei->e", e1, e2)
    outer[:, 1, 0] = outer[:, 0, 1]
    outer[:, 1, 1] = np.einsum("ei,ei->e", e2, e2)

    nodal = _average_to_nodes(mesh, outer)
    pref_insert_a = insertion_prefactor(mat.k_b, mat.k_a)
    pref_insert_b = insertion_prefactor(mat.k_a, mat.k_b)
    return pref_insert_a * nodal, pref_insert_b * nodal


def _average_to_nodes(mesh: TriMesh, element_values: np.ndarray) -> np.ndarray:
    """Area-weighted element-to-node transfer honouring periodic pairing."""
    flat = element_values.reshape(mesh.n_elements, -1)
    acc = np.zeros((mesh.n_nodes, flat.shape[1]))
    wsum = np.zeros(mesh.n_nodes)
    w = np.repeat(mesh.areas, 3)
    idx = mesh.elements.ravel()
    if mesh.periodic_pairs is not None:
        remap = np.arange(mesh.n_nodes)
        remap[mesh.periodic_pairs[:, 1]] = mesh.periodic_pairs[:, 0]
        idx = remap[idx]
    np.add.at(acc, idx, w[:, None] * np.repeat(flat, 3, axis=0))
    np.add.at(wsum, idx, w)
    acc /= wsum[:, None].clip(min=1e-300)
    if mesh.periodic_pairs is not None:
        acc[mesh.periodic_pairs[:, 1]] = acc[mesh.periodic_pairs[:, 0]]
    return acc.reshape((mesh.n_nodes,) + element_values.shape[1:])


def nodal_abs_integral(mesh: TriMesh, field: np.ndarray) -> float:
    """Lumped-mass integral of |field| over the cell."""
    return float((mesh.lumped_mass * np.abs(field)).sum())


def phase_blend(contraction_insert_a: np.ndarray, contraction_insert_b: np.ndarray,
                chi_nodes: np.ndarray) -> np.ndarray:
    """Directional sensitivity: insert-a where phase b sits, minus insert-b where a sits."""
    return (contraction_insert_a * (1.0 - chi_nodes)
            - contraction_insert_b * chi_nodes)


def combined_sensitivity(mesh: TriMesh, dj1_dk: np.ndarray | None,
                         dj2_dk: np.ndarray | None,
                         insert_a: np.ndarray, insert_b: np.ndarray,
                         chi_nodes: np.ndarray, w: float):
    """Normalized reaction term for one cell.

    Each objective's blended field is scaled so its L1 mass over the
    cell equals its weight (w for the mismatch objective, 1-w for the
    flux objective). A degenerate L1 norm drops that term with a logged
    warning. Returns (jprime, c1, c2).
    """
    jprime = np.zeros(mesh.n_nodes)
    coeffs = []
    for weight, s in ((w, dj1_dk), (1.0 - w, dj2_dk)):
        if weight == 0.0 or s is None:
            coeffs.append(0.0)
            continue
        g = phase_blend(np.einsum("ij,nij->n", s, insert_a),
                        np.einsum("ij,nij->n", s, insert_b), chi_nodes)
        norm = nodal_abs_integral(mesh, g)
        if norm < DEGENERATE_NORM:
            log.warning("degenerate sensitivity norm; dropping objective term")
            coeffs.append(0.0)
            continue
        c = weight / norm
        coeffs.append(c)
        jprime += c * g
    return jprime, coeffs[0], coeffs[1]
