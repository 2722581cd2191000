import numpy as np
import pytest

from cloakopt import fem
from cloakopt import macro_solver as ms
from cloakopt import sensitivity as sens
from cloakopt.geometry import UnitCellGeometry, build_cell_mesh
from cloakopt.homogenization import CellMaterialField, corrector_pair
from cloakopt.macro_solver import BoundaryData, MacroMaterialMap

from conftest import COPPER, PDMS, STEEL, rotation

BC = BoundaryData(0.0, 1.0)


def synthetic_sector_tensors():
    tensors = []
    for l in range(1, 9):
        r = rotation(15.0 * l)
        tensors.append(r @ np.diag([5.0 + l, 1.0 + 0.3 * l]) @ r.T)
    return tensors


@pytest.fixture(scope="module")
def fd_setup(coarse_macro_mesh):
    mesh = coarse_macro_mesh
    steel = ms.solve_state(mesh, ms.uniform_map(STEEL), BC)
    tensors = synthetic_sector_tensors()
    matmap = MacroMaterialMap(list(tensors), k_exterior=STEEL, k_obstacle=COPPER)
    temp = ms.solve_state(mesh, matmap, BC)
    v1 = ms.solve_adjoint(mesh, matmap, "j1", temp, steel)
    v2 = ms.solve_adjoint(mesh, matmap, "j2", temp)
    return mesh, steel, tensors, temp, {"j1": v1, "j2": v2}


def objective_pair(mesh, steel, tensors):
    matmap = MacroMaterialMap(list(tensors), k_exterior=STEEL, k_obstacle=COPPER)
    temp = ms.solve_state(mesh, matmap, BC)
    return ms.evaluate_objectives(temp, steel, mesh)


def test_tensor_sensitivity_matches_finite_differences(fd_setup):
    mesh, steel, tensors, temp, adjoints = fd_setup
    for kind, idx in (("j1", 0), ("j2", 1)):
        for l in (1, 4, 7):
            s = sens.tensor_sensitivity(mesh, temp, adjoints[kind], l)
            h = 1e-4 * np.linalg.norm(tensors[l - 1])
            for (i, j) in ((0, 0), (0, 1), (1, 1)):
                dk = np.zeros((2, 2))
                dk[i, j] += h
                if i != j:
                    dk[j, i] += h
                plus = [t.copy() for t in tensors]
                plus[l - 1] = tensors[l - 1] + dk
                minus = [t.copy() for t in tensors]
                minus[l - 1] = tensors[l - 1] - dk
                fd = (objective_pair(mesh, steel, plus)[idx]
                      - objective_pair(mesh, steel, minus)[idx]) / (2 * h)
                predicted = s[i, j] if i == j else 2.0 * s[i, j]
                assert fd == pytest.approx(predicted, rel=1e-3), (kind, l, i, j)


def test_first_order_prediction_of_objective_change(fd_setup):
    mesh, steel, tensors, temp, adjoints = fd_setup
    j0 = objective_pair(mesh, steel, tensors)
    rng = np.random.default_rng(9)
    for kind, idx in (("j1", 0), ("j2", 1)):
        l = 3
        s = sens.tensor_sensitivity(mesh, temp, adjoints[kind], l)
        sym = rng.normal(size=(2, 2))
        sym = 0.5 * (sym + sym.T)
        dk = 1e-3 * np.linalg.norm(tensors[l - 1]) * sym / np.linalg.norm(sym)
        perturbed = [t.copy() for t in tensors]
        perturbed[l - 1] = tensors[l - 1] + dk
        dj = objective_pair(mesh, steel, perturbed)[idx] - j0[idx]
        predicted = float(np.tensordot(s, dk))
        assert dj == pytest.approx(predicted, rel=0.05)


def test_zero_adjoint_gives_zero_sensitivity(fd_setup):
    mesh, _, _, temp, _ = fd_setup
    zero = fem.ScalarField(np.zeros(mesh.n_nodes), mesh)
    s = sens.tensor_sensitivity(mesh, temp, zero, 2)
    assert np.all(s == 0.0)


def test_sensitivity_linear_in_adjoint(fd_setup):
    mesh, _, _, temp, adjoints = fd_setup
    v = adjoints["j1"]
    scaled = fem.ScalarField(4.0 * v.values, mesh)
    s1 = sens.tensor_sensitivity(mesh, temp, v, 5)
    s4 = sens.tensor_sensitivity(mesh, temp, scaled, 5)
    np.testing.assert_allclose(s4, 4.0 * s1, rtol=1e-12)


def test_insertion_prefactors_published_values():
    assert sens.insertion_prefactor(COPPER, PDMS) == pytest.approx(-771.41, abs=0.01)
    assert sens.insertion_prefactor(PDMS, COPPER) == pytest.approx(0.29977, abs=1e-5)


def test_topological_fields_homogeneous_cell(cell_mesh_32):
    mat = CellMaterialField(chi=np.ones(cell_mesh_32.n_elements),
                            k_a=COPPER, k_b=PDMS)
    w1, w2 = corrector_pair(cell_mesh_32, mat)
    ins_a, ins_b = sens.topological_tensor_fields(cell_mesh_32, mat, w1, w2)
    pa = sens.insertion_prefactor(PDMS, COPPER)
    pb = sens.insertion_prefactor(COPPER, PDMS)
    ident = np.broadcast_to(np.eye(2), ins_a.shape)
    np.testing.assert_allclose(ins_a, pa * ident, atol=1e-9 * abs(pa))
    np.testing.assert_allclose(ins_b, pb * ident, atol=1e-9 * abs(pb))


def test_topological_fields_periodic_consistency(cell_mesh_32):
    c = cell_mesh_32.centroids
    chi = np.clip(0.5 + 0.5 * np.sin(2 * np.pi * c[:, 0]), 0, 1)
    mat = CellMaterialField(chi=chi, k_a=COPPER, k_b=PDMS)
    w1, w2 = corrector_pair(cell_mesh_32, mat)
    ins_a, _ = sens.topological_tensor_fields(cell_mesh_32, mat, w1, w2)
    m, s = cell_mesh_32.periodic_pairs.T
    np.testing.assert_array_equal(ins_a[m], ins_a[s])


def test_combined_sensitivity_normalization_identity(cell_mesh_32):
    c = cell_mesh_32.centroids
    chi = np.clip(0.5 + 0.5 * np.sin(2 * np.pi * (c[:, 0] + c[:, 1])), 0, 1)
    mat = CellMaterialField(chi=chi, k_a=COPPER, k_b=PDMS)
    w1, w2 = corrector_pair(cell_mesh_32, mat)
    ins_a, ins_b = sens.topological_tensor_fields(cell_mesh_32, mat, w1, w2)
    chi_nodes = np.clip(0.5 + 0.5 * np.sin(
        2 * np.pi * (cell_mesh_32.nodes[:, 0] + cell_mesh_32.nodes[:, 1])), 0, 1)
    s1 = np.array([[1.0, 0.2], [0.2, 0.5]])
    s2 = np.array([[-0.3, 0.1], [0.1, 0.8]])
    w = 0.7
    jprime, c1, c2 = sens.combined_sensitivity(
        cell_mesh_32, s1, s2, ins_a, ins_b, chi_nodes, w)
    g1 = sens.phase_blend(np.einsum("ij,nij->n", s1, ins_a),
                          np.einsum("ij,nij->n", s1, ins_b), chi_nodes)
    g2 = sens.phase_blend(np.einsum("ij,nij->n", s2, ins_a),
                          np.einsum("ij,nij->n", s2, ins_b), chi_nodes)
    assert sens.nodal_abs_integral(cell_mesh_32, c1 * g1) == pytest.approx(w, abs=1e-10)
    assert sens.nodal_abs_integral(cell_mesh_32, c2 * g2) == pytest.approx(1 - w, abs=1e-10)
    np.testing.assert_allclose(jprime, c1 * g1 + c2 * g2, rtol=1e-12)


def test_combined_sensitivity_single_objective_weights(cell_mesh_32):
    mat = CellMaterialField(chi=np.zeros(cell_mesh_32.n_elements),
                            k_a=COPPER, k_b=PDMS)
    w1, w2 = corrector_pair(cell_mesh_32, mat)
    ins_a, ins_b = sens.topological_tensor_fields(cell_mesh_32, mat, w1, w2)
    chi_nodes = np.zeros(cell_mesh_32.n_nodes)
    s1 = np.eye(2)
    jprime, c1, c2 = sens.combined_sensitivity(
        cell_mesh_32, s1, None, ins_a, ins_b, chi_nodes, 1.0)
    assert c2 == 0.0
    assert c1 > 0.0
    # uniform insulating cell with dJ/dK = +I: inserting the conducting
    # phase raises the objective, so the reaction is positive everywhere
    assert jprime.min() > 0.0
    assert sens.nodal_abs_integral(cell_mesh_32, jprime) == pytest.approx(1.0, abs=1e-10)


def test_degenerate_norm_drops_term(cell_mesh_32, caplog):
    mat = CellMaterialField(chi=np.zeros(cell_mesh_32.n_elements),
                            k_a=COPPER, k_b=PDMS)
    w1, w2 = corrector_pair(cell_mesh_32, mat)
    ins_a, ins_b = sens.topological_tensor_fields(cell_mesh_32, mat, w1, w2)
    with caplog.at_level("WARNING"):
        jprime, c1, c2 = sens.combined_sensitivity(
            cell_mesh_32, np.zeros((2, 2)), None, ins_a, ins_b,
            np.zeros(cell_mesh_32.n_nodes), 1.0)
    assert c1 == 0.0
    assert np.all(jprime == 0.0)
    assert any("degenerate" in r.message for r in caplog.records)
