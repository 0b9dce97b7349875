from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import dense_neumann
from eitmcmc.experiment.data import truth_image
from eitmcmc.field_grid import ConductivityField, ElectrodeLayout, GridSpec
from eitmcmc.forward_solver import (ApproxModel, CoarseModel, ConductivityDomainError, DrivePattern, FineModel,
                                    VoltageSet, assemble, drive_matrix, load_voltages, save_voltages, solve_approx,
                                    solve_coarse, solve_fine, transfer_matrix)


def dense_oracle(values: np.ndarray, side: int) -> np.ndarray:
    """Electrode voltages from a dense least-squares solve of the Neumann system."""
    A = dense_neumann(values, side)
    cells = ElectrodeLayout(GridSpec(side)).cells
    P = np.zeros((side * side, 16))
    P[cells, np.arange(16)] = 1.0
    u = np.linalg.pinv(A) @ (P @ drive_matrix().T)
    V = u[cells].T
    return V - V.mean(axis=1, keepdims=True)


def test_drive_pattern_currents():
    c = DrivePattern(5).currents
    assert c[5] == 1.0 and np.all(np.delete(c, 5) == -1 / 15)
    assert abs(c.sum()) < 1e-15


def test_matches_dense_oracle_6x6(rng):
    v = rng.uniform(2.5, 4.5, 36)
    got = solve_fine(ConductivityField(GridSpec(6), v)).voltages
    np.testing.assert_allclose(got, dense_oracle(v, 6), rtol=0, atol=1e-10)


def test_scipy_path_matches_fused_path(rng):
    v = rng.uniform(2.5, 4.5, 144)
    f = ConductivityField(GridSpec(12), v)
    np.testing.assert_allclose(assemble(f).voltages().voltages, solve_fine(f).voltages, atol=1e-12)


def test_constant_field_is_scaled_laplacian():
    A = assemble(ConductivityField.constant(5, 3.0)).stiffness.toarray()
    L = assemble(ConductivityField.constant(5, 1.0)).stiffness.toarray()
    np.testing.assert_allclose(A, 3.0 * L, rtol=1e-15)
    # interior row is the 5-point stencil, corner row keeps two neighbours
    assert L[12, 12] == 4 and sorted(L[12][L[12] != 0].tolist()) == [-1, -1, -1, -1, 4]
    assert L[0, 0] == 2


def test_assembled_matrix_structure(rng):
    A = assemble(ConductivityField(GridSpec(7), rng.uniform(0.5, 5, 49))).stiffness.toarray()
    np.testing.assert_array_equal(A, A.T)
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0)
    assert np.max(np.abs(A @ np.ones(49))) < 1e-12
    # null space is exactly the constants
    w = np.linalg.eigvalsh(A)
    assert abs(w[0]) < 1e-10 and w[1] > 1e-6


def test_nonpositive_conductivity_rejected():
    v = np.full(36, 3.0)
    v[7] = 0.0
    with pytest.raises(ConductivityDomainError):
        assemble(ConductivityField(GridSpec(6), v))
    with pytest.raises(ConductivityDomainError):
        FineModel(GridSpec(6))(v)
    v[7] = np.nan
    with pytest.raises(ConductivityDomainError):
        ApproxModel(GridSpec(6), 3)(v)


@pytest.mark.parametrize("make", [lambda g: FineModel(g), lambda g: ApproxModel(g, 7),
                                  lambda g: CoarseModel(g, GridSpec(4))])
def test_homogeneity_all_fidelities(make, rng):
    g = GridSpec(12)
    model = make(g)
    x = rng.uniform(2.5, 4.5, g.m)
    a, b = model(2 * x), model(x) / 2
    assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(b))


def test_quarter_turn_rotation():
    V = solve_fine(ConductivityField.constant(24, 3.0)).voltages
    rolled = np.roll(np.roll(V, 4, axis=0), 4, axis=1)
    np.testing.assert_allclose(rolled, V, rtol=0, atol=1e-10)


def test_rotating_the_field_rotates_the_data(rng):
    img = rng.uniform(2.5, 4.5, (12, 12))
    V = solve_fine(ConductivityField(GridSpec(12), img)).voltages
    # rotating the image a quarter turn counter-clockwise moves electrode k to k + 4
    W = solve_fine(ConductivityField(GridSpec(12), np.rot90(img))).voltages
    np.testing.assert_allclose(np.roll(np.roll(V, 4, axis=0), 4, axis=1), W, atol=1e-10)


@given(arrays(float, 36, elements=st.floats(0.2, 20)))
def test_rows_sum_to_zero(v):
    V = FineModel(GridSpec(6))(v).reshape(16, 16)
    assert np.all(np.abs(V.sum(axis=1)) <= 1e-9 * np.abs(V).max(axis=1))


@given(arrays(float, 36, elements=st.floats(0.2, 20)))
def test_transfer_matrix_symmetric_and_consistent(v):
    f = ConductivityField(GridSpec(6), v)
    T = transfer_matrix(f)
    scale = np.abs(T).max()
    assert np.max(np.abs(T - T.T)) <= 1e-10 * scale
    V = solve_fine(f).voltages
    np.testing.assert_allclose(V, drive_matrix() @ T.T, rtol=0, atol=1e-10 * scale)


def test_transfer_matrix_constant_field():
    T = transfer_matrix(ConductivityField.constant(12, 3.0))
    assert np.max(np.abs(T - T.T)) < 1e-10


def test_approx_converges_and_is_monotone():
    x = truth_image(12).values
    fine = FineModel(GridSpec(12))(x)
    errs = [np.linalg.norm(ApproxModel(GridSpec(12), k)(x) - fine) for k in range(1, 25)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    big = ApproxModel(GridSpec(12), 10 * 144)(x)
    assert np.max(np.abs(big - fine)) < 1e-8 * np.max(np.abs(fine))


def test_approx_iterations_validated():
    with pytest.raises(ValueError):
        ApproxModel(GridSpec(6), 0)


def test_coarse_pipeline_constant_field():
    f = ConductivityField.constant(24, 3.0)
    c = solve_coarse(f, GridSpec(8)).voltages
    np.testing.assert_array_equal(c, solve_fine(ConductivityField.constant(8, 3.0)).voltages)
    assert np.max(np.abs(c - solve_fine(f).voltages)) > 1e-3


def test_coarse_error_peaks_at_injector():
    t = truth_image(24)
    R = solve_fine(t).voltages - solve_coarse(t, GridSpec(8)).voltages
    hits = np.sum(np.abs(R).argmax(axis=1) == np.arange(16))
    assert hits >= 12


def test_coarse_model_matches_explicit_coarsening(rng):
    from eitmcmc.field_grid import coarsen_values
    v = rng.uniform(2.5, 4.5, 144)
    for mean in ("arithmetic", "harmonic"):
        got = CoarseModel(GridSpec(12), GridSpec(4), mean)(v)
        ref = FineModel(GridSpec(4))(coarsen_values(v, 12, 4, mean))
        np.testing.assert_allclose(got, ref, atol=1e-13)


def test_self_convergence_constant_field():
    eta = {s: FineModel(GridSpec(s))(np.full(s * s, 3.0)) for s in (12, 24, 48)}
    assert np.linalg.norm(eta[24] - eta[48]) < np.linalg.norm(eta[12] - eta[24])


def test_deterministic(rng):
    v = rng.uniform(2.5, 4.5, 576)
    for model in (FineModel(GridSpec(24)), ApproxModel(GridSpec(24), 20), CoarseModel(GridSpec(24), GridSpec(8))):
        assert model(v.copy()).tobytes() == model(v.copy()).tobytes()


def test_call_counters():
    m = FineModel(GridSpec(6))
    for _ in range(3):
        m(np.full(36, 3.0))
    assert m.calls == 3


def test_coarse_solve_is_cheap():
    g = GridSpec(24)
    fine, coarse = FineModel(g), CoarseModel(g, GridSpec(8))
    x = truth_image(24).values
    fine(x)
    coarse(x)

    def per_call(f, n):
        t = time.perf_counter()
        for _ in range(n):
            f(x)
        return (time.perf_counter() - t) / n

    # interleaved rounds so a slow patch of the machine hits both models
    rounds = [(per_call(fine, 5), per_call(coarse, 100)) for _ in range(15)]
    t_fine, t_coarse = (min(r[i] for r in rounds) for i in (0, 1))
    assert t_coarse <= t_fine / 20


def test_voltage_csv_round_trip(tmp_path, rng):
    vs = VoltageSet(rng.standard_normal((16, 16)))
    save_voltages(vs, tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == ",".join(str(k) for k in range(16)) and len(lines) == 17
    np.testing.assert_array_equal(load_voltages(tmp_path / "v.csv").voltages, vs.voltages)


def test_voltage_csv_errors(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("0,1\n1,2\n")
    with pytest.raises(ValueError, match="expected header"):
        load_voltages(p)
