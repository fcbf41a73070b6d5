import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import bisect_minimal_D, charpoly_eigenvalues, cvxpy_feasible, cvxpy_min_kc

from satroa.design import PlantFD
from satroa.linalg import JacobiNotConverged, NotPositiveDefinite, cholesky, schur_psd, sym_eig
from satroa.lmi import (
    InfeasibleWithinBudget,
    LmiError,
    augmented_matrices,
    m1_block,
    m2_block,
    minimal_D,
    solve_prop5,
    solve_prop6,
    solve_prop7,
    verify_certificate,
)

LEVEL = 2.0


# -- dense linear algebra -----------------------------------------------------


def test_sym_eig_examples():
    w, _ = sym_eig(np.eye(3))
    np.testing.assert_array_equal(w, 1.0)
    w, v = sym_eig(np.diag([3.0, -1.0]))
    np.testing.assert_array_equal(w, [-1.0, 3.0])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_sym_eig_reconstructs_and_matches_polynomial_roots(n, seed, scale):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n)) * scale
    M = 0.5 * (G + G.T)
    w, V = sym_eig(M)
    norm = np.linalg.norm(M)
    assert np.linalg.norm(M - V @ np.diag(w) @ V.T) <= 1e-9 * norm
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
    if n <= 5:
        np.testing.assert_allclose(w, charpoly_eigenvalues(M), atol=1e-8 * max(1.0, norm))


def test_sym_eig_handles_widely_separated_scales():
    M = np.array([[1e12, 1e-3], [1e-3, 1e-12]])
    w, V = sym_eig(M)
    assert np.linalg.norm(M - V @ np.diag(w) @ V.T) <= 1e-9 * np.linalg.norm(M)


def test_sym_eig_budget():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(6, 6))
    with pytest.raises(JacobiNotConverged):
        sym_eig(G + G.T, max_sweeps=1)


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky(np.eye(2)), np.eye(2))
    np.testing.assert_array_equal(cholesky(np.array([[4.0]])), [[2.0]])
    with pytest.raises(NotPositiveDefinite) as exc:
        cholesky(np.diag([1.0, -1.0]))
    assert exc.value.pivot == 2


@settings(max_examples=200)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_cholesky_reconstructs(n, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n))
    M = G @ G.T + 0.1 * np.eye(n)
    L = cholesky(M)
    assert np.linalg.norm(L @ L.T - M) <= 1e-10 * np.linalg.norm(M)


def test_schur_examples():
    assert schur_psd(np.eye(2), np.zeros((2, 2)), np.eye(2))
    assert not schur_psd(np.zeros((2, 2)), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        schur_psd(np.eye(1), np.zeros((1, 1)), -np.eye(1))


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_schur_decision_agrees_with_full_block(n, m, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(m, m))
    C = G @ G.T + 0.1 * np.eye(m)
    B = rng.normal(size=(m, n))
    A = rng.normal(size=(n, n))
    A = 0.5 * (A + A.T) + rng.uniform(-2, 6) * np.eye(n)
    full = np.linalg.eigvalsh(np.block([[A, B.T], [B, C]]))[0]
    if abs(full) > 1e-8:
        assert schur_psd(A, B, C) == (full >= 0)


# -- minimal scaling ----------------------------------------------------------


def test_minimal_D_examples(closed_loops, published_triples):
    K = np.array([[1.0, 2.0]])
    assert minimal_D(np.eye(2), K, K, LEVEL) == (0.0, True)
    D, glob = minimal_D(np.eye(2), np.array([[3.0, 0.0]]), np.zeros((1, 2)), LEVEL)
    assert D == pytest.approx(9.0 / 4.0) and not glob
    d = published_triples["41"]
    D, _ = minimal_D(np.array(d["P"]), np.array(d["K"]), np.array(d["C"]), LEVEL)
    assert D == pytest.approx(7.359375, rel=0.02)


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0.1, 5))
def test_minimal_D_matches_bisection(n, seed, level):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n))
    Pt = G @ G.T + 0.2 * np.eye(n)
    K, C = rng.normal(size=(1, n)), rng.normal(size=(1, n))
    D, _ = minimal_D(Pt, K, C, level)
    assert D == pytest.approx(bisect_minimal_D(Pt, K, C, level), rel=1e-8)
    KC = K - C
    block = lambda a: np.block([[a * Pt, KC.T], [KC, level**2 * np.eye(1)]])  # noqa: E731
    assert np.linalg.eigvalsh(block(D + 1e-6))[0] > 0
    assert np.linalg.eigvalsh(block(D - 1e-6))[0] < 0


# -- solvers ------------------------------------------------------------------


@pytest.mark.parametrize("key", ["41", "42"])
def test_scalar_form_matches_conic_solver(closed_loops, key):
    p = closed_loops[key]
    sol = solve_prop6(p.A, p.B, p.K, LEVEL)
    assert sol.residuals["M1_tilde"] <= -sol.margin * (1 - 1e-6)
    assert verify_certificate(sol.P, sol.C, sol.D, p, LEVEL).passed
    status, value, _, _ = cvxpy_min_kc(p.A, p.B, p.K, sol.margin)
    assert status == "optimal"
    assert sol.objective_value == pytest.approx(value, rel=1e-6)


def test_scalar_form_hand_example():
    A, B, K = np.array([[-1.0]]), np.array([[1.0]]), np.array([[0.0]])
    sol = solve_prop6(A, B, K, 1.0, objective="feasibility")
    p = sol.P.item()
    c = sol.C.item()
    M = np.array([[-2 * p, p - c], [p - c, -2.0]])
    assert np.linalg.eigvalsh(M)[-1] < 0
    assert np.linalg.eigvalsh(np.array([[-2.0, 1.0], [1.0, -2.0]]))[-1] < 0  # p = 1, C = 0 by hand
    assert cvxpy_feasible(A, B, K, sol.margin) == "optimal"


def test_scalar_form_requires_single_input():
    with pytest.raises(LmiError):
        solve_prop6(-np.eye(2), np.eye(2), np.zeros((2, 2)), 1.0)


def test_scalar_form_requires_hurwitz_closed_loop(heat_plant):
    with pytest.raises(LmiError):
        solve_prop6(heat_plant.A, heat_plant.B, np.zeros((1, 2)), LEVEL)


def test_linearized_form_round_trip(closed_loops):
    p = closed_loops["41"]
    sol = solve_prop5(p.A, p.B, p.K, LEVEL)
    lam1 = np.linalg.eigvalsh(m1_block(p.A, p.B, p.K, sol.P, sol.C, sol.D))[-1]
    lam2 = np.linalg.eigvalsh(m2_block(sol.P, p.K, sol.C, LEVEL))[0]
    assert lam1 < 0 and lam2 >= -1e-9
    assert verify_certificate(sol.P, sol.C, sol.D, p, LEVEL, form="prop3").passed


def test_linearized_form_maps_back_from_congruence(closed_loops):
    p = closed_loops["41"]
    sol = solve_prop5(p.A, p.B, p.K, LEVEL)
    np.testing.assert_allclose(sol.P @ sol.S, np.eye(2), atol=1e-8)
    np.testing.assert_allclose(sol.C, (np.linalg.solve(sol.S, sol.Y)).T, atol=1e-8)


def test_global_certificate_for_stable_plant():
    A, B, K = -np.eye(2), np.eye(2), np.zeros((2, 2))
    sol = solve_prop5(A, B, K, 1.0, objective="feasibility", fix_sector=True)
    np.testing.assert_array_equal(sol.C, K)
    assert verify_certificate(sol.P, sol.C, sol.D, PlantFD(A, B, K), 1.0, form="prop3").passed


def test_budget_exhaustion_is_reported(closed_loops):
    p = closed_loops["41"]
    with pytest.raises(InfeasibleWithinBudget):
        solve_prop6(p.A, p.B, p.K, LEVEL, budget=3)


def test_verification_names_failing_block(closed_loops, published_triples):
    d = published_triples["41"]
    p = closed_loops["41"]
    Pt = np.array(d["P"])
    flipped = verify_certificate(Pt, -np.array(d["C"]), d["D"], p, LEVEL)
    assert not flipped.passed and "M1_tilde" in flipped.failed_blocks
    bumped = Pt.copy()
    bumped[0, 0] += 10
    rep = verify_certificate(bumped, np.array(d["C"]), d["D"], p, LEVEL)
    assert not rep.passed and "M1_tilde" in rep.failed_blocks


def test_published_triples_fail_only_by_rounding(closed_loops, published_triples):
    """Published 7-digit values sit within 2e-7 of the strict decay bound; the sector block holds."""
    for key, d in published_triples.items():
        rep = verify_certificate(np.array(d["P"]), np.array(d["C"]), d["D"], closed_loops[key], LEVEL)
        assert rep.blocks["M2_tilde"][2] and rep.blocks["P_tilde"][2]
        assert 0 < rep.blocks["M1_tilde"][1] < 2e-7


def test_dynamic_form_respects_reference(closed_loops, certificates):
    p = closed_loops["41"]
    ref = certificates["41"].P
    A1, A2, K2 = -np.eye(1), np.array([[1.0, 0.0]]), np.zeros((1, 1))
    sol = solve_prop7(p.A, p.B, A1, A2, p.K, K2, ref, LEVEL)
    Aa, Ba, Ka = augmented_matrices(p.A, p.B, A1, A2, p.K, K2)
    rep = verify_certificate(sol.P, sol.C, sol.D, PlantFD(Aa, Ba, Ka), LEVEL, form="prop3", reference=ref)
    assert rep.passed
