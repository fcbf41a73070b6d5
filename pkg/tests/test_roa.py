import math
from dataclasses import replace

import numpy as np
import pytest

from satroa.design import PlantFD, place_poles
from satroa.lmi import InfeasibleWithinBudget, LmiError, verify_certificate
from satroa.roa import (
    Certificate,
    PreconditionError,
    build_boundary,
    certify_boundary,
    certify_dynamic,
    certify_pointwise,
    certify_static,
    ellipsoid_boundary_samples,
    ellipsoid_contains,
    ellipsoid_volume,
    pointwise_level,
    projection_shape,
    support,
    tail_weight,
)
from satroa.saturation import deadzone
from satroa.spectral import ModeShape, OperatorSpec, sample_inputs

LEVEL = 2.0


def toy_spec(c=5.0):
    return OperatorSpec(length=2.0, reaction=c, inputs=(ModeShape.parse("e1"),), sat_level=1.0)


@pytest.mark.parametrize("key", ["41", "42"])
def test_static_certificate_structure(certificates, closed_loops, key):
    cert = certificates[key]
    assert cert.kind == "static" and cert.rho == 1.0 and cert.alpha > 0
    np.testing.assert_allclose(cert.P, cert.D[0] * cert.P_tilde)
    rep = verify_certificate(cert.P_tilde, cert.C, cert.D, closed_loops[key], LEVEL)
    assert rep.passed
    assert cert.metadata["level_enlargement"] == "none"


def test_second_design_has_larger_region(certificates):
    a41 = math.pi / math.sqrt(np.linalg.det(certificates["41"].P))
    a42 = math.pi / math.sqrt(np.linalg.det(certificates["42"].P))
    assert a42 > a41
    assert certificates["42"].volume() == pytest.approx(a42)


def test_stable_plant_gets_global_certificate():
    plant = PlantFD(np.diag([-1.0, -2.0]), np.ones((2, 1)), np.zeros((1, 2)))
    cert = certify_static(plant, 1.0)
    assert cert.is_global and cert.metadata["global"]
    np.testing.assert_array_equal(cert.C, cert.K)


@pytest.mark.parametrize("key", ["41", "42"])
def test_lyapunov_derivative_on_boundary(certificates, closed_loops, key):
    cert, plant = certificates[key], closed_loops[key]
    A, B, K, P = plant.A, plant.B, plant.K, cert.P
    Acl = A + B @ K
    Z = ellipsoid_boundary_samples(P, cert.rho, 1000)
    for z in Z:
        phi = deadzone(K @ z, LEVEL)
        vdot = z @ (Acl.T @ P + P @ Acl) @ z + 2 * z @ P @ B @ phi
        assert vdot <= -cert.alpha * z @ z + 1e-9


@pytest.mark.parametrize("key", ["41", "42"])
def test_sector_hypothesis_on_region(certificates, key):
    cert = certificates[key]
    Z = ellipsoid_boundary_samples(cert.P, cert.rho, 1000)
    assert np.all(np.abs(Z @ (cert.K - cert.C).T) <= LEVEL * (1 + 1e-9))


def test_dynamic_without_controller_states_is_static(closed_loops, certificates):
    dyn = certify_dynamic(closed_loops["41"], LEVEL, nc=0)
    static = certificates["41"]
    assert dyn.kind == "dynamic"
    np.testing.assert_array_equal(dyn.P, static.P)


def test_dynamic_projection_contains_static_region(closed_loops, certificates):
    static = certificates["41"]
    dyn = certify_dynamic(closed_loops["41"], LEVEL, A1=[[-1.0]], A2=[[1.0, 0.0]], K2=[[0.0]],
                          reference=static.P)
    Pz, rho = dyn.plant_ellipsoid()
    assert np.linalg.eigvalsh(dyn.P[:2, :2] - static.P)[-1] <= 1e-6
    assert ellipsoid_volume(Pz, rho) >= static.volume() * (1 - 1e-9)
    for z in ellipsoid_boundary_samples(static.P, 1.0, 1000):
        assert z @ Pz @ z <= rho * (1 + 1e-7)


def test_dynamic_with_unreachable_reference(closed_loops, certificates):
    with pytest.raises((InfeasibleWithinBudget, LmiError)):
        certify_dynamic(closed_loops["41"], LEVEL, A1=[[-1.0]], A2=[[1.0, 0.0]], K2=[[0.0]],
                        reference=1e-6 * certificates["41"].P, budget=400)


def test_dynamic_dimension_mismatch(closed_loops):
    with pytest.raises(PreconditionError):
        certify_dynamic(closed_loops["41"], LEVEL, A1=[[-1.0]], A2=[[1.0, 0.0, 0.0]])


def test_pointwise_level_formula(certificates, heat_modal, heat_spec):
    static = certificates["41"]
    shapes = sample_inputs(heat_modal, heat_spec)
    pw = certify_pointwise(static, shapes)
    bmax = np.max(np.abs(shapes))
    K = static.K[0]
    expected = LEVEL**2 / (max(1.0, bmax) ** 2 * (K @ np.linalg.solve(static.P, K)))
    assert pw.beta == pytest.approx(min(expected, 1.0))
    assert pw.metadata["sup_norm_source"].startswith("max over grid")
    Z = ellipsoid_boundary_samples(pw.P, pw.rho, 10_000)
    assert np.all(np.abs(Z @ K) * max(1.0, bmax) <= LEVEL * (1 + 1e-9))


def test_pointwise_small_shapes_only_shrink_by_slab(certificates):
    static = certificates["41"]
    shapes = 0.5 * np.ones((1, 11))
    pw = certify_pointwise(static, shapes)
    assert pw.beta == pytest.approx(min(1.0, pointwise_level(static.P, static.K, [1.0], LEVEL)))


def test_pointwise_zero_gain_is_unbounded(certificates):
    static = replace(certificates["41"], K=np.zeros((1, 2)))
    pw = certify_pointwise(static, np.ones((1, 5)))
    assert pw.metadata["beta_unbounded"] is False or pw.beta == 1.0
    assert math.isinf(pointwise_level(static.P, static.K, [1.0], LEVEL))


def test_pointwise_rejects_unbounded_shapes(certificates):
    with pytest.raises(PreconditionError):
        certify_pointwise(certificates["41"], np.array([[1.0, np.inf]]))


def test_boundary_plant_structure():
    bp = build_boundary(-1.0, 1.0, 1.0, toy_spec(), N=50)
    assert bp.A.shape == (2, 2) and bp.A[0, 1] == 0.0
    np.testing.assert_allclose(bp.A, [[-1.0, 0.0], [3.8197186, 2.5325989]], atol=1e-6)
    np.testing.assert_allclose(bp.B.ravel(), [1.0, -2 / np.pi], atol=1e-6)


def test_boundary_without_output_decouples():
    bp = build_boundary(-1.0, 1.0, 0.0, toy_spec(), N=20)
    assert not np.any(bp.d_samples) and not np.any(bp.b_samples)
    assert not np.any(bp.A[1:, :1]) and not np.any(bp.B[1:])


def test_boundary_input_coefficients_match_closed_form():
    L = 2.0
    bp = build_boundary(0.0, 1.0, 1.0, toy_spec(c=0.0), n=0, N=10)
    assert not np.any(bp.d_samples)
    j = np.arange(1, 11)
    expected = -np.sqrt(2 * L) * (-1.0) ** (j + 1) / (j * np.pi)
    np.testing.assert_allclose(bp.b_coeffs, expected, atol=1e-8)


def test_boundary_certificate():
    bp = build_boundary(-1.0, 1.0, 1.0, toy_spec(), N=50)
    K = place_poles(bp.plant(), [-1.0, -2.0])
    cert = certify_boundary(bp, K, 1.0)
    assert cert.kind == "boundary" and cert.metadata["state_order"] == ["xd1", "w1"]
    assert verify_certificate(cert.P_tilde, cert.C, cert.D, bp.plant(K), 1.0).passed
    with pytest.raises(PreconditionError):
        certify_boundary(bp, np.zeros((1, 2)), 1.0)


def test_ellipsoid_helpers():
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert ellipsoid_contains(P, 1.0, np.zeros(2))
    Z = ellipsoid_boundary_samples(P, 1.0, 100)
    np.testing.assert_allclose(np.einsum("ij,jk,ik->i", Z, P, Z), 1.0, atol=1e-10)
    assert not ellipsoid_contains(P, 1.0, 2 * Z[0])
    assert support(P, 1.0, [1.0, 0.0]) == pytest.approx(np.max(Z[:, 0]), rel=1e-3)
    Z3 = ellipsoid_boundary_samples(np.diag([1.0, 2.0, 3.0]), 2.0, 50, np.random.default_rng(1))
    np.testing.assert_allclose(np.einsum("ij,j,ij->i", Z3, [1.0, 2.0, 3.0], Z3), 2.0, atol=1e-10)
    assert ellipsoid_volume(np.eye(3), 1.0) == pytest.approx(4 / 3 * np.pi)
    Q = np.array([[2.0, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(projection_shape(Q, 1), [[1.0]])


def test_tail_weight_is_capped():
    assert tail_weight(0.5, 10.0, np.zeros((3, 1)), np.ones((1, 2))) == 1.0
    assert tail_weight(0.5, 10.0, 1e-13 * np.ones((3, 1)), np.ones((1, 2))) == 1.0
    g = tail_weight(0.5, 1.0, np.ones((3, 1)), np.ones((1, 2)))
    s = np.sqrt(3) * np.sqrt(2)
    assert g == pytest.approx(0.5 * (1.0 / (2 * s)) / (2 * s))


def test_certificate_round_trip(tmp_path, certificates):
    cert = certificates["41"]
    cert.save(tmp_path / "c.json")
    back = Certificate.load(tmp_path / "c.json")
    np.testing.assert_array_equal(back.P, cert.P)
    np.testing.assert_array_equal(back.C, cert.C)
    assert back.alpha == cert.alpha and back.gamma == cert.gamma
    with pytest.raises(ValueError):
        Certificate.from_dict({"kind": "static"})
