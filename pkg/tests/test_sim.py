import numpy as np
import pytest

from satroa.design import PlantFD
from satroa.roa import certify_static, ellipsoid_boundary_samples
from satroa.sim import (
    Classification,
    FitUndefined,
    decay_fit,
    field_samples,
    lyapunov_V,
    simulate_galerkin,
    simulate_modal,
    simulate_pointwise,
    sweep,
    write_field_csv,
)
from satroa.spectral import sample_inputs

LEVEL = 2.0


def test_origin_is_an_equilibrium(closed_loops, certificates):
    traj = simulate_modal(closed_loops["41"], [0.0, 0.0], 5.0, certificate=certificates["41"])
    assert not np.any(traj.states)
    assert traj.classification is Classification.CONVERGED


def test_boundary_points_converge_and_far_point_diverges(closed_loops, certificates):
    cert, plant = certificates["41"], closed_loops["41"]
    for z in ellipsoid_boundary_samples(cert.P, cert.rho, 8):
        assert simulate_modal(plant, z, 10.0, certificate=cert).classification is Classification.CONVERGED
    assert simulate_modal(plant, [10.0, 0.0], 10.0, certificate=cert).classification is Classification.DIVERGED


def test_tail_decays_at_least_at_its_rate(heat_modal, closed_loops):
    K = closed_loops["41"].K
    w0 = np.zeros(8)
    w0[2:] = 1.0
    traj = simulate_galerkin(heat_modal, K, w0, 2.0, level=LEVEL)
    eta = -heat_modal.eigvals[2]
    norms = np.linalg.norm(traj.tail, axis=1)
    assert np.all(norms <= np.exp(-eta * traj.times) * norms[0] * (1 + 1e-9))
    assert not np.any(traj.z)


def test_galerkin_without_tail_equals_modal_run(heat_modal, closed_loops):
    plant = closed_loops["41"]
    z0 = [0.3, -0.2]
    a = simulate_galerkin(heat_modal, plant.K, z0, 3.0, N=2, level=LEVEL)
    b = simulate_modal(plant, z0, 3.0, level=LEVEL)
    np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-12)


def test_decay_fit_on_single_stable_mode(heat_modal, closed_loops):
    w0 = np.zeros(3)
    w0[2] = 1.0
    traj = simulate_galerkin(heat_modal, closed_loops["41"].K, w0, 1.0, level=LEVEL)
    M, a = decay_fit(traj)
    assert a == pytest.approx(-heat_modal.eigvals[2], rel=0.01)
    assert M >= 1.0


@pytest.mark.parametrize("key, upper, T", [("41", 1.1, 10.0), ("42", 0.25, 60.0)])
def test_decay_rate_bounded_by_design(closed_loops, certificates, key, upper, T):
    cert = certificates[key]
    z0 = 0.5 * ellipsoid_boundary_samples(cert.P, cert.rho, 4)[1]
    traj = simulate_modal(closed_loops[key], z0, T, certificate=cert)
    _, a = traj.decay_fit()
    assert 0 < a <= upper


def test_decay_fit_needs_convergence(closed_loops, certificates):
    traj = simulate_modal(closed_loops["41"], [10.0, 0.0], 10.0, certificate=certificates["41"])
    with pytest.raises(FitUndefined):
        decay_fit(traj)


def test_rk4_is_fourth_order(closed_loops):
    # Small state keeps the input unsaturated, so the right-hand side is smooth.
    plant = closed_loops["41"]
    z0 = [0.05, -0.05]
    ref = simulate_modal(plant, z0, 2.0, dt=2.0 / 1600, level=LEVEL).states[-1]
    e1 = np.linalg.norm(simulate_modal(plant, z0, 2.0, dt=0.1, level=LEVEL).states[-1] - ref)
    e2 = np.linalg.norm(simulate_modal(plant, z0, 2.0, dt=0.05, level=LEVEL).states[-1] - ref)
    assert 13 < e1 / e2 < 19


def test_sweep_is_independent_of_thread_count(closed_loops, certificates):
    kw = dict(resolution=7, T=5.0, level=LEVEL)
    one = sweep(closed_loops["41"], certificates["41"], threads=1, **kw)
    four = sweep(closed_loops["41"], certificates["41"], threads=4, **kw)
    assert one.labels == four.labels
    for p, q in zip(one.paths, four.paths):
        np.testing.assert_array_equal(p, q)


def test_stable_plant_sweep_converges_everywhere():
    plant = PlantFD(np.diag([-1.0, -2.0]), np.ones((2, 1)), np.zeros((1, 2)))
    cert = certify_static(plant, 1.0)
    res = sweep(plant, cert, bounds=((-5, 5), (-5, 5)), resolution=5, T=10.0)
    assert res.counts()["converged"] == 25


def test_lyapunov_value():
    from satroa.roa import Certificate

    cert = Certificate(kind="static", P=np.diag([2.0, 1.0]), rho=1.0, K=np.zeros((1, 2)), C=np.zeros((1, 2)),
                       D=np.ones(1), alpha=0.1, level=1.0, gamma=0.5)
    assert lyapunov_V([0.0, 0.0], cert) == 0.0
    assert lyapunov_V([1.0, 1.0], cert) == pytest.approx(3.0)
    assert lyapunov_V([1.0, 1.0, 2.0], cert) == pytest.approx(5.0)
    np.testing.assert_allclose(lyapunov_V(np.ones((3, 2)), cert), 3.0)


def test_csv_headers(tmp_path, heat_modal, closed_loops, certificates):
    traj = simulate_galerkin(heat_modal, closed_loops["41"].K, [0.1, 0.1], 1.0, N=4, certificate=certificates["41"])
    traj.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,w1,w2,w3,w4,V"
    res = sweep(closed_loops["41"], certificates["41"], resolution=3, T=1.0)
    res.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "z1,z2,label" and len(lines) == 10
    write_field_csv(tmp_path / "f.csv", traj.times, heat_modal.grid[::100], field_samples(heat_modal, traj)[:, ::100])
    assert (tmp_path / "f.csv").read_text().startswith("t,x,w\n")


def test_pointwise_run_from_origin_stays_put(heat_modal, heat_spec, closed_loops):
    shapes = sample_inputs(heat_modal, heat_spec)
    K = closed_loops["41"].K
    a = simulate_pointwise(heat_modal, K, shapes, [0.0, 0.0], 1.0, level=LEVEL)
    b = simulate_galerkin(heat_modal, K, [0.0, 0.0], 1.0, level=LEVEL)
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.any(a.states)


def test_pointwise_matches_galerkin_without_clipping(heat_modal, heat_spec, closed_loops):
    shapes = sample_inputs(heat_modal, heat_spec)
    K = closed_loops["41"].K
    w0 = [0.01, -0.01]
    a = simulate_pointwise(heat_modal, K, shapes, w0, 1.0, level=LEVEL)
    b = simulate_galerkin(heat_modal, K, w0, 1.0, level=LEVEL)
    np.testing.assert_allclose(a.states, b.states, atol=1e-6)
