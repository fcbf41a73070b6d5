"""Time simulation of the saturated closed loop and the grid sweeps behind the region plots.

All integrators advance the retained coordinates ``z`` with classic RK4 and
the tail modes with the integrating-factor (Lawson) form of RK4. The tail is
linear in itself and only driven by ``z``, so the exponential factor makes the
step exact for the free decay and keeps modes with ``lam_j h << -1`` stable at
the step sizes the ``z`` dynamics need. Because the tail never feeds back,
the ``z`` part is computed by exactly the same floating-point operations
whether or not a tail is attached.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .design import PlantFD
from .roa import BoundaryPlant, Certificate
from .spectral import ModalSystem, grid_weights

TOL_CONVERGED = 1e-6
DIVERGENCE_FACTOR = 100.0
OVERFLOW = 1e12
SUBSTEPS = 10
STEPS_DEFAULT = 1000


class Classification(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    UNDECIDED = "undecided"


class FitUndefined(ValueError):
    pass


class SoundnessViolation(AssertionError):
    pass


def _mv(z: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-batched ``z @ M.T`` as an explicit column sum.

    Used instead of a BLAS call so each row's result does not depend on the
    batch size (and hence on how a sweep is split across threads).
    """
    out = np.zeros((z.shape[0], M.shape[0]))
    for k in range(M.shape[1]):
        out += z[:, k : k + 1] * M[:, k]
    return out


@dataclass
class _Cascade:
    """``z' = A z + f_z(u)``, ``w' = lam w + G z + f_w(u)``, with ``u = K z``."""

    A: np.ndarray
    K: np.ndarray
    level: float
    B: np.ndarray
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    G: np.ndarray | None = None
    Bt: np.ndarray | None = None
    forcing: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray | None]] | None = None
    thresholds: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def nt(self) -> int:
        return len(self.lam)

    def inputs(self, z):
        return _mv(z, self.K)

    def force(self, u):
        if self.forcing is not None:
            return self.forcing(u)
        s = np.clip(u, -self.level, self.level)
        return _mv(s, self.B), (_mv(s, self.Bt) if self.nt else None)

    def _g(self, z, ft):
        g = ft if ft is not None else np.zeros((z.shape[0], self.nt))
        if self.G is not None:
            g = g + _mv(z, self.G)
        return g

    def step(self, z, w, h):
        fz1, ft1 = self.force(self.inputs(z))
        k1 = _mv(z, self.A) + fz1
        z2 = z + 0.5 * h * k1
        fz2, ft2 = self.force(self.inputs(z2))
        k2 = _mv(z2, self.A) + fz2
        z3 = z + 0.5 * h * k2
        fz3, ft3 = self.force(self.inputs(z3))
        k3 = _mv(z3, self.A) + fz3
        z4 = z + h * k3
        fz4, ft4 = self.force(self.inputs(z4))
        k4 = _mv(z4, self.A) + fz4
        z_new = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not self.nt:
            return z_new, w
        E = np.exp(self.lam * h)
        Eh = np.exp(self.lam * (0.5 * h))
        g1, g2, g3, g4 = self._g(z, ft1), self._g(z2, ft2), self._g(z3, ft3), self._g(z4, ft4)
        w_new = E * w + (h / 6.0) * (E * g1 + 2.0 * Eh * (g2 + g3) + g4)
        return z_new, w_new

    def regime(self, z):
        u = np.abs(self.inputs(z))
        thr = self.level if self.thresholds is None else self.thresholds
        return u > thr


def _run(sys: _Cascade, z0: np.ndarray, w0: np.ndarray, T: float, dt: float):
    """Integrate a batch; returns times, z path, w path, stop index per row and refined-step mask."""
    if not dt > 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    steps = int(round(T / dt))
    h = T / steps
    batch = z0.shape[0]
    times = h * np.arange(steps + 1)
    Z = np.full((steps + 1, batch, sys.n), np.nan)
    W = np.full((steps + 1, batch, sys.nt), np.nan)
    Z[0], W[0] = z0, w0
    limit = np.minimum(DIVERGENCE_FACTOR * (1.0 + np.linalg.norm(z0, axis=1)), OVERFLOW)
    stop = np.full(batch, steps, dtype=int)
    diverged = np.zeros(batch, dtype=bool)
    refined = np.zeros((steps, batch), dtype=bool)
    active = np.arange(batch)
    z, w = z0.copy(), w0.copy()
    for i in range(steps):
        za, wa = z[active], w[active]
        zn, wn = sys.step(za, wa, h)
        cross = np.any(sys.regime(za) != sys.regime(zn), axis=1)
        if np.any(cross):
            zs, ws = za[cross], wa[cross]
            for _ in range(SUBSTEPS):
                zs, ws = sys.step(zs, ws, h / SUBSTEPS)
            zn[cross], wn[cross] = zs, ws
            refined[i, active[cross]] = True
        z[active], w[active] = zn, wn
        Z[i + 1, active], W[i + 1, active] = zn, wn
        nrm = np.linalg.norm(zn, axis=1)
        bad = ~np.isfinite(nrm) | (nrm > limit[active])
        if np.any(bad):
            gone = active[bad]
            diverged[gone] = True
            stop[gone] = i + 1
            active = active[~bad]
            if active.size == 0:
                break
    return times, Z, W, stop, diverged, refined


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    n: int
    classification: Classification
    lyapunov: np.ndarray | None = None
    labels: tuple[str, ...] = ()
    refined: np.ndarray | None = None

    @property
    def z(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def tail(self) -> np.ndarray:
        return self.states[:, self.n :]

    def decay_fit(self, part: str = "full") -> tuple[float, float]:
        return decay_fit(self, part)

    def to_csv(self, path: str | Path) -> None:
        labels = self.labels or tuple(f"w{j + 1}" for j in range(self.states.shape[1]))
        V = self.lyapunov if self.lyapunov is not None else np.full(len(self.times), np.nan)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(("t",) + tuple(labels) + ("V",)) + "\n")
            for t, row, v in zip(self.times, self.states, V):
                fh.write(",".join(f"{x:.17g}" for x in (t, *row, v)) + "\n")


def _classify(z_end: np.ndarray, z0: np.ndarray, diverged: bool, cert: Certificate | None, tol: float):
    if diverged:
        return Classification.DIVERGED
    r = float(np.linalg.norm(z_end))
    if r < tol * max(1.0, float(np.linalg.norm(z0))):
        return Classification.CONVERGED
    if cert is not None and cert.P.shape[0] == len(z_end) and not cert.is_global:
        # Entering the certified ellipsoid proves convergence from then on.
        if z_end @ cert.P @ z_end < cert.rho:
            return Classification.CONVERGED
    if cert is not None and cert.is_global:
        return Classification.CONVERGED
    return Classification.UNDECIDED


def lyapunov_V(state, cert: Certificate, gamma: float | None = None, n: int | None = None) -> float | np.ndarray:
    """``z^T P z + gamma * sum_{j>n} w_j^2`` for one state or a stack of states."""
    s = np.asarray(state, dtype=float)
    n = cert.P.shape[0] if n is None else n
    g = cert.gamma if gamma is None else gamma
    z, tail = s[..., :n], s[..., n:]
    V = np.einsum("...i,ij,...j->...", z, cert.P, z)
    if tail.shape[-1]:
        if g is None:
            raise ValueError("tail present but no tail weight given")
        V = V + g * np.sum(tail**2, axis=-1)
    return V


def _default_dt(T: float, dt: float | None) -> float:
    return T / STEPS_DEFAULT if dt is None else float(dt)


def _finish(sys, z0, w0, T, dt, cert, tol, labels, with_tail_V):
    times, Z, W, stop, div, refined = _run(sys, z0[None], w0[None], T, _default_dt(T, dt))
    k = stop[0]
    states = np.concatenate([Z[: k + 1, 0], W[: k + 1, 0]], axis=1)
    cls = _classify(states[-1, : sys.n], z0, bool(div[0]), cert, tol)
    V = None
    if cert is not None and cert.P.shape[0] == sys.n:
        if with_tail_V and sys.nt and cert.gamma is not None:
            V = lyapunov_V(states, cert, n=sys.n)
        else:
            V = lyapunov_V(states[:, : sys.n], cert)
    return Trajectory(times[: k + 1], states, sys.n, cls, V, labels, refined[:k, 0])


def simulate_modal(plant: PlantFD, z0, T: float, dt: float | None = None, *, certificate: Certificate | None = None,
                   level: float | None = None, tol_conv: float = TOL_CONVERGED) -> Trajectory:
    """Fixed-step RK4 for ``z' = A z + B sat(K z)``."""
    if plant.K is None:
        raise ValueError("plant has no gain")
    level = _level(level, certificate)
    z0 = np.asarray(z0, dtype=float).reshape(plant.n)
    sys = _Cascade(plant.A, plant.K, level, plant.B)
    return _finish(sys, z0, np.zeros(0), T, dt, certificate, tol_conv, plant.labels, False)


def _level(level, cert):
    if level is not None:
        return float(level)
    if cert is not None:
        return cert.level
    raise ValueError("saturation level required")


def _split_initial(w0, n: int, N: int):
    w0 = np.asarray(w0, dtype=float).ravel()
    if len(w0) < n:
        raise ValueError(f"initial state needs at least the {n} retained coordinates")
    if len(w0) > N:
        raise ValueError(f"initial state has {len(w0)} entries but only {N} modes are simulated")
    full = np.zeros(N)
    full[: len(w0)] = w0
    return full[:n], full[n:]


def _truncated(ms: ModalSystem, N: int | None) -> ModalSystem:
    return ms if N is None or N == ms.N else ms.truncate(N)


def simulate_galerkin(ms: ModalSystem, K, w0, T: float, dt: float | None = None, *, N: int | None = None,
                      level: float | None = None, certificate: Certificate | None = None,
                      tol_conv: float = TOL_CONVERGED) -> Trajectory:
    """All ``N`` modal equations ``w_j' = lam_j w_j + b_j . sat(K z)``; ``w0`` is zero-padded to ``N``."""
    ms = _truncated(ms, N)
    n = ms.n
    K = np.atleast_2d(np.asarray(K, dtype=float))
    z0, t0 = _split_initial(w0, n, ms.N)
    sys = _Cascade(ms.Amat, K, _level(level, certificate), ms.Bn, lam=np.asarray(ms.eigvals[n:]), Bt=ms.Btail)
    labels = tuple(f"w{j + 1}" for j in range(ms.N))
    return _finish(sys, z0, t0, T, dt, certificate, tol_conv, labels, True)


def pointwise_forcing(ms: ModalSystem, shapes, level: float, n: int):
    """Modal projection of ``sum_k sat_inf(b_k(x) u_k)`` as a batched map of ``u``."""
    shapes = np.atleast_2d(np.asarray(shapes, dtype=float))
    proj = (np.asarray(ms.eigfuncs) * grid_weights(ms.grid)).T  # (grid, N)

    def forcing(u):
        F = np.zeros((u.shape[0], proj.shape[1]))
        for k in range(shapes.shape[0]):
            F += np.clip(u[:, k : k + 1] * shapes[k], -level, level) @ proj
        return F[:, :n], F[:, n:]

    return forcing


def simulate_pointwise(ms: ModalSystem, K, shapes, w0, T: float, dt: float | None = None, *, N: int | None = None,
                       level: float | None = None, certificate: Certificate | None = None,
                       tol_conv: float = TOL_CONVERGED) -> Trajectory:
    """Modal system driven by the pointwise-clipped input field ``sat_inf(b_k(x) (K z)_k)``."""
    ms = _truncated(ms, N)
    n = ms.n
    level = _level(level, certificate)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    shapes = np.atleast_2d(np.asarray(shapes, dtype=float))
    if shapes.shape[1] != len(ms.grid):
        raise ValueError("input shapes must be sampled on the eigenfunction grid")
    z0, t0 = _split_initial(w0, n, ms.N)
    bmax = np.maximum(1.0, np.max(np.abs(shapes), axis=1))
    sys = _Cascade(ms.Amat, K, level, np.zeros((n, K.shape[0])), lam=np.asarray(ms.eigvals[n:]),
                   forcing=pointwise_forcing(ms, shapes, level, n), thresholds=level / bmax)
    labels = tuple(f"w{j + 1}" for j in range(ms.N))
    return _finish(sys, z0, t0, T, dt, certificate, tol_conv, labels, True)


def simulate_boundary(bp: BoundaryPlant, K, w0, T: float, dt: float | None = None, *, level: float,
                      certificate: Certificate | None = None, tol_conv: float = TOL_CONVERGED) -> Trajectory:
    """Shifted boundary-control system: ``z = (x_d, w_1..w_n)`` plus tail ``w_{n+1}..w_N``.

    ``w0`` lists ``x_d`` followed by the modal coefficients (zero-padded).
    """
    ms = bp.modal
    nz = bp.dim
    w0 = np.asarray(w0, dtype=float).ravel()
    full = np.zeros(bp.n_d + ms.N)
    full[: len(w0)] = w0
    z0, t0 = full[:nz], full[nz:]
    n = bp.n
    G = np.hstack([bp.d_coeffs[n:], np.zeros((ms.N - n, n))])
    sys = _Cascade(bp.A, np.atleast_2d(K), level, bp.B, lam=np.asarray(ms.eigvals[n:]), G=G,
                   Bt=bp.b_coeffs[n:, None])
    labels = tuple(f"xd{i + 1}" for i in range(bp.n_d)) + tuple(f"w{j + 1}" for j in range(ms.N))
    return _finish(sys, z0, t0, T, dt, certificate, tol_conv, labels, False)


def boundary_field(bp: BoundaryPlant, traj: Trajectory) -> np.ndarray:
    """Original boundary-driven state ``y(t, x) = w(t, x) + (x / L) C_d x_d(t)``, shape ``(times, grid)``."""
    nd = bp.n_d
    xd = traj.states[:, :nd]
    coeffs = traj.states[:, nd:]
    e = np.asarray(bp.modal.eigfuncs)[: coeffs.shape[1]]
    return coeffs @ e + xd @ bp.shift().T


def field_samples(ms: ModalSystem, traj: Trajectory) -> np.ndarray:
    """``w(t, x) = sum_j w_j(t) e_j(x)``, shape ``(times, grid)``."""
    c = traj.states
    return c @ np.asarray(ms.eigfuncs)[: c.shape[1]]


def write_field_csv(path: str | Path, times, x, values, every: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,x,w\n")
        for i in range(0, len(times), every):
            for xj, v in zip(x, values[i]):
                fh.write(f"{times[i]:.17g},{xj:.17g},{v:.17g}\n")


def decay_fit(traj: Trajectory, part: str = "full") -> tuple[float, float]:
    """Exponential envelope ``|w(t)| <= M exp(-a t) |w(0)|``.

    ``a`` is the negated least-squares slope of ``log |w(t)|`` over the last 80%
    of the horizon; ``M`` is then the smallest constant making the envelope
    hold at every sample.
    """
    if traj.classification is not Classification.CONVERGED:
        raise FitUndefined(f"decay fit needs a converged trajectory, got {traj.classification.value}")
    if len(traj.times) < 10:
        raise FitUndefined("decay fit needs at least 10 samples")
    X = traj.z if part == "z" else traj.states
    r = np.linalg.norm(X, axis=1)
    if not r[0] > 0:
        raise FitUndefined("zero initial state")
    t = traj.times
    sel = (t >= t[0] + 0.2 * (t[-1] - t[0])) & (r > 0)
    if np.count_nonzero(sel) < 2:
        raise FitUndefined("state vanished before the fitting window")
    slope = np.polyfit(t[sel], np.log(r[sel]), 1)[0]
    a = -float(slope)
    with np.errstate(over="ignore"):
        M = float(np.max(r * np.exp(a * t)) / r[0])
    return M, a


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    points: np.ndarray  # (count, n) initial states in grid order (row-major in the second coordinate)
    labels: list[Classification]
    bounds: tuple[tuple[float, float], tuple[float, float]]
    resolution: tuple[int, int]
    T: float
    dt: float
    certificate: Certificate | None
    inside: np.ndarray
    paths: list[np.ndarray] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out = {c.value: 0 for c in Classification}
        for c in self.labels:
            out[c.value] += 1
        return out

    def violations(self) -> np.ndarray:
        """Indices of grid points inside the certificate but classified as diverged."""
        div = np.array([c is Classification.DIVERGED for c in self.labels])
        return np.flatnonzero(div & self.inside)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["z1", "z2", "label"])
            for p, c in zip(self.points, self.labels):
                w.writerow([f"{p[0]:.17g}", f"{p[1]:.17g}", c.value])


def default_bounds(cert: Certificate, factor: float = 2.0) -> tuple[tuple[float, float], tuple[float, float]]:
    """Box ``factor`` times the bounding box of the certificate ellipsoid in the first two coordinates."""
    Pinv = np.linalg.inv(cert.P)
    rho = 1.0 if cert.is_global else cert.rho
    hw = factor * np.sqrt(rho * np.diag(Pinv)[:2])
    return (-hw[0], hw[0]), (-hw[1], hw[1])


def sweep(plant: PlantFD, certificate: Certificate | None, *, bounds=None, resolution: int | tuple[int, int] = 31,
          T: float = 10.0, dt: float | None = None, threads: int = 1, level: float | None = None,
          path_points: int = 200, check: bool = True, tol_conv: float = TOL_CONVERGED) -> SweepResult:
    """Classify a rectangular grid of initial states in the first two modal coordinates.

    Grid points are processed in chunks (optionally on several threads) and
    merged back in grid order, so the result does not depend on ``threads``.
    With ``check`` a diverged point inside the certificate raises
    :class:`SoundnessViolation`.
    """
    if plant.K is None:
        raise ValueError("plant has no gain")
    level = _level(level, certificate)
    if bounds is None:
        if certificate is None:
            raise ValueError("bounds required when no certificate is given")
        bounds = default_bounds(certificate)
    nx, ny = (resolution, resolution) if isinstance(resolution, int) else resolution
    (x0, x1), (y0, y1) = bounds
    xs, ys = np.linspace(x0, x1, nx), np.linspace(y0, y1, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.zeros((nx * ny, plant.n))
    pts[:, 0], pts[:, 1] = gx.ravel(), gy.ravel()
    dt = _default_dt(T, dt)
    sys = _Cascade(plant.A, plant.K, level, plant.B)

    def work(chunk):
        return _run(sys, chunk, np.zeros((len(chunk), 0)), T, dt)

    chunks = np.array_split(pts, max(1, int(threads)))
    chunks = [c for c in chunks if len(c)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    labels, paths = [], []
    stride = None
    for chunk, (times, Z, _, stop, div, _) in zip(chunks, results):
        if stride is None:
            stride = max(1, (len(times) - 1) // max(1, path_points))
        for r in range(len(chunk)):
            k = stop[r]
            labels.append(_classify(Z[k, r], chunk[r], bool(div[r]), certificate, tol_conv))
            idx = np.unique(np.append(np.arange(0, k + 1, stride), k))
            paths.append(Z[idx, r, :2].copy())
    if certificate is None:
        inside = np.zeros(len(pts), dtype=bool)
    else:
        inside = np.einsum("ij,jk,ik->i", pts, certificate.P, pts) <= certificate.rho
    res = SweepResult(pts, labels, ((x0, x1), (y0, y1)), (nx, ny), T, dt, certificate, inside, paths)
    if check and len(res.violations()):
        raise SoundnessViolation(f"{len(res.violations())} certified initial states diverged")
    return res
