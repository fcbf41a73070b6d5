"""Region-of-attraction certificates: static, dynamic-controller, pointwise-saturated and boundary-controlled."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .design import PlantFD, hurwitz, stabilizable
from .linalg import cholesky, sym_eig, symmetrize
from .lmi import (
    LmiError,
    augmented_matrices,
    m1_block,
    solve_prop5,
    solve_prop6,
    solve_prop7,
    verify_certificate,
)
from .spectral import (
    ModalSystem,
    OperatorSpec,
    TRUNCATION,
    analytic_spectrum,
    grid_weights,
    numeric_spectrum,
)

KINDS = ("static", "dynamic", "pointwise", "boundary")


class PreconditionError(ValueError):
    """An input violates a requirement of the certificate construction."""


@dataclass(frozen=True)
class Certificate:
    """Ellipsoid ``{z : z^T P z <= rho}`` together with the data that certifies it.

    ``rho = inf`` marks a global certificate.
    """

    kind: str
    P: np.ndarray
    rho: float
    K: np.ndarray
    C: np.ndarray
    D: np.ndarray
    alpha: float
    level: float
    gamma: float | None = None
    beta: float | None = None
    P_tilde: np.ndarray | None = None
    n_plant: int | None = None
    controller: dict | None = None
    residuals: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if not self.rho > 0:
            raise ValueError("ellipsoid level must be positive")

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def is_global(self) -> bool:
        return math.isinf(self.rho)

    def contains(self, z) -> bool:
        return ellipsoid_contains(self.P, self.rho, z)

    def volume(self) -> float:
        return ellipsoid_volume(self.P, self.rho)

    def plant_ellipsoid(self) -> tuple[np.ndarray, float]:
        """Shape of the region's projection onto the plant coordinates."""
        k = self.n_plant or self.n
        if k == self.n:
            return self.P, self.rho
        return projection_shape(self.P, k), self.rho

    def semi_axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Semi-axis lengths (ascending eigenvalue order of ``P``) and directions."""
        w, V = sym_eig(self.P)
        return np.sqrt(self.rho / w), V

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a, dtype=float).tolist()

        return {
            "kind": self.kind,
            "P": arr(self.P),
            "rho": self.rho,
            "K": arr(self.K),
            "C": arr(self.C),
            "D": arr(self.D),
            "alpha": self.alpha,
            "level": self.level,
            "gamma": self.gamma,
            "beta": self.beta,
            "P_tilde": arr(self.P_tilde),
            "n_plant": self.n_plant,
            "controller": None if self.controller is None else {k: arr(v) for k, v in self.controller.items()},
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        def arr(a):
            return None if a is None else np.array(a, dtype=float)

        try:
            return cls(
                kind=d["kind"], P=np.atleast_2d(arr(d["P"])), rho=float(d["rho"]),
                K=np.atleast_2d(arr(d["K"])), C=np.atleast_2d(arr(d["C"])), D=np.atleast_1d(arr(d["D"])),
                alpha=float(d["alpha"]), level=float(d["level"]), gamma=d.get("gamma"), beta=d.get("beta"),
                P_tilde=None if d.get("P_tilde") is None else np.atleast_2d(arr(d["P_tilde"])),
                n_plant=d.get("n_plant"),
                controller=None if d.get("controller") is None else {k: arr(v) for k, v in d["controller"].items()},
                residuals=dict(d.get("residuals", {})), metadata=dict(d.get("metadata", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed certificate: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Certificate":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# ellipsoid helpers


def ellipsoid_contains(P, rho: float, z) -> bool:
    z = np.asarray(z, dtype=float)
    return bool(z @ np.asarray(P) @ z <= rho)


def ellipsoid_boundary_samples(P, rho: float, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``count`` points with ``z^T P z = rho``.

    In two dimensions the points are the image of equally spaced angles on the
    unit circle; otherwise random directions on the sphere are used.
    """
    P = symmetrize(P)
    n = P.shape[0]
    L = cholesky(P)
    if n == 2:
        th = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        U = np.stack([np.cos(th), np.sin(th)])
    else:
        rng = rng or np.random.default_rng(0)
        U = rng.standard_normal((n, count))
        U /= np.linalg.norm(U, axis=0)
    # z = sqrt(rho) L^{-T} u gives z^T L L^T z = rho |u|^2.
    Z = np.sqrt(rho) * np.linalg.solve(L.T, U)
    return Z.T


def ellipsoid_volume(P, rho: float) -> float:
    P = np.atleast_2d(P)
    n = P.shape[0]
    if math.isinf(rho):
        return math.inf
    return math.pi ** (n / 2) * rho ** (n / 2) / (math.gamma(n / 2 + 1) * math.sqrt(np.linalg.det(P)))


def support(P, rho: float, direction) -> float:
    """``max { d^T z : z^T P z <= rho }``."""
    d = np.asarray(direction, dtype=float)
    return float(np.sqrt(rho * d @ np.linalg.solve(P, d)))


def projection_shape(P, k: int) -> np.ndarray:
    """Shape matrix of the projection of ``{x^T P x <= r}`` onto the first ``k`` coordinates."""
    P = symmetrize(P)
    P11, P12, P22 = P[:k, :k], P[:k, k:], P[k:, k:]
    return symmetrize(P11 - P12 @ np.linalg.solve(P22, P12.T))


# ---------------------------------------------------------------------------
# static feedback


def tail_weight(alpha: float, eta: float, Btail, K) -> float:
    """Weight of the tail energy in the composite Lyapunov function.

    With ``s = ||b_perp|| ||K||`` the cross term is absorbed for any
    ``kappa < eta / s``; we take ``kappa = eta / (2 s)`` and then half of the
    admissible ``alpha * kappa / s``. Any smaller positive weight also works,
    so the result is capped at 1 to keep both terms on a comparable scale when
    the tail input is (numerically) zero.
    """
    s = float(np.linalg.norm(np.asarray(Btail, dtype=float)) * np.linalg.norm(np.atleast_2d(K), 2))
    if s == 0.0:
        return 1.0
    kappa = eta / (2.0 * s)
    return min(1.0, alpha * kappa / (2.0 * s))


def _require_gain(plant: PlantFD) -> np.ndarray:
    if plant.K is None:
        raise PreconditionError("plant has no feedback gain")
    ok, absc = hurwitz(plant.closed_loop())
    if not ok:
        raise PreconditionError(f"A + BK is not Hurwitz (spectral abscissa {absc:.4g})")
    return plant.K


def _try_global(plant: PlantFD, level: float, margin, budget):
    if not hurwitz(plant.A)[0]:
        return None
    try:
        return solve_prop5(plant.A, plant.B, plant.K, level, margin=margin, objective="feasibility",
                           fix_sector=True, budget=budget)
    except LmiError:
        return None


def certify_static(plant: PlantFD, level: float, *, margin: float | None = None, objective: str | None = None,
                   budget: int | None = None, modal: ModalSystem | None = None, try_global: bool = True) -> Certificate:
    """Static-feedback certificate: scalar-input path for ``m = 1``, linearized path otherwise.

    When the open-loop matrix is already Hurwitz the global version (sector
    matrix pinned to ``K``) is tried first. Passing ``modal`` fills in the
    tail weight of the composite Lyapunov function.
    """
    K = _require_gain(plant)
    kw = {"margin": margin}
    if budget is not None:
        kw["budget"] = budget
    meta = {
        "pde_region": "ellipsoid in the retained modal coordinates, tail coordinates unrestricted",
        "level_enlargement": "none",
    }
    sol = _try_global(plant, level, margin, kw.get("budget", 2000)) if try_global else None
    if sol is not None:
        rep = verify_certificate(sol.P, sol.C, sol.D, plant, level, form="prop3")
        if not rep.passed:
            raise LmiError("global certificate failed verification: " + ", ".join(rep.failed_blocks))
        alpha = -sym_eig(m1_block(plant.A, plant.B, K, sol.P, sol.C, sol.D))[0][-1]
        cert = Certificate("static", sol.P, math.inf, K, sol.C, np.atleast_1d(sol.D), alpha, level,
                           residuals={k: v for k, (_, v, _) in rep.blocks.items()},
                           metadata=dict(meta, solver="linearized, sector fixed to K", **{"global": True}))
    elif plant.m == 1:
        sol = solve_prop6(plant.A, plant.B, K, level, objective=objective or "min_kc", **kw)
        if sol.global_case:
            raise LmiError("scalar solver returned C = K; use the global path")
        P = sol.D * sol.P
        rep = verify_certificate(sol.P, sol.C, sol.D, plant, level, form="prop6")
        if not rep.passed:
            raise LmiError("certificate failed verification: " + ", ".join(rep.failed_blocks))
        alpha = -sym_eig(m1_block(plant.A, plant.B, K, P, sol.C, [sol.D]))[0][-1]
        cert = Certificate("static", P, 1.0, K, sol.C, np.array([sol.D]), alpha, level, P_tilde=sol.P,
                           residuals={k: v for k, (_, v, _) in rep.blocks.items()},
                           metadata=dict(meta, solver="scalar-input, min |K-C|^2", **{"global": False}))
    else:
        sol = solve_prop5(plant.A, plant.B, K, level, objective=objective or "volume", **kw)
        rep = verify_certificate(sol.P, sol.C, sol.D, plant, level, form="prop3")
        if not rep.passed:
            raise LmiError("certificate failed verification: " + ", ".join(rep.failed_blocks))
        alpha = -sym_eig(m1_block(plant.A, plant.B, K, sol.P, sol.C, sol.D))[0][-1]
        cert = Certificate("static", sol.P, 1.0, K, sol.C, np.atleast_1d(sol.D), alpha, level,
                           residuals={k: v for k, (_, v, _) in rep.blocks.items()},
                           metadata=dict(meta, solver="linearized, max log det", **{"global": False}))
    if modal is not None:
        cert = with_tail_weight(cert, modal)
    return cert


def with_tail_weight(cert: Certificate, modal: ModalSystem) -> Certificate:
    if modal.eta is None:
        raise PreconditionError("modal system has no tail margin")
    return replace(cert, gamma=tail_weight(cert.alpha, modal.eta, modal.Btail, cert.K))


# ---------------------------------------------------------------------------
# dynamic controller


def certify_dynamic(plant: PlantFD, level: float, *, A1=None, A2=None, K2=None, nc: int | None = None,
                    reference: np.ndarray | None = None, margin: float | None = None,
                    budget: int | None = None) -> Certificate:
    """Certificate for the plant driven by ``u = K1 z + K2 x_c`` with ``x_c' = A1 x_c + A2 z``.

    The projection of the returned region onto ``z`` contains
    ``{z^T reference z <= 1}``; the reference defaults to the static
    certificate of the same plant. Defaults: ``A1 = -I``, ``A2 = I`` (first
    ``nc`` plant coordinates), ``K2 = 0``.
    """
    K1 = _require_gain(plant)
    n, m = plant.n, plant.m
    if nc is None:
        nc = 0 if A1 is None else np.atleast_2d(A1).shape[0]
    if nc == 0:
        return replace(certify_static(plant, level, margin=margin, budget=budget), kind="dynamic")
    A1 = -np.eye(nc) if A1 is None else np.atleast_2d(np.asarray(A1, dtype=float))
    A2 = np.eye(nc, n) if A2 is None else np.asarray(A2, dtype=float)
    K2 = np.zeros((m, nc)) if K2 is None else np.asarray(K2, dtype=float)
    if A1.shape != (nc, nc) or A2.size != nc * n or K2.size != m * nc:
        raise PreconditionError("controller matrices have inconsistent dimensions")
    A2 = A2.reshape(nc, n)
    K2 = K2.reshape(m, nc)
    Abar, Bbar, Kbar = augmented_matrices(plant.A, plant.B, A1, A2, K1, K2)
    ok, absc = hurwitz(Abar + Bbar @ Kbar)
    if not ok:
        raise PreconditionError(f"augmented closed loop is not Hurwitz (abscissa {absc:.4g})")
    if reference is None:
        static = certify_static(plant, level, margin=margin, budget=budget, try_global=False)
        reference = static.P
    reference = symmetrize(reference)
    kw = {} if budget is None else {"budget": budget}
    sol = solve_prop7(plant.A, plant.B, A1, A2, K1, K2, reference, level, margin=margin, **kw)
    aug = PlantFD(Abar, Bbar, Kbar)
    rep = verify_certificate(sol.P, sol.C, sol.D, aug, level, form="prop3", reference=reference)
    if not rep.passed:
        raise LmiError("dynamic certificate failed verification: " + ", ".join(rep.failed_blocks))
    alpha = -sym_eig(m1_block(Abar, Bbar, Kbar, sol.P, sol.C, sol.D))[0][-1]
    return Certificate(
        "dynamic", sol.P, 1.0, Kbar, sol.C, np.atleast_1d(sol.D), alpha, level, n_plant=n,
        controller={"A1": A1, "A2": A2, "K1": K1, "K2": K2, "reference": reference},
        residuals={k: v for k, (_, v, _) in rep.blocks.items()},
        metadata={"projection_contains_reference": True, "global": False},
    )


# ---------------------------------------------------------------------------
# pointwise saturation


def pointwise_level(P, K, bmax, level: float) -> float:
    """Largest ``beta`` with ``{z^T P z <= beta}`` inside every slab ``|K_k z| <= level / max(1, bmax_k)``."""
    Pinv = np.linalg.inv(symmetrize(P))
    K = np.atleast_2d(K)
    beta = math.inf
    for k in range(K.shape[0]):
        q = float(K[k] @ Pinv @ K[k])
        if q > 0:
            beta = min(beta, level**2 / (max(1.0, float(bmax[k])) ** 2 * q))
    return beta


def certify_pointwise(static: Certificate, shapes, level: float | None = None, *, check_samples: int = 10_000) -> Certificate:
    """Shrink a static certificate until the pointwise and scalar saturations coincide on it.

    ``shapes`` holds the sampled input shapes (one row per input). On
    ``{z^T P z <= beta}`` every ``|(K z)_k| <= level`` and ``|b_k(x) (K z)_k| <= level``,
    so the two saturated systems agree there and the static decay estimate
    carries over.
    """
    if static.kind != "static":
        raise PreconditionError("pointwise certificates are derived from a static certificate")
    level = static.level if level is None else float(level)
    shapes = np.atleast_2d(np.asarray(shapes, dtype=float))
    if shapes.shape[0] != static.K.shape[0]:
        raise PreconditionError("need one input shape per input channel")
    if not np.all(np.isfinite(shapes)):
        raise PreconditionError("input shapes must be essentially bounded")
    bmax = np.max(np.abs(shapes), axis=1)
    beta = min(pointwise_level(static.P, static.K, bmax, level), static.rho)
    unbounded = math.isinf(beta)
    if not unbounded:
        Z = ellipsoid_boundary_samples(static.P, beta, check_samples)
        slab = level / np.maximum(1.0, bmax)
        if np.any(np.abs(Z @ static.K.T) > slab * (1 + 1e-9)):
            raise AssertionError("pointwise ellipsoid leaves the unsaturated slab")
    return replace(
        static, kind="pointwise", rho=beta, beta=beta,
        metadata=dict(static.metadata, sup_norms=[float(v) for v in bmax],
                      sup_norm_source="max over grid samples (grid dependent)", beta_unbounded=unbounded),
    )


# ---------------------------------------------------------------------------
# boundary control


@dataclass(frozen=True)
class BoundaryPlant:
    """Boundary-actuated heat equation with ODE actuator, in the shifted variables.

    The state is ``z = (x_d, w_1, ..., w_n)``; tail modes ``j > n`` are driven
    by ``d_j x_d + b_j sat(u)``.
    """

    A_d: np.ndarray
    B_d: np.ndarray
    C_d: np.ndarray
    modal: ModalSystem
    n: int
    d_samples: np.ndarray  # (grid, n_d)
    b_samples: np.ndarray  # (grid,)
    d_coeffs: np.ndarray  # (N, n_d)
    b_coeffs: np.ndarray  # (N,)
    A: np.ndarray
    B: np.ndarray

    @property
    def n_d(self) -> int:
        return self.A_d.shape[0]

    @property
    def dim(self) -> int:
        return self.n + self.n_d

    def plant(self, K=None) -> PlantFD:
        labels = tuple(f"xd{i + 1}" for i in range(self.n_d)) + tuple(f"w{j + 1}" for j in range(self.n))
        return PlantFD(self.A, self.B, K, labels=labels)

    def shift(self) -> np.ndarray:
        """``(x / L) C_d`` sampled on the grid, shape ``(grid, n_d)``."""
        x = self.modal.grid
        return np.outer(x / self.modal.length, self.C_d.ravel())


def build_boundary(A_d, B_d, C_d, spec: OperatorSpec, n: int | None = None, N: int = TRUNCATION) -> BoundaryPlant:
    A_d = np.atleast_2d(np.asarray(A_d, dtype=float))
    nd = A_d.shape[0]
    B_d = np.asarray(B_d, dtype=float).reshape(nd, 1)
    C_d = np.asarray(C_d, dtype=float).reshape(1, nd)
    if A_d.shape != (nd, nd):
        raise PreconditionError("A_d must be square")
    ms = analytic_spectrum(spec, N) if spec.constant_reaction else numeric_spectrum(spec, N, len(spec.grid))
    if n is None:
        n = ms.n if ms.n is not None else int(np.count_nonzero(ms.eigvals >= 0))
    if n >= N:
        raise PreconditionError("truncation must exceed the number of retained modes")
    x = ms.grid
    s = x / spec.length
    c = spec.reaction_on(x)
    d = np.outer(c * s, C_d.ravel()) - np.outer(s, (C_d @ A_d).ravel())
    b = -s * (C_d @ B_d).item()
    w = grid_weights(x)
    e = np.asarray(ms.eigfuncs)
    dj = (e * w) @ d
    bj = (e * w) @ b
    A = np.block([[A_d, np.zeros((nd, n))], [dj[:n], np.diag(ms.eigvals[:n])]])
    B = np.concatenate([B_d.ravel(), bj[:n]])[:, None]
    lam = np.asarray(ms.eigvals)
    eta = 0.999 * (-lam[n]) if lam[n] < 0 else None
    ms = replace(ms, n=n, eta=eta, Bmat=bj[:, None])
    return BoundaryPlant(A_d, B_d, C_d, ms, n, d, b, dj, bj, A, B)


def certify_boundary(bp: BoundaryPlant, K, level: float, **kw) -> Certificate:
    plant = bp.plant(np.atleast_2d(K))
    ok, why = stabilizable(plant)
    if not ok:
        raise PreconditionError(f"augmented pair not stabilizable: {why}")
    cert = certify_static(plant, level, try_global=False, **kw)
    meta = dict(cert.metadata, pde_region="ellipsoid in (x_d, w_1..w_n), tail unrestricted",
                state_order=list(plant.labels))
    return replace(cert, kind="boundary", metadata=meta)
