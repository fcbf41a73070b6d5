"""Matrix-inequality certificates for the saturated closed loop.

The inequalities are solved with a small primal log-barrier method: every
constraint is an affine symmetric map ``G(x) = F0 + sum_i x_i F_i`` that must
stay positive definite, and Newton's method follows the central path of
``t * f(x) - sum log det G(x)``. A phase-one problem (shift every constraint by
``s I`` and drive ``s`` below zero) finds a strictly feasible start. Problem
sizes here are tiny (a few dozen scalar unknowns, blocks of order <= 12), so
dense Newton steps are cheap.

Whatever the solver returns is re-checked with the Jacobi eigensolver in
:mod:`satroa.linalg` before it is handed back.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_continuous_lyapunov

from .design import PlantFD, hurwitz
from .linalg import cholesky, forward_solve, sym_eig, symmetrize

log = logging.getLogger(__name__)

TOL_STRICT = 1e-9
TOL_PSD = 1e-6
DEFAULT_BUDGET = 2000
BOX_RADIUS = 1e6


class LmiError(RuntimeError):
    pass


class InfeasibleWithinBudget(LmiError):
    """No strictly feasible point was found; this is not a proof of infeasibility."""

    def __init__(self, message: str, residual: float | None = None, iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


# ---------------------------------------------------------------------------
# variable layout


class Layout:
    """Packs symmetric, diagonal and full matrix unknowns into one vector."""

    def __init__(self):
        self.blocks: dict[str, tuple[str, tuple[int, int], slice]] = {}
        self.size = 0

    def add(self, name: str, kind: str, shape: tuple[int, int]) -> None:
        r, c = shape
        count = {"sym": r * (r + 1) // 2, "diag": r, "full": r * c}[kind]
        self.blocks[name] = (kind, shape, slice(self.size, self.size + count))
        self.size += count

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        for name, (kind, (r, c), sl) in self.blocks.items():
            v = x[sl]
            if kind == "sym":
                M = np.zeros((r, r))
                M[np.triu_indices(r)] = v
                M = M + M.T - np.diag(np.diag(M))
            elif kind == "diag":
                M = np.diag(v)
            else:
                M = v.reshape(r, c)
            out[name] = M
        return out

    def pack(self, **mats) -> np.ndarray:
        x = np.zeros(self.size)
        for name, M in mats.items():
            kind, (r, c), sl = self.blocks[name]
            M = np.atleast_2d(np.asarray(M, dtype=float))
            if kind == "sym":
                x[sl] = symmetrize(M)[np.triu_indices(r)]
            elif kind == "diag":
                x[sl] = np.diag(M) if M.shape == (r, r) else M.ravel()
            else:
                x[sl] = M.reshape(r, c).ravel()
        return x


@dataclass
class AffineLmi:
    """``G(x) = F0 + sum_i x_i Fs[i]``, required to be positive definite."""

    name: str
    F0: np.ndarray
    Fs: np.ndarray

    @classmethod
    def from_map(cls, name: str, fn: Callable[[np.ndarray], np.ndarray], nvars: int) -> "AffineLmi":
        F0 = symmetrize(fn(np.zeros(nvars)))
        Fs = np.empty((nvars,) + F0.shape)
        for i in range(nvars):
            e = np.zeros(nvars)
            e[i] = 1.0
            Fs[i] = symmetrize(fn(e)) - F0
        return cls(name, F0, Fs)

    @property
    def dim(self) -> int:
        return self.F0.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.F0 + np.tensordot(x, self.Fs, axes=1)


def _logdet_terms(lmi: AffineLmi, x: np.ndarray, hess: bool = True):
    """``-log det G(x)`` with gradient and Hessian, or ``None`` outside the domain."""
    G = lmi(x)
    try:
        cf = cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(cf[0])
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return None
    val = -2.0 * np.sum(np.log(d))
    if not hess:
        return val, None, None
    W = cho_solve(cf, lmi.Fs.transpose(1, 0, 2).reshape(lmi.dim, -1), check_finite=False)
    W = W.reshape(lmi.dim, len(x), lmi.dim).transpose(1, 0, 2)
    g = -np.einsum("iaa->i", W)
    H = np.einsum("iab,jba->ij", W, W)
    return val, g, H


@dataclass
class Objective:
    """``0.5 x^T H x + g^T x + c0 - sum log det(S_k(x))``."""

    H: np.ndarray | None = None
    g: np.ndarray | None = None
    c0: float = 0.0
    logdets: list[AffineLmi] = field(default_factory=list)

    def value(self, x: np.ndarray) -> float:
        v = self.c0
        if self.g is not None:
            v += self.g @ x
        if self.H is not None:
            v += 0.5 * x @ self.H @ x
        for S in self.logdets:
            r = _logdet_terms(S, x, hess=False)
            v += np.inf if r is None else r[0]
        return float(v)

    @property
    def trivial(self) -> bool:
        return self.H is None and self.g is None and not self.logdets


@dataclass
class BarrierResult:
    x: np.ndarray
    iterations: int
    objective: float
    phase1_shift: float


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def tick(self) -> None:
        self.used += 1
        if self.used > self.limit:
            raise InfeasibleWithinBudget(f"iteration budget of {self.limit} Newton steps exhausted",
                                         iterations=self.used)


def _merit(x, t, obj: Objective, cons: list[AffineLmi], box: float, hess=True):
    if np.any(np.abs(x) >= box):
        return None
    val, g, H = 0.0, np.zeros(len(x)), np.zeros((len(x), len(x)))
    for c in cons:
        r = _logdet_terms(c, x, hess)
        if r is None:
            return None
        val += r[0]
        if hess:
            g += r[1]
            H += r[2]
    lo, hi = box + x, box - x
    val -= np.sum(np.log(lo)) + np.sum(np.log(hi))
    if hess:
        g += -1.0 / lo + 1.0 / hi
        H += np.diag(1.0 / lo**2 + 1.0 / hi**2)
    if t > 0 and not obj.trivial:
        if obj.g is not None:
            val += t * (obj.g @ x)
            if hess:
                g += t * obj.g
        if obj.H is not None:
            val += t * 0.5 * x @ obj.H @ x
            if hess:
                g += t * (obj.H @ x)
                H += t * obj.H
        for S in obj.logdets:
            r = _logdet_terms(S, x, hess)
            if r is None:
                return None
            val += t * r[0]
            if hess:
                g += t * r[1]
                H += t * r[2]
        val += t * obj.c0
    return val, g, H


def _center(x, t, obj, cons, box, budget: _Budget, stop: Callable[[np.ndarray], bool] | None = None,
            tol: float = 1e-10):
    for _ in range(200):
        r = _merit(x, t, obj, cons, box)
        if r is None:
            raise LmiError("centering started outside the barrier domain")
        val, g, H = r
        H = H + 1e-14 * max(1.0, np.max(np.abs(np.diag(H)))) * np.eye(len(x))
        try:
            dx = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            dx = -np.linalg.lstsq(H, g, rcond=None)[0]
        dec2 = float(-g @ dx)
        if dec2 / 2.0 <= tol:
            break
        budget.tick()
        step = 1.0
        while True:
            xn = x + step * dx
            rn = _merit(xn, t, obj, cons, box, hess=False)
            if rn is not None and rn[0] <= val - 0.25 * step * dec2:
                break
            step *= 0.5
            if step < 1e-14:
                return x
        x = xn
        if stop is not None and stop(x):
            return x
    return x


def _phase_one(cons: list[AffineLmi], x0: np.ndarray, box: float, budget: _Budget) -> tuple[np.ndarray, float]:
    """Find ``x`` with every ``G_k(x)`` positive definite, starting from ``x0``."""
    n = len(x0)
    shift0 = 0.0
    for c in cons:
        w = np.linalg.eigvalsh(c(x0))
        shift0 = max(shift0, -w[0])
    if shift0 == 0.0 and all(np.linalg.eigvalsh(c(x0))[0] > 0 for c in cons):
        return x0, 0.0
    aug = []
    for c in cons:
        Fs = np.concatenate([c.Fs, np.eye(c.dim)[None]], axis=0)
        aug.append(AffineLmi(c.name, c.F0, Fs))
    g = np.zeros(n + 1)
    g[-1] = 1.0
    obj = Objective(g=g)
    s0 = shift0 + 1.0 + 0.1 * shift0
    y = np.concatenate([x0, [s0]])
    box_aug = max(box, 10 * s0)
    mtot = sum(c.dim for c in cons)

    def done(y):
        return y[-1] < 0

    t = 1.0 / max(s0, 1e-12)
    while True:
        y = _center(y, t, obj, aug, box_aug, budget, stop=done)
        if done(y):
            return y[:-1], float(y[-1])
        if mtot / t < 1e-12:
            raise InfeasibleWithinBudget(
                f"phase one stalled at shift {y[-1]:.3e}; no strictly feasible point found",
                residual=float(y[-1]), iterations=budget.used)
        t *= 10.0


def solve_barrier(cons: list[AffineLmi], obj: Objective, x0: np.ndarray, *, budget: int = DEFAULT_BUDGET,
                  box: float = BOX_RADIUS, gap: float = 1e-9) -> BarrierResult:
    """Minimize ``obj`` over ``{x : G_k(x) > 0 for all k, |x_i| < box}``."""
    bud = _Budget(budget)
    x, shift = _phase_one(cons, np.asarray(x0, dtype=float), box, bud)
    if obj.trivial:
        return BarrierResult(x, bud.used, 0.0, shift)
    mtot = sum(c.dim for c in cons) + 2 * len(x) + sum(S.dim for S in obj.logdets)
    f = abs(obj.value(x))
    t = mtot / max(1.0, f)
    while True:
        x = _center(x, t, obj, cons, box, bud)
        if mtot / t <= gap * max(1.0, abs(obj.value(x))):
            break
        t *= 20.0
    return BarrierResult(x, bud.used, obj.value(x), shift)


# ---------------------------------------------------------------------------
# the closed-loop inequalities


def m1_tilde(A, B, K, Pt, C) -> np.ndarray:
    """Scalar-input decay block with ``D`` factored out."""
    Acl = A + B @ K
    off = Pt @ B - np.atleast_2d(C).T
    return np.block([[Acl.T @ Pt + Pt @ Acl, off], [off.T, -2.0 * np.eye(B.shape[1])]])


def m2_tilde(Pt, K, C, D: float, level: float) -> np.ndarray:
    KC = np.atleast_2d(K - C)
    return np.block([[D * Pt, KC.T], [KC, level**2 * np.eye(KC.shape[0])]])


def m1_block(A, B, K, P, C, D) -> np.ndarray:
    """Decay block for ``P``, sector matrix ``C`` and diagonal scaling ``D``."""
    Acl = A + B @ K
    D = np.atleast_2d(D) if np.ndim(D) == 2 else np.diag(np.atleast_1d(D))
    off = P @ B - (D @ C).T
    return np.block([[Acl.T @ P + P @ Acl, off], [off.T, -2.0 * D]])


def m2_block(P, K, C, level: float) -> np.ndarray:
    KC = np.atleast_2d(K - C)
    return np.block([[P, KC.T], [KC, level**2 * np.eye(KC.shape[0])]])


def default_margin(A, B, K) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(A + B @ K, 2)))


@dataclass
class LmiSolution:
    form: str
    P: np.ndarray
    C: np.ndarray
    D: np.ndarray | float
    feasible: bool
    residuals: dict
    objective_value: float
    margin: float
    iterations: int = 0
    S: np.ndarray | None = None
    E: np.ndarray | None = None
    Y: np.ndarray | None = None
    global_case: bool = False


def _start_point(A, B, K, level):
    """A strictly feasible ``(P, C = 0, D)`` for the decay/sector pair, built by hand.

    ``P`` solves the closed-loop Lyapunov equation and is scaled until the
    sector block holds with ``C = 0``; ``D`` is then taken large enough for
    the decay block.
    """
    Acl = A + B @ K
    Pl = solve_continuous_lyapunov(Acl.T, -np.eye(A.shape[0]))
    Pl = symmetrize(Pl)
    KtK = K.T @ K / level**2
    w = np.linalg.eigvalsh(np.linalg.solve(np.linalg.cholesky(Pl), np.linalg.solve(np.linalg.cholesky(Pl), KtK).T))
    tau = 1.5 * max(float(w[-1]), 1e-6)
    P = tau * Pl
    d = tau * float(np.linalg.eigvalsh(B.T @ Pl @ Pl @ B)[-1]) + 1.0
    return P, np.zeros_like(K), d


def _check_hurwitz(A, B, K):
    ok, absc = hurwitz(A + B @ K)
    if not ok:
        raise LmiError(f"A + BK is not Hurwitz (spectral abscissa {absc:.4g})")


def solve_prop6(A, B, K, level: float, *, margin: float | None = None, objective: str = "min_kc",
                budget: int = DEFAULT_BUDGET) -> LmiSolution:
    """Scalar-input certificate: ``M1~(Pt, C) <= -margin``, ``Pt >= margin``.

    The default objective minimizes ``|K - C|^2``, which keeps the off-diagonal
    block of the sector inequality small and hence the scaling ``D`` large.
    ``objective="feasibility"`` stops at the first strictly feasible point.
    """
    A, B, K = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, B, K))
    if B.shape[1] != 1:
        raise LmiError("the scalar-input form needs m = 1")
    _check_hurwitz(A, B, K)
    n = A.shape[0]
    eps = default_margin(A, B, K) if margin is None else float(margin)
    lay = Layout()
    lay.add("P", "sym", (n, n))
    lay.add("C", "full", (1, n))
    nv = lay.size

    def neg_m1(x):
        v = lay.unpack(x)
        return -m1_tilde(A, B, K, v["P"], v["C"]) - eps * np.eye(n + 1)

    def pos_p(x):
        return lay.unpack(x)["P"] - eps * np.eye(n)

    cons = [AffineLmi.from_map("M1", neg_m1, nv), AffineLmi.from_map("P", pos_p, nv)]
    Acl = A + B @ K
    Pl = symmetrize(solve_continuous_lyapunov(Acl.T, -np.eye(n)))
    Pl *= max(1.0, 2 * eps / np.linalg.eigvalsh(Pl)[0])
    x0 = lay.pack(P=Pl, C=(Pl @ B).T)
    if objective == "min_kc":
        H = np.zeros((nv, nv))
        g = np.zeros(nv)
        sl = lay.blocks["C"][2]
        H[sl, sl] = 2.0 * np.eye(n)
        g[sl] = -2.0 * K.ravel()
        obj = Objective(H=H, g=g, c0=float(K.ravel() @ K.ravel()))
    elif objective == "feasibility":
        obj = Objective()
    else:
        raise ValueError(f"unknown objective {objective!r}")
    res = solve_barrier(cons, obj, x0, budget=budget)
    v = lay.unpack(res.x)
    Pt, C = symmetrize(v["P"]), v["C"]
    lam_m1 = sym_eig(m1_tilde(A, B, K, Pt, C))[0][-1]
    lam_p = sym_eig(Pt)[0][0]
    if lam_m1 > -eps * (1 - 1e-6) or lam_p < eps * (1 - 1e-6):
        raise LmiError(f"solver returned a point failing re-verification (M1~ {lam_m1:.3e}, P~ {lam_p:.3e})")
    D, glob = minimal_D(Pt, K, C, level)
    return LmiSolution(
        form="prop6", P=Pt, C=C, D=D, feasible=True,
        residuals={"M1_tilde": lam_m1, "P_tilde": lam_p},
        objective_value=float(np.sum((K - C) ** 2)), margin=eps, iterations=res.iterations,
        global_case=glob,
    )


def minimal_D(Pt, K, C, level: float) -> tuple[float, bool]:
    """Least ``D`` with ``[[D Pt, (K-C)^T], [K-C, level^2 I]] >= 0``.

    With ``Pt = L L^T`` the sector block is semidefinite iff
    ``D >= lambda_max(L^{-1} (K-C)^T (K-C) L^{-T}) / level^2``. Returns the value
    and a flag that is true in the global case ``K = C`` (where ``D = 0``).
    """
    KC = np.atleast_2d(np.asarray(K, dtype=float) - np.asarray(C, dtype=float))
    if not np.any(KC):
        return 0.0, True
    L = cholesky(Pt)
    W = forward_solve(L, KC.T)
    lam = sym_eig(W.T @ W)[0][-1]
    return float(lam / level**2), False


def solve_prop5(A, B, K, level: float, *, margin: float | None = None, objective: str = "volume",
                fix_sector: bool = False, budget: int = DEFAULT_BUDGET) -> LmiSolution:
    """Multi-input certificate through the linear reformulation in ``(S, E, Y)``.

    ``S = P^{-1}``, ``E = D^{-1}`` (diagonal) and ``Y = S C^T``. The default
    objective maximizes ``log det S``, i.e. the volume of ``{z^T P z <= 1}``.
    With ``fix_sector`` the sector matrix is pinned to ``C = K``, which drops the
    sector inequality and yields a global certificate when feasible.
    """
    A, B, K = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, B, K))
    return _solve_linearized(A, B, K, level, margin=margin, objective=objective, fix_sector=fix_sector,
                             budget=budget, form="prop5")


def solve_prop7(A, B, A1, A2, K1, K2, P_ref, level: float, *, margin: float | None = None,
                objective: str = "volume", budget: int = DEFAULT_BUDGET) -> LmiSolution:
    """Dynamic-controller certificate whose projection onto the plant states contains ``{z^T P_ref z <= 1}``.

    The inclusion ``[I 0] Pbar [I 0]^T <= P_ref`` is imposed in the equivalent
    linear form ``[[P_ref, [I 0]], [[I 0]^T, Sbar]] >= 0``. The volume objective
    maximizes ``log det`` of the projection's shape matrix ``Sbar_11``.
    """
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Abar, Bbar, Kbar = augmented_matrices(A, B, A1, A2, K1, K2)
    return _solve_linearized(Abar, Bbar, Kbar, level, margin=margin, objective=objective, fix_sector=False,
                             budget=budget, form="prop7", P_ref=np.atleast_2d(P_ref).astype(float), n_plant=A.shape[0])


def augmented_matrices(A, B, A1, A2, K1, K2):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = B.shape
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    nc = A1.shape[0]
    A2 = np.asarray(A2, dtype=float).reshape(nc, n)
    K1 = np.asarray(K1, dtype=float).reshape(m, n)
    K2 = np.asarray(K2, dtype=float).reshape(m, nc)
    Abar = np.block([[A, np.zeros((n, nc))], [A2, A1]])
    Bbar = np.vstack([B, np.zeros((nc, m))])
    Kbar = np.hstack([K1, K2])
    return Abar, Bbar, Kbar


def _solve_linearized(A, B, K, level, *, margin, objective, fix_sector, budget, form, P_ref=None, n_plant=None):
    _check_hurwitz(A, B, K)
    n, m = B.shape
    eps = default_margin(A, B, K) if margin is None else float(margin)
    Acl = A + B @ K
    lay = Layout()
    lay.add("S", "sym", (n, n))
    lay.add("E", "diag", (m, m))
    if not fix_sector:
        lay.add("Y", "full", (n, m))
    nv = lay.size

    def parts(x):
        v = lay.unpack(x)
        Y = v["S"] @ K.T if fix_sector else v["Y"]
        return v["S"], v["E"], Y

    def neg_m1(x):
        S, E, Y = parts(x)
        off = B @ E - Y
        M = np.block([[S @ Acl.T + Acl @ S, off], [off.T, -2.0 * E]])
        return -M - eps * np.eye(n + m)

    def m2(x):
        S, E, Y = parts(x)
        off = S @ K.T - Y
        return np.block([[S, off], [off.T, level**2 * np.eye(m)]])

    cons = [
        AffineLmi.from_map("M1", neg_m1, nv),
        AffineLmi.from_map("S", lambda x: parts(x)[0] - eps * np.eye(n), nv),
        AffineLmi.from_map("E", lambda x: parts(x)[1] - eps * np.eye(m), nv),
    ]
    if not fix_sector:
        cons.append(AffineLmi.from_map("M2", m2, nv))
    if P_ref is not None:
        npl = n_plant
        E1 = np.vstack([np.eye(npl), np.zeros((n - npl, npl))])
        cons.append(AffineLmi.from_map(
            "inclusion", lambda x: np.block([[P_ref, E1.T], [E1, parts(x)[0]]]), nv))

    P0, C0, d0 = _start_point(A, B, K, level)
    S0 = np.linalg.inv(P0)
    init = {"S": S0, "E": np.eye(m) / d0}
    if not fix_sector:
        init["Y"] = S0 @ C0.T
    x0 = lay.pack(**init)

    if objective == "volume":
        if P_ref is not None:
            sel = slice(0, n_plant)
            vol = AffineLmi.from_map("S11", lambda x: parts(x)[0][sel, sel], nv)
        else:
            vol = AffineLmi.from_map("S", lambda x: parts(x)[0], nv)
        obj = Objective(logdets=[vol])
    elif objective == "feasibility":
        obj = Objective()
    else:
        raise ValueError(f"unknown objective {objective!r}")
    res = solve_barrier(cons, obj, x0, budget=budget)
    S, E, Y = parts(res.x)
    S = symmetrize(S)
    P = symmetrize(np.linalg.inv(S))
    dvec = 1.0 / np.diag(E)
    C = (np.linalg.solve(S, Y)).T
    lam_m1 = sym_eig(m1_block(A, B, K, P, C, dvec))[0][-1]
    lam_m2 = sym_eig(m2_block(P, K, C, level))[0][0]
    lam_p = sym_eig(P)[0][0]
    residuals = {"M1": lam_m1, "M2": lam_m2, "P": lam_p}
    if P_ref is not None:
        npl = n_plant
        residuals["inclusion"] = sym_eig(P[:npl, :npl] - P_ref)[0][-1]
    feasible = lam_m1 < 0 and lam_m2 >= -TOL_PSD * max(1.0, level**2) and lam_p > 0
    if P_ref is not None:
        feasible = feasible and residuals["inclusion"] <= TOL_PSD * max(1.0, np.max(np.abs(P_ref)))
    if not feasible:
        raise LmiError(f"solver returned a point failing re-verification: {residuals}")
    return LmiSolution(
        form=form, P=P, C=C, D=dvec, feasible=True, residuals=residuals,
        objective_value=res.objective, margin=eps, iterations=res.iterations,
        S=S, E=E, Y=Y, global_case=fix_sector,
    )


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    form: str
    blocks: dict  # name -> (kind, extreme eigenvalue, passed)
    tol_strict: float
    tol_psd: float

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.blocks.values())

    @property
    def failed_blocks(self) -> list[str]:
        return [k for k, (_, _, ok) in self.blocks.items() if not ok]

    def lines(self) -> list[str]:
        out = []
        for name, (kind, val, ok) in self.blocks.items():
            rel = "lambda_max" if kind in ("strict", "upper") else "lambda_min"
            out.append(f"{name:<10} {kind:<7} {rel} = {val:+.6e}  {'ok' if ok else 'FAIL'}")
        out.append("verification " + ("passed" if self.passed else "FAILED: " + ", ".join(self.failed_blocks)))
        return out

    def to_dict(self) -> dict:
        return {name: {"kind": kind, "value": float(val), "passed": bool(ok)}
                for name, (kind, val, ok) in self.blocks.items()}


def verify_certificate(P, C, D, plant: PlantFD, level: float, form: str = "prop6", *,
                       reference=None, tol_strict: float = TOL_STRICT, tol_psd: float = TOL_PSD) -> VerificationReport:
    """Recompute every block of the certificate inequalities and report their extreme eigenvalues.

    ``form="prop6"`` takes the scalar-input pair ``(Pt, C)`` with scalar ``D``;
    ``form="prop3"`` takes ``P``, ``C`` and diagonal ``D``. Strict blocks pass
    when ``lambda_max <= -tol_strict``; semidefinite blocks when
    ``lambda_min >= -tol_psd``. A ``reference`` matrix adds the projection
    inclusion block ``P[:n, :n] - reference <= 0``.
    """
    A, B, K = plant.A, plant.B, plant.K
    if K is None:
        raise ValueError("plant has no gain")
    P = symmetrize(P)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    blocks = {}
    if form == "prop6":
        D = float(np.asarray(D).ravel()[0])
        lam1 = sym_eig(m1_tilde(A, B, K, P, C))[0][-1]
        lam2 = sym_eig(m2_tilde(P, K, C, D, level))[0][0]
        lamp = sym_eig(P)[0][0]
        blocks["M1_tilde"] = ("strict", lam1, lam1 <= -tol_strict)
        blocks["M2_tilde"] = ("psd", lam2, lam2 >= -tol_psd)
        blocks["P_tilde"] = ("strict+", lamp, lamp >= tol_strict)
        blocks["D"] = ("strict+", D, D > 0)
    elif form == "prop3":
        d = np.atleast_1d(np.diag(D) if np.ndim(D) == 2 else np.asarray(D, dtype=float).ravel())
        lam1 = sym_eig(m1_block(A, B, K, P, C, d))[0][-1]
        lam2 = sym_eig(m2_block(P, K, C, level))[0][0]
        lamp = sym_eig(P)[0][0]
        blocks["M1"] = ("strict", lam1, lam1 <= -tol_strict)
        blocks["M2"] = ("psd", lam2, lam2 >= -tol_psd)
        blocks["P"] = ("strict+", lamp, lamp >= tol_strict)
        blocks["D"] = ("strict+", float(d.min()), bool(np.all(d > 0)))
    else:
        raise ValueError(f"unknown certificate form {form!r}")
    if reference is not None:
        R = np.atleast_2d(reference)
        k = R.shape[0]
        Pfull = P if form == "prop3" else float(np.asarray(D).ravel()[0]) * P
        lam = sym_eig(Pfull[:k, :k] - R)[0][-1]
        blocks["inclusion"] = ("upper", lam, lam <= tol_psd)
    return VerificationReport(form, blocks, tol_strict, tol_psd)


# ---------------------------------------------------------------------------
# serialization


def _num(v):
    if isinstance(v, np.ndarray):
        return [_num(u) for u in v.tolist()] if v.ndim else float(v)
    if isinstance(v, (list, tuple)):
        return [_num(u) for u in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def solution_to_dict(sol: LmiSolution) -> dict:
    return {
        "form": sol.form,
        "P": _num(np.asarray(sol.P)),
        "C": _num(np.asarray(sol.C)),
        "D": _num(np.asarray(sol.D)),
        "margin": sol.margin,
        "residuals": {k: float(v) for k, v in sol.residuals.items()},
        "objective_value": sol.objective_value,
        "global": sol.global_case,
    }


def dump_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_num(data), indent=2, allow_nan=True) + "\n")
