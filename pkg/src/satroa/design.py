"""Stabilizability checks and single-input pole placement for the unstable modal plant."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


class DesignError(ValueError):
    pass


class UnstabilizableError(DesignError):
    pass


@dataclass(frozen=True)
class PlantFD:
    """Finite-dimensional plant ``z' = A z + B sat(u)`` with optional gain ``u = K z``."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray | None = None
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
            raise DesignError(f"inconsistent plant dimensions A{A.shape}, B{B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.K is not None:
            K = np.atleast_2d(np.asarray(self.K, dtype=float))
            if K.shape != (B.shape[1], A.shape[0]):
                raise DesignError(f"gain has shape {K.shape}, expected {(B.shape[1], A.shape[0])}")
            object.__setattr__(self, "K", K)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"w{j + 1}" for j in range(A.shape[0])))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.A == np.diag(np.diag(self.A))))

    def with_gain(self, K) -> "PlantFD":
        return replace(self, K=K)

    def closed_loop(self) -> np.ndarray:
        if self.K is None:
            raise DesignError("no gain attached to the plant")
        return self.A + self.B @ self.K


def hurwitz(M) -> tuple[bool, float]:
    """Whether every eigenvalue of ``M`` has negative real part, and the spectral abscissa."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return True, -np.inf
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("eigenvalue computation failed") from exc
    abscissa = float(np.max(ev.real))
    return abscissa < 0, abscissa


def stabilizable(p: PlantFD) -> tuple[bool, str]:
    """Stabilizability of ``(A, B)`` with a diagnostic naming the failing mode.

    Diagonal single-input plants use the direct criterion (input coefficient
    above round-off on every mode, distinct eigenvalues); anything else goes
    through the Hautus test on the closed right half-plane.
    """
    A, B = p.A, p.B
    n = p.n
    if n == 0:
        return True, "no unstable modes"
    if p.is_diagonal and p.m == 1:
        lam = np.diag(A)
        # Projections onto orthogonal modes come back as round-off, not exact zeros.
        tiny = 1e-10 * max(1.0, float(np.max(np.abs(B))))
        for j in range(n):
            if abs(B[j, 0]) <= tiny:
                return False, f"mode {j + 1} unreachable"
        for j in range(n):
            for k in range(j + 1, n):
                if lam[j] == lam[k]:
                    return False, f"modes {j + 1} and {k + 1} share eigenvalue {lam[j]:g}"
        return True, "all modes reachable with distinct eigenvalues"
    ev = np.linalg.eigvals(A)
    scale = max(1.0, np.linalg.norm(A), np.linalg.norm(B))
    for j, mu in enumerate(ev):
        if mu.real < 0:
            continue
        H = np.hstack([mu * np.eye(n) - A, B.astype(complex)])
        if np.linalg.matrix_rank(H, tol=1e-10 * scale) < n:
            return False, f"eigenvalue {mu:.6g} not reachable (Hautus rank deficient)"
    return True, "Hautus test passed"


def parse_poles(poles: Sequence) -> np.ndarray:
    """Validate a pole list: closed under conjugation and in the open left half-plane."""
    p = np.asarray([complex(v) for v in poles])
    remaining = list(p)
    for v in p:
        if v not in remaining:
            continue
        remaining.remove(v)
        if abs(v.imag) > 0:
            match = [w for w in remaining if abs(w - np.conj(v)) <= 1e-12 * max(1.0, abs(v))]
            if not match:
                raise DesignError(f"pole {v} has no conjugate partner")
            remaining.remove(match[0])
    if np.any(p.real >= 0):
        raise DesignError("target poles must lie in the open left half-plane")
    return p


def place_poles(p: PlantFD, poles: Sequence) -> np.ndarray:
    """Single-input gain ``K`` (1 x n) with ``spec(A + B K)`` equal to ``poles``.

    For diagonal ``A = diag(lam)`` the characteristic polynomial of ``A + B K``
    is ``prod(s - lam_i) - sum_j b_j k_j prod_{i != j}(s - lam_i)``; matching it
    to the target polynomial ``q`` at ``s = lam_j`` gives
    ``k_j = -q(lam_j) / (b_j prod_{i != j}(lam_j - lam_i))``.
    Other plants use Ackermann's formula.
    """
    if p.m != 1:
        raise DesignError("pole placement is implemented for a single input only")
    target = parse_poles(poles)
    n = p.n
    if len(target) != n:
        raise DesignError(f"need {n} poles, got {len(target)}")
    ok, why = stabilizable(p)
    if not ok:
        raise UnstabilizableError(why)
    q = np.real_if_close(np.poly(target), tol=1000).real
    b = p.B[:, 0]
    if p.is_diagonal:
        lam = np.diag(p.A)
        K = np.empty(n)
        for j in range(n):
            others = np.delete(lam, j)
            K[j] = -np.polyval(q, lam[j]) / (b[j] * np.prod(lam[j] - others))
    else:
        ctrb = np.column_stack([np.linalg.matrix_power(p.A, k) @ b for k in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise UnstabilizableError("pair (A, B) is not controllable; poles cannot be assigned")
        qA = sum(c * np.linalg.matrix_power(p.A, n - i) for i, c in enumerate(q))
        en = np.zeros(n)
        en[-1] = 1.0
        K = -np.linalg.solve(ctrb.T, en) @ qA
    K = K[None, :]
    got = np.poly(p.A + p.B @ K)
    if not np.allclose(got, q, rtol=1e-8, atol=1e-8 * max(1.0, np.max(np.abs(q)))):
        raise DesignError("pole placement lost accuracy; characteristic polynomial mismatch")
    return K
