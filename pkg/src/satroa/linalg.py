"""Dense symmetric linear algebra used to certify definiteness.

These routines back every pass/fail decision on a certificate, so they are
kept independent of the LAPACK-based solver path in :mod:`satroa.lmi`.
"""

from __future__ import annotations

import numpy as np


class NotPositiveDefinite(ArithmeticError):
    def __init__(self, pivot: int, value: float):
        super().__init__(f"not positive definite: pivot {pivot} is {value:.3e}")
        self.pivot = pivot
        self.value = value


class JacobiNotConverged(ArithmeticError):
    pass


def symmetrize(M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got {M.shape}")
    return 0.5 * (M + M.T)


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def sym_eig(M, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in ascending order and orthonormal eigenvectors as
    columns. Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol * ||M||_F``.
    """
    a = symmetrize(M).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    target = tol * scale
    for _ in range(max_sweeps):
        if _off_norm(a) < target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta != 0:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                else:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if _off_norm(a) >= target:
            raise JacobiNotConverged(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eig_extremes(M) -> tuple[float, float]:
    w, _ = sym_eig(M)
    return float(w[0]), float(w[-1])


def cholesky(M) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T = M``; raises with the failing 1-based pivot."""
    a = symmetrize(M)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0:
            raise NotPositiveDefinite(j + 1, float(d))
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def forward_solve(L, b) -> np.ndarray:
    """Solve ``L y = b`` for lower-triangular ``L`` (columns of ``b`` solved together)."""
    L = np.asarray(L, dtype=float)
    b = np.array(b, dtype=float)
    y = np.zeros_like(b)
    for i in range(L.shape[0]):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def psd_tolerance(M) -> float:
    return 1e-10 * max(1.0, float(np.max(np.abs(M))) if np.size(M) else 1.0)


def schur_psd(A, B, C, tol: float | None = None) -> bool:
    """Decide ``[[A, B^T], [B, C]] >= 0`` via the Schur complement ``A - B^T C^{-1} B``.

    ``C`` must be positive definite. The decision is cross-checked against the
    eigenvalues of the full block; the two routes may only disagree when both
    smallest eigenvalues sit inside the tolerance band.
    """
    A = symmetrize(A)
    C = symmetrize(C)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    try:
        L = cholesky(C)
    except NotPositiveDefinite as exc:
        raise ValueError("Schur complement test needs C positive definite") from exc
    W = forward_solve(L, B)
    S = A - W.T @ W
    full = np.block([[A, B.T], [B, C]])
    if tol is None:
        tol = psd_tolerance(full)
    s_min = sym_eig(S)[0][0] if S.size else np.inf
    f_min = sym_eig(full)[0][0]
    via_schur = s_min >= -tol
    via_full = f_min >= -tol
    if via_schur != via_full and max(abs(s_min), abs(f_min)) > 10 * tol * max(1.0, np.linalg.cond(C)):
        raise AssertionError(
            f"Schur complement ({s_min:.3e}) and full block ({f_min:.3e}) disagree"
        )
    return bool(via_schur)
