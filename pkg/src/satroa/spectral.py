"""Dirichlet spectrum of ``d^2/dx^2 + c(x)`` on ``(0, L)`` and the modal control system.

All sampled functions live on a uniform grid covering ``[0, L]`` and are
integrated with composite Simpson weights, so inner products, norms and the
modal coefficients ``b_jk = <b_k, e_j>`` are all computed the same way.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal

GRID_POINTS = 2001
TRUNCATION = 50
ETA_FRACTION = 0.999


class SpectrumError(ValueError):
    pass


class ResolutionError(SpectrumError):
    pass


class TruncationError(SpectrumError):
    pass


class GridMismatchError(SpectrumError):
    pass


# ---------------------------------------------------------------------------
# quadrature on uniform grids


def uniform_grid(length: float, points: int = GRID_POINTS) -> np.ndarray:
    if points < 3:
        raise ResolutionError(f"grid needs at least 3 points, got {points}")
    return np.linspace(0.0, float(length), int(points))


def simpson_weights(points: int, h: float) -> np.ndarray:
    """Quadrature weights ``w`` with ``sum(w * f) ~ int f`` on a uniform grid.

    Odd point counts use composite Simpson. Even counts close the last three
    intervals with Simpson's 3/8 rule.
    """
    if points < 3:
        raise ResolutionError(f"Simpson quadrature needs at least 3 points, got {points}")
    w = np.zeros(points)
    if points % 2 == 1:
        w[0:-1:2] += 1.0
        w[1::2] += 4.0
        w[2::2] += 1.0
        return w * (h / 3.0)
    m = points - 3  # points in the Simpson part (odd, possibly 1)
    if m >= 3:
        w[: m - 1 : 2] += 1.0
        w[1 : m - 1 : 2] += 4.0
        w[2:m:2] += 1.0
        w[:m] *= h / 3.0
    w[m - 1 : m + 3] += np.array([1.0, 3.0, 3.0, 1.0]) * (3.0 * h / 8.0)
    return w


def grid_weights(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = (x[-1] - x[0]) / (len(x) - 1)
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(x[-1]))):
        raise GridMismatchError("sampled functions must live on a uniform grid")
    return simpson_weights(len(x), h)


def integrate(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Integrate samples over the last axis."""
    return np.asarray(f) @ grid_weights(x)


def inner(f: np.ndarray, g: np.ndarray, x: np.ndarray) -> float:
    return float(integrate(np.asarray(f) * np.asarray(g), x))


def l2_norm(f: np.ndarray, x: np.ndarray) -> float:
    return float(np.sqrt(max(integrate(np.asarray(f) ** 2, x), 0.0)))


# ---------------------------------------------------------------------------
# problem data


@dataclass(frozen=True)
class ModeShape:
    """Input shape given as a finite combination ``sum_j c_j e_j`` of eigenfunctions."""

    coeffs: tuple[tuple[int, float], ...]

    def __post_init__(self):
        for j, _ in self.coeffs:
            if int(j) < 1:
                raise SpectrumError(f"mode indices start at 1, got {j}")

    @classmethod
    def of(cls, *modes: int, weights: Sequence[float] | None = None) -> "ModeShape":
        weights = [1.0] * len(modes) if weights is None else list(weights)
        return cls(tuple((int(j), float(c)) for j, c in zip(modes, weights)))

    @classmethod
    def parse(cls, text: str) -> "ModeShape":
        """Parse ``"e1 + e2"``, ``"2*e1 - 0.5*e3"`` or ``"mode 3"``."""
        src = text.replace(" ", "").replace("mode", "e")
        if not src:
            raise SpectrumError("empty mode expression")
        terms = re.findall(r"([+-]?)(?:((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\*)?e(\d+)", src)
        rebuilt = "".join(f"{s}{c + '*' if c else ''}e{j}" for s, c, j in terms)
        if rebuilt.lstrip("+") != src.lstrip("+"):
            raise SpectrumError(f"cannot parse mode expression {text!r}")
        out = []
        for sign, coef, j in terms:
            c = float(coef) if coef else 1.0
            out.append((int(j), -c if sign == "-" else c))
        return cls(tuple(out))

    @property
    def max_mode(self) -> int:
        return max(j for j, _ in self.coeffs)

    def sample(self, eigfuncs: np.ndarray) -> np.ndarray:
        if self.max_mode > len(eigfuncs):
            raise TruncationError(
                f"input uses mode {self.max_mode} but only {len(eigfuncs)} eigenfunctions are available"
            )
        out = np.zeros(eigfuncs.shape[1])
        for j, c in self.coeffs:
            out = out + c * eigfuncs[j - 1]
        return out

    def __str__(self) -> str:
        text = "".join(f" {'-' if c < 0 else '+'} {abs(c)!r}*e{j}" for j, c in self.coeffs)
        return text[3:] if text.startswith(" +") else "-" + text[3:]


InputShape = Union[ModeShape, np.ndarray]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OperatorSpec:
    """PDE data: domain length, reaction coefficient, input shapes, saturation level.

    ``reaction`` is a float or an array sampled on ``grid``; sampled entries of
    ``inputs`` share the same grid. ``grid`` defaults to ``GRID_POINTS`` uniform
    points on ``[0, length]``.
    """

    length: float
    reaction: float | np.ndarray
    inputs: tuple = ()
    sat_level: float = 1.0
    grid: np.ndarray | None = None

    def __post_init__(self):
        if not self.length > 0:
            raise SpectrumError("domain length must be positive")
        if not self.sat_level > 0:
            raise SpectrumError("saturation level must be positive")
        if len(self.inputs) < 1:
            raise SpectrumError("at least one input shape is required")
        grid = self.grid
        if grid is None:
            grid = uniform_grid(self.length, GRID_POINTS)
        grid = _frozen(grid)
        if len(grid) < 3:
            raise ResolutionError("grid needs at least 3 points")
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - self.length) > 1e-9 * self.length:
            raise GridMismatchError("grid must cover [0, L]")
        grid_weights(grid)
        object.__setattr__(self, "grid", grid)
        if not np.isscalar(self.reaction):
            c = _frozen(self.reaction)
            if c.shape != grid.shape:
                raise GridMismatchError("reaction samples do not match the grid")
            object.__setattr__(self, "reaction", c)
        inputs = []
        for b in self.inputs:
            if isinstance(b, ModeShape):
                inputs.append(b)
            else:
                b = _frozen(b)
                if b.shape != grid.shape:
                    raise GridMismatchError("input samples do not match the grid")
                inputs.append(b)
        object.__setattr__(self, "inputs", tuple(inputs))

    @property
    def m(self) -> int:
        return len(self.inputs)

    @property
    def constant_reaction(self) -> bool:
        if np.isscalar(self.reaction):
            return True
        return bool(np.ptp(self.reaction) == 0.0)

    @property
    def reaction_constant(self) -> float:
        if not self.constant_reaction:
            raise SpectrumError("analytic form unavailable, use numeric_spectrum")
        return float(self.reaction) if np.isscalar(self.reaction) else float(self.reaction[0])

    def reaction_on(self, x: np.ndarray) -> np.ndarray:
        if np.isscalar(self.reaction):
            return np.full(len(x), float(self.reaction))
        if len(x) == len(self.grid) and np.allclose(x, self.grid):
            return np.array(self.reaction)
        return np.interp(x, self.grid, self.reaction)


@dataclass(frozen=True)
class ModalSystem:
    """Truncated spectral data of the operator plus the modal input matrix.

    ``n`` and ``eta`` stay ``None`` until :func:`select_n` succeeds, which
    requires at least one computed eigenvalue beyond the retained ones.
    """

    eigvals: np.ndarray
    grid: np.ndarray
    eigfuncs: np.ndarray | None = None
    n: int | None = None
    eta: float | None = None
    Bmat: np.ndarray | None = None
    source: str = "analytic"
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> int:
        return len(self.eigvals)

    @property
    def length(self) -> float:
        return float(self.grid[-1])

    @property
    def already_stable(self) -> bool:
        return self.n == 0

    def _need_n(self) -> int:
        if self.n is None:
            raise TruncationError("number of retained modes not set; call select_n first")
        return self.n

    @property
    def Amat(self) -> np.ndarray:
        return np.diag(self.eigvals[: self._need_n()])

    @property
    def Bn(self) -> np.ndarray:
        return self._need_B()[: self._need_n()]

    @property
    def Btail(self) -> np.ndarray:
        return self._need_B()[self._need_n():]

    def _need_B(self) -> np.ndarray:
        if self.Bmat is None:
            raise SpectrumError("input matrix not projected; call project_inputs first")
        return self.Bmat

    def truncate(self, N: int) -> "ModalSystem":
        if N > self.N:
            raise TruncationError(f"requested {N} modes but only {self.N} are available")
        if self.n is not None and N < self.n:
            raise TruncationError(f"cannot truncate below the {self.n} retained modes")
        return replace(
            self,
            eigvals=_frozen(self.eigvals[:N]),
            eigfuncs=None if self.eigfuncs is None else _frozen(self.eigfuncs[:N]),
            Bmat=None if self.Bmat is None else _frozen(self.Bmat[:N]),
        )

    def field(self, coeffs: np.ndarray) -> np.ndarray:
        """Reconstruct ``sum_j w_j e_j(x)`` for coefficient rows ``(..., N')``."""
        if self.eigfuncs is None:
            raise SpectrumError("eigenfunction samples are not available")
        coeffs = np.asarray(coeffs, dtype=float)
        k = coeffs.shape[-1]
        return coeffs @ self.eigfuncs[:k]

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """Project samples ``f`` (last axis on the grid) onto the eigenfunctions."""
        if self.eigfuncs is None:
            raise SpectrumError("eigenfunction samples are not available")
        w = grid_weights(self.grid)
        return (np.asarray(f) * w) @ self.eigfuncs.T

    def to_dict(self) -> dict:
        return {
            "eigvals": [float(v) for v in self.eigvals],
            "Bmat": None if self.Bmat is None else self.Bmat.tolist(),
            "n": self.n,
            "eta": self.eta,
            "grid": {"length": self.length, "points": len(self.grid)},
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModalSystem":
        g = data["grid"]
        return cls(
            eigvals=_frozen(data["eigvals"]),
            grid=_frozen(uniform_grid(g["length"], g["points"])),
            n=data.get("n"),
            eta=data.get("eta"),
            Bmat=None if data.get("Bmat") is None else _frozen(data["Bmat"]),
            source=data.get("source", "file"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ModalSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# operations


def analytic_spectrum(spec: OperatorSpec, N: int) -> ModalSystem:
    """Closed-form spectrum for constant reaction: ``lam_j = c - (j pi / L)^2``.

    ``n`` and ``eta`` are set from the closed form whenever ``N > n``.
    """
    if N < 1:
        raise SpectrumError("truncation order must be at least 1")
    c = spec.reaction_constant
    L = spec.length
    j = np.arange(1, N + 1)
    lam = c - (np.pi * j / L) ** 2
    x = spec.grid
    e = np.sqrt(2.0 / L) * np.sin(np.outer(j, x) * np.pi / L)
    ms = ModalSystem(eigvals=_frozen(lam), grid=x, eigfuncs=_frozen(e), source="analytic")
    return _default_n(ms)


def _fd_matrix(c: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    diag = -2.0 / h**2 + c[1:-1]
    off = np.full(len(diag) - 1, 1.0 / h**2)
    return diag, off


def numeric_spectrum(spec: OperatorSpec, N: int, grid_points: int = GRID_POINTS) -> ModalSystem:
    """Second-order finite-difference spectrum for a general bounded ``c(x)``.

    The Dirichlet rows are removed, so the matrix acts on the ``grid_points - 2``
    interior nodes. Even point counts are bumped by one to keep Simpson exact on
    the whole grid. Eigenfunctions have unit L2 norm and ``e_j'(0) > 0``.
    """
    if N < 1:
        raise SpectrumError("truncation order must be at least 1")
    if grid_points < 3 * N:
        raise ResolutionError(f"grid too coarse: {grid_points} points for {N} modes (need >= {3 * N})")
    if grid_points % 2 == 0:
        grid_points += 1
    if len(spec.grid) == grid_points:
        x = np.array(spec.grid)
    else:
        x = uniform_grid(spec.length, grid_points)
    c = spec.reaction_on(x)
    if not np.all(np.isfinite(c)):
        raise SpectrumError("reaction coefficient must be bounded")
    h = x[1] - x[0]
    diag, off = _fd_matrix(c, h)
    M = len(diag)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(M - N, M - 1))
    vals = vals[::-1]
    vecs = vecs[:, ::-1].T
    e = np.zeros((N, len(x)))
    e[:, 1:-1] = vecs
    w = simpson_weights(len(x), h)
    e /= np.sqrt((e**2) @ w)[:, None]
    e *= np.where(e[:, 1] < 0, -1.0, 1.0)[:, None]
    ms = ModalSystem(eigvals=_frozen(vals), grid=_frozen(x), eigfuncs=_frozen(e), source="numeric")
    return _default_n(ms)


def _default_n(ms: ModalSystem) -> ModalSystem:
    try:
        return select_n(ms, 0.0)
    except TruncationError:
        return ms


def project_inputs(ms: ModalSystem, spec: OperatorSpec) -> ModalSystem:
    """Fill ``Bmat[j, k] = <b_k, e_j>`` by quadrature."""
    Bsamp = sample_inputs(ms, spec)
    x = ms.grid
    w = grid_weights(x)
    B = (ms.eigfuncs * w) @ Bsamp.T
    bnorm = np.sqrt((Bsamp**2) @ w)
    enorm = np.sqrt((ms.eigfuncs**2) @ w)
    bound = np.outer(enorm, bnorm)
    if np.any(np.abs(B) > bound * (1 + 1e-9) + 1e-12):
        raise SpectrumError("modal coefficients violate the Cauchy-Schwarz bound")
    return replace(ms, Bmat=_frozen(B))


def sample_inputs(ms: ModalSystem, spec: OperatorSpec) -> np.ndarray:
    """Input shapes ``b_k`` sampled on the eigenfunction grid, one row per input."""
    if ms.eigfuncs is None:
        raise SpectrumError("eigenfunction samples are required to project inputs")
    x = ms.grid
    samples = []
    for b in spec.inputs:
        if isinstance(b, ModeShape):
            samples.append(b.sample(ms.eigfuncs))
        else:
            if len(b) != len(x) or not np.allclose(spec.grid, x):
                raise GridMismatchError("input samples and eigenfunctions use different grids")
            samples.append(np.asarray(b))
    return np.array(samples)


def select_n(ms: ModalSystem, decay_target: float = 0.0) -> ModalSystem:
    """Retain the modes with ``lam_j >= -decay_target`` and set the tail margin."""
    beta = float(decay_target)
    if beta < 0:
        raise SpectrumError("decay target must be nonnegative")
    lam = np.asarray(ms.eigvals)
    n = int(np.count_nonzero(lam >= -beta))
    if n >= ms.N:
        raise TruncationError(
            f"all {ms.N} computed eigenvalues are >= {-beta:g}; extend the truncation"
        )
    gap = -lam[n] - beta
    eta = beta + ETA_FRACTION * gap
    return replace(ms, n=n, eta=float(eta))


def build_modal_system(spec: OperatorSpec, N: int = TRUNCATION, *, numeric: bool | None = None,
                       grid_points: int | None = None, decay_target: float = 0.0) -> ModalSystem:
    """Spectrum, input projection and mode selection in one call."""
    if numeric is None:
        numeric = not spec.constant_reaction
    if numeric:
        ms = numeric_spectrum(spec, N, grid_points or len(spec.grid))
    else:
        ms = analytic_spectrum(spec, N)
    ms = project_inputs(ms, spec)
    return select_n(ms, decay_target)


# ---------------------------------------------------------------------------
# sampled-function CSV


def read_sampled_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    xs, vs = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "value"]:
            raise SpectrumError(f"{path}: expected header 'x,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                xs.append(float(row[0]))
                vs.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise SpectrumError(f"{path}:{lineno}: bad row {row!r}") from exc
    return np.array(xs), np.array(vs)


def write_sampled_csv(path: str | Path, x: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("x,value\n")
        for a, b in zip(x, values):
            fh.write(f"{a:.17g},{b:.17g}\n")
