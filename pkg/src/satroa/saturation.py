"""Saturation maps, the deadzone nonlinearity and the bounds used to certify them."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

SECTOR_SLACK = 1e-12


class SatVariant(Enum):
    COMPONENTWISE = "componentwise"
    NORMWISE = "normwise"
    POINTWISE = "pointwise"


@dataclass(frozen=True)
class SatKind:
    variant: SatVariant
    level: float

    def __post_init__(self):
        if not self.level > 0:
            raise ValueError("saturation level must be positive")

    def __call__(self, v):
        if self.variant is SatVariant.NORMWISE:
            return sat_norm(v, self.level)
        if self.variant is SatVariant.POINTWISE:
            return sat_pointwise(v, self.level)
        return sat(v, self.level)


def _check_level(level: float) -> float:
    level = float(level)
    if not level > 0:
        raise ValueError("saturation level must be positive")
    return level


def sat(v, level: float) -> np.ndarray:
    """Component-wise clipping to ``[-level, level]``."""
    level = _check_level(level)
    return np.clip(np.asarray(v, dtype=float), -level, level)


def deadzone(v, level: float) -> np.ndarray:
    """``sat(v) - v``; zero exactly when every component is within the level."""
    v = np.asarray(v, dtype=float)
    return sat(v, level) - v


def sat_norm(v, level: float) -> np.ndarray:
    """Scale ``v`` back onto the Euclidean ball of radius ``level`` if it lies outside."""
    level = _check_level(level)
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm <= level:
        return v.copy()
    return (level / nrm) * v


def sat_pointwise(f, level: float) -> np.ndarray:
    """L-infinity saturation of a sampled function: clip every node value."""
    return sat(f, level)


@dataclass(frozen=True)
class SectorCheck:
    value: float | None
    precondition: bool
    violated_index: int | None = None


def sector_check(z, K, C, D, level: float) -> SectorCheck:
    """Evaluate ``phi(Kz)^T D (phi(Kz) + Cz)`` when ``|((K - C) z)_j| <= level`` for all j.

    When the precondition fails the (0-based) offending input index is reported
    instead of a value. ``D`` may be given as a diagonal matrix or its diagonal.
    """
    level = _check_level(level)
    z = np.asarray(z, dtype=float)
    K = np.atleast_2d(K)
    C = np.atleast_2d(C)
    d = np.asarray(D, dtype=float)
    d = np.diag(d) if d.ndim == 2 else np.atleast_1d(d)
    if np.any(d <= 0):
        raise ValueError("D must be diagonal positive definite")
    gap = np.abs((K - C) @ z)
    bad = np.flatnonzero(gap > level)
    if bad.size:
        return SectorCheck(None, False, int(bad[0]))
    phi = deadzone(K @ z, level)
    value = float(phi @ (d * (phi + C @ z)))
    scale = 1.0 + float(np.abs(phi) @ (d * (np.abs(phi) + np.abs(C @ z))))
    if value > SECTOR_SLACK * scale:
        raise AssertionError(f"generalized sector condition violated: {value!r}")
    return SectorCheck(value, True)


def delta(b, k: float, level: float) -> np.ndarray:
    """``b(x) sat(k) - sat_inf(b(x) k)``: the gap between scalar and pointwise saturation."""
    level = _check_level(level)
    b = np.asarray(b, dtype=float)
    return b * sat(k, level) - sat_pointwise(b * k, level)


def delta_bounds(b, k: float, level: float, x) -> dict:
    """The pointwise, L2 and L-infinity bounds on :func:`delta` for samples ``b`` on grid ``x``.

    ``l2_refined`` uses the indicator of ``{|k b(x)| > level}`` and is only a
    bound when ``|k| <= level``.
    """
    from .spectral import l2_norm

    b = np.asarray(b, dtype=float)
    chi = (np.abs(k * b) > level).astype(float)
    return {
        "pointwise": level * (1.0 + np.abs(b)),
        "l2": level * l2_norm(1.0 + np.abs(b), x),
        "l2_refined": level * l2_norm(chi + np.abs(b * chi), x),
        "linf": level * (1.0 + float(np.max(np.abs(b)))),
    }
