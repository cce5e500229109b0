"""Planar port grids, Jakes spatial covariance and repaired correlation matrices."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_SERIES_CUTOFF = 1e-4
_JITTER_START = 1e-12
_JITTER_CAP = 1e-6
_EIG_FLOOR = 1e-10
_CLAMP_BAND = 1e-12


@dataclass(frozen=True)
class PortGrid:
    """k1 x k2 ports spread uniformly over a w1 x w2 (wavelengths) aperture."""

    k1: int
    k2: int
    w1: float
    w2: float

    def __post_init__(self):
        for name in ("k1", "k2"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("w1", "w2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v!r}")
        if self.k1 > 1 and self.w1 <= 0:
            raise ValueError("a multi-port axis needs w1 > 0")
        if self.k2 > 1 and self.w2 <= 0:
            raise ValueError("a multi-port axis needs w2 > 0")

    @property
    def ports(self) -> int:
        return self.k1 * self.k2

    @property
    def area(self) -> float:
        return self.w1 * self.w2

    @classmethod
    def square(cls, ports: int, area: float) -> "PortGrid":
        """Square grid with ``ports`` = n*n ports over an ``area`` = w*w aperture."""
        n = math.isqrt(ports)
        if n * n != ports:
            raise ValueError(f"{ports} ports is not a square count")
        w = math.sqrt(area)
        return cls(n, n, w, w)


def port_index_map(grid: PortGrid, k: int) -> tuple[int, int]:
    """1-based flat index -> 1-based (row, column), row-major."""
    if not 1 <= k <= grid.ports:
        raise IndexError(f"port index {k} outside 1..{grid.ports}")
    q, r = divmod(k - 1, grid.k2)
    return q + 1, r + 1


def port_flat_index(grid: PortGrid, k1: int, k2: int) -> int:
    if not (1 <= k1 <= grid.k1 and 1 <= k2 <= grid.k2):
        raise IndexError(f"port ({k1}, {k2}) outside {grid.k1}x{grid.k2} grid")
    return (k1 - 1) * grid.k2 + k2


def spherical_bessel_j0(t):
    """sin(t)/t, with the series 1 - t^2/6 + t^4/120 near zero."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, t)
    t2 = t * t
    out = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    return out.item() if out.ndim == 0 else out


def jakes_covariance(grid: PortGrid, omega: float = 1.0) -> np.ndarray:
    """Covariance Omega * j0(2 pi d) between every pair of ports.

    d is the port separation in wavelengths; a single-port axis adds no
    displacement along that axis.
    """
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    rows, cols = np.divmod(np.arange(grid.ports), grid.k2)
    step1 = grid.w1 / (grid.k1 - 1) if grid.k1 > 1 else 0.0
    step2 = grid.w2 / (grid.k2 - 1) if grid.k2 > 1 else 0.0
    d1 = (rows[:, None] - rows[None, :]) * step1
    d2 = (cols[:, None] - cols[None, :]) * step2
    cov = omega * spherical_bessel_j0(2.0 * np.pi * np.hypot(d1, d2))
    np.fill_diagonal(cov, omega)
    return cov


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Unit-diagonal correlation matrix plus the Cholesky factor of its repaired form.

    ``repair`` is ``"none"``, ``"jitter"`` or ``"eigclip"``; ``jitter_applied``
    is the diagonal shift (or, for eigenvalue clipping, the largest absolute
    entry change) needed to make the factorisation succeed.
    """

    entries: np.ndarray
    chol: np.ndarray = field(repr=False)
    jitter_applied: float = 0.0
    repair: str = "none"

    def __post_init__(self):
        self.entries.setflags(write=False)
        self.chol.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def regularized(self) -> np.ndarray:
        return self.chol @ self.chol.T

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @classmethod
    def identity(cls, dim: int) -> "CorrelationMatrix":
        return copula_correlation(np.eye(dim))


def _try_cholesky(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def _repair(corr: np.ndarray):
    chol = _try_cholesky(corr)
    if chol is not None:
        return chol, 0.0, "none"
    eye = np.eye(corr.shape[0])
    jitter = _JITTER_START
    while jitter <= _JITTER_CAP * (1 + 1e-9):
        chol = _try_cholesky(corr + jitter * eye)
        if chol is not None:
            log.debug("cholesky succeeded with jitter %.1e", jitter)
            return chol, jitter, "jitter"
        jitter *= 10.0
    vals, vecs = np.linalg.eigh(corr)
    fixed = (vecs * np.maximum(vals, _EIG_FLOOR)) @ vecs.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    fixed = 0.5 * (fixed + fixed.T)
    np.fill_diagonal(fixed, 1.0)
    chol = _try_cholesky(fixed)
    if chol is None:  # pragma: no cover - eigen floor guarantees PD up to rounding
        chol = np.linalg.cholesky(fixed + _EIG_FLOOR * eye)
    log.debug("cholesky needed eigenvalue clipping (min eigenvalue %.3e)", vals[0])
    return chol, float(np.max(np.abs(fixed - corr))), "eigclip"


def copula_correlation(cov) -> CorrelationMatrix:
    """Normalise a covariance to unit diagonal and attach a usable Cholesky factor."""
    cov = np.array(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * max(1.0, np.abs(cov).max())):
        raise ValueError("covariance is not symmetric")
    var = np.diag(cov)
    if not np.all(var > 0):
        raise ValueError("covariance needs a positive diagonal")
    sd = np.sqrt(var)
    corr = cov / np.outer(sd, sd)
    corr = 0.5 * (corr + corr.T)
    worst = np.abs(corr).max()
    if worst > 1 + _CLAMP_BAND:
        raise ValueError(f"normalised entry {worst!r} lies outside [-1, 1]")
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    chol, jitter, how = _repair(corr)
    return CorrelationMatrix(entries=corr, chol=chol, jitter_applied=jitter, repair=how)
