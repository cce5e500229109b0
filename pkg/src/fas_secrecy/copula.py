"""Gaussian copula machinery and best-port gain distributions.

The multivariate normal CDF is estimated with Genz's separation-of-variables
transform over a randomly shifted Richtmyer lattice.  Variables are
prioritised Genz-Bretz style and the Cholesky factor is pivoted, so
rank-deficient correlation matrices (dense port grids) reduce to a
lower-dimensional integral instead of an ill-conditioned one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from fas_secrecy.geometry import CorrelationMatrix, PortGrid, copula_correlation

log = logging.getLogger(__name__)

U_CLAMP = 1e-15
RANK_TOL = 1e-12
_COEF_EPS = 1e-10
_NEGLIGIBLE = 1e-13
_SHIFTS = 8
_FIRST_BATCH = 512
_MAX_PER_SHIFT = 2**20
_DERIV_MAX_PER_SHIFT = 2**16
_CHUNK = 2**14
_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------- normal

def std_normal_cdf(x):
    """Phi(x) through the complementary error function."""
    out = 0.5 * special.erfc(-np.asarray(x, dtype=float) / _SQRT2)
    return out.item() if np.ndim(out) == 0 else out


# Acklam's rational approximation, relative error ~1.2e-9 before polishing.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam_lower(p):
    """Rational approximation for p in (0, 0.5]."""
    out = np.empty_like(p)
    tail = p < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        out[tail] = num / den
    mid = ~tail
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = num / den
    return out


def std_normal_quantile(u):
    """Inverse of Phi on (0, 1).

    Rational approximation on the lower half followed by one Newton step
    against the erfc-based CDF; the upper half uses antisymmetry.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0) | ~(arr < 1)):
        raise ValueError("normal quantile needs 0 < u < 1")
    flat = np.atleast_1d(arr).astype(float)
    upper = flat > 0.5
    p = np.where(upper, 1.0 - flat, flat)
    x = _acklam_lower(p)
    x = x - (0.5 * special.erfc(-x / _SQRT2) - p) / (np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi))
    x = np.where(upper, -x, x)
    return float(x[0]) if arr.ndim == 0 else x.reshape(arr.shape)


# ------------------------------------------------------------- marginals

def rayleigh_gain_cdf(r, eta):
    """CDF 1 - exp(-eta r) of the power gain |h|^2 under Rayleigh fading."""
    out = -np.expm1(-eta * np.asarray(r, dtype=float))
    return out.item() if np.ndim(out) == 0 else out


def rayleigh_gain_pdf(r, eta):
    out = eta * np.exp(-eta * np.asarray(r, dtype=float))
    return out.item() if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MarginalModel:
    """One-port gain distribution.  Only the Rayleigh/exponential kind ships."""

    kind: str = "rayleigh_exponential"
    eta: float = 1.0

    def __post_init__(self):
        if self.kind != "rayleigh_exponential":
            raise ValueError(f"unsupported marginal kind {self.kind!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta!r}")

    def cdf(self, r):
        return rayleigh_gain_cdf(r, self.eta)

    def sf(self, r):
        out = np.exp(-self.eta * np.asarray(r, dtype=float))
        return out.item() if np.ndim(out) == 0 else out

    def pdf(self, r):
        return rayleigh_gain_pdf(r, self.eta)

    def log_pdf(self, r):
        return math.log(self.eta) - self.eta * np.asarray(r, dtype=float)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p < 0) | (p >= 1)):
            raise ValueError("quantile needs 0 <= p < 1")
        out = -np.log1p(-p) / self.eta
        return out.item() if out.ndim == 0 else out

    def mean(self) -> float:
        return 1.0 / self.eta

    def normal_score(self, r):
        """Phi^{-1}(F(r)) computed from whichever tail keeps full precision.

        F(r) is clamped to [U_CLAMP, 1 - U_CLAMP] first.
        """
        r = np.asarray(r, dtype=float)
        lower = np.clip(self.cdf(r), U_CLAMP, 1 - U_CLAMP)
        upper = np.clip(self.sf(r), U_CLAMP, 1 - U_CLAMP)
        use_upper = upper < 0.5
        out = np.where(use_upper, -std_normal_quantile(np.where(use_upper, upper, 0.5)),
                       std_normal_quantile(np.where(use_upper, 0.5, lower)))
        return out.item() if out.ndim == 0 else out


# --------------------------------------------------------- MVN estimator

@dataclass(frozen=True)
class MvnEstimate:
    """Estimate of a normal/copula probability with its Monte Carlo error.

    ``converged`` is False when the sample cap was reached before the
    requested tolerance.
    """

    value: float
    std_error: float
    samples_used: int
    converged: bool = True

    def __float__(self):
        return self.value


def _primes(n: int) -> np.ndarray:
    if n <= 0:
        return np.zeros(0, dtype=int)
    limit = max(16, int(n * (math.log(n + 1) + math.log(math.log(n + 3)))) + 10)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, math.isqrt(limit) + 1):
        if sieve[i]:
            sieve[i * i::i] = False
    return np.flatnonzero(sieve)[:n]


def _richtmyer(n: int) -> np.ndarray:
    return np.sqrt(_primes(n).astype(float)) % 1.0


@dataclass
class _Plan:
    """Pivoted, possibly rank-deficient factor with per-column constraint groups."""

    rank: int
    rows: list          # rows constraining each integration variable
    coefs: list         # C[rows, :j+1] for each column j
    limits: list        # upper limits b for those rows
    always_zero: bool = False


def _plan(corr: np.ndarray, b: np.ndarray) -> _Plan:
    k = corr.shape[0]
    c = np.zeros((k, k))
    perm = np.arange(k)
    bb = b.copy()
    d = np.diag(corr).astype(float).copy()
    ybar = np.zeros(k)
    rank = k
    for j in range(k):
        cand = np.arange(j, k)
        ok = d[cand] > RANK_TOL
        if not ok.any():
            rank = j
            break
        cand = cand[ok]
        mu = c[cand, :j] @ ybar[:j]
        lim = (bb[cand] - mu) / np.sqrt(d[cand])
        pick = cand[int(np.argmin(lim))]
        if pick != j:
            for arr in (perm, bb, d):
                arr[[j, pick]] = arr[[pick, j]]
            c[[j, pick], :j] = c[[pick, j], :j]
        piv = math.sqrt(d[j])
        c[j, j] = piv
        rest = np.arange(j + 1, k)
        if rest.size:
            c[rest, j] = (corr[perm[rest], perm[j]] - c[rest, :j] @ c[j, :j]) / piv
            d[rest] -= c[rest, j] ** 2
        top = (bb[j] - c[j, :j] @ ybar[:j]) / piv
        if np.isfinite(top):
            # mean of a standard normal truncated to (-inf, top]
            ybar[j] = -math.exp(-0.5 * top * top - 0.5 * math.log(2 * math.pi) - special.log_ndtr(top))
        else:
            ybar[j] = 0.0 if top > 0 else -1e300
    groups = [[j] for j in range(rank)]
    always_zero = False
    for i in range(rank, k):
        nz = np.flatnonzero(np.abs(c[i, :rank]) > _COEF_EPS)
        if nz.size == 0:
            # degenerate coordinate identically 0: constraint 0 <= b_i
            if bb[i] < 0:
                always_zero = True
            continue
        groups[int(nz[-1])].append(i)
    rows = [np.asarray(g) for g in groups]
    coefs = [c[g, : j + 1].copy() for j, g in enumerate(rows)]
    limits = [bb[g].copy() for g in rows]
    return _Plan(rank=rank, rows=rows, coefs=coefs, limits=limits, always_zero=always_zero)


def _genz_batch(plan: _Plan, w: np.ndarray) -> np.ndarray:
    """Integrand values for uniform points ``w`` of shape (n, rank - 1)."""
    n = w.shape[0]
    y = np.empty((n, plan.rank))
    f = np.ones(n)
    for j in range(plan.rank):
        cf = plan.coefs[j]
        lead = cf[:, j]
        s = plan.limits[j][None, :] - (y[:, :j] @ cf[:, :j].T if j else 0.0)
        bound = s / lead[None, :]
        pos = lead > 0
        hi = bound[:, pos].min(axis=1) if pos.all() else (
            bound[:, pos].min(axis=1) if pos.any() else np.full(n, np.inf))
        if pos.all():
            lo_cdf = np.zeros(n)
        else:
            lo_cdf = special.ndtr(bound[:, ~pos].max(axis=1))
        hi_cdf = special.ndtr(hi)
        e = np.clip(hi_cdf - lo_cdf, 0.0, 1.0)
        f *= e
        if j < plan.rank - 1:
            p = np.clip(lo_cdf + w[:, j] * e, 1e-300, 1.0 - 1e-16)
            y[:, j] = special.ndtri(p)
    return f


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        return np.random.SeedSequence([int(s) % 2**64 for s in seed])
    return np.random.SeedSequence(int(seed) % 2**64)


def mvn_cdf(R: CorrelationMatrix, point, rel_tol: float = 1e-3, seed=0,
            max_samples: int = _MAX_PER_SHIFT) -> MvnEstimate:
    """P(X <= point) for X ~ N(0, R), R a correlation matrix.

    Stops once the standard error falls below ``rel_tol * max(value, 1e-3)``
    or ``max_samples`` lattice points per shift have been used.
    Deterministic for a fixed ``seed``.
    """
    b = np.asarray(point, dtype=float).ravel()
    if b.size != R.dim:
        raise ValueError(f"point has length {b.size}, correlation matrix is {R.dim}x{R.dim}")
    if not 1e-6 <= rel_tol <= 1e-2:
        raise ValueError(f"rel_tol must lie in [1e-6, 1e-2], got {rel_tol!r}")
    if np.any(np.isnan(b)):
        raise ValueError("point contains NaN")
    if np.any(b == -np.inf):
        return MvnEstimate(0.0, 0.0, 0)
    corr = R.regularized if R.repair == "eigclip" else R.entries
    plan = _plan(corr, b)
    if plan.always_zero:
        return MvnEstimate(0.0, 0.0, 0)
    if plan.rank == 1:
        return MvnEstimate(float(_genz_batch(plan, np.zeros((1, 0)))[0]), 0.0, 1)

    run = _LatticeRun(plan, seed)
    batch = _FIRST_BATCH
    while True:
        run.extend(batch)
        means = run.means
        value = float(means.mean())
        err = float(means.std(ddof=1) / math.sqrt(_SHIFTS))
        if err <= rel_tol * max(value, 1e-3):
            return MvnEstimate(value, err, run.done * _SHIFTS, True)
        if run.done >= max_samples:
            log.warning("mvn_cdf hit the sample cap (%d per shift): value %.6g +- %.2g",
                        run.done, value, err)
            return MvnEstimate(value, err, run.done * _SHIFTS, False)
        batch = min(run.done, max_samples - run.done)


class _LatticeRun:
    """Randomly shifted rank-1 lattice sums for one plan, extendable in place.

    Two runs with the same seed and dimension visit the same points, which
    is what makes common-random-number differences cheap.
    """

    def __init__(self, plan: _Plan, seed):
        dims = plan.rank - 1
        rng = np.random.Generator(np.random.Philox(_seed_sequence(seed)))
        self.plan = plan
        self.shifts = rng.random((_SHIFTS, dims))
        self.alpha = _richtmyer(dims)
        self.sums = np.zeros(_SHIFTS)
        self.done = 0

    def extend(self, n: int):
        # all shifts go through the integrand together; rows are shift-major
        step = max(_CHUNK // _SHIFTS, 1)
        for lo in range(self.done, self.done + n, step):
            hi = min(lo + step, self.done + n)
            base = np.outer(np.arange(lo + 1, hi + 1), self.alpha)
            pts = base[None, :, :] + self.shifts[:, None, :]
            pts -= np.floor(pts)
            pts *= 2.0
            pts -= 1.0
            np.abs(pts, out=pts)
            vals = _genz_batch(self.plan, pts.reshape(-1, base.shape[1]))
            self.sums += vals.reshape(_SHIFTS, hi - lo).sum(axis=1)
        self.done += n

    @property
    def means(self) -> np.ndarray:
        return self.sums / self.done


# ---------------------------------------------------------------- copula

def gaussian_copula_cdf(u, R: CorrelationMatrix, rel_tol: float = 1e-3, seed=0) -> MvnEstimate:
    """C_R(u) = Phi_R(Phi^{-1}(u_1), ..., Phi^{-1}(u_d)).

    Coordinates equal to 1 are dropped exactly, so the boundary identities
    hold without estimator noise.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.size != R.dim:
        raise ValueError(f"u has length {u.size}, correlation matrix is {R.dim}x{R.dim}")
    if np.any((u < 0) | (u > 1)) or np.any(np.isnan(u)):
        raise ValueError("copula arguments must lie in [0, 1]")
    if np.any(u == 0):
        return MvnEstimate(0.0, 0.0, 0)
    keep = np.flatnonzero(u < 1)
    if keep.size == 0:
        return MvnEstimate(1.0, 0.0, 0)
    if keep.size == 1:
        return MvnEstimate(float(u[keep[0]]), 0.0, 0)
    if keep.size < u.size:
        R = copula_correlation(R.entries[np.ix_(keep, keep)])
        u = u[keep]
    z = std_normal_quantile(np.clip(u, U_CLAMP, 1 - U_CLAMP))
    return mvn_cdf(R, z, rel_tol=rel_tol, seed=seed)


def _copula_log_density_scores(z: np.ndarray, R: CorrelationMatrix) -> float:
    if not np.all(np.diag(R.chol) > 0):
        raise ValueError("correlation matrix is not positive definite after regularisation")
    v = np.linalg.solve(R.chol, z) if R.dim > 1 else z / R.chol[0, 0]
    quad = float(v @ v) - float(z @ z)
    return -0.5 * quad - 0.5 * R.log_det


def gaussian_copula_log_density(u, R: CorrelationMatrix) -> float:
    u = np.asarray(u, dtype=float).ravel()
    if u.size != R.dim:
        raise ValueError(f"u has length {u.size}, correlation matrix is {R.dim}x{R.dim}")
    if np.any(~(u > 0) | ~(u < 1)):
        raise ValueError("copula density needs every coordinate strictly inside (0, 1)")
    return _copula_log_density_scores(std_normal_quantile(u), R)


def gaussian_copula_density(u, R: CorrelationMatrix) -> float:
    """exp(-z'(R^-1 - I)z / 2) / sqrt(det R) with z the normal scores of u."""
    return math.exp(gaussian_copula_log_density(u, R))


# ------------------------------------------------------ best-port gains

def _check_dims(grid: PortGrid, R: CorrelationMatrix):
    if grid.ports != R.dim:
        raise ValueError(f"grid has {grid.ports} ports but correlation matrix is {R.dim}x{R.dim}")


def fas_gain_cdf(r: float, grid: PortGrid, marginal: MarginalModel, R: CorrelationMatrix,
                 rel_tol: float = 1e-3, seed=0) -> MvnEstimate:
    """P(max_k g_k <= r): the copula evaluated at the repeated marginal CDF."""
    _check_dims(grid, R)
    if r < 0:
        raise ValueError(f"gain threshold must be non-negative, got {r!r}")
    if r == 0:
        return MvnEstimate(0.0, 0.0, 0)
    if grid.ports == 1:
        return MvnEstimate(float(marginal.cdf(r)), 0.0, 0)
    if r == math.inf:
        return MvnEstimate(1.0, 0.0, 0)
    k = grid.ports
    u, tail = float(marginal.cdf(r)), float(marginal.sf(r))
    # Frechet / Bonferroni brackets: 0 <= C <= u and 1 - k*tail <= C <= 1 - tail.
    if u <= _NEGLIGIBLE:
        return MvnEstimate(0.5 * u, 0.5 * u, 0)
    if k * tail <= _NEGLIGIBLE:
        return MvnEstimate(1.0 - 0.5 * (k + 1) * tail, 0.5 * (k - 1) * tail, 0)
    z = np.full(k, marginal.normal_score(r))
    return mvn_cdf(R, z, rel_tol=rel_tol, seed=seed)


def fas_gain_log_pdf_paper(r: float, grid: PortGrid, marginal: MarginalModel,
                           R: CorrelationMatrix) -> float:
    _check_dims(grid, R)
    if not r > 0:
        raise ValueError(f"density needs r > 0, got {r!r}")
    k = grid.ports
    lp = k * float(marginal.log_pdf(r))
    if k == 1:
        return lp
    z = np.full(k, marginal.normal_score(r))
    return lp + _copula_log_density_scores(z, R)


def fas_gain_pdf_paper(r: float, grid: PortGrid, marginal: MarginalModel,
                       R: CorrelationMatrix) -> float:
    """prod_k f(r) * c(F(r), ..., F(r)): the joint density on the diagonal.

    This is *not* the density of the maximum for K >= 2; see
    :func:`fas_gain_cdf_derivative` for that.
    """
    return math.exp(fas_gain_log_pdf_paper(r, grid, marginal, R))


def fas_gain_cdf_derivative(r: float, grid: PortGrid, marginal: MarginalModel,
                            R: CorrelationMatrix, rel_tol: float = 1e-4, seed=0,
                            step: float | None = None,
                            max_samples: int = _DERIV_MAX_PER_SHIFT) -> MvnEstimate:
    """Central difference of :func:`fas_gain_cdf`, the density of the best-port gain.

    Both CDF evaluations walk the same shifted lattice in lockstep (common
    random numbers), so the error comes from per-shift differences and is far
    smaller than either estimate's.  Stops at ``rel_tol`` relative to
    max(|density|, 1e-3) or at ``max_samples`` lattice points per shift.
    """
    if not r > 0:
        raise ValueError(f"derivative needs r > 0, got {r!r}")
    if step is None:
        step = 1e-3 * max(r, 1.0 / marginal.eta)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step!r}")
    if not 1e-6 <= rel_tol <= 1e-2:
        raise ValueError(f"rel_tol must lie in [1e-6, 1e-2], got {rel_tol!r}")
    _check_dims(grid, R)
    h = min(step, 0.5 * r)
    plans = None
    if grid.ports > 1:
        k = grid.ports
        corr = R.regularized if R.repair == "eigclip" else R.entries
        edges = (r + h, r - h)
        if all(marginal.cdf(x) > _NEGLIGIBLE and k * marginal.sf(x) > _NEGLIGIBLE for x in edges):
            plans = [_plan(corr, np.full(k, marginal.normal_score(x))) for x in edges]
            if any(p.always_zero or p.rank == 1 for p in plans) or plans[0].rank != plans[1].rank:
                plans = None
    if plans is None:
        hi = fas_gain_cdf(r + h, grid, marginal, R, rel_tol, seed)
        lo = fas_gain_cdf(r - h, grid, marginal, R, rel_tol, seed)
        return _difference(hi.value - lo.value, math.hypot(hi.std_error, lo.std_error), h,
                           hi.samples_used + lo.samples_used, hi.converged and lo.converged, r)

    hi, lo = _LatticeRun(plans[0], seed), _LatticeRun(plans[1], seed)
    batch = _FIRST_BATCH
    while True:
        hi.extend(batch)
        lo.extend(batch)
        d = hi.means - lo.means
        diff, err = float(d.mean()), float(d.std(ddof=1) / math.sqrt(_SHIFTS))
        ok = err <= rel_tol * max(abs(diff), 1e-12)
        if ok or hi.done >= max_samples:
            return _difference(diff, err, h, 2 * hi.done * _SHIFTS, ok, r)
        batch = min(hi.done, max_samples - hi.done)


def _difference(diff, err, h, used, ok, r) -> MvnEstimate:
    value = diff / (2 * h)
    err = err / (2 * h)
    if value < -3 * err:
        log.warning("negative density estimate %.3g (+- %.2g) at r=%g", value, err, r)
        ok = False
    return MvnEstimate(value, err, used, ok)
