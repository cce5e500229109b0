"""Monte Carlo oracle for the secrecy metrics.

Trials are split into fixed-size blocks.  Each block draws from its own
Philox stream keyed by (seed, block, node), so the estimate depends only on
``seed`` and ``block_size``, never on how many workers ran the blocks.

Two port-gain models are available for fluid antennas:

``"copula"``
    Correlated normals through the Cholesky factor, mapped to exponential
    gains through the normal CDF.  This is exactly the Gaussian-copula law
    the analytical metrics assume.
``"complex"``
    Circularly-symmetric complex Gaussian port channels with the Jakes
    covariance; gains are |h_k|^2.  This is the physical model, whose gain
    dependence the Gaussian copula only approximates.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from fas_secrecy.metrics import NodeParams, SecrecyScenario

BLOCK_SIZE = 1 << 16
MIN_TRIALS = 10_000
_NODE_STREAM = {"bob": 1, "eve": 2}
CHANNEL_MODELS = ("copula", "complex")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    trials: int
    seed: int


def _rng(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) % 2**64 for k in key])))


def sample_gains(chol: np.ndarray, rng: np.random.Generator, n: int = 1, eta: float = 1.0) -> np.ndarray:
    """Per-port power gains |h_k|^2 of correlated complex Gaussian channels.

    Real and imaginary parts are drawn independently and correlated through
    ``chol``; each entry then has unit variance, so |h_k|^2 is Exp(eta).
    Returns an (n, K) array.
    """
    k = chol.shape[0]
    x = rng.standard_normal((n, k)) @ chol.T
    y = rng.standard_normal((n, k)) @ chol.T
    return 0.5 * (x * x + y * y) / eta


def sample_copula_gains(chol: np.ndarray, rng: np.random.Generator, n: int = 1,
                        eta: float = 1.0) -> np.ndarray:
    """Per-port gains with exponential marginals coupled by a Gaussian copula."""
    z = rng.standard_normal((n, chol.shape[0])) @ chol.T
    # g = -log(1 - Phi(z)) / eta, with 1 - Phi(z) = Phi(-z) kept in log space
    return -special.log_ndtr(-z) / eta


def effective_gains(node: NodeParams, rng: np.random.Generator, n: int,
                    channel_model: str = "copula") -> np.ndarray:
    eta = node.marginal.eta
    if node.kind == "fas":
        if node.grid.ports == 1:
            return rng.standard_exponential(n) / eta
        draw = sample_copula_gains if channel_model == "copula" else sample_gains
        return draw(node.corr.chol, rng, n, eta).max(axis=1)
    branches = rng.standard_exponential((n, node.antennas)) / eta
    return branches.sum(axis=1) if node.kind == "mrc" else branches.max(axis=1)


def secrecy_capacity_samples(scenario: SecrecyScenario, n: int, seed: int, block: int,
                             channel_model: str = "copula") -> np.ndarray:
    """Instantaneous secrecy capacities max(log2((1+g_B)/(1+g_E)), 0) for one block."""
    gb = scenario.bob.avg_snr * effective_gains(
        scenario.bob, _rng(seed, block, _NODE_STREAM["bob"]), n, channel_model)
    ge = scenario.eve.avg_snr * effective_gains(
        scenario.eve, _rng(seed, block, _NODE_STREAM["eve"]), n, channel_model)
    return np.maximum((np.log1p(gb) - np.log1p(ge)) / math.log(2.0), 0.0)


def _block_stats(cs: np.ndarray, rate: float):
    out = (cs <= rate).astype(float)
    return (cs.size, cs.mean(), ((cs - cs.mean()) ** 2).sum(), out.mean(), ((out - out.mean()) ** 2).sum())


def _combine(parts):
    """Pairwise (Chan et al.) merge of per-block counts, means and M2, in block order."""
    n, m1, s1, m2, s2 = parts[0]
    for nb, mb1, sb1, mb2, sb2 in parts[1:]:
        tot = n + nb
        d1, d2 = mb1 - m1, mb2 - m2
        m1 += d1 * nb / tot
        m2 += d2 * nb / tot
        s1 += sb1 + d1 * d1 * n * nb / tot
        s2 += sb2 + d2 * d2 * n * nb / tot
        n = tot
    return n, m1, s1, m2, s2


def simulate_metrics(scenario: SecrecyScenario, trials: int, seed: int | None = None,
                     channel_model: str = "copula", block_size: int = BLOCK_SIZE,
                     jobs: int = 1, dump=None) -> dict:
    """Empirical ASC, SOP and SEE.

    Returns ``{"asc": McEstimate, "sop": McEstimate, "see": McEstimate}``.
    ``dump``, if given, is a path receiving every secrecy-capacity sample
    (``.npy`` binary, anything else one value per line as text).
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    if channel_model not in CHANNEL_MODELS:
        raise ValueError(f"channel_model must be one of {CHANNEL_MODELS}, got {channel_model!r}")
    seed = scenario.seed if seed is None else seed
    sizes = [block_size] * (trials // block_size)
    if trials % block_size:
        sizes.append(trials % block_size)
    rate = scenario.secrecy_rate

    def run(i):
        cs = secrecy_capacity_samples(scenario, sizes[i], seed, i, channel_model)
        return _block_stats(cs, rate), (cs if dump is not None else None)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(len(sizes))))
    else:
        results = [run(i) for i in range(len(sizes))]

    n, asc_mean, asc_m2, sop_mean, sop_m2 = _combine([r[0] for r in results])
    if dump is not None:
        samples = np.concatenate([r[1] for r in results])
        if str(dump).endswith(".npy"):
            np.save(dump, samples)
        else:
            np.savetxt(dump, samples, fmt="%.17g")
    asc_se = math.sqrt(asc_m2 / (n - 1) / n)
    sop_se = math.sqrt(sop_m2 / (n - 1) / n)
    p_tot = scenario.total_power
    return {
        "asc": McEstimate(asc_mean, asc_se, n, seed),
        "sop": McEstimate(sop_mean, sop_se, n, seed),
        "see": McEstimate(asc_mean / p_tot, asc_se / p_tot, n, seed),
    }
