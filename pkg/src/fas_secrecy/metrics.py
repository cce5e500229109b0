"""Average secrecy capacity, secrecy outage probability and secrecy energy efficiency.

All quantities are linear-domain.  Bob's and Eve's effective gains are the
best port of a fluid antenna (Gaussian copula over Jakes-correlated ports),
the MRC sum of independent branches, or the SC maximum of independent
branches.  Every one-dimensional integral over the half line goes through a
Gauss-Laguerre rule; ``node_scale`` stretches the nodes (x = s t) and
``node_scale=1`` reproduces the unstretched closed forms exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import special

from fas_secrecy.copula import (
    MarginalModel,
    MvnEstimate,
    fas_gain_cdf,
    fas_gain_log_pdf_paper,
)
from fas_secrecy.geometry import CorrelationMatrix, PortGrid, copula_correlation, jakes_covariance
from fas_secrecy.quadrature import gauss_laguerre_rule, integrate_half_line

LN2 = math.log(2.0)
DEFAULT_ORDER = 128
_ROLE_IDS = {"bob": 1, "eve": 2}
_SCALE_CLIP = (1e-3, 1e6)
_SKIP_MASS = 1e-17


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def link_snr(p_tx: float, distance: float, path_loss_exp: float, noise: float) -> float:
    """Average per-port SNR P / (d^nu sigma^2), all inputs linear (W, m)."""
    if not (p_tx >= 0 and distance > 0 and noise > 0):
        raise ValueError("link SNR needs p_tx >= 0, distance > 0 and noise > 0")
    return p_tx / (distance ** path_loss_exp * noise)


@dataclass(frozen=True)
class NodeParams:
    """Receiver (Bob or Eve): channel kind, per-element average SNR and marginal.

    Build with :meth:`fas`, :meth:`mrc` or :meth:`sc`.
    """

    role: str
    kind: str
    avg_snr: float
    marginal: MarginalModel = MarginalModel()
    grid: PortGrid | None = None
    corr: CorrelationMatrix | None = None
    antennas: int | None = None

    def __post_init__(self):
        if self.role not in _ROLE_IDS:
            raise ValueError(f"role must be 'bob' or 'eve', got {self.role!r}")
        if not (self.avg_snr >= 0 and math.isfinite(self.avg_snr)):
            raise ValueError(f"avg_snr must be finite and non-negative, got {self.avg_snr!r}")
        if self.kind == "fas":
            if self.grid is None or self.corr is None or self.antennas is not None:
                raise ValueError("a fas node needs grid and corr and no antenna count")
            if self.corr.dim != self.grid.ports:
                raise ValueError("correlation matrix does not match the port grid")
        elif self.kind in ("mrc", "sc"):
            if self.grid is not None or self.corr is not None:
                raise ValueError(f"a {self.kind} node takes an antenna count only")
            if not isinstance(self.antennas, (int, np.integer)) or self.antennas < 1:
                raise ValueError(f"antenna count must be a positive integer, got {self.antennas!r}")
        else:
            raise ValueError(f"channel kind must be fas, mrc or sc, got {self.kind!r}")

    @classmethod
    def fas(cls, role, grid: PortGrid, avg_snr, marginal=MarginalModel(), omega=1.0):
        corr = copula_correlation(jakes_covariance(grid, omega))
        return cls(role, "fas", float(avg_snr), marginal, grid=grid, corr=corr)

    @classmethod
    def mrc(cls, role, antennas: int, avg_snr, marginal=MarginalModel()):
        return cls(role, "mrc", float(avg_snr), marginal, antennas=antennas)

    @classmethod
    def sc(cls, role, antennas: int, avg_snr, marginal=MarginalModel()):
        return cls(role, "sc", float(avg_snr), marginal, antennas=antennas)

    @property
    def elements(self) -> int:
        return self.grid.ports if self.kind == "fas" else self.antennas

    @property
    def active_elements(self) -> int:
        """Elements powered during reception: all of them for MRC, one otherwise."""
        return self.antennas if self.kind == "mrc" else 1

    @property
    def jitter_applied(self) -> float:
        return self.corr.jitter_applied if self.kind == "fas" else 0.0

    def with_snr(self, avg_snr: float) -> "NodeParams":
        return replace(self, avg_snr=float(avg_snr))


@dataclass(frozen=True)
class PowerModel:
    """Transmit/circuit/activation powers in watts.

    ``active_ports=None`` takes the count from Bob's receiver kind.
    """

    p_tx: float = dbm_to_watt(-27.0)
    alpha: float = 1.0
    p_circuit: float = dbm_to_watt(20.0)
    p_activate: float = dbm_to_watt(10.0)
    active_ports: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"drain efficiency must lie in (0, 1], got {self.alpha!r}")
        for name in ("p_tx", "p_circuit", "p_activate"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.active_ports is not None and self.active_ports < 1:
            raise ValueError("active_ports must be a positive integer")

    def total(self, active_ports: int) -> float:
        return self.p_tx / self.alpha + self.p_circuit + active_ports * self.p_activate


@dataclass(frozen=True)
class SecrecyScenario:
    bob: NodeParams
    eve: NodeParams
    secrecy_rate: float = 1.0
    power: PowerModel = PowerModel()
    quad_order: int = DEFAULT_ORDER
    mvn_tol: float = 1e-3
    seed: int = 0
    node_scale: float | str = "auto"

    def __post_init__(self):
        if self.bob.role != "bob" or self.eve.role != "eve":
            raise ValueError("scenario needs a bob node and an eve node")
        if not self.secrecy_rate >= 0:
            raise ValueError(f"secrecy rate must be non-negative, got {self.secrecy_rate!r}")
        expected = self.bob.active_elements
        if self.power.active_ports is not None and self.power.active_ports != expected:
            raise ValueError(f"a {self.bob.kind} receiver activates {expected} element(s), "
                             f"power model says {self.power.active_ports}")
        if not (self.node_scale == "auto" or (isinstance(self.node_scale, (int, float))
                                              and self.node_scale > 0)):
            raise ValueError(f"node_scale must be 'auto' or positive, got {self.node_scale!r}")

    @property
    def active_ports(self) -> int:
        return self.bob.active_elements

    @property
    def total_power(self) -> float:
        return self.power.total(self.active_ports)

    @property
    def kappa(self) -> float:
        """SNR advantage of Bob over Eve."""
        if self.eve.avg_snr == 0:
            return math.inf
        return self.bob.avg_snr / self.eve.avg_snr

    def replace(self, **changes) -> "SecrecyScenario":
        return replace(self, **changes)


@dataclass
class MetricResult:
    value: float
    estimator_error: float
    diagnostics: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


# ------------------------------------------------------------ node laws

def _point_seed(seed: int, role: str, r: float):
    bits = int(np.float64(r).view(np.uint64))
    return (int(seed) % 2**64, _ROLE_IDS[role], bits)


@lru_cache(maxsize=1 << 17)
def _cached_cdf(node: NodeParams, r: float, rel_tol: float, seed: int) -> MvnEstimate:
    return fas_gain_cdf(r, node.grid, node.marginal, node.corr, rel_tol,
                        _point_seed(seed, node.role, r))


def effective_cdf(node: NodeParams, r: float, rel_tol: float = 1e-3, seed: int = 0) -> MvnEstimate:
    """CDF of the node's effective gain (best port, MRC sum, or SC maximum) at ``r``."""
    if r < 0:
        raise ValueError(f"gain threshold must be non-negative, got {r!r}")
    eta = node.marginal.eta
    if node.kind == "fas":
        return _cached_cdf(node, float(r), rel_tol, seed)
    if node.kind == "mrc":
        return MvnEstimate(float(special.gammainc(node.antennas, eta * r)), 0.0, 0)
    return MvnEstimate(float(node.marginal.cdf(r)) ** node.antennas, 0.0, 0)


def effective_log_pdf_paper(node: NodeParams, r: float) -> float:
    eta = node.marginal.eta
    n = node.antennas
    if node.kind == "fas":
        return fas_gain_log_pdf_paper(r, node.grid, node.marginal, node.corr)
    if node.kind == "mrc":
        return n * math.log(eta) + (n - 1) * math.log(r) - eta * r - math.lgamma(n)
    return (math.log(n) + (n - 1) * math.log(-math.expm1(-eta * r))
            + float(node.marginal.log_pdf(r)))


def effective_pdf_paper(node: NodeParams, r: float) -> float:
    """Density used by the closed-form SOP.

    For MRC and SC this is the true density of the effective gain; for a
    fluid antenna it is the diagonal copula expression prod f * c.
    """
    if not r > 0:
        raise ValueError(f"density needs r > 0, got {r!r}")
    return math.exp(effective_log_pdf_paper(node, r))


def _snr_cdf(node: NodeParams, x: np.ndarray, rel_tol: float, seed: int, diag=None):
    """CDF of the node's SNR at each x, with standard errors.

    Estimates that hit the sample cap are counted in ``diag["mvn_unconverged"]``.
    """
    vals = np.empty(x.shape)
    errs = np.empty(x.shape)
    for i, xi in enumerate(x):
        if node.avg_snr == 0:
            vals[i], errs[i] = 1.0, 0.0
            continue
        est = effective_cdf(node, float(xi) / node.avg_snr, rel_tol, seed)
        vals[i], errs[i] = est.value, est.std_error
        if diag is not None and not est.converged:
            diag["mvn_unconverged"] = diag.get("mvn_unconverged", 0) + 1
    return vals, errs


def _tail_scale(node: NodeParams) -> float:
    return node.avg_snr / node.marginal.eta


def _asc_scale(scenario: SecrecyScenario) -> float:
    if scenario.node_scale != "auto":
        return float(scenario.node_scale)
    b, e = _tail_scale(scenario.bob), _tail_scale(scenario.eve)
    if b == 0 or e == 0:
        s = max(b, e, 1.0)
    else:
        s = math.sqrt(b * e)
    return float(np.clip(s, *_SCALE_CLIP))


def _sop_scale(scenario: SecrecyScenario) -> float:
    if scenario.node_scale != "auto":
        return float(scenario.node_scale)
    return float(np.clip(_tail_scale(scenario.eve), *_SCALE_CLIP))


# -------------------------------------------------------------- metrics

def _asc_terms(scenario: SecrecyScenario, keep_bob: bool):
    rule = gauss_laguerre_rule(scenario.quad_order)
    s = _asc_scale(scenario)
    x = s * rule.nodes
    tol, seed = scenario.mvn_tol, scenario.seed
    diag = {"nodes": rule.order, "node_scale": s, "kappa": scenario.kappa,
            "jitter_bob": scenario.bob.jitter_applied, "jitter_eve": scenario.eve.jitter_applied,
            "mvn_unconverged": 0}
    fe, fe_err = _snr_cdf(scenario.eve, x, tol, seed, diag)
    if keep_bob:
        fb, fb_err = _snr_cdf(scenario.bob, x, tol, seed, diag)
        sb = 1.0 - fb
    else:
        sb, fb_err = np.ones_like(x), np.zeros_like(x)
    coef = s * rule.exp_weights / (1.0 + x) / LN2
    value = integrate_half_line(rule, lambda xx: sb * fe / (1.0 + xx) / LN2, s)
    err = float(np.sqrt(np.sum((coef * fe * fb_err) ** 2 + (coef * sb * fe_err) ** 2)))
    return value, err, diag


def asc(scenario: SecrecyScenario) -> MetricResult:
    """Average secrecy capacity in bit/s/Hz.

    Integrates (1/ln 2) * (1 - F_B(x)) F_E(x) / (1 + x) over the SNR x,
    with F_B, F_E the SNR CDFs of Bob and Eve.
    """
    value, err, diag = _asc_terms(scenario, keep_bob=True)
    return MetricResult(max(value, 0.0), err, diag)


def asc_asymptotic(scenario: SecrecyScenario) -> MetricResult:
    """High-SNR form of :func:`asc` with Bob's CDF dropped.

    The underlying integral diverges; the value is the finite quadrature sum
    for the scenario's rule and node scale, which is what :func:`asc`
    saturates to as Bob's SNR grows with the nodes held fixed.
    """
    value, err, diag = _asc_terms(scenario, keep_bob=False)
    return MetricResult(value, err, diag)


def sop(scenario: SecrecyScenario) -> MetricResult:
    """Secrecy outage probability from the density-based closed form.

    Integrates F_B((2^Rs x + 2^Rs - 1) / g_B) * f_E(x / g_E) / g_E over Eve's
    SNR x, where f_E is :func:`effective_pdf_paper`.  Clamped into [0, 1].
    """
    bob, eve = scenario.bob, scenario.eve
    r_o = 2.0 ** scenario.secrecy_rate
    r_t = r_o - 1.0
    diag = {"kappa": scenario.kappa, "jitter_bob": bob.jitter_applied,
            "jitter_eve": eve.jitter_applied, "flags": [], "mvn_unconverged": 0}
    if eve.avg_snr == 0:
        fb, fb_err = _snr_cdf(bob, np.array([r_t]), scenario.mvn_tol, scenario.seed, diag)
        return MetricResult(float(fb[0]), float(fb_err[0]), diag)
    rule = gauss_laguerre_rule(scenario.quad_order)
    s = _sop_scale(scenario)
    x = s * rule.nodes
    fb, fb_err = _snr_cdf(bob, r_o * x + r_t, scenario.mvn_tol, scenario.seed, diag)
    log_fe = np.array([effective_log_pdf_paper(eve, xi / eve.avg_snr) for xi in x])
    dens = np.exp(log_fe) / eve.avg_snr
    raw = integrate_half_line(rule, lambda _: fb * dens, s)
    err = float(np.sqrt(np.sum((s * rule.exp_weights * dens * fb_err) ** 2)))
    value = min(max(raw, 0.0), 1.0)
    if value != raw:
        diag["flags"].append(f"clamped raw value {raw:.6g}")
    diag.update(nodes=rule.order, node_scale=s, raw=raw)
    return MetricResult(value, err, diag)


def _gain_upper(node: NodeParams) -> float:
    """Gain beyond which 1 - F is below ~1e-12."""
    eta = node.marginal.eta
    n = node.elements
    if node.kind == "mrc":
        return (n + 30.0 + 6.0 * math.sqrt(n)) / eta
    return (math.log(n) + 28.0) / eta


def sop_oracle(scenario: SecrecyScenario, grid_points: int = 1000,
               rel_tol: float | None = None) -> MetricResult:
    """Secrecy outage probability from CDFs only.

    Stieltjes sum of F_B over increments of F_E on a geometric grid of
    Eve's gain, F_B taken at geometric midpoints.  Needs no density, so it
    is unaffected by the diagonal-density question for fluid antennas.
    A second-difference correction removes the leading grid error; its size
    is charged to the error bound.
    """
    if grid_points < 1000:
        raise ValueError(f"grid_points must be >= 1000, got {grid_points}")
    bob, eve = scenario.bob, scenario.eve
    tol = scenario.mvn_tol if rel_tol is None else rel_tol
    r_o = 2.0 ** scenario.secrecy_rate
    r_t = r_o - 1.0
    diag = {"kappa": scenario.kappa, "grid_points": grid_points, "mvn_unconverged": 0}
    if eve.avg_snr == 0:
        fb, fb_err = _snr_cdf(bob, np.array([r_t]), tol, scenario.seed, diag)
        return MetricResult(float(fb[0]), float(fb_err[0]), diag)
    eta = eve.marginal.eta
    t = np.geomspace(1e-7 / eta, _gain_upper(eve), grid_points)
    mid = np.sqrt(t[1:] * t[:-1])
    mid = np.concatenate([[0.5 * t[0]], mid])
    fe = np.empty(grid_points)
    fe_err = np.empty(grid_points)
    for i, ti in enumerate(t):
        est = effective_cdf(eve, float(ti), tol, scenario.seed)
        fe[i], fe_err[i] = est.value, est.std_error
        if not est.converged:
            diag["mvn_unconverged"] += 1
    inc = np.diff(np.concatenate([[0.0], fe]))
    # cells where Eve carries no mass need no F_B; their total is bracketed below
    live = inc > _SKIP_MASS
    fb = np.full(grid_points, 0.5)
    fb_err = np.zeros(grid_points)
    fb[live], fb_err[live] = _snr_cdf(bob, r_o * eve.avg_snr * mid[live] + r_t, tol,
                                      scenario.seed, diag)
    skipped = float(inc[~live].sum())
    # midpoint-rule correction on the log grid: F_B locally quadratic, Eve's mass locally linear
    j = np.arange(2, grid_points - 1)
    j = j[live[j - 1] & live[j] & live[j + 1]]
    corr = float(np.sum(inc[j] * (fb[j + 1] - 2.0 * fb[j] + fb[j - 1])
                        + 0.5 * (fb[j + 1] - fb[j - 1]) * (inc[j + 1] - inc[j - 1])) / 24.0)
    value = float(np.dot(fb, inc) + (1.0 - fe[-1])) + corr
    # d value / d fe_j = fb_j - fb_{j+1}, with fb_{N} := 1 for the tail term
    coef_e = fb - np.concatenate([fb[1:], [1.0]])
    tail = 1.0 - fe[-1]
    # the truncated tail is charged as certain outage: a one-sided bias of at most `tail`;
    # skipped cells contribute somewhere in [0, skipped], counted here at the midpoint
    err = float(np.sqrt(np.sum((inc * fb_err) ** 2) + np.sum((coef_e * fe_err) ** 2)
                        + tail * tail) + 0.5 * skipped + abs(corr))
    diag["skipped_mass"] = skipped
    diag["grid_correction"] = corr
    diag["tail_mass"] = float(1.0 - fe[-1])
    return MetricResult(min(max(value, 0.0), 1.0), err, diag)


def see(scenario: SecrecyScenario, asc_result: MetricResult | None = None) -> MetricResult:
    """Secrecy energy efficiency: ASC over total consumed power (bit/s/Hz/J)."""
    p_tot = scenario.total_power
    if not p_tot > 0:
        raise ValueError("total power consumption is zero")
    a = asc(scenario) if asc_result is None else asc_result
    diag = dict(a.diagnostics, total_power=p_tot, active_ports=scenario.active_ports)
    return MetricResult(a.value / p_tot, a.estimator_error / p_tot, diag)


# ------------------------------------------------- single-port closed forms

def _single_port_rates(scenario: SecrecyScenario):
    for node in (scenario.bob, scenario.eve):
        if node.elements != 1:
            raise ValueError("closed forms need single-element Bob and Eve")
    a_b = scenario.bob.marginal.eta / scenario.bob.avg_snr if scenario.bob.avg_snr > 0 else math.inf
    a_e = scenario.eve.marginal.eta / scenario.eve.avg_snr if scenario.eve.avg_snr > 0 else math.inf
    return a_b, a_e


def _exp_e1(a: float) -> float:
    """e^a E1(a), finite for large a."""
    if a > 600.0:
        # asymptotic series, error below a^-6
        return (1.0 - 1.0 / a + 2.0 / a**2 - 6.0 / a**3 + 24.0 / a**4) / a
    return float(np.exp(a) * special.exp1(a))


def asc_single_port(scenario: SecrecyScenario) -> float:
    """Exact ASC for exponential SNRs at both nodes (one port or antenna each)."""
    a_b, a_e = _single_port_rates(scenario)
    if math.isinf(a_b):
        return 0.0
    if math.isinf(a_e):
        return _exp_e1(a_b) / LN2
    return (_exp_e1(a_b) - _exp_e1(a_b + a_e)) / LN2


def sop_single_port(scenario: SecrecyScenario) -> float:
    """Exact SOP for exponential SNRs at both nodes (one port or antenna each)."""
    a_b, a_e = _single_port_rates(scenario)
    r_o = 2.0 ** scenario.secrecy_rate
    if math.isinf(a_b):
        return 1.0
    if math.isinf(a_e):
        return float(-np.expm1(-a_b * (r_o - 1.0)))
    return 1.0 - math.exp(-a_b * (r_o - 1.0)) * a_e / (a_e + a_b * r_o)
