"""Gauss-Laguerre rules for integrals against exp(-x) on [0, inf)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

MAX_ORDER = 128
_MAX_NEWTON = 200
_NEWTON_TOL = 1e-14


def laguerre_eval(n: int, x):
    """Laguerre polynomial L_n(x) by the three-term recurrence.

    Accepts a scalar or an array for ``x``.
    """
    if n < 0:
        raise ValueError(f"degree must be non-negative, got {n}")
    return _laguerre_pair(n, x)[1]


def _laguerre_pair(n: int, x):
    """Return (L_{n-1}(x), L_n(x)); L_{-1} is reported as 0."""
    x = np.asarray(x, dtype=float) if not np.isscalar(x) else float(x)
    p_prev = 0.0 * x
    p = 1.0 + 0.0 * x
    for k in range(n):
        p_prev, p = p, ((2 * k + 1 - x) * p - k * p_prev) / (k + 1)
    return p_prev, p


@dataclass(frozen=True)
class GaussLaguerreRule:
    """Nodes/weights of an ``order``-point Gauss-Laguerre rule.

    ``exp_weights`` holds ``w_i * exp(x_i)``, computed in log space, for
    integrands that are not written with an explicit ``exp(-x)`` factor.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    exp_weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.exp_weights):
            arr.setflags(write=False)


class QuadratureError(RuntimeError):
    pass


def _initial_guess(i: int, n: int, roots: np.ndarray) -> float:
    # Asymptotic estimates (Stroud & Secrest) for alpha = 0.
    if i == 0:
        return 3.0 / (1.0 + 2.4 * n)
    if i == 1:
        return roots[0] + 15.0 / (1.0 + 2.5 * n)
    ai = i - 1
    return roots[i - 1] + (1.0 + 2.55 * ai) / (1.9 * ai) * (roots[i - 1] - roots[i - 2])


@lru_cache(maxsize=None)
def gauss_laguerre_rule(order: int) -> GaussLaguerreRule:
    """Build the ``order``-point rule by Newton iteration on L_order.

    Weights use the classical form ``x_i / ((n+1)^2 L_{n+1}(x_i)^2)``, so the
    rule integrates the constant 1 exactly.
    """
    if not isinstance(order, (int, np.integer)) or not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [1, {MAX_ORDER}], got {order!r}")
    n = int(order)
    roots = np.zeros(n)
    for i in range(n):
        x = _initial_guess(i, n, roots)
        for _ in range(_MAX_NEWTON):
            p_prev, p = _laguerre_pair(n, x)
            dp = n * (p - p_prev) / x
            dx = p / dp
            x -= dx
            if abs(dx) <= _NEWTON_TOL * max(1.0, x):
                break
        else:
            raise QuadratureError(f"Newton iteration for root {i + 1} of L_{n} did not converge")
        if not (x > 0 and (i == 0 or x > roots[i - 1])):
            raise QuadratureError(f"root {i + 1} of L_{n} converged to {x!r}, out of order")
        roots[i] = x

    _, l_next = _laguerre_pair(n + 1, roots)
    log_w = np.log(roots) - 2.0 * np.log((n + 1) * np.abs(l_next))
    return GaussLaguerreRule(
        order=n,
        nodes=roots,
        weights=np.exp(log_w),
        exp_weights=np.exp(log_w + roots),
    )


def integrate_exp_weighted(rule: GaussLaguerreRule, f: Callable) -> float:
    """Approximate the integral of exp(-x) f(x) over [0, inf) as sum w_i f(x_i).

    ``f`` is called once per node with a scalar argument.
    """
    total = 0.0
    for i, (x, w) in enumerate(zip(rule.nodes, rule.weights)):
        fx = f(float(x))
        if not math.isfinite(fx):
            raise ValueError(f"integrand is {fx!r} at node {i + 1} (x={x!r})")
        total += w * fx
    return float(total)


def integrate_half_line(rule: GaussLaguerreRule, g: Callable, scale: float = 1.0) -> float:
    """Approximate the integral of g(x) over [0, inf) with stretched nodes.

    Substituting x = scale * t gives scale * sum w_i exp(t_i) g(scale t_i);
    ``scale=1`` is the plain rule applied to exp(x) g(x).  ``g`` must accept
    an array of abscissae.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale!r}")
    vals = np.asarray(g(scale * rule.nodes), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"integrand is {vals[i]!r} at node {i + 1} (x={scale * rule.nodes[i]!r})")
    return float(scale * np.dot(rule.exp_weights, vals))
