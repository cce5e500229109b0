import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from fas_secrecy.quadrature import (MAX_ORDER, QuadratureError, gauss_laguerre_rule,
                                    integrate_exp_weighted, integrate_half_line, laguerre_eval)


@pytest.mark.parametrize("n,x,expected", [(0, 3.7, 1.0), (1, 1.0, 0.0), (2, 2 + math.sqrt(2), 0.0)])
def test_laguerre_examples(n, x, expected):
    assert laguerre_eval(n, x) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n", [0, 1, 2, 5, 17, 40])
def test_laguerre_matches_scipy(n):
    x = np.linspace(0, 30, 61)
    np.testing.assert_allclose(laguerre_eval(n, x), special.eval_laguerre(n, x), rtol=1e-10, atol=1e-10)


def test_laguerre_negative_degree():
    with pytest.raises(ValueError):
        laguerre_eval(-1, 0.5)


def test_order_one_and_two():
    r1 = gauss_laguerre_rule(1)
    assert r1.nodes.tolist() == pytest.approx([1.0], abs=1e-14)
    assert r1.weights.tolist() == pytest.approx([1.0], abs=1e-14)
    r2 = gauss_laguerre_rule(2)
    np.testing.assert_allclose(r2.nodes, [2 - math.sqrt(2), 2 + math.sqrt(2)], atol=1e-12)
    np.testing.assert_allclose(r2.weights, [(2 + math.sqrt(2)) / 4, (2 - math.sqrt(2)) / 4], atol=1e-12)
    assert abs(r2.weights.sum() - 1.0) <= 1e-12
    moments = [float(np.sum(r2.weights * r2.nodes**k)) for k in range(4)]
    assert moments == pytest.approx([1, 1, 2, 6], rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 8, 16, 32, 64, 100, MAX_ORDER])
def test_matches_numpy_laggauss(n):
    x, w = np.polynomial.laguerre.laggauss(n)
    rule = gauss_laguerre_rule(n)
    np.testing.assert_allclose(rule.nodes, x, rtol=1e-11)
    big = w > 1e-250
    np.testing.assert_allclose(rule.weights[big], w[big], rtol=1e-8)
    assert abs(rule.weights.sum() - 1.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.data())
def test_polynomial_exactness(n, data):
    k = data.draw(st.integers(0, 2 * n - 1))
    rule = gauss_laguerre_rule(n)
    got = integrate_exp_weighted(rule, lambda x: x**k)
    assert got == pytest.approx(math.factorial(k), rel=1e-9)


def test_rule_is_bit_identical_when_regenerated():
    a = gauss_laguerre_rule(40)
    gauss_laguerre_rule.cache_clear()
    b = gauss_laguerre_rule(40)
    assert a is not b
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.weights, b.weights)


def test_rule_arrays_are_read_only():
    rule = gauss_laguerre_rule(4)
    with pytest.raises(ValueError):
        rule.nodes[0] = 1.0


@pytest.mark.parametrize("bad", [0, -3, MAX_ORDER + 1, 2.5])
def test_order_out_of_range(bad):
    with pytest.raises(ValueError):
        gauss_laguerre_rule(bad)


def test_nonconvergence_names_root(monkeypatch):
    import fas_secrecy.quadrature as q
    monkeypatch.setattr(q, "_MAX_NEWTON", 1)
    monkeypatch.setattr(q, "_NEWTON_TOL", 0.0)
    q.gauss_laguerre_rule.cache_clear()
    try:
        with pytest.raises(QuadratureError, match="root 1 of L_5"):
            q.gauss_laguerre_rule(5)
    finally:
        q.gauss_laguerre_rule.cache_clear()


def test_exp_weighted_examples():
    r2 = gauss_laguerre_rule(2)
    assert integrate_exp_weighted(r2, lambda x: 1.0) == pytest.approx(1.0, abs=1e-14)
    assert integrate_exp_weighted(r2, lambda x: x * x) == pytest.approx(2.0, abs=1e-12)
    # oracle: adaptive quadrature of exp(-x)/(1+x)
    ref, _ = integrate.quad(lambda x: math.exp(-x) / (1 + x), 0, math.inf, epsabs=1e-13)
    assert integrate_exp_weighted(gauss_laguerre_rule(32), lambda x: 1 / (1 + x)) == pytest.approx(ref, abs=1e-6)


def test_exp_weighted_reports_bad_node():
    with pytest.raises(ValueError, match="node 1"):
        integrate_exp_weighted(gauss_laguerre_rule(3), lambda x: math.inf if x < 1 else 1.0)


def test_half_line_scaling():
    rule = gauss_laguerre_rule(32)
    assert integrate_half_line(rule, lambda x: np.exp(-x / 3.0), scale=3.0) == pytest.approx(3.0, rel=1e-12)
    # slow decay at scale 50, handled by stretching a 128-point rule
    g = lambda x: np.exp(-x / 50) * -np.expm1(-x) / (1 + x)
    ref, _ = integrate.quad(lambda x: float(g(x)), 0, math.inf, limit=400, epsabs=1e-12)
    assert integrate_half_line(gauss_laguerre_rule(128), g, scale=3.0) == pytest.approx(ref, rel=1e-9)
    with pytest.raises(ValueError):
        integrate_half_line(rule, lambda x: x, scale=0.0)
    with pytest.raises(ValueError, match="node"):
        integrate_half_line(rule, lambda x: np.where(x > 5, np.nan, 1.0))


@pytest.mark.parametrize("f", [lambda x: 1 / (1 + x), lambda x: np.log1p(x), lambda x: 1 / (1 + x) ** 2])
def test_monotone_refinement(f):
    val = {n: integrate_exp_weighted(gauss_laguerre_rule(n), f) for n in (8, 32, 64)}
    assert abs(val[32] - val[64]) <= abs(val[8] - val[64])
