"""Acceptance criteria, each at its stated tolerance and runtime budget.

Run under pytest (verdict lines appear in the terminal summary) or
directly: ``python3 tests/test_acceptance.py [N ...]``.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest
from scipy import stats

from fas_secrecy import (MarginalModel, NodeParams, PortGrid, SecrecyScenario, asc, asc_asymptotic,
                         copula_correlation, fas_gain_cdf_derivative, fas_gain_pdf_paper,
                         gauss_laguerre_rule, gaussian_copula_cdf, jakes_covariance, mvn_cdf,
                         see, simulate_metrics, sop, sop_oracle, std_normal_cdf)
from fas_secrecy.config import ScenarioSpec
from fas_secrecy.geometry import CorrelationMatrix

GAMMA_B_DB = (0.0, 10.0, 20.0)
K_SIDES = (1, 2, 3, 4)
W_AREAS = (1.0, 2.25, 9.0)
MC_TRIALS = 10**6


def table1() -> SecrecyScenario:
    return ScenarioSpec().build()


def fas_bob(side: int, area: float, snr: float) -> NodeParams:
    w = math.sqrt(area)
    return NodeParams.fas("bob", PortGrid(side, side, w, w), snr)


def noise(a, b, tol):
    """Estimator noise for comparing two metric results."""
    return max(3.0 * math.hypot(a.estimator_error, b.estimator_error),
               tol * max(abs(a.value), abs(b.value)))


def random_correlation(rng, d):
    eig = rng.dirichlet(np.full(d, 0.7)) * d
    eig = np.maximum(eig, 1e-3)
    eig *= d / eig.sum()
    return copula_correlation(stats.random_correlation.rvs(eig, random_state=rng))


# ------------------------------------------------------------ criteria

def criterion_1():
    gauss_laguerre_rule.cache_clear()
    worst = 0.0
    for n in range(1, 21):
        rule = gauss_laguerre_rule(n)
        for k in range(2 * n):
            approx = float(np.sum(rule.weights * rule.nodes.astype(float) ** k))
            worst = max(worst, abs(approx / math.factorial(k) - 1.0))
    r2 = gauss_laguerre_rule(2)
    node_err = float(np.max(np.abs(np.sort(r2.nodes) - [2 - math.sqrt(2), 2 + math.sqrt(2)])))
    wsum = abs(float(r2.weights.sum()) - 1.0)
    ok = worst <= 1e-9 and node_err <= 1e-12 and wsum <= 1e-12
    return ok, f"max monomial rel err {worst:.2e} (<=1e-9), order-2 node err {node_err:.1e}, |sum w - 1| {wsum:.1e}"


def criterion_2():
    rng = np.random.default_rng(20240601)
    boundary_bad = 0
    for d in range(2, 17):
        R = random_correlation(rng, d)
        u = rng.uniform(0.05, 0.95, d)
        z = u.copy()
        z[rng.integers(d)] = 0.0
        if gaussian_copula_cdf(z, R).value != 0.0:
            boundary_bad += 1
        j = rng.integers(d)
        one = np.ones(d)
        one[j] = u[j]
        est = gaussian_copula_cdf(one, R)
        if abs(est.value - u[j]) > 4 * est.std_error + 1e-15:
            boundary_bad += 1
    violations, worst = 0, -math.inf
    for i in range(1000):
        d = int(rng.integers(2, 17))
        R = random_correlation(rng, d)
        # mix of spread-out and nearly equal coordinates, where the bound is tight
        u = rng.uniform(0.01, 0.999, d) if i % 2 else np.clip(rng.uniform(0.3, 0.99) + rng.normal(0, 0.01, d), 0.01, 0.999)
        est = gaussian_copula_cdf(u, R, seed=i)
        excess = (est.value - u.min()) / max(est.std_error, 1e-300)
        worst = max(worst, excess)
        if est.value > u.min() + 4 * est.std_error:
            violations += 1
    ok = boundary_bad == 0 and violations == 0
    return ok, f"boundary failures {boundary_bad}/30, Frechet violations {violations}/1000 (max excess {worst:.2f} se)"


def criterion_3():
    R2 = copula_correlation(np.array([[1.0, 0.5], [0.5, 1.0]]))
    est = mvn_cdf(R2, [0.0, 0.0])
    parts = [f"orthant {est.value:.6f}+-{est.std_error:.1e}"]
    ok = abs(est.value - 1.0 / 3.0) <= 3 * est.std_error
    for k in (4, 9, 16):
        for x in (-1.0, 0.3, 1.5):
            e = mvn_cdf(CorrelationMatrix.identity(k), np.full(k, x))
            target = float(std_normal_cdf(x)) ** k
            # an exact estimator (std_error 0) may still round differently: allow 8 ulps
            tol = max(3 * e.std_error, 8 * np.spacing(target))
            good = abs(e.value - target) <= tol
            ok &= good
            if not good:
                parts.append(f"K={k} x={x}: {e.value!r} vs {target!r}")
    parts.append("independence K=4,9,16 " + ("ok" if ok else "see above"))
    return ok, ", ".join(parts)


def criterion_4(verbose=True):
    base = table1()
    eve = base.eve
    z_max, fails, i = 0.0, [], 0
    for side in K_SIDES:
        for area in W_AREAS:
            for g_db in GAMMA_B_DB:
                sc = base.replace(bob=fas_bob(side, area, 10 ** (g_db / 10)), eve=eve)
                a, o = asc(sc), sop_oracle(sc)
                mc = simulate_metrics(sc, MC_TRIALS, seed=1000 + i)
                i += 1
                z_a = (a.value - mc["asc"].mean) / math.hypot(a.estimator_error, mc["asc"].std_error)
                binom = math.sqrt(max(o.value * (1 - o.value), 0.0) / MC_TRIALS)
                scale = math.hypot(o.estimator_error, binom)
                diff = o.value - mc["sop"].mean
                z_s = 0.0 if diff == 0 else (diff / scale if scale > 0 else math.inf)
                z_max = max(z_max, abs(z_a), abs(z_s))
                tag = f"K={side}x{side} W={area} g={g_db:g}dB"
                if verbose:
                    print(f"  {tag}: asc {a.value:.5f} mc {mc['asc'].mean:.5f} z {z_a:+.2f} | "
                          f"sop {o.value:.4e} mc {mc['sop'].mean:.4e} z {z_s:+.2f}", flush=True)
                if abs(z_a) > 3 or abs(z_s) > 3:
                    fails.append(tag)
    # diagnostics only: the physical complex-Gaussian port model against the same analytics
    gaps = []
    for side in K_SIDES[1:]:
        sc = base.replace(bob=fas_bob(side, 1.0, 10.0), eve=eve)
        mc = simulate_metrics(sc, MC_TRIALS, seed=77, channel_model="complex")
        gaps.append(f"{side}x{side}: {asc(sc).value - mc['asc'].mean:+.4f}")
    detail = (f"36 points, max |z| {z_max:.2f} (<=3), failing {fails or 'none'}; "
              f"complex-model ASC gap at 10 dB (diagnostic) {', '.join(gaps)}")
    return not fails, detail


def _metric_set(sc, density_form=True):
    a = asc(sc)
    out = {"asc": a, "sop_oracle": sop_oracle(sc), "see": see(sc, a)}
    if density_form:
        out["sop_paper"] = sop(sc)
    return out


def criterion_5():
    base = table1()
    ok, parts = True, []
    checks = [
        ("wide aperture (K_B=4x4, W_B 50x50 vs 100x100)",
         base.replace(bob=fas_bob(4, 2500.0, base.bob.avg_snr)),
         base.replace(bob=fas_bob(4, 10000.0, base.bob.avg_snr))),
        ("dense ports (W_B=1, K_B 20x20 vs 30x30)",
         base.replace(bob=fas_bob(20, 1.0, base.bob.avg_snr), mvn_tol=1e-2),
         base.replace(bob=fas_bob(30, 1.0, base.bob.avg_snr), mvn_tol=1e-2)),
    ]
    for label, s1, s2 in checks:
        # the density-based SOP is only reported, so skip it on the slow large grids
        density_form = s1.bob.grid.ports <= 16
        m1, m2 = _metric_set(s1, density_form), _metric_set(s2, density_form)
        worst = []
        for key in ("asc", "sop_oracle", "see"):
            d, n = abs(m1[key].value - m2[key].value), noise(m1[key], m2[key], s1.mvn_tol)
            ok &= d <= n
            worst.append(f"{key} {d:.2e}/{n:.2e}")
        if density_form:
            worst.append(f"sop_paper {m1['sop_paper'].value:.3e} vs {m2['sop_paper'].value:.3e} (reported)")
        parts.append(f"{label}: " + ", ".join(worst))

    sat = base.replace(node_scale=1.0)
    hi = asc(sat.replace(bob=sat.bob.with_snr(1e6)))
    hi7 = asc(sat.replace(bob=sat.bob.with_snr(1e7)))
    lim = asc_asymptotic(sat.replace(bob=sat.bob.with_snr(1e6)))
    rel = abs(hi.value - lim.value) / lim.value
    step = hi7.value - hi.value
    ok &= rel <= 0.01 and step <= 1e-2
    parts.append(f"saturation: ASC(1e6) {hi.value:.5f} vs asymptote {lim.value:.5f} (rel {rel:.1e} <= 1e-2), "
                 f"ASC(1e7)-ASC(1e6) {step:.1e} (<= 1e-2)")
    return ok, "; ".join(parts)


def criterion_6():
    base = table1()
    g = 10.0
    nodes = {
        "fas": NodeParams.fas("bob", PortGrid(2, 2, 1.0, 1.0), g),
        "mrc": NodeParams.mrc("bob", 4, g),
        "sc": NodeParams.sc("bob", 4, g),
        "none": NodeParams.fas("bob", PortGrid(1, 1, 1.0, 1.0), g),
    }
    res = {}
    for name, node in nodes.items():
        sc = base.replace(bob=node)
        res[name] = (asc(sc).value, sop_oracle(sc).value, sop(sc).value)
    fas_a, fas_s, fas_sp = res["fas"]
    hard = {
        "ASC fas>mrc": fas_a > res["mrc"][0],
        "ASC fas>sc": fas_a > res["sc"][0],
        "SOP fas<mrc": fas_s < res["mrc"][1],
        "SOP fas<sc": fas_s < res["sc"][1],
        "ASC mrc>none": res["mrc"][0] > res["none"][0],
    }
    soft_asc = abs(fas_a - 1.5) <= 0.3 * 1.5
    soft_sop = abs(math.log10(max(fas_s, 1e-300)) + 4) <= 1
    table = ", ".join(f"{k}: asc {v[0]:.4f} sop {v[1]:.3e} (density form {v[2]:.3e})" for k, v in res.items())
    failed = [k for k, v in hard.items() if not v]
    detail = (f"{table}; hard ordering failures: {failed or 'none'}; soft goldens (reported): "
              f"ASC 1.5+-30% {'met' if soft_asc else 'missed'}, SOP ~1e-4 within 1 decade "
              f"{'met' if soft_sop else 'missed'}")
    return not failed, detail


def criterion_7(verbose=True):
    ok, parts = True, []
    m = MarginalModel()
    rule = gauss_laguerre_rule(32)
    for side in (2, 3, 4):
        grid = PortGrid(side, side, 1.0, 1.0)
        R = copula_correlation(jakes_covariance(grid))
        dens = np.array([fas_gain_pdf_paper(float(x), grid, m, R) for x in rule.nodes])
        ders = [fas_gain_cdf_derivative(float(x), grid, m, R) for x in rule.nodes]
        d_int = float(np.sum(rule.exp_weights * [d.value for d in ders]))
        p_int = float(np.sum(rule.exp_weights * dens))
        ok &= abs(d_int - 1.0) <= 2e-3
        parts.append(f"K={side * side}: int dF/dr {d_int:.6f}, int diagonal pdf {p_int:.4g}")

    base = table1()
    eve = base.eve
    worst = 0.0
    bad = []
    for side in K_SIDES:
        for area in W_AREAS:
            for g_db in GAMMA_B_DB:
                gaps = []
                for seed in (1, 2):
                    sc = base.replace(bob=fas_bob(side, area, 10 ** (g_db / 10)), eve=eve,
                                      mvn_tol=1e-2, seed=seed)
                    p, o = sop(sc), sop_oracle(sc)
                    gaps.append((p.value - o.value, math.hypot(p.estimator_error, o.estimator_error)))
                dd = abs(gaps[0][0] - gaps[1][0])
                n = max(3 * math.hypot(gaps[0][1], gaps[1][1]),
                        1e-2 * max(abs(gaps[0][0]), abs(gaps[1][0])))
                worst = max(worst, dd / n if n > 0 else (0.0 if dd == 0 else math.inf))
                if verbose:
                    print(f"  K={side}x{side} W={area} g={g_db:g}dB: gap {gaps[0][0]:+.4e} / {gaps[1][0]:+.4e}",
                          flush=True)
                if dd > n:
                    bad.append(f"{side}x{side}/{area}/{g_db:g}")
    ok &= not bad
    parts.append(f"gap seed-stability: worst ratio {worst:.2f} (<=1), unstable {bad or 'none'}")
    return ok, "; ".join(parts)


CONFIG_8 = """\
seed = 11
mvn_tol = 1e-2

[bob]
ports = 4

[sweep]
axis = "gamma_b_db"
values = [0, 10]
"""


def criterion_8():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "c.toml")
        with open(cfg, "w") as fh:
            fh.write(CONFIG_8)

        def run(*args):
            out = os.path.join(tmp, f"out{len(os.listdir(tmp))}")
            cmd = [sys.executable, "-m", "fas_secrecy.cli", *args, "--config", cfg, "--out", out]
            proc = subprocess.run(cmd, capture_output=True, text=True)
            with open(out, "rb") as fh:
                return proc.returncode, fh.read()

        sweeps = [run("sweep", "--jobs", j) for j in ("1", "1", "4")]
        vals = [run("validate", "--trials", "100000", "--seed", "5", "--jobs", j) for j in ("1", "1", "4")]
    same_sweep = len({s[1] for s in sweeps}) == 1
    same_val = len({v[1] for v in vals}) == 1
    codes = [s[0] for s in sweeps] + [v[0] for v in vals]
    ok = same_sweep and same_val and all(c == 0 for c in codes)
    return ok, (f"sweep byte-identical {same_sweep} ({len(sweeps[0][1])} bytes), validate byte-identical "
                f"{same_val}, exit codes {codes}")


CRITERIA = {
    1: (criterion_1, 1.0),
    2: (criterion_2, 120.0),
    3: (criterion_3, 60.0),
    4: (criterion_4, 900.0),
    5: (criterion_5, 300.0),
    6: (criterion_6, 120.0),
    7: (criterion_7, 300.0),
    8: (criterion_8, 120.0),
}


def run_criterion(n: int):
    fn, budget = CRITERIA[n]
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    in_budget = elapsed <= budget
    return ok and in_budget, f"{detail}; runtime {elapsed:.1f}s (budget {budget:g}s)"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, acceptance_record):
    ok, detail = run_criterion(n)
    acceptance_record(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    status = 0
    for n in wanted:
        ok, detail = run_criterion(n)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
        status |= not ok
    sys.exit(status)
