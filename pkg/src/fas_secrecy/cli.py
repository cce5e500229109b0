"""Command-line entry point: ``fas-secrecy {rule,metrics,sweep,validate,corr}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 validation failure (some |z| > 3).

Verbosity comes from the ``FAS_SECRECY_LOG`` environment variable
(DEBUG, INFO, WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from fas_secrecy import __version__
from fas_secrecy.config import ConfigError, ScenarioSpec, SweepSpec, load_config
from fas_secrecy.metrics import (asc, asc_asymptotic, asc_single_port, see, sop, sop_oracle,
                                 sop_single_port)
from fas_secrecy.montecarlo import CHANNEL_MODELS, MIN_TRIALS, simulate_metrics
from fas_secrecy.quadrature import MAX_ORDER, gauss_laguerre_rule

log = logging.getLogger("fas_secrecy")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
CSV_SCHEMA = "# fas-secrecy v1"
CSV_COLUMNS = ("axis_value", "asc", "asc_err", "asc_asymptotic", "sop_paper", "sop_oracle",
               "see", "kappa", "jitter_applied", "mvn_flag", "error")
Z_LIMIT = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Locale-free round-trippable number."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


# ------------------------------------------------------------------ sweep

def evaluate_point(spec: ScenarioSpec) -> dict:
    """All CSV quantities for one scenario; failures land in ``error``."""
    row = {c: "" for c in CSV_COLUMNS}
    try:
        scenario = spec.build()
        a = asc(scenario)
        a_inf = asc_asymptotic(scenario)
        s_paper = sop(scenario)
        s_oracle = sop_oracle(scenario)
        e = see(scenario, a)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
        return row
    flags = sum(r.diagnostics.get("mvn_unconverged", 0) for r in (a, a_inf, s_paper, s_oracle))
    flags += len(s_paper.diagnostics.get("flags", []))
    row.update(asc=fmt(a.value), asc_err=fmt(a.estimator_error), asc_asymptotic=fmt(a_inf.value),
               sop_paper=fmt(s_paper.value), sop_oracle=fmt(s_oracle.value), see=fmt(e.value),
               kappa=fmt(scenario.kappa),
               jitter_applied=fmt(max(scenario.bob.jitter_applied, scenario.eve.jitter_applied)),
               mvn_flag=fmt(flags))
    return row


def _sweep_point(args):
    sweep, i = args
    spec = sweep.point(i)
    # per-point seed: top-level seed xor point index
    spec = replace(spec, seed=spec.seed ^ i)
    row = evaluate_point(spec)
    row["axis_value"] = fmt(sweep.labels[i])
    return row


def run_sweep(sweep: SweepSpec, jobs: int = 1):
    """Rows (dicts keyed by :data:`CSV_COLUMNS`) in sweep order."""
    tasks = [(sweep, i) for i in range(len(sweep.values))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def write_csv(rows, out, axis: str):
    out.write(f"{CSV_SCHEMA}\n# axis: {axis}\n")
    out.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        out.write(",".join(row[c] for c in CSV_COLUMNS) + "\n")


def read_csv(text: str):
    """Parse a sweep CSV back into dicts of floats (``error`` kept as text)."""
    lines = text.splitlines()
    if not lines or lines[0] != CSV_SCHEMA:
        raise ValueError("missing schema line")
    body = [ln for ln in lines if not ln.startswith("#")]
    header = body[0].split(",")
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected columns {header}")
    rows = []
    for ln in body[1:]:
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"bad row {ln!r}")
        rows.append({h: (c if h == "error" else (float(c) if c else math.nan))
                     for h, c in zip(header, cells)})
    return rows


# --------------------------------------------------------------- validate

def validate(spec: ScenarioSpec, trials: int, seed: int, jobs: int = 1,
             channel_model: str = "copula", dump=None):
    """Analytical vs Monte Carlo comparison.

    Returns ``(report_text, exit_code)``.  The SOP z-score uses the binomial
    error at the analytical probability, so an MC run with zero outages
    still gets a meaningful score.
    """
    if trials < MIN_TRIALS:
        raise UsageError(f"trials must be at least {MIN_TRIALS}, got {trials}")
    scenario = spec.build().replace(seed=seed)
    single = scenario.bob.elements == 1 and scenario.eve.elements == 1
    if single:
        a_val, a_err = asc_single_port(scenario), 0.0
        s_val, s_err = sop_single_port(scenario), 0.0
        unconverged = 0
        source = "closed form (single element)"
    else:
        a = asc(scenario)
        s = sop_oracle(scenario)
        a_val, a_err, s_val, s_err = a.value, a.estimator_error, s.value, s.estimator_error
        unconverged = a.diagnostics["mvn_unconverged"] + s.diagnostics["mvn_unconverged"]
        source = "quadrature + CDF-only SOP"
    p_tot = scenario.total_power
    mc = simulate_metrics(scenario, trials, seed, channel_model=channel_model, jobs=jobs, dump=dump)

    rows = []
    for name, val, err, est, noise in (
        ("asc", a_val, a_err, mc["asc"], mc["asc"].std_error),
        ("sop", s_val, s_err, mc["sop"], math.sqrt(max(s_val * (1.0 - s_val), 0.0) / trials)),
        ("see", a_val / p_tot, a_err / p_tot, mc["see"], mc["see"].std_error),
    ):
        scale = math.hypot(err, noise)
        diff = val - est.mean
        z = 0.0 if diff == 0 else (diff / scale if scale > 0 else math.copysign(math.inf, diff))
        rows.append((name, val, err, est.mean, est.std_error, z))

    buf = io.StringIO()
    buf.write(f"# fas-secrecy {__version__} validate\n")
    buf.write(f"analytical: {source}\n")
    buf.write(f"monte carlo: {trials} trials, seed {seed}, {channel_model} sampler\n")
    buf.write(f"{'metric':<6} {'analytical':>24} {'an_err':>24} {'mc':>24} {'mc_err':>24} {'z':>24}\n")
    for name, val, err, mean, se, z in rows:
        buf.write(f"{name:<6} " + " ".join(f"{fmt(v):>24}" for v in (val, err, mean, se, z)) + "\n")
    ok = all(abs(r[5]) <= Z_LIMIT for r in rows)
    if unconverged:
        buf.write(f"numerical failure: {unconverged} MVN estimates hit the sample cap\n")
        return buf.getvalue(), EXIT_NUMERIC
    buf.write(f"result: {'PASS' if ok else 'FAIL'} (|z| <= {Z_LIMIT:g})\n")
    return buf.getvalue(), EXIT_OK if ok else EXIT_VALIDATION


# -------------------------------------------------------------- commands

def _emit(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_rule(args) -> int:
    if not 1 <= args.order <= MAX_ORDER:
        raise UsageError(f"order must be in 1..{MAX_ORDER}, got {args.order}")
    rule = gauss_laguerre_rule(args.order)
    lines = ["node,weight"] + [f"{fmt(x)},{fmt(w)}" for x, w in zip(rule.nodes, rule.weights)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    spec, _ = load_config(args.config, strict=not args.lenient)
    scenario = spec.build()
    a = asc(scenario)
    results = {
        "asc": a,
        "asc_asymptotic": asc_asymptotic(scenario),
        "sop_paper": sop(scenario),
        "sop_oracle": sop_oracle(scenario),
        "see": see(scenario, a),
    }
    out = [f"gamma_b {fmt(scenario.bob.avg_snr)}", f"gamma_e {fmt(scenario.eve.avg_snr)}",
           f"kappa {fmt(scenario.kappa)}", f"total_power_w {fmt(scenario.total_power)}"]
    unconverged = 0
    for name, r in results.items():
        out.append(f"{name} {fmt(r.value)} +- {fmt(r.estimator_error)}")
        unconverged += r.diagnostics.get("mvn_unconverged", 0)
    out.append(f"sop_gap {fmt(results['sop_paper'].value - results['sop_oracle'].value)}")
    _emit("\n".join(out) + "\n", args.out)
    if unconverged:
        log.error("%d MVN estimates hit the sample cap", unconverged)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    _, sweep = load_config(args.config, strict=not args.lenient)
    if sweep is None:
        raise UsageError(f"{args.config}: no [sweep] section")
    rows = run_sweep(sweep, jobs=args.jobs)
    buf = io.StringIO()
    write_csv(rows, buf, sweep.axis)
    _emit(buf.getvalue(), args.out)
    failed = [r for r in rows if r["error"]]
    if failed:
        log.error("%d of %d sweep points failed", len(failed), len(rows))
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_validate(args) -> int:
    spec, _ = load_config(args.config, strict=not args.lenient)
    if args.seed is None and not spec.seed_given:
        raise UsageError("validate needs a seed: pass --seed or set 'seed' in the config")
    seed = spec.seed if args.seed is None else args.seed
    report, code = validate(spec, args.trials, seed, jobs=args.jobs,
                            channel_model=args.channel_model, dump=args.dump)
    _emit(report, args.out)
    return code


def cmd_corr(args) -> int:
    spec, _ = load_config(args.config, strict=not args.lenient)
    node = getattr(spec.build(), args.node)
    if node.kind != "fas":
        raise UsageError(f"{args.node} is a {node.kind} receiver; only fluid antennas have a port correlation")
    rows = [",".join(fmt(v) for v in row) for row in node.corr.entries]
    head = f"# fas-secrecy v1 correlation {args.node} {node.grid.k1}x{node.grid.k2} jitter {fmt(node.corr.jitter_applied)}"
    _emit("\n".join([head] + rows) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fas-secrecy", description="Secrecy metrics for fluid-antenna wiretap channels.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("rule", help="print a Gauss-Laguerre rule")
    r.add_argument("--order", type=int, required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_rule)

    def config_cmd(name, help_, func):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--config", required=True)
        c.add_argument("--out", default=None, help="output file (default stdout)")
        c.add_argument("--lenient", action="store_true", help="warn on unknown keys instead of failing")
        c.set_defaults(func=func)
        return c

    config_cmd("metrics", "single-point ASC/SOP/SEE", cmd_metrics)
    s = config_cmd("sweep", "parameter sweep to CSV", cmd_sweep)
    s.add_argument("--jobs", type=int, default=1)
    v = config_cmd("validate", "analytical vs Monte Carlo", cmd_validate)
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--channel-model", choices=CHANNEL_MODELS, default="copula")
    v.add_argument("--dump", default=None, help="write per-trial secrecy capacities (.npy or text)")
    c = config_cmd("corr", "dump a port correlation matrix", cmd_corr)
    c.add_argument("--node", choices=("bob", "eve"), default="bob")
    return p


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("FAS_SECRECY_LOG", "WARNING").upper(), None)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("fas-secrecy: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, OSError) as exc:
        print(f"fas-secrecy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"fas-secrecy: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
