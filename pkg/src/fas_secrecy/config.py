"""Scenario and sweep configuration files.

A config is a small TOML file with optional top-level keys and sections
``[bob]``, ``[eve]``, ``[power]`` and ``[sweep]``.  Missing keys take the
reference simulation defaults.  Every dB/dBm value is converted to linear
units here, once; the numerical core never sees decibels.

Example::

    seed = 7
    secrecy_rate = 1.0

    [bob]
    kind = "fas"        # fas | mrc | sc
    ports = 4           # square count, or k1/k2
    area = 1.0          # in wavelength^2, or w1/w2
    gamma_db = 10       # pins the average SNR; omit to derive it from P, d, noise

    [sweep]
    axis = "gamma_b_db"
    values = [0, 10, 20]
"""

from __future__ import annotations

import logging
import math
import re
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from fas_secrecy.geometry import PortGrid
from fas_secrecy.metrics import (DEFAULT_ORDER, NodeParams, PowerModel, SecrecyScenario,
                                 db_to_linear, dbm_to_watt, link_snr)
from fas_secrecy.copula import MarginalModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SWEEP_AXES = ("gamma_b_db", "p_tx_dbm", "k_b_ports", "w_b_area", "d_b_meters")

_TOP_KEYS = {"seed", "secrecy_rate", "quad_order", "mvn_tol", "node_scale", "path_loss_exp"}
_NODE_KEYS = {"kind", "ports", "k1", "k2", "area", "w1", "w2", "antennas", "eta", "omega",
              "gamma_db", "avg_snr", "distance", "noise_dbm"}
_POWER_KEYS = {"p_tx_dbm", "alpha", "p_circuit_dbm", "p_activate_dbm", "active_ports"}
_SWEEP_KEYS = {"axis", "values", "start", "stop", "count", "spacing"}
_SECTIONS = {"bob": _NODE_KEYS, "eve": _NODE_KEYS, "power": _POWER_KEYS, "sweep": _SWEEP_KEYS}

_NODE_DEFAULTS = {
    "bob": dict(noise_dbm=-30.0),
    "eve": dict(noise_dbm=-20.0),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and, when known, the line."""


@dataclass(frozen=True)
class NodeSpec:
    """One receiver, linear units.  ``avg_snr=None`` means derive it from the link budget."""

    role: str
    kind: str = "fas"
    k1: int = 2
    k2: int = 2
    w1: float = 1.0
    w2: float = 1.0
    antennas: int = 4
    eta: float = 1.0
    omega: float = 1.0
    avg_snr: float | None = None
    distance: float = 1.0
    noise: float = dbm_to_watt(-30.0)


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to build a :class:`SecrecyScenario`, before SNRs are resolved."""

    bob: NodeSpec = NodeSpec("bob")
    eve: NodeSpec = NodeSpec("eve", noise=dbm_to_watt(-20.0))
    power: PowerModel = PowerModel()
    path_loss_exp: float = 2.1
    secrecy_rate: float = 1.0
    quad_order: int = DEFAULT_ORDER
    mvn_tol: float = 1e-3
    seed: int = 0
    node_scale: float | str = "auto"
    seed_given: bool = False

    def node_snr(self, node: NodeSpec) -> float:
        if node.avg_snr is not None:
            return node.avg_snr
        return link_snr(self.power.p_tx, node.distance, self.path_loss_exp, node.noise)

    def build(self) -> SecrecyScenario:
        return SecrecyScenario(
            bob=_build_node(node=self.bob, snr=self.node_snr(self.bob)),
            eve=_build_node(node=self.eve, snr=self.node_snr(self.eve)),
            secrecy_rate=self.secrecy_rate, power=self.power, quad_order=self.quad_order,
            mvn_tol=self.mvn_tol, seed=self.seed, node_scale=self.node_scale)


def _build_node(node: NodeSpec, snr: float) -> NodeParams:
    marginal = MarginalModel(eta=node.eta)
    if node.kind == "fas":
        return NodeParams.fas(node.role, PortGrid(node.k1, node.k2, node.w1, node.w2), snr,
                              marginal, node.omega)
    if node.kind == "mrc":
        return NodeParams.mrc(node.role, node.antennas, snr, marginal)
    return NodeParams.sc(node.role, node.antennas, snr, marginal)


@dataclass(frozen=True)
class SweepSpec:
    """A one-dimensional sweep.  ``labels`` keep the values as written; ``values`` are linear."""

    axis: str
    labels: tuple
    values: tuple
    fixed: ScenarioSpec = field(default_factory=ScenarioSpec)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {', '.join(SWEEP_AXES)}, got {self.axis!r}")
        if not self.values or len(self.values) != len(self.labels):
            raise ConfigError("sweep needs at least one value")

    def point(self, i: int) -> ScenarioSpec:
        v = self.values[i]
        s = self.fixed
        if self.axis == "gamma_b_db":
            return replace(s, bob=replace(s.bob, avg_snr=v))
        if self.axis == "p_tx_dbm":
            return replace(s, power=replace(s.power, p_tx=v))
        if self.axis == "k_b_ports":
            side = math.isqrt(v)
            return replace(s, bob=replace(s.bob, kind="fas", k1=side, k2=side))
        if self.axis == "w_b_area":
            side = math.sqrt(v)
            return replace(s, bob=replace(s.bob, w1=side, w2=side))
        return replace(s, bob=replace(s.bob, distance=v))


# ------------------------------------------------------------ parsing

def _line_of(text: str, section: str | None, key: str) -> int | None:
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        head = re.fullmatch(r"\[\s*([A-Za-z0-9_.]+)\s*\]", line)
        if head:
            current = head.group(1)
            continue
        m = re.match(r"([A-Za-z0-9_.\"]+)\s*=", line)
        if not m:
            continue
        name = m.group(1).strip('"')
        if current == section and name == key:
            return lineno
        if current is None and section is not None and name == f"{section}.{key}":
            return lineno
    return None


class _Reader:
    def __init__(self, text: str, source: str, strict: bool):
        self.text, self.source, self.strict = text, source, strict

    def where(self, section, key) -> str:
        name = key if section is None else f"{section}.{key}"
        line = _line_of(self.text, section, key)
        return f"{self.source}: key '{name}'" + (f" (line {line})" if line else "")

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: {msg}")

    def number(self, table, section, key, default, *, positive=False, nonneg=False,
               integer=False):
        if key not in table:
            return default
        v = table[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(section, key, f"expected a number, got {v!r}")
        if not math.isfinite(v):
            self.fail(section, key, "must be finite")
        if integer and (not float(v).is_integer()):
            self.fail(section, key, f"expected an integer, got {v!r}")
        if positive and not v > 0:
            self.fail(section, key, f"must be positive, got {v!r}")
        if nonneg and not v >= 0:
            self.fail(section, key, f"must be non-negative, got {v!r}")
        return int(v) if integer else float(v)

    def check_keys(self, table, section, allowed):
        for key in table:
            if key in allowed:
                continue
            if isinstance(table[key], dict) and section is None and key in _SECTIONS:
                continue
            msg = "unknown key"
            if self.strict:
                self.fail(section, key, msg)
            log.warning("%s: %s, ignored", self.where(section, key), msg)


def _read_node(rd: _Reader, table: dict, role: str) -> NodeSpec:
    rd.check_keys(table, role, _NODE_KEYS)
    kind = table.get("kind", "fas")
    if kind not in ("fas", "mrc", "sc"):
        rd.fail(role, "kind", f"must be fas, mrc or sc, got {kind!r}")
    pinned = [k for k in ("gamma_db", "avg_snr") if k in table]
    budget = [k for k in ("distance", "noise_dbm") if k in table]
    if len(pinned) > 1:
        rd.fail(role, pinned[1], "give either gamma_db or avg_snr, not both")
    if pinned and budget:
        rd.fail(role, budget[0], f"contradicts '{role}.{pinned[0]}': the average SNR is either "
                                 "pinned or derived from transmit power, distance and noise")
    avg_snr = None
    if "gamma_db" in table:
        avg_snr = db_to_linear(rd.number(table, role, "gamma_db", None))
    elif "avg_snr" in table:
        avg_snr = rd.number(table, role, "avg_snr", None, nonneg=True)

    k1 = k2 = 2
    if "ports" in table:
        if "k1" in table or "k2" in table:
            rd.fail(role, "ports", "give either ports or k1/k2, not both")
        ports = rd.number(table, role, "ports", None, positive=True, integer=True)
        side = math.isqrt(ports)
        if side * side != ports:
            rd.fail(role, "ports", f"{ports} ports is not a square count; "
                                   "give the grid factorization explicitly as k1 and k2")
        k1 = k2 = side
    else:
        k1 = rd.number(table, role, "k1", 2, positive=True, integer=True)
        k2 = rd.number(table, role, "k2", k1, positive=True, integer=True)
    if "area" in table:
        if "w1" in table or "w2" in table:
            rd.fail(role, "area", "give either area or w1/w2, not both")
        w1 = w2 = math.sqrt(rd.number(table, role, "area", None, positive=True))
    else:
        w1 = rd.number(table, role, "w1", 1.0, positive=True)
        w2 = rd.number(table, role, "w2", w1, positive=True)

    return NodeSpec(
        role=role, kind=kind, k1=k1, k2=k2, w1=w1, w2=w2,
        antennas=rd.number(table, role, "antennas", 4, positive=True, integer=True),
        eta=rd.number(table, role, "eta", 1.0, positive=True),
        omega=rd.number(table, role, "omega", 1.0, positive=True),
        avg_snr=avg_snr,
        distance=rd.number(table, role, "distance", 1.0, positive=True),
        noise=dbm_to_watt(rd.number(table, role, "noise_dbm", _NODE_DEFAULTS[role]["noise_dbm"])),
    )


def _read_power(rd: _Reader, table: dict) -> PowerModel:
    rd.check_keys(table, "power", _POWER_KEYS)
    active = table.get("active_ports")
    return PowerModel(
        p_tx=dbm_to_watt(rd.number(table, "power", "p_tx_dbm", -27.0)),
        alpha=rd.number(table, "power", "alpha", 1.0, positive=True),
        p_circuit=dbm_to_watt(rd.number(table, "power", "p_circuit_dbm", 20.0)),
        p_activate=dbm_to_watt(rd.number(table, "power", "p_activate_dbm", 10.0)),
        active_ports=None if active is None else rd.number(table, "power", "active_ports", None,
                                                           positive=True, integer=True),
    )


def _read_sweep(rd: _Reader, table: dict, fixed: ScenarioSpec) -> SweepSpec | None:
    if not table:
        return None
    rd.check_keys(table, "sweep", _SWEEP_KEYS)
    axis = table.get("axis")
    if axis not in SWEEP_AXES:
        rd.fail("sweep", "axis", f"must be one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    if "values" in table:
        if any(k in table for k in ("start", "stop", "count")):
            rd.fail("sweep", "values", "give either values or start/stop/count, not both")
        raw = table["values"]
        if not isinstance(raw, list) or not raw:
            rd.fail("sweep", "values", "expected a nonempty list")
        labels = []
        for v in raw:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                rd.fail("sweep", "values", f"entries must be finite numbers, got {v!r}")
            labels.append(v)
    else:
        for k in ("start", "stop", "count"):
            if k not in table:
                rd.fail("sweep", k, "missing; a sweep needs values or start/stop/count")
        start = rd.number(table, "sweep", "start", None)
        stop = rd.number(table, "sweep", "stop", None)
        count = rd.number(table, "sweep", "count", None, positive=True, integer=True)
        spacing = table.get("spacing", "linear")
        if spacing == "linear":
            grid = np.linspace(start, stop, count)
        elif spacing == "log":
            if not (start > 0 and stop > 0):
                rd.fail("sweep", "start", "log spacing needs positive start and stop")
            grid = np.geomspace(start, stop, count)
        else:
            rd.fail("sweep", "spacing", f"must be 'linear' or 'log', got {spacing!r}")
        labels = [float(v) for v in grid]
        if axis == "k_b_ports":
            labels = [round(v) for v in labels]

    values = []
    for v in labels:
        if axis == "gamma_b_db":
            values.append(db_to_linear(v))
        elif axis == "p_tx_dbm":
            values.append(dbm_to_watt(v))
        elif axis == "k_b_ports":
            if float(v) != int(v) or v < 1 or math.isqrt(int(v)) ** 2 != int(v):
                rd.fail("sweep", "values", f"k_b_ports entries must be square port counts, got {v!r}")
            values.append(int(v))
        else:
            if not v > 0:
                rd.fail("sweep", "values", f"{axis} entries must be positive, got {v!r}")
            values.append(float(v))
    return SweepSpec(axis, tuple(labels), tuple(values), fixed)


def parse_config(text: str, source: str = "<config>", strict: bool = True):
    """Parse config text into ``(ScenarioSpec, SweepSpec | None)``."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    rd = _Reader(text, source, strict)
    rd.check_keys(data, None, _TOP_KEYS)
    for name in _SECTIONS:
        if name in data and not isinstance(data[name], dict):
            rd.fail(None, name, "expected a section")

    seed = rd.number(data, None, "seed", 0, integer=True)
    node_scale = data.get("node_scale", "auto")
    if node_scale != "auto":
        node_scale = rd.number(data, None, "node_scale", None, positive=True)
    spec = ScenarioSpec(
        bob=_read_node(rd, data.get("bob", {}), "bob"),
        eve=_read_node(rd, data.get("eve", {}), "eve"),
        power=_read_power(rd, data.get("power", {})),
        path_loss_exp=rd.number(data, None, "path_loss_exp", 2.1, positive=True),
        secrecy_rate=rd.number(data, None, "secrecy_rate", 1.0, nonneg=True),
        quad_order=rd.number(data, None, "quad_order", DEFAULT_ORDER, positive=True, integer=True),
        mvn_tol=rd.number(data, None, "mvn_tol", 1e-3, positive=True),
        seed=seed,
        node_scale=node_scale,
        seed_given="seed" in data,
    )
    try:
        spec.build()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return spec, _read_sweep(rd, data.get("sweep", {}), spec)


def load_config(path, strict: bool = True):
    """Read a config file; returns ``(ScenarioSpec, SweepSpec | None)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 ({exc})") from None
    return parse_config(text, str(path), strict)
