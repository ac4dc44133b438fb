"""Run configuration: YAML loading, validation and object builders."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import (
    ClosedGeodesicCurve,
    ClosedHorocycle,
    EuclideanCircle,
    GeodesicCircle,
    HyperbolicQuotient,
    Segment,
    StadiumBilliard,
    UnitSquareBilliard,
)
from .symbols import Multiplication, Separable, Symbol, Tabulated, constant, piecewise_cubic

DEFAULTS = {
    "output": "out",
    "dynamics": {"t_max": 50.0, "j_max": 6, "sigma_band": 1e-3, "tol_match": 1e-6,
                 "samples": 1000, "workers": 1},
    "flow": {"points": 4, "t": 10.0, "dt": 0.5},
    "spectral": {"h": 1.0 / 64, "m": 300, "boundary": "mask"},
    "restriction": {"n_s": None, "taper": "c2", "eps0": 0.2},
    "qer": {"ladder": None, "symmetric_curve": None, "generic_curve": None},
    "symbols": [{"name": "one", "type": "constant", "value": 1.0}],
}
TOP_KEYS = {"seed", "domain", "curves", "symbols", "dynamics", "flow", "spectral",
            "restriction", "qer", "output"}
DOMAIN_TYPES = {"stadium", "square", "modular", "free"}
CURVE_TYPES = {"segment", "circle", "geodesic_circle", "horocycle", "closed_geodesic"}
SYMBOL_TYPES = {"constant", "multiplication", "separable", "tabulated"}


@dataclass
class RunConfig:
    raw: dict
    seed: int
    path: Path | None = None
    source: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def output(self) -> Path:
        return Path(self.raw["output"])

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _positive(cfg: dict, path: str, bad: list[str], allow_none: bool = False):
    node = cfg
    keys = path.split(".")
    for k in keys[:-1]:
        node = node.get(k, {})
    v = node.get(keys[-1])
    if v is None and allow_none:
        return
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
        bad.append(path)


def validate(raw: dict) -> dict:
    """Check the schema; raise ConfigError naming every offending key."""
    bad: list[str] = [k for k in raw if k not in TOP_KEYS]
    if "seed" not in raw or not isinstance(raw.get("seed"), int) or raw["seed"] < 0:
        bad.append("seed")
    dom = raw.get("domain")
    if not isinstance(dom, dict) or dom.get("type") not in DOMAIN_TYPES:
        bad.append("domain.type")
    elif dom["type"] == "stadium":
        for k in ("half_length", "cap_radius"):
            _positive(raw, f"domain.{k}", bad, allow_none=True)
    curves = raw.get("curves")
    if not isinstance(curves, list) or not curves:
        bad.append("curves")
    else:
        names = set()
        for i, c in enumerate(curves):
            if not isinstance(c, dict) or c.get("type") not in CURVE_TYPES:
                bad.append(f"curves[{i}].type")
                continue
            if not c.get("name") or c["name"] in names:
                bad.append(f"curves[{i}].name")
            names.add(c.get("name"))
            for k in ("radius", "height"):
                if k in c and not (isinstance(c[k], (int, float)) and c[k] > 0):
                    bad.append(f"curves[{i}].{k}")
    for i, s in enumerate(raw.get("symbols", [])):
        if not isinstance(s, dict) or s.get("type") not in SYMBOL_TYPES or not s.get("name"):
            bad.append(f"symbols[{i}]")
            continue
        if s["type"] == "tabulated":
            if not isinstance(s.get("file"), str):
                bad.append(f"symbols[{i}].file")
            continue
        if s["type"] != "constant":
            kn, vals = s.get("knots"), s.get("values")
            if not (isinstance(kn, list) and isinstance(vals, list) and len(kn) == len(vals) >= 2):
                bad.append(f"symbols[{i}].knots")
            elif any(b <= a for a, b in zip(kn, kn[1:])) or kn[0] < 0 or kn[-1] > 1:
                bad.append(f"symbols[{i}].knots")
    for path in ("dynamics.t_max", "dynamics.j_max", "dynamics.tol_match", "dynamics.samples",
                 "dynamics.workers", "flow.points", "flow.t", "flow.dt", "spectral.h",
                 "spectral.m", "restriction.eps0"):
        _positive(raw, path, bad)
    _positive(raw, "dynamics.sigma_band", bad)
    if raw.get("spectral", {}).get("boundary") not in ("mask", "linear"):
        bad.append("spectral.boundary")
    if raw.get("restriction", {}).get("taper") not in ("c2", "none"):
        bad.append("restriction.taper")
    _positive(raw, "restriction.n_s", bad, allow_none=True)
    lad = raw.get("qer", {}).get("ladder")
    if lad is not None and (not isinstance(lad, list) or any(b <= a for a, b in zip(lad, lad[1:]))):
        bad.append("qer.ladder")
    if bad:
        raise ConfigError(f"invalid configuration keys: {', '.join(sorted(set(bad)))}", sorted(set(bad)))
    return raw


def load_config(path, seed: int | None = None, output: str | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}", ["--config"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}", ["--config"]) from exc
    if not isinstance(user, dict):
        raise ConfigError("config must be a mapping", ["<root>"])
    raw = _merge(DEFAULTS, user)
    if seed is not None:
        raw["seed"] = int(seed)
    if output is not None:
        raw["output"] = str(output)
    validate(raw)
    return RunConfig(raw, int(raw["seed"]), Path(path), user)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_domain(cfg: RunConfig):
    d = cfg.raw["domain"]
    kind = d["type"]
    if kind == "stadium":
        return StadiumBilliard(float(d.get("half_length", 1.0)), float(d.get("cap_radius", 1.0)))
    if kind == "square":
        return UnitSquareBilliard()
    return HyperbolicQuotient(kind)


def build_curve(spec: dict, domain):
    kind = spec["type"]
    if kind == "segment":
        return Segment(spec["start"], spec["end"], name=spec["name"])
    if kind == "circle":
        return EuclideanCircle(spec["center"], float(spec["radius"]), name=spec["name"])
    if not isinstance(domain, HyperbolicQuotient):
        raise ConfigError(f"curve type {kind} needs a hyperbolic domain", [f"curves.{spec['name']}"])
    if kind == "geodesic_circle":
        c = spec["center"]
        return GeodesicCircle(complex(c[0], c[1]), float(spec["radius"]), domain,
                              injectivity_radius=spec.get("injectivity_radius"), name=spec["name"])
    if kind == "horocycle":
        return ClosedHorocycle(float(spec["height"]), domain, name=spec["name"])
    return ClosedGeodesicCurve(np.asarray(spec["matrix"], float), domain, name=spec["name"])


def build_curves(cfg: RunConfig, domain) -> dict:
    return {c["name"]: build_curve(c, domain) for c in cfg.raw["curves"]}


def load_table(path, name: str) -> Tabulated:
    """CSV with columns s, sigma, value on a full rectangular grid (s in arclength units)."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"symbol table not found: {path}", [f"symbols.{name}.file"]) from exc
    s_nodes = np.unique(data[:, 0])
    sig_nodes = np.unique(data[:, 1])
    if data.shape[0] != s_nodes.size * sig_nodes.size:
        raise ConfigError(f"symbol table {path} is not a full grid", [f"symbols.{name}.file"])
    vals = np.full((s_nodes.size, sig_nodes.size), np.nan)
    vals[np.searchsorted(s_nodes, data[:, 0]), np.searchsorted(sig_nodes, data[:, 1])] = data[:, 2]
    return Tabulated(s_nodes, sig_nodes, vals, name=name)


def build_symbol(spec: dict, H, base: Path | None = None) -> Symbol:
    """Symbols are specified per unit arclength fraction u = s / L and scaled to H."""
    if spec["type"] == "tabulated":
        path = Path(spec["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        return load_table(path, spec["name"])
    if spec["type"] == "constant":
        a = constant(float(spec.get("value", 1.0)))
        a.name = spec["name"]
        return a
    knots = np.asarray(spec["knots"], float) * H.length
    vals = np.asarray(spec["values"], float)
    V = piecewise_cubic(knots, vals, H.length, H.closed)
    sup = float(np.abs(V(np.linspace(0, H.length, 2001))).max())
    if spec["type"] == "multiplication":
        return Multiplication(V, sup_norm=sup, name=spec["name"])
    p = int(spec.get("sigma_power", 1))
    return Separable(V, lambda s, p=p: s ** p, sup_norm=sup, name=spec["name"])


def build_symbols(cfg: RunConfig, H) -> list[Symbol]:
    base = cfg.path.parent if cfg.path is not None else None
    return [build_symbol(s, H, base) for s in cfg.raw["symbols"]]
