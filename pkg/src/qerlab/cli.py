"""Command-line driver: ``qerlab <subcommand> --config run.yaml``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, build_curves, build_domain, build_symbols, load_config
from .dynamics import (
    TrajectoryAbort,
    flow,
    jth_return,
    sample_liouville,
    sample_section,
)
from .errors import ConfigError, DependencyError, QerError
from .geometry import HyperbolicQuotient, PhasePoint
from .qer import qer_report
from .restriction import MatrixElementRecord, matrix_elements
from .spectral import SpectralBatch, assemble_laplacian, domain_hash, eigensolve, weyl_check
from .symbols import omega
from .symmetry import SymmetryParams, indicator_batch, verdict_from_results

log = logging.getLogger("qerlab")

SUBCOMMANDS = ("flow-trace", "section-orbit", "symmetry", "spectrum", "restrict", "qer", "report")
SPECTRUM_FILE = "spectrum.bin"
RECORDS_FILE = "matrix_elements.csv"
QER_FILE = "qer.json"
SYMMETRY_FILE = "symmetry.json"
RECORD_FIELDS = ("curve", "symbol", "j", "lambda", "value", "norm2", "imag", "aliasing", "taper")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path: Path, header, rows, units: str | None = None) -> Path:
    with open(path, "w", newline="") as fh:
        if units:
            fh.write(f"# units: {units}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _write_json(path: Path, obj) -> Path:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _require(out: Path, name: str, producer: str) -> Path:
    p = out / name
    if not p.exists():
        raise DependencyError(f"{name} not found in {out}; run `{producer}` first", producer)
    return p


def _load_batch(cfg: RunConfig, domain) -> SpectralBatch:
    batch = SpectralBatch.load(_require(cfg.output, SPECTRUM_FILE, "spectrum"))
    if batch.domain_id != domain_hash(domain):
        raise DependencyError("spectrum batch was computed for another domain; re-run `spectrum`",
                              "spectrum")
    return batch


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_flow_trace(cfg: RunConfig, threads: int) -> list[Path]:
    domain = build_domain(cfg)
    fc = cfg.section("flow")
    rng = np.random.default_rng(_sub_seed(cfg.seed, 1))
    if isinstance(domain, HyperbolicQuotient) and domain.group == "free":
        th = rng.uniform(0, 2 * math.pi, fc["points"])
        starts = [PhasePoint(0.0, 1.0, math.cos(a), math.sin(a), domain.kind) for a in th]
    else:
        starts = sample_liouville(domain, int(fc["points"]), rng)
    times = np.arange(0.0, fc["t"] + 0.5 * fc["dt"], fc["dt"])
    rows = []
    for i, p in enumerate(starts):
        for t in times:
            try:
                q = flow(domain, p, float(t)).as_float()
            except TrajectoryAbort:
                rows.append((i, float(t), "nan", "nan", "nan", "nan"))
                break
            rows.append((i, float(t), q.x, q.y, q.dx, q.dy))
    return [_write_csv(cfg.output / "flow_trace.csv", ("orbit", "t", "x", "y", "dx", "dy"), rows,
                       "t in unit-speed time; position in domain coordinates")]


def cmd_section_orbit(cfg: RunConfig, threads: int) -> list[Path]:
    domain = build_domain(cfg)
    dyn = cfg.section("dynamics")
    rows = []
    for ci, (name, H) in enumerate(build_curves(cfg, domain).items()):
        rng = np.random.default_rng(_sub_seed(cfg.seed, 2, ci))
        for i, q in enumerate(sample_section(H, int(cfg.section("flow")["points"]), rng,
                                             dyn["sigma_band"])):
            rows.append((name, i, 0, 0.0, q.s, q.sigma, q.side, ""))
            rec = jth_return(domain, H, q, int(dyn["j_max"]), dyn["t_max"], dyn["sigma_band"])
            for j, (t, p) in enumerate(zip(rec.times, rec.points), start=1):
                rows.append((name, i, j, t, p.s, p.sigma, p.side, ""))
            if rec.count < dyn["j_max"]:
                rows.append((name, i, rec.count + 1, "nan", "nan", "nan", 0, rec.reason))
    return [_write_csv(cfg.output / "section_orbit.csv",
                       ("curve", "sample", "j", "T", "s", "sigma", "side", "censored"), rows,
                       "T cumulative return time; s arclength; sigma in [-1, 1]")]


def cmd_symmetry(cfg: RunConfig, threads: int) -> list[Path]:
    domain = build_domain(cfg)
    dyn = cfg.section("dynamics")
    if dyn["samples"] < 100:
        raise ConfigError("symmetry needs at least 100 samples", ["dynamics.samples"])
    out = {"schema": "1.0", "curves": {}}
    rows = []
    for ci, (name, H) in enumerate(build_curves(cfg, domain).items()):
        params = SymmetryParams(int(dyn["j_max"]), float(dyn["t_max"]), float(dyn["tol_match"]),
                                float(dyn["sigma_band"]), _sub_seed(cfg.seed, 3, ci),
                                max(threads, int(dyn["workers"])))
        results = indicator_batch(domain, H, int(dyn["samples"]), params)
        v = verdict_from_results(results, params)
        log.info("symmetry %s: estimate %.4f +- %.4f (censored %.3f)", name, v.estimate,
                 v.stderr, v.censored_fraction)
        out["curves"][name] = v.to_dict()
        for i, r in enumerate(results):
            j, k = r.witness if r.witness else ("", "")
            rows.append((name, i, int(r.censored), r.error, j, k, int(r.symmetric(params.tol_match))))
    return [_write_json(cfg.output / SYMMETRY_FILE, out),
            _write_csv(cfg.output / "symmetry_witnesses.csv",
                       ("curve", "sample", "censored", "mismatch", "j", "k", "symmetric"), rows,
                       "mismatch in the scaled phase metric (time, arclength / L, angle / pi)")]


def cmd_spectrum(cfg: RunConfig, threads: int) -> list[Path]:
    domain = build_domain(cfg)
    if isinstance(domain, HyperbolicQuotient):
        raise ConfigError("spectrum needs a planar billiard domain", ["domain.type"])
    sc = cfg.section("spectral")
    A, grid = assemble_laplacian(domain, float(sc["h"]), sc["boundary"])
    batch = eigensolve(A, grid, int(sc["m"]), domain)
    batch.save(cfg.output / SPECTRUM_FILE)
    batch.write_csv(cfg.output / "eigenvalues.csv")
    paths = [cfg.output / SPECTRUM_FILE, cfg.output / "eigenvalues.csv"]
    if batch.m >= 20:
        rep = weyl_check(batch, domain, A)
        paths.append(_write_json(cfg.output / "weyl.json", rep.to_dict()))
    return paths


def cmd_restrict(cfg: RunConfig, threads: int) -> list[Path]:
    domain = build_domain(cfg)
    batch = _load_batch(cfg, domain)
    rc = cfg.section("restriction")
    rows = []
    for name, H in build_curves(cfg, domain).items():
        syms = build_symbols(cfg, H)
        recs = matrix_elements(syms, batch, H, taper_id=rc["taper"], n_s=rc["n_s"],
                               eps0=float(rc["eps0"]))
        for a in syms:
            for r in recs[a.name]:
                rows.append((name, a.name, r.j, r.lam, r.value, r.norm2, r.imag, int(r.aliasing),
                             r.taper_id))
    return [_write_csv(cfg.output / RECORDS_FILE, RECORD_FIELDS, rows,
                       "lambda = sqrt(eigenvalue); value = Re<Op(a)u,u> over L^2(H, ds)")]


def _read_records(path: Path) -> dict[tuple[str, str], list[MatrixElementRecord]]:
    out: dict[tuple[str, str], list[MatrixElementRecord]] = {}
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rec = MatrixElementRecord(int(row["j"]), float(row["lambda"]), float(row["value"]),
                                  float(row["norm2"]), row["symbol"], row["taper"],
                                  float(row["imag"]), bool(int(row["aliasing"])))
        out.setdefault((row["curve"], row["symbol"]), []).append(rec)
    return out


def _qer_reports(cfg: RunConfig) -> dict:
    domain = build_domain(cfg)
    recs = _read_records(_require(cfg.output, RECORDS_FILE, "restrict"))
    batch = _load_batch(cfg, domain)
    curves = build_curves(cfg, domain)
    qc = cfg.section("qer")
    reports = {}
    for (cname, sname), rs in sorted(recs.items()):
        H = curves[cname]
        a = next(s for s in build_symbols(cfg, H) if s.name == sname)
        rep = qer_report(rs, omega(a, domain, H), sname, cname, batch.parity,
                         ladder=qc["ladder"], low_norm_ref=H.length / domain.area)
        reports[f"{cname}/{sname}"] = rep.to_dict()
    return reports


def cmd_qer(cfg: RunConfig, threads: int) -> list[Path]:
    reports = _qer_reports(cfg)
    rows = []
    for key, r in reports.items():
        lad = r["ladder"]
        for n, e, s in zip(lad["N"], lad["E"], lad["S"]):
            rows.append((r["curve"], r["symbol"], n, e, s, r["omega"]))
    return [_write_json(cfg.output / QER_FILE, {"schema": "1.0", "reports": reports}),
            _write_csv(cfg.output / "ladders.csv", ("curve", "symbol", "N", "E", "S", "omega"), rows,
                       "E mean of first N matrix elements; S mean squared deviation from omega")]


PLOT_SCRIPT = '''"""Plot value histograms and variance ladders from report.json (needs matplotlib)."""
import json
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "report.json"
rep = json.load(open(path))["qer"]
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
for key, r in rep.items():
    h = r["histogram"]
    ax1.stairs(h["counts"], h["edges"], label=key)
    ax2.loglog(r["ladder"]["N"], r["ladder"]["S"], "o-", label=key)
ax1.set_xlabel("matrix element")
ax1.set_ylabel("modes")
ax2.set_xlabel("N")
ax2.set_ylabel("S(N)")
ax1.legend(fontsize=7)
fig.tight_layout()
fig.savefig(path.replace(".json", ".png"), dpi=120)
'''


def cmd_report(cfg: RunConfig, threads: int) -> list[Path]:
    _require(cfg.output, RECORDS_FILE, "restrict")
    reports = _qer_reports(cfg)
    sym_path = cfg.output / SYMMETRY_FILE
    symmetry = json.loads(sym_path.read_text())["curves"] if sym_path.exists() else {}
    rows = []
    for key, r in reports.items():
        v = symmetry.get(r["curve"], {})
        rows.append((r["curve"], r["symbol"], r["omega"], r["ladder"]["E"][-1], r["ladder"]["S"][0],
                     r["ladder"]["S"][-1], r["low_norm"]["fraction"] if r["low_norm"] else "nan",
                     v.get("estimate", "nan")))
    plot = cfg.output / "plot_report.py"
    plot.write_text(PLOT_SCRIPT)
    return [_write_json(cfg.output / "report.json",
                        {"schema": "1.0", "qer": reports, "symmetry": symmetry}),
            _write_csv(cfg.output / "dichotomy.csv",
                       ("curve", "symbol", "omega", "E_last", "S_first", "S_last",
                        "low_norm_fraction", "symmetry_estimate"), rows,
                       "dimensionless; symmetry_estimate is the mu_LH fraction"),
            plot]


COMMANDS = {
    "flow-trace": cmd_flow_trace,
    "section-orbit": cmd_section_orbit,
    "symmetry": cmd_symmetry,
    "spectrum": cmd_spectrum,
    "restrict": cmd_restrict,
    "qer": cmd_qer,
    "report": cmd_report,
}


def _versions() -> dict:
    import gmpy2
    import yaml

    return {"qerlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "gmpy2": gmpy2.version(), "pyyaml": yaml.__version__}


def run(subcommand: str, cfg: RunConfig, threads: int = 1) -> Path:
    """Execute one subcommand and write its manifest; returns the manifest path."""
    cfg.output.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    paths = COMMANDS[subcommand](cfg, threads)
    wall = time.time() - t0
    manifest = {
        "subcommand": subcommand,
        "config_sha256": cfg.digest,
        "config": cfg.raw,
        "seed": cfg.seed,
        "threads": threads,
        "versions": _versions(),
        "wall_seconds": round(wall, 3),
        "outputs": {p.name: _sha256(p) for p in paths},
    }
    mpath = cfg.output / f"manifest_{subcommand.replace('-', '_')}.json"
    _write_json(mpath, manifest)
    return mpath


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qerlab", description=__doc__)
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    ap.add_argument("--out", default=None, help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for samplers")
    ap.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", ["--seed"])
        if args.threads < 1:
            raise ConfigError("--threads must be positive", ["--threads"])
        cfg = load_config(args.config, args.seed, args.out)
        mpath = run(args.subcommand, cfg, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"dependency error: {exc} (required: {exc.required})", file=sys.stderr)
        return 3
    except QerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(mpath)
    return 0


if __name__ == "__main__":
    sys.exit(main())
