"""Command line: ``mixsearch {solve,regions,simulate,compare,sweep}``.

Outputs go under ``--out`` (default ``$MIXSEARCH_OUT`` or ``./mixsearch-out``)::

    bundles/<key>.json            solved surfaces (+ <key>.refine.npy)
    exports/*.csv                 plot-ready tables
    results/<run>.json            summaries
    results/<run>.config.json     every effective setting of the run

Settings come from defaults, then ``--config file.json``, then explicit flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .dp import SolverSettings
from .io import (
    SurfaceBundle, export_surface_csv, load_bundle, solve_cached, write_json, write_trials_csv,
)
from .model import ConfigurationError, DensityPair, ModelParams, scan_prior
from .quadrature import QuadratureSpec
from .sim import compare_strategies, cost_slope, run_batch_records, summarize, sweep_snr

OUT_ENV = "MIXSEARCH_OUT"

DEFAULTS = {
    "pi": 0.05, "c": 0.01, "sigma2": 1.0, "snr_db": 3.0, "p": None, "seed": 0,
    "grid_m": 201, "quad_points": 129, "tol": 1e-7, "max_iter": 20000,
    "loglr_bound": 40.0, "loglr_points": 401,
    "trials": 10000, "workers": 1, "calib_trials": None, "snr": "0,2,4,6,8,10",
    "out": None, "bundle": None, "force": False, "json": False,
}

log = logging.getLogger("mixsearch")


def _add_common(p: argparse.ArgumentParser, sim: bool):
    S = argparse.SUPPRESS
    m = p.add_argument_group("model")
    m.add_argument("--pi", type=float, default=S, help="prior probability a sequence is F1 (default 0.05)")
    m.add_argument("--c", type=float, default=S, help="cost per observation (default 0.01)")
    m.add_argument("--sigma2", type=float, default=S, help="noise variance (default 1)")
    x = m.add_mutually_exclusive_group()
    x.add_argument("--snr-db", type=float, default=S, help="signal power as P/sigma2 in dB (default 3)")
    x.add_argument("--p", type=float, default=S, help="signal power P")
    m.add_argument("--seed", type=int, default=S, help="base RNG seed (default 0)")
    s = p.add_argument_group("solver")
    s.add_argument("--grid-m", type=int, default=S, help="belief grid resolution M (default 201)")
    s.add_argument("--quad-points", type=int, default=S, help="quadrature nodes (default 129)")
    s.add_argument("--tol", type=float, default=S, help="value-iteration tolerance (default 1e-7)")
    s.add_argument("--max-iter", type=int, default=S, help="value-iteration sweep cap (default 20000)")
    s.add_argument("--loglr-bound", type=float, default=S, help="log-ratio grid half-range (default 40)")
    s.add_argument("--loglr-points", type=int, default=S, help="log-ratio grid points, odd (default 401)")
    o = p.add_argument_group("run")
    o.add_argument("--out", default=S, help=f"output directory (default ${OUT_ENV} or ./mixsearch-out)")
    o.add_argument("--bundle", default=S, help="use this solved bundle instead of solving")
    o.add_argument("--force", action="store_true", default=S, help="re-solve even if a cached bundle exists")
    o.add_argument("--json", action="store_true", default=S, help="print a JSON summary instead of a table")
    o.add_argument("--config", default=None, help="JSON file with any of the settings above")
    if sim:
        o.add_argument("--trials", type=int, default=S, help="Monte-Carlo trials (default 10000)")
        o.add_argument("--workers", type=int, default=S, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixsearch", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_, sim in [("solve", "solve g and V_s and write a bundle", False),
                             ("regions", "export the stopping and switching regions", False),
                             ("simulate", "Monte-Carlo run of the mixed policy", True),
                             ("compare", "mixed policy against the error-matched single-observation policy", True),
                             ("sweep", "re-solve and simulate over a list of SNRs", True)]:
        p = sub.add_parser(name, help=help_)
        _add_common(p, sim)
        if name == "compare":
            p.add_argument("--calib-trials", type=int, default=argparse.SUPPRESS,
                           help="trials per calibration step (default: --trials)")
        if name == "sweep":
            p.add_argument("--snr", default=argparse.SUPPRESS, help="comma-separated SNRs in dB (default 0,2,4,6,8,10)")
    return ap


def resolve_config(ns: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(DEFAULTS)
    if ns.config:
        try:
            extra = json.loads(Path(ns.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read config {ns.config}: {exc}") from exc
        extra = {k.replace("-", "_"): v for k, v in extra.items()}
        unknown = set(extra) - set(cfg)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if extra.get("p") is not None:
            if extra.get("snr_db") is not None:
                raise ConfigurationError("config gives both snr_db and p; keep one")
            extra["snr_db"] = None
        cfg.update(extra)
    flags = {k: v for k, v in vars(ns).items() if k in cfg}
    if "p" in flags:
        cfg["snr_db"] = None
    if "snr_db" in flags:
        cfg["p"] = None
    cfg.update(flags)
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUT_ENV, "mixsearch-out")
    cfg["command"] = ns.command
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    for key in ("trials", "workers"):
        if cfg[key] < 1:
            raise ConfigurationError(f"--{key} must be >= 1, got {cfg[key]}")
    if cfg["calib_trials"] is not None and cfg["calib_trials"] < 1:
        raise ConfigurationError("--calib-trials must be >= 1")
    if not cfg["sigma2"] > 0:
        raise ConfigurationError(f"--sigma2 must be positive, got {cfg['sigma2']}")
    if cfg["p"] is not None and cfg["p"] < 0:
        raise ConfigurationError(f"--p must be >= 0, got {cfg['p']}")
    # constructing the objects applies every remaining invariant
    model_params(cfg)
    solver_settings(cfg)
    snr_list(cfg)


def model_params(cfg: dict) -> ModelParams:
    if cfg["p"] is not None:
        pair = DensityPair.gaussian(cfg["sigma2"], p=cfg["p"])
    else:
        pair = DensityPair.gaussian(cfg["sigma2"], snr_db=cfg["snr_db"])
    return ModelParams(cfg["pi"], cfg["c"], pair, cfg["seed"])


def solver_settings(cfg: dict) -> SolverSettings:
    return SolverSettings(grid_m=cfg["grid_m"], quad=QuadratureSpec(n_points=cfg["quad_points"]),
                          tol=cfg["tol"], max_iter=cfg["max_iter"], loglr_bound=cfg["loglr_bound"],
                          loglr_points=cfg["loglr_points"])


def snr_list(cfg: dict) -> list:
    raw = cfg["snr"]
    vals = raw if isinstance(raw, list) else [s for s in str(raw).split(",") if s.strip()]
    try:
        out = [float(v) for v in vals]
    except ValueError as exc:
        raise ConfigurationError(f"bad --snr list {raw!r}") from exc
    if not out or not all(math.isfinite(v) for v in out):
        raise ConfigurationError(f"bad --snr list {raw!r}")
    return out


# --------------------------------------------------------------------------
# commands


def _bundle(cfg: dict):
    if cfg["bundle"]:
        b = load_bundle(cfg["bundle"])
        return b, Path(cfg["bundle"]), True
    return solve_cached(model_params(cfg), solver_settings(cfg), cfg["out"], force=cfg["force"])


def _echo(cfg: dict, stem: str, bundle: SurfaceBundle = None) -> Path:
    d = dict(cfg)
    if bundle is not None:
        # a reused bundle fixes the model and solver settings
        d["effective_params"] = bundle.params.to_dict()
        d["effective_settings"] = bundle.settings.to_dict()
        d["bundle_key"] = bundle.key
    return write_json(d, Path(cfg["out"]) / "results" / f"{stem}.config.json")


def _emit(cfg: dict, summary: dict, table: list):
    if cfg["json"]:
        print(json.dumps(summary, sort_keys=True, indent=1))
    else:
        width = max(len(k) for k, _ in table)
        for k, v in table:
            print(f"{k:<{width}}  {v}")


def cmd_solve(cfg: dict) -> int:
    bundle, path, hit = _bundle(cfg)
    out = Path(cfg["out"])
    g, vs, ac = bundle.surfaces()
    ex = {name: str(export_surface_csv(s, out / "exports" / f"{name}_{bundle.key}.csv"))
          for name, s in (("g", g), ("V_s", vs), ("A_c", ac))}
    _echo(cfg, f"solve_{bundle.key}", bundle)
    d = bundle.diagnostics
    prior = scan_prior(bundle.params)
    summary = {"bundle": str(path), "cache_hit": hit, "A_s": bundle.a_s,
               "V_s_prior": vs.at(*prior), "exports": ex, **{k: d[k] for k in ("refinement", "scanning")}}
    _emit(cfg, summary, [
        ("bundle", f"{path}{' (cached)' if hit else ''}"),
        ("refinement", f"{d['refinement']['iterations']} sweeps, residual {d['refinement']['residual']:.2e}"),
        ("scanning", f"{d['scanning']['iterations']} sweeps, residual {d['scanning']['residual']:.2e}"),
        ("A_s", f"{bundle.a_s:.6f}"),
        ("V_s(prior)", f"{summary['V_s_prior']:.6f}"),
        ("g(1,0), g(0,0)", f"{g.node(1, 0):g}, {g.node(0, 0):g}"),
    ])
    return 0


def cmd_regions(cfg: dict) -> int:
    bundle, path, hit = _bundle(cfg)
    csv_path = export_surface_csv(bundle, Path(cfg["out"]) / "exports" / f"regions_{bundle.key}.csv")
    _echo(cfg, f"regions_{bundle.key}", bundle)
    n_tau, n_phi = int(bundle.stop_mask.sum()), int(bundle.switch_mask.sum())
    summary = {"bundle": str(path), "regions_csv": str(csv_path), "R_tau_nodes": n_tau, "R_phi_nodes": n_phi,
               "nodes": int(bundle.stop_mask.size)}
    _emit(cfg, summary, [("regions", str(csv_path)), ("R_tau nodes", f"{n_tau} / {bundle.stop_mask.size}"),
                         ("R_phi nodes", f"{n_phi} / {bundle.stop_mask.size}")])
    return 0


def _summary_rows(s) -> list:
    return [(f"{s.strategy} delay", f"{s.mean_delay:.4f} +- {s.se_delay:.4f}"),
            (f"{s.strategy} tau1 / tau2", f"{s.mean_tau1:.4f} / {s.mean_tau2:.4f}"),
            (f"{s.strategy} error", f"{s.error_rate:.4f} +- {s.se_error:.4f}"),
            (f"{s.strategy} cost", f"{s.mean_cost:.4f} +- {s.se_cost:.4f}")]


def cmd_simulate(cfg: dict) -> int:
    bundle, path, _ = _bundle(cfg)
    params = ModelParams(bundle.params.pi, bundle.params.c, bundle.params.pair, cfg["seed"])
    policy = bundle.to_policy()
    records = run_batch_records(policy, params, cfg["trials"], cfg["seed"], cfg["workers"])
    s = summarize(records, params, cfg["seed"], "mixed")
    stem = f"simulate_{bundle.key}_s{cfg['seed']}"
    out = Path(cfg["out"])
    write_trials_csv(records, out / "exports" / f"trials_{bundle.key}_s{cfg['seed']}.csv")
    (out / "results").mkdir(parents=True, exist_ok=True)
    (out / "results" / f"{stem}.json").write_text(s.to_json() + "\n")
    _echo(cfg, stem, bundle)
    v_prior = bundle.surfaces()[1].at(*scan_prior(params))
    summary = {**asdict(s), "V_s_prior": v_prior, "bundle": str(path)}
    _emit(cfg, summary, _summary_rows(s) + [("V_s(prior)", f"{v_prior:.4f}"),
                                            ("|cost - V_s| / SE", f"{abs(s.mean_cost - v_prior) / s.se_cost:.2f}"
                                             if s.se_cost > 0 else "n/a")])
    return 0


def cmd_compare(cfg: dict) -> int:
    bundle, path, _ = _bundle(cfg)
    params = ModelParams(bundle.params.pi, bundle.params.c, bundle.params.pair, cfg["seed"])
    r = compare_strategies(bundle.to_policy(), params, cfg["trials"], cfg["seed"],
                           calib_trials=cfg["calib_trials"], workers=cfg["workers"])
    stem = f"compare_{bundle.key}_s{cfg['seed']}"
    summary = r.to_dict()
    write_json(summary, Path(cfg["out"]) / "results" / f"{stem}.json")
    _echo(cfg, stem, bundle)
    rows = _summary_rows(r.mixed) + (_summary_rows(r.baseline) if r.baseline else [])
    rows += [("baseline pi_U", f"{r.baseline_threshold:.6f}"),
             ("delay ratio", f"{r.delay_ratio:.4f}"),
             ("savings", f"{r.savings:.4f} +- {r.savings_se:.4f}")]
    if r.uninformative:
        rows.append(("note", "observations are uninformative (P = 0); both strategies degenerate"))
    _emit(cfg, summary, rows)
    return 0


def cmd_sweep(cfg: dict) -> int:
    base = model_params(cfg)
    settings = solver_settings(cfg)
    out = Path(cfg["out"])

    def factory(p):
        b, _, _ = solve_cached(p, settings, out, force=cfg["force"])
        return b.to_policy()

    snrs = snr_list(cfg)
    points = sweep_snr(base, snrs, cfg["trials"], cfg["seed"], policy_factory=factory, workers=cfg["workers"])
    slope = cost_slope(points)
    rows_out = [{"snr_db": p.snr_db, "v_s_prior": p.v_s_prior, "error": p.error,
                 "summary": asdict(p.summary) if p.summary else None} for p in points]
    stem = f"sweep_{base.solve_hash()}_s{cfg['seed']}"
    write_json({"points": rows_out, "slope": slope}, out / "results" / f"{stem}.json")
    csv_path = out / "exports" / f"{stem}.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w") as fh:
        fh.write("snr_db,mean_cost,se_cost,mean_delay,error_rate,v_s_prior\n")
        for p in points:
            if p.summary:
                s = p.summary
                fh.write(f"{p.snr_db!r},{s.mean_cost!r},{s.se_cost!r},{s.mean_delay!r},{s.error_rate!r},"
                         f"{p.v_s_prior!r}\n")
    _echo(cfg, stem)
    table = [(f"{p.snr_db:g} dB", f"cost {p.summary.mean_cost:.4f} +- {p.summary.se_cost:.4f}  "
              f"V_s {p.v_s_prior:.4f}" if p.summary else f"FAILED {p.error}") for p in points]
    _emit(cfg, {"points": rows_out, "slope": slope}, table + [("slope", f"{slope:.5f} per dB")])
    return 0 if all(p.summary for p in points) else 1


COMMANDS = {"solve": cmd_solve, "regions": cmd_regions, "simulate": cmd_simulate,
            "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(ns)
    except (ConfigurationError, ValueError) as exc:
        ap.error(str(exc))   # exits with status 2
    try:
        return COMMANDS[cfg["command"]](cfg)
    except Exception as exc:
        if ns.verbose:
            raise
        print(f"mixsearch {cfg['command']}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
