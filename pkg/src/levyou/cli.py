"""Command-line front end.

Exit codes: 0 on success, 2 when the conditions give no conclusion (or a
required classification is not reached), 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, lab
from .conditions import CLASSIFICATIONS, check_model
from .config import load_config, load_schema
from .errors import FitDegenerateError, LevyOUError
from .levy import SmallJumpScheme
from .ou import sample_invariant, simulate_endpoint
from .parallel import run_chunked, sub_seed

EXIT_OK, EXIT_ERROR, EXIT_CONDITION = 0, 1, 2
SEED_DERIVATION = "numpy SeedSequence(seed).spawn per chunk of 16384 draws; sub-tasks keyed by spawn_key"


# --- output helpers ------------------------------------------------------------------

def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text, path):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _csv(header, rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in r))
    return "\n".join(lines) + "\n"


def _meta(args, cfg):
    return {"command": args.command, "seed": int(args.seed), "workers": int(args.workers),
            "package_version": __version__, "seed_derivation": SEED_DERIVATION,
            "config_name": cfg.name}


def _document(kind, args, cfg, **body):
    doc = {"schema_version": 1, "kind": kind, "meta": _meta(args, cfg), **body}
    jsonschema.validate(doc, load_schema("report"))
    return doc


def _floats(text):
    try:
        vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _scheme(cfg):
    return SmallJumpScheme(epsilon=float(cfg.defaults["small_jump_epsilon"]))


def _prefix_path(prefix, suffix):
    if prefix is None or prefix == "-":
        return None
    return f"{prefix}{suffix}"


# --- commands --------------------------------------------------------------------------

def cmd_check(args, cfg):
    d = cfg.defaults
    rep = check_model(cfg.model, epsilon=args.epsilon if args.epsilon is not None else d["epsilon"],
                      rho=args.rho if args.rho is not None else d["rho"],
                      alpha=args.alpha if args.alpha is not None else d["alpha"],
                      xi_max=d["xi_max"])
    _emit(_dumps(_document("condition-report", args, cfg, report=rep.to_dict())), args.out)
    if rep.classification == "none":
        return EXIT_CONDITION
    if args.require and CLASSIFICATIONS.index(rep.classification) < CLASSIFICATIONS.index(args.require):
        return EXIT_CONDITION
    return EXIT_OK


def cmd_simulate(args, cfg):
    x = cfg.point(args.x if args.x is not None else cfg.defaults["x"])
    n = args.n or cfg.defaults["n"]
    scheme = _scheme(cfg)
    draws = np.concatenate(run_chunked(
        lambda rng, m: simulate_endpoint(cfg.model, x, args.t, scheme, rng, m),
        n, args.seed, args.workers))
    header = [f"x{i}" for i in range(cfg.model.dim)]
    _emit(_csv(header, draws.tolist()), args.out)
    return EXIT_OK


def cmd_tv_decay(args, cfg):
    d = cfg.defaults
    x = cfg.point(args.x if args.x is not None else d["x"])
    ts = args.t_grid or d["t_grid"]
    n = args.n or d["n"]
    eps = args.epsilon if args.epsilon is not None else (d["epsilon"] or 1.0)
    method = args.method
    if args.vs_invariant:
        res = lab.tv_decay_vs_invariant(cfg.model, x, ts, method, n, args.seed, eps, args.workers,
                                        _scheme(cfg))
    else:
        if args.y is None:
            raise LevyOUError("tv-decay needs --y or --vs-invariant")
        y = cfg.point(args.y)
        res = lab.tv_decay_two_points(cfg.model, x, y, ts, method, n, args.seed, eps, args.workers,
                                      _scheme(cfg))
    tables = res if isinstance(res, list) else [res]
    rows = [[r.t, r.tv, r.err, r.method] for tab in tables for r in tab.rows]
    _emit(_csv(["t", "tv", "err", "method"], rows), _prefix_path(args.out, ".csv"))
    fit_table = tables[0]
    if np.all(fit_table.tv == 0):
        fit = {"skipped": "all TV values are zero (identical laws)"}
    else:
        try:
            fit = lab.fit_decay(fit_table, args.family, alpha=args.alpha, x=x).to_dict()
        except FitDegenerateError as exc:
            fit = {"skipped": str(exc)}
    doc = _document("rate-fit", args, cfg, fit=fit)
    _emit(_dumps(doc), _prefix_path(args.out, ".fit.json"))
    return EXIT_OK


def cmd_coupling(args, cfg):
    d = cfg.defaults
    x = cfg.point(args.x if args.x is not None else d["x"])
    y = cfg.point(args.y)
    ts = args.t_grid or d["t_grid"]
    n = args.n or d["n"]
    eps = args.epsilon if args.epsilon is not None else (d["epsilon"] or 1.0)
    rows = []
    for i, t in enumerate(ts):
        row = lab._coupling_row(cfg.model, x, y, eps, t, n, sub_seed(args.seed, i), args.workers,
                                _scheme(cfg))
        e = row.extra
        rows.append([t, e["raw"] / 2, e["raw_se"] / 2, row.tv, row.err, e["p_no_jump"],
                     e["p_no_jump_expected"]])
    header = ["t", "p_not_coupled", "p_not_coupled_se", "bound_rb", "bound_rb_se",
              "p_no_jump", "p_no_jump_expected"]
    _emit(_csv(header, rows), args.out)
    return EXIT_OK


def cmd_invariant(args, cfg):
    n = args.n or cfg.defaults["n"]
    tol = cfg.defaults["tail_tol"]
    scheme = _scheme(cfg)
    horizon = []

    def chunk(rng, m):
        draws, T = sample_invariant(cfg.model, rng, tol, scheme, size=m)
        horizon.append(T)
        return draws

    draws = np.concatenate(run_chunked(chunk, n, args.seed, args.workers))
    _emit(_csv([f"x{i}" for i in range(cfg.model.dim)], draws.tolist()), _prefix_path(args.out, ".csv"))
    ks = lab.invariant_ks(cfg.model, draws, horizon[0], cfg.defaults["oracle_tail_tol"])
    _emit(_dumps(_document("invariant-ks", args, cfg, ks=ks)), _prefix_path(args.out, ".ks.json"))
    return EXIT_OK


def cmd_report(args, cfg):
    d = cfg.defaults
    params = lab.ReportParams(
        x=float(np.asarray(d["x"], dtype=float).ravel()[0]),
        t_grid_exponential=tuple(d["t_grid"]), t_grid_algebraic=tuple(d["t_grid_algebraic"]),
        n_mc=int(d["n"]), seed=int(args.seed), workers=int(args.workers),
        epsilon=d["epsilon"], rho=d["rho"], alpha=d["alpha"], xi_max=d["xi_max"])
    rep = lab.full_report(cfg.model, params)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = _document("full-report", args, cfg, report=rep.to_dict())
    _emit(_dumps(doc), out / "report.json")
    for i, tab in enumerate(rep.tables):
        _emit(tab.to_csv(), out / f"decay_{i}_{tab.method}.csv")
    if rep.conditions is None:
        return EXIT_ERROR
    return EXIT_CONDITION if rep.conditions.classification == "none" else EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "tv-decay": cmd_tv_decay,
    "coupling": cmd_coupling,
    "invariant": cmd_invariant,
    "report": cmd_report,
}


def build_parser():
    p = argparse.ArgumentParser(prog="levyou", description="Levy-driven OU ergodicity toolkit")
    p.add_argument("--version", action="version", version=f"levyou {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="model configuration (JSON)")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default from config)")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: config, then LEVYOU_WORKERS, then 1)")

    sp = sub.add_parser("check", help="run the condition checkers and classify")
    common(sp)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--require", choices=CLASSIFICATIONS,
                    help="exit 2 unless this classification or a stronger one is reached")
    sp.add_argument("--out")

    sp = sub.add_parser("simulate", help="endpoint draws X_t^x as CSV")
    common(sp)
    sp.add_argument("--x", type=_floats)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--n", type=int)
    sp.add_argument("--out")

    sp = sub.add_parser("tv-decay", help="TV decay table (CSV) and rate fit (JSON)")
    common(sp)
    sp.add_argument("--x", type=_floats)
    grp = sp.add_mutually_exclusive_group(required=True)
    grp.add_argument("--y", type=_floats)
    grp.add_argument("--vs-invariant", action="store_true")
    sp.add_argument("--method", default="oracle",
                    choices=["oracle", "coupling", "histogram", "monte-carlo"])
    sp.add_argument("--t-grid", type=_floats)
    sp.add_argument("--n", type=int)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--family", default="exponential", choices=list(lab.FAMILIES))
    sp.add_argument("--alpha", type=float, help="alpha for the alpha-exponential family")
    sp.add_argument("--out", help="output prefix: writes PREFIX.csv and PREFIX.fit.json")

    sp = sub.add_parser("coupling", help="coupling frequencies per t (CSV)")
    common(sp)
    sp.add_argument("--x", type=_floats)
    sp.add_argument("--y", type=_floats, required=True)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--t-grid", type=_floats)
    sp.add_argument("--n", type=int)
    sp.add_argument("--out")

    sp = sub.add_parser("invariant", help="stationary draws (CSV) and KS against the oracle (JSON)")
    common(sp)
    sp.add_argument("--n", type=int)
    sp.add_argument("--out", help="output prefix: writes PREFIX.csv and PREFIX.ks.json")

    sp = sub.add_parser("report", help="full report bundle")
    common(sp)
    sp.add_argument("--out-dir", required=True)
    return p


def _provenance(exc):
    mod = "levyou"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("levyou"):
            mod = name
    return mod


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors share the generic error code; 2 is reserved for unmet --require
        return EXIT_ERROR if exc.code else 0
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.defaults["seed"])
        if args.workers is None:
            args.workers = int(os.environ.get("LEVYOU_WORKERS") or cfg.defaults["workers"])
        if args.workers < 1 or args.seed < 0:
            raise LevyOUError("--workers must be >= 1 and --seed >= 0")
        return COMMANDS[args.command](args, cfg)
    except LevyOUError as exc:
        print(f"levyou: error in {_provenance(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (jsonschema.ValidationError, ValueError) as exc:
        print(f"levyou: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
