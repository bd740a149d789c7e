"""Command-line front end.

Exit codes: 0 on success, 1 when a solver did not converge (partial output
is still written), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, EstkitError, NotConverged
from .experiments import (
    ScalingFit,
    SweepRecord,
    deviation_experiment,
    matrix_norm_bound_check,
    section_diameter_experiment,
    sweep,
    symmetrization_contraction_check,
)
from .geometry import local_mean_width_mc, mean_width_mc
from .sets import make_set

__all__ = ["main", "run", "emit", "CSV_HEADER"]

CSV_HEADER = ["experiment", "n", "m", "s", "r", "eps", "trial_count", "err_mean", "err_median",
              "err_q90", "bound_value", "seed"]

# subcommand -> experiment name in the sweep config
SWEEP_COMMANDS = {
    "recover": "recover",
    "dict-recover": "dict-recover",
    "lowrank": "lowrank",
    "complete": "complete",
    "onebit": "onebit",
    "project": "project",
    "regress": "regress",
    "phase": "phase",
    "tessellate": "tessellate",
    "sweep": None,
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _csv_row(rec: SweepRecord) -> list[str]:
    p, e = rec.params, rec.error_stats
    vals = [p.get("experiment"), p.get("n"), p.get("m"), p.get("s"), p.get("r"), p.get("eps"),
            rec.trials, e["mean"], e["median"], e["q90"], rec.bound_value, p.get("seed")]
    return [_fmt(v) for v in vals]


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def render(records, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(_csv_row(rec))
        return buf.getvalue()
    if fmt == "json":
        # json.dumps writes floats with repr, which round-trips exactly
        return json.dumps([_json_safe(r.to_dict()) for r in records], indent=1) + "\n"
    raise ConfigError(f"format must be csv or json, got {fmt!r}")


def emit(records, fit: ScalingFit | None, fmt: str = "csv", path=None) -> str:
    """Write records (and a ``.fit.json`` sidecar when ``fit`` is given).

    With ``path=None`` the text goes to standard output.  Empty ``records``
    raise ``ValueError`` before anything is written.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    text = render(records, fmt)
    if path is None:
        sys.stdout.write(text)
        if fit is not None:
            sys.stderr.write("fit: " + json.dumps(fit.to_dict()) + "\n")
        return text
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    if fit is not None:
        path.with_suffix(".fit.json").write_text(json.dumps(fit.to_dict(), indent=1) + "\n")
    return text


def write_manifest(path, config: dict, seed, command: str) -> Path:
    path = Path(path)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": _json_safe(config),
    }
    out = path.with_suffix(".manifest.json")
    out.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out


def _int_list(text: str):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    return vals if len(vals) != 1 else vals[0]


def _float_list(text: str):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    return vals if len(vals) != 1 else vals[0]


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from exc


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="trial parallelism (env ESTKIT_WORKERS)")
    p.add_argument("--output", help="output file; standard output if omitted")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--solver", choices=["auto", "lp", "splitting"])
    p.add_argument("--trials", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="estkit", description="Structured estimation experiments.")
    parser.add_argument("--version", action="version", version=f"estkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    w = sub.add_parser("width", help="Monte Carlo mean width of a set")
    _common(w)
    w.add_argument("--set", type=_json_arg, required=True, help="set descriptor as JSON")
    w.add_argument("--local", type=float, help="local width at this radius")

    for name in SWEEP_COMMANDS:
        p = sub.add_parser(name, help=f"{name} sweep" if name != "sweep" else "run a config sweep")
        _common(p)
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=_int_list, help="comma-separated m grid")
        p.add_argument("--s", type=_int_list)
        p.add_argument("--r", type=_int_list)
        p.add_argument("--eps", type=_float_list)
        p.add_argument("--set", type=_json_arg, help="set descriptor as JSON")
        if name == "sweep":
            p.add_argument("--experiment")

    v = sub.add_parser("verify", help="geometric inequality checks")
    _common(v)
    v.add_argument("check", choices=["deviation", "symmetrization", "gordon", "section"])
    v.add_argument("--n", type=int, default=64)
    v.add_argument("--m", type=int, default=256)
    v.add_argument("--points", type=int, default=100)
    v.add_argument("--d1", type=int, default=100)
    v.add_argument("--d2", type=int, default=100)
    v.add_argument("--dist", default="Gaussian", choices=["Gaussian", "Rademacher"])
    v.add_argument("--set", type=_json_arg)
    return parser


def _overrides(args) -> dict:
    ov = {
        "seed": args.seed,
        "workers": args.workers,
        "output": args.output,
        "format": args.format,
        "solver": args.solver,
        "trials": args.trials,
        "n": getattr(args, "n", None),
        "grid.m": getattr(args, "m", None),
        "grid.s": getattr(args, "s", None),
        "grid.r": getattr(args, "r", None),
        "grid.eps": getattr(args, "eps", None),
        "set": getattr(args, "set", None),
    }
    experiment = SWEEP_COMMANDS.get(args.command) or getattr(args, "experiment", None)
    ov["experiment"] = experiment
    return ov


def _run_sweep(args) -> int:
    if args.command == "sweep" and args.config is None and getattr(args, "experiment", None) is None:
        raise ConfigError("sweep needs --config or --experiment")
    cfg = load_config(args.config, _overrides(args))
    records, fit = sweep(cfg)
    emit(records, fit, cfg.format, cfg.output)
    if cfg.output:
        write_manifest(cfg.output, cfg.to_dict(), cfg.seed, args.command)
    if any(r.extra.get("not_converged") for r in records):
        print("warning: some trials did not converge", file=sys.stderr)
        return 1
    return 0


def _write_json(obj, args, command: str, config: dict) -> None:
    text = json.dumps(_json_safe(obj), indent=1) + "\n"
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
        write_manifest(args.output, config, config.get("seed"), command)
    else:
        sys.stdout.write(text)


def _run_width(args) -> int:
    K = make_set(args.set)
    trials = args.trials or 10000
    seed = args.seed or 0
    if args.local is not None:
        est = local_mean_width_mc(K, args.local, trials, seed)
    else:
        est = mean_width_mc(K, trials, seed)
    config = {"set": args.set, "trials": trials, "seed": seed, "local": args.local}
    _write_json(est.to_dict(), args, "width", config)
    return 0


def _run_verify(args) -> int:
    seed = args.seed or 0
    trials = args.trials or 100
    config = {k: v for k, v in vars(args).items() if k not in ("output",)}
    config.update(seed=seed, trials=trials)
    if args.check == "deviation":
        rng = np.random.default_rng(seed)
        T = rng.standard_normal((args.points, args.n))
        T /= np.linalg.norm(T, axis=1, keepdims=True)
        out = deviation_experiment(T, args.m, trials, seed).to_dict()
    elif args.check == "symmetrization":
        rng = np.random.default_rng(seed)
        T = rng.standard_normal((args.points, args.n))
        out = symmetrization_contraction_check(T, args.m, trials, seed).to_dict()
    elif args.check == "gordon":
        out = matrix_norm_bound_check(args.d1, args.d2, args.dist, trials, seed).to_dict()
    else:
        K = make_set(args.set) if args.set else make_set("L1Ball", n=args.n, radius=1.0)
        out = section_diameter_experiment(K, args.m, 50, trials, seed).to_dict()
    _write_json(out, args, f"verify {args.check}", config)
    return 0


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "width":
            return _run_width(args)
        if args.command == "verify":
            return _run_verify(args)
        return _run_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return 1
    except (EstkitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
