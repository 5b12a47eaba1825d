"""Command-line entry point: ``srnmlmc <simulate|mlmc|convergence|histogram|complexity>``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__, kernels
from .engine import LEVEL_COLUMNS, MlmcError, mlmc_estimate
from .kernels import LevelSpec
from .models import get_model
from .network import Observable
from . import studies

DEFAULT_LEVELS = {"decay": (1, 12), "gene": (3, 10), "mm": (1, 10)}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _floats(text: str):
    return [float(t) for t in text.split(",") if t.strip()]


def _levels(text: str):
    lo, sep, hi = text.partition("-")
    if sep:
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def _load(args):
    model = get_model(args.model)
    if args.observable:
        model_obs = Observable.parse(args.observable, model.network)
    else:
        model_obs = model.observable
    return model, model_obs


def _common(p, out_default: str):
    p.add_argument("--model", default="decay", help="bundled model name (decay, gene, mm) or JSON path")
    p.add_argument("--observable", default=None, help="proj:<species>, proj:<1-based index> or lin:w1,w2,...")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=out_default, help="output directory")


def _delta(args) -> float:
    return args.delta if args.use_is else 0.0


def _clean(obj):
    # JSON has no inf/nan; write them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def cmd_simulate(args) -> int:
    model, g = _load(args)
    dt0 = args.dt0 if args.dt0 is not None else model.dt0_value
    spec = LevelSpec(args.level, dt0, model.final_time)
    delta = _delta(args)
    rows = kernels.coupled_trajectory(model.network, model.x0, model.final_time, spec, args.seed,
                                      args.replicate, delta, g)
    names = model.network.species_names
    columns = ["t"] + [f"fine_{n}" for n in names] + [f"coarse_{n}" for n in names] + \
        ["cumulative_log_likelihood"]
    head = studies.header_line(args.seed, model.name, delta,
                               {"level": args.level, "replicate": args.replicate})
    path = studies.write_csv(Path(args.out) / "trajectory.csv", head, columns, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_mlmc(args) -> int:
    model, g = _load(args)
    try:
        res = mlmc_estimate(model, args.tol, args.delta, use_is=args.use_is, l0=args.l0, dt0=args.dt0,
                            seed=args.seed, max_level=args.max_level, observable=g,
                            pilot=args.pilot, workers=args.workers, confidence=args.confidence)
    except MlmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    head = studies.header_line(args.seed, model.name, res.config["delta"],
                               {"tol": args.tol, "use_is": args.use_is})
    studies.write_csv(out / "levels.csv", head, LEVEL_COLUMNS, [s.as_row() for s in res.levels])
    with open(out / "result.json", "w") as fh:
        json.dump(_clean(res.to_dict()), fh, indent=2)
        fh.write("\n")
    print(f"estimate {res.estimate:.6g}  stat_err {res.statistical_error:.3g}  "
          f"bias {res.bias_estimate:.3g}  L {res.config['L']}  work {res.total_work:.4g}")
    print(f"wrote {out / 'levels.csv'} and {out / 'result.json'}")
    return 0


def cmd_convergence(args) -> int:
    model, g = _load(args)
    if args.levels:
        levels = _levels(args.levels)
    else:
        lo, hi = DEFAULT_LEVELS.get(model.name, (model.l0 + 1, model.l0 + 8))
        levels = list(range(lo, hi + 1))
    samples = args.samples or (studies.FULL_SAMPLES if args.full else studies.SMOKE_SAMPLES)
    runs = studies.convergence_study(model, args.deltas, levels, samples, args.seed, g, args.workers)
    a, b = studies.write_convergence(args.out, model, runs, args.seed)
    for r in runs:
        print(f"delta={r.delta:g}  alpha={r.alpha:.3f}  beta={r.beta:.3f}  gamma={r.gamma:.3f}  "
              f"kappa_L={r.kappa_L:.4g}")
    print(f"wrote {a} and {b}")
    return 0


def cmd_histogram(args) -> int:
    model, g = _load(args)
    delta = _delta(args)
    out = Path(args.out)
    head = studies.header_line(args.seed, model.name, delta, {"level": args.level, "samples": args.samples})
    if args.kind in ("coupling", "both"):
        h = studies.coupling_histogram(model, args.level, delta, args.samples, args.seed, g, args.workers)
        studies.write_histogram(out / "coupling_hist.csv", h, head, "diff")
        print(f"P(diff = 0) = {h.mass(0):.4f}")
    if args.kind in ("is-jumps", "both"):
        hj, hs = studies.is_jump_histogram(model, args.level, delta, args.samples, args.seed, g,
                                           args.workers)
        studies.write_histogram(out / "is_jumps_hist.csv", hj, head, "is_jumps")
        studies.write_histogram(out / "is_steps_hist.csv", hs, head, "is_steps")
        print(f"P(is_jumps = 1 | is_jumps > 0) = {hj.conditional_mass(1):.4f}")
    print(f"wrote histograms to {out}")
    return 0


def cmd_complexity(args) -> int:
    model, g = _load(args)
    rows = studies.complexity_sweep(model, args.tols, args.methods, args.seed, args.repeats, g,
                                    args.workers)
    deltas = sorted({studies.parse_method(m)[1] for m in args.methods})
    head = studies.header_line(args.seed, model.name, deltas, {"repeats": args.repeats})
    path = studies.write_csv(Path(args.out) / "complexity.csv", head, studies.COMPLEXITY_COLUMNS, rows)
    if len(set(args.tols)) >= 2:
        for m in args.methods:
            name, delta = studies.parse_method(m)
            print(f"{m}: work slope {studies.work_slope(rows, name, delta):.3f}")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srnmlmc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="dump one coupled fine/coarse trajectory as CSV")
    _common(p, "out/simulate")
    p.add_argument("--level", type=int, default=4)
    p.add_argument("--delta", type=float, default=0.75)
    p.add_argument("--is", dest="use_is", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--dt0", type=float, default=None)
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mlmc", help="adaptive MLMC estimate of E[g(X(T))]")
    _common(p, "out/mlmc")
    p.add_argument("--tol", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.75)
    p.add_argument("--is", dest="use_is", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--l0", type=int, default=None, help="coarsest level (model default if omitted)")
    p.add_argument("--dt0", type=float, default=None, help="step size of level 0 (default T)")
    p.add_argument("--max-level", type=int, default=20)
    p.add_argument("--pilot", type=int, default=1000)
    p.add_argument("--confidence", type=float, default=None,
                   help="target P(|error| <= TOL) instead of RMS error <= TOL")
    p.set_defaults(func=cmd_mlmc)

    p = sub.add_parser("convergence", help="per-level statistics and fitted rates for several deltas")
    _common(p, "out/convergence")
    p.add_argument("--deltas", type=_floats, default=[0.0, 0.25, 0.5, 0.75],
                   help="comma list; 0 means no change of measure")
    p.add_argument("--levels", default=None, help="range like 1-12 or a comma list")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--full", action="store_true", help=f"use {studies.FULL_SAMPLES} samples per level")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("histogram", help="coupling and IS-jump histograms at one level")
    _common(p, "out/histogram")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.75)
    p.add_argument("--is", dest="use_is", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--kind", choices=["coupling", "is-jumps", "both"], default="both")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("complexity", help="work versus TOL for MC-SSA and MLMC with/without IS")
    _common(p, "out/complexity")
    p.add_argument("--tols", type=_floats, default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--methods", type=lambda s: [m.strip() for m in s.split(",") if m.strip()],
                   default=["mc_ssa", "mlmc", "mlmc_is:0.75"])
    p.add_argument("--repeats", type=int, default=1)
    p.set_defaults(func=cmd_complexity)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
