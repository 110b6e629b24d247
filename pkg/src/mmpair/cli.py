"""Command-line front end.

Exit codes: 0 success, 1 completed with flagged rows or failed suites,
2 I/O error, 3 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .bounds import (SignOptConfig, rademacher_mc, theorem3_report, theorem4_report,
                     theorem5_bound, theorem6_gap)
from .core import ModalitySet, generate_dataset, load_dataset, save_dataset
from .erm import TrainConfig, train
from .errors import ConfigurationError, MMPairError
from .harness import (PLOT_KINDS, SweepSpec, error_rows, generator_from_dict, plot_data,
                      read_sweep, run_sweep, write_plot_data, write_sweep)
from .metric import MetricConfig, load_model, save_model
from .risk import LossSpec, block_risk, sobol_grid, ustat_risk
from .verify import FAULTS, SUITES, run_suites

EXIT_OK, EXIT_FLAGGED, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

log = logging.getLogger("mmpair")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for I/O here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _read_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return data


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=1, default=_jsonable)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _jsonable(v):
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return str(v)


def _seed(args, default: int) -> int:
    return default if args.seed is None else args.seed


def cmd_generate(args) -> int:
    cfg = _read_json(args.config)
    layout, gt = generator_from_dict(cfg)
    n = cfg.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        raise ConfigurationError(f"n: must be an integer >= 2, got {n!r}")
    seed = _seed(args, int(cfg.get("seed", 0)))
    ds = generate_dataset(layout, n, gt, seed)
    save_dataset(ds, args.out)
    log.info("wrote %d samples to %s", n, args.out)
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(max_iters=args.max_iters, step_schedule=args.step_schedule,
                       step0=args.step0, tol=args.tol, risk_mode=args.risk_mode,
                       seed=_seed(args, 0))


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    mask = ModalitySet.parse(args.modalities, ds.layout.num_modalities)
    mc = MetricConfig.from_data(ds, args.eigen_cap)
    spec = LossSpec.for_config(mc, ds.layout.total_dim, args.margin)
    res = train(ds, mask, spec, _train_config(args), mc, record_log=True)
    save_model(res.model, args.out)
    log_path = args.log or str(args.out) + ".log.csv"
    res.write_log(log_path)
    log.info("risk %.6g after %d iterations (converged=%s)", res.final_empirical_risk,
             res.iters_used, res.converged)
    return EXIT_OK


def _model_loss(model, total_dim: int, margin: float) -> LossSpec:
    mc = MetricConfig(model.eigen_cap, model.dist_cap, model.feature_cap)
    return LossSpec.for_config(mc, total_dim, margin)


def cmd_risk(args) -> int:
    ds = load_dataset(args.data)
    model = load_model(args.model)
    if not model.is_feasible(ds.layout):
        raise ConfigurationError("model: infeasible for this dataset's layout")
    spec = _model_loss(model, ds.layout.total_dim, args.margin)
    u = ustat_risk(spec, model, ds)
    b = block_risk(spec, model, ds)
    _emit({"ustat": u.value, "ustat_pairs": u.n_pairs, "block": b.value,
           "block_pairs": b.n_pairs, "loss": spec.to_dict()}, args.out)
    return EXIT_OK


def cmd_rademacher(args) -> int:
    ds = load_dataset(args.data)
    mask = ModalitySet.parse(args.modalities, ds.layout.num_modalities)
    mc = MetricConfig.from_data(ds, args.eigen_cap)
    spec = LossSpec.for_config(mc, ds.layout.total_dim, args.margin)
    if args.method == "grid":
        source = sobol_grid(mc, ds.layout, mask, args.grid_size, args.grid_seed)
    else:
        source = SignOptConfig(mask, mc)
    est = rademacher_mc(ds, spec, source, args.mc_trials, _seed(args, 0))
    _emit({"value": est.value, "stderr": est.stderr, "n_blocks": est.n_blocks,
           "mc_trials": est.mc_trials, "sup_method": est.sup_method}, args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    loss = LossSpec(margin=min(args.margin, args.clip_C), clip_C=args.clip_C, L1=args.L1,
                    L2=args.L2)
    if args.theorem == "t3":
        rep = theorem3_report(args.risk_M, args.risk_N, args.gamma, args.complexity, loss,
                              args.n, args.delta)
    elif args.theorem == "t4":
        rep = theorem4_report(args.excess, args.complexity, args.complexity_full, loss, args.n,
                              args.delta, eta_M=args.eta)
    elif args.theorem == "t5":
        rep = theorem5_bound(args.eigen_cap, args.dist_cap, args.feature_cap, args.dim, args.n)
    else:
        rep = theorem6_gap(args.M_card, args.N_card, args.eigen_cap, args.dist_cap,
                           args.feature_cap, args.L1, args.L2, args.n)
    _emit(rep.to_dict(), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _read_json(args.config)
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    spec = SweepSpec.from_dict(cfg)
    rows = run_sweep(spec, args.threads)
    write_sweep(spec, rows, args.out)
    bad = error_rows(rows)
    log.info("wrote %d rows to %s (%d flagged)", len(rows), args.out, bad)
    return EXIT_FLAGGED if bad else EXIT_OK


def cmd_verify(args) -> int:
    def progress(name, res):
        log.info("%-16s %s  %.1fs", name, "pass" if res["passed"] else "FAIL", res["seconds"])

    report = run_suites(args.suite, _seed(args, 0), args.inject_fault, progress)
    _emit({name: {"status": "pass" if r["passed"] else "fail", "details": r["details"],
                  "seconds": r["seconds"]} for name, r in report.items()}, args.report)
    return EXIT_OK if all(r["passed"] for r in report.values()) else EXIT_FLAGGED


def cmd_plot_data(args) -> int:
    if args.kind not in PLOT_KINDS:
        raise ConfigurationError(f"kind: unknown plot kind {args.kind!r}")
    points = plot_data(read_sweep(args.csv), args.kind)
    write_plot_data(points, args.out)
    return EXIT_OK


def _add_train_flags(p) -> None:
    d = TrainConfig()
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--step-schedule", choices=("inverse-sqrt", "constant"),
                   default=d.step_schedule)
    p.add_argument("--step0", type=float, default=d.step0,
                   help="initial step in box-normalized units")
    p.add_argument("--tol", type=float, default=d.tol,
                   help="stop when the best risk improves less than this over the window")
    p.add_argument("--risk-mode", choices=("ustat", "block"), default=d.risk_mode)


def _add_model_flags(p) -> None:
    p.add_argument("--eigen-cap", type=float, default=1.0, help="eigenvalue cap D")
    p.add_argument("--margin", type=float, default=1.0, help="hinge margin")


def _global_flags(seed, threads, quiet) -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=seed,
                   help="overrides the seed in the config or the command default (0)")
    p.add_argument("--threads", type=int, default=threads, help="worker processes for sweeps")
    p.add_argument("--quiet", action="store_true", default=quiet,
                   help="suppress progress messages")
    return p


class _StderrHandler(logging.Handler):
    # resolves sys.stderr per record so redirected streams are honoured
    def emit(self, record):
        print(self.format(record), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    top = _global_flags(None, 1, False)
    # repeated after the subcommand; SUPPRESS keeps values given before it
    common = _global_flags(argparse.SUPPRESS, argparse.SUPPRESS, argparse.SUPPRESS)

    parser = _Parser(prog="mmpair", description="Pairwise multimodal metric learning and "
                     "empirical checks of its generalization bounds.", formatter_class=fmt,
                     parents=[top])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], formatter_class=fmt,
                       help="draw a synthetic dataset",
                       description="Config keys: layout.dims, n, seed (default 0), and either "
                       "ground_truth or a generator block (latent_dim=2, n_classes=2, "
                       "center_scale=1.5, noise_sigma=0.3, mixing=random, mixing_seed=0, "
                       "calibrate=true, margin=1).")
    p.add_argument("config")
    p.add_argument("out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], formatter_class=fmt,
                       help="fit a metric and bias on a modality mask")
    p.add_argument("data")
    p.add_argument("--modalities", default="all", help='"all", "none" or a list like 1,3')
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--log", default=None, help="training log CSV (default <out>.log.csv)")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("risk", parents=[common], formatter_class=fmt,
                       help="U-statistic and block risk of a model")
    p.add_argument("data")
    p.add_argument("model")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--out", default=None, help="JSON output (default stdout)")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("rademacher", parents=[common], formatter_class=fmt,
                       help="Monte-Carlo Rademacher complexity over the decoupled blocks")
    p.add_argument("data")
    p.add_argument("--modalities", default="all")
    p.add_argument("--method", choices=("grid", "sign-opt"), default="grid")
    p.add_argument("--grid-size", type=int, default=256)
    p.add_argument("--grid-seed", type=int, default=0)
    p.add_argument("--mc-trials", type=int, default=1000)
    p.add_argument("--out", default=None)
    _add_model_flags(p)
    p.set_defaults(func=cmd_rademacher)

    p = sub.add_parser("bounds", parents=[common], formatter_class=fmt,
                       help="evaluate one bound from its constants")
    p.add_argument("theorem", choices=("t3", "t4", "t5", "t6"))
    p.add_argument("--eigen-cap", type=float, default=1.0)
    p.add_argument("--dist-cap", type=float, default=100.0)
    p.add_argument("--feature-cap", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=1, help="total feature dimension (t5)")
    p.add_argument("--M-card", type=int, default=2, help="feature dimension of M (t6)")
    p.add_argument("--N-card", type=int, default=1, help="feature dimension of N (t6)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--L1", type=float, default=1.0)
    p.add_argument("--L2", type=float, default=1.0)
    p.add_argument("--clip-C", type=float, default=1.0)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--risk-M", type=float, default=0.0)
    p.add_argument("--risk-N", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--complexity", type=float, default=0.0)
    p.add_argument("--complexity-full", type=float, default=0.0)
    p.add_argument("--excess", type=float, default=0.0, help="excess empirical risk (t4)")
    p.add_argument("--eta", type=float, default=None, help="left side for t4")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt,
                       help="run an experiment sweep and write the CSV",
                       description="Config keys: layout, generator or ground_truth, n_values, "
                       "modality_pairs, trials_per_cell=1, delta=0.05, eigen_cap=1, "
                       "loss.margin=1, train (max_iters=1000), complexity (grid_size=256, "
                       "mc_trials=200, grid_seed=0), holdout_factor=20, min_holdout=1000, "
                       "base_seed=0.")
    p.add_argument("config")
    p.add_argument("out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], formatter_class=fmt,
                       help="run property suites and write a JSON report")
    p.add_argument("--suite", default="all", help="one of: all, " + ", ".join(SUITES))
    p.add_argument("--report", default="verify_report.json")
    p.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot-data", parents=[common], formatter_class=fmt,
                       help="aggregate a sweep CSV into a plot-ready TSV")
    p.add_argument("csv")
    p.add_argument("--kind", required=True, help="one of: " + ", ".join(PLOT_KINDS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"mmpair: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not log.handlers:
        log.addHandler(_StderrHandler())
        log.propagate = False
    log.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except (MMPairError, KeyError, TypeError) as exc:
        print(f"mmpair: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"mmpair: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
