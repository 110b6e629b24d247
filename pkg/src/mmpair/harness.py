"""Experiment sweeps over sample size and nested modality pairs.

One sweep cell is ``(n, pair, trial)``: draw data, train both masks, estimate
population risks and representation quality on a holdout, and evaluate every
bound. Rows come out in ``(n, pair-index, trial)`` order whatever the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bounds import (ComplexityEstimate, estimate_eta, gamma_S, grid_loss_table,
                     massart_bound, rademacher_from_table, rademacher_signs,
                     theorem3_report, theorem4_report, theorem5_bound, theorem6_gap)
from .core import (GroundTruth, ModalityLayout, ModalitySet, generate_dataset,
                   make_ground_truth)
from .erm import TrainConfig, calibrate_ground_truth, train_nested
from .errors import ConfigurationError, MMPairError, SizeError
from .metric import MetricConfig
from .risk import LossSpec, PairSet, remask, sobol_grid

SWEEP_COLUMNS = (
    "trial", "n", "N_set", "M_set", "risk_hat_N", "risk_hat_M", "pop_risk_N",
    "pop_risk_M", "eta_N", "eta_M", "gamma", "rad_mc", "rad_massart_paper",
    "rad_massart_std", "t5_bound", "t3_lhs", "t3_rhs", "t3_holds", "t4_lhs", "t4_rhs",
    "t4_holds", "t6_gap", "t6_holds_as_printed", "t6_holds_insight5", "prop1_ok", "flags",
)


def _req(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigurationError(f"{name}: {msg}")


def generator_from_dict(d: dict) -> tuple[ModalityLayout, GroundTruth]:
    """Layout and ground truth from a config mapping.

    Either ``ground_truth`` holds a full serialized ground truth, or the
    ``generator`` block lists ``latent_dim``, ``n_classes``, ``center_scale``,
    ``noise_sigma``, ``mixing``, ``mixing_seed`` and ``calibrate`` (default true).
    """
    _req(isinstance(d.get("layout"), dict) and "dims" in d["layout"], "layout.dims",
         "missing")
    try:
        layout = ModalityLayout.from_dict(d["layout"])
    except (MMPairError, TypeError) as exc:
        raise ConfigurationError(f"layout.dims: {exc}") from exc
    if d.get("ground_truth") is not None:
        try:
            gt = GroundTruth.from_dict(d["ground_truth"])
            gt.check(layout)
        except (MMPairError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"ground_truth: {exc}") from exc
        return layout, gt
    g = dict(d.get("generator", {}))
    for key in ("latent_dim", "n_classes"):
        if key in g:
            _req(isinstance(g[key], int) and g[key] >= 1, f"generator.{key}",
                 "must be a positive integer")
    if "noise_sigma" in g:
        _req(float(g["noise_sigma"]) >= 0, "generator.noise_sigma", "must be >= 0")
    calibrate = bool(g.pop("calibrate", True))
    margin = float(g.pop("margin", 1.0))
    mixing_seed = int(g.pop("mixing_seed", 0))
    try:
        gt = make_ground_truth(layout, seed=mixing_seed, **g)
    except TypeError as exc:
        raise ConfigurationError(f"generator: {exc}") from exc
    except MMPairError as exc:
        raise ConfigurationError(f"generator: {exc}") from exc
    if calibrate:
        gt = calibrate_ground_truth(layout, gt, LossSpec(margin, math.inf))
    return layout, gt


@dataclass(frozen=True)
class ComplexitySettings:
    grid_size: int = 256
    mc_trials: int = 200
    grid_seed: int = 0


@dataclass
class SweepSpec:
    n_values: list
    modality_pairs: list
    trials_per_cell: int = 1
    delta: float = 0.05
    layout: ModalityLayout = None
    ground_truth: GroundTruth = None
    margin: float = 1.0
    eigen_cap: float = 1.0
    train: TrainConfig = TrainConfig(max_iters=1000)
    complexity: ComplexitySettings = ComplexitySettings()
    holdout_factor: int = 20
    min_holdout: int = 1000
    base_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        layout, gt = generator_from_dict(d)
        K = layout.num_modalities
        ns = d.get("n_values")
        _req(isinstance(ns, list) and len(ns) > 0, "n_values", "must be a non-empty list")
        _req(all(isinstance(n, int) and n >= 4 for n in ns), "n_values",
             "every n must be an integer >= 4")
        pairs = []
        raw = d.get("modality_pairs")
        _req(isinstance(raw, list) and len(raw) > 0, "modality_pairs",
             "must be a non-empty list of [N, M]")
        for i, pr in enumerate(raw):
            name = f"modality_pairs[{i}]"
            _req(isinstance(pr, list) and len(pr) == 2, name, "must be [N, M]")
            try:
                N, M = ModalitySet(tuple(pr[0])), ModalitySet(tuple(pr[1]))
                layout.check(M)
            except (MMPairError, TypeError) as exc:
                raise ConfigurationError(f"{name}: {exc}") from exc
            _req(N.issubset(M), name, f"{N} is not a subset of {M}")
            _req(K >= 1, name, "empty layout")
            pairs.append((N, M))
        R = d.get("trials_per_cell", 1)
        _req(isinstance(R, int) and R >= 1, "trials_per_cell", "must be an integer >= 1")
        delta = float(d.get("delta", 0.05))
        _req(0 < delta < 1, "delta", "must lie in (0, 1)")
        eigen_cap = float(d.get("eigen_cap", 1.0))
        _req(eigen_cap > 0, "eigen_cap", "must be positive")
        margin = float(d.get("loss", {}).get("margin", 1.0))
        _req(margin > 0, "loss.margin", "must be positive")
        try:
            train = TrainConfig(**{"max_iters": 1000, **d.get("train", {})})
        except (MMPairError, TypeError) as exc:
            raise ConfigurationError(f"train: {exc}") from exc
        try:
            cx = ComplexitySettings(**d.get("complexity", {}))
        except TypeError as exc:
            raise ConfigurationError(f"complexity: {exc}") from exc
        _req(cx.grid_size >= 1, "complexity.grid_size", "must be >= 1")
        _req(cx.mc_trials >= 100, "complexity.mc_trials", "must be >= 100")
        hf = int(d.get("holdout_factor", 20))
        _req(hf >= 1, "holdout_factor", "must be >= 1")
        return cls(list(ns), pairs, R, delta, layout, gt, margin, eigen_cap, train, cx, hf,
                   int(d.get("min_holdout", 1000)), int(d.get("base_seed", 0)))

    def to_dict(self) -> dict:
        return {"n_values": list(self.n_values),
                "modality_pairs": [[list(N), list(M)] for N, M in self.modality_pairs],
                "trials_per_cell": self.trials_per_cell, "delta": self.delta,
                "layout": self.layout.to_dict(), "ground_truth": self.ground_truth.to_dict(),
                "loss": {"margin": self.margin}, "eigen_cap": self.eigen_cap,
                "train": asdict(self.train), "complexity": asdict(self.complexity),
                "holdout_factor": self.holdout_factor, "min_holdout": self.min_holdout,
                "base_seed": self.base_seed}

    def cells(self):
        for n in self.n_values:
            for p in range(len(self.modality_pairs)):
                for t in range(self.trials_per_cell):
                    yield n, p, t


@dataclass
class SweepRow:
    trial: int
    n: int
    N_set: str
    M_set: str
    risk_hat_N: float = math.nan
    risk_hat_M: float = math.nan
    pop_risk_N: float = math.nan
    pop_risk_M: float = math.nan
    eta_N: float = math.nan
    eta_M: float = math.nan
    gamma: float = math.nan
    rad_mc: float = math.nan
    rad_massart_paper: float = math.nan
    rad_massart_std: float = math.nan
    t5_bound: float = math.nan
    t3_lhs: float = math.nan
    t3_rhs: float = math.nan
    t3_holds: bool | None = None
    t4_lhs: float = math.nan
    t4_rhs: float = math.nan
    t4_holds: bool | None = None
    t6_gap: float = math.nan
    t6_holds_as_printed: bool | None = None
    t6_holds_insight5: bool | None = None
    prop1_ok: bool | None = None
    flags: list = field(default_factory=list)

    def cells(self) -> list[str]:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "na"
    if isinstance(v, list):
        return ";".join(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _set_str(s: ModalitySet) -> str:
    return " ".join(map(str, s.members)) or "-"


def cell_seeds(base_seed: int, n: int, pair: int, trial: int) -> np.ndarray:
    return np.random.SeedSequence([base_seed, n, pair, trial]).generate_state(3)


def run_cell(spec: SweepSpec, n: int, pair: int, trial: int) -> SweepRow:
    N, M = spec.modality_pairs[pair]
    row = SweepRow(trial, n, _set_str(N), _set_str(M))
    try:
        _fill_row(row, spec, n, N, M, cell_seeds(spec.base_seed, n, pair, trial))
    except (MMPairError, ArithmeticError, FloatingPointError, RuntimeError) as exc:
        row.flags.append(f"error:{type(exc).__name__}")
    return row


def _fill_row(row: SweepRow, spec: SweepSpec, n: int, N: ModalitySet, M: ModalitySet,
              seeds) -> None:
    layout, gt = spec.layout, spec.ground_truth
    ds = generate_dataset(layout, n, gt, int(seeds[0]))
    mc = MetricConfig.from_data(ds, spec.eigen_cap)
    loss = LossSpec.for_config(mc, layout.total_dim, spec.margin)

    res_N, res_M = train_nested(ds, N, M, loss, spec.train, mc)
    row.risk_hat_N = res_N.final_empirical_risk
    row.risk_hat_M = res_M.final_empirical_risk
    row.prop1_ok = bool(row.risk_hat_M <= row.risk_hat_N + max(spec.train.tol, 1e-6))

    holdout = generate_dataset(layout, max(spec.holdout_factor * n, spec.min_holdout), gt,
                               int(seeds[1]))
    row.pop_risk_N = PairSet.block(holdout, N).risk(loss, res_N.model)
    row.pop_risk_M = PairSet.block(holdout, M).risk(loss, res_M.model)
    row.eta_N = estimate_eta(res_N.model, layout, gt, 0, loss, holdout=holdout)
    row.eta_M = estimate_eta(res_M.model, layout, gt, 0, loss, holdout=holdout)
    row.gamma = gamma_S(row.eta_M, row.eta_N)

    cx = spec.complexity
    full = ModalitySet.full(layout.num_modalities)
    grid = sobol_grid(mc, layout, full, cx.grid_size, cx.grid_seed)
    sigma = rademacher_signs(cx.mc_trials, n // 2, int(seeds[2]))
    table = grid_loss_table(ds, loss, grid)
    val, err = rademacher_from_table(table, sigma)
    rad_full = ComplexityEstimate(val, n // 2, cx.mc_trials, err, "grid")
    table_M = grid_loss_table(ds, loss, remask(grid, layout, M))
    val_M, err_M = rademacher_from_table(table_M, sigma)
    rad_M = ComplexityEstimate(val_M, n // 2, cx.mc_trials, err_M, "grid")
    row.rad_mc = rad_full.value
    row.rad_massart_paper = massart_bound(table, "paper")
    row.rad_massart_std = massart_bound(table, "standard")

    t5 = theorem5_bound(mc.eigen_cap, mc.dist_cap, mc.feature_cap, layout.total_dim, n)
    row.t5_bound = math.nan if t5.rhs is None else t5.rhs
    row.flags.extend(t5.validity_flags)

    t3 = theorem3_report(row.pop_risk_M, row.pop_risk_N, row.gamma, rad_full, loss, n,
                         spec.delta)
    row.t3_lhs, row.t3_rhs, row.t3_holds = t3.lhs, t3.rhs, t3.holds

    t4 = theorem4_report(res_M, rad_M, rad_full, loss, n, spec.delta, eta_M=row.eta_M)
    row.t4_lhs, row.t4_rhs, row.t4_holds = t4.lhs, t4.rhs, t4.holds

    diff = res_M.excess_empirical_risk - res_N.excess_empirical_risk
    t6 = theorem6_gap(layout.mask_dim(M), layout.mask_dim(N), mc.eigen_cap, mc.dist_cap,
                      mc.feature_cap, loss.L1, loss.L2, n, lhs=diff)
    row.flags.extend(t6.validity_flags)
    if t6.rhs is not None:
        row.t6_gap = t6.rhs
        row.t6_holds_as_printed = t6.holds
        row.t6_holds_insight5 = bool(-diff >= t6.rhs)


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(spec: SweepSpec, threads: int = 1) -> list[SweepRow]:
    cells = list(spec.cells())
    if threads <= 1:
        return [run_cell(spec, *c) for c in cells]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_cell_args, [(spec, *c) for c in cells], chunksize=4))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def write_sweep(spec: SweepSpec, rows, path) -> None:
    path = Path(path)
    path.write_bytes(rows_to_csv(rows).encode("utf-8"))
    meta = {"columns": list(SWEEP_COLUMNS),
            "population_risk": "block risk on a holdout of "
                               f"max({spec.holdout_factor}*n, {spec.min_holdout}) samples",
            "spec": spec.to_dict()}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1))


def error_rows(rows) -> int:
    return sum(any(f.startswith("error:") for f in r.flags) for r in rows)


def read_sweep(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
            raise ConfigurationError("CSV header does not match the sweep schema")
        return list(reader)


PLOT_KINDS = ("decay", "bound-gap", "risk-vs-modalities")


def plot_data(rows: list[dict], kind: str) -> list[tuple[float, float, float]]:
    """Aggregate sweep rows into ``(x, y, stderr)`` points sorted by ``x``."""
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}")
    if not rows:
        raise SizeError("no rows")
    groups: dict[float, list[float]] = {}
    for r in rows:
        if kind == "decay":
            key, val = float(r["n"]), float(r["rad_mc"])
        elif kind == "bound-gap":
            key, val = float(r["n"]), float(r["t3_rhs"]) - float(r["t3_lhs"])
        else:
            members = r["M_set"].split() if r["M_set"] != "-" else []
            key, val = float(len(members)), float(r["pop_risk_M"])
        if math.isfinite(val):
            groups.setdefault(key, []).append(val)
    out = []
    for key in sorted(groups):
        v = np.array(groups[key])
        mean = float(v.mean())
        se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
        if kind == "decay":
            # log of the mean, delta-method error
            out.append((math.log(key), math.log(mean) if mean > 0 else math.nan,
                        se / mean if mean > 0 else math.nan))
        else:
            out.append((key, mean, se))
    return out


def write_plot_data(points, path) -> None:
    lines = ["x\ty\tstderr"] + ["%.17g\t%.17g\t%.17g" % p for p in points]
    Path(path).write_text("\n".join(lines) + "\n")
