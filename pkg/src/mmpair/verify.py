"""Property suites behind ``mmpair verify``.

Every suite returns ``{"passed": bool, "details": {...}, "seconds": float}``.
The ``fault`` argument exists for falsifiability tests only: ``"negate-decoupling"``
flips the comparison in the decoupling suite so that a correct build fails it.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .bounds import rademacher_mc, theorem5_bound, theorem6_gap
from .core import (Dataset, ModalityLayout, ModalitySet, compose_projection_check,
                   generate_dataset, make_ground_truth, project_modality, random_nested_pair,
                   random_sample)
from .erm import TrainConfig, calibrate_ground_truth, monotonicity_check
from .errors import ConfigurationError
from .harness import SWEEP_COLUMNS, SweepSpec, rows_to_csv, run_sweep
from .metric import DiagonalMetricModel, MetricConfig, jacobi_diagonalize, off_diagonal_norm
from .risk import LossSpec, decoupling_gap, pair_loss_grad, sobol_grid

REFERENCE_DIMS = (2, 2, 2)
NESTED_PAIRS = (((1,), (1, 2)), ((1, 2), (1, 2, 3)), ((2,), (1, 2, 3)))
T3_VIOLATION_LIMIT = 24
FAULTS = ("negate-decoupling",)


def reference_setup(calibrate: bool = True):
    """Layout, ground truth, caps and loss shared by the statistical suites."""
    layout = ModalityLayout(REFERENCE_DIMS)
    gt = make_ground_truth(layout, seed=1)
    if calibrate:
        gt = calibrate_ground_truth(layout, gt, LossSpec(1.0, math.inf))
    ref = generate_dataset(layout, 2048, gt, 999)
    mc = MetricConfig.from_data(ref)
    return layout, gt, mc, LossSpec.for_config(mc, layout.total_dim)


def reference_sweep(n_values, trials: int, delta: float = 0.05, base_seed: int = 0,
                    **extra) -> SweepSpec:
    d = {"layout": {"dims": list(REFERENCE_DIMS)},
         "generator": {"latent_dim": 2, "mixing_seed": 1},
         "n_values": list(n_values), "modality_pairs": [[[1], [1, 2, 3]]],
         "trials_per_cell": trials, "delta": delta, "base_seed": base_seed}
    d.update(extra)
    return SweepSpec.from_dict(d)


def binomial_tail(k: int, R: int, p: float) -> float:
    """``P(X > k)`` for ``X ~ Bin(R, p)`` from the exact mass function."""
    return math.fsum(math.comb(R, j) * p ** j * (1 - p) ** (R - j) for j in range(k + 1, R + 1))


def suite_hierarchy(seed: int = 0, fault=None, instances: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    bad = 0
    for i in range(instances):
        K = (2, 3, 4)[i % 3]
        layout = ModalityLayout(tuple(int(d) for d in rng.integers(1, 4, size=K)))
        x = random_sample(layout, rng)
        N, M = random_nested_pair(K, rng)
        full = ModalitySet.full(K)
        ok = (compose_projection_check(x, N, M)
              and project_modality(x, full) == x
              and project_modality(project_modality(x, M), M) == project_modality(x, M))
        bad += not ok
    return {"passed": bad == 0, "details": {"instances": instances, "failures": bad}}


def suite_decoupling(seed: int = 0, fault=None, n: int = 40, R: int = 200,
                     grid_size: int = 64) -> dict:
    layout, gt, mc, spec = reference_setup()
    grid = sobol_grid(mc, layout, ModalitySet.full(layout.num_modalities), grid_size, seed)
    mu, mb, se = decoupling_gap(spec, grid, R, layout, gt, n, seed)
    ok = mu <= mb + 2 * se
    if fault == "negate-decoupling":
        ok = not ok
    return {"passed": bool(ok), "details": {"mean_sup_ustat": mu, "mean_sup_block": mb,
                                            "stderr": se, "n": n, "R": R,
                                            "grid_size": grid_size}}


def suite_monotonicity(seed: int = 0, fault=None, seeds: int = 50, n: int = 32) -> dict:
    layout, gt, _, _ = reference_setup()
    cfg = TrainConfig(max_iters=300)
    bad, worst = 0, -math.inf
    for s in range(seeds):
        ds = generate_dataset(layout, n, gt, seed * 10007 + s)
        mc = MetricConfig.from_data(ds)
        spec = LossSpec.for_config(mc, layout.total_dim)
        for Nm, Mm in NESTED_PAIRS:
            risk_M, risk_N, _ = monotonicity_check(ds, ModalitySet(Nm), ModalitySet(Mm),
                                                   spec, cfg, mc)
            worst = max(worst, risk_M - risk_N)
            bad += not (risk_M <= risk_N + 1e-6)
    return {"passed": bad == 0, "details": {"runs": seeds * len(NESTED_PAIRS),
                                            "failures": bad, "max_risk_M_minus_N": worst}}


def suite_theorem3(seed: int = 0, fault=None, n_values=(32, 128), trials: int = 200,
                   delta: float = 0.05) -> dict:
    spec = reference_sweep(n_values, trials, delta, base_seed=seed)
    rows = run_sweep(spec)
    cells = {}
    for r in rows:
        c = cells.setdefault(str(r.n), {"trials": 0, "violations": 0, "undefined": 0})
        c["trials"] += 1
        if r.t3_holds is None:
            c["undefined"] += 1
        elif not r.t3_holds:
            c["violations"] += 1
    ok = all(c["violations"] + c["undefined"] <= T3_VIOLATION_LIMIT for c in cells.values())
    return {"passed": ok, "details": {
        "cells": cells, "violation_limit": T3_VIOLATION_LIMIT, "delta": delta,
        "tail_probability_above_limit": binomial_tail(T3_VIOLATION_LIMIT, trials, delta)}}


def suite_theorem4(seed: int = 0, fault=None, n: int = 64, trials: int = 100,
                   delta: float = 0.05) -> dict:
    rows = run_sweep(reference_sweep([n], trials, delta, base_seed=seed + 1))
    held = sum(r.t4_holds is True for r in rows)
    rate = held / len(rows)
    return {"passed": rate >= 0.95, "details": {
        "trials": len(rows), "held": held, "hold_rate": rate,
        "max_eta_M": max(r.eta_M for r in rows),
        "min_slack": min(r.t4_rhs - r.t4_lhs for r in rows)}}


def suite_theorem5(seed: int = 0, fault=None) -> dict:
    golden = theorem5_bound(1.0, math.e ** 2, 1.0, 1, 10).rhs
    edge = theorem5_bound(2.0, 2.0 ** 3 * 1.5 ** 2, 1.5, 3, 10)
    scaled = [theorem5_bound(1.5, 40.0, 1.2, 2, n).rhs * (n // 2) for n in (4, 8, 16, 64)]
    spread = max(scaled) - min(scaled)
    ok = (abs(golden - 0.4) <= 1e-12 and edge.rhs == 0.0 and "boundary" in edge.validity_flags
          and spread <= 1e-12)
    return {"passed": ok, "details": {"golden": golden, "boundary_rhs": edge.rhs,
                                      "boundary_flags": edge.validity_flags,
                                      "scaled_spread": spread}}


def two_constant_dataset(n: int = 4) -> Dataset:
    """Identical same-label samples: every pair distance is zero and every pair similar."""
    layout = ModalityLayout((1,))
    return Dataset(layout, np.zeros((n, 1)), np.ones((n, 1), dtype=bool), np.zeros(n, int))


def two_constant_grid(c: float = 1.0):
    """Models whose block losses on ``two_constant_dataset`` are all 0 and all ``c``."""
    mask = ModalitySet((1,))
    return [DiagonalMetricModel([0.5], c, mask, 1.0, 2 * c + 1, 1.0),
            DiagonalMetricModel([0.5], 0.0, mask, 1.0, 2 * c + 1, 1.0)]


def suite_rademacher(seed: int = 0, fault=None, c: float = 1.0, draws: int = 10000) -> dict:
    spec = LossSpec(margin=c, clip_C=c + 1)
    est = rademacher_mc(two_constant_dataset(), spec, two_constant_grid(c), draws, seed)
    exact = c / 4
    ok = abs(est.value - exact) <= 3 * est.stderr
    return {"passed": bool(ok), "details": {"estimate": est.value, "stderr": est.stderr,
                                            "exact": exact, "n_blocks": est.n_blocks}}


def decay_points(seed: int = 0, n_values=(32, 64, 128, 256, 512), datasets: int = 100,
                 draws: int = 2000, grid_size: int = 256):
    """Mean grid estimate per ``n`` over independent datasets, on one fixed grid."""
    layout, gt, mc, spec = reference_setup()
    grid = sobol_grid(mc, layout, ModalitySet.full(layout.num_modalities), grid_size, seed)
    ss = np.random.SeedSequence([seed, 8])
    means = []
    for n, child in zip(n_values, ss.spawn(len(n_values))):
        seeds = child.generate_state(2 * datasets)
        vals = [rademacher_mc(generate_dataset(layout, n, gt, int(seeds[2 * d])), spec, grid,
                              draws, int(seeds[2 * d + 1])).value for d in range(datasets)]
        means.append(float(np.mean(vals)))
    return list(n_values), means


def suite_decay(seed: int = 0, fault=None, **kw) -> dict:
    ns, means = decay_points(seed, **kw)
    slope = float(np.polyfit(np.log(ns), np.log(means), 1)[0])
    return {"passed": slope <= -0.5, "details": {"n_values": ns, "rad_mc": means,
                                                  "slope": slope, "threshold": -0.5}}


def finite_difference_check(rng, h: float = 1e-6, kink_gap: float = 1e-3):
    """One random non-kink point: ``(relative_error, analytic, numeric)`` or ``None``."""
    m = int(rng.integers(1, 7))
    D = float(rng.uniform(0.5, 3.0))
    kappa = float(rng.uniform(5.0, 50.0))
    spec = LossSpec(margin=float(rng.uniform(0.2, 2.0)), clip_C=float(rng.uniform(3.0, 30.0)))
    lam = rng.uniform(0, D, m)
    b = float(rng.uniform(0, kappa))
    sq = rng.uniform(0, 3.0, (1, m)) ** 2
    tau = np.array([rng.choice([-1.0, 1.0])])
    raw = float(sq[0] @ lam)
    z = spec.margin + tau[0] * (min(raw, kappa) - b)
    if min(abs(raw - kappa), abs(z), abs(z - spec.clip_C)) < kink_gap:
        return None
    w = np.ones(1)
    _, g_lam, g_b = pair_loss_grad(spec, lam, b, kappa, sq, tau, w)
    g = np.append(g_lam, g_b)

    def f(theta):
        return pair_loss_grad(spec, theta[:-1], theta[-1], kappa, sq, tau, w)[0]

    theta = np.append(lam, b)
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fd[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    scale = max(np.linalg.norm(g), np.linalg.norm(fd))
    err = 0.0 if scale == 0 else float(np.linalg.norm(fd - g) / scale)
    return err, g, fd


def suite_gradient(seed: int = 0, fault=None, points: int = 500) -> dict:
    rng = np.random.default_rng(seed)
    errs = []
    while len(errs) < points:
        res = finite_difference_check(rng)
        if res is not None:
            errs.append(res[0])
    worst = max(errs)
    return {"passed": worst < 1e-4, "details": {"points": points, "max_relative_error": worst,
                                                "active_points": int(sum(e >= 0 for e in errs))}}


def suite_diagonalization(seed: int = 0, fault=None, max_dim: int = 32) -> dict:
    rng = np.random.default_rng(seed)
    worst_off = worst_orth = 0.0
    for m in list(range(1, max_dim + 1)):
        for _ in range(2):
            A = rng.normal(size=(m, m))
            A = A + A.T
            Q, _ = jacobi_diagonalize(A)
            worst_off = max(worst_off, off_diagonal_norm(Q @ A @ Q.T))
            worst_orth = max(worst_orth, float(np.linalg.norm(Q @ Q.T - np.eye(m))))
    _, lam = jacobi_diagonalize([[2.0, 1.0], [1.0, 2.0]])
    small = float(np.max(np.abs(lam - [3.0, 1.0])))
    ok = worst_off < 1e-10 and worst_orth < 1e-10 and small <= 1e-12
    return {"passed": ok, "details": {"max_offdiag": worst_off, "max_orthogonality": worst_orth,
                                      "two_by_two_error": small, "max_dim": max_dim}}


def suite_theorem6(seed: int = 0, fault=None, trials: int = 10) -> dict:
    golden = theorem6_gap(2, 1, 2.0, 32.0, 1.0, 0.5, 0.5, 4).rhs
    flat = theorem6_gap(3, 1, 1.0, 32.0, 1.0, 0.5, 0.5, 4).rhs
    rows = run_sweep(reference_sweep([32], trials, base_seed=seed + 2, eigen_cap=1.1))
    rates = {}
    for key in ("t6_holds_as_printed", "t6_holds_insight5"):
        vals = [getattr(r, key) for r in rows if getattr(r, key) is not None]
        rates[key] = sum(vals) / len(vals) if vals else None
    undefined = sum(r.t6_holds_as_printed is None for r in rows)
    ok = abs(golden - 1.2619) <= 1e-3 and flat == 0.0
    return {"passed": ok, "details": {"golden": golden, "unit_cap_gap": flat,
                                      "hold_rates": rates, "undefined_rows": undefined}}


def suite_determinism(seed: int = 0, fault=None) -> dict:
    spec = reference_sweep([16, 24], 2, base_seed=seed, modality_pairs=[[[1], [1, 2]],
                                                                        [[], [1, 2, 3]]])
    first = rows_to_csv(run_sweep(spec)).encode("utf-8")
    second = rows_to_csv(run_sweep(spec)).encode("utf-8")
    header = first.split(b"\n", 1)[0].decode("utf-8")
    ok = first == second and header == ",".join(SWEEP_COLUMNS)
    return {"passed": ok, "details": {"identical": first == second,
                                      "header_matches": header == ",".join(SWEEP_COLUMNS),
                                      "rows": first.count(b"\n") - 1}}


SUITES = {
    "hierarchy": suite_hierarchy,
    "decoupling": suite_decoupling,
    "monotonicity": suite_monotonicity,
    "theorem3": suite_theorem3,
    "theorem4": suite_theorem4,
    "theorem5": suite_theorem5,
    "rademacher": suite_rademacher,
    "decay": suite_decay,
    "gradient": suite_gradient,
    "diagonalization": suite_diagonalization,
    "theorem6": suite_theorem6,
    "determinism": suite_determinism,
}


def run_suite(name: str, seed: int = 0, fault=None, **kw) -> dict:
    if name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}")
    if fault is not None and fault not in FAULTS:
        raise ConfigurationError(f"unknown fault {fault!r}")
    t = time.perf_counter()
    out = SUITES[name](seed, fault, **kw)
    out["seconds"] = time.perf_counter() - t
    return out


def run_suites(name: str, seed: int = 0, fault=None, progress=None) -> dict:
    """Run one suite or, for ``"all"``, every suite in order."""
    names = list(SUITES) if name == "all" else [name]
    if name != "all" and name not in SUITES:
        raise ConfigurationError(f"unknown suite {name!r}")
    report = {}
    for s in names:
        report[s] = run_suite(s, seed, fault)
        if progress is not None:
            progress(s, report[s])
    return report
