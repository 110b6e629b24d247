"""Projected subgradient ERM over the diagonal metric and bias for one modality mask."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .core import Dataset, ModalityLayout, ModalitySet, generate_dataset
from .errors import ConfigurationError, NumericError, PreconditionError, SizeError
from .metric import DiagonalMetricModel, MetricConfig, project_to_constraints
from .risk import LossSpec, PairSet, ground_truth_model, hinge, pair_loss_grad


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 2000
    step_schedule: str = "inverse-sqrt"
    step0: float = 0.2
    tol: float = 1e-9
    window: int = 50
    risk_mode: str = "ustat"
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.step0 <= 0:
            raise ConfigurationError("step0 must be positive")
        if self.tol < 0:
            raise ConfigurationError("tol must be nonnegative")
        if self.step_schedule not in ("constant", "inverse-sqrt"):
            raise ConfigurationError(f"unknown step_schedule {self.step_schedule!r}")
        if self.risk_mode not in ("ustat", "block"):
            raise ConfigurationError(f"unknown risk_mode {self.risk_mode!r}")

    def step(self, t: int) -> float:
        if self.step_schedule == "constant":
            return self.step0
        return self.step0 / np.sqrt(t + 1)


@dataclass(frozen=True, eq=False)
class TrainResult:
    model: DiagonalMetricModel
    final_empirical_risk: float
    excess_empirical_risk: float | None
    iters_used: int
    converged: bool
    log: tuple = field(default=(), repr=False)

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "risk", "step_size"])
            for it, risk, step in self.log:
                w.writerow([it, repr(float(risk)), repr(float(step))])


def training_pairs(ds: Dataset, mask: ModalitySet, mode: str) -> PairSet:
    if mode == "ustat":
        return PairSet.ustat(ds, mask)
    return PairSet.block(ds, mask)


def descend(spec: LossSpec, pairs: PairSet, weights: np.ndarray, init: DiagonalMetricModel,
            coord_mask: np.ndarray, cfg: TrainConfig, record: bool = False):
    """Minimize ``sum_p weights[p] * loss_p`` by normalized projected subgradient steps.

    Steps are taken in box-normalized coordinates ``(lambda / D, b / dist_cap)``.
    Returns ``(lambdas, bias, value, iters, converged, log)`` for the best iterate.
    """
    D, kappa = init.eigen_cap, init.dist_cap
    if not np.isfinite(kappa):
        raise ConfigurationError("training needs a finite dist_cap")
    lam = project_to_constraints(init.lambdas, D, coord_mask)
    b = float(np.clip(init.bias, 0.0, kappa))
    best = (lam.copy(), b, np.inf)
    history = []
    log = []
    converged = False
    t = 0
    for t in range(cfg.max_iters):
        value, g_lam, g_b = pair_loss_grad(spec, lam, b, kappa, pairs.sqdiff, pairs.tau,
                                           weights)
        if not (np.isfinite(value) and np.all(np.isfinite(lam)) and np.isfinite(b)):
            raise NumericError(f"non-finite iterate at step {t}")
        if value < best[2]:
            best = (lam.copy(), b, value)
        history.append(best[2])
        step = cfg.step(t)
        if record:
            log.append((t, value, step))
        if t >= cfg.window and history[t - cfg.window] - best[2] < cfg.tol:
            converged = True
            break
        gu = np.where(coord_mask, g_lam * D, 0.0)
        gv = g_b * kappa
        norm = np.sqrt(gu @ gu + gv * gv)
        if norm == 0.0:
            converged = True
            break
        if t == cfg.max_iters - 1:
            break
        if D > 0:
            lam = project_to_constraints(lam - step * D * gu / norm, D, coord_mask)
        b = float(np.clip(b - step * kappa * gv / norm, 0.0, kappa))
    return best[0], best[1], best[2], t + 1, converged, tuple(log)


def train(ds: Dataset, mask: ModalitySet, spec: LossSpec, cfg: TrainConfig = TrainConfig(),
          metric: MetricConfig | None = None, init: DiagonalMetricModel | None = None,
          record_log: bool = False) -> TrainResult:
    """Empirical risk minimization over feasible ``(lambdas, bias)`` on ``mask``.

    The best iterate is returned, starting from ``init`` or the box center.
    """
    if ds.n < 2:
        raise SizeError("need n >= 2")
    ds.layout.check(mask)
    if init is None:
        if metric is None:
            metric = MetricConfig.from_data(ds)
        init = metric.initial_model(ds.layout, mask)
    else:
        init = replace(init, mask=mask)
    coord_mask = ds.layout.coordinate_mask(mask)
    pairs = training_pairs(ds, mask, cfg.risk_mode)
    weights = np.full(len(pairs), 1.0 / len(pairs))
    lam, b, value, iters, converged, log = descend(spec, pairs, weights, init, coord_mask,
                                                   cfg, record_log)
    if value > spec.clip_C * (1 + 1e-12):
        raise RuntimeError(f"empirical risk {value} exceeds the loss bound")
    model = init.with_params(lam, b)
    excess = None
    if ds.ground_truth is not None and ds.latents is not None:
        excess = value - truth_risk(ds, spec, model.dist_cap, cfg.risk_mode)
    return TrainResult(model, value, excess, iters, converged, log)


def truth_risk(ds: Dataset, spec: LossSpec, dist_cap: float, mode: str = "ustat") -> float:
    """Empirical risk of the true composite, evaluated on the stored latents."""
    pairs = PairSet.latent_ustat(ds) if mode == "ustat" else PairSet.latent_block(ds)
    return pairs.risk(spec, ground_truth_model(ds, dist_cap))


def excess_empirical_risk(result: TrainResult, ds: Dataset, spec: LossSpec,
                          mode: str = "ustat") -> float:
    """Training-risk gap between the learned model and the true composite."""
    if ds.ground_truth is None or ds.latents is None:
        raise ConfigurationError("dataset carries no ground truth")
    pairs = training_pairs(ds, result.model.mask, mode)
    return pairs.risk(spec, result.model) - truth_risk(ds, spec, result.model.dist_cap, mode)


def train_nested(ds: Dataset, N: ModalitySet, M: ModalitySet, spec: LossSpec,
                 cfg: TrainConfig = TrainConfig(), metric: MetricConfig | None = None):
    """Train on ``N`` from the box center, then on ``M`` warm-started from the
    ``N`` solution (already zero outside ``N``)."""
    if not N.issubset(M):
        raise PreconditionError(f"{N} is not a subset of {M}")
    if metric is None:
        metric = MetricConfig.from_data(ds)
    res_N = train(ds, N, spec, cfg, metric)
    res_M = train(ds, M, spec, cfg, metric, init=res_N.model)
    return res_N, res_M


def monotonicity_check(ds: Dataset, N: ModalitySet, M: ModalitySet, spec: LossSpec,
                       cfg: TrainConfig = TrainConfig(),
                       metric: MetricConfig | None = None) -> tuple[float, float, bool]:
    """``(risk_M, risk_N, ok)`` with ``ok`` iff the larger mask is no worse."""
    res_N, res_M = train_nested(ds, N, M, spec, cfg, metric)
    tol = max(cfg.tol, 1e-6)
    return (res_M.final_empirical_risk, res_N.final_empirical_risk,
            res_M.final_empirical_risk <= res_N.final_empirical_risk + tol)


def risk_at_biases(spec: LossSpec, dist: np.ndarray, tau: np.ndarray,
                   biases: np.ndarray, chunk: int = 256) -> np.ndarray:
    out = np.empty(biases.size)
    for s in range(0, biases.size, chunk):
        bb = biases[s:s + chunk, None]
        out[s:s + chunk] = hinge(spec, dist[None, :], tau[None, :], bb).mean(axis=1)
    return out


def best_bias(spec: LossSpec, dist: np.ndarray, tau: np.ndarray,
              dist_cap: float) -> tuple[float, float]:
    """Exact minimizer over ``b in [0, dist_cap]`` of the mean loss at fixed distances.

    The mean is piecewise linear in ``b``; its slope changes by +-1/P at the
    kinks of each pair, so one sorted sweep visits every candidate.
    """
    P = dist.size
    m, C = spec.margin, spec.clip_C
    sim = tau > 0
    # similar pairs: slope -1 on (d + m - C, d + m); dissimilar: +1 on (d - m, d - m + C)
    pos = np.concatenate([dist[sim] + m - C, dist[sim] + m,
                          dist[~sim] - m, dist[~sim] - m + C])
    ns, nd = int(sim.sum()), P - int(sim.sum())
    delta = np.concatenate([-np.ones(ns), np.ones(ns), np.ones(nd), -np.ones(nd)])
    slope0 = delta[pos <= 0].sum()
    inner = (pos > 0) & (pos < dist_cap)
    order = np.argsort(pos[inner], kind="stable")
    xs = np.concatenate([[0.0], pos[inner][order], [dist_cap]])
    slopes = slope0 + np.concatenate([[0.0], np.cumsum(delta[inner][order])])
    r0 = float(hinge(spec, dist, tau, 0.0).sum())
    risks = r0 + np.concatenate([[0.0], np.cumsum(slopes * np.diff(xs))])
    i = int(np.argmin(risks))
    return float(xs[i]), float(risks[i] / P)


def best_bias_bruteforce(spec: LossSpec, dist: np.ndarray, tau: np.ndarray,
                         dist_cap: float) -> tuple[float, float]:
    """Same minimization by evaluating the mean loss at every kink."""
    kinks = np.concatenate([dist + tau * spec.margin,
                            dist - tau * (spec.clip_C - spec.margin), [0.0, dist_cap]])
    kinks = np.unique(kinks[(kinks >= 0) & (kinks <= dist_cap)])
    risks = risk_at_biases(spec, dist, tau, kinks)
    i = int(np.argmin(risks))
    return float(kinks[i]), float(risks[i])


def calibrate_ground_truth(layout: ModalityLayout, gt, spec: LossSpec,
                           dist_cap: float = np.inf, n: int = 20000, seed: int = 12345,
                           fit_scale: bool = True):
    """Return ``gt`` with the scale of its latent metric and its threshold set to
    minimize the block risk of the latent composite on a large draw.

    The direction of the latent metric is kept; ``fit_scale=False`` only fits
    the threshold.
    """
    ds = generate_dataset(layout, n, gt, seed)
    pairs = PairSet.latent_block(ds)
    base = pairs.sqdiff @ gt.latent_metric

    def fit(scale):
        dist = np.minimum(scale * base, dist_cap)
        cap = dist_cap if np.isfinite(dist_cap) else float(dist.max()) + spec.margin
        return best_bias(spec, dist, pairs.tau, cap)

    scale = 1.0
    if fit_scale and base.max() > 0:
        logs = np.linspace(np.log(1e-2), np.log(1e2), 81)
        risks = [fit(np.exp(x))[1] for x in logs]
        i = int(np.argmin(risks))
        res = minimize_scalar(lambda x: fit(np.exp(x))[1], method="bounded",
                              bounds=(logs[max(i - 1, 0)], logs[min(i + 1, 80)]),
                              options={"xatol": 1e-4})
        scale = float(np.exp(res.x)) if res.fun <= risks[i] else float(np.exp(logs[i]))
    b, _ = fit(scale)
    return replace(gt, latent_metric=scale * gt.latent_metric, bayes_threshold=b)
