"""Rademacher complexity estimates, representation quality and bound evaluators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Dataset, ModalityLayout, ModalitySet, generate_dataset
from .erm import TrainConfig, TrainResult, best_bias, descend
from .errors import ConfigurationError, SizeError
from .metric import DiagonalMetricModel, MetricConfig, pair_distances
from .risk import LossSpec, PairSet, ground_truth_model, hinge, mean_stderr


@dataclass(frozen=True)
class ComplexityEstimate:
    value: float
    n_blocks: int
    mc_trials: int
    stderr: float
    sup_method: str


@dataclass
class BoundReport:
    """Both sides of one inequality with every additive term itemized.

    ``relation`` is ``"<="`` unless the statement bounds its left side from below.
    """

    theorem: str
    lhs: float | None
    rhs: float | None
    terms: dict = field(default_factory=dict)
    holds: bool | None = None
    validity_flags: list = field(default_factory=list)
    relation: str = "<="

    def __post_init__(self):
        if self.lhs is not None and self.rhs is not None:
            if self.relation == "<=":
                self.holds = bool(self.lhs <= self.rhs)
            else:
                self.holds = bool(self.lhs >= self.rhs)

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "lhs": self.lhs, "rhs": self.rhs,
                "terms": dict(self.terms), "holds": self.holds,
                "validity_flags": list(self.validity_flags)}


@dataclass(frozen=True)
class SignOptConfig:
    """Settings for the sign-weighted maximization estimate of the supremum."""

    mask: ModalitySet
    metric: MetricConfig
    train: TrainConfig = TrainConfig(max_iters=200, step0=0.3, tol=0.0)
    restarts: int = 4


def rademacher_signs(mc_trials: int, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.choice(np.array([-1.0, 1.0]), size=(mc_trials, k))


def rademacher_from_table(table: np.ndarray, sigma: np.ndarray) -> tuple[float, float]:
    """Mean and stderr of ``max_h (1/k) sum_i sigma_i table[h, i]`` over sign rows."""
    k = table.shape[1]
    sups = (sigma @ table.T).max(axis=1) / k
    return mean_stderr(sups)


def rademacher_mc(ds: Dataset, spec: LossSpec, source, mc_trials: int = 1000,
                  seed: int = 0) -> ComplexityEstimate:
    """Monte-Carlo estimate of the Rademacher complexity over the decoupled blocks
    ``(Z_i, Z_{n//2 + i})``.

    ``source`` is either a non-empty list of models (exhaustive max over the grid)
    or a ``SignOptConfig`` (maximize the signed loss sum with random restarts).
    """
    if mc_trials < 100:
        raise ConfigurationError("need at least 100 sign draws")
    if ds.n < 2:
        raise SizeError("need n >= 2")
    k = ds.n // 2
    sigma = rademacher_signs(mc_trials, k, seed)
    if isinstance(source, SignOptConfig):
        sups = _signopt_sups(ds, spec, source, sigma, seed)
        value, err = mean_stderr(sups)
        return ComplexityEstimate(value, k, mc_trials, err, "sign-weighted-opt")
    grid = list(source)
    if not grid:
        raise ConfigurationError("empty hypothesis grid")
    table = grid_loss_table(ds, spec, grid)
    value, err = rademacher_from_table(table, sigma)
    return ComplexityEstimate(value, k, mc_trials, err, "grid")


def grid_loss_table(ds: Dataset, spec: LossSpec,
                    grid: Sequence[DiagonalMetricModel]) -> np.ndarray:
    """Block-pair losses, one row per model."""
    mask = grid[0].mask
    if all(m.mask == mask for m in grid):
        return PairSet.block(ds, mask).loss_table(spec, grid)
    return np.vstack([PairSet.block(ds, m.mask).losses(spec, m) for m in grid])


def _signopt_sups(ds, spec, opt: SignOptConfig, sigma, seed) -> np.ndarray:
    layout = ds.layout
    pairs = PairSet.block(ds, opt.mask)
    keep = layout.coordinate_mask(opt.mask)
    rng = np.random.default_rng([seed, 1])
    k = len(pairs)
    base = opt.metric.initial_model(layout, opt.mask)
    sups = np.empty(sigma.shape[0])
    for r, s in enumerate(sigma):
        best = -np.inf
        for _ in range(opt.restarts):
            lam = np.where(keep, rng.uniform(0, opt.metric.eigen_cap, keep.size), 0.0)
            init = base.with_params(lam, rng.uniform(0, opt.metric.dist_cap))
            *_, value, _, _, _ = descend(spec, pairs, -s / k, init, keep, opt.train)
            best = max(best, -value)
        sups[r] = best
    return sups


def massart_bound(loss_table, variant: str = "paper") -> float:
    """Finite-class bound ``max_w ||w|| sqrt(2 log |W|) / n``.

    ``variant="paper"`` uses the sup norm of each loss vector, ``"standard"``
    the Euclidean norm.
    """
    W = np.atleast_2d(np.asarray(loss_table, dtype=float))
    if W.size == 0:
        raise ConfigurationError("empty loss table")
    size, n = W.shape
    if variant == "paper":
        norm = np.abs(W).max()
    elif variant == "standard":
        norm = np.linalg.norm(W, axis=1).max()
    else:
        raise ConfigurationError(f"unknown variant {variant!r}")
    return float(norm * math.sqrt(2 * math.log(size)) / n)


def _log_ratio(kappa: float, D: float, dim: int, B: float) -> tuple[float, float]:
    """``(ratio, log ratio)`` of ``kappa / (D^dim B^2)``, overflow-safe."""
    log_ratio = math.log(kappa) - dim * math.log(D) - 2 * math.log(B)
    with np.errstate(over="ignore", under="ignore"):
        denom = np.float64(D) ** dim * np.float64(B) ** 2
    if np.isfinite(denom) and denom > 0:
        ratio = kappa / float(denom)
        if ratio == 1.0:
            return 1.0, 0.0
    else:
        ratio = math.exp(min(log_ratio, 700.0))
    return ratio, log_ratio


def theorem5_bound(eigen_cap: float, dist_cap: float, feature_cap: float, total_dim: int,
                   n: int, lhs: float | None = None) -> BoundReport:
    """Closed-form complexity bound ``D sqrt(2 log(kappa / (D^m B^2))) / (n//2)``.

    Undefined (``rhs=None``) with a flag when the log argument is below one;
    exactly zero with flag ``"boundary"`` when it equals one.
    """
    D, kappa, B, m = eigen_cap, dist_cap, feature_cap, total_dim
    if min(D, kappa, B) <= 0:
        raise ConfigurationError("D, kappa and B must be positive")
    if n < 2:
        raise SizeError("need n >= 2")
    k = n // 2
    ratio, log_ratio = _log_ratio(kappa, D, m, B)
    terms = {"log_argument": ratio, "n_blocks": k}
    if ratio == 1.0:
        return BoundReport("T5", lhs, 0.0, terms, validity_flags=["boundary"])
    if log_ratio < 0:
        return BoundReport("T5", lhs, None, terms,
                           validity_flags=["theorem5-log-argument-nonpositive"])
    return BoundReport("T5", lhs, D * math.sqrt(2 * log_ratio) / k, terms)


def estimate_eta(g_model: DiagonalMetricModel, layout: ModalityLayout, gt, holdout_n: int,
                 spec: LossSpec, seed: int = 0, return_stderr: bool = False,
                 holdout: Dataset | None = None):
    """Representation quality of ``g_model``: best-head holdout risk minus the true
    composite's holdout risk on the same block pairs.

    The head search over ``b in [0, dist_cap]`` is exact.
    """
    if gt is None:
        raise ConfigurationError("estimating eta needs a ground truth")
    if holdout is None:
        if holdout_n < 1000:
            raise ConfigurationError("holdout_n must be at least 1000")
        holdout = generate_dataset(layout, holdout_n, gt, seed)
    pairs = PairSet.block(holdout, g_model.mask)
    dist = pair_distances(g_model.lambdas, pairs.sqdiff, g_model.dist_cap)
    b, risk = best_bias(spec, dist, pairs.tau, g_model.dist_cap)
    truth = PairSet.latent_block(holdout).losses(spec, ground_truth_model(holdout,
                                                                          g_model.dist_cap))
    eta = risk - float(truth.mean())
    if not return_stderr:
        return eta
    diff = hinge(spec, dist, pairs.tau, b) - truth
    return eta, mean_stderr(diff)[1]


def gamma_S(eta_M: float, eta_N: float) -> float:
    return eta_M - eta_N


def _value(c) -> float:
    return c.value if isinstance(c, ComplexityEstimate) else float(c)


def _check_delta(delta: float, n: int) -> None:
    if not 0 < delta < 1:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    if n < 2:
        raise SizeError("need n >= 2")


def theorem3_report(risk_M: float, risk_N: float, gamma: float, complexity,
                    spec: LossSpec, n: int, delta: float = 0.05) -> BoundReport:
    """Population-risk difference of two masks against its four-term bound."""
    _check_delta(delta, n)
    C = spec.clip_C
    terms = {
        "gamma": float(gamma),
        "complexity": 8 * (spec.L1 + spec.L2) * _value(complexity),
        "sample": 4 * math.sqrt(2) * C / math.sqrt(n),
        "confidence": C * math.sqrt(2 * math.log(2 / delta) / (n * (n - 1))),
    }
    return BoundReport("T3", float(risk_M - risk_N), math.fsum(terms.values()), terms)


def theorem4_report(train_result_M, complexity_M, complexity_full, spec: LossSpec,
                    n: int, delta: float = 0.05, eta_M: float | None = None) -> BoundReport:
    """Bound on ``eta`` of the learned representation; ``train_result_M`` may be a
    ``TrainResult`` carrying its excess empirical risk or that number itself."""
    _check_delta(delta, n)
    if isinstance(train_result_M, TrainResult):
        excess = train_result_M.excess_empirical_risk
        if excess is None:
            raise ConfigurationError("train result has no excess empirical risk")
    else:
        excess = float(train_result_M)
    C = spec.clip_C
    L = spec.L1 + spec.L2
    terms = {
        "complexity_M": 4 * L * _value(complexity_M),
        "confidence": math.sqrt(2 * C ** 2 * math.log(2 / delta) / (n * (n - 1))),
        "complexity_full": 4 * L * _value(complexity_full),
        "sample": 8 * C / math.sqrt(n // 2),
        "excess_empirical_risk": float(excess),
    }
    return BoundReport("T4", eta_M, math.fsum(terms.values()), terms)


def theorem6_gap(M_card: int, N_card: int, eigen_cap: float, dist_cap: float,
                 feature_cap: float, L1: float, L2: float, n: int,
                 lhs: float | None = None) -> BoundReport:
    """Lower bound on the excess-risk difference between masks of ``M_card`` and
    ``N_card`` feature dimensions, as stated (``lhs >= rhs``).

    The gap is nonnegative for ``D >= 1`` and nonpositive for ``D < 1``.
    """
    if M_card < N_card:
        raise ConfigurationError("M_card must be at least N_card")
    D, kappa, B = eigen_cap, dist_cap, feature_cap
    k = n // 2
    _, log_N = _log_ratio(kappa, D, N_card, B)
    _, log_M = _log_ratio(kappa, D, M_card, B)
    pre = 4 * (L1 + L2) * D / k
    terms = {"prefactor": pre}
    if log_N < 0 or log_M < 0:
        return BoundReport("T6", lhs, None, terms,
                           validity_flags=["theorem6-log-argument-nonpositive"],
                           relation=">=")
    terms["sqrt_log_N"] = math.sqrt(2 * log_N)
    terms["sqrt_log_M"] = math.sqrt(2 * log_M)
    gap = 0.0 if M_card == N_card else pre * (terms["sqrt_log_N"] - terms["sqrt_log_M"])
    return BoundReport("T6", lhs, gap, terms, relation=">=")
