"""Clipped pairwise hinge loss and the two empirical risk estimators.

The loss of a pair with sign ``tau`` (+1 similar, -1 dissimilar) is

    min(C, max(0, margin + tau * (d - b)))

where ``d`` is the clipped diagonal distance of the masked features and ``b``
the model bias.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .core import (Dataset, ModalitySet, MultimodalSample, generate_dataset, pair_label,
                   pair_signs, project_modality)
from .errors import (CertificationError, ConfigurationError, PermutationError,
                     ShapeError, SizeError)
from .metric import DiagonalMetricModel, MetricConfig, pair_distances


@dataclass(frozen=True)
class LossSpec:
    margin: float = 1.0
    clip_C: float = 101.0
    L1: float = 1.0
    L2: float = 1.0
    kind: str = "clipped-pair-hinge"

    def __post_init__(self):
        if self.kind != "clipped-pair-hinge":
            raise ConfigurationError(f"unknown loss kind {self.kind!r}")
        if self.clip_C < self.margin:
            raise ConfigurationError("clip_C must be at least the margin")
        if self.L1 < 0 or self.L2 < 0:
            raise ConfigurationError("Lipschitz constants must be nonnegative")

    @classmethod
    def for_config(cls, cfg: MetricConfig, total_dim: int, margin: float = 1.0,
                   clip_C: float | None = None) -> "LossSpec":
        """Loss whose clip never binds on the box and whose constants are the
        analytic gradient bound ``2 D B sqrt(total_dim)``."""
        L = lipschitz_constant(cfg.eigen_cap, cfg.feature_cap, total_dim)
        C = margin + cfg.dist_cap if clip_C is None else clip_C
        return cls(margin, C, L, L)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "margin": self.margin, "clip_C": self.clip_C,
                "L1": self.L1, "L2": self.L2}


def lipschitz_constant(eigen_cap: float, feature_cap: float, total_dim: int) -> float:
    return 2.0 * eigen_cap * feature_cap * np.sqrt(total_dim)


@dataclass(frozen=True)
class RiskValue:
    value: float
    n_pairs: int
    mode: str


def hinge(spec: LossSpec, dist: np.ndarray, tau: np.ndarray, bias) -> np.ndarray:
    return np.clip(spec.margin + tau * (dist - bias), 0.0, spec.clip_C)


def pair_losses(spec: LossSpec, model: DiagonalMetricModel, sqdiff: np.ndarray,
                tau: np.ndarray) -> np.ndarray:
    d = pair_distances(model.lambdas, sqdiff, model.dist_cap)
    return hinge(spec, d, tau, model.bias)


def pair_loss_grad(spec: LossSpec, lambdas, bias: float, dist_cap: float,
                   sqdiff: np.ndarray, tau: np.ndarray, weights: np.ndarray):
    """Weighted sum of losses and a subgradient w.r.t. ``(lambdas, bias)``.

    At kinks the zero one-sided slope is taken.
    """
    raw = sqdiff @ lambdas
    d = np.minimum(raw, dist_cap)
    z = spec.margin + tau * (d - bias)
    loss = np.clip(z, 0.0, spec.clip_C)
    active = (z > 0) & (z < spec.clip_C)
    w = np.where(active, weights * tau, 0.0)
    g_bias = -float(w.sum())
    g_lam = sqdiff.T @ np.where(raw < dist_cap, w, 0.0)
    return float(weights @ loss), g_lam, g_bias


def _flat(sample: MultimodalSample, model: DiagonalMetricModel) -> np.ndarray:
    x = project_modality(sample, model.mask).flat()
    if x.size != model.dim:
        raise ShapeError(f"sample has {x.size} features, model expects {model.dim}")
    return x


def pair_loss(spec: LossSpec, model: DiagonalMetricModel, z_i: MultimodalSample,
              z_j: MultimodalSample) -> float:
    diff = _flat(z_i, model) - _flat(z_j, model)
    tau = pair_label(z_i.label, z_j.label)
    return float(pair_losses(spec, model, (diff * diff)[None, :], np.array([tau]))[0])


class PairSet:
    """Indices, squared differences and signs of a fixed collection of pairs.

    Built once per dataset/mask so that risks for many models are cheap.
    """

    def __init__(self, X: np.ndarray, labels: np.ndarray, I: np.ndarray, J: np.ndarray):
        self.I = np.asarray(I)
        self.J = np.asarray(J)
        diff = X[self.I] - X[self.J]
        self.sqdiff = diff * diff
        self.tau = pair_signs(labels, self.I, self.J)

    def __len__(self):
        return self.I.size

    @classmethod
    def ustat(cls, ds: Dataset, mask=None) -> "PairSet":
        if ds.n < 2:
            raise SizeError("need n >= 2")
        I, J = np.triu_indices(ds.n, 1)
        return cls(ds.flat(mask), ds.labels, I, J)

    @classmethod
    def block(cls, ds: Dataset, mask=None, permutation=None) -> "PairSet":
        I, J = block_indices(ds.n, permutation)
        return cls(ds.flat(mask), ds.labels, I, J)

    @classmethod
    def latent_ustat(cls, ds: Dataset) -> "PairSet":
        I, J = np.triu_indices(ds.n, 1)
        return cls(_latents(ds), ds.labels, I, J)

    @classmethod
    def latent_block(cls, ds: Dataset, permutation=None) -> "PairSet":
        I, J = block_indices(ds.n, permutation)
        return cls(_latents(ds), ds.labels, I, J)

    def losses(self, spec: LossSpec, model: DiagonalMetricModel) -> np.ndarray:
        return pair_losses(spec, model, self.sqdiff, self.tau)

    def risk(self, spec: LossSpec, model: DiagonalMetricModel) -> float:
        return float(np.mean(self.losses(spec, model)))

    def loss_table(self, spec: LossSpec, models: Sequence[DiagonalMetricModel]) -> np.ndarray:
        """``(len(models), n_pairs)`` matrix of losses."""
        lam = np.array([m.lambdas for m in models])
        caps = np.array([m.dist_cap for m in models])
        bias = np.array([m.bias for m in models])
        d = np.minimum(lam @ self.sqdiff.T, caps[:, None])
        return hinge(spec, d, self.tau[None, :], bias[:, None])


def _latents(ds: Dataset) -> np.ndarray:
    if ds.latents is None or ds.ground_truth is None:
        raise ConfigurationError("dataset carries no ground truth latents")
    return ds.latents


def block_indices(n: int, permutation=None) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise SizeError("need n >= 2")
    if permutation is None:
        perm = np.arange(n)
    else:
        perm = np.asarray(permutation)
        if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
            raise PermutationError("permutation must be a bijection on 0..n-1")
    k = n // 2
    return perm[:k], perm[k:2 * k]


def ground_truth_model(ds: Dataset, dist_cap: float = np.inf) -> DiagonalMetricModel:
    """The true composite as a metric model acting on latent vectors."""
    gt = ds.ground_truth
    if gt is None:
        raise ConfigurationError("dataset has no ground truth")
    return DiagonalMetricModel(gt.latent_metric, gt.bayes_threshold, ModalitySet((1,)),
                               eigen_cap=float(gt.latent_metric.max(initial=0.0)),
                               dist_cap=dist_cap)


def ustat_risk(spec: LossSpec, model: DiagonalMetricModel, ds: Dataset) -> RiskValue:
    """Average loss over all ordered pairs ``i != j``."""
    if ds.n < 2:
        raise SizeError("need n >= 2")
    pairs = PairSet.ustat(ds, model.mask)
    _check_dim(pairs, model)
    # the loss is symmetric, so the ordered average equals the unordered one
    return RiskValue(pairs.risk(spec, model), ds.n * (ds.n - 1), "ustat")


def block_risk(spec: LossSpec, model: DiagonalMetricModel, ds: Dataset,
               permutation=None) -> RiskValue:
    """Average loss over the disjoint pairs ``(pi(i), pi(n//2 + i))``; for odd ``n``
    the last permuted sample is unused."""
    pairs = PairSet.block(ds, model.mask, permutation)
    _check_dim(pairs, model)
    return RiskValue(pairs.risk(spec, model), ds.n // 2, "block")


def _check_dim(pairs: PairSet, model: DiagonalMetricModel) -> None:
    if pairs.sqdiff.shape[1] != model.dim:
        raise ShapeError(f"data has {pairs.sqdiff.shape[1]} features, model expects "
                         f"{model.dim}")


def lipschitz_certify(spec: LossSpec, model: DiagonalMetricModel, trials: int = 1000,
                      seed: int = 0, check: bool = True) -> tuple[float, float]:
    """Largest observed difference quotient in each argument slot.

    Points are drawn in the box of half-width ``feature_cap / 2`` so every
    difference respects the sup-norm cap. Raises ``CertificationError`` when an
    observed quotient exceeds the declared constant.
    """
    if trials < 1000:
        raise ConfigurationError("certification needs at least 1000 trials")
    B = model.feature_cap
    if not np.isfinite(B):
        raise ConfigurationError("certification needs a finite feature cap")
    rng = np.random.default_rng(seed)
    m = model.dim
    half = B / 2
    a = rng.uniform(-half, half, size=(trials, m))
    a2 = rng.uniform(-half, half, size=(trials, m))
    # a third of the trials use small perturbations to probe local slopes
    small = rng.random(trials) < 1 / 3
    step = rng.normal(size=(trials, m))
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    local = np.clip(a + step * rng.uniform(1e-6, 1e-2 * B, size=(trials, 1)), -half, half)
    a2 = np.where(small[:, None], local, a2)
    other = rng.uniform(-half, half, size=(trials, m))
    tau = rng.choice([-1.0, 1.0], size=trials)

    def loss(x, y):
        diff = x - y
        return hinge(spec, np.minimum((diff * diff) @ model.lambdas, model.dist_cap),
                     tau, model.bias)

    dist = np.linalg.norm(a - a2, axis=1)
    ok = dist >= 1e-6
    q1 = np.abs(loss(a, other) - loss(a2, other))[ok] / dist[ok]
    q2 = np.abs(loss(other, a) - loss(other, a2))[ok] / dist[ok]
    L1_hat = float(q1.max(initial=0.0))
    L2_hat = float(q2.max(initial=0.0))
    if check and (L1_hat > spec.L1 or L2_hat > spec.L2):
        raise CertificationError(f"observed quotients ({L1_hat:.4g}, {L2_hat:.4g}) exceed "
                                 f"declared ({spec.L1:.4g}, {spec.L2:.4g})")
    return L1_hat, L2_hat


def mean_stderr(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def decoupling_gap(spec: LossSpec, grid: Sequence[DiagonalMetricModel], R: int,
                   layout, gt, n: int, seed: int = 0) -> tuple[float, float, float]:
    """Monte-Carlo means of the grid supremum of the U-statistic and block risks.

    Returns ``(mean_sup_ustat, mean_sup_block, stderr)`` where ``stderr`` pools
    the two standard errors. Draw ``r`` uses the ``r``-th seed spawned from ``seed``.
    """
    if not grid:
        raise ConfigurationError("empty model grid")
    if R < 30:
        raise ConfigurationError("need at least 30 dataset draws")
    seeds = np.random.SeedSequence(seed).generate_state(R, dtype=np.uint64)
    sup_u = np.empty(R)
    sup_b = np.empty(R)
    for r in range(R):
        ds = generate_dataset(layout, n, gt, int(seeds[r]))
        sup_u[r], sup_b[r] = grid_sups(spec, grid, ds)
    mu, su = mean_stderr(sup_u)
    mb, sb = mean_stderr(sup_b)
    return mu, mb, float(np.hypot(su, sb))


def grid_sups(spec: LossSpec, grid: Sequence[DiagonalMetricModel],
              ds: Dataset) -> tuple[float, float]:
    """Sup over the grid of the U-statistic risk and of the block risk on ``ds``."""
    mask = grid[0].mask
    if any(m.mask != mask for m in grid):
        # mixed masks: fall back to per-model evaluation
        u = max(ustat_risk(spec, m, ds).value for m in grid)
        b = max(block_risk(spec, m, ds).value for m in grid)
        return u, b
    up = PairSet.ustat(ds, mask)
    bp = PairSet.block(ds, mask)
    return (float(up.loss_table(spec, grid).mean(axis=1).max()),
            float(bp.loss_table(spec, grid).mean(axis=1).max()))


def sobol_grid(cfg: MetricConfig, layout, mask, size: int = 256,
               seed: int = 0) -> list[DiagonalMetricModel]:
    """Feasible models from a scrambled Sobol sequence over the ``(lambda, b)`` box."""
    keep = layout.coordinate_mask(mask)
    dim = int(keep.sum()) + 1
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # non power-of-two sizes lose the balance property, which is acceptable here
        warnings.simplefilter("ignore", UserWarning)
        pts = sampler.random(size)
    models = []
    for p in pts:
        lam = np.zeros(layout.total_dim)
        lam[keep] = p[:-1] * cfg.eigen_cap
        models.append(DiagonalMetricModel(lam, p[-1] * cfg.dist_cap, mask, cfg.eigen_cap,
                                          cfg.dist_cap, cfg.feature_cap))
    return models


def remask(models: Sequence[DiagonalMetricModel], layout, mask) -> list[DiagonalMetricModel]:
    """Restrict each model to ``mask`` by zeroing the other coordinates."""
    keep = layout.coordinate_mask(mask)
    return [replace(m, lambdas=np.where(keep, m.lambdas, 0.0), mask=mask) for m in models]
