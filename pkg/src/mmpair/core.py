"""Multimodal data model, modality projection and the synthetic generator.

Modality indices are 1-based throughout, matching the usual ``[K]`` notation.
A missing modality (the ``⊥`` sentinel) is stored as ``present=False`` with an
all-zero feature block, so a diagonal metric never sees it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, PreconditionError, SizeError


@dataclass(frozen=True)
class ModalityLayout:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 1:
            raise LayoutError("a layout needs at least one modality")
        if any(d < 1 for d in dims):
            raise LayoutError(f"modality dimensions must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def num_modalities(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.dims)]))

    def block(self, k: int) -> slice:
        """Column slice of modality ``k`` (1-based) in the flat feature vector."""
        if not 1 <= k <= self.num_modalities:
            raise LayoutError(f"modality index {k} outside [1, {self.num_modalities}]")
        off = self.offsets
        return slice(off[k - 1], off[k])

    def coordinate_mask(self, mask: "ModalitySet") -> np.ndarray:
        """Boolean vector over flat coordinates, true where the modality is in ``mask``."""
        self.check(mask)
        keep = np.zeros(self.total_dim, dtype=bool)
        for k in mask:
            keep[self.block(k)] = True
        return keep

    def mask_dim(self, mask: "ModalitySet") -> int:
        self.check(mask)
        return sum(self.dims[k - 1] for k in mask)

    def check(self, mask: "ModalitySet") -> None:
        for k in mask:
            if k > self.num_modalities:
                raise LayoutError(
                    f"modality index {k} outside [1, {self.num_modalities}]")

    def to_dict(self) -> dict:
        return {"num_modalities": self.num_modalities, "dims": list(self.dims),
                "total_dim": self.total_dim}

    @classmethod
    def from_dict(cls, d: dict) -> "ModalityLayout":
        layout = cls(tuple(d["dims"]))
        if "num_modalities" in d and d["num_modalities"] != layout.num_modalities:
            raise LayoutError("num_modalities disagrees with dims")
        if "total_dim" in d and d["total_dim"] != layout.total_dim:
            raise LayoutError("total_dim disagrees with dims")
        return layout


@dataclass(frozen=True)
class ModalitySet:
    """Sorted, duplicate-free set of 1-based modality indices."""

    members: tuple[int, ...] = ()

    def __post_init__(self):
        members = tuple(int(k) for k in self.members)
        if len(set(members)) != len(members):
            raise LayoutError(f"duplicate modality index in {members}")
        if any(k < 1 for k in members):
            raise LayoutError(f"modality indices start at 1, got {members}")
        object.__setattr__(self, "members", tuple(sorted(members)))

    @classmethod
    def full(cls, K: int) -> "ModalitySet":
        return cls(tuple(range(1, K + 1)))

    @classmethod
    def parse(cls, text: str, K: int) -> "ModalitySet":
        """Parse ``"all"``, ``"none"``/``""`` or a comma list such as ``"1,3"``."""
        text = text.strip().lower()
        if text == "all":
            return cls.full(K)
        if text in ("", "none"):
            return cls()
        try:
            ms = cls(tuple(int(t) for t in text.split(",")))
        except ValueError as exc:
            raise LayoutError(f"cannot parse modality set {text!r}") from exc
        if ms.members and ms.members[-1] > K:
            raise LayoutError(f"modality index {ms.members[-1]} outside [1, {K}]")
        return ms

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    def __contains__(self, k) -> bool:
        return k in self.members

    def issubset(self, other: "ModalitySet") -> bool:
        return set(self.members) <= set(other.members)

    def __and__(self, other: "ModalitySet") -> "ModalitySet":
        return ModalitySet(tuple(set(self.members) & set(other.members)))

    def __or__(self, other: "ModalitySet") -> "ModalitySet":
        return ModalitySet(tuple(set(self.members) | set(other.members)))

    def __str__(self):
        return "{" + ",".join(map(str, self.members)) + "}"


@dataclass(frozen=True, eq=False)
class MultimodalSample:
    features: tuple[np.ndarray, ...]
    present: tuple[bool, ...]
    label: int

    def __post_init__(self):
        if len(self.features) != len(self.present):
            raise LayoutError("features and present mask differ in length")
        feats = []
        for x, p in zip(self.features, self.present):
            x = np.array(x, dtype=float).reshape(-1)
            if not p:
                x = np.zeros_like(x)
            x.setflags(write=False)
            feats.append(x)
        object.__setattr__(self, "features", tuple(feats))
        object.__setattr__(self, "present", tuple(bool(p) for p in self.present))
        object.__setattr__(self, "label", int(self.label))

    def __eq__(self, other):
        if not isinstance(other, MultimodalSample):
            return NotImplemented
        return (self.present == other.present and self.label == other.label
                and len(self.features) == len(other.features)
                and all(a.shape == b.shape and np.array_equal(a, b)
                        for a, b in zip(self.features, other.features)))

    def __hash__(self):
        return hash((self.present, self.label,
                     tuple(x.tobytes() for x in self.features)))

    def conforms(self, layout: ModalityLayout) -> bool:
        return (len(self.features) == layout.num_modalities
                and all(x.size == d for x, d in zip(self.features, layout.dims)))

    def flat(self) -> np.ndarray:
        return np.concatenate(self.features)


def project_modality(x: MultimodalSample, M: ModalitySet) -> MultimodalSample:
    """Keep modalities in ``M``, replace the rest by the missing sentinel.

    Already-missing modalities stay missing, so the same map also acts on the
    extended input space.
    """
    K = len(x.features)
    for k in M:
        if k > K:
            raise LayoutError(f"modality index {k} outside [1, {K}]")
    present = tuple(p and (k + 1) in M for k, p in enumerate(x.present))
    feats = tuple(f if p else np.zeros_like(f) for f, p in zip(x.features, present))
    return MultimodalSample(feats, present, x.label)


def compose_projection_check(x: MultimodalSample, N: ModalitySet,
                             M: ModalitySet) -> bool:
    """True iff projecting onto ``N`` equals projecting onto ``M`` then ``N``."""
    if not N.issubset(M):
        raise PreconditionError(f"{N} is not a subset of {M}")
    return project_modality(x, N) == project_modality(project_modality(x, M), N)


def pair_label(y_i: int, y_j: int) -> int:
    """+1 for a similar pair (same label), -1 for a dissimilar pair."""
    return 1 if y_i == y_j else -1


def pair_signs(labels: np.ndarray, I: np.ndarray, J: np.ndarray) -> np.ndarray:
    return np.where(labels[I] == labels[J], 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Generator parameters; the latent metric and threshold define the true composite."""

    mixing_matrices: tuple[np.ndarray, ...]
    latent_dim: int
    noise_sigma: float
    bayes_threshold: float
    latent_metric: np.ndarray
    centers: np.ndarray

    def __post_init__(self):
        mats = tuple(np.array(W, dtype=float, ndmin=2) for W in self.mixing_matrices)
        object.__setattr__(self, "mixing_matrices", mats)
        object.__setattr__(self, "latent_metric",
                           np.asarray(self.latent_metric, dtype=float).reshape(-1))
        object.__setattr__(self, "centers", np.array(self.centers, dtype=float, ndmin=2))
        if self.latent_dim < 1:
            raise LayoutError("latent_dim must be positive")
        if self.noise_sigma < 0:
            raise LayoutError("noise_sigma must be nonnegative")
        if self.latent_metric.shape != (self.latent_dim,):
            raise LayoutError("latent_metric must have latent_dim entries")
        if np.any(self.latent_metric < 0):
            raise LayoutError("latent_metric entries must be nonnegative")
        if self.centers.shape[1] != self.latent_dim or self.centers.shape[0] < 1:
            raise LayoutError("centers must be an array of shape (C, latent_dim)")
        for W in mats:
            if W.shape[1] != self.latent_dim:
                raise LayoutError(f"mixing matrix of shape {W.shape} does not map "
                                  f"from a {self.latent_dim}-dim latent")

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    def check(self, layout: ModalityLayout) -> None:
        if len(self.mixing_matrices) != layout.num_modalities:
            raise LayoutError("one mixing matrix per modality is required")
        for W, d in zip(self.mixing_matrices, layout.dims):
            if W.shape != (d, self.latent_dim):
                raise LayoutError(f"mixing matrix has shape {W.shape}, "
                                  f"expected {(d, self.latent_dim)}")

    def to_dict(self) -> dict:
        return {"mixing_matrices": [W.tolist() for W in self.mixing_matrices],
                "latent_dim": self.latent_dim, "noise_sigma": self.noise_sigma,
                "bayes_threshold": self.bayes_threshold,
                "latent_metric": self.latent_metric.tolist(),
                "centers": self.centers.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(tuple(np.array(W, dtype=float) for W in d["mixing_matrices"]),
                   int(d["latent_dim"]), float(d["noise_sigma"]),
                   float(d["bayes_threshold"]), np.array(d["latent_metric"]),
                   np.array(d["centers"]))


def default_centers(n_classes: int, latent_dim: int, scale: float) -> np.ndarray:
    """Centers at +-scale*e_1, +-scale*e_2, ... in that order."""
    if n_classes > 2 * latent_dim:
        raise LayoutError(f"{n_classes} centers need latent_dim >= {(n_classes + 1) // 2}")
    centers = np.zeros((n_classes, latent_dim))
    for c in range(n_classes):
        centers[c, c // 2] = scale if c % 2 == 0 else -scale
    return centers


def make_ground_truth(layout: ModalityLayout, latent_dim: int = 2, n_classes: int = 2,
                      center_scale: float = 1.5, noise_sigma: float = 0.3,
                      mixing: str = "random", latent_metric=None,
                      bayes_threshold: float | None = None,
                      seed: int = 0) -> GroundTruth:
    """Build a ground truth for ``layout``.

    ``mixing="identity"`` requires a single modality with ``dims[0] == latent_dim``.
    The default threshold is half the squared latent distance between the first
    two centers; ``erm.calibrate_ground_truth`` fits the risk-optimal one.
    """
    if mixing == "identity":
        if layout.num_modalities != 1 or layout.dims[0] != latent_dim:
            raise LayoutError("identity mixing needs K=1 and dims[0] == latent_dim")
        mats = (np.eye(latent_dim),)
    elif mixing == "random":
        rng = np.random.default_rng(seed)
        mats = tuple(rng.normal(scale=1.0 / np.sqrt(latent_dim), size=(d, latent_dim))
                     for d in layout.dims)
    else:
        raise LayoutError(f"unknown mixing {mixing!r}")
    if latent_metric is None:
        latent_metric = np.zeros(latent_dim)
        latent_metric[:max(1, (n_classes + 1) // 2)] = 1.0
    latent_metric = np.asarray(latent_metric, dtype=float)
    centers = default_centers(n_classes, latent_dim, center_scale)
    if bayes_threshold is None:
        if n_classes > 1:
            diff = centers[0] - centers[1]
            bayes_threshold = 0.5 * float(latent_metric @ diff ** 2)
        else:
            bayes_threshold = 0.0
    gt = GroundTruth(mats, latent_dim, float(noise_sigma), float(bayes_threshold),
                     latent_metric, centers)
    gt.check(layout)
    return gt


@dataclass(frozen=True, eq=False)
class Dataset:
    """Array-backed sample collection.

    ``features`` is the flat ``(n, total_dim)`` matrix with missing blocks zeroed,
    ``present`` is ``(n, K)``. ``latents`` is kept when the generator produced the
    data so the true composite can be evaluated on the same samples.
    """

    layout: ModalityLayout
    features: np.ndarray
    present: np.ndarray
    labels: np.ndarray
    ground_truth: GroundTruth | None = None
    seed: int = 0
    latents: np.ndarray | None = field(default=None)

    def __post_init__(self):
        X = np.array(self.features, dtype=float, ndmin=2)
        P = np.array(self.present, dtype=bool, ndmin=2)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        n = X.shape[0]
        if X.shape[1] != self.layout.total_dim:
            raise LayoutError(f"features have {X.shape[1]} columns, layout needs "
                              f"{self.layout.total_dim}")
        if P.shape != (n, self.layout.num_modalities) or y.shape != (n,):
            raise LayoutError("present/labels do not match the number of samples")
        for k in range(1, self.layout.num_modalities + 1):
            X[~P[:, k - 1], self.layout.block(k)] = 0.0
        for a in (X, P, y):
            a.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "present", P)
        object.__setattr__(self, "labels", y)
        if self.latents is not None:
            Z = np.array(self.latents, dtype=float, ndmin=2)
            if Z.shape[0] != n:
                raise LayoutError("latents do not match the number of samples")
            Z.setflags(write=False)
            object.__setattr__(self, "latents", Z)
        if self.ground_truth is not None:
            self.ground_truth.check(self.layout)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def __len__(self):
        return self.n

    def sample(self, i: int) -> MultimodalSample:
        x = self.features[i]
        return MultimodalSample(
            tuple(x[self.layout.block(k)] for k in range(1, self.layout.num_modalities + 1)),
            tuple(self.present[i]), int(self.labels[i]))

    @property
    def samples(self) -> list[MultimodalSample]:
        return [self.sample(i) for i in range(self.n)]

    @classmethod
    def from_samples(cls, layout: ModalityLayout, samples: Sequence[MultimodalSample],
                     ground_truth: GroundTruth | None = None, seed: int = 0,
                     latents=None) -> "Dataset":
        for s in samples:
            if not s.conforms(layout):
                raise LayoutError("sample does not conform to layout")
        X = np.array([s.flat() for s in samples], dtype=float).reshape(len(samples),
                                                                        layout.total_dim)
        P = np.array([s.present for s in samples], dtype=bool).reshape(
            len(samples), layout.num_modalities)
        y = np.array([s.label for s in samples], dtype=np.int64)
        return cls(layout, X, P, y, ground_truth, seed, latents)

    def flat(self, mask: ModalitySet | None = None) -> np.ndarray:
        """Flat features after projecting every sample onto ``mask``."""
        if mask is None:
            return self.features
        return self.features * self.layout.coordinate_mask(mask)

    def project(self, mask: ModalitySet) -> "Dataset":
        keep = np.array([(k + 1) in mask for k in range(self.layout.num_modalities)])
        return replace(self, features=self.flat(mask), present=self.present & keep)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx], present=self.present[idx],
                       labels=self.labels[idx],
                       latents=None if self.latents is None else self.latents[idx])

    def to_dict(self) -> dict:
        K = self.layout.num_modalities
        samples = []
        for i in range(self.n):
            s = {"features": [self.features[i, self.layout.block(k)].tolist()
                              for k in range(1, K + 1)],
                 "present": self.present[i].tolist(), "label": int(self.labels[i])}
            if self.latents is not None:
                s["latent"] = self.latents[i].tolist()
            samples.append(s)
        return {"layout": self.layout.to_dict(), "seed": int(self.seed),
                "ground_truth": None if self.ground_truth is None
                else self.ground_truth.to_dict(),
                "samples": samples}

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        layout = ModalityLayout.from_dict(d["layout"])
        gt = d.get("ground_truth")
        gt = None if gt is None else GroundTruth.from_dict(gt)
        rows = d["samples"]
        samples = [MultimodalSample(tuple(np.array(f, dtype=float) for f in s["features"]),
                                    tuple(s["present"]), s["label"]) for s in rows]
        latents = None
        if rows and all("latent" in s for s in rows):
            latents = np.array([s["latent"] for s in rows], dtype=float)
        return cls.from_samples(layout, samples, gt, int(d.get("seed", 0)), latents)


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_text(json.dumps(ds.to_dict()))


def load_dataset(path) -> Dataset:
    return Dataset.from_dict(json.loads(Path(path).read_text()))


def _streams(seed: int):
    # Separate streams per drawn quantity keep every draw prefix-stable in n.
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1))
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(3)]


def generate_dataset(layout: ModalityLayout, n: int, gt: GroundTruth,
                     seed: int) -> Dataset:
    """Draw ``n`` samples: label uniform over centers, latent = center + N(0, I),
    modality view ``W_k z + sigma * eps``.

    Sample ``i`` depends only on ``(seed, i)``, so growing ``n`` appends samples.
    """
    if n < 2:
        raise SizeError(f"need n >= 2 samples, got {n}")
    gt.check(layout)
    label_rng, latent_rng, noise_rng = _streams(seed)
    y = label_rng.integers(0, gt.n_classes, size=n)
    Z = gt.centers[y] + latent_rng.standard_normal((n, gt.latent_dim))
    noise = noise_rng.standard_normal((n, layout.total_dim))
    X = np.hstack([Z @ W.T for W in gt.mixing_matrices])
    if gt.noise_sigma > 0:
        X = X + gt.noise_sigma * noise
    present = np.ones((n, layout.num_modalities), dtype=bool)
    return Dataset(layout, X, present, y, gt, int(seed), Z)


def random_sample(layout: ModalityLayout, rng: np.random.Generator,
                  p_missing: float = 0.2, n_labels: int = 3) -> MultimodalSample:
    """Arbitrary sample for property checks; some modalities already missing."""
    feats = tuple(rng.normal(size=d) for d in layout.dims)
    present = tuple(bool(v) for v in rng.random(layout.num_modalities) >= p_missing)
    return MultimodalSample(feats, present, int(rng.integers(n_labels)))


def random_modality_set(K: int, rng: np.random.Generator) -> ModalitySet:
    return ModalitySet(tuple(k for k in range(1, K + 1) if rng.random() < 0.5))


def random_nested_pair(K: int, rng: np.random.Generator) -> tuple[ModalitySet, ModalitySet]:
    M = random_modality_set(K, rng)
    N = ModalitySet(tuple(k for k in M if rng.random() < 0.5))
    return N, M


def modality_subsets(K: int) -> Iterable[ModalitySet]:
    for bits in range(2 ** K):
        yield ModalitySet(tuple(k + 1 for k in range(K) if bits >> k & 1))
