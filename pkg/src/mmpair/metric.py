"""Diagonal Mahalanobis metric, its constraint set, and Jacobi diagonalization."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import Dataset, ModalityLayout, ModalitySet
from .errors import ConvergenceError, ShapeError, SymmetryError


@dataclass(frozen=True, eq=False)
class DiagonalMetricModel:
    """Diagonal PSD metric with eigenvalues ``lambdas`` and a decision bias.

    ``eigen_cap`` bounds every eigenvalue, ``dist_cap`` clips distances and
    ``feature_cap`` is the sup-norm bound assumed on feature differences.
    """

    lambdas: np.ndarray
    bias: float
    mask: ModalitySet
    eigen_cap: float = 1.0
    dist_cap: float = np.inf
    feature_cap: float = np.inf

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float).reshape(-1)
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "bias", float(self.bias))
        if not (self.eigen_cap >= 0 and self.dist_cap > 0 and self.feature_cap > 0):
            raise ValueError("caps must be positive (eigen_cap may be 0)")

    @property
    def dim(self) -> int:
        return self.lambdas.size

    def is_feasible(self, layout: ModalityLayout | None = None) -> bool:
        lam = self.lambdas
        ok = bool(np.all(lam >= 0) and np.all(lam <= self.eigen_cap)
                  and 0 <= self.bias <= self.dist_cap)
        if layout is not None:
            ok = ok and lam.size == layout.total_dim and bool(
                np.all(lam[~layout.coordinate_mask(self.mask)] == 0))
        return ok

    def with_params(self, lambdas, bias) -> "DiagonalMetricModel":
        return replace(self, lambdas=lambdas, bias=bias)

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "bias": self.bias,
                "mask": list(self.mask.members), "eigen_cap": self.eigen_cap,
                "dist_cap": _num(self.dist_cap), "feature_cap": _num(self.feature_cap)}

    @classmethod
    def from_dict(cls, d: dict) -> "DiagonalMetricModel":
        return cls(np.array(d["lambdas"], dtype=float), float(d["bias"]),
                   ModalitySet(tuple(d["mask"])), float(d["eigen_cap"]),
                   float(d["dist_cap"]), float(d["feature_cap"]))


def _num(v: float):
    return v if np.isfinite(v) else str(v)


def save_model(model: DiagonalMetricModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> DiagonalMetricModel:
    return DiagonalMetricModel.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MetricConfig:
    """Constants of the constraint set: eigenvalue cap D, distance cap, feature cap B."""

    eigen_cap: float = 1.0
    dist_cap: float = 100.0
    feature_cap: float = 10.0

    def initial_model(self, layout: ModalityLayout, mask: ModalitySet) -> DiagonalMetricModel:
        """Center of the feasible box on the masked coordinates."""
        lam = np.where(layout.coordinate_mask(mask), self.eigen_cap / 2, 0.0)
        return DiagonalMetricModel(lam, self.dist_cap / 2, mask, self.eigen_cap,
                                   self.dist_cap, self.feature_cap)

    @classmethod
    def from_data(cls, ds: Dataset, eigen_cap: float = 1.0) -> "MetricConfig":
        """Tightest caps for ``ds``: B is the largest sup-norm difference and the
        distance cap is the largest squared difference at full eigenvalues, so
        clipping never binds on these samples."""
        X = ds.features
        span = X.max(axis=0) - X.min(axis=0)
        B = float(span.max())
        sq = np.einsum("ij,ij->i", X, X)
        G = sq[:, None] + sq[None, :] - 2 * X @ X.T
        kappa = eigen_cap * float(max(G.max(), 0.0))
        # round-off guard on the Gram identity
        kappa = kappa * (1 + 1e-9) + 1e-12
        return cls(eigen_cap, max(kappa, 1e-12), max(B, 1e-12))


def mahalanobis_distance(model: DiagonalMetricModel, x_i, x_j) -> float:
    """Clipped diagonal pseudo-distance ``min(sum lambda (x_i - x_j)^2, dist_cap)``."""
    x_i = np.asarray(x_i, dtype=float).reshape(-1)
    x_j = np.asarray(x_j, dtype=float).reshape(-1)
    if x_i.shape != x_j.shape or x_i.size != model.dim:
        raise ShapeError(f"vectors of length {x_i.size}, {x_j.size} for a "
                         f"{model.dim}-dim metric")
    diff = x_i - x_j
    return float(min(model.lambdas @ (diff * diff), model.dist_cap))


def pair_distances(lambdas, sqdiff: np.ndarray, dist_cap: float) -> np.ndarray:
    """Vectorized distances for rows of squared differences."""
    return np.minimum(sqdiff @ lambdas, dist_cap)


def project_to_constraints(lambdas, eigen_cap: float, coord_mask=None) -> np.ndarray:
    """Clamp to ``[0, eigen_cap]`` and zero the coordinates outside the mask."""
    out = np.clip(np.asarray(lambdas, dtype=float), 0.0, eigen_cap)
    if coord_mask is not None:
        out = np.where(coord_mask, out, 0.0)
    return out


def feature_diff_cap_check(ds: Dataset, brute_force_limit: int = 2048) -> float:
    """Largest sup-norm feature difference over all pairs.

    Coordinate-wise ``max - min`` is the answer; for small ``n`` the double loop
    is run as well and the two must agree.
    """
    X = ds.features
    shortcut = float((X.max(axis=0) - X.min(axis=0)).max())
    if ds.n <= brute_force_limit:
        brute = max_pairwise_sup_diff(X)
        if brute != shortcut:
            raise ArithmeticError(f"pairwise max {brute} != shortcut {shortcut}")
    return shortcut


def max_pairwise_sup_diff(X: np.ndarray) -> float:
    best = 0.0
    for i in range(X.shape[0]):
        best = max(best, float(np.abs(X[i + 1:] - X[i]).max(initial=0.0)))
    return best


def jacobi_diagonalize(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi with a threshold on the first sweeps.

    Stops once the off-diagonal Frobenius norm falls below
    ``tol * max(1, ||A||_F)``.

    Returns ``(Q, lam)`` with ``Q @ A @ Q.T`` diagonal, ``lam`` sorted descending
    and the rows of ``Q`` the matching eigenvectors.
    """
    A = np.array(A, dtype=float, ndmin=2)
    if A.shape[0] != A.shape[1]:
        raise ShapeError(f"matrix must be square, got {A.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12:
        raise SymmetryError("matrix is not symmetric within 1e-12")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)

    def off_norm(M):
        return np.sqrt(np.sum(np.triu(M, 1) ** 2) * 2)

    scale = max(1.0, float(np.linalg.norm(A)))
    for sweep in range(max_sweeps):
        off = off_norm(A)
        if off < tol * scale:
            break
        thresh = 0.2 * off / n ** 2 if sweep < 3 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                g = 100.0 * abs(apq)
                # negligible against both diagonal entries: drop it
                if sweep > 3 and abs(A[p, p]) + g == abs(A[p, p]) \
                        and abs(A[q, q]) + g == abs(A[q, q]):
                    A[p, q] = A[q, p] = 0.0
                    continue
                if abs(apq) <= thresh or apq == 0.0:
                    continue
                h = A[q, q] - A[p, p]
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                R = np.array([[c, s], [-s, c]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ R
                A[idx, :] = R.T @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
                V[:, idx] = V[:, idx] @ R
    else:
        if off_norm(A) >= tol * scale:
            raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    lam = np.diag(A).copy()
    order = np.argsort(-lam, kind="stable")
    return V[:, order].T, lam[order]


def off_diagonal_norm(M) -> float:
    M = np.asarray(M)
    return float(np.linalg.norm(M - np.diag(np.diag(M))))
