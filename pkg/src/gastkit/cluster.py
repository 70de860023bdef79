"""Latent-space clustering: k-means with k-means++ seeding, elbow and
silhouette model selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["ClusteringResult", "kmeans", "elbow_select", "silhouette_score",
           "select_k"]

# below this best silhouette the point set is treated as structureless
WEAK_STRUCTURE_SILHOUETTE = 0.25


class TooFewPointsError(ValueError):
    pass


class SingleClusterError(ValueError):
    pass


@dataclass
class ClusteringResult:
    k: int
    assignments: np.ndarray
    centers: np.ndarray
    inertia: float
    silhouette: float


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp_init(points: np.ndarray, k: int,
                   rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = points[rng.integers(n)]
        else:
            probs = d2 / total
            centers[i] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(points: Sequence[Sequence[float]], k: int, seed: int = 0,
           max_iter: int = 300, tol: float = 1e-6) -> ClusteringResult:
    """Lloyd iterations from a k-means++ start; empty clusters are re-seeded
    to the farthest point. Inertia is non-increasing across iterations."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if k < 1 or n < k:
        raise TooFewPointsError(f"need >= {k} points, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(points, k, rng)
    assignments = np.zeros(n, dtype=np.intp)
    prev_inertia = np.inf
    for _ in range(max_iter):
        d2 = _sq_dists(points, centers)
        assignments = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assignments].sum())
        new_centers = centers.copy()
        for j in range(k):
            mask = assignments == j
            if mask.any():
                new_centers[j] = points[mask].mean(axis=0)
            else:
                far = d2[np.arange(n), assignments].argmax()
                new_centers[j] = points[far]
        centers = new_centers
        if prev_inertia - inertia <= tol:
            break
        prev_inertia = inertia
    d2 = _sq_dists(points, centers)
    assignments = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assignments].sum())
    sil = (silhouette_score(points, assignments)
           if len(set(assignments.tolist())) >= 2 else 0.0)
    return ClusteringResult(k, assignments, centers, inertia, sil)


def elbow_select(points: Sequence[Sequence[float]],
                 k_range: Sequence[int], seed: int = 0) -> int:
    """Pick the k whose inertia-curve point lies farthest from the chord
    between the curve's endpoints (interior points only; ties go small)."""
    points = np.asarray(points, dtype=np.float64)
    ks = sorted(set(int(k) for k in k_range))
    if len(ks) < 3:
        raise ValueError("k_range needs at least 3 values for an elbow")
    if ks[0] < 1 or ks[-1] > len(points):
        raise ValueError(f"k_range {ks[0]}..{ks[-1]} outside [1, {len(points)}]")
    inertias = np.array([kmeans(points, k, seed).inertia for k in ks])
    x0, y0 = ks[0], inertias[0]
    x1, y1 = ks[-1], inertias[-1]
    dx, dy = x1 - x0, y1 - y0
    norm = np.hypot(dx, dy)
    best_k, best_d = ks[1], -np.inf
    for k, inertia in zip(ks[1:-1], inertias[1:-1]):
        d = abs(dy * (k - x0) - dx * (inertia - y0)) / max(norm, 1e-300)
        if d > best_d + 1e-12:
            best_d, best_k = d, k
    return best_k


def silhouette_score(points: Sequence[Sequence[float]],
                     assignments: Sequence[int]) -> float:
    """Mean silhouette (b - a) / max(a, b); singleton-cluster points score 0."""
    points = np.asarray(points, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.intp)
    labels = np.unique(assignments)
    if labels.size < 2:
        raise SingleClusterError("silhouette needs at least 2 clusters")
    n = points.shape[0]
    dists = np.sqrt(_sq_dists(points, points))
    scores = np.zeros(n)
    for i in range(n):
        own = assignments == assignments[i]
        own_size = own.sum()
        if own_size <= 1:
            continue  # singleton scores 0
        a = dists[i, own].sum() / (own_size - 1)
        b = np.inf
        for lab in labels:
            if lab == assignments[i]:
                continue
            other = assignments == lab
            b = min(b, dists[i, other].mean())
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def select_k(points: Sequence[Sequence[float]], k_range: Sequence[int],
             seed: int = 0) -> int:
    """Choose the cluster count: silhouette-maximizing k, cross-checked
    against the elbow; weak overall structure falls back to the range
    minimum with a warning."""
    points = np.asarray(points, dtype=np.float64)
    ks = sorted(set(int(k) for k in k_range))
    sil_ks = [k for k in ks if k >= 2]
    if not sil_ks:
        raise ValueError("k_range must contain a value >= 2")
    sils = {k: kmeans(points, k, seed).silhouette for k in sil_ks}
    best_sil_k = min(sil_ks, key=lambda k: (-sils[k], k))
    if sils[best_sil_k] < WEAK_STRUCTURE_SILHOUETTE:
        warnings.warn(
            f"weak cluster structure (best silhouette "
            f"{sils[best_sil_k]:.3f}); falling back to k={ks[0]}",
            stacklevel=2)
        return ks[0]
    try:
        elbow_k = elbow_select(points, ks, seed)
    except ValueError:
        elbow_k = best_sil_k
    if elbow_k != best_sil_k:
        warnings.warn(
            f"elbow suggests k={elbow_k}, silhouette k={best_sil_k}; "
            "preferring silhouette", stacklevel=2)
    return best_sil_k
