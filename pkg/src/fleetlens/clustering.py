"""Two-feature driving-behavior model: z-scored K-Means with named, versioned clusters.

Features per window are the peak-maneuver norm (from the per-axis p99 values)
and the instability score (magnitude variance). Clusters are fitted with
k-means++ seeded Lloyd iterations and labeled by sorting centroids on
instability, so the five-label vocabulary always runs Calm -> Very Aggressive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import WindowSummary

#: Fixed label vocabulary for the five-cluster fleet model, calmest first.
BEHAVIOR_LABELS = ("Calm", "Moderate", "Slightly Unstable", "Aggressive", "Very Aggressive")

CONVERGENCE_TOL = 1e-6
MAX_ITERATIONS = 300
DEFAULT_SEED = 42
DEFAULT_RESTARTS = 10


class InsufficientDataError(ValueError):
    """Fewer feature vectors than requested clusters."""


class MetricError(ValueError):
    """A cluster-quality metric was asked of a degenerate clustering."""


@dataclass(frozen=True)
class FeatureVector:
    """One window's behavioral coordinates: (peak-event norm, instability)."""

    extreme_event_magnitude: float
    instability: float

    def __post_init__(self) -> None:
        if self.extreme_event_magnitude < 0 or self.instability < 0:
            raise ValueError("features must be non-negative")


def extract_features(summary: WindowSummary) -> FeatureVector:
    """Feature vector for one summary: norm of per-axis p99 plus magnitude variance."""
    x99 = summary.x_percentiles[3]
    y99 = summary.y_percentiles[3]
    z99 = summary.z_percentiles[3]
    return FeatureVector(
        extreme_event_magnitude=math.hypot(x99, y99, z99),
        instability=summary.mag_variance,
    )


def _as_matrix(features: Sequence[FeatureVector] | np.ndarray) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=float)
    return np.array(
        [(f.extreme_event_magnitude, f.instability) for f in features], dtype=float
    )


@dataclass(frozen=True)
class Normalization:
    """Per-dimension z-score parameters (population std; zero-std dims map to 0)."""

    mean: tuple[float, ...]
    std: tuple[float, ...]

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "Normalization":
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)  # population (ddof=0)
        return cls(tuple(float(v) for v in mean), tuple(float(v) for v in std))

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.mean)
        std = np.asarray(self.std)
        safe = np.where(std > 0, std, 1.0)
        z = (matrix - mean) / safe
        return np.where(std > 0, z, 0.0)

    def invert(self, matrix: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.mean)
        std = np.asarray(self.std)
        return matrix * std + mean


@dataclass(frozen=True)
class BehaviorModel:
    """Versioned fit artifact: centroids in normalized space plus the label map."""

    version: int
    k: int
    centroids: tuple[tuple[float, ...], ...]
    normalization: Normalization
    label_map: tuple[str, ...]
    objective: float
    objective_history: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if len(self.centroids) != self.k or len(self.label_map) != self.k:
            raise ValueError("centroids and label_map must both have k entries")
        if len(set(self.label_map)) != self.k:
            raise ValueError("label_map must be a bijection onto k distinct labels")
        for c in self.centroids:
            if not all(math.isfinite(v) for v in c):
                raise ValueError(f"non-finite centroid: {c}")

    @property
    def labels(self) -> tuple[str, ...]:
        """Labels in ascending-instability order."""
        order = _label_order(np.asarray(self.centroids), self.normalization)
        return tuple(self.label_map[i] for i in order)

    def centroids_raw(self) -> tuple[tuple[float, ...], ...]:
        raw = self.normalization.invert(np.asarray(self.centroids))
        return tuple(tuple(float(v) for v in row) for row in raw)

    def silhouette_score(self, features: Sequence[FeatureVector] | np.ndarray) -> float:
        z = self.normalization.apply(_as_matrix(features))
        assignments = _nearest(z, np.asarray(self.centroids))
        return silhouette(z, assignments, k=self.k)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "k": self.k,
            "feature_names": ["extreme_event_magnitude", "instability"],
            "normalization": {"mean": list(self.normalization.mean),
                              "std": list(self.normalization.std)},
            "centroids": [list(c) for c in self.centroids],
            "label_map": {str(i): label for i, label in enumerate(self.label_map)},
            "objective": self.objective,
            "objective_history": list(self.objective_history),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")

    @classmethod
    def from_json(cls, obj: dict) -> "BehaviorModel":
        k = int(obj["k"])
        label_map = tuple(obj["label_map"][str(i)] for i in range(k))
        return cls(
            version=int(obj["version"]),
            k=k,
            centroids=tuple(tuple(float(v) for v in c) for c in obj["centroids"]),
            normalization=Normalization(
                mean=tuple(float(v) for v in obj["normalization"]["mean"]),
                std=tuple(float(v) for v in obj["normalization"]["std"]),
            ),
            label_map=label_map,
            objective=float(obj["objective"]),
            objective_history=tuple(float(v) for v in obj.get("objective_history", [])),
        )

    @classmethod
    def load(cls, path: str | Path) -> "BehaviorModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin resolves ties toward the lowest centroid index.
    return _squared_distances(points, centroids).argmin(axis=1)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [points[int(rng.integers(n))]]
    for _ in range(k - 1):
        d2 = _squared_distances(points, np.asarray(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
    return np.asarray(centers, dtype=float)


def _lloyd(points: np.ndarray, init: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run Lloyd iterations from ``init``; returns (centroids, assignment, J history).

    The recorded objective is checked to be non-increasing every iteration;
    a violation means a bug, not bad data, so it raises immediately.
    """
    n = len(points)
    centroids = init.copy()
    k = len(centroids)
    history: list[float] = []
    previous = math.inf

    for _ in range(MAX_ITERATIONS):
        d2 = _squared_distances(points, centroids)
        assignment = d2.argmin(axis=1)

        # A cluster may starve when duplicates collapse; reseed it at the point
        # currently worst-served, which can only lower the objective.
        for j in range(k):
            if not (assignment == j).any():
                worst = int(d2[np.arange(n), assignment].argmax())
                centroids[j] = points[worst]
                d2[:, j] = ((points - centroids[j]) ** 2).sum(axis=1)
                assignment = d2.argmin(axis=1)

        objective = float(d2[np.arange(n), assignment].sum())
        if objective > previous * (1 + 1e-9) + 1e-12:
            raise RuntimeError(
                f"objective increased during Lloyd iteration: {previous} -> {objective}"
            )
        history.append(objective)
        previous = objective

        updated = centroids.copy()
        for j in range(k):
            members = points[assignment == j]
            if len(members):
                updated[j] = members.mean(axis=0)
        movement = float(np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max())
        centroids = updated
        if movement < CONVERGENCE_TOL:
            break

    d2 = _squared_distances(points, centroids)
    assignment = d2.argmin(axis=1)
    objective = float(d2[np.arange(n), assignment].sum())
    if objective > previous * (1 + 1e-9) + 1e-12:
        raise RuntimeError("objective increased after final update step")
    history.append(objective)
    return centroids, assignment, history


def _label_order(centroids: np.ndarray, normalization: Normalization) -> list[int]:
    """Centroid indices sorted ascending by raw (instability, peak-event norm)."""
    raw = normalization.invert(centroids)
    return sorted(range(len(centroids)), key=lambda i: (raw[i][1], raw[i][0]))


def _label_names(k: int) -> tuple[str, ...]:
    if k == len(BEHAVIOR_LABELS):
        return BEHAVIOR_LABELS
    return tuple(f"Cluster {i + 1}" for i in range(k))


def _assemble(centroids: np.ndarray, history: list[float], normalization: Normalization,
              k: int, version: int) -> BehaviorModel:
    order = _label_order(centroids, normalization)
    names = _label_names(k)
    label_map = [""] * k
    for rank, idx in enumerate(order):
        label_map[idx] = names[rank]
    return BehaviorModel(
        version=version,
        k=k,
        centroids=tuple(tuple(float(v) for v in row) for row in centroids),
        normalization=normalization,
        label_map=tuple(label_map),
        objective=history[-1],
        objective_history=tuple(history),
    )


def fit(features: Sequence[FeatureVector] | np.ndarray, k: int,
        seed: int = DEFAULT_SEED, restarts: int = 1, version: int = 1) -> BehaviorModel:
    """Fit a k-cluster model; deterministic given (feature order, k, seed, restarts).

    Each restart r seeds k-means++ from ``seed + r``; the lowest-objective run
    wins, earliest restart on ties.
    """
    matrix = _as_matrix(features)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    if len(matrix) < k:
        raise InsufficientDataError(f"need at least {k} feature vectors, got {len(matrix)}")

    normalization = Normalization.fit(matrix)
    z = normalization.apply(matrix)

    best: tuple[np.ndarray, list[float]] | None = None
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        centroids, _, history = _lloyd(z, _kmeans_pp(z, k, rng))
        if best is None or history[-1] < best[1][-1]:
            best = (centroids, history)
    assert best is not None
    return _assemble(best[0], best[1], normalization, k, version)


def assign(model: BehaviorModel, feature: FeatureVector) -> str:
    """Label of the nearest centroid in normalized space; ties pick the lowest index."""
    z = model.normalization.apply(
        np.array([[feature.extreme_event_magnitude, feature.instability]])
    )
    idx = int(_nearest(z, np.asarray(model.centroids))[0])
    return model.label_map[idx]


def silhouette(points: np.ndarray | Sequence, assignments: Sequence[int] | np.ndarray,
               k: int | None = None) -> float:
    """Mean silhouette over all points (Euclidean a/b formulation).

    ``k`` declares the expected cluster count; if any of the k clusters is
    empty, or fewer than two clusters are present, this is a MetricError.
    Singleton clusters contribute 0 for their lone point, as usual.
    """
    pts = np.asarray(points, dtype=float)
    labels = np.asarray(assignments)
    if len(pts) != len(labels):
        raise ValueError("points and assignments must have equal length")
    unique = sorted(set(labels.tolist()))
    if k is not None and len(unique) < k:
        raise MetricError(f"expected {k} non-empty clusters, found {len(unique)}")
    if len(unique) < 2:
        raise MetricError("silhouette requires at least 2 non-empty clusters")

    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("nmd,nmd->nm", diff, diff))
    members = {label: np.flatnonzero(labels == label) for label in unique}

    scores = np.zeros(len(pts))
    for i in range(len(pts)):
        own = members[labels[i]]
        if len(own) == 1:
            scores[i] = 0.0
            continue
        a = dist[i, own].sum() / (len(own) - 1)
        b = min(dist[i, members[other]].mean() for other in unique if other != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def elbow_curve(features: Sequence[FeatureVector] | np.ndarray,
                k_range: Iterable[int], seed: int = DEFAULT_SEED,
                restarts: int = DEFAULT_RESTARTS) -> list[tuple[int, float]]:
    """Objective per k over ``k_range`` using best-of-``restarts`` fits.

    Each k additionally tries a warm start built from the previous k's best
    centroids plus the farthest point, which keeps the curve non-increasing
    even when the random restarts are unlucky.
    """
    matrix = _as_matrix(features)
    normalization = Normalization.fit(matrix)
    z = normalization.apply(matrix)
    ks = sorted(set(int(k) for k in k_range))

    curve: list[tuple[int, float]] = []
    previous_best: np.ndarray | None = None
    for k in ks:
        if len(z) < k:
            raise InsufficientDataError(f"need at least {k} feature vectors, got {len(z)}")
        candidates: list[np.ndarray] = []
        for r in range(restarts):
            rng = np.random.default_rng(seed + r)
            candidates.append(_kmeans_pp(z, k, rng))
        if previous_best is not None and len(previous_best) == k - 1:
            d2 = _squared_distances(z, previous_best).min(axis=1)
            warm = np.vstack([previous_best, z[int(d2.argmax())]])
            candidates.append(warm)

        best: tuple[np.ndarray, float] | None = None
        for init in candidates:
            centroids, _, history = _lloyd(z, init)
            if best is None or history[-1] < best[1]:
                best = (centroids, history[-1])
        assert best is not None
        previous_best = best[0]
        curve.append((k, best[1]))
    return curve
