"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written from the definitions, not by calling
the code under test (the store oracle borrows only the distance function,
which has its own external-value checks).
"""

import math
from fractions import Fraction

import numpy as np

from fleetlens.model import GpsQuality
from fleetlens.store import haversine


def percentile_oracle(values, p):
    """Sort-and-index reference: 1-based index ceil(p * n / 100)."""
    ordered = sorted(values)
    index = -((-Fraction(str(p)) * len(ordered)) // 100)  # exact ceiling
    return ordered[int(index) - 1]


def window_stats_oracle(samples):
    """Recompute summary statistics from raw samples with numpy."""
    mags = np.array([(s.ax ** 2 + s.ay ** 2 + s.az ** 2) ** 0.5 for s in samples])
    stats = {"mean": float(mags.mean()), "variance": float(mags.var())}
    for axis in ("x", "y", "z"):
        vals = [getattr(s, f"a{axis}") for s in samples]
        stats[axis] = tuple(percentile_oracle(vals, p) for p in (1, 10, 90, 99))
    return stats


def exhaustive_min_objective(points, k):
    """Global k-means optimum by enumerating partitions into exactly k blocks."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = math.inf

    def cost(assignment):
        total = 0.0
        for block in range(k):
            members = pts[[i for i in range(n) if assignment[i] == block]]
            if len(members) == 0:
                return math.inf
            centroid = members.mean(axis=0)
            total += float(((members - centroid) ** 2).sum())
        return total

    assignment = [0] * n

    def recurse(i, used):
        nonlocal best
        if n - i < k - used:
            return
        if i == n:
            if used == k:
                best = min(best, cost(assignment))
            return
        for block in range(used):
            assignment[i] = block
            recurse(i + 1, used)
        assignment[i] = used
        recurse(i + 1, used + 1)

    recurse(0, 0)
    return best


def brute_scan(pairs, query):
    """Reference store scan over in-memory (summary, label) pairs."""
    min_quality = query.min_gps_quality
    if query.circle is not None:
        if min_quality is None or min_quality.rank < GpsQuality.FIX_2D.rank:
            min_quality = GpsQuality.FIX_2D
    matched = []
    for summary, label in pairs:
        if min_quality is not None and summary.gps_quality.rank < min_quality.rank:
            continue
        if query.start_ms is not None and summary.window_start < query.start_ms:
            continue
        if query.end_ms is not None and summary.window_start >= query.end_ms:
            continue
        if query.circle is not None:
            if summary.anchor_lat is None:
                continue
            if haversine(summary.anchor_lat, summary.anchor_lon,
                         query.circle.lat, query.circle.lon) > query.circle.radius_m:
                continue
        if query.label is not None and label != query.label:
            continue
        matched.append((summary, label))
    matched.sort(key=lambda pair: (pair[0].vehicle_id, pair[0].window_start))
    return matched
