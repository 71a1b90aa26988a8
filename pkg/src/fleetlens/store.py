"""Filesystem summary store: hierarchical layout plus time/space/label filtering.

Packets live at ``<root>/<vehicle_id>/<YYYY-MM-DD>/<window_start>.json`` in the
same short-key encoding they travel in (schema on read). Writes are atomic
(temp file + rename) so concurrent scans only ever see complete packets.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from .model import GpsQuality, WindowSummary, decode_summary, encode_summary

if TYPE_CHECKING:  # pragma: no cover
    from .clustering import BehaviorModel

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters on a 6,371 km sphere."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


@dataclass(frozen=True, order=True)
class StoreKey:
    vehicle_id: str
    window_start: int


@dataclass(frozen=True)
class Circle:
    lat: float
    lon: float
    radius_m: float

    def __post_init__(self) -> None:
        if self.radius_m <= 0:
            raise ValueError(f"radius_m must be > 0, got {self.radius_m}")


@dataclass(frozen=True)
class QueryFilter:
    """Conjunction of optional predicates; time range is half-open [start, end).

    Any location predicate implies a GPS-quality floor of ``fix2d``: spatial
    scans never return a summary whose position cannot be trusted.
    """

    start_ms: Optional[int] = None
    end_ms: Optional[int] = None
    circle: Optional[Circle] = None
    label: Optional[str] = None
    min_gps_quality: Optional[GpsQuality] = None

    def effective_min_quality(self) -> Optional[GpsQuality]:
        if self.circle is None:
            return self.min_gps_quality
        floor = GpsQuality.FIX_2D
        if self.min_gps_quality is None or self.min_gps_quality.rank < floor.rank:
            return floor
        return self.min_gps_quality


MATCH_ALL = QueryFilter()


class SummaryStore:
    """Store and query summary packets under a local root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: StoreKey) -> Path:
        if "/" in key.vehicle_id or "\\" in key.vehicle_id or key.vehicle_id in (".", ".."):
            raise ValueError(f"vehicle_id not usable as a path segment: {key.vehicle_id!r}")
        day = datetime.fromtimestamp(key.window_start / 1000, tz=timezone.utc).strftime("%Y-%m-%d")
        return self.root / key.vehicle_id / day / f"{key.window_start}.json"

    def put(self, summary: WindowSummary) -> StoreKey:
        """Write one packet; idempotent per key, last write wins."""
        key = StoreKey(summary.vehicle_id, summary.window_start)
        path = self._path(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(encode_summary(summary))
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            raise OSError(f"failed to write summary at {path}: {exc}") from exc
        return key

    def get(self, key: StoreKey) -> Optional[WindowSummary]:
        path = self._path(key)
        if not path.exists():
            return None
        return decode_summary(path.read_bytes())

    def count(self) -> int:
        return sum(1 for _ in self._iter_paths())

    def _iter_paths(self):
        if not self.root.exists():
            return
        for vehicle_dir in sorted(p for p in self.root.iterdir() if p.is_dir()):
            for day_dir in sorted(p for p in vehicle_dir.iterdir() if p.is_dir()):
                files = [p for p in day_dir.iterdir() if p.suffix == ".json"]
                files.sort(key=lambda p: int(p.stem))
                yield from files

    def iter_all(self):
        for path in self._iter_paths():
            yield decode_summary(path.read_bytes())

    def scan(self, query: QueryFilter = MATCH_ALL,
             model: "BehaviorModel | None" = None) -> list[tuple[WindowSummary, Optional[str]]]:
        """Return ``(summary, label)`` pairs matching every present predicate.

        Labels are computed from ``model`` when given, otherwise ``None``;
        filtering by label therefore requires a model. Results are sorted by
        ``(vehicle_id, window_start)``.
        """
        if query.label is not None and model is None:
            raise ValueError("label filter requires a behavior model")
        if model is not None:
            from .clustering import assign, extract_features
        min_quality = query.effective_min_quality()

        results: list[tuple[WindowSummary, Optional[str]]] = []
        for summary in self.iter_all():
            if min_quality is not None and summary.gps_quality.rank < min_quality.rank:
                continue
            if query.start_ms is not None and summary.window_start < query.start_ms:
                continue
            if query.end_ms is not None and summary.window_start >= query.end_ms:
                continue
            if query.circle is not None:
                if summary.anchor_lat is None:
                    continue
                d = haversine(summary.anchor_lat, summary.anchor_lon,
                              query.circle.lat, query.circle.lon)
                if d > query.circle.radius_m:
                    continue
            label: Optional[str] = None
            if model is not None:
                label = assign(model, extract_features(summary))
                if query.label is not None and label != query.label:
                    continue
            results.append((summary, label))
        results.sort(key=lambda pair: (pair[0].vehicle_id, pair[0].window_start))
        return results
