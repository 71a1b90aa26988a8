"""Edge-side replay: tumbling windows, per-window statistics, reduction accounting.

Windows are non-overlapping and aligned to
``window_start = floor(timestamp / window_ms) * window_ms``, so the same
stream always partitions the same way. Replay tolerates one window of
reordering per vehicle; anything older is dropped and counted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

from .model import (
    GpsFix,
    GpsQuality,
    RawSample,
    SamplingProfile,
    WindowSummary,
    encode_summary,
    magnitude,
    parse_telemetry_line,
    raw_payload_bytes,
)

logger = logging.getLogger(__name__)


class EmptyWindowError(ValueError):
    """Raised when a statistic is requested over zero samples."""


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: sorted value at 1-based index ceil(p/100 * n).

    The index is computed with exact rational arithmetic so that e.g.
    p=10 over 60 values selects index 6, never 7 through float error.
    """
    if len(values) == 0:
        raise EmptyWindowError("percentile of an empty collection")
    if not 0 < p < 100:
        raise ValueError(f"p must be in (0, 100), got {p}")
    ordered = sorted(values)
    index = math.ceil(Fraction(str(p)) * len(ordered) / 100)
    return ordered[index - 1]


@dataclass
class WindowAccumulator:
    """Buffers one vehicle's readings for a single tumbling window."""

    vehicle_id: str
    window_start: int
    window_ms: int
    samples: list[RawSample] = field(default_factory=list)
    fixes: list[GpsFix] = field(default_factory=list)

    def _check(self, timestamp: int) -> None:
        if not self.window_start <= timestamp < self.window_start + self.window_ms:
            raise ValueError(
                f"timestamp {timestamp} outside window "
                f"[{self.window_start}, {self.window_start + self.window_ms})"
            )

    def add_sample(self, sample: RawSample) -> None:
        self._check(sample.timestamp)
        self.samples.append(sample)

    def add_fix(self, fix: GpsFix) -> None:
        self._check(fix.timestamp)
        self.fixes.append(fix)


def close_window(acc: WindowAccumulator, profile: SamplingProfile) -> WindowSummary:
    """Compute the summary packet for a finished window.

    Magnitude mean/variance are population statistics over the per-sample
    magnitudes; the GPS anchor is the last fix with the best quality seen in
    the window. Values are full precision here; quantization happens at encode.
    """
    if not acc.samples:
        raise EmptyWindowError(f"window {acc.window_start} has no accelerometer samples")
    mags = [magnitude(s.ax, s.ay, s.az) for s in acc.samples]
    n = len(mags)
    mean = math.fsum(mags) / n
    variance = math.fsum((m - mean) ** 2 for m in mags) / n

    axes = {
        "x": [s.ax for s in acc.samples],
        "y": [s.ay for s in acc.samples],
        "z": [s.az for s in acc.samples],
    }
    pct = {
        axis: tuple(percentile(vals, p) for p in (1, 10, 90, 99))
        for axis, vals in axes.items()
    }

    if acc.fixes:
        best = max(f.fix_quality.rank for f in acc.fixes)
        anchor = [f for f in acc.fixes if f.fix_quality.rank == best][-1]
        lat, lon, quality = anchor.lat, anchor.lon, anchor.fix_quality
    else:
        lat, lon, quality = None, None, GpsQuality.NONE

    return WindowSummary(
        vehicle_id=acc.vehicle_id,
        window_start=acc.window_start,
        window_duration=profile.window_seconds,
        mag_mean=mean,
        mag_variance=variance,
        x_percentiles=pct["x"],
        y_percentiles=pct["y"],
        z_percentiles=pct["z"],
        anchor_lat=lat,
        anchor_lon=lon,
        gps_quality=quality,
        sample_count=n,
    )


@dataclass(frozen=True)
class ReductionReport:
    """Transmission accounting: encoded summary bytes vs the raw projection."""

    windows: int
    raw_bytes_projected: int
    aggregated_bytes: int
    reduction_pct: float

    def to_json(self) -> dict:
        return {
            "windows": self.windows,
            "raw_bytes_projected": self.raw_bytes_projected,
            "aggregated_bytes": self.aggregated_bytes,
            "reduction_pct": self.reduction_pct,
        }

    @classmethod
    def compute(cls, windows: int, raw_bytes: int, aggregated_bytes: int) -> "ReductionReport":
        if windows == 0:
            pct = 0.0
        else:
            pct = 100.0 * (1.0 - aggregated_bytes / raw_bytes)
        return cls(windows, raw_bytes, aggregated_bytes, pct)


@dataclass
class ReplayResult:
    summaries: list[WindowSummary]
    report: ReductionReport
    dropped_records: int
    empty_windows: int


class _VehicleState:
    __slots__ = ("open", "max_window")

    def __init__(self) -> None:
        self.open: dict[int, WindowAccumulator] = {}
        self.max_window: int | None = None


def run_replay(stream: Union[Iterable[str], str, Path],
               profile: SamplingProfile) -> ReplayResult:
    """Replay a telemetry JSONL stream into window summaries plus a reduction report.

    One summary is emitted per window with at least one accelerometer sample;
    windows containing only GPS (or nothing) are skipped with a logged gap.
    Records more than one window behind a vehicle's newest window are dropped.
    Emitted summaries are sorted by ``(vehicle_id, window_start)``.
    """
    if isinstance(stream, (str, Path)):
        with open(stream, encoding="utf-8") as fh:
            return run_replay(list(fh), profile)

    window_ms = profile.window_ms
    states: dict[str, _VehicleState] = {}
    summaries: list[WindowSummary] = []
    dropped = 0
    empty = 0

    def close(acc: WindowAccumulator) -> None:
        nonlocal empty
        if not acc.samples:
            empty += 1
            logger.info("gap: vehicle=%s window=%d had no accelerometer samples",
                        acc.vehicle_id, acc.window_start)
            return
        summaries.append(close_window(acc, profile))

    for line in stream:
        line = line.strip()
        if not line:
            continue
        vehicle_id, record = parse_telemetry_line(line)
        state = states.setdefault(vehicle_id, _VehicleState())
        window = (record.timestamp // window_ms) * window_ms

        if state.max_window is not None and window < state.max_window - window_ms:
            dropped += 1
            continue

        acc = state.open.get(window)
        if acc is None:
            acc = WindowAccumulator(vehicle_id, window, window_ms)
            state.open[window] = acc
        if isinstance(record, RawSample):
            acc.add_sample(record)
        else:
            acc.add_fix(record)

        if state.max_window is None or window > state.max_window:
            state.max_window = window
            # Anything older than the previous window can no longer change.
            for start in sorted(state.open):
                if start < window - window_ms:
                    close(state.open.pop(start))

    for state in states.values():
        for start in sorted(state.open):
            close(state.open.pop(start))

    summaries.sort(key=lambda s: (s.vehicle_id, s.window_start))
    aggregated = sum(len(encode_summary(s)) for s in summaries)
    raw = raw_payload_bytes(profile) * len(summaries)
    report = ReductionReport.compute(len(summaries), raw, aggregated)
    if dropped:
        logger.warning("replay dropped %d out-of-order records", dropped)
    return ReplayResult(summaries, report, dropped, empty)
