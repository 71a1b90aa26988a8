"""Shared telemetry domain types, the summary packet codec, and the payload-size model.

Every type in this module is an immutable value object: safe to share between
threads, hashable where it matters, and serializable through the helpers below.
The wire format for summary packets is a single compact JSON object with short
keys (``vid, ws, wd, mm, mv, px, py, pz, lat, lon, gq, n``); statistics are
stored at 4 decimal places and coordinates at 6, so encoded packets are
byte-for-byte deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Union


class InvalidSampleError(ValueError):
    """A sensor reading contained a non-finite or out-of-range value."""


class CodecError(ValueError):
    """A packet or telemetry line could not be decoded; names the offending key."""


class GpsQuality(str, Enum):
    """Receiver fix quality, ordered from useless to fully trusted."""

    NONE = "none"
    FIX_2D = "fix2d"
    FIX_3D = "fix3d"

    @property
    def rank(self) -> int:
        return _GPS_RANK[self]


_GPS_RANK = {GpsQuality.NONE: 0, GpsQuality.FIX_2D: 1, GpsQuality.FIX_3D: 2}

#: Percent levels reported per axis in every window summary.
PERCENTILE_LEVELS = (1, 10, 90, 99)

#: Fixed wire precision (decimal places) for statistics and coordinates.
STAT_DECIMALS = 4
COORD_DECIMALS = 6


def _check_finite(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise InvalidSampleError(f"{name} must be a finite number, got {value!r}")


@dataclass(frozen=True)
class RawSample:
    """One accelerometer reading: UTC milliseconds plus per-axis m/s^2."""

    timestamp: int
    ax: float
    ay: float
    az: float

    def __post_init__(self) -> None:
        for name in ("ax", "ay", "az"):
            _check_finite(name, getattr(self, name))


@dataclass(frozen=True)
class GpsFix:
    """One GPS reading: UTC milliseconds, WGS-84 degrees, and fix quality."""

    timestamp: int
    lat: float
    lon: float
    fix_quality: GpsQuality

    def __post_init__(self) -> None:
        _check_finite("lat", self.lat)
        _check_finite("lon", self.lon)
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidSampleError(f"lat out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidSampleError(f"lon out of range: {self.lon}")


@dataclass(frozen=True)
class SamplingProfile:
    """Edge sampling configuration used to project raw transmission size.

    ``sample_rate_hz * window_seconds`` must be a whole number of samples.
    """

    sample_rate_hz: float
    window_seconds: float
    axis_count: int
    bytes_per_reading: int
    gps_bytes_per_window: int

    def __post_init__(self) -> None:
        for name in ("sample_rate_hz", "window_seconds", "axis_count", "bytes_per_reading"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.gps_bytes_per_window < 0:  # zero is a valid GPS-less deployment
            raise ValueError(f"gps_bytes_per_window must be >= 0, got {self.gps_bytes_per_window!r}")
        per_window = self.sample_rate_hz * self.window_seconds
        if abs(per_window - round(per_window)) > 1e-9:
            raise ValueError(
                f"sample_rate_hz * window_seconds must be an integer, got {per_window}"
            )

    @property
    def samples_per_window(self) -> int:
        return int(round(self.sample_rate_hz * self.window_seconds))

    @property
    def window_ms(self) -> int:
        return int(round(self.window_seconds * 1000))

    def to_json(self) -> dict:
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "window_seconds": self.window_seconds,
            "axis_count": self.axis_count,
            "bytes_per_reading": self.bytes_per_reading,
            "gps_bytes_per_window": self.gps_bytes_per_window,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SamplingProfile":
        try:
            return cls(
                sample_rate_hz=float(obj["sample_rate_hz"]),
                window_seconds=float(obj["window_seconds"]),
                axis_count=int(obj["axis_count"]),
                bytes_per_reading=int(obj["bytes_per_reading"]),
                gps_bytes_per_window=int(obj["gps_bytes_per_window"]),
            )
        except KeyError as exc:
            raise CodecError(f"profile missing key {exc.args[0]!r}") from exc


#: Bus-fleet deployment defaults: 20 Hz accelerometer, 3 s windows, 3 axes,
#: 8 bytes per scalar reading, 144 GPS bytes per window (3 fixes x 48 bytes).
DEFAULT_PROFILE = SamplingProfile(
    sample_rate_hz=20.0,
    window_seconds=3.0,
    axis_count=3,
    bytes_per_reading=8,
    gps_bytes_per_window=144,
)


def magnitude(ax: float, ay: float, az: float) -> float:
    """Euclidean norm of one acceleration sample, sqrt(ax^2 + ay^2 + az^2)."""
    for name, value in (("ax", ax), ("ay", ay), ("az", az)):
        _check_finite(name, value)
    return math.hypot(ax, ay, az)


def raw_payload_bytes(profile: SamplingProfile) -> int:
    """Projected bytes per window if raw readings were transmitted unaggregated."""
    return (profile.samples_per_window * profile.axis_count
            * profile.bytes_per_reading) + profile.gps_bytes_per_window


_Percentiles = tuple  # 4-tuple (p1, p10, p90, p99)


@dataclass(frozen=True)
class WindowSummary:
    """Compact per-window statistics packet, the unit transmitted edge-to-cloud.

    Per-axis percentile tuples are ordered ``(p1, p10, p90, p99)``. The GPS
    anchor may be absent (``None``) only when ``gps_quality`` is ``NONE``.
    """

    vehicle_id: str
    window_start: int
    window_duration: float
    mag_mean: float
    mag_variance: float
    x_percentiles: _Percentiles
    y_percentiles: _Percentiles
    z_percentiles: _Percentiles
    anchor_lat: float | None
    anchor_lon: float | None
    gps_quality: GpsQuality
    sample_count: int

    def __post_init__(self) -> None:
        if not self.vehicle_id:
            raise ValueError("vehicle_id must be non-empty")
        if self.window_duration <= 0:
            raise ValueError("window_duration must be > 0")
        _check_finite("mag_mean", self.mag_mean)
        _check_finite("mag_variance", self.mag_variance)
        if self.mag_variance < 0:
            raise ValueError(f"mag_variance must be >= 0, got {self.mag_variance}")
        for axis in ("x", "y", "z"):
            tup = getattr(self, f"{axis}_percentiles")
            if len(tup) != len(PERCENTILE_LEVELS):
                raise ValueError(f"{axis}_percentiles must have {len(PERCENTILE_LEVELS)} values")
            for v in tup:
                _check_finite(f"{axis}_percentiles", v)
            if not (tup[0] <= tup[1] <= tup[2] <= tup[3]):
                raise ValueError(f"{axis}_percentiles out of order: {tup}")
        if (self.anchor_lat is None) != (self.anchor_lon is None):
            raise ValueError("anchor_lat and anchor_lon must both be set or both be None")
        if self.anchor_lat is not None:
            _check_finite("anchor_lat", self.anchor_lat)
            _check_finite("anchor_lon", self.anchor_lon)
            if not -90.0 <= self.anchor_lat <= 90.0:
                raise ValueError(f"anchor_lat out of range: {self.anchor_lat}")
            if not -180.0 <= self.anchor_lon <= 180.0:
                raise ValueError(f"anchor_lon out of range: {self.anchor_lon}")
        elif self.gps_quality is not GpsQuality.NONE:
            raise ValueError("anchor required when gps_quality is not 'none'")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def quantized(self) -> "WindowSummary":
        """Copy rounded to wire precision; identity for already-quantized values."""
        q = lambda v: round(v, STAT_DECIMALS)  # noqa: E731
        qc = lambda v: None if v is None else round(v, COORD_DECIMALS)  # noqa: E731
        return replace(
            self,
            mag_mean=q(self.mag_mean),
            mag_variance=q(self.mag_variance),
            x_percentiles=tuple(q(v) for v in self.x_percentiles),
            y_percentiles=tuple(q(v) for v in self.y_percentiles),
            z_percentiles=tuple(q(v) for v in self.z_percentiles),
            anchor_lat=qc(self.anchor_lat),
            anchor_lon=qc(self.anchor_lon),
        )


@dataclass(frozen=True)
class Landmark:
    name: str
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("landmark name must be non-empty")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"landmark lat out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"landmark lon out of range: {self.lon}")


@dataclass(frozen=True)
class LandmarkDirectory:
    """Named places used to anchor analyses; names are unique case-insensitively."""

    entries: tuple[Landmark, ...]

    def __post_init__(self) -> None:
        seen = set()
        for lm in self.entries:
            key = lm.name.casefold()
            if key in seen:
                raise ValueError(f"duplicate landmark name: {lm.name!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lm.name for lm in self.entries)

    def get(self, name: str) -> Landmark | None:
        key = name.casefold()
        for lm in self.entries:
            if lm.name.casefold() == key:
                return lm
        return None

    def to_json(self) -> list[dict]:
        return [{"name": lm.name, "lat": lm.lat, "lon": lm.lon} for lm in self.entries]

    @classmethod
    def from_json(cls, items: list[dict]) -> "LandmarkDirectory":
        return cls(tuple(Landmark(str(i["name"]), float(i["lat"]), float(i["lon"])) for i in items))

    @classmethod
    def load(cls, path) -> "LandmarkDirectory":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# --- summary packet codec ---------------------------------------------------

_REQUIRED_KEYS = ("vid", "ws", "wd", "mm", "mv", "px", "py", "pz", "lat", "lon", "gq", "n")


def encode_summary(summary: WindowSummary) -> bytes:
    """Encode a summary as a compact short-key JSON packet.

    Values are quantized to the wire precision, so encoding an
    already-quantized summary round-trips exactly through ``decode_summary``.
    """
    s = summary.quantized()
    packet = {
        "vid": s.vehicle_id,
        "ws": s.window_start,
        "wd": s.window_duration,
        "mm": s.mag_mean,
        "mv": s.mag_variance,
        "px": list(s.x_percentiles),
        "py": list(s.y_percentiles),
        "pz": list(s.z_percentiles),
        "lat": s.anchor_lat,
        "lon": s.anchor_lon,
        "gq": s.gps_quality.value,
        "n": s.sample_count,
    }
    return json.dumps(packet, separators=(",", ":")).encode("utf-8")


def _field(obj: dict, key: str, kinds, allow_none: bool = False) -> Any:
    if key not in obj:
        raise CodecError(f"missing key '{key}'")
    value = obj[key]
    if value is None:
        if allow_none:
            return None
        raise CodecError(f"null value for key '{key}'")
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise CodecError(f"bad value for key '{key}': {value!r}")
    return value


def _percentile_field(obj: dict, key: str) -> tuple:
    raw = _field(obj, key, list)
    if len(raw) != len(PERCENTILE_LEVELS):
        raise CodecError(f"bad value for key '{key}': expected {len(PERCENTILE_LEVELS)} values")
    out = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise CodecError(f"bad value for key '{key}': {v!r}")
        out.append(float(v))
    return tuple(out)


def decode_summary(raw: Union[bytes, str]) -> WindowSummary:
    """Decode a short-key packet; raises :class:`CodecError` naming any bad key."""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CodecError(f"packet is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise CodecError("packet must be a JSON object")
    gq_raw = _field(obj, "gq", str)
    try:
        quality = GpsQuality(gq_raw)
    except ValueError as exc:
        raise CodecError(f"bad value for key 'gq': {gq_raw!r}") from exc
    try:
        return WindowSummary(
            vehicle_id=_field(obj, "vid", str),
            window_start=_field(obj, "ws", int),
            window_duration=float(_field(obj, "wd", (int, float))),
            mag_mean=float(_field(obj, "mm", (int, float))),
            mag_variance=float(_field(obj, "mv", (int, float))),
            x_percentiles=_percentile_field(obj, "px"),
            y_percentiles=_percentile_field(obj, "py"),
            z_percentiles=_percentile_field(obj, "pz"),
            anchor_lat=_field(obj, "lat", (int, float), allow_none=True),
            anchor_lon=_field(obj, "lon", (int, float), allow_none=True),
            gps_quality=quality,
            sample_count=_field(obj, "n", int),
        )
    except ValueError as exc:
        if isinstance(exc, CodecError):
            raise
        raise CodecError(f"invalid summary packet: {exc}") from exc


# --- raw telemetry line codec -----------------------------------------------
# Telemetry streams are JSON lines, one reading per line, discriminated by a
# "type" field ("accel" or "gps"); every line carries its vehicle_id.

def format_telemetry_line(vehicle_id: str, record: Union[RawSample, GpsFix]) -> str:
    if isinstance(record, RawSample):
        obj = {"type": "accel", "vehicle_id": vehicle_id, "timestamp": record.timestamp,
               "ax": record.ax, "ay": record.ay, "az": record.az}
    elif isinstance(record, GpsFix):
        obj = {"type": "gps", "vehicle_id": vehicle_id, "timestamp": record.timestamp,
               "lat": record.lat, "lon": record.lon, "fix_quality": record.fix_quality.value}
    else:
        raise TypeError(f"unsupported record type: {type(record).__name__}")
    return json.dumps(obj, separators=(",", ":"))


def parse_telemetry_line(line: str) -> tuple[str, Union[RawSample, GpsFix]]:
    """Parse one telemetry line into ``(vehicle_id, record)``."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CodecError(f"telemetry line is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise CodecError("telemetry line must be a JSON object")
    kind = _field(obj, "type", str)
    vehicle_id = _field(obj, "vehicle_id", str)
    timestamp = _field(obj, "timestamp", int)
    try:
        if kind == "accel":
            record: Union[RawSample, GpsFix] = RawSample(
                timestamp=timestamp,
                ax=float(_field(obj, "ax", (int, float))),
                ay=float(_field(obj, "ay", (int, float))),
                az=float(_field(obj, "az", (int, float))),
            )
        elif kind == "gps":
            fq_raw = _field(obj, "fix_quality", str)
            try:
                fq = GpsQuality(fq_raw)
            except ValueError as exc:
                raise CodecError(f"bad value for key 'fix_quality': {fq_raw!r}") from exc
            record = GpsFix(
                timestamp=timestamp,
                lat=float(_field(obj, "lat", (int, float))),
                lon=float(_field(obj, "lon", (int, float))),
                fix_quality=fq,
            )
        else:
            raise CodecError(f"bad value for key 'type': {kind!r}")
    except InvalidSampleError as exc:
        raise CodecError(f"invalid telemetry values: {exc}") from exc
    return vehicle_id, record
