"""Keyword intent routing, targeted retrieval, and grounded prompt assembly.

A query is matched against a configurable lexicon in fixed category priority
order, the matching aggregation runs over the labeled store, and the result is
rendered into a fixed per-category prompt template. Every number that reaches
the prompt comes from a store aggregation, which is what lets the response
validator re-check answers against the same context afterwards.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping, Optional, Sequence

from .clustering import BEHAVIOR_LABELS, BehaviorModel
from .gateway import reference_tokenize
from .model import LandmarkDirectory, WindowSummary
from .store import Circle, QueryFilter, StoreKey, SummaryStore, haversine


class UnknownIntentError(ValueError):
    """Query matched no category lexicon; carries the supported category list."""

    def __init__(self, query: str, supported: Sequence[str]):
        super().__init__(
            f"could not classify query {query!r}; supported categories: {', '.join(supported)}"
        )
        self.supported = tuple(supported)


class UnknownLandmarkError(ValueError):
    """A named place could not be resolved against the landmark directory."""


class ConfigurationError(ValueError):
    """The planner was invoked with unusable configuration (e.g. no landmarks)."""


class IntentCategory(Enum):
    AGGRESSIVE_DRIVING = "aggressive_driving"
    DWELL_TIME = "dwell_time"
    EVENT_COUNTING = "event_counting"
    ROUTE_EFFICIENCY = "route_efficiency"
    SPATIAL_PATTERNS = "spatial_patterns"
    MICRO_EVENT = "micro_event"


#: Classification priority; first matching category wins. Micro analyses are
#: selected from the UI/CLI against a concrete event, never keyword-matched.
MACRO_PRIORITY = (
    IntentCategory.AGGRESSIVE_DRIVING,
    IntentCategory.DWELL_TIME,
    IntentCategory.EVENT_COUNTING,
    IntentCategory.ROUTE_EFFICIENCY,
    IntentCategory.SPATIAL_PATTERNS,
)

DEFAULT_LEXICON: dict[IntentCategory, tuple[str, ...]] = {
    IntentCategory.AGGRESSIVE_DRIVING: ("aggressive", "dangerous", "harsh", "unsafe"),
    IntentCategory.DWELL_TIME: ("dwell", "idle", "wait", "stopped"),
    IntentCategory.EVENT_COUNTING: ("how many", "count", "instances"),
    IntentCategory.ROUTE_EFFICIENCY: ("efficien", "route", "compare", "morning", "evening"),
    IntentCategory.SPATIAL_PATTERNS: ("around", "near", "patterns at"),
}

MACRO_TEMPERATURE = 0.7
MACRO_MAX_TOKENS = 500
MICRO_TEMPERATURE = 0.5
MICRO_MAX_TOKENS = 150

MIN_CONTEXT_TOKENS = 50
MAX_CONTEXT_TOKENS = 400


@dataclass(frozen=True)
class PlannerConfig:
    lexicon: Mapping[IntentCategory, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_LEXICON)
    )
    dwell_threshold_m: float = 10.0
    spatial_radius_m: float = 250.0
    micro_radius_m: float = 100.0
    top_k: int = 3

    @classmethod
    def from_json(cls, obj: dict) -> "PlannerConfig":
        lexicon = dict(DEFAULT_LEXICON)
        for key, words in obj.get("lexicon", {}).items():
            lexicon[IntentCategory(key)] = tuple(str(w).lower() for w in words)
        return cls(
            lexicon=lexicon,
            dwell_threshold_m=float(obj.get("dwell_threshold_m", 10.0)),
            spatial_radius_m=float(obj.get("spatial_radius_m", 250.0)),
            micro_radius_m=float(obj.get("micro_radius_m", 100.0)),
            top_k=int(obj.get("top_k", 3)),
        )


DEFAULT_PLANNER_CONFIG = PlannerConfig()


@dataclass(frozen=True)
class Intent:
    category: IntentCategory
    label: Optional[str] = None
    landmark: Optional[str] = None
    event_key: Optional[StoreKey] = None

    def __post_init__(self) -> None:
        if self.category is IntentCategory.MICRO_EVENT and self.event_key is None:
            raise ValueError("micro-event intent requires an event key")


def _extract_label(query_lower: str) -> Optional[str]:
    # Longest label first so "very aggressive" is not swallowed by "aggressive".
    for label in sorted(BEHAVIOR_LABELS, key=len, reverse=True):
        if label.lower() in query_lower:
            return label
    return None


_LEADING_FILLER = re.compile(r"^(?:the|of|a|an)\s+", re.IGNORECASE)


def _extract_landmark_hint(query: str, keywords: Sequence[str]) -> Optional[str]:
    lower = query.lower()
    position = -1
    matched = ""
    for kw in keywords:
        at = lower.find(kw)
        if at >= 0 and (position < 0 or at < position):
            position, matched = at, kw
    if position < 0:
        return None
    rest = query[position + len(matched):].strip()
    rest = _LEADING_FILLER.sub("", rest).strip(" ?.!,;:")
    return rest or None


def classify(query: str, config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> Intent:
    """Map a natural-language query onto one macro category, or raise.

    Matching is lowercase substring search per category in priority order;
    a query that matches nothing is an :class:`UnknownIntentError`, never a guess.
    """
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    lower = query.lower()
    for category in MACRO_PRIORITY:
        keywords = config.lexicon.get(category, ())
        if any(kw in lower for kw in keywords):
            label = _extract_label(lower) if category is IntentCategory.EVENT_COUNTING else None
            landmark = (
                _extract_landmark_hint(query, keywords)
                if category is IntentCategory.SPATIAL_PATTERNS else None
            )
            return Intent(category, label=label, landmark=landmark)
    supported = tuple(c.value for c in MACRO_PRIORITY)
    raise UnknownIntentError(query, supported)


def nearest_landmark(lat: float, lon: float,
                     landmarks: LandmarkDirectory) -> tuple[str, float]:
    """Closest directory entry by great-circle distance; ties pick the first name
    in lexicographic order."""
    if len(landmarks) == 0:
        raise ConfigurationError("landmark directory is empty")
    best_name, best_d = None, None
    for lm in landmarks:
        d = haversine(lat, lon, lm.lat, lm.lon)
        if best_d is None or d < best_d or (d == best_d and lm.name < best_name):
            best_name, best_d = lm.name, d
    return best_name, best_d


# --- retrieval context -------------------------------------------------------

@dataclass(frozen=True)
class Hotspot:
    name: str
    count: int
    mean_instability: float


@dataclass(frozen=True)
class DwellZone:
    name: str
    minutes: float
    runs: int


@dataclass(frozen=True)
class HourBucket:
    hour: int
    windows: int
    mean_move_m: float
    dwell_pct: float


@dataclass(frozen=True)
class FocusArea:
    name: str
    radius_m: float
    total: int
    label_counts: tuple[tuple[str, int], ...]
    mean_instability: float


@dataclass(frozen=True)
class MicroContext:
    vehicle_id: str
    window_start: int
    label: str
    instability: float
    peak_magnitude: float
    landmark: Optional[str]
    distance_m: Optional[float]
    radius_m: float
    nearby_total: int
    nearby_counts: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class ContextSummary:
    """Everything retrieved for one query; the sole source of prompt numbers."""

    category: IntentCategory
    total_events: int
    window_start_ms: Optional[int]
    window_end_ms: Optional[int]
    hotspots: tuple[Hotspot, ...] = ()
    label_counts: tuple[tuple[str, int], ...] = ()
    requested_label: Optional[str] = None
    requested_count: Optional[int] = None
    dwell_zones: tuple[DwellZone, ...] = ()
    buckets: tuple[HourBucket, ...] = ()
    focus: Optional[FocusArea] = None
    micro: Optional[MicroContext] = None


def _scan_all(store: SummaryStore, model: BehaviorModel) -> list[tuple[WindowSummary, str]]:
    return [(s, label) for s, label in store.scan(model=model)]


def _observation_window(rows: Sequence[tuple[WindowSummary, str]]):
    if not rows:
        return None, None
    start = min(s.window_start for s, _ in rows)
    end = max(s.window_start + int(round(s.window_duration * 1000)) for s, _ in rows)
    return start, end


def _located(rows: Sequence[tuple[WindowSummary, str]]):
    """Rows safe for location analysis: trusted fix and a present anchor."""
    return [(s, label) for s, label in rows
            if s.anchor_lat is not None and s.gps_quality.rank >= 1]


def _ordered_label_counts(rows: Sequence[tuple[WindowSummary, str]],
                          model: BehaviorModel) -> tuple[tuple[str, int], ...]:
    counts = {label: 0 for label in model.labels}
    for _, label in rows:
        counts[label] = counts.get(label, 0) + 1
    return tuple((label, counts[label]) for label in counts)


def _dwell_runs(rows: Sequence[tuple[WindowSummary, str]],
                threshold_m: float) -> list[list[WindowSummary]]:
    """Maximal runs (length >= 2) of consecutive same-vehicle windows whose
    anchors move less than the threshold between windows."""
    runs: list[list[WindowSummary]] = []
    current: list[WindowSummary] = []
    previous: WindowSummary | None = None
    for summary, _ in rows:  # rows arrive sorted by (vehicle_id, window_start)
        chained = (
            previous is not None
            and summary.vehicle_id == previous.vehicle_id
            and summary.window_start == previous.window_start
            + int(round(previous.window_duration * 1000))
            and haversine(previous.anchor_lat, previous.anchor_lon,
                          summary.anchor_lat, summary.anchor_lon) < threshold_m
        )
        if chained:
            current.append(summary)
        else:
            if len(current) >= 2:
                runs.append(current)
            current = [summary]
        previous = summary
    if len(current) >= 2:
        runs.append(current)
    return runs


def retrieve(intent: Intent, store: SummaryStore, model: BehaviorModel,
             landmarks: LandmarkDirectory, top_k: Optional[int] = None,
             config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> ContextSummary:
    """Run the category's aggregation over the labeled store.

    Deterministic for a frozen store and model version: scans are sorted,
    ranking ties break on landmark name, and all displayed values are rounded
    here so prompts and validation always agree digit-for-digit.
    """
    k = config.top_k if top_k is None else top_k
    rows = _scan_all(store, model)
    start, end = _observation_window(rows)
    base = dict(category=intent.category, total_events=len(rows),
                window_start_ms=start, window_end_ms=end)

    if intent.category is IntentCategory.AGGRESSIVE_DRIVING:
        severe = [(s, label) for s, label in _located(rows)
                  if label in ("Aggressive", "Very Aggressive")]
        grouped: dict[str, list[float]] = {}
        for s, _ in severe:
            name, _d = nearest_landmark(s.anchor_lat, s.anchor_lon, landmarks)
            grouped.setdefault(name, []).append(s.mag_variance)
        ranked = sorted(grouped.items(), key=lambda item: (-len(item[1]), item[0]))
        hotspots = tuple(
            Hotspot(name, len(vals), round(sum(vals) / len(vals), 2))
            for name, vals in ranked[:k]
        )
        return ContextSummary(**base, hotspots=hotspots)

    if intent.category is IntentCategory.EVENT_COUNTING:
        counts = _ordered_label_counts(rows, model)
        requested = intent.label
        requested_count = dict(counts).get(requested) if requested else None
        return ContextSummary(**base, label_counts=counts,
                              requested_label=requested, requested_count=requested_count)

    if intent.category is IntentCategory.DWELL_TIME:
        runs = _dwell_runs(_located(rows), config.dwell_threshold_m)
        zones: dict[str, list[float]] = {}
        for run in runs:
            anchor = run[0]
            name, _d = nearest_landmark(anchor.anchor_lat, anchor.anchor_lon, landmarks)
            minutes = sum(s.window_duration for s in run) / 60.0
            zones.setdefault(name, []).append(minutes)
        ranked = sorted(zones.items(), key=lambda item: (-sum(item[1]), item[0]))
        dwell = tuple(
            DwellZone(name, round(sum(mins), 1), len(mins)) for name, mins in ranked[:k]
        )
        return ContextSummary(**base, dwell_zones=dwell)

    if intent.category is IntentCategory.ROUTE_EFFICIENCY:
        located = _located(rows)
        runs = _dwell_runs(located, config.dwell_threshold_m)
        dwell_keys = {(s.vehicle_id, s.window_start) for run in runs for s in run}
        per_hour_windows: dict[int, int] = {}
        per_hour_dwell: dict[int, int] = {}
        per_hour_moves: dict[int, list[float]] = {}
        for s, _ in rows:
            hour = datetime.fromtimestamp(s.window_start / 1000, tz=timezone.utc).hour
            per_hour_windows[hour] = per_hour_windows.get(hour, 0) + 1
            if (s.vehicle_id, s.window_start) in dwell_keys:
                per_hour_dwell[hour] = per_hour_dwell.get(hour, 0) + 1
        previous: WindowSummary | None = None
        for s, _ in located:
            if (previous is not None and s.vehicle_id == previous.vehicle_id
                    and s.window_start == previous.window_start
                    + int(round(previous.window_duration * 1000))):
                hour = datetime.fromtimestamp(s.window_start / 1000, tz=timezone.utc).hour
                move = haversine(previous.anchor_lat, previous.anchor_lon,
                                 s.anchor_lat, s.anchor_lon)
                per_hour_moves.setdefault(hour, []).append(move)
            previous = s
        buckets = tuple(
            HourBucket(
                hour=hour,
                windows=per_hour_windows[hour],
                mean_move_m=round(
                    sum(per_hour_moves.get(hour, [])) / len(per_hour_moves[hour]), 1
                ) if per_hour_moves.get(hour) else 0.0,
                dwell_pct=round(100.0 * per_hour_dwell.get(hour, 0) / per_hour_windows[hour], 1),
            )
            for hour in sorted(per_hour_windows)
        )
        return ContextSummary(**base, buckets=buckets)

    if intent.category is IntentCategory.SPATIAL_PATTERNS:
        lm = _resolve_landmark(intent.landmark, landmarks)
        nearby = store.scan(
            QueryFilter(circle=Circle(lm.lat, lm.lon, config.spatial_radius_m)), model=model
        )
        counts = _ordered_label_counts(nearby, model)
        mean_inst = (
            round(sum(s.mag_variance for s, _ in nearby) / len(nearby), 2) if nearby else 0.0
        )
        focus = FocusArea(lm.name, config.spatial_radius_m, len(nearby), counts, mean_inst)
        return ContextSummary(**base, focus=focus)

    if intent.category is IntentCategory.MICRO_EVENT:
        key = intent.event_key
        summary = store.get(key)
        if summary is None:
            raise KeyError(f"no stored event for {key}")
        from .clustering import assign, extract_features
        feature = extract_features(summary)
        label = assign(model, feature)
        if summary.anchor_lat is not None:
            name, distance = nearest_landmark(summary.anchor_lat, summary.anchor_lon, landmarks)
            nearby = store.scan(
                QueryFilter(circle=Circle(summary.anchor_lat, summary.anchor_lon,
                                          config.micro_radius_m)),
                model=model,
            )
            counts = _ordered_label_counts(nearby, model)
            micro = MicroContext(
                vehicle_id=summary.vehicle_id, window_start=summary.window_start,
                label=label, instability=round(feature.instability, 2),
                peak_magnitude=round(feature.extreme_event_magnitude, 2),
                landmark=name, distance_m=round(distance, 1),
                radius_m=config.micro_radius_m,
                nearby_total=len(nearby), nearby_counts=counts,
            )
        else:
            micro = MicroContext(
                vehicle_id=summary.vehicle_id, window_start=summary.window_start,
                label=label, instability=round(feature.instability, 2),
                peak_magnitude=round(feature.extreme_event_magnitude, 2),
                landmark=None, distance_m=None, radius_m=config.micro_radius_m,
                nearby_total=0, nearby_counts=(),
            )
        return ContextSummary(**base, micro=micro)

    raise ValueError(f"unsupported intent category: {intent.category}")


def _resolve_landmark(hint: Optional[str], landmarks: LandmarkDirectory):
    if len(landmarks) == 0:
        raise ConfigurationError("landmark directory is empty")
    if not hint:
        raise UnknownLandmarkError(
            "query names no landmark; name one of: " + ", ".join(landmarks.names)
        )
    exact = landmarks.get(hint)
    if exact is not None:
        return exact
    folded = hint.casefold()
    contained = [lm for lm in landmarks if lm.name.casefold() in folded]
    if contained:
        # Earliest mention wins; longer name wins when one contains another.
        contained.sort(key=lambda lm: (folded.find(lm.name.casefold()), -len(lm.name)))
        return contained[0]
    raise UnknownLandmarkError(
        f"unknown landmark {hint!r}; known: " + ", ".join(landmarks.names)
    )


# --- prompt assembly ---------------------------------------------------------

@dataclass(frozen=True)
class QueryPlan:
    """A fully assembled request: context, rendered prompt, generation settings."""

    intent: Intent
    context: ContextSummary
    prompt_text: str
    context_block: str
    temperature: float
    max_tokens: int


CATEGORY_TITLES = {
    IntentCategory.AGGRESSIVE_DRIVING: "Aggressive Driving Summary",
    IntentCategory.DWELL_TIME: "Dwell Time Summary",
    IntentCategory.EVENT_COUNTING: "Event Counting Summary",
    IntentCategory.ROUTE_EFFICIENCY: "Route Efficiency Summary",
    IntentCategory.SPATIAL_PATTERNS: "Spatial Patterns Summary",
    IntentCategory.MICRO_EVENT: "Event Analysis",
}

_COVERAGE_LINE = ("Coverage: figures are exact aggregate counts computed from "
                  "stored driving windows.")
_SCOPE_LINE = ("Scope: each window summarizes a few seconds of accelerometer "
               "statistics with a GPS anchor.")
_NO_DATA_LINE = "Note: no matching events were found for this analysis."

_INSTRUCTIONS = {
    IntentCategory.AGGRESSIVE_DRIVING: (
        "You are a fleet safety analyst. Using only the data between BEGIN DATA and "
        "END DATA, describe where aggressive driving concentrates and how the listed "
        "locations compare. Cite locations and figures exactly as given."
    ),
    IntentCategory.DWELL_TIME: (
        "You are a fleet operations analyst. Using only the data between BEGIN DATA "
        "and END DATA, explain where vehicles spend the most stationary time and "
        "offer plausible operational reasons. Cite locations and figures exactly as given."
    ),
    IntentCategory.EVENT_COUNTING: (
        "You are a fleet analytics assistant. Using only the data between BEGIN DATA "
        "and END DATA, report the requested event counts plainly. Cite figures "
        "exactly as given."
    ),
    IntentCategory.ROUTE_EFFICIENCY: (
        "You are a transit efficiency analyst. Using only the data between BEGIN DATA "
        "and END DATA, compare movement and idle share across the listed hours. Cite "
        "figures exactly as given."
    ),
    IntentCategory.SPATIAL_PATTERNS: (
        "You are a transit analytics assistant. Using only the data between BEGIN DATA "
        "and END DATA, characterize driving behavior in the named area. Cite locations "
        "and figures exactly as given."
    ),
    IntentCategory.MICRO_EVENT: (
        "You are explaining a single driving event to a fleet operator. Using only the "
        "data between BEGIN DATA and END DATA, give a concise, plausible explanation "
        "that references the behavior label, the nearest landmark, and the neighborhood "
        "mix. Keep a neutral tone consistent with the behavior label."
    ),
}

_GROUNDING_LINE = ("Do not introduce numbers or place names that are not listed in "
                   "the data block.")


def _format_window_range(start_ms: Optional[int], end_ms: Optional[int]) -> str:
    if start_ms is None or end_ms is None:
        return "no data recorded"
    start = datetime.fromtimestamp(start_ms / 1000, tz=timezone.utc)
    end = datetime.fromtimestamp(end_ms / 1000, tz=timezone.utc)
    if start.date() == end.date():
        return f"{start:%Y-%m-%d %H:%M}--{end:%H:%M} UTC"
    return f"{start:%Y-%m-%d %H:%M} -- {end:%Y-%m-%d %H:%M} UTC"


def _category_lines(context: ContextSummary) -> list[str]:
    cat = context.category
    lines: list[str] = []
    if cat is IntentCategory.AGGRESSIVE_DRIVING:
        lines.append("Hotspots:")
        if context.hotspots:
            for h in context.hotspots:
                lines.append(f"- {h.name}: {h.count} events, instability {h.mean_instability}")
        else:
            lines.append("- none observed")
    elif cat is IntentCategory.EVENT_COUNTING:
        lines.append("Events by behavior label:")
        for label, count in context.label_counts:
            lines.append(f"- {label}: {count} events")
        if context.requested_label is not None:
            lines.append(
                f"Requested label: {context.requested_label} with "
                f"{context.requested_count} events"
            )
    elif cat is IntentCategory.DWELL_TIME:
        lines.append("Dwell zones (stationary runs summed per nearest landmark):")
        if context.dwell_zones:
            for z in context.dwell_zones:
                lines.append(f"- {z.name}: {z.minutes} minutes across {z.runs} stops")
        else:
            lines.append("- none observed")
    elif cat is IntentCategory.ROUTE_EFFICIENCY:
        lines.append("Hourly profile (UTC):")
        if context.buckets:
            for b in context.buckets:
                lines.append(
                    f"- hour {b.hour}: {b.windows} windows, mean movement "
                    f"{b.mean_move_m} meters per window, {b.dwell_pct} percent dwelling"
                )
        else:
            lines.append("- none observed")
    elif cat is IntentCategory.SPATIAL_PATTERNS:
        f = context.focus
        if f is not None:
            lines.append(f"Area: {f.name} within {f.radius_m} meters")
            lines.append(f"Events within radius: {f.total}")
            lines.append(f"Mean instability in area: {f.mean_instability}")
            lines.append("Behavior mix in area:")
            for label, count in f.label_counts:
                lines.append(f"- {label}: {count} events")
        else:
            lines.append("- none observed")
    elif cat is IntentCategory.MICRO_EVENT:
        m = context.micro
        if m is not None:
            when = datetime.fromtimestamp(m.window_start / 1000, tz=timezone.utc)
            lines.append(f"Vehicle: {m.vehicle_id}")
            lines.append(f"Window start: {when:%Y-%m-%d %H:%M:%S} UTC")
            lines.append(f"Behavior label: {m.label}")
            lines.append(f"Instability: {m.instability}")
            lines.append(f"Peak acceleration magnitude: {m.peak_magnitude}")
            if m.landmark is not None:
                lines.append(f"Nearest landmark: {m.landmark} at {m.distance_m} meters")
                lines.append(f"Events within {m.radius_m} meters: {m.nearby_total}")
                lines.append("Neighborhood behavior mix:")
                for label, count in m.nearby_counts:
                    lines.append(f"- {label}: {count} events")
            else:
                lines.append("Location: no trusted GPS anchor for this event")
    return lines


def render_context_block(context: ContextSummary) -> str:
    """Render the data block; always 50-400 reference tokens."""
    lines = [
        CATEGORY_TITLES[context.category],
        f"Total events: {context.total_events:,}",
        f"Observation window: {_format_window_range(context.window_start_ms, context.window_end_ms)}",
    ]
    lines.extend(_category_lines(context))
    if context.total_events == 0:
        lines.append(_NO_DATA_LINE)
    lines.append(_COVERAGE_LINE)

    # Trim list items from the tail until the block fits the token budget.
    while reference_tokenize("\n".join(lines)) > MAX_CONTEXT_TOKENS:
        bullet_indexes = [i for i, line in enumerate(lines[:-1]) if line.startswith("- ")]
        if not bullet_indexes:
            break
        lines.pop(bullet_indexes[-1])
        if not any(line.startswith("- ") for line in lines):
            break
    if reference_tokenize("\n".join(lines)) < MIN_CONTEXT_TOKENS:
        lines.append(_SCOPE_LINE)
    return "\n".join(lines)


def build_prompt(intent: Intent, context: ContextSummary,
                 config: PlannerConfig = DEFAULT_PLANNER_CONFIG) -> QueryPlan:
    """Assemble the final prompt and generation settings for one intent."""
    block = render_context_block(context)
    instructions = _INSTRUCTIONS[intent.category]
    extra = " No supporting data was found; say so plainly instead of guessing." \
        if context.total_events == 0 else ""
    prompt = (
        f"{instructions}{extra} {_GROUNDING_LINE}\n\n"
        f"BEGIN DATA\n{block}\nEND DATA"
    )
    if intent.category is IntentCategory.MICRO_EVENT:
        temperature, max_tokens = MICRO_TEMPERATURE, MICRO_MAX_TOKENS
    else:
        temperature, max_tokens = MACRO_TEMPERATURE, MACRO_MAX_TOKENS
    return QueryPlan(
        intent=intent,
        context=context,
        prompt_text=prompt,
        context_block=block,
        temperature=temperature,
        max_tokens=max_tokens,
    )
