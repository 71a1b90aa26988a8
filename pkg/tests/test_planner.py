import numpy as np
import pytest

from fleetlens.gateway import reference_tokenize
from fleetlens.model import Landmark, LandmarkDirectory
from fleetlens.planner import (
    ContextSummary,
    Hotspot,
    Intent,
    IntentCategory,
    PlannerConfig,
    UnknownIntentError,
    UnknownLandmarkError,
    build_prompt,
    classify,
    nearest_landmark,
    render_context_block,
    retrieve,
)
from fleetlens.store import StoreKey, SummaryStore, haversine
from fleetlens.validator import extract_numbers

from conftest import DEFAULT_START_MS, make_summary, toy_five_model


class TestClassify:
    @pytest.mark.parametrize("query,category", [
        ("Where is driving most dangerous?", IntentCategory.AGGRESSIVE_DRIVING),
        ("Tell me about aggressive driving behaviors around campus.",
         IntentCategory.AGGRESSIVE_DRIVING),
        ("Which zones show the longest dwell times?", IntentCategory.DWELL_TIME),
        ("Show me the idle spots", IntentCategory.DWELL_TIME),
        ("How many instances of moderate driving?", IntentCategory.EVENT_COUNTING),
        ("Compare route efficiency between morning and evening.",
         IntentCategory.ROUTE_EFFICIENCY),
        ("What are driving patterns like around Union Square?",
         IntentCategory.SPATIAL_PATTERNS),
    ])
    def test_reference_queries(self, query, category):
        assert classify(query).category is category

    def test_unknown_intent_lists_supported(self):
        with pytest.raises(UnknownIntentError) as err:
            classify("hello there")
        assert "aggressive_driving" in err.value.supported
        assert len(err.value.supported) == 5

    def test_empty_query_rejected(self):
        with pytest.raises(ValueError):
            classify("   ")

    def test_priority_order_wins(self):
        # "aggressive" (priority 1) beats "around" (priority 5)
        intent = classify("aggressive driving around Union Square")
        assert intent.category is IntentCategory.AGGRESSIVE_DRIVING

    def test_counting_extracts_label(self):
        assert classify("How many instances of moderate driving?").label == "Moderate"
        assert classify("how many slightly unstable windows?").label == "Slightly Unstable"
        assert classify("how many windows were recorded?").label is None
        # "aggressive" outranks the counting keywords by category priority
        assert classify("count of very aggressive events").category is \
            IntentCategory.AGGRESSIVE_DRIVING

    def test_spatial_extracts_landmark_hint(self):
        intent = classify("What are driving patterns like around Union Square?")
        assert intent.landmark == "Union Square"

    def test_deterministic_and_total(self):
        first = classify("Where is driving most dangerous?")
        second = classify("Where is driving most dangerous?")
        assert first == second

    def test_added_synonym_cannot_shadow_higher_priority(self):
        config = PlannerConfig(lexicon={
            **PlannerConfig().lexicon,
            IntentCategory.SPATIAL_PATTERNS: ("around", "near", "dangerous zones"),
        })
        # still aggressive: its keyword has higher priority than the new synonym
        assert classify("dangerous zones?", config).category is \
            IntentCategory.AGGRESSIVE_DRIVING

    def test_micro_requires_event_key(self):
        with pytest.raises(ValueError):
            Intent(IntentCategory.MICRO_EVENT)


@pytest.fixture()
def tiny_landmarks():
    return LandmarkDirectory((
        Landmark("Depot", 33.7800, -84.4000),
        Landmark("Yard", 33.7700, -84.3900),
        Landmark("Union Square", 33.7756, -84.3963),
    ))


class TestNearestLandmark:
    def test_exact_hit(self, tiny_landmarks):
        name, distance = nearest_landmark(33.7800, -84.4000, tiny_landmarks)
        assert (name, distance) == ("Depot", 0.0)

    def test_tie_breaks_lexicographically(self):
        directory = LandmarkDirectory((
            Landmark("Beta", 0.0, 1.0), Landmark("Alpha", 0.0, -1.0)))
        name, _ = nearest_landmark(0.0, 0.0, directory)
        assert name == "Alpha"

    def test_empty_directory_rejected(self):
        from fleetlens.planner import ConfigurationError
        with pytest.raises(ConfigurationError):
            nearest_landmark(0, 0, LandmarkDirectory(()))

    def test_matches_linear_scan(self, tiny_landmarks):
        rng = np.random.default_rng(17)
        for _ in range(50):
            lat = 33.77 + float(rng.normal(0, 0.01))
            lon = -84.39 + float(rng.normal(0, 0.01))
            got_name, got_d = nearest_landmark(lat, lon, tiny_landmarks)
            best = min(tiny_landmarks,
                       key=lambda lm: (haversine(lat, lon, lm.lat, lm.lon), lm.name))
            assert got_name == best.name
            assert got_d == haversine(lat, lon, best.lat, best.lon)


def _offset_m(lat, lon, north, east):
    import math
    return (lat + north / 111_320.0,
            lon + east / (111_320.0 * math.cos(math.radians(lat))))


@pytest.fixture()
def planted_store(tmp_path, tiny_landmarks):
    """Store with hand-labeled features: 20 Aggressive at Depot, 5 at Yard,
    a 6-window dwell run at Union Square, Calm elsewhere."""
    model = toy_five_model()
    store = SummaryStore(tmp_path / "planted")
    ws = DEFAULT_START_MS
    rows = []
    depot, yard, union = tiny_landmarks.entries

    def add(vehicle, idx, extreme, inst, lat, lon):
        rows.append(make_summary(
            vehicle_id=vehicle, window_start=ws + idx * 3000,
            mag_variance=inst, extreme=extreme, lat=round(lat, 6), lon=round(lon, 6)))

    i = 0
    for _ in range(20):  # aggressive cluster at Depot
        lat, lon = _offset_m(depot.lat, depot.lon, (i % 5) * 8.0, (i % 3) * 8.0)
        add("bus-01", i, 13.56, 0.48, lat, lon)
        i += 2  # non-consecutive: movement between aggressive windows
    for _ in range(5):  # aggressive at Yard
        lat, lon = _offset_m(yard.lat, yard.lon, (i % 4) * 9.0, 4.0)
        add("bus-01", i, 13.56, 0.52, lat, lon)
        i += 2
    for j in range(6):  # dwell run at Union Square: consecutive, ~static
        add("bus-02", j, 10.32, 0.09, union.lat + 1e-6 * j, union.lon)
    for j in range(6, 12):  # moving calm windows, 40 m apart
        lat, lon = _offset_m(union.lat, union.lon, 40.0 * (j - 5), 0.0)
        add("bus-02", j, 10.32, 0.09, lat, lon)
    for s in rows:
        store.put(s)
    return store, model


class TestRetrieve:
    def test_aggressive_hotspots_match_brute_force(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(Intent(IntentCategory.AGGRESSIVE_DRIVING),
                           store, model, tiny_landmarks)
        # independent group-by over the raw rows
        expected: dict[str, list[float]] = {}
        for summary, label in store.scan(model=model):
            if label not in ("Aggressive", "Very Aggressive") or summary.anchor_lat is None:
                continue
            best = min(tiny_landmarks, key=lambda lm: (
                haversine(summary.anchor_lat, summary.anchor_lon, lm.lat, lm.lon), lm.name))
            expected.setdefault(best.name, []).append(summary.mag_variance)
        ranked = sorted(expected.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        assert [(h.name, h.count) for h in context.hotspots] == [
            (name, len(vals)) for name, vals in ranked[:3]]
        assert context.hotspots[0] == Hotspot("Depot", 20, 0.48)
        assert context.hotspots[1].name == "Yard"

    def test_counting_returns_requested_label(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(Intent(IntentCategory.EVENT_COUNTING, label="Aggressive"),
                           store, model, tiny_landmarks)
        assert context.requested_count == 25
        assert dict(context.label_counts)["Calm"] == 12
        assert context.total_events == 37

    def test_counting_without_label_reports_all(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(Intent(IntentCategory.EVENT_COUNTING),
                           store, model, tiny_landmarks)
        assert context.requested_label is None
        assert sum(dict(context.label_counts).values()) == context.total_events

    def test_dwell_run_detected_at_union_square(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(Intent(IntentCategory.DWELL_TIME), store, model, tiny_landmarks)
        zones = {z.name: z for z in context.dwell_zones}
        assert "Union Square" in zones
        # 6 consecutive static windows x 3 s = 0.3 minutes
        assert zones["Union Square"].minutes == pytest.approx(0.3)
        assert zones["Union Square"].runs == 1

    def test_moving_windows_do_not_dwell(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(Intent(IntentCategory.DWELL_TIME), store, model, tiny_landmarks)
        total_dwell_windows = sum(z.minutes for z in context.dwell_zones) * 60 / 3
        assert total_dwell_windows == 6  # only the planted run

    def test_route_efficiency_buckets(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(Intent(IntentCategory.ROUTE_EFFICIENCY),
                           store, model, tiny_landmarks)
        assert context.buckets
        hour = context.buckets[0]
        assert hour.hour == 14
        assert hour.windows == context.total_events
        assert 0.0 <= hour.dwell_pct <= 100.0

    def test_spatial_patterns_counts_within_radius(self, planted_store, tiny_landmarks):
        store, model = planted_store
        context = retrieve(
            Intent(IntentCategory.SPATIAL_PATTERNS, landmark="Union Square"),
            store, model, tiny_landmarks)
        focus = context.focus
        assert focus.name == "Union Square"
        from fleetlens.store import Circle, QueryFilter
        union = tiny_landmarks.get("Union Square")
        expected = store.scan(QueryFilter(
            circle=Circle(union.lat, union.lon, 250.0)), model=model)
        assert focus.total == len(expected)

    def test_spatial_unknown_landmark(self, planted_store, tiny_landmarks):
        store, model = planted_store
        with pytest.raises(UnknownLandmarkError):
            retrieve(Intent(IntentCategory.SPATIAL_PATTERNS, landmark="Atlantis Pier"),
                     store, model, tiny_landmarks)

    def test_spatial_landmark_resolved_from_hint_tail(self, planted_store, tiny_landmarks):
        store, model = planted_store
        intent = classify("What happens near the Union Square during rush hour?")
        context = retrieve(intent, store, model, tiny_landmarks)
        assert context.focus.name == "Union Square"

    def test_micro_event_context(self, planted_store, tiny_landmarks):
        store, model = planted_store
        key = StoreKey("bus-01", DEFAULT_START_MS)  # first aggressive window at Depot
        context = retrieve(Intent(IntentCategory.MICRO_EVENT, event_key=key),
                           store, model, tiny_landmarks)
        micro = context.micro
        assert micro.label == "Aggressive"
        assert micro.landmark == "Depot"
        assert micro.distance_m < 30
        assert micro.radius_m == 100.0
        assert dict(micro.nearby_counts)["Aggressive"] >= 1

    def test_micro_unknown_key(self, planted_store, tiny_landmarks):
        store, model = planted_store
        with pytest.raises(KeyError):
            retrieve(Intent(IntentCategory.MICRO_EVENT,
                            event_key=StoreKey("ghost", 0)),
                     store, model, tiny_landmarks)

    def test_retrieve_is_deterministic(self, planted_store, tiny_landmarks):
        store, model = planted_store
        intent = Intent(IntentCategory.AGGRESSIVE_DRIVING)
        assert retrieve(intent, store, model, tiny_landmarks) == \
            retrieve(intent, store, model, tiny_landmarks)

    def test_empty_store_yields_zero_context(self, tmp_path, tiny_landmarks):
        store = SummaryStore(tmp_path / "void")
        context = retrieve(Intent(IntentCategory.AGGRESSIVE_DRIVING),
                           store, toy_five_model(), tiny_landmarks)
        assert context.total_events == 0
        assert context.hotspots == ()


def _reference_box_context():
    return ContextSummary(
        category=IntentCategory.AGGRESSIVE_DRIVING,
        total_events=2450,
        window_start_ms=DEFAULT_START_MS,                      # 2024-10-21 14:00 UTC
        window_end_ms=DEFAULT_START_MS + 90 * 60 * 1000,       # 15:30 UTC
        hotspots=(
            Hotspot("Location A", 15, 0.87),
            Hotspot("Location B", 11, 0.75),
            Hotspot("Location C", 8, 0.81),
        ),
    )


class TestBuildPrompt:
    def test_reference_box_numbers_render_exactly(self):
        plan = build_prompt(Intent(IntentCategory.AGGRESSIVE_DRIVING),
                            _reference_box_context())
        block = plan.context_block
        assert "Total events: 2,450" in block
        assert "Observation window: 2024-10-21 14:00--15:30 UTC" in block
        assert "- Location A: 15 events, instability 0.87" in block
        assert "- Location B: 11 events, instability 0.75" in block
        assert "- Location C: 8 events, instability 0.81" in block
        numbers = set(extract_numbers(block))
        assert {2450, 15, 11, 8, 0.87, 0.75, 0.81} <= numbers

    def test_zero_count_context(self):
        context = ContextSummary(category=IntentCategory.EVENT_COUNTING,
                                 total_events=0, window_start_ms=None, window_end_ms=None)
        plan = build_prompt(Intent(IntentCategory.EVENT_COUNTING), context)
        assert "Total events: 0" in plan.context_block
        assert "no matching events" in plan.context_block
        assert "say so plainly" in plan.prompt_text

    def test_generation_settings_per_category(self):
        macro = build_prompt(Intent(IntentCategory.DWELL_TIME),
                             ContextSummary(IntentCategory.DWELL_TIME, 0, None, None))
        assert (macro.temperature, macro.max_tokens) == (0.7, 500)
        micro_context = ContextSummary(IntentCategory.MICRO_EVENT, 1,
                                       DEFAULT_START_MS, DEFAULT_START_MS + 3000)
        micro = build_prompt(Intent(IntentCategory.MICRO_EVENT,
                                    event_key=StoreKey("v", 1)), micro_context)
        assert (micro.temperature, micro.max_tokens) == (0.5, 150)

    @pytest.mark.parametrize("category", [c for c in IntentCategory])
    def test_block_token_budget_for_empty_data(self, category):
        context = ContextSummary(category=category, total_events=0,
                                 window_start_ms=None, window_end_ms=None)
        block = render_context_block(context)
        assert 50 <= reference_tokenize(block) <= 400

    def test_block_token_budget_on_fleet_contexts(self, fleet_store, fleet_model,
                                                  fleet_landmarks):
        for intent in (Intent(IntentCategory.AGGRESSIVE_DRIVING),
                       Intent(IntentCategory.EVENT_COUNTING, label="Moderate"),
                       Intent(IntentCategory.DWELL_TIME),
                       Intent(IntentCategory.ROUTE_EFFICIENCY),
                       Intent(IntentCategory.SPATIAL_PATTERNS, landmark="Union Square")):
            context = retrieve(intent, fleet_store, fleet_model, fleet_landmarks)
            block = render_context_block(context)
            assert 50 <= reference_tokenize(block) <= 400, intent.category

    def test_oversized_list_is_trimmed_to_budget(self):
        context = ContextSummary(
            category=IntentCategory.EVENT_COUNTING, total_events=1000,
            window_start_ms=DEFAULT_START_MS, window_end_ms=DEFAULT_START_MS + 3000,
            label_counts=tuple((f"Synthetic Label Number {i}", i) for i in range(200)),
        )
        block = render_context_block(context)
        assert reference_tokenize(block) <= 400

    def test_prompt_landmarks_exist_in_directory(self, fleet_store, fleet_model,
                                                 fleet_landmarks):
        context = retrieve(Intent(IntentCategory.AGGRESSIVE_DRIVING),
                           fleet_store, fleet_model, fleet_landmarks)
        names = set(fleet_landmarks.names)
        for hotspot in context.hotspots:
            assert hotspot.name in names
