import math

import numpy as np
import pytest

from fleetlens.clustering import extract_features, fit
from fleetlens.model import GpsQuality, WindowSummary
from fleetlens.store import Circle, QueryFilter, StoreKey, SummaryStore, haversine

from conftest import DEFAULT_START_MS, make_summary
from oracles import brute_scan


class TestHaversine:
    def test_identical_points(self):
        assert haversine(33.7756, -84.3963, 33.7756, -84.3963) == 0.0

    def test_antipodal_half_circumference(self):
        assert haversine(0, 0, 0, 180) == pytest.approx(math.pi * 6_371_000, abs=1.0)

    def test_against_external_geodesic_value(self):
        # 0.0014 deg of latitude on the 6371 km sphere: 155.67 m
        # (cross-checked with a high-precision great-circle computation)
        d = haversine(33.7756, -84.3963, 33.7770, -84.3963)
        assert d == pytest.approx(155.67, rel=0.005)


class TestPutGet:
    def test_round_trip_and_layout(self, tmp_path):
        store = SummaryStore(tmp_path)
        summary = make_summary()
        key = store.put(summary)
        assert key == StoreKey("bus-01", DEFAULT_START_MS)
        assert store.get(key) == summary
        assert (tmp_path / "bus-01" / "2024-10-21" / f"{DEFAULT_START_MS}.json").exists()

    def test_last_write_wins(self, tmp_path):
        store = SummaryStore(tmp_path)
        store.put(make_summary(mag_variance=0.1))
        store.put(make_summary(mag_variance=0.9))
        assert store.get(StoreKey("bus-01", DEFAULT_START_MS)).mag_variance == 0.9
        assert store.count() == 1

    def test_get_missing_returns_none(self, tmp_path):
        assert SummaryStore(tmp_path).get(StoreKey("x", 0)) is None

    def test_vehicle_id_path_safety(self, tmp_path):
        with pytest.raises(ValueError):
            SummaryStore(tmp_path).put(make_summary(vehicle_id="../evil"))

    def test_bulk_ingest_matches_count(self, tmp_path):
        store = SummaryStore(tmp_path)
        for i in range(2648):
            store.put(make_summary(vehicle_id=f"bus-{i % 4:02d}",
                                   window_start=DEFAULT_START_MS + i * 3000))
        assert store.count() == 2648
        assert len(store.scan()) == 2648


def _random_dataset(rng, n=1000):
    qualities = (GpsQuality.NONE, GpsQuality.FIX_2D, GpsQuality.FIX_3D)
    summaries = []
    for i in range(n):
        quality = qualities[int(rng.choice(3, p=[0.15, 0.25, 0.6]))]
        if quality is GpsQuality.NONE and rng.uniform() < 0.5:
            lat = lon = None
        else:
            lat = round(33.7756 + float(rng.normal(0, 0.01)), 6)
            lon = round(-84.3963 + float(rng.normal(0, 0.01)), 6)
        summaries.append(make_summary(
            vehicle_id=f"bus-{int(rng.integers(0, 5)):02d}",
            window_start=DEFAULT_START_MS + int(rng.integers(0, 5000)) * 3000,
            mag_variance=round(float(rng.uniform(0, 6)), 4),
            extreme=round(float(rng.uniform(9, 19)), 4),
            lat=lat, lon=lon, quality=quality,
        ))
    # de-duplicate keys: later puts would overwrite earlier ones
    unique = {(s.vehicle_id, s.window_start): s for s in summaries}
    return list(unique.values())


@pytest.fixture(scope="module")
def loaded(tmp_path_factory):
    rng = np.random.default_rng(97)
    dataset = _random_dataset(rng)
    store = SummaryStore(tmp_path_factory.mktemp("scan-oracle"))
    for s in dataset:
        store.put(s)
    model = fit([extract_features(s) for s in dataset], k=3, seed=1, restarts=5)
    pairs = [(s, None) for s in sorted(dataset, key=lambda s: (s.vehicle_id, s.window_start))]
    from fleetlens.clustering import assign
    labeled = [(s, assign(model, extract_features(s))) for s, _ in pairs]
    return store, model, pairs, labeled


class TestScanOracle:
    def test_empty_store_empty_result(self, tmp_path):
        assert SummaryStore(tmp_path / "empty").scan() == []

    def test_match_all(self, loaded):
        store, _model, pairs, _labeled = loaded
        assert [s for s, _ in store.scan()] == [s for s, _ in pairs]

    def test_randomized_filters_match_brute_force(self, loaded):
        store, model, pairs, labeled = loaded
        rng = np.random.default_rng(131)
        labels = sorted({label for _, label in labeled})
        for case in range(60):
            query = QueryFilter(
                start_ms=(DEFAULT_START_MS + int(rng.integers(0, 5000)) * 3000
                          if rng.uniform() < 0.5 else None),
                end_ms=(DEFAULT_START_MS + int(rng.integers(0, 5000)) * 3000
                        if rng.uniform() < 0.5 else None),
                circle=(Circle(33.7756 + float(rng.normal(0, 0.005)),
                               -84.3963 + float(rng.normal(0, 0.005)),
                               float(rng.uniform(200, 2500)))
                        if rng.uniform() < 0.5 else None),
                label=(str(rng.choice(labels)) if rng.uniform() < 0.4 else None),
                min_gps_quality=(GpsQuality.FIX_3D if rng.uniform() < 0.3 else None),
            )
            use_model = query.label is not None or rng.uniform() < 0.5
            got = store.scan(query, model=model if use_model else None)
            reference = brute_scan(labeled if use_model else pairs, query)
            assert [s for s, _ in got] == [s for s, _ in reference], f"case {case}: {query}"
            if use_model:
                assert [lbl for _, lbl in got] == [lbl for _, lbl in reference]

    def test_spatial_scan_never_returns_untrusted_fix(self, loaded):
        store, _model, _pairs, _labeled = loaded
        rows = store.scan(QueryFilter(circle=Circle(33.7756, -84.3963, 50_000)))
        assert rows, "expected spatial matches"
        for s, _ in rows:
            assert s.gps_quality is not GpsQuality.NONE
            assert s.anchor_lat is not None

    def test_label_filter_requires_model(self, loaded):
        store, _model, _pairs, _labeled = loaded
        with pytest.raises(ValueError, match="model"):
            store.scan(QueryFilter(label="Calm"))

    def test_results_sorted_and_deterministic(self, loaded):
        store, _model, _pairs, _labeled = loaded
        first = store.scan()
        second = store.scan()
        assert first == second
        keys = [(s.vehicle_id, s.window_start) for s, _ in first]
        assert keys == sorted(keys)

    def test_circle_requires_positive_radius(self):
        with pytest.raises(ValueError):
            Circle(0.0, 0.0, 0.0)
