import pytest

from fleetlens.clustering import BehaviorModel, Normalization, extract_features, fit
from fleetlens.datasets import synthesize_fleet_summaries
from fleetlens.model import GpsQuality, WindowSummary
from fleetlens.store import SummaryStore

DEFAULT_START_MS = 1_729_519_200_000  # 2024-10-21 14:00:00 UTC


def make_summary(vehicle_id="bus-01", window_start=DEFAULT_START_MS, window_duration=3.0,
                 mag_mean=9.81, mag_variance=0.16, extreme=11.0,
                 lat=33.7756, lon=-84.3963, quality=GpsQuality.FIX_3D,
                 sample_count=60) -> WindowSummary:
    """Quantized summary whose feature vector is exactly (extreme, mag_variance)."""
    return WindowSummary(
        vehicle_id=vehicle_id,
        window_start=window_start,
        window_duration=window_duration,
        mag_mean=mag_mean,
        mag_variance=mag_variance,
        x_percentiles=(0.0, 0.0, 0.0, 0.0),
        y_percentiles=(0.0, 0.0, 0.0, 0.0),
        z_percentiles=(0.0, 0.0, 0.0, extreme),
        anchor_lat=lat,
        anchor_lon=lon,
        gps_quality=quality,
        sample_count=sample_count,
    ).quantized()


def toy_five_model() -> BehaviorModel:
    """Hand-built five-cluster model in raw feature space (identity normalization)."""
    centers = ((10.32, 0.09), (10.97, 0.155), (11.65, 0.168), (13.56, 0.48), (17.98, 5.87))
    labels = ("Calm", "Moderate", "Slightly Unstable", "Aggressive", "Very Aggressive")
    return BehaviorModel(
        version=1, k=5, centroids=centers,
        normalization=Normalization(mean=(0.0, 0.0), std=(1.0, 1.0)),
        label_map=labels, objective=0.0,
    )


@pytest.fixture(scope="session")
def fleet_data():
    summaries, landmarks = synthesize_fleet_summaries()
    return summaries, landmarks


@pytest.fixture(scope="session")
def fleet_store(fleet_data, tmp_path_factory):
    summaries, _ = fleet_data
    store = SummaryStore(tmp_path_factory.mktemp("fleet-store"))
    for s in summaries:
        store.put(s)
    return store


@pytest.fixture(scope="session")
def fleet_model(fleet_data):
    summaries, _ = fleet_data
    return fit([extract_features(s) for s in summaries], k=5, seed=42, restarts=10)


@pytest.fixture(scope="session")
def fleet_landmarks(fleet_data):
    return fleet_data[1]
