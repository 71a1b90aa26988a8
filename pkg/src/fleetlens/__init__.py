"""Fleet telemetry analytics: edge summaries, behavior clusters, grounded queries."""

from .aggregator import ReductionReport, WindowAccumulator, close_window, percentile, run_replay
from .clustering import (
    BEHAVIOR_LABELS,
    BehaviorModel,
    FeatureVector,
    Normalization,
    assign,
    elbow_curve,
    extract_features,
    fit,
    silhouette,
)
from .gateway import (
    Completion,
    GatewayClient,
    HttpChatBackend,
    MockBackend,
    UsageReport,
    reference_tokenize,
    run_flash_fusion,
    run_llm_only,
)
from .model import (
    DEFAULT_PROFILE,
    GpsFix,
    GpsQuality,
    Landmark,
    LandmarkDirectory,
    RawSample,
    SamplingProfile,
    WindowSummary,
    decode_summary,
    encode_summary,
    magnitude,
    raw_payload_bytes,
)
from .pipeline import AnswerResult, analyze_event, answer_query
from .planner import (
    ContextSummary,
    Intent,
    IntentCategory,
    PlannerConfig,
    QueryPlan,
    build_prompt,
    classify,
    nearest_landmark,
    retrieve,
)
from .store import Circle, QueryFilter, StoreKey, SummaryStore, haversine
from .validator import ValidationReport, ValidatorConfig, extract_numbers, validate

__version__ = "0.1.0"
