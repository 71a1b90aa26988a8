"""Command-line entry points: aggregate, store, cluster, query, bench, synth, serve."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import datasets
from .aggregator import run_replay
from .clustering import BehaviorModel, elbow_curve, extract_features, fit
from .gateway import (
    GatewayClient,
    HttpChatBackend,
    MockBackend,
    run_flash_fusion,
    run_llm_only,
)
from .model import (
    DEFAULT_PROFILE,
    GpsQuality,
    LandmarkDirectory,
    SamplingProfile,
    decode_summary,
    encode_summary,
)
from .pipeline import answer_query
from .planner import DEFAULT_PLANNER_CONFIG, PlannerConfig, build_prompt, classify, retrieve
from .store import Circle, QueryFilter, SummaryStore
from .validator import DEFAULT_VALIDATOR_CONFIG, ValidatorConfig

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


def _load_profile(path: str | None) -> SamplingProfile:
    if path is None:
        return DEFAULT_PROFILE
    return SamplingProfile.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _load_configs(path: str | None) -> tuple[PlannerConfig, ValidatorConfig]:
    if path is None:
        return DEFAULT_PLANNER_CONFIG, DEFAULT_VALIDATOR_CONFIG
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return (
        PlannerConfig.from_json(obj.get("planner", {})),
        ValidatorConfig.from_json(obj.get("validator", {})),
    )


def _build_backend(kind: str, endpoint: str | None, model_name: str | None,
                   seed: int, corrupt: bool):
    if kind == "mock":
        return MockBackend(seed=seed, corrupt=corrupt)
    if kind == "http":
        if not endpoint or not model_name:
            raise click.UsageError("--endpoint and --model-name are required for --backend http")
        return HttpChatBackend(endpoint, model_name)
    raise click.UsageError(f"unknown backend kind: {kind}")


@click.group()
def main() -> None:
    """Fleet telemetry analytics pipeline."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--profile", "profile_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path())
def aggregate(input_path, profile_path, out_path, report_path):
    """Replay raw telemetry JSONL into summary packets plus a reduction report."""
    profile = _load_profile(profile_path)
    result = run_replay(input_path, profile)
    with open(out_path, "wb") as fh:
        for summary in result.summaries:
            fh.write(encode_summary(summary))
            fh.write(b"\n")
    report = dict(result.report.to_json(),
                  dropped_records=result.dropped_records,
                  empty_windows=result.empty_windows)
    if report_path:
        Path(report_path).write_text(json.dumps(report, indent=2), encoding="utf-8")
    click.echo(json.dumps(report))


@main.group()
def store() -> None:
    """Ingest and scan the summary store."""


@store.command()
@click.option("--root", required=True, type=click.Path())
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
def ingest(root, input_path):
    """Load encoded summary packets (one per line) into the store."""
    s = SummaryStore(root)
    count = 0
    with open(input_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            s.put(decode_summary(line))
            count += 1
    click.echo(json.dumps({"ingested": count, "stored": s.count()}))


@store.command()
@click.option("--root", required=True, type=click.Path(exists=True))
@click.option("--from", "start", help="window start lower bound (ms or ISO-8601)")
@click.option("--to", "end", help="window start upper bound, exclusive")
@click.option("--near", help="lat,lon,radius_m bounding circle")
@click.option("--label", help="behavior label (requires --model)")
@click.option("--min-quality", type=click.Choice([q.value for q in GpsQuality]))
@click.option("--model", "model_path", type=click.Path(exists=True))
def scan(root, start, end, near, label, min_quality, model_path):
    """Print matching summaries (and labels, when a model is given) as JSONL."""
    circle = None
    if near:
        lat, lon, radius = (float(p) for p in near.split(","))
        circle = Circle(lat, lon, radius)
    query = QueryFilter(
        start_ms=_parse_time(start),
        end_ms=_parse_time(end),
        circle=circle,
        label=label,
        min_gps_quality=GpsQuality(min_quality) if min_quality else None,
    )
    model = BehaviorModel.load(model_path) if model_path else None
    for summary, assigned in SummaryStore(root).scan(query, model=model):
        record = json.loads(decode_record(summary))
        if assigned is not None:
            record["label"] = assigned
        click.echo(json.dumps(record, separators=(",", ":")))


def decode_record(summary) -> str:
    return encode_summary(summary).decode("utf-8")


def _parse_time(value: str | None) -> int | None:
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        from datetime import datetime, timezone
        parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
        if parsed.tzinfo is None:
            parsed = parsed.replace(tzinfo=timezone.utc)
        return int(parsed.timestamp() * 1000)


@main.group()
def cluster() -> None:
    """Fit and inspect behavior cluster models."""


@cluster.command("fit")
@click.option("--store", "root", required=True, type=click.Path(exists=True))
@click.option("--k", default=5, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--restarts", default=10, show_default=True)
@click.option("--model-out", "model_out", required=True, type=click.Path())
def cluster_fit(root, k, seed, restarts, model_out):
    """Fit a versioned model over every stored summary.

    If the output file already holds a model, the new one gets version + 1.
    """
    features = [extract_features(s) for s in SummaryStore(root).iter_all()]
    version = 1
    out = Path(model_out)
    if out.exists():
        version = BehaviorModel.load(out).version + 1
    model = fit(features, k=k, seed=seed, restarts=restarts, version=version)
    model.save(out)
    click.echo(json.dumps({
        "version": model.version, "k": model.k,
        "objective": model.objective,
        "labels": list(model.labels),
    }))


@cluster.command()
@click.option("--store", "root", required=True, type=click.Path(exists=True))
@click.option("--k-min", default=1, show_default=True)
@click.option("--k-max", default=8, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--restarts", default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path())
def elbow(root, k_min, k_max, seed, restarts, out_path):
    """Objective-vs-k curve for choosing the cluster count."""
    features = [extract_features(s) for s in SummaryStore(root).iter_all()]
    curve = elbow_curve(features, range(k_min, k_max + 1), seed=seed, restarts=restarts)
    payload = [{"k": k, "objective": j} for k, j in curve]
    if out_path:
        Path(out_path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    click.echo(json.dumps(payload))


@main.group()
def query() -> None:
    """Ask natural-language questions over the clustered store."""


@query.command()
@click.argument("text")
@click.option("--store", "root", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--landmarks", "landmarks_path", required=True, type=click.Path(exists=True))
@click.option("--backend", default="mock", type=click.Choice(["mock", "http"]),
              show_default=True)
@click.option("--endpoint", help="chat-completions URL for --backend http")
@click.option("--model-name", help="served model name for --backend http")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--min-score", default=0, show_default=True,
              help="exit non-zero when the validation score is below this")
def ask(text, root, model_path, landmarks_path, backend, endpoint, model_name,
        seed, config_path, min_score):
    """Classify, retrieve, prompt, complete, and validate one query."""
    planner_config, validator_config = _load_configs(config_path)
    client = GatewayClient(_build_backend(backend, endpoint, model_name, seed, False))
    result = answer_query(
        text,
        store=SummaryStore(root),
        model=BehaviorModel.load(model_path),
        landmarks=LandmarkDirectory.load(landmarks_path),
        client=client,
        planner_config=planner_config,
        validator_config=validator_config,
    )
    click.echo(json.dumps(result.to_json(), indent=2))
    if result.validation.score < min_score:
        sys.exit(2)


@main.command()
@click.option("--strategy", default="both", show_default=True,
              type=click.Choice(["both", "flash", "llm-only"]))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True),
              help="JSON list of query strings")
@click.option("--data", "data_path", type=click.Path(exists=True),
              help="raw JSONL dataset for the llm-only baseline")
@click.option("--store", "root", type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--landmarks", "landmarks_path", type=click.Path(exists=True))
@click.option("--seed", default=7, show_default=True)
@click.option("--out", "out_path", type=click.Path())
def bench(strategy, queries_path, data_path, root, model_path, landmarks_path,
          seed, out_path):
    """Compare token/cost/call accounting between the two strategies."""
    queries = json.loads(Path(queries_path).read_text(encoding="utf-8"))
    client = GatewayClient(MockBackend(seed=seed))
    rows = []
    for text in queries:
        row: dict = {"query": text}
        if strategy in ("both", "flash"):
            if not (root and model_path and landmarks_path):
                raise click.UsageError("flash strategy needs --store, --model, --landmarks")
            store_obj = SummaryStore(root)
            model = BehaviorModel.load(model_path)
            landmarks = LandmarkDirectory.load(landmarks_path)
            intent = classify(text)
            context = retrieve(intent, store_obj, model, landmarks)
            plan = build_prompt(intent, context)
            _, usage = run_flash_fusion(text, plan, client)
            row["flash_fusion"] = usage.to_json()
        if strategy in ("both", "llm-only"):
            if not data_path:
                raise click.UsageError("llm-only strategy needs --data")
            records = Path(data_path).read_text(encoding="utf-8").splitlines()
            _, usage = run_llm_only(text, records, client)
            row["llm_only"] = usage.to_json()
        if "flash_fusion" in row and "llm_only" in row:
            planned = row["flash_fusion"]["total_tokens"]
            baseline = row["llm_only"]["total_tokens"]
            row["token_reduction_pct"] = round(100.0 * (1 - planned / baseline), 2)
        rows.append(row)
    payload = {"seed": seed, "queries": rows}
    if out_path:
        Path(out_path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    click.echo(json.dumps(payload, indent=2))


@main.group()
def synth() -> None:
    """Generate deterministic synthetic datasets."""


@synth.command()
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--duration", default=8040, show_default=True, help="seconds of stream")
@click.option("--vehicle", default="bus-01", show_default=True)
@click.option("--seed", default=7, show_default=True)
def telemetry(out_path, duration, vehicle, seed):
    """Write a raw telemetry JSONL stream (20 Hz accel + 1 Hz GPS)."""
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for line in datasets.synthesize_telemetry(duration_s=duration,
                                                  vehicle_id=vehicle, seed=seed):
            fh.write(line)
            fh.write("\n")
            count += 1
    click.echo(json.dumps({"lines": count, "path": out_path}))


@synth.command()
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=42, show_default=True)
def fleet(out_dir, seed):
    """Write the labeled fleet summary dataset plus its landmark directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries, landmarks = datasets.synthesize_fleet_summaries(seed=seed)
    written = datasets.write_summaries_jsonl(out / "summaries.jsonl", summaries)
    (out / "landmarks.json").write_text(
        json.dumps(landmarks.to_json(), indent=2), encoding="utf-8")
    click.echo(json.dumps({
        "summaries": written,
        "summaries_path": str(out / "summaries.jsonl"),
        "landmarks_path": str(out / "landmarks.json"),
    }))


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", "root", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--landmarks", "landmarks_path", required=True, type=click.Path(exists=True))
@click.option("--backend", default="mock", type=click.Choice(["mock", "http"]),
              show_default=True)
@click.option("--endpoint", help="chat-completions URL for --backend http")
@click.option("--model-name", help="served model name for --backend http")
@click.option("--seed", default=0, show_default=True)
@click.option("--corrupt", is_flag=True, help="use the corrupting mock (validation demos)")
@click.option("--static", "static_dir", type=click.Path(exists=True),
              help="serve a built web console from this directory")
@click.option("--config", "config_path", type=click.Path(exists=True))
def serve(port, host, root, model_path, landmarks_path, backend, endpoint,
          model_name, seed, corrupt, static_dir, config_path):
    """Run the HTTP API (and optionally the static console)."""
    import uvicorn

    from .service import create_app

    planner_config, validator_config = _load_configs(config_path)
    app = create_app(
        store=SummaryStore(root),
        model=BehaviorModel.load(model_path),
        landmarks=LandmarkDirectory.load(landmarks_path),
        client=GatewayClient(_build_backend(backend, endpoint, model_name, seed, corrupt)),
        planner_config=planner_config,
        validator_config=validator_config,
        static_dir=static_dir,
    )
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
