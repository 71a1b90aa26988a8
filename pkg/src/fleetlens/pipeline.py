"""End-to-end query answering: plan, complete, validate, retry once if needed."""

from __future__ import annotations

from dataclasses import dataclass

from .clustering import BehaviorModel
from .gateway import STRATEGY_PLANNED, GatewayClient, UsageReport
from .model import LandmarkDirectory
from .planner import (
    DEFAULT_PLANNER_CONFIG,
    Intent,
    IntentCategory,
    PlannerConfig,
    QueryPlan,
    build_prompt,
    classify,
    retrieve,
)
from .store import StoreKey, SummaryStore
from .validator import (
    DEFAULT_VALIDATOR_CONFIG,
    DISPOSITION_RETRY,
    ValidationReport,
    ValidatorConfig,
    validate,
)

RETRY_INSTRUCTION = ("\n\nUse only the facts provided between BEGIN DATA and END DATA. "
                     "Do not introduce any other numbers or place names.")


@dataclass(frozen=True)
class AnswerResult:
    answer: str
    validation: ValidationReport
    usage: UsageReport
    plan: QueryPlan
    retried: bool

    def to_json(self) -> dict:
        return {
            "answer": self.answer,
            "validation": self.validation.to_json(),
            "usage": self.usage.to_json(),
            "retried": self.retried,
        }


def _complete_and_validate(plan: QueryPlan, landmarks: LandmarkDirectory,
                           client: GatewayClient,
                           validator_config: ValidatorConfig) -> AnswerResult:
    """Run the plan once; if validation lands in the retry band, try once more
    with a tightened instruction and keep the better-scoring attempt."""
    completion = client.complete(plan.prompt_text, plan.temperature, plan.max_tokens)
    report = validate(completion.text, plan, landmarks, validator_config)
    completions = [completion]
    retried = False

    if report.disposition == DISPOSITION_RETRY:
        retried = True
        retry_completion = client.complete(
            plan.prompt_text + RETRY_INSTRUCTION, plan.temperature, plan.max_tokens
        )
        retry_report = validate(retry_completion.text, plan, landmarks, validator_config)
        completions.append(retry_completion)
        if retry_report.score > report.score:
            completion, report = retry_completion, retry_report

    usage = UsageReport.from_completions(
        STRATEGY_PLANNED, completions, plan.temperature, plan.max_tokens)
    return AnswerResult(completion.text, report, usage, plan, retried)


def answer_query(query: str, *, store: SummaryStore, model: BehaviorModel,
                 landmarks: LandmarkDirectory, client: GatewayClient,
                 planner_config: PlannerConfig = DEFAULT_PLANNER_CONFIG,
                 validator_config: ValidatorConfig = DEFAULT_VALIDATOR_CONFIG) -> AnswerResult:
    """Answer one macro natural-language query over the clustered store."""
    intent = classify(query, planner_config)
    context = retrieve(intent, store, model, landmarks, config=planner_config)
    plan = build_prompt(intent, context, planner_config)
    return _complete_and_validate(plan, landmarks, client, validator_config)


def analyze_event(key: StoreKey, *, store: SummaryStore, model: BehaviorModel,
                  landmarks: LandmarkDirectory, client: GatewayClient,
                  planner_config: PlannerConfig = DEFAULT_PLANNER_CONFIG,
                  validator_config: ValidatorConfig = DEFAULT_VALIDATOR_CONFIG) -> AnswerResult:
    """Micro-level explanation of one stored event."""
    intent = Intent(IntentCategory.MICRO_EVENT, event_key=key)
    context = retrieve(intent, store, model, landmarks, config=planner_config)
    plan = build_prompt(intent, context, planner_config)
    return _complete_and_validate(plan, landmarks, client, validator_config)
