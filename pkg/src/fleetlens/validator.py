"""Post-hoc response checks: factual numbers, place names, tone, and boilerplate.

Every numeric token in a response must trace back to the numbers rendered into
the plan's data block; every landmark-shaped phrase must exist in the
directory. Each violation is one issue, and the confidence score is
``max(0, 100 - 20 * issues)`` with fixed 60/80 disposition thresholds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .clustering import BEHAVIOR_LABELS
from .model import LandmarkDirectory
from .planner import CATEGORY_TITLES, IntentCategory, QueryPlan

ISSUE_FACTUAL = "factual"
ISSUE_GEOGRAPHIC = "geographic"
ISSUE_BEHAVIORAL = "behavioral"
ISSUE_GENERIC_AI = "generic_ai"

DISPOSITION_PRESENT = "present"
DISPOSITION_REVIEW = "review"
DISPOSITION_RETRY = "retry"

PRESENT_THRESHOLD = 80
REVIEW_THRESHOLD = 60


def confidence_score(n_issues: int) -> int:
    return max(0, 100 - 20 * n_issues)


def disposition_for(score: int) -> str:
    if score >= PRESENT_THRESHOLD:
        return DISPOSITION_PRESENT
    if score >= REVIEW_THRESHOLD:
        return DISPOSITION_REVIEW
    return DISPOSITION_RETRY


@dataclass(frozen=True)
class Issue:
    kind: str
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...]

    @property
    def issue_count(self) -> int:
        return len(self.issues)

    @property
    def score(self) -> int:
        return confidence_score(self.issue_count)

    @property
    def disposition(self) -> str:
        return disposition_for(self.score)

    def to_json(self) -> dict:
        return {
            "issues": [{"kind": i.kind, "detail": i.detail} for i in self.issues],
            "issue_count": self.issue_count,
            "score": self.score,
            "disposition": self.disposition,
        }


@dataclass(frozen=True)
class ValidatorConfig:
    number_rel_tolerance: float = 1e-6
    alarm_words: tuple[str, ...] = ("dangerous", "alarming", "severe", "emergency")
    calm_words: tuple[str, ...] = ("smooth", "gentle", "uneventful")
    generic_phrases: tuple[str, ...] = ("as an ai", "i cannot", "i'm sorry")
    landmark_suffixes: tuple[str, ...] = ("square", "crosswalk", "housing",
                                          "hall", "street", "ave")
    # Capitalized system vocabulary the landmark recognizer must not flag.
    known_phrases: tuple[str, ...] = field(
        default_factory=lambda: tuple(CATEGORY_TITLES.values()) + BEHAVIOR_LABELS
        + ("BEGIN DATA", "END DATA")
    )
    leading_stop_words: tuple[str, ...] = ("the", "a", "an", "at", "near", "in", "on")

    @classmethod
    def from_json(cls, obj: dict) -> "ValidatorConfig":
        defaults = cls()
        def words(key, fallback):
            return tuple(str(w) for w in obj.get(key, fallback))
        return cls(
            number_rel_tolerance=float(obj.get("number_rel_tolerance",
                                               defaults.number_rel_tolerance)),
            alarm_words=words("alarm_words", defaults.alarm_words),
            calm_words=words("calm_words", defaults.calm_words),
            generic_phrases=words("generic_phrases", defaults.generic_phrases),
            landmark_suffixes=words("landmark_suffixes", defaults.landmark_suffixes),
            known_phrases=tuple(defaults.known_phrases)
            + tuple(str(w) for w in obj.get("known_phrases", ())),
            leading_stop_words=words("leading_stop_words", defaults.leading_stop_words),
        )


DEFAULT_VALIDATOR_CONFIG = ValidatorConfig()


# Unsigned decimal with optional thousands grouping; sign handled separately so
# date-like "2024-10-21" reads as {2024, 10, 21} rather than negatives.
_NUMBER = re.compile(r"(?<![\w.])(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?")


def extract_numbers(text: str) -> list[float]:
    """All decimal literals in reading order; "2,450" parses as 2450, and a
    leading minus counts only after start-of-text, whitespace, or '('."""
    values: list[float] = []
    for match in _NUMBER.finditer(text):
        literal = match.group(0).replace(",", "")
        value = float(literal)
        start = match.start()
        if start > 0 and text[start - 1] == "-":
            before = text[start - 2] if start >= 2 else " "
            if before.isspace() or before == "(":
                value = -value
        values.append(value)
    return values


def _numbers_match(candidate: float, grounded: Sequence[float], tolerance: float) -> bool:
    for g in grounded:
        if candidate == g:
            return True
        if abs(candidate - g) <= tolerance * max(abs(candidate), abs(g)):
            return True
    return False


# Runs of capitalized tokens never span line breaks.
_CAP_RUN = re.compile(r"\b[A-Z][A-Za-z'\-]*(?:[ \t]+(?:&[ \t]+)?[A-Z][A-Za-z'\-]*)+\b")


def _landmark_candidates(text: str, config: ValidatorConfig) -> list[str]:
    candidates = [m.group(0) for m in _CAP_RUN.finditer(text)]
    suffix_pattern = re.compile(
        r"\b([A-Z][A-Za-z'\-]*)[ \t]+(" + "|".join(config.landmark_suffixes) + r")\b"
    )
    for m in suffix_pattern.finditer(text):
        candidates.append(f"{m.group(1)} {m.group(2)}")
    cleaned = []
    for phrase in candidates:
        tokens = phrase.split()
        while tokens and tokens[0].lower() in config.leading_stop_words:
            tokens = tokens[1:]
        if len(tokens) >= 2:
            cleaned.append(" ".join(tokens))
    return cleaned


def validate(response_text: str, plan: QueryPlan, landmarks: LandmarkDirectory,
             config: ValidatorConfig = DEFAULT_VALIDATOR_CONFIG) -> ValidationReport:
    """Check one response against its plan; pure, always returns a report.

    The grounded number set is whatever the plan's data block rendered; any
    other number in the response is one factual issue per distinct value.
    """
    issues: list[Issue] = []

    grounded = extract_numbers(plan.context_block)
    unmatched: list[float] = []
    for value in extract_numbers(response_text):
        if value in unmatched:
            continue
        if not _numbers_match(value, grounded, config.number_rel_tolerance):
            unmatched.append(value)
    for value in unmatched:
        issues.append(Issue(ISSUE_FACTUAL, f"number {value:g} not found in grounded context"))

    known = {name.casefold() for name in landmarks.names}
    known.update(p.casefold() for p in config.known_phrases)
    unknown_places: list[str] = []
    for phrase in _landmark_candidates(response_text, config):
        folded = phrase.casefold()
        if folded in known or phrase in unknown_places:
            continue
        unknown_places.append(phrase)
    for phrase in unknown_places:
        issues.append(Issue(ISSUE_GEOGRAPHIC, f"place {phrase!r} not in landmark directory"))

    micro = plan.context.micro
    if plan.intent.category is IntentCategory.MICRO_EVENT and micro is not None:
        lower = response_text.lower()
        if micro.label in ("Calm", "Moderate"):
            hits = sorted(w for w in config.alarm_words if w in lower)
            if hits:
                issues.append(Issue(
                    ISSUE_BEHAVIORAL,
                    f"{micro.label} event described with alarm language: {', '.join(hits)}",
                ))
        elif micro.label in ("Aggressive", "Very Aggressive"):
            hits = sorted(w for w in config.calm_words if w in lower)
            if hits:
                issues.append(Issue(
                    ISSUE_BEHAVIORAL,
                    f"{micro.label} event described with calm-only language: {', '.join(hits)}",
                ))

    lower = response_text.lower()
    for phrase in config.generic_phrases:
        if phrase in lower:
            issues.append(Issue(ISSUE_GENERIC_AI, f"generic AI phrase present: {phrase!r}"))

    return ValidationReport(tuple(issues))
