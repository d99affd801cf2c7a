"""Rubrics, the learned-verifier interface, meta-verification filtering,
and the reward product.

The engine never runs a model here. Learned verifiers and meta-verifiers
are external providers behind a narrow protocol: an analysis is a score
in [0,1] plus located issues; a meta-provider assigns each issue a
support value, and issues survive filtering only when support strictly
exceeds the threshold.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import ProviderError, RubricError
from .values import ensure_exact, is_number, loads_exact

log = logging.getLogger("cape.meta")

DEFAULT_THETA_META = Fraction(1, 2)

_ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


@dataclass(frozen=True)
class Rubric:
    id: str
    # (score, description), sorted by score descending
    levels: tuple[tuple[Fraction, str], ...]
    output_schema: dict


@dataclass(frozen=True)
class Issue:
    location: str
    description: str


@dataclass(frozen=True)
class VerifierAnalysis:
    score: Fraction
    issues: tuple[Issue, ...]


@dataclass(frozen=True)
class MetaAssessment:
    issue: Issue
    support: Fraction | None  # None when the provider failed
    error: str | None = None


@dataclass(frozen=True)
class RewardComponents:
    r_format: Fraction
    r_score: Fraction
    r_meta: Fraction


def validate_rubric(document: str) -> Rubric:
    try:
        data = loads_exact(document)
    except ValueError as exc:
        raise RubricError(f"not valid JSON: {exc}") from None
    return rubric_from_data(data)


def rubric_from_data(data) -> Rubric:
    if not isinstance(data, dict):
        raise RubricError("rubric document must be a JSON object")
    rubric_id = data.get("id")
    if not isinstance(rubric_id, str) or not _ID_RE.match(rubric_id):
        raise RubricError("id must be a dotted identifier")
    raw_levels = data.get("rubric")
    if not isinstance(raw_levels, dict):
        raise RubricError("missing rubric levels")
    if len(raw_levels) < 2:
        raise RubricError("fewer than 2 levels")
    levels = []
    for key, description in raw_levels.items():
        try:
            score = Fraction(key)
        except (ValueError, ZeroDivisionError):
            raise RubricError(f"level key {key!r} is not a number") from None
        if not 0 <= score <= 1:
            raise RubricError(f"score out of [0,1]: {key}")
        if not isinstance(description, str) or not description:
            raise RubricError(f"level {key!r} needs a non-empty description")
        levels.append((score, description))
    if len({s for s, _ in levels}) != len(levels):
        raise RubricError("duplicate level scores")

    schema = data.get("output_schema")
    if not isinstance(schema, dict) or "issues" not in schema or "score" not in schema:
        raise RubricError("output_schema must declare issues and score")

    return Rubric(
        id=rubric_id,
        levels=tuple(sorted(levels, key=lambda item: item[0], reverse=True)),
        output_schema=schema,
    )


def analysis_from_data(data) -> VerifierAnalysis:
    """Validate a learned verifier's response: score in [0,1] and issues
    with non-empty locations."""
    if not isinstance(data, dict):
        raise ProviderError("analysis must be an object")
    score = data.get("score")
    if not is_number(score):
        raise ProviderError("analysis score must be a number")
    score = Fraction(score)
    if not 0 <= score <= 1:
        raise ProviderError(f"analysis score out of [0,1]: {score}")
    raw_issues = data.get("issues", [])
    if not isinstance(raw_issues, list):
        raise ProviderError("analysis issues must be an array")
    issues = []
    for i, raw in enumerate(raw_issues):
        if not isinstance(raw, dict):
            raise ProviderError(f"issue {i} must be an object")
        location = raw.get("location")
        description = raw.get("description")
        if not isinstance(location, str) or not location:
            raise ProviderError(f"issue {i} needs a non-empty location")
        if not isinstance(description, str):
            raise ProviderError(f"issue {i} needs a description")
        issues.append(Issue(location=location, description=description))
    return VerifierAnalysis(score=score, issues=tuple(issues))


def assess_issues(output_text: str, analysis: VerifierAnalysis, meta) -> list[MetaAssessment]:
    """Call the meta-provider once per issue, in order. Provider failures
    are recorded (and logged), never raised."""
    assessments = []
    for issue in analysis.issues:
        try:
            support = ensure_exact(meta(output_text, issue))
        except Exception as exc:
            log.warning("meta provider failed on issue at %s: %s", issue.location, exc)
            assessments.append(MetaAssessment(issue=issue, support=None, error=str(exc)))
            continue
        if not 0 <= support <= 1:
            log.warning("meta provider support out of [0,1] at %s: %s", issue.location, support)
            assessments.append(MetaAssessment(issue=issue, support=None, error="support out of [0,1]"))
            continue
        assessments.append(MetaAssessment(issue=issue, support=Fraction(support)))
    return assessments


def meta_filter(output_text: str, analysis: VerifierAnalysis, meta, theta_meta=DEFAULT_THETA_META) -> list[Issue]:
    """Keep exactly the issues whose support strictly exceeds theta_meta,
    original order preserved. Issues whose assessment failed are dropped
    and logged (the raw assessments are available via assess_issues for
    alternative weighting schemes)."""
    theta = ensure_exact(theta_meta)
    if not 0 <= theta <= 1:
        raise ValueError(f"theta_meta out of [0,1]: {theta_meta}")
    validated = []
    for assessment in assess_issues(output_text, analysis, meta):
        if assessment.support is not None and assessment.support > theta:
            validated.append(assessment.issue)
    return validated


def reward(components: RewardComponents):
    """Training reward: the product of format, score, and meta components,
    computed exactly."""
    parts = (components.r_format, components.r_score, components.r_meta)
    exact = []
    for part in parts:
        value = ensure_exact(part)
        if not 0 <= value <= 1:
            raise ValueError(f"reward component out of [0,1]: {part}")
        exact.append(Fraction(value))
    return exact[0] * exact[1] * exact[2]


def score_to_level(rubric: Rubric, score) -> str:
    """Description of the level with the greatest key <= score; scores
    below every level fall back to the lowest level (real verifiers emit
    continuous scores, rubric keys are discrete)."""
    value = ensure_exact(score)
    if not 0 <= value <= 1:
        raise ValueError(f"score out of [0,1]: {score}")
    for level_score, description in rubric.levels:  # descending
        if level_score <= value:
            return description
    return rubric.levels[-1][1]
