"""Automated evaluators: citation F1 with must-cite/good-to-cite partitioning,
rubric-scored literature review quality, and position-debiased side-by-side
comparison with win-margin aggregation."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import prompts
from .errors import (
    EmptyInputError,
    InvalidWinnerTokenError,
    SchemaViolation,
    UnparseableJudgmentError,
    WeightDomainError,
)
from .ingest import VenueProfile
from .litreview import match_score, normalize_title
from .outline import extract_json_object
from .providers import CompletionRequest, IndexRecord

logger = logging.getLogger(__name__)

P0 = "P0"
P1 = "P1"

SXS_TEMPERATURE = 0.0

RUBRIC_AXES = (
    "coverage_and_completeness",
    "relevance_and_focus",
    "critical_analysis_and_synthesis",
    "positioning_and_novelty",
    "organization_and_writing",
    "citation_practices_and_rigor",
)
RUBRIC_WEIGHTS = (0.20, 0.15, 0.25, 0.25, 0.10, 0.05)
assert abs(sum(RUBRIC_WEIGHTS) - 1.0) < 1e-12, "rubric weights must sum to 1"

PENALTY_MIN, PENALTY_MAX = -15.0, -5.0
ADJUSTMENT_MIN, ADJUSTMENT_MAX = 3.0, 7.0


# --- reference partitioning -----------------------------------------------------


@dataclass(frozen=True)
class CitationPartition:
    assignments: dict[int, str]  # ordinal (1-based) -> P0 | P1

    def ordinals(self, bucket: str) -> list[int]:
        return sorted(o for o, b in self.assignments.items() if b == bucket)


def partition_references(
    paper_text: str,
    refs: Sequence[str],
    judge: Callable[[CompletionRequest], str],
) -> CitationPartition:
    """Ask the judge to split the ground-truth reference list into must-cite
    (P0) and good-to-cite (P1) ordinals.

    Ordinals the judge omits default to P1 (the "remaining" class); ordinals
    outside the list are a judgment fault.
    """
    if not refs:
        raise EmptyInputError("reference list is empty")
    numbered = "\n".join(f"{i}. {ref}" for i, ref in enumerate(refs, start=1))
    prompt = prompts.render("partition_p0p1", paper_text=paper_text, references_str=numbered)
    reply = judge(CompletionRequest(prompt=prompt, tags={"agent": "citation-partition"}))
    try:
        payload = extract_json_object(reply)
    except Exception as exc:
        raise UnparseableJudgmentError(f"partition output not JSON: {exc}") from exc
    assignments: dict[int, str] = {}
    for key, value in payload.items():
        try:
            ordinal = int(str(key).strip())
        except ValueError as exc:
            raise UnparseableJudgmentError(f"non-numeric ordinal {key!r}") from exc
        if not 1 <= ordinal <= len(refs):
            raise UnparseableJudgmentError(f"ordinal {ordinal} outside 1..{len(refs)}")
        bucket = str(value).strip().upper()
        if bucket not in (P0, P1):
            raise UnparseableJudgmentError(f"bucket for ordinal {ordinal} not P0/P1: {value!r}")
        assignments[ordinal] = bucket
    for ordinal in range(1, len(refs) + 1):
        if ordinal not in assignments:
            logger.warning("judge omitted ordinal %d; defaulting to P1", ordinal)
            assignments[ordinal] = P1
    return CitationPartition(assignments=assignments)


# --- entity resolution ------------------------------------------------------------


def parse_reference_title(ref: str) -> str:
    """Heuristic title pull from a free-form reference string.

    A quoted span wins outright (the IEEE style); otherwise the wordiest
    sentence-ish segment, preferring earlier ones on ties.
    """
    text = ref.strip().strip("[]0123456789 ")
    quoted = re.findall(r'"([^"]{8,})"|“([^”]{8,})”', text)
    if quoted:
        spans = [a or b for a, b in quoted]
        return max(spans, key=len).strip().rstrip(",.")
    segments = [s.strip(' "“”') for s in re.split(r"\.\s+|\.$", text) if s.strip()]
    if not segments:
        return text
    best = max(segments, key=lambda s: (len(s.split()), -segments.index(s)))
    return best


def fallback_entity_id(title: str) -> str:
    return "t:" + hashlib.sha1(normalize_title(title).encode("utf-8")).hexdigest()


def resolve_entities(
    refs: Sequence[str | dict],
    index_search: Callable[[str], list[IndexRecord]],
) -> dict[int, str]:
    """ordinal (1-based) -> entity id.

    Unresolved references fall back to a hash of the normalized title so
    exact-title pairs still match across lists.
    """
    from .litreview import CandidatePaper

    resolved: dict[int, str] = {}
    for i, ref in enumerate(refs, start=1):
        if isinstance(ref, dict):
            title = str(ref.get("title", ""))
            year = ref.get("year")
        else:
            title = parse_reference_title(str(ref))
            year = None
        candidate = CandidatePaper(title=title, year=year if isinstance(year, int) else None)
        entity = fallback_entity_id(title)
        try:
            records = index_search(title)
        except Exception:
            records = []
        best_score = -1
        for record in records:
            score = match_score(candidate, record)
            if score > best_score:
                best_score = score
                if score > 70:
                    entity = record.entity_id
        resolved[i] = entity
    return resolved


# --- citation F1 --------------------------------------------------------------------


@dataclass(frozen=True)
class F1Stats:
    precision: float
    recall: float
    f1: float


@dataclass
class F1Report:
    overall: F1Stats
    p0: F1Stats
    p1: F1Stats
    matched: list[str] = field(default_factory=list)
    gen_count: int = 0
    gt_count: int = 0
    empty_generated: bool = False

    def as_dict(self) -> dict:
        return {
            "overall": vars(self.overall),
            "P0": vars(self.p0),
            "P1": vars(self.p1),
            "matched": list(self.matched),
            "gen_count": self.gen_count,
            "gt_count": self.gt_count,
            "empty_generated": self.empty_generated,
        }


def _stats(gen: set[str], gt_subset: set[str]) -> F1Stats:
    hits = len(gen & gt_subset)
    precision = hits / len(gen) if gen else 0.0
    recall = hits / len(gt_subset) if gt_subset else 0.0
    denom = len(gen) + len(gt_subset)
    # 2h/(g+t) is 2PR/(P+R) on counts; staying in integers until one division
    # keeps simple fractions exact in floating point.
    f1 = 2 * hits / denom if denom else 0.0
    return F1Stats(precision=precision, recall=recall, f1=f1)


def citation_f1(
    gt_entities: Sequence[tuple[str, str]],
    gen_entities: Sequence[str],
) -> F1Report:
    """Set matching on entity ids, scored independently for the P0 set, the P1
    set, and the combined reference set.

    Precision always uses the full generated set as denominator. An empty
    generated list yields zero precision by convention and is flagged.
    """
    gt_all = {e for e, _ in gt_entities}
    gt_p0 = {e for e, bucket in gt_entities if bucket == P0}
    gt_p1 = {e for e, bucket in gt_entities if bucket == P1}
    gen = set(gen_entities)
    report = F1Report(
        overall=_stats(gen, gt_all),
        p0=_stats(gen, gt_p0),
        p1=_stats(gen, gt_p1),
        matched=sorted(gen & gt_all),
        gen_count=len(gen),
        gt_count=len(gt_all),
        empty_generated=not gen,
    )
    if report.empty_generated:
        logger.warning("generated reference list is empty; precision undefined, reported as 0")
    return report


# --- literature review rubric ----------------------------------------------------------


@dataclass
class LitReviewReport:
    axis_scores: dict[str, float]
    penalties: list[dict]
    overall_score: float
    citation_statistics: dict
    summary: dict
    aggregate_drift: float = 0.0

    def as_dict(self) -> dict:
        return {
            "axis_scores": dict(self.axis_scores),
            "penalties": list(self.penalties),
            "overall_score": self.overall_score,
            "citation_statistics": dict(self.citation_statistics),
            "summary": dict(self.summary),
            "aggregate_drift": self.aggregate_drift,
        }


def aggregate_weighted(
    axes: Sequence[float],
    penalties: Sequence[float] = (),
    positive_adjustment: float = 0.0,
) -> float:
    """Deterministic rubric aggregation: fixed weights, additive penalties,
    optional bounded positive adjustment, clamped to [0, 100]."""
    if len(axes) != len(RUBRIC_WEIGHTS):
        raise WeightDomainError(f"expected {len(RUBRIC_WEIGHTS)} axis scores, got {len(axes)}")
    for value in axes:
        if not 0 <= value <= 100:
            raise WeightDomainError(f"axis score outside [0, 100]: {value}")
    if positive_adjustment != 0 and not ADJUSTMENT_MIN <= positive_adjustment <= ADJUSTMENT_MAX:
        raise WeightDomainError(f"positive adjustment outside {{0}} u [3, 7]: {positive_adjustment}")
    total = sum(w * a for w, a in zip(RUBRIC_WEIGHTS, axes))
    total += sum(penalties)
    total += positive_adjustment
    return min(100.0, max(0.0, total))


def build_rubric_prompt(pdf_text: str, venue: VenueProfile) -> str:
    return prompts.render(
        "lit_review_rubric",
        avg_citation_count=f"{venue.avg_citation_count:g}",
        pdf_text=pdf_text,
    )


def score_lit_review(
    pdf_text: str,
    venue: VenueProfile,
    judge: Callable[[CompletionRequest], str],
) -> LitReviewReport:
    """Rubric-score the Introduction + Related Work text.

    The judge's overall score is authoritative; the deterministic weighted
    aggregate is recomputed only as a drift diagnostic.
    """
    if not pdf_text.strip():
        raise EmptyInputError("no section text to score")
    prompt = build_rubric_prompt(pdf_text, venue)
    reply = judge(CompletionRequest(prompt=prompt, tags={"agent": "lit-review-rater"}))
    try:
        payload = extract_json_object(reply)
    except Exception as exc:
        raise UnparseableJudgmentError(f"rubric output not JSON: {exc}") from exc
    for required in ("axis_scores", "penalties", "overall_score", "citation_statistics", "summary"):
        if required not in payload:
            raise SchemaViolation(required, "required field missing")
    axis_scores: dict[str, float] = {}
    for axis in RUBRIC_AXES:
        if axis not in payload["axis_scores"]:
            raise SchemaViolation(f"axis_scores.{axis}", "axis missing")
        entry = payload["axis_scores"][axis]
        score = float(entry["score"] if isinstance(entry, dict) else entry)
        if not 0 <= score <= 100:
            raise SchemaViolation(f"axis_scores.{axis}", f"score outside [0, 100]: {score}")
        axis_scores[axis] = score
    penalties = []
    for i, pen in enumerate(payload["penalties"]):
        points = float(pen.get("points_deducted", pen.get("points", 0)))
        points = -abs(points)  # stored as the signed delta applied to the score
        if points != 0 and not PENALTY_MIN <= points <= PENALTY_MAX:
            raise SchemaViolation(f"penalties[{i}]", f"points outside [-15, -5]: {points}")
        penalties.append({"reason": str(pen.get("reason", "")), "points": points})
    overall = float(payload["overall_score"])
    if not 0 <= overall <= 100:
        raise SchemaViolation("overall_score", f"outside [0, 100]: {overall}")
    deterministic = aggregate_weighted(
        [axis_scores[a] for a in RUBRIC_AXES], [p["points"] for p in penalties], 0.0
    )
    return LitReviewReport(
        axis_scores=axis_scores,
        penalties=penalties,
        overall_score=overall,
        citation_statistics=dict(payload["citation_statistics"] or {}),
        summary=dict(payload["summary"] or {}),
        aggregate_drift=abs(overall - deterministic),
    )


# --- side-by-side comparison --------------------------------------------------------------

WINNER_TOKENS = {"paper_1": "first", "paper_2": "second", "tie": "tie"}


@dataclass(frozen=True)
class SxSVerdict:
    per_order: tuple[str, str]  # raw winners: (A-first run, B-first run)
    aggregated: str  # win | tie | loss, for manuscript A

    def as_dict(self) -> dict:
        return {"per_order": list(self.per_order), "aggregated": self.aggregated}


def sxs_single(
    a_text: str,
    b_text: str,
    aspect: str,
    judge: Callable[[CompletionRequest], str],
    *,
    max_retries: int = 1,
) -> str:
    """One judge call with ``a_text`` in position 1; returns first|second|tie."""
    if aspect not in ("lit", "overall"):
        raise ValueError(f"aspect must be lit|overall, got {aspect!r}")
    template = "sxs_lit" if aspect == "lit" else "sxs_overall"
    prompt = prompts.render(template, paper_1=a_text, paper_2=b_text)
    last_token = ""
    for attempt in range(max_retries + 1):
        reply = judge(
            CompletionRequest(
                prompt=prompt,
                temperature=SXS_TEMPERATURE,
                tags={"agent": f"sxs-{aspect}"},
            )
        )
        try:
            payload = extract_json_object(reply)
            token = str(payload.get("winner", "")).strip()
        except Exception:
            token = reply.strip()
        if token in WINNER_TOKENS:
            return WINNER_TOKENS[token]
        last_token = token
        prompt = prompt + '\n\nREMINDER: the "winner" field must be exactly one of "paper_1", "paper_2", or "tie".'
    raise InvalidWinnerTokenError(last_token)


def sxs_aggregate(run1: str, run2: str) -> SxSVerdict:
    """Aggregate the two orderings into A's outcome.

    ``run1`` is the raw winner with A in position 1; ``run2`` with B in
    position 1 (its raw winner is re-mapped before aggregation). Two wins or a
    win plus a tie is a win; a split decision or two ties is a tie; everything
    else is a loss.
    """
    for name, value in (("run1", run1), ("run2", run2)):
        if value not in ("first", "second", "tie"):
            raise ValueError(f"{name} must be first|second|tie, got {value!r}")
    a1 = {"first": "A", "second": "B", "tie": "tie"}[run1]
    a2 = {"first": "B", "second": "A", "tie": "tie"}[run2]
    outcomes = {a1, a2}
    if outcomes == {"A"} or outcomes == {"A", "tie"}:
        aggregated = "win"
    elif outcomes == {"A", "B"} or outcomes == {"tie"}:
        aggregated = "tie"
    else:
        aggregated = "loss"
    return SxSVerdict(per_order=(run1, run2), aggregated=aggregated)


def sxs_compare(
    a_text: str,
    b_text: str,
    aspect: str,
    judge: Callable[[CompletionRequest], str],
) -> SxSVerdict:
    """Both orderings of the pair, then the aggregation rule."""
    run1 = sxs_single(a_text, b_text, aspect, judge)
    run2 = sxs_single(b_text, a_text, aspect, judge)
    return sxs_aggregate(run1, run2)


def margin(verdicts: Iterable[SxSVerdict | str]) -> float:
    """Win rate minus loss rate over a verdict set, in [-1, 1]."""
    outcomes = [v.aggregated if isinstance(v, SxSVerdict) else str(v) for v in verdicts]
    if not outcomes:
        raise EmptyInputError("no verdicts")
    for outcome in outcomes:
        if outcome not in ("win", "tie", "loss"):
            raise ValueError(f"invalid outcome: {outcome!r}")
    wins = sum(1 for o in outcomes if o == "win")
    losses = sum(1 for o in outcomes if o == "loss")
    return (wins - losses) / len(outcomes)
