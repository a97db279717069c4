"""Review-gated refinement loop.

Each iteration asks a reviewer adapter to score the manuscript, revises it,
recompiles, re-scores, and applies the gate: a revision is kept only when the
overall score strictly increases, or ties with non-negative net sub-axis
movement. Any other outcome reverts to the previous version and halts the
loop.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from . import prompts
from .errors import AxisMismatchError, MissingBlockError, SchemaViolation
from .providers import CompletionRequest

logger = logging.getLogger(__name__)

DEFAULT_ITERATION_LIMIT = 3
REVIEW_TEMPERATURE = 0.75

WORKLOG_KEYS = ("addressed_weaknesses", "integrated_answers", "actions_taken")

NET_MODE_SUM = "sum"
NET_MODE_COUNT = "count"  # improvements minus regressions
NET_MODE_MIN = "min"  # worst per-axis delta


@dataclass(frozen=True)
class ReviewScore:
    overall: float
    sub_axes: dict[str, float]
    decision: str | None = None  # "accept" | "reject" | None
    feedback: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sub_axes:
            raise ValueError("sub_axes must be non-empty")


class Verdict(Enum):
    ACCEPT = "accept"
    REVERT_AND_HALT = "revert_and_halt"


@dataclass(frozen=True)
class Worklog:
    addressed_weaknesses: tuple[str, ...]
    integrated_answers: tuple[str, ...]
    actions_taken: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "addressed_weaknesses": list(self.addressed_weaknesses),
            "integrated_answers": list(self.integrated_answers),
            "actions_taken": list(self.actions_taken),
        }


@dataclass
class HistoryEntry:
    tex: str
    score: ReviewScore
    verdict: Verdict
    worklog: Worklog | None = None


@dataclass
class RefinementState:
    current_tex: str
    current_score: ReviewScore | None = None
    history: list[HistoryEntry] = field(default_factory=list)
    iterations_used: int = 0
    limit: int = DEFAULT_ITERATION_LIMIT


def _net(prev: ReviewScore, new: ReviewScore, mode: str) -> float:
    deltas = [new.sub_axes[axis] - prev.sub_axes[axis] for axis in prev.sub_axes]
    if mode == NET_MODE_SUM:
        return sum(deltas)
    if mode == NET_MODE_COUNT:
        return sum(1 for d in deltas if d > 0) - sum(1 for d in deltas if d < 0)
    if mode == NET_MODE_MIN:
        return min(deltas)
    raise ValueError(f"unknown net mode: {mode!r}")


def decide(prev: ReviewScore, new: ReviewScore, *, net_mode: str = NET_MODE_SUM) -> Verdict:
    """Accept iff overall strictly increases, or ties with non-negative net
    sub-axis movement; anything else reverts and halts."""
    if set(prev.sub_axes) != set(new.sub_axes):
        raise AxisMismatchError(
            f"axis sets differ: {sorted(prev.sub_axes)} vs {sorted(new.sub_axes)}"
        )
    if new.overall > prev.overall:
        return Verdict.ACCEPT
    if new.overall == prev.overall and _net(prev, new, net_mode) >= 0:
        return Verdict.ACCEPT
    return Verdict.REVERT_AND_HALT


# --- refinement model output ----------------------------------------------------

_FENCE = re.compile(r"```([a-zA-Z]*)[ \t]*\n(.*?)(?:\n)?```", re.DOTALL)


def parse_refinement_output(text: str, *, lenient: bool = False) -> tuple[Worklog, str]:
    """Split the two-block refinement reply: a JSON worklog fence first, the
    full revised LaTeX fence second.

    Strict mode rejects reversed blocks with MissingBlockError; lenient mode
    reorders them with a warning.
    """
    blocks = [(m.group(1).lower(), m.group(2)) for m in _FENCE.finditer(text)]
    json_blocks = [b for tag, b in blocks if tag == "json"]
    latex_blocks = [b for tag, b in blocks if tag in ("latex", "tex")]
    if not json_blocks:
        raise MissingBlockError("worklog (json fence)")
    if not latex_blocks:
        raise MissingBlockError("revised source (latex fence)")
    first_tag = next(tag for tag, _ in blocks if tag in ("json", "latex", "tex"))
    if first_tag != "json":
        if not lenient:
            raise MissingBlockError("worklog must come first (json fence before latex)")
        logger.warning("refinement blocks arrived in reversed order; reordering leniently")
    try:
        payload = json.loads(json_blocks[0])
    except json.JSONDecodeError as exc:
        raise SchemaViolation("worklog", f"not valid JSON: {exc}") from exc
    missing = [key for key in WORKLOG_KEYS if key not in payload]
    if missing:
        raise SchemaViolation("worklog", f"missing keys: {', '.join(missing)}")
    worklog = Worklog(
        addressed_weaknesses=tuple(str(x) for x in payload["addressed_weaknesses"]),
        integrated_answers=tuple(str(x) for x in payload["integrated_answers"]),
        actions_taken=tuple(str(x) for x in payload["actions_taken"]),
    )
    return worklog, latex_blocks[0]


# --- adapters --------------------------------------------------------------------


class ReviewerAdapter(Protocol):
    def __call__(self, pdf: bytes, tex: str) -> ReviewScore: ...


def parse_review_json(text: str) -> ReviewScore:
    from .outline import extract_json_object  # shared fence/bare-object scanner

    payload = extract_json_object(text)
    if "sub_axes" not in payload or "overall" not in payload:
        raise SchemaViolation("review", "missing sub_axes/overall")
    sub_axes = {str(k): float(v) for k, v in payload["sub_axes"].items()}
    feedback = payload.get("feedback") or {}
    return ReviewScore(
        overall=float(payload["overall"]),
        sub_axes=sub_axes,
        decision=payload.get("decision"),
        feedback={
            "strengths": list(feedback.get("strengths", [])),
            "weaknesses": list(feedback.get("weaknesses", [])),
            "questions": list(feedback.get("questions", [])),
        },
    )


def simulated_reviewer(llm: Callable[[CompletionRequest], str]) -> ReviewerAdapter:
    """Default reviewer adapter: one structured-review model call per draft.

    External review frameworks plug in behind the same (pdf, tex) -> ReviewScore
    contract; their internals stay out of scope.
    """

    def review(pdf: bytes, tex: str) -> ReviewScore:
        prompt = prompts.render("reviewer", paper_tex=tex)
        text = llm(
            CompletionRequest(
                prompt=prompt,
                attachments=(("application/pdf", pdf),) if pdf else (),
                temperature=REVIEW_TEMPERATURE,
                tags={"agent": "refinement-review"},
            )
        )
        return parse_review_json(text)

    return review


# --- the loop ----------------------------------------------------------------------


def refine_loop(
    state: RefinementState,
    reviewer: ReviewerAdapter,
    reviser: Callable[[dict], str],
    compiler: Callable[[str], tuple[bool, bytes]],
    *,
    net_mode: str = NET_MODE_SUM,
    on_iteration: Callable[[int, HistoryEntry], None] | None = None,
) -> RefinementState:
    """Run review -> revise -> compile -> re-review -> decide until the gate
    reverts or the iteration limit is reached.

    A compile failure of a revision counts as a failed revision: revert and
    halt. The final overall score is never below the initial one.
    """
    if state.limit <= 0:
        return state
    if state.current_score is None:
        ok, pdf = compiler(state.current_tex)
        if not ok:
            raise ValueError("initial draft must compile before refinement")
        state.current_score = reviewer(pdf, state.current_tex)

    worklog_history: list[dict] = []
    while state.iterations_used < state.limit:
        reply = reviser(
            {
                "paper_tex": state.current_tex,
                "reviewer_feedback": _feedback_json(state.current_score),
                "worklog_history": worklog_history,
            }
        )
        worklog, revised_tex = parse_refinement_output(reply, lenient=True)
        state.iterations_used += 1
        ok, pdf = compiler(revised_tex)
        if not ok:
            entry = HistoryEntry(revised_tex, state.current_score, Verdict.REVERT_AND_HALT, worklog)
            state.history.append(entry)
            if on_iteration:
                on_iteration(state.iterations_used, entry)
            logger.warning("revision %d failed to compile; reverting and halting", state.iterations_used)
            break
        new_score = reviewer(pdf, revised_tex)
        verdict = decide(state.current_score, new_score, net_mode=net_mode)
        entry = HistoryEntry(revised_tex, new_score, verdict, worklog)
        state.history.append(entry)
        if on_iteration:
            on_iteration(state.iterations_used, entry)
        if verdict is Verdict.REVERT_AND_HALT:
            break
        state.current_tex = revised_tex
        state.current_score = new_score
        worklog_history.append(worklog.as_dict())
    return state


def _feedback_json(score: ReviewScore) -> str:
    return json.dumps(
        {
            "overall": score.overall,
            "sub_axes": score.sub_axes,
            "decision": score.decision,
            **score.feedback,
        },
        indent=2,
        sort_keys=True,
    )


def build_reviser_prompt(context: dict, guidelines: str, experimental_log: str, citation_map_json: str) -> str:
    from .ingest import inject_anti_leakage

    body = prompts.render(
        "refine_agent",
        paper_tex=context["paper_tex"],
        guidelines=guidelines,
        experimental_log=experimental_log,
        worklog_json=json.dumps(context.get("worklog_history", []), indent=2),
        citation_map_json=citation_map_json,
        reviewer_feedback=context["reviewer_feedback"],
    )
    return inject_anti_leakage(body)
