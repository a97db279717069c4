import json

import pytest

from paperforge.errors import AxisMismatchError, MissingBlockError, SchemaViolation
from paperforge.refine import (
    NET_MODE_COUNT,
    NET_MODE_MIN,
    NET_MODE_SUM,
    RefinementState,
    ReviewScore,
    Verdict,
    decide,
    parse_refinement_output,
    parse_review_json,
    refine_loop,
)

AXES = ("clarity", "soundness", "presentation")


def score(overall: float, deltas=(0.0, 0.0, 0.0), base=3.0) -> ReviewScore:
    return ReviewScore(
        overall=overall,
        sub_axes={axis: base + d for axis, d in zip(AXES, deltas)},
    )


# --- gate ------------------------------------------------------------------------


def test_overall_increase_accepts_regardless_of_axes():
    assert decide(score(5.0), score(6.0, (-1, -1, -1))) is Verdict.ACCEPT


def test_tie_with_net_zero_accepts():
    assert decide(score(5.0), score(5.0, (1, -1, 0))) is Verdict.ACCEPT


def test_tie_with_negative_net_reverts():
    assert decide(score(5.0), score(5.0, (0, -1, 0))) is Verdict.REVERT_AND_HALT


def test_overall_decrease_dominates_axis_gains():
    assert decide(score(5.0), score(4.9, (1, 1, 1))) is Verdict.REVERT_AND_HALT


def test_nine_cell_truth_table():
    cases = {
        (1, 1): Verdict.ACCEPT, (1, 0): Verdict.ACCEPT, (1, -1): Verdict.ACCEPT,
        (0, 1): Verdict.ACCEPT, (0, 0): Verdict.ACCEPT, (0, -1): Verdict.REVERT_AND_HALT,
        (-1, 1): Verdict.REVERT_AND_HALT, (-1, 0): Verdict.REVERT_AND_HALT,
        (-1, -1): Verdict.REVERT_AND_HALT,
    }
    for (d_overall, net_sign), expected in cases.items():
        deltas = {1: (1, 1, 1), 0: (1, -1, 0), -1: (0, -1, 0)}[net_sign]
        got = decide(score(5.0), score(5.0 + d_overall, deltas))
        assert got is expected, (d_overall, net_sign)


def test_axis_mismatch_raises():
    a = ReviewScore(overall=5, sub_axes={"x": 1})
    b = ReviewScore(overall=5, sub_axes={"y": 1})
    with pytest.raises(AxisMismatchError):
        decide(a, b)


def test_net_mode_variants():
    prev = score(5.0)
    new = score(5.0, (2, -1, -0.5))  # sum=0.5, count=1-2=-1, min=-1
    assert decide(prev, new, net_mode=NET_MODE_SUM) is Verdict.ACCEPT
    assert decide(prev, new, net_mode=NET_MODE_COUNT) is Verdict.REVERT_AND_HALT
    assert decide(prev, new, net_mode=NET_MODE_MIN) is Verdict.REVERT_AND_HALT


# --- output parsing -----------------------------------------------------------------


def two_block_reply(reversed_order=False, drop_key=None) -> str:
    worklog = {
        "addressed_weaknesses": ["w"],
        "integrated_answers": [],
        "actions_taken": ["a"],
    }
    if drop_key:
        worklog.pop(drop_key)
    json_block = "```json\n" + json.dumps(worklog) + "\n```"
    latex_block = "```latex\n\\documentclass{article}\n```"
    blocks = [latex_block, json_block] if reversed_order else [json_block, latex_block]
    return "\n\n".join(blocks)


def test_parse_two_blocks():
    worklog, tex = parse_refinement_output(two_block_reply())
    assert worklog.addressed_weaknesses == ("w",)
    assert worklog.integrated_answers == ()
    assert tex.startswith("\\documentclass")


def test_reversed_blocks_strict_raises_lenient_reorders():
    with pytest.raises(MissingBlockError):
        parse_refinement_output(two_block_reply(reversed_order=True))
    worklog, tex = parse_refinement_output(two_block_reply(reversed_order=True), lenient=True)
    assert worklog.actions_taken == ("a",)
    assert tex.startswith("\\documentclass")


def test_missing_worklog_key_names_it():
    with pytest.raises(SchemaViolation) as exc:
        parse_refinement_output(two_block_reply(drop_key="integrated_answers"))
    assert "integrated_answers" in str(exc.value)


def test_missing_blocks():
    with pytest.raises(MissingBlockError):
        parse_refinement_output("```latex\nX\n```")
    with pytest.raises(MissingBlockError):
        parse_refinement_output('```json\n{"addressed_weaknesses": [], "integrated_answers": [], "actions_taken": []}\n```')


def test_parse_review_json():
    payload = {
        "sub_axes": {"clarity": 3, "soundness": 2},
        "overall": 6,
        "decision": "accept",
        "feedback": {"strengths": ["s"], "weaknesses": ["w"], "questions": []},
    }
    review = parse_review_json("```json\n" + json.dumps(payload) + "\n```")
    assert review.overall == 6.0
    assert review.sub_axes == {"clarity": 3.0, "soundness": 2.0}
    assert review.decision == "accept"


# --- the loop -----------------------------------------------------------------------


class ScriptedReviewer:
    """Plays back a fixed score sequence; counts calls."""

    def __init__(self, scores):
        self.scores = list(scores)
        self.calls = 0

    def __call__(self, pdf: bytes, tex: str) -> ReviewScore:
        self.calls += 1
        return self.scores.pop(0)


def reviser_reply(marker: int) -> str:
    worklog = {
        "addressed_weaknesses": [f"pass {marker}"],
        "integrated_answers": [],
        "actions_taken": [f"edit {marker}"],
    }
    return (
        "```json\n" + json.dumps(worklog) + "\n```\n\n"
        "```latex\ndraft version " + str(marker) + "\n```"
    )


def make_reviser():
    counter = {"n": 0}

    def reviser(context: dict) -> str:
        counter["n"] += 1
        return reviser_reply(counter["n"])

    return reviser


def ok_compiler(tex: str):
    return True, b"%PDF-stub"


def test_monotone_sequence_uses_full_budget():
    # 4 -> 5 -> 6 -> 6 with net +1: three accepted revisions.
    reviewer = ScriptedReviewer(
        [score(4.0), score(5.0), score(6.0), score(6.0, (1, 0, 0))]
    )
    state = RefinementState(current_tex="draft version 0", limit=3)
    state = refine_loop(state, reviewer, make_reviser(), ok_compiler)
    assert state.iterations_used == 3
    assert len(state.history) == 3
    assert all(h.verdict is Verdict.ACCEPT for h in state.history)
    assert state.current_score.overall == 6.0
    assert state.current_tex == "draft version 3"
    # replaying decide over the score sequence agrees with the loop's verdicts
    seq = [score(4.0), score(5.0), score(6.0), score(6.0, (1, 0, 0))]
    replayed = [decide(a, b) for a, b in zip(seq, seq[1:])]
    assert [h.verdict for h in state.history] == replayed


def test_first_step_decrease_reverts_and_halts():
    reviewer = ScriptedReviewer([score(4.0), score(3.0)])
    state = RefinementState(current_tex="draft version 0", limit=3)
    state = refine_loop(state, reviewer, make_reviser(), ok_compiler)
    assert len(state.history) == 1
    assert state.history[0].verdict is Verdict.REVERT_AND_HALT
    assert state.current_tex == "draft version 0"  # reverted
    assert state.current_score.overall == 4.0
    assert reviewer.calls == 2
    assert reviewer.scores == []  # no further reviewer calls after the halt


def test_limit_zero_no_calls_state_unchanged():
    reviewer = ScriptedReviewer([])
    state = RefinementState(current_tex="untouched", limit=0)
    out = refine_loop(state, reviewer, make_reviser(), ok_compiler)
    assert out.current_tex == "untouched"
    assert out.current_score is None
    assert out.history == []
    assert reviewer.calls == 0


def test_final_never_below_initial():
    reviewer = ScriptedReviewer([score(4.0), score(6.0), score(2.0)])
    state = RefinementState(current_tex="draft version 0", limit=3)
    state = refine_loop(state, reviewer, make_reviser(), ok_compiler)
    assert state.current_score.overall >= 4.0
    assert state.current_tex == "draft version 1"


def test_compile_failure_counts_as_revert_and_halt():
    reviewer = ScriptedReviewer([score(4.0)])

    def bad_compiler(tex: str):
        return ("version 0" in tex), b"%PDF-stub"

    state = RefinementState(current_tex="draft version 0", limit=3)
    state = refine_loop(state, reviewer, make_reviser(), bad_compiler)
    assert state.current_tex == "draft version 0"
    assert len(state.history) == 1
    assert state.history[0].verdict is Verdict.REVERT_AND_HALT
    assert reviewer.calls == 1  # only the initial review; revision never re-reviewed


def test_history_bounded_by_limit_plus_one():
    reviewer = ScriptedReviewer([score(float(i)) for i in range(4, 10)])
    state = RefinementState(current_tex="draft version 0", limit=4)
    state = refine_loop(state, reviewer, make_reviser(), ok_compiler)
    assert len(state.history) <= state.limit + 1
