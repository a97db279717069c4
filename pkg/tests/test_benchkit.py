import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paperforge.benchkit import (
    DENSE,
    SPARSE,
    RawMaterialSet,
    corpus_stats,
    detect_leaks,
    synthesize_idea,
    synthesize_log,
    word_count,
)
from paperforge.errors import EmptyCorpusError, LeakPersistsError
from paperforge.providers import CompletionRequest

import oracles


# --- leak detector ---------------------------------------------------------------


def test_figure_ref_plus_phrase_two_violations():
    report = detect_leaks("as shown in Figure 2, loss drops")
    kinds = sorted(report.kinds())
    assert kinds == ["doc-ref-phrase", "figure-ref"]


def test_bare_numerals_are_clean():
    assert detect_leaks("we observe a drop of 2 points").clean


def test_each_kind_detected():
    samples = {
        "citation-command": "prior art \\citep{smith2020} shows",
        "bracket-citation": "earlier systems [3, 4] explored this",
        "url": "code at https://example.org/repo",
        "figure-ref": "Fig. 7 makes this visible",
        "table-ref": "Table 12 aggregates results",
        "doc-ref-phrase": "see Section for the derivation",
    }
    for kind, text in samples.items():
        report = detect_leaks(text)
        assert kind in report.kinds(), kind


def test_spans_are_byte_offsets():
    text = "prefix éé Figure 3 suffix"
    report = detect_leaks(text)
    assert len(report.violations) == 1
    start, end = report.violations[0].span
    assert text.encode("utf-8")[start:end].decode("utf-8") == report.violations[0].excerpt


CLEAN_SENTENCES = [
    "We train the routed model on the full corpus and report accuracy.",
    "The utilization penalty keeps every expert active through training.",
    "Latency improves with longer sequences in our profiling runs.",
    "We observe a drop of 2 points without distillation.",
    "The router consumes token representations and emits expert scores.",
    "Our analysis covers three reasoning suites and one held-out corpus.",
    "Ablations vary the number of experts between two and eight.",
    "The gating temperature anneals linearly over training.",
]

PLANTS = [
    ("citation-command", "\\cite{anchor2019}"),
    ("citation-command", "\\citet{baseline2021}"),
    ("bracket-citation", "[7]"),
    ("bracket-citation", "[12, 14]"),
    ("bracket-citation", "[3-5]"),
    ("url", "https://example.com/artifact"),
    ("url", "www.example.org/data"),
    ("figure-ref", "Figure 4"),
    ("figure-ref", "Fig. 2"),
    ("table-ref", "Table 3"),
    ("table-ref", "Tab. 1"),
    ("doc-ref-phrase", "as shown in"),
    ("doc-ref-phrase", "see Section"),
]


def build_seeded_corpus(n_docs=20, n_violations=57):
    """Clean documents with violations injected at known positions."""
    rng = random.Random(4242)
    docs = []
    manifest = []  # (doc_index, kind)
    per_doc = [n_violations // n_docs] * n_docs
    for i in range(n_violations - sum(per_doc)):
        per_doc[i] += 1
    assert sum(per_doc) == n_violations
    for d in range(n_docs):
        sentences = [rng.choice(CLEAN_SENTENCES) for _ in range(6)]
        for _ in range(per_doc[d]):
            kind, plant = PLANTS[rng.randrange(len(PLANTS))]
            position = rng.randrange(len(sentences))
            sentences.insert(position, f"planted context {plant} continues here.")
            manifest.append((d, kind))
        docs.append(" ".join(sentences))
    return docs, manifest


def test_seeded_corpus_exact_detection():
    docs, manifest = build_seeded_corpus()
    assert len(manifest) == 57
    total = 0
    per_doc_expected = {}
    for d, kind in manifest:
        per_doc_expected[d] = per_doc_expected.get(d, 0) + 1
    for d, doc in enumerate(docs):
        found = detect_leaks(doc)
        assert len(found.violations) == per_doc_expected.get(d, 0), f"doc {d}"
        total += len(found.violations)
    assert total == 57


def test_clean_corpus_zero_positives():
    rng = random.Random(777)
    for _ in range(20):
        doc = " ".join(rng.choice(CLEAN_SENTENCES) for _ in range(12))
        assert detect_leaks(doc).clean


def test_rawmaterialset_enforces_invariant():
    with pytest.raises(ValueError):
        RawMaterialSet(
            idea_sparse="clean text",
            idea_dense="see Figure 3 for details",
            experimental_log="clean log",
            source_id="p1",
        )


# --- synthesis -------------------------------------------------------------------


SOURCE_WITH_MATH = (
    "# A Paper\nThe loss is $L = x - y$ where x is the target.\n"
    "We evaluated on three suites and accuracy reached 84.3.\n"
)


def test_dense_preserves_math():
    def llm(req: CompletionRequest) -> str:
        return "## Problem Statement\nWe will minimize $L = x - y$ for targets x and predictions y."

    out = synthesize_idea(SOURCE_WITH_MATH, DENSE, llm)
    assert "$" in out


def test_sparse_must_not_contain_math_retry_then_fail():
    calls = []

    def llm(req: CompletionRequest) -> str:
        calls.append(req.prompt)
        return "We will minimize a loss $L$ over pairs."

    with pytest.raises(LeakPersistsError):
        synthesize_idea(SOURCE_WITH_MATH, SPARSE, llm)
    assert len(calls) == 2
    assert "REJECTED" in calls[1]


def test_sparse_clean_output_accepted():
    def llm(req: CompletionRequest) -> str:
        return (
            "## Problem Statement\nWe will use a loss designed to align predictions "
            "with targets, described at a whiteboard level."
        )

    out = synthesize_idea(SOURCE_WITH_MATH, SPARSE, llm)
    assert "$" not in out


def test_dense_dropping_math_retried():
    replies = iter(
        [
            "## Problem Statement\nNo equations here at all.",
            "## Problem Statement\nWe will keep $L = x - y$ with x the target and y the prediction.",
        ]
    )

    def llm(req: CompletionRequest) -> str:
        return next(replies)

    out = synthesize_idea(SOURCE_WITH_MATH, DENSE, llm)
    assert "$" in out


def test_log_flattens_table_references():
    replies = iter(
        [
            "We ran the suite. As shown in Table 1, accuracy was 84.3.",
            "We ran the suite. Accuracy was 84.3 for the dense baseline.",
        ]
    )

    def llm(req: CompletionRequest) -> str:
        return next(replies)

    out = synthesize_log("source text with a table", [], llm)
    assert detect_leaks(out).clean


def test_log_caption_context_optional():
    def llm(req: CompletionRequest) -> str:
        assert "(none provided)" in req.prompt
        return "We ran everything and recorded 12.4 ms latency."

    out = synthesize_log("source text", [], llm)
    assert out.startswith("We ran")


def test_synthesis_strips_markdown_fence():
    def llm(req: CompletionRequest) -> str:
        return "```markdown\n## Problem Statement\nFence-wrapped concept note.\n```"

    out = synthesize_idea("source", SPARSE, llm)
    assert out.startswith("## Problem Statement")


# --- corpus statistics ------------------------------------------------------------


def material(sparse_words: int, dense_words: int, log_words: int, i: int) -> RawMaterialSet:
    return RawMaterialSet(
        idea_sparse="w " * sparse_words,
        idea_dense="w " * dense_words,
        experimental_log="w " * log_words,
        source_id=f"p{i}",
    )


def test_two_point_stats():
    materials = [material(100, 100, 100, 0), material(300, 300, 300, 1)]
    meta = [{"citation_count": 10, "figure_count": 2, "table_count": 1}] * 2
    stats = corpus_stats(materials, meta)
    assert stats["idea_sparse_words"]["mean"] == 200.0
    assert stats["idea_sparse_words"]["std"] == 100.0  # population sigma


def test_single_element_sigma_zero():
    stats = corpus_stats(
        [material(50, 60, 70, 0)],
        [{"citation_count": 58, "figure_count": 5, "table_count": 4}],
    )
    assert stats["total_citations"]["std"] == 0.0
    assert stats["total_citations"]["mean"] == 58.0


def test_fifty_doc_corpus_matches_welford_oracle():
    rng = random.Random(2024)
    materials = []
    meta = []
    for i in range(50):
        materials.append(material(rng.randint(300, 900), rng.randint(700, 1500), rng.randint(1000, 2500), i))
        meta.append(
            {
                "citation_count": rng.randint(20, 90),
                "figure_count": rng.randint(2, 12),
                "table_count": rng.randint(1, 10),
            }
        )
    stats = corpus_stats(materials, meta)
    sparse_counts = [float(word_count(m.idea_sparse)) for m in materials]
    mean, std = oracles.welford_stats(sparse_counts)
    assert abs(stats["idea_sparse_words"]["mean"] - mean) < 1e-9
    assert abs(stats["idea_sparse_words"]["std"] - std) < 1e-9
    cites = [float(m["citation_count"]) for m in meta]
    mean_c, std_c = oracles.welford_stats(cites)
    assert abs(stats["total_citations"]["mean"] - mean_c) < 1e-9
    assert abs(stats["total_citations"]["std"] - std_c) < 1e-9


@given(st.permutations(list(range(8))))
@settings(max_examples=50, deadline=None)
def test_corpus_stats_permutation_invariant(order):
    materials = [material(100 + 13 * i, 200 + 7 * i, 300 + 11 * i, i) for i in range(8)]
    meta = [{"citation_count": 10 + i, "figure_count": i, "table_count": 2 * i} for i in range(8)]
    base = corpus_stats(materials, meta)
    shuffled = corpus_stats([materials[i] for i in order], [meta[i] for i in order])
    for field in base:
        assert shuffled[field]["mean"] == pytest.approx(base[field]["mean"])
        assert shuffled[field]["std"] == pytest.approx(base[field]["std"])


def test_empty_corpus_raises():
    with pytest.raises(EmptyCorpusError):
        corpus_stats([], [])
