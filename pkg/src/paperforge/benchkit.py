"""Benchmark raw-material synthesis: idea summaries and experimental logs
reverse-engineered from parsed paper markdown, anonymization enforced by a
deterministic leak detector, plus corpus statistics."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import prompts
from .errors import EmptyCorpusError, LeakPersistsError
from .providers import CompletionRequest
from .writer import extract_fenced_block
from .errors import NoBlockFoundError

logger = logging.getLogger(__name__)

SPARSE = "sparse"
DENSE = "dense"

# Leak patterns: citation commands, bracketed numeric citation clusters, URLs,
# numbered figure/table references, and document-reference phrases.
_PATTERNS: tuple[tuple[str, re.Pattern], ...] = (
    ("citation-command", re.compile(r"\\cite[a-zA-Z]*\*?\s*(?:\[[^\]]*\]\s*){0,2}\{[^}]*\}")),
    ("bracket-citation", re.compile(r"\[\d{1,3}(?:\s*[,;\u2013-]\s*\d{1,3})*\]")),
    ("url", re.compile(r"(?:https?://|ftp://|www\.)\S+", re.IGNORECASE)),
    ("figure-ref", re.compile(r"\b(?:Figure|Fig\.?|Figs\.?)\s*~?\s*\d+", re.IGNORECASE)),
    ("table-ref", re.compile(r"\b(?:Table|Tab\.?)\s*~?\s*\d+", re.IGNORECASE)),
    ("doc-ref-phrase", re.compile(r"\bas shown in\b|\bsee Section\b", re.IGNORECASE)),
)

_MATH_DELIMITERS = ("$", "\\(", "\\[", "\\begin{equation", "\\begin{align")


@dataclass(frozen=True)
class LeakViolation:
    kind: str
    span: tuple[int, int]  # byte offsets
    excerpt: str


@dataclass
class LeakReport:
    violations: list[LeakViolation] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]

    def as_dict(self) -> dict:
        return {
            "violations": [
                {"kind": v.kind, "span": list(v.span), "excerpt": v.excerpt}
                for v in self.violations
            ]
        }


@dataclass(frozen=True)
class RawMaterialSet:
    idea_sparse: str
    idea_dense: str
    experimental_log: str
    source_id: str

    def __post_init__(self):
        for name, text in (
            ("idea_sparse", self.idea_sparse),
            ("idea_dense", self.idea_dense),
            ("experimental_log", self.experimental_log),
        ):
            report = detect_leaks(text)
            if not report.clean:
                raise ValueError(f"{name} fails the leak detector: {report.kinds()}")


def detect_leaks(text: str) -> LeakReport:
    """Pattern scan for anonymization violations with byte-offset spans.

    Bare numerals are never violations; only the reference shapes above are.
    """
    data = text.encode("utf-8")
    report = LeakReport()
    found: list[LeakViolation] = []
    for kind, pattern in _PATTERNS:
        for m in pattern.finditer(text):
            start = len(text[: m.start()].encode("utf-8"))
            end = start + len(m.group(0).encode("utf-8"))
            found.append(LeakViolation(kind=kind, span=(start, end), excerpt=m.group(0)))
    del data
    found.sort(key=lambda v: (v.span[0], v.kind))
    report.violations = found
    return report


def _strip_markdown_fence(text: str) -> str:
    if "```" in text:
        try:
            return extract_fenced_block(text, "markdown")
        except NoBlockFoundError:
            return text
    return text


def contains_math(text: str) -> bool:
    return any(delim in text for delim in _MATH_DELIMITERS)


def synthesize_idea(
    markdown: str,
    density: str,
    llm: Callable[[CompletionRequest], str],
    *,
    max_retries: int = 1,
) -> str:
    """Produce the sparse or dense idea summary from parsed paper markdown.

    The output must pass the leak detector. Sparse output must carry no math
    delimiters; dense output must keep at least one equation whenever the
    source had any. One corrective retry, then LeakPersistsError.
    """
    if not markdown.strip():
        raise ValueError("source markdown is empty")
    if density not in (SPARSE, DENSE):
        raise ValueError(f"density must be sparse|dense, got {density!r}")
    template = "idea_sparse" if density == SPARSE else "idea_dense"
    base = prompts.render(template, paper_content=markdown)
    prompt = base
    problems: list[str] = []
    for attempt in range(max_retries + 1):
        text = _strip_markdown_fence(
            llm(CompletionRequest(prompt=prompt, tags={"agent": f"bench-idea-{density}"}))
        ).strip()
        problems = [f"{v.kind}: {v.excerpt!r}" for v in detect_leaks(text).violations]
        if density == SPARSE and contains_math(text):
            problems.append("sparse idea contains math delimiters")
        if density == DENSE and contains_math(markdown) and not contains_math(text):
            problems.append("dense idea dropped all equations present in the source")
        if not problems:
            return text
        prompt = base + "\n\nPREVIOUS ATTEMPT REJECTED:\n- " + "\n- ".join(problems)
    raise LeakPersistsError("; ".join(problems))


def synthesize_log(
    markdown: str,
    figure_captions: Sequence[str],
    llm: Callable[[CompletionRequest], str],
    *,
    max_retries: int = 1,
) -> str:
    """Produce the experimental log; figure/table references must be flattened
    into standalone observations."""
    if not markdown.strip():
        raise ValueError("source markdown is empty")
    captions = "\n".join(f"- {c}" for c in figure_captions) or "(none provided)"
    base = prompts.render("experimental_log", paper_content=markdown, figure_captions=captions)
    prompt = base
    problems: list[str] = []
    for attempt in range(max_retries + 1):
        text = _strip_markdown_fence(
            llm(CompletionRequest(prompt=prompt, tags={"agent": "bench-log"}))
        ).strip()
        problems = [f"{v.kind}: {v.excerpt!r}" for v in detect_leaks(text).violations]
        if not problems:
            return text
        prompt = base + "\n\nPREVIOUS ATTEMPT REJECTED:\n- " + "\n- ".join(problems)
    raise LeakPersistsError("; ".join(problems))


# --- corpus statistics ---------------------------------------------------------------


def word_count(text: str) -> int:
    return len(text.split())


def _mean_std(values: Sequence[float]) -> dict:
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n  # population variance
    return {"mean": mean, "std": math.sqrt(variance), "n": n}


def corpus_stats(
    materials: Sequence[RawMaterialSet],
    gt_meta: Sequence[dict],
) -> dict:
    """Mean and population standard deviation per corpus field.

    gt_meta rows carry citation_count, figure_count, and table_count for the
    source papers; word counts use whitespace tokenization.
    """
    if not materials or not gt_meta:
        raise EmptyCorpusError("materials and gt_meta must be non-empty")
    stats = {
        "num_figures": _mean_std([float(m["figure_count"]) for m in gt_meta]),
        "num_tables": _mean_std([float(m["table_count"]) for m in gt_meta]),
        "total_citations": _mean_std([float(m["citation_count"]) for m in gt_meta]),
        "experimental_log_words": _mean_std([word_count(m.experimental_log) for m in materials]),
        "idea_dense_words": _mean_std([word_count(m.idea_dense) for m in materials]),
        "idea_sparse_words": _mean_std([word_count(m.idea_sparse) for m in materials]),
    }
    return stats
