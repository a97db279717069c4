"""Literature review stage: discovery, verification, registry, and drafting.

Candidate papers come back from search-grounded model calls run under a
bounded worker pool; each candidate is then verified against the scholarly
index strictly sequentially (the index runs behind a 1 rps limiter). A verified
record enters the citation registry only if it fuzzy-matches the candidate
title, carries an abstract, and strictly predates the venue cutoff.
"""

from __future__ import annotations

import json
import logging
import math
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from datetime import date
from enum import Enum
from typing import Callable, Iterable, Sequence

from . import prompts
from .errors import (
    CitationClosureViolation,
    IndexLookupError,
    ProviderFailure,
    SectionTamperDetected,
)
from .ingest import InputBundle, inject_anti_leakage
from .outline import SearchStrategy
from .providers import CompletionRequest, IndexRecord

logger = logging.getLogger(__name__)

MATCH_THRESHOLD = 70  # ratio must strictly exceed this to accept
YEAR_BONUS = 5
DISCOVERY_WORKERS = 10
MIN_CITE_FRACTION = 0.9


# --- candidate and registry types ------------------------------------------------


@dataclass(frozen=True)
class CandidatePaper:
    title: str
    year: int | None = None
    claimed_venue: str | None = None
    discovery_query: str = ""


@dataclass(frozen=True)
class VerifiedPaper:
    entity_id: str
    title: str
    authors: tuple[str, ...]
    year: int
    venue: str | None
    abstract: str
    citation_count: int
    publication_date: date | None = None
    bib_key: str = ""


class RejectReason(Enum):
    NO_MATCH = "no_match"
    NO_ABSTRACT = "no_abstract"
    PAST_CUTOFF = "past_cutoff"
    INDEX_ERROR = "index_error"


@dataclass(frozen=True)
class Rejection:
    candidate: CandidatePaper
    reason: RejectReason
    detail: str = ""


class CitationRegistry:
    """Verified, deduplicated literature records keyed by bibliography key.

    Single-writer: fill it from one thread, then seal(); sealed registries are
    safe to read from any thread.
    """

    def __init__(self, cutoff: date):
        self.cutoff = cutoff
        self.entries: dict[str, VerifiedPaper] = {}
        self._entity_ids: set[str] = set()
        self._sealed = False

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, bib_key: str) -> bool:
        return bib_key in self.entries

    def keys(self) -> list[str]:
        return sorted(self.entries)

    def add(self, paper: VerifiedPaper) -> VerifiedPaper:
        if self._sealed:
            raise RuntimeError("registry is sealed")
        if not paper.abstract.strip():
            raise ValueError(f"abstract required: {paper.title!r}")
        if effective_date(paper.publication_date, paper.year, self.cutoff) >= self.cutoff:
            raise ValueError(f"record does not predate cutoff: {paper.title!r}")
        if paper.entity_id in self._entity_ids:
            raise ValueError(f"duplicate entity_id: {paper.entity_id!r}")
        key = paper.bib_key or make_bib_key(paper, set(self.entries))
        if key in self.entries:
            raise ValueError(f"duplicate bib_key: {key!r}")
        stored = replace(paper, bib_key=key)
        self.entries[key] = stored
        self._entity_ids.add(paper.entity_id)
        return stored

    def seal(self) -> "CitationRegistry":
        self._sealed = True
        return self

    def citation_map(self) -> dict:
        return {
            key: {
                "entity_id": p.entity_id,
                "title": p.title,
                "authors": list(p.authors),
                "year": p.year,
                "venue": p.venue,
                "abstract": p.abstract,
                "citation_count": p.citation_count,
            }
            for key, p in sorted(self.entries.items())
        }


# --- title normalization and fuzzy matching --------------------------------------

_WS = re.compile(r"\s+")

_TRANSLITERATION = {
    "ß": "ss", "ẞ": "ss", "æ": "ae", "Æ": "ae", "œ": "oe", "Œ": "oe",
    "ø": "o", "Ø": "o", "ł": "l", "Ł": "l", "đ": "d", "Đ": "d",
    "þ": "th", "Þ": "th", "ð": "d", "Ð": "d", "ı": "i",
}


def ascii_fold(text: str) -> str:
    """Best-effort Latin transliteration to [a-z0-9] (plus spaces)."""
    out = []
    for ch in text:
        if ch in _TRANSLITERATION:
            out.append(_TRANSLITERATION[ch])
            continue
        decomposed = unicodedata.normalize("NFKD", ch)
        stripped = "".join(c for c in decomposed if not unicodedata.combining(c))
        out.append(stripped)
    return "".join(out)


def normalize_title(title: str) -> str:
    """Case-fold, strip punctuation, collapse whitespace. Idempotent."""
    folded = title.casefold()
    cleaned = "".join(ch if ch.isalnum() else " " for ch in folded)
    return _WS.sub(" ", cleaned).strip()


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance, iterative two-row DP."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def title_ratio(a: str, b: str) -> int:
    """round(100 * (1 - editdist/maxlen)) over normalized titles."""
    na, nb = normalize_title(a), normalize_title(b)
    if not na and not nb:
        return 100
    longest = max(len(na), len(nb))
    if longest == 0:
        return 100
    return round(100 * (1 - edit_distance(na, nb) / longest))


def match_score(candidate: CandidatePaper, record: IndexRecord) -> int:
    """Fuzzy title ratio plus a small bonus for exact year alignment.

    A match is accepted downstream iff the returned score strictly exceeds
    MATCH_THRESHOLD; the bonus may promote a near-threshold title pair whose
    years agree.
    """
    score = title_ratio(candidate.title, record.title)
    if candidate.year is not None and record.year is not None and candidate.year == record.year:
        score += YEAR_BONUS
    return score


def effective_date(publication_date: date | None, year: int | None, cutoff: date) -> date:
    """Date used for the cutoff comparison.

    Year-only records resolve to July 1 when the year precedes the cutoff year
    and are pushed past the cutoff otherwise — conservative toward rejection.
    """
    if publication_date is not None:
        return publication_date
    if year is None:
        return date(9999, 1, 1)
    if year >= cutoff.year:
        return max(date(year, 12, 31), cutoff)
    return date(year, 7, 1)


# --- discovery --------------------------------------------------------------------


def strategy_queries(strategy: SearchStrategy) -> list[tuple[str, str]]:
    """(query, context) pairs: one per search direction and per cluster query."""
    pairs = [(q, "Introduction macro-level context search.") for q in strategy.search_directions]
    for cluster in strategy.clusters:
        context = (
            f"Methodology cluster: {cluster.methodology_cluster}. "
            f"Mission: {cluster.sota_investigation_mission} "
            f"Limitation hypothesis: {cluster.limitation_hypothesis}"
        )
        pairs.extend((q, context) for q in cluster.limitation_search_queries)
    return pairs


def _parse_candidates(text: str, query: str) -> list[CandidatePaper]:
    fence = re.search(r"```(?:json)?\s*\n(.*?)```", text, re.DOTALL)
    payload = fence.group(1) if fence else text
    try:
        items = json.loads(payload)
    except json.JSONDecodeError:
        bracket = re.search(r"\[.*\]", payload, re.DOTALL)
        if not bracket:
            return []
        try:
            items = json.loads(bracket.group(0))
        except json.JSONDecodeError:
            return []
    if not isinstance(items, list):
        return []
    out = []
    for item in items:
        if not isinstance(item, dict):
            continue
        title = str(item.get("title", "")).strip()
        if not normalize_title(title):
            continue
        year = item.get("year")
        out.append(
            CandidatePaper(
                title=title,
                year=int(year) if isinstance(year, (int, float)) else None,
                claimed_venue=item.get("venue") or None,
                discovery_query=query,
            )
        )
    return out


def discover_candidates(
    strategy: SearchStrategy,
    cutoff: date,
    grounded: Callable[[CompletionRequest], str],
    *,
    max_workers: int = DISCOVERY_WORKERS,
    max_results_per_query: int = 8,
) -> list[CandidatePaper]:
    """One grounded call per query under a bounded pool; failures skip the query.

    The pooled result is sorted so downstream verification order never depends
    on worker scheduling.
    """
    pairs = strategy_queries(strategy)
    if not pairs:
        return []
    candidates: list[CandidatePaper] = []

    def run(pair: tuple[str, str]) -> list[CandidatePaper]:
        query, context = pair
        prompt = prompts.render(
            "discovery",
            query=query,
            context=context,
            cutoff_date=cutoff.isoformat(),
            max_results=max_results_per_query,
        )
        req = CompletionRequest(prompt=inject_anti_leakage(prompt), tags={"agent": "literature-discovery"})
        return _parse_candidates(grounded(req), query)

    with ThreadPoolExecutor(max_workers=min(max_workers, len(pairs))) as pool:
        futures = {pool.submit(run, pair): pair for pair in pairs}
        for future in as_completed(futures):
            query = futures[future][0]
            try:
                candidates.extend(future.result())
            except ProviderFailure as exc:
                logger.warning("discovery query skipped (%s): %s", exc.kind, query)
    candidates.sort(key=lambda c: (normalize_title(c.title), c.year or 0, c.discovery_query))
    return candidates


def dedupe_candidates(candidates: Sequence[CandidatePaper]) -> list[CandidatePaper]:
    """Collapse by normalized title before paying the 1 rps verification cost."""
    seen: set[str] = set()
    out = []
    for cand in candidates:
        key = normalize_title(cand.title)
        if key not in seen:
            seen.add(key)
            out.append(cand)
    return out


# --- verification ------------------------------------------------------------------


def verify_candidate(
    candidate: CandidatePaper,
    cutoff: date,
    index_search: Callable[[str], list[IndexRecord]],
) -> VerifiedPaper | Rejection:
    """Resolve a candidate against the scholarly index.

    Acceptance gates, in order: best fuzzy match must score > 70, must carry an
    abstract, and must strictly predate the cutoff.
    """
    try:
        records = index_search(candidate.title)
    except IndexLookupError as exc:
        return Rejection(candidate, RejectReason.INDEX_ERROR, str(exc))
    best: IndexRecord | None = None
    best_score = -1
    for record in records:
        score = match_score(candidate, record)
        if score > best_score:
            best, best_score = record, score
    if best is None or best_score <= MATCH_THRESHOLD:
        return Rejection(candidate, RejectReason.NO_MATCH, f"best score {max(best_score, 0)}")
    if not (best.abstract or "").strip():
        return Rejection(candidate, RejectReason.NO_ABSTRACT, best.entity_id)
    year = best.year if best.year is not None else (candidate.year or 0)
    if effective_date(best.publication_date, best.year, cutoff) >= cutoff:
        return Rejection(candidate, RejectReason.PAST_CUTOFF, f"{best.publication_date or best.year}")
    return VerifiedPaper(
        entity_id=best.entity_id,
        title=best.title,
        authors=tuple(best.authors),
        year=year,
        venue=best.venue,
        abstract=best.abstract or "",
        citation_count=best.citation_count or 0,
        publication_date=best.publication_date,
    )


def dedupe(papers: Sequence[VerifiedPaper]) -> list[VerifiedPaper]:
    """Keep the first occurrence per entity_id, preserving first-seen order."""
    seen: set[str] = set()
    out = []
    for paper in papers:
        if paper.entity_id not in seen:
            seen.add(paper.entity_id)
            out.append(paper)
    return out


def build_registry(papers: Iterable[VerifiedPaper], cutoff: date) -> CitationRegistry:
    registry = CitationRegistry(cutoff)
    for paper in dedupe(list(papers)):
        registry.add(paper)
    return registry.seal()


# --- bibliography -------------------------------------------------------------------

_STOPWORDS = frozenset(
    "a an the on of for and or in with to from into via towards toward at by is are".split()
)


def _family_name(author: str) -> str:
    author = author.strip()
    if "," in author:
        return author.split(",", 1)[0].strip()
    parts = author.split()
    return parts[-1] if parts else ""


def _first_significant_word(title: str) -> str:
    for word in normalize_title(ascii_fold(title)).split():
        if word not in _STOPWORDS and not word.isdigit():
            return word
    return "paper"


def make_bib_key(paper: VerifiedPaper, taken: set[str]) -> str:
    """``<family><year><first-title-word>`` in [a-z0-9]+, suffixing b, c, ... on
    collision."""
    family = _family_name(paper.authors[0]) if paper.authors else "anon"
    family_ascii = re.sub(r"[^a-z0-9]", "", ascii_fold(family).casefold()) or "anon"
    base = f"{family_ascii}{paper.year}{_first_significant_word(paper.title)}"
    key = base
    suffix = ord("b")
    while key in taken:
        key = base + chr(suffix)
        suffix += 1
    return key


_BIBTEX_ESCAPES = {"&": r"\&", "%": r"\%", "#": r"\#", "_": r"\_", "$": r"\$"}


def escape_bibtex(value: str) -> str:
    out = []
    for i, ch in enumerate(value):
        if ch in _BIBTEX_ESCAPES and (i == 0 or value[i - 1] != "\\"):
            out.append(_BIBTEX_ESCAPES[ch])
        else:
            out.append(ch)
    return "".join(out)


def _entry_type(paper: VerifiedPaper) -> str:
    venue = (paper.venue or "").lower()
    if not venue:
        return "misc"
    if "arxiv" in venue or "journal" in venue or "transactions" in venue:
        return "article"
    return "inproceedings"


def render_bibtex(registry: CitationRegistry) -> str:
    """Emit one entry per record, key-sorted for deterministic output."""
    lines = ["% Auto-generated bibliography; one entry per verified registry record."]
    for key in sorted(registry.entries):
        paper = registry.entries[key]
        entry_type = _entry_type(paper)
        fields = [("title", escape_bibtex(paper.title))]
        if paper.authors:
            fields.append(("author", escape_bibtex(" and ".join(paper.authors))))
        fields.append(("year", str(paper.year)))
        if paper.venue:
            venue_field = "journal" if entry_type == "article" else "booktitle"
            fields.append((venue_field, escape_bibtex(paper.venue)))
        body = ",\n".join(f"  {name} = {{{value}}}" for name, value in fields)
        lines.append(f"@{entry_type}{{{key},\n{body}\n}}")
    return "\n\n".join(lines) + "\n"


# --- citation usage ------------------------------------------------------------------

_CITE_COMMAND = re.compile(r"\\cite[a-zA-Z]*\*?\s*(?:\[[^\]]*\]\s*){0,2}\{([^}]*)\}")


def cited_keys(tex: str) -> list[str]:
    keys: list[str] = []
    for match in _CITE_COMMAND.finditer(tex):
        keys.extend(k.strip() for k in match.group(1).split(",") if k.strip())
    return keys


@dataclass(frozen=True)
class CitationUsage:
    fraction: float
    unused: tuple[str, ...]
    unknown: tuple[str, ...]
    cited: tuple[str, ...]


def citation_usage(tex: str, registry: CitationRegistry) -> CitationUsage:
    """Fraction of the registry actually cited, plus unused and unknown keys.

    An empty registry is vacuously fully used (fraction 1.0).
    """
    cited = set(cited_keys(tex))
    known = set(registry.entries)
    used = cited & known
    fraction = len(used) / len(known) if known else 1.0
    return CitationUsage(
        fraction=fraction,
        unused=tuple(sorted(known - cited)),
        unknown=tuple(sorted(cited - known)),
        cited=tuple(sorted(used)),
    )


def min_cite_count(registry_size: int) -> int:
    return math.ceil(MIN_CITE_FRACTION * registry_size)


# --- section slots and drafting -------------------------------------------------------


def find_section_body(tex: str, section_title: str) -> tuple[int, int]:
    """Byte span of a section's body: end of its \\section line to the next
    sectioning/bibliography/appendix command (or \\end{document})."""
    pattern = re.compile(r"\\section\*?\{" + re.escape(section_title) + r"\}[^\n]*\n?")
    m = pattern.search(tex)
    if not m:
        raise ValueError(f"section not found: {section_title!r}")
    start = m.end()
    terminator = re.compile(r"\\section\*?\{|\\bibliography\{|\\bibliographystyle\{|\\appendix\b|\\end\{document\}")
    t = terminator.search(tex, start)
    end = t.start() if t else len(tex)
    return start, end


def splice_sections(tex: str, bodies: dict[str, str]) -> str:
    """Replace the bodies of the named sections, leaving all other bytes alone."""
    spans = sorted(
        ((find_section_body(tex, title), title) for title in bodies),
        key=lambda item: item[0][0],
    )
    out = []
    cursor = 0
    for (start, end), title in spans:
        out.append(tex[cursor:start])
        body = bodies[title].rstrip("\n")
        out.append(body + "\n\n" if body else "")
        cursor = end
    out.append(tex[cursor:])
    return "".join(out)


def check_slot_integrity(original: str, filled: str, section_titles: Sequence[str]) -> None:
    """Raise SectionTamperDetected unless all bytes outside the named section
    bodies are identical between original and filled."""
    orig_spans = sorted(find_section_body(original, t) for t in section_titles)
    try:
        new_spans = sorted(find_section_body(filled, t) for t in section_titles)
    except ValueError as exc:
        raise SectionTamperDetected(str(exc)) from exc
    orig_parts = _outside_parts(original, orig_spans)
    new_parts = _outside_parts(filled, new_spans)
    if orig_parts != new_parts:
        raise SectionTamperDetected("bytes outside the writable sections changed")


def _outside_parts(text: str, spans: list[tuple[int, int]]) -> list[str]:
    parts = []
    cursor = 0
    for start, end in spans:
        parts.append(text[cursor:start])
        cursor = end
    parts.append(text[cursor:])
    return parts


LIT_SECTIONS = ("Introduction", "Related Work")


def draft_lit_sections(
    bundle: InputBundle,
    registry: CitationRegistry,
    partial_tex: str,
    llm: Callable[[CompletionRequest], str],
    *,
    strategy: SearchStrategy | None = None,
    plan_json: str = "",
    max_retries: int = 2,
) -> str:
    """Fill the Introduction and Related Work slots under citation closure.

    The draft must cite at least 90% of the registry, cite nothing outside it,
    and leave every byte outside the two sections untouched. Violations are fed
    back to the model for up to ``max_retries`` corrective attempts.
    """
    if len(registry) == 0:
        raise ValueError("registry must be non-empty")
    from .writer import extract_fenced_block  # local import to avoid a cycle

    collected = "\n\n".join(
        f"[{key}] {p.title} ({p.year}). {p.abstract}" for key, p in sorted(registry.entries.items())
    )
    plan_payload = plan_json or (json.dumps(_strategy_dict(strategy), indent=2) if strategy else "{}")
    base_prompt = prompts.render(
        "lit_agent",
        paper_count=len(registry),
        min_cite_paper_count=min_cite_count(len(registry)),
        cutoff_date=bundle.venue.cutoff.isoformat(),
        plan_json=plan_payload,
        idea=bundle.idea,
        experimental_log=bundle.experimental_log,
        citation_checklist=", ".join(sorted(registry.entries)),
        collected_papers=collected,
        template_tex=partial_tex,
    )
    prompt = inject_anti_leakage(base_prompt)
    failure: Exception | None = None
    for attempt in range(max_retries + 1):
        text = llm(CompletionRequest(prompt=prompt, tags={"agent": "literature-drafting"}))
        tex = extract_fenced_block(text, "latex")
        try:
            check_slot_integrity(partial_tex, tex, LIT_SECTIONS)
        except SectionTamperDetected as exc:
            failure = exc
            prompt = inject_anti_leakage(
                base_prompt + f"\n\nPREVIOUS ATTEMPT REJECTED: {exc}. "
                "Only the Introduction and Related Work bodies may change."
            )
            continue
        usage = citation_usage(tex, registry)
        if usage.unknown or usage.fraction < MIN_CITE_FRACTION:
            failure = CitationClosureViolation(
                f"cited fraction {usage.fraction:.2f}, unknown keys: {list(usage.unknown)}"
            )
            prompt = inject_anti_leakage(
                base_prompt + f"\n\nPREVIOUS ATTEMPT REJECTED: {failure}. "
                f"Cite at least {min_cite_count(len(registry))} of the given keys and no others."
            )
            continue
        return tex
    raise failure  # type: ignore[misc]


def _strategy_dict(strategy: SearchStrategy) -> dict:
    return {
        "introduction_strategy": {
            "hook_hypothesis": strategy.hook_hypothesis,
            "problem_gap_hypothesis": strategy.problem_gap_hypothesis,
            "search_directions": list(strategy.search_directions),
        },
        "related_work_strategy": {
            "overview": strategy.related_work_overview,
            "subsections": [
                {
                    "subsection_title": c.subsection_title,
                    "methodology_cluster": c.methodology_cluster,
                    "sota_investigation_mission": c.sota_investigation_mission,
                    "limitation_hypothesis": c.limitation_hypothesis,
                    "limitation_search_queries": list(c.limitation_search_queries),
                    "bridge_to_our_method": c.bridge_to_our_method,
                }
                for c in strategy.clusters
            ],
        },
    }
