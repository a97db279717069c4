"""Outline agent: prompt assembly, structured-plan parsing, and schema gates.

The outline is a single JSON object with three top-level parts: the plotting
plan, the introduction/related-work search strategy, and the per-section
writing plan. Unknown fields are preserved on the parsed object so evolving
prompts can round-trip through the run directory unchanged.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import prompts
from .errors import NoJsonFoundError, SchemaViolation
from .ingest import InputBundle, inject_anti_leakage
from .report import ValidationReport

ASPECT_RATIOS = frozenset(
    ["1:1", "1:4", "2:3", "3:2", "3:4", "4:1", "4:3", "4:5", "5:4", "9:16", "16:9", "21:9"]
)
PLOT_TYPES = frozenset(["plot", "diagram"])
DATA_SOURCES = frozenset(["idea.md", "experimental_log.md", "both"])

MIN_SEARCH_DIRECTIONS, MAX_SEARCH_DIRECTIONS = 3, 5
MIN_CLUSTERS, MAX_CLUSTERS = 2, 4

_SUBSECTION_NUMBER = re.compile(r"^\s*(\d+)\.(\d+)\b")


@dataclass(frozen=True)
class PlotSpec:
    figure_id: str
    title: str
    plot_type: str
    data_source: str
    objective: str
    aspect_ratio: str


@dataclass(frozen=True)
class MethodologyCluster:
    subsection_title: str
    methodology_cluster: str
    sota_investigation_mission: str
    limitation_hypothesis: str
    limitation_search_queries: tuple[str, ...]
    bridge_to_our_method: str


@dataclass(frozen=True)
class SearchStrategy:
    hook_hypothesis: str
    problem_gap_hypothesis: str
    search_directions: tuple[str, ...]
    related_work_overview: str
    clusters: tuple[MethodologyCluster, ...]


@dataclass(frozen=True)
class Subsection:
    subsection_title: str
    content_bullets: tuple[str, ...]
    citation_hints: tuple[str, ...]
    implicit: bool = False  # synthesized for a section that had bullets but no subsections


@dataclass(frozen=True)
class SectionPlanEntry:
    section_title: str
    subsections: tuple[Subsection, ...]


@dataclass
class Outline:
    plotting_plan: list[PlotSpec]
    strategy: SearchStrategy
    section_plan: list[SectionPlanEntry]
    raw: dict = field(default_factory=dict, compare=False)  # full object incl. unknown fields


def build_outline_prompt(bundle: InputBundle) -> str:
    """Assemble the outline agent's prompt; figures contribute nothing to it."""
    body = prompts.render(
        "outline_agent",
        cutoff_date=bundle.venue.cutoff.isoformat(),
        idea=bundle.idea,
        experimental_log=bundle.experimental_log,
        template=bundle.template,
        guidelines=bundle.guidelines,
    )
    return inject_anti_leakage(body)


def extract_json_object(text: str) -> dict:
    """Pull the first JSON object out of model output.

    Prefers a ```json fence; otherwise scans for the first balanced-brace
    object that parses.
    """
    fence = re.search(r"```(?:json)?\s*\n(.*?)```", text, re.DOTALL)
    if fence:
        try:
            obj = json.loads(fence.group(1))
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
    depth = 0
    start = None
    in_string = False
    escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0 and start is not None:
                    try:
                        obj = json.loads(text[start : i + 1])
                        if isinstance(obj, dict):
                            return obj
                    except json.JSONDecodeError:
                        start = None
    raise NoJsonFoundError("no parseable JSON object in output")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaViolation(f"{path}.{key}", "required key missing")
    return obj[key]


def _str_list(value, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise SchemaViolation(path, "expected a list of strings")
    return tuple(value)


def _parse_plot_spec(obj: dict, path: str) -> PlotSpec:
    if not isinstance(obj, dict):
        raise SchemaViolation(path, "expected an object")
    return PlotSpec(
        figure_id=str(_require(obj, "figure_id", path)),
        title=str(obj.get("title", "")),
        plot_type=str(_require(obj, "plot_type", path)),
        data_source=str(_require(obj, "data_source", path)),
        objective=str(obj.get("objective", "")),
        aspect_ratio=str(_require(obj, "aspect_ratio", path)),
    )


def _parse_strategy(obj: dict, path: str) -> SearchStrategy:
    if not isinstance(obj, dict):
        raise SchemaViolation(path, "expected an object")
    intro = _require(obj, "introduction_strategy", path)
    rw = _require(obj, "related_work_strategy", path)
    clusters = []
    for i, sub in enumerate(_require(rw, "subsections", f"{path}.related_work_strategy")):
        cpath = f"{path}.related_work_strategy.subsections[{i}]"
        clusters.append(
            MethodologyCluster(
                subsection_title=str(sub.get("subsection_title", "")),
                methodology_cluster=str(sub.get("methodology_cluster", "")),
                sota_investigation_mission=str(sub.get("sota_investigation_mission", "")),
                limitation_hypothesis=str(sub.get("limitation_hypothesis", "")),
                limitation_search_queries=_str_list(
                    sub.get("limitation_search_queries", []), f"{cpath}.limitation_search_queries"
                ),
                bridge_to_our_method=str(sub.get("bridge_to_our_method", "")),
            )
        )
    return SearchStrategy(
        hook_hypothesis=str(intro.get("hook_hypothesis", "")),
        problem_gap_hypothesis=str(intro.get("problem_gap_hypothesis", "")),
        search_directions=_str_list(
            _require(intro, "search_directions", f"{path}.introduction_strategy"),
            f"{path}.introduction_strategy.search_directions",
        ),
        related_work_overview=str(rw.get("overview", "")),
        clusters=tuple(clusters),
    )


def _parse_section_plan(items, path: str) -> list[SectionPlanEntry]:
    if not isinstance(items, list):
        raise SchemaViolation(path, "expected a list")
    entries = []
    for i, sec in enumerate(items):
        spath = f"{path}[{i}]"
        title = str(_require(sec, "section_title", spath))
        raw_subs = sec.get("subsections", [])
        subs = []
        for j, sub in enumerate(raw_subs):
            subs.append(
                Subsection(
                    subsection_title=str(_require(sub, "subsection_title", f"{spath}.subsections[{j}]")),
                    content_bullets=_str_list(
                        sub.get("content_bullets", []), f"{spath}.subsections[{j}].content_bullets"
                    ),
                    citation_hints=_str_list(
                        sub.get("citation_hints", []), f"{spath}.subsections[{j}].citation_hints"
                    ),
                )
            )
        if not subs and sec.get("content_bullets"):
            # A section may omit subsections entirely but still carry bullets;
            # fold them into one implicit subsection (flagged informational).
            subs.append(
                Subsection(
                    subsection_title=title,
                    content_bullets=_str_list(sec["content_bullets"], f"{spath}.content_bullets"),
                    citation_hints=_str_list(sec.get("citation_hints", []), f"{spath}.citation_hints"),
                    implicit=True,
                )
            )
        entries.append(SectionPlanEntry(section_title=title, subsections=tuple(subs)))
    return entries


def parse_outline(llm_output: str, *, strict: bool = True) -> Outline:
    """Map model output to an Outline; with strict=True the first schema or
    rule violation raises SchemaViolation (for the driver's retry loop)."""
    if not llm_output.strip():
        raise NoJsonFoundError("empty output")
    raw = extract_json_object(llm_output)
    outline = Outline(
        plotting_plan=[
            _parse_plot_spec(p, f"plotting_plan[{i}]")
            for i, p in enumerate(_require(raw, "plotting_plan", "$"))
        ],
        strategy=_parse_strategy(_require(raw, "intro_related_work_plan", "$"), "intro_related_work_plan"),
        section_plan=_parse_section_plan(_require(raw, "section_plan", "$"), "section_plan"),
        raw=raw,
    )
    if strict:
        rep = validate_outline(outline)
        if not rep.ok:
            first = rep.violations[0]
            raise SchemaViolation(first.path, f"{first.rule}: {first.message}")
    return outline


def serialize_outline(outline: Outline) -> str:
    """Inverse of parse_outline on valid outlines (round-trip on raw bytes)."""
    return json.dumps(outline.raw, indent=2, ensure_ascii=False) + "\n"


def subsection_number(title: str) -> tuple[int, int] | None:
    """Leading "N.M" token of a subsection title, if any."""
    m = _SUBSECTION_NUMBER.match(title)
    if not m:
        return None
    return int(m.group(1)), int(m.group(2))


def find_orphan_subsections(entries: list[SectionPlanEntry]) -> list[str]:
    """Numbered groups that contain an X.1 with no X.2 sibling.

    Titles without a leading N.M numbering are exempt from the rule.
    """
    groups: dict[int, set[int]] = {}
    for entry in entries:
        for sub in entry.subsections:
            num = subsection_number(sub.subsection_title)
            if num is not None:
                groups.setdefault(num[0], set()).add(num[1])
    return [f"{major}.1" for major, minors in sorted(groups.items()) if 1 in minors and 2 not in minors]


def validate_outline(outline: Outline) -> ValidationReport:
    """Check every prompt-mandated structural rule; violations are report
    entries, never exceptions."""
    rep = ValidationReport()
    if not outline.plotting_plan:
        rep.add("plotting_plan", "non-empty", "plotting plan is empty")
    if not outline.section_plan:
        rep.add("section_plan", "non-empty", "section plan is empty")
    elif not any("abstract" in e.section_title.lower() for e in outline.section_plan):
        rep.add("section_plan", "abstract-required", "no Abstract section in plan")

    for i, spec in enumerate(outline.plotting_plan):
        path = f"plotting_plan[{i}]"
        if spec.plot_type not in PLOT_TYPES:
            rep.add(f"{path}.plot_type", "enum", f"{spec.plot_type!r} not in {sorted(PLOT_TYPES)}")
        if spec.data_source not in DATA_SOURCES:
            rep.add(f"{path}.data_source", "enum", f"{spec.data_source!r} not in {sorted(DATA_SOURCES)}")
        if spec.aspect_ratio not in ASPECT_RATIOS:
            rep.add(f"{path}.aspect_ratio", "enum", f"{spec.aspect_ratio!r} not an allowed ratio")
        if "Figure" in spec.figure_id:
            rep.add(f"{path}.figure_id", "no-figure-word", "figure_id contains the word 'Figure'")

    n_dirs = len(outline.strategy.search_directions)
    if not MIN_SEARCH_DIRECTIONS <= n_dirs <= MAX_SEARCH_DIRECTIONS:
        rep.add(
            "intro_related_work_plan.introduction_strategy.search_directions",
            "cardinality",
            f"expected {MIN_SEARCH_DIRECTIONS}-{MAX_SEARCH_DIRECTIONS} directions, got {n_dirs}",
        )
    n_clusters = len(outline.strategy.clusters)
    if not MIN_CLUSTERS <= n_clusters <= MAX_CLUSTERS:
        rep.add(
            "intro_related_work_plan.related_work_strategy.subsections",
            "cardinality",
            f"expected {MIN_CLUSTERS}-{MAX_CLUSTERS} clusters, got {n_clusters}",
        )

    for orphan in find_orphan_subsections(outline.section_plan):
        rep.add("section_plan", "orphan-subsection", f"subsection {orphan} has no .2 sibling")

    for i, entry in enumerate(outline.section_plan):
        for sub in entry.subsections:
            if sub.implicit:
                rep.add(
                    f"section_plan[{i}]",
                    "implicit-subsection",
                    f"section {entry.section_title!r} carries bullets without subsections",
                    severity="info",
                )
    return rep
