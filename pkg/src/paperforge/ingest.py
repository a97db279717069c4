"""Input-bundle loading, venue profiles, and the knowledge-isolation preamble.

The writing pipeline consumes a directory of pre-writing materials: the idea
summary, the experimental log, the venue's LaTeX template, the venue
guidelines, and an optional ``figures/`` directory. This module validates that
layout, attaches the venue configuration, and prepends the knowledge-isolation
preamble that every generation prompt must carry.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from datetime import date
from importlib import resources
from pathlib import Path

from . import prompts
from .errors import EmptyDocumentError, MissingFileError, UnknownVenueError

logger = logging.getLogger(__name__)

#: Marker line prepended by inject_anti_leakage; HTML-comment style so it never
#: renders in a prompt's visible text. Its presence makes injection idempotent.
ISOLATION_SENTINEL = "<!-- strict-knowledge-isolation -->"

#: Separator between the preamble and the wrapped prompt.
_SEPARATOR = "\n\n---\n\n"

FIGURE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".pdf", ".svg", ".eps"}

REQUIRED_FILES = (
    "idea.md",
    "experimental_log.md",
    "template.tex",
    "conference_guidelines.md",
)


@dataclass(frozen=True)
class VenueProfile:
    venue_id: str
    cutoff: date  # first day of the stated cutoff month
    page_limit: int
    avg_citation_count: float
    column_layout: str  # "single" | "double"

    def __post_init__(self):
        if self.avg_citation_count <= 0:
            raise ValueError("avg_citation_count must be > 0")
        if self.column_layout not in ("single", "double"):
            raise ValueError(f"column_layout must be single|double, got {self.column_layout!r}")


@dataclass(frozen=True)
class FigureAsset:
    path: Path
    figure_id: str
    caption: str | None = None


@dataclass(frozen=True)
class InputBundle:
    idea: str
    experimental_log: str
    template: str
    guidelines: str
    figures: tuple[FigureAsset, ...]
    venue: VenueProfile

    def __post_init__(self):
        for name, text in (
            ("idea.md", self.idea),
            ("experimental_log.md", self.experimental_log),
            ("template.tex", self.template),
            ("conference_guidelines.md", self.guidelines),
        ):
            if not text.strip():
                raise EmptyDocumentError(name)
        seen: set[str] = set()
        for fig in self.figures:
            if "Figure" in fig.figure_id:
                raise ValueError(f"figure_id must not contain 'Figure': {fig.figure_id!r}")
            if fig.figure_id in seen:
                raise ValueError(f"duplicate figure_id: {fig.figure_id!r}")
            seen.add(fig.figure_id)


def _load_venue_registry(registry_path: Path | None = None) -> dict:
    if registry_path is not None:
        return json.loads(Path(registry_path).read_text(encoding="utf-8"))
    data = resources.files("paperforge").joinpath("data/venues.json").read_text(encoding="utf-8")
    return json.loads(data)


def _parse_cutoff(value: str) -> date:
    """Resolve a "YYYY-MM" cutoff to the first day of that month.

    Times of day are never compared; the strict boundary is the calendar day
    itself (interpreted as 00:00 UTC).
    """
    year_s, _, month_s = value.partition("-")
    return date(int(year_s), int(month_s), 1)


def venue_profile(venue_id: str, registry_path: Path | None = None) -> VenueProfile:
    """Look up a venue's cutoff, page limit, citation baseline, and layout."""
    registry = _load_venue_registry(registry_path)
    if venue_id not in registry:
        raise UnknownVenueError(venue_id)
    entry = registry[venue_id]
    return VenueProfile(
        venue_id=venue_id,
        cutoff=_parse_cutoff(entry["cutoff"]),
        page_limit=int(entry["page_limit"]),
        avg_citation_count=float(entry["avg_citation_count"]),
        column_layout=entry["columns"],
    )


def _figure_id_from_name(name: str) -> str:
    stem = Path(name).stem
    # The id must never contain the literal word "Figure"; filenames often do.
    return stem.replace("Figure", "fig").replace(" ", "_")


def load_figures(figures_dir: Path) -> tuple[FigureAsset, ...]:
    if not figures_dir.is_dir():
        return ()
    captions: dict[str, str] = {}
    captions_file = figures_dir / "captions.json"
    if captions_file.is_file():
        captions = json.loads(captions_file.read_text(encoding="utf-8"))
    assets = []
    for path in sorted(figures_dir.iterdir()):
        if path.suffix.lower() not in FIGURE_EXTENSIONS:
            continue
        assets.append(
            FigureAsset(
                path=path,
                figure_id=_figure_id_from_name(path.name),
                caption=captions.get(path.name),
            )
        )
    return tuple(assets)


def load_bundle(
    root: Path | str,
    venue: str,
    *,
    registry_path: Path | None = None,
    cutoff_override: date | None = None,
) -> InputBundle:
    """Load and validate the pre-writing materials under ``root``.

    A missing ``figures/`` directory yields an empty figure list, which switches
    the downstream plotting stage to autonomous generation.
    """
    root = Path(root)
    texts = {}
    for name in REQUIRED_FILES:
        path = root / name
        if not path.is_file():
            raise MissingFileError(name)
        texts[name] = path.read_text(encoding="utf-8")
    profile = venue_profile(venue, registry_path)
    if cutoff_override is not None:
        profile = replace(profile, cutoff=cutoff_override)
    return InputBundle(
        idea=texts["idea.md"],
        experimental_log=texts["experimental_log.md"],
        template=texts["template.tex"],
        guidelines=texts["conference_guidelines.md"],
        figures=load_figures(root / "figures"),
        venue=profile,
    )


def anti_leakage_preamble() -> str:
    return prompts.load_template("anti_leakage").strip()


def inject_anti_leakage(prompt: str, preamble: str | None = None) -> str:
    """Prepend the knowledge-isolation preamble to a generation prompt.

    Idempotent: a prompt already carrying the sentinel is returned unchanged.
    An explicitly empty preamble disables injection (with a warning) so
    operators can run leakage-sensitivity ablations.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if ISOLATION_SENTINEL in prompt:
        return prompt
    if preamble is None:
        preamble = anti_leakage_preamble()
    if not preamble.strip():
        logger.warning("anti-leakage preamble is empty; prompt left unprotected")
        return prompt
    if ISOLATION_SENTINEL not in preamble:
        preamble = ISOLATION_SENTINEL + "\n" + preamble
    return preamble + _SEPARATOR + prompt


def carries_isolation_sentinel(prompt: str) -> bool:
    """Used by the pipeline's prompt-audit hook at the provider boundary."""
    return ISOLATION_SENTINEL in prompt
