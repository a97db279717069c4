"""Visualization stage behind a pluggable image provider.

The default external image system is out of scope; the stub provider renders
deterministic placeholder rasters at the requested aspect ratio so the whole
pipeline runs offline. Captions are regenerated through a single model call
and post-validated against the prefix/markup rules.
"""

from __future__ import annotations

import logging
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

from . import prompts
from .errors import CaptionViolationError, ProviderFailure
from .ingest import FigureAsset, InputBundle, inject_anti_leakage
from .outline import ASPECT_RATIOS, PlotSpec
from .providers import CompletionRequest

logger = logging.getLogger(__name__)

PLOT_ON = "on"
PLOT_OFF = "off"


@dataclass(frozen=True)
class GeneratedFigure:
    figure_id: str
    path: Path
    caption: str
    aspect_ratio: str
    provenance: str  # "provided" | "generated"


class PlotProvider(Protocol):
    def __call__(self, spec: PlotSpec, sources: dict[str, str]) -> tuple[bytes, str | None]:
        """Render ``spec`` from the given source documents.

        Returns (image bytes, optional critique transcript)."""


# --- caption rules ---------------------------------------------------------------

_PREFIX_RULE = re.compile(r"^\s*(figure|fig\.?|caption)\s*\d*\s*[:.]", re.IGNORECASE)
_MARKUP_TOKENS = ("**", "__", "```", "](", "<b>", "<i>")


def validate_caption(caption: str) -> list[str]:
    """Violated caption rules (empty list = clean)."""
    problems = []
    if not caption.strip():
        problems.append("caption is empty")
        return problems
    if _PREFIX_RULE.match(caption):
        problems.append('caption carries a "Figure X:"-style prefix')
    for token in _MARKUP_TOKENS:
        if token in caption:
            problems.append(f"caption contains markup marker {token!r}")
    if re.search(r"(?<!\*)\*[^*\n]+\*(?!\*)", caption) or caption.lstrip().startswith("#"):
        problems.append("caption contains markdown emphasis or heading markers")
    if "`" in caption:
        problems.append("caption contains backticks")
    return problems


def generate_caption(
    context: dict[str, str],
    llm: Callable[[CompletionRequest], str],
    *,
    max_retries: int = 1,
) -> str:
    """One model call; prefix/markup rules enforced with one corrective retry."""
    for field in ("task_name", "section_text", "objective", "figure_description"):
        if not str(context.get(field, "")).strip():
            raise ValueError(f"caption context field missing: {field}")
    base = prompts.render(
        "caption",
        task_name=context["task_name"],
        raw_content=context["section_text"],
        description=context["objective"],
        figure_desc=context["figure_description"],
    )
    prompt = inject_anti_leakage(base)
    problems: list[str] = []
    for attempt in range(max_retries + 1):
        caption = llm(CompletionRequest(prompt=prompt, tags={"agent": "plotting-caption"})).strip()
        problems = validate_caption(caption)
        if not problems:
            return caption
        prompt = inject_anti_leakage(
            base + "\n\nPREVIOUS CAPTION REJECTED (" + "; ".join(problems) + "). "
            "Return plain text only, with no figure-number prefix."
        )
    raise CaptionViolationError("; ".join(problems))


def _fallback_caption(figure_id: str) -> str:
    words = [w for w in re.split(r"[_\-]+", figure_id) if w and w != "fig"]
    return ("Overview of " + " ".join(words) + ".") if words else "Overview figure."


# --- deterministic placeholder rasters --------------------------------------------


def ratio_dimensions(aspect_ratio: str, base: int = 240) -> tuple[int, int]:
    w_part, h_part = (int(x) for x in aspect_ratio.split(":"))
    unit = max(1, base // max(w_part, h_part))
    return w_part * unit, h_part * unit


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def placeholder_png(width: int, height: int, label: str, shade: int = 224) -> bytes:
    """Solid placeholder raster; the label travels in a tEXt chunk so the file
    is self-describing without any drawing dependency. Fully deterministic."""
    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)  # 8-bit grayscale
    row = bytes([0]) + bytes([shade]) * width
    body = zlib.compress(row * height, 9)
    text = b"Comment\x00" + label.encode("latin-1", "replace")
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"tEXt", text)
        + _png_chunk(b"IDAT", body)
        + _png_chunk(b"IEND", b"")
    )


class StubPlotProvider:
    """Offline provider: labeled placeholder rasters at the requested ratio."""

    def __init__(self):
        self.calls = 0

    def __call__(self, spec: PlotSpec, sources: dict[str, str]) -> tuple[bytes, str | None]:
        self.calls += 1
        ratio = spec.aspect_ratio if spec.aspect_ratio in ASPECT_RATIOS else "4:3"
        width, height = ratio_dimensions(ratio)
        return placeholder_png(width, height, f"{spec.figure_id} [{spec.plot_type}]"), None


# --- plan execution -----------------------------------------------------------------


def _spec_sources(spec: PlotSpec, bundle: InputBundle) -> dict[str, str]:
    sources = {}
    if spec.data_source in ("idea.md", "both"):
        sources["idea.md"] = bundle.idea
    if spec.data_source in ("experimental_log.md", "both"):
        sources["experimental_log.md"] = bundle.experimental_log
    return sources


def execute_plot_plan(
    plan: Sequence[PlotSpec],
    bundle: InputBundle,
    provider: PlotProvider,
    *,
    mode: str = PLOT_ON,
    out_dir: Path | str,
    captioner: Callable[[CompletionRequest], str] | None = None,
    ledger_record: Callable[[str], None] | None = None,
) -> list[GeneratedFigure]:
    """Run the visualization plan (PlotOn) or pass ground-truth figures through
    (PlotOff; the provider is never invoked and the plan is ignored).

    A provider failure drops that figure with a warning; the manuscript must
    stay valid without it.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures: list[GeneratedFigure] = []

    if mode == PLOT_OFF:
        for asset in bundle.figures:
            target = out_dir / asset.path.name
            if target.resolve() != asset.path.resolve():
                target.write_bytes(asset.path.read_bytes())
            caption = asset.caption
            if not caption:
                caption = _regenerate_caption(asset, captioner)
            figures.append(
                GeneratedFigure(
                    figure_id=asset.figure_id,
                    path=target,
                    caption=caption,
                    aspect_ratio="4:3",
                    provenance="provided",
                )
            )
        return figures

    for spec in plan:
        try:
            if ledger_record is not None:
                ledger_record("plotting-render")
            image, _transcript = provider(spec, _spec_sources(spec, bundle))
        except ProviderFailure as exc:
            logger.warning("figure %s dropped: provider failed (%s)", spec.figure_id, exc.kind)
            continue
        target = out_dir / f"{spec.figure_id}.png"
        target.write_bytes(image)
        caption = _caption_for_spec(spec, captioner)
        figures.append(
            GeneratedFigure(
                figure_id=spec.figure_id,
                path=target,
                caption=caption,
                aspect_ratio=spec.aspect_ratio,
                provenance="generated",
            )
        )
    return figures


def _caption_for_spec(spec: PlotSpec, captioner) -> str:
    if captioner is None:
        return _fallback_caption(spec.figure_id)
    return generate_caption(
        {
            "task_name": spec.plot_type,
            "section_text": spec.title or spec.figure_id,
            "objective": spec.objective or spec.title or spec.figure_id,
            "figure_description": f"{spec.title} ({spec.aspect_ratio})",
        },
        captioner,
    )


def _regenerate_caption(asset: FigureAsset, captioner) -> str:
    if captioner is None:
        return _fallback_caption(asset.figure_id)
    return generate_caption(
        {
            "task_name": "provided figure",
            "section_text": asset.figure_id,
            "objective": f"describe the provided figure {asset.figure_id}",
            "figure_description": asset.path.name,
        },
        captioner,
    )
