"""Section-writing stage: one comprehensive multimodal call, gated by
structural validators (citation closure, figure closure, protected spans,
environment balance, cite-before-document)."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Callable, Sequence

from . import prompts
from .errors import NoBlockFoundError, ValidationFailure
from .ingest import InputBundle, inject_anti_leakage
from .litreview import CitationRegistry, citation_usage
from .outline import Outline, serialize_outline
from .plotting import GeneratedFigure
from .providers import CompletionRequest
from .report import ValidationReport

logger = logging.getLogger(__name__)

_BEGIN_END = re.compile(r"\\(begin|end)\{([^}]*)\}")
_INCLUDEGRAPHICS = re.compile(r"\\includegraphics(?:\[[^\]]*\])?\{([^}]*)\}")
_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")


@dataclass(frozen=True)
class ProtectedSpans:
    """Byte ranges of a reference source that later stages must not touch.

    Spans are captured when the literature sections are finalized; the
    validator requires each span's exact bytes to reappear verbatim (any
    whitespace-only diff counts as tampering).
    """

    reference: str
    spans: tuple[tuple[str, int, int], ...]  # (label, start, end)

    def blocks(self) -> list[tuple[str, str]]:
        return [(label, self.reference[start:end]) for label, start, end in self.spans]


@dataclass
class ManuscriptDraft:
    tex: str
    registry: CitationRegistry
    figures: tuple[GeneratedFigure, ...]
    protected: ProtectedSpans | None = None


def capture_protected_spans(tex: str, section_titles: Sequence[str]) -> ProtectedSpans:
    """Preamble (through \\begin{document}) plus each named section, heading
    included.

    \\title{...} and \\author{...} commands are carved out of the preamble
    protection: the writer is explicitly allowed to fill them in when missing.
    """
    spans: list[tuple[str, int, int]] = []
    begin_doc = tex.find("\\begin{document}")
    if begin_doc >= 0:
        preamble_end = begin_doc + len("\\begin{document}")
        holes = sorted(
            (m.start(), m.end())
            for m in re.finditer(r"\\(?:title|author)\{[^}]*\}", tex[:preamble_end])
        )
        cursor = 0
        for i, (hole_start, hole_end) in enumerate(holes):
            if hole_start - cursor > 1:
                spans.append((f"preamble:{i}", cursor, hole_start))
            cursor = hole_end
        if preamble_end - cursor > 1:
            spans.append((f"preamble:{len(holes)}", cursor, preamble_end))
    for title in section_titles:
        m = re.search(r"\\section\*?\{" + re.escape(title) + r"\}", tex)
        if m is None:
            continue
        terminator = re.compile(
            r"\\section\*?\{|\\bibliography\{|\\bibliographystyle\{|\\appendix\b|\\end\{document\}"
        )
        t = terminator.search(tex, m.end())
        spans.append((f"section:{title}", m.start(), t.start() if t else len(tex)))
    return ProtectedSpans(reference=tex, spans=tuple(spans))


def check_environment_balance(tex: str) -> list[str]:
    """Stack-machine pass over \\begin/\\end pairs; returns human-readable faults."""
    faults = []
    stack: list[tuple[str, int]] = []
    for m in _BEGIN_END.finditer(tex):
        kind, name = m.group(1), m.group(2)
        line = tex.count("\n", 0, m.start()) + 1
        if kind == "begin":
            stack.append((name, line))
        else:
            if not stack:
                faults.append(f"\\end{{{name}}} at line {line} without matching \\begin")
            else:
                open_name, open_line = stack.pop()
                if open_name != name:
                    faults.append(
                        f"\\begin{{{open_name}}} at line {open_line} closed by \\end{{{name}}} at line {line}"
                    )
        # \end{document} legitimately terminates the file; ignore trailing text.
        if kind == "end" and name == "document":
            break
    for open_name, open_line in stack:
        faults.append(f"\\begin{{{open_name}}} at line {open_line} never closed")
    return faults


def included_graphics(tex: str) -> list[str]:
    return [m.group(1).strip() for m in _INCLUDEGRAPHICS.finditer(tex)]


def validate_manuscript(
    tex: str,
    registry: CitationRegistry,
    figures: Sequence[GeneratedFigure],
    protected: ProtectedSpans | None = None,
) -> ValidationReport:
    """Report every structural rule violation in the draft; empty report = valid."""
    rep = ValidationReport()

    usage = citation_usage(tex, registry)
    for key in usage.unknown:
        rep.add(f"cite:{key}", "citation-closure", "cited key not in the registry")

    wanted = {fig.path.name: fig for fig in figures}
    included = included_graphics(tex)
    included_names = {name.rsplit("/", 1)[-1] for name in included}
    for name in included:
        base = name.rsplit("/", 1)[-1]
        if base not in wanted:
            rep.add(f"figure:{name}", "figure-closure", "\\includegraphics target not in figure set")
        elif not name.startswith("figures/"):
            rep.add(f"figure:{name}", "figure-path", "figures must be included from figures/")
    for name, fig in sorted(wanted.items()):
        if name not in included_names:
            rep.add(f"figure:{fig.figure_id}", "figure-closure", f"figure {name} never included")

    if protected is not None:
        for label, block in protected.blocks():
            if block not in tex:
                rep.add(label, "protected-span", "protected bytes were modified")

    for fault in check_environment_balance(tex):
        rep.add("environments", "environment-balance", fault)

    begin_doc = tex.find("\\begin{document}")
    preamble = tex if begin_doc < 0 else tex[:begin_doc]
    if "\\cite" in preamble:
        rep.add("preamble", "cite-before-document", "\\cite appears before \\begin{document}")
    return rep


def _log_number_tokens(log_text: str) -> set[str]:
    return set(_NUMBER.findall(log_text))


def _rounding_match(token: str, log_tokens: set[str]) -> bool:
    """A table value is provenance-clean if the log states it literally or at
    higher precision (text may round, e.g. 43.4 vs a logged 43.43)."""
    if token in log_tokens:
        return True
    if "." not in token:
        return False
    decimals = len(token.split(".", 1)[1])
    try:
        value = float(token)
    except ValueError:
        return False
    for lt in log_tokens:
        if "." not in lt:
            continue
        try:
            if abs(round(float(lt), decimals) - value) < 10 ** -(decimals + 6):
                return True
        except ValueError:
            continue
    return False


def numeric_provenance(tex: str, log_text: str) -> list[str]:
    """Numbers inside tabular environments that cannot be traced to the log.

    Literal-match heuristic with a rounding comparator; findings are warnings,
    never faults.
    """
    log_tokens = _log_number_tokens(log_text)
    warnings = []
    for m in re.finditer(r"\\begin\{(tabular\*?|tabularx)\}.*?\\end\{\1\}", tex, re.DOTALL):
        body = m.group(0)
        body = re.sub(r"\\(?:multicolumn|multirow)\{\d+\}", " ", body)
        body = re.sub(r"\\[a-zA-Z]+", " ", body)
        for token in _NUMBER.findall(body):
            if not _rounding_match(token, log_tokens):
                warnings.append(f"table value {token} not found in the experimental log")
    return warnings


def extract_fenced_block(text: str, tag: str) -> str:
    """Content of the first ```tag fence; falls back to the first bare fence.

    The closing fence is required — an unterminated block is treated as absent.
    """
    tagged = re.compile(r"```" + re.escape(tag) + r"[ \t]*\n(.*?)(?:\n)?```", re.DOTALL)
    m = tagged.search(text)
    if m:
        return m.group(1)
    bare = re.compile(r"```[ \t]*\n(.*?)(?:\n)?```", re.DOTALL)
    m = bare.search(text)
    if m:
        return m.group(1)
    raise NoBlockFoundError(f"no fenced block with tag {tag!r}")


def build_writer_prompt(
    bundle: InputBundle,
    outline: Outline,
    registry: CitationRegistry,
    figures: Sequence[GeneratedFigure],
    partial_tex: str,
) -> str:
    figures_list = "\n".join(
        f"- figures/{fig.path.name} ({fig.aspect_ratio}): {fig.caption}" for fig in figures
    ) or "(no figures)"
    body = prompts.render(
        "section_writer",
        outline_json=serialize_outline(outline),
        idea=bundle.idea,
        experimental_log=bundle.experimental_log,
        citation_map_json=json.dumps(registry.citation_map(), indent=2, sort_keys=True),
        guidelines=bundle.guidelines,
        figures_list=figures_list,
        template_tex=partial_tex,
    )
    return inject_anti_leakage(body)


def draft_sections(
    bundle: InputBundle,
    outline: Outline,
    registry: CitationRegistry,
    figures: Sequence[GeneratedFigure],
    partial_tex: str,
    llm: Callable[[CompletionRequest], str],
    *,
    protected: ProtectedSpans | None = None,
    max_retries: int = 2,
) -> tuple[ManuscriptDraft, ValidationReport]:
    """Single multimodal call filling every remaining section.

    The draft must pass validate_manuscript; the violation report is appended
    to the prompt for up to ``max_retries`` corrective attempts. Numeric
    provenance findings ride along as warnings.
    """
    if protected is None:
        protected = capture_protected_spans(partial_tex, ("Introduction", "Related Work"))
    base_prompt = build_writer_prompt(bundle, outline, registry, figures, partial_tex)
    attachments = tuple(("image/png", fig.path.read_bytes()) for fig in figures)
    prompt = base_prompt
    report = ValidationReport()
    for attempt in range(max_retries + 1):
        text = llm(
            CompletionRequest(prompt=prompt, attachments=attachments, tags={"agent": "section-writing"})
        )
        tex = extract_fenced_block(text, "latex")
        report = validate_manuscript(tex, registry, figures, protected)
        for warning in numeric_provenance(tex, bundle.experimental_log):
            report.add("tables", "numeric-provenance", warning, severity="warning")
        if report.ok:
            return ManuscriptDraft(tex=tex, registry=registry, figures=tuple(figures), protected=protected), report
        prompt = inject_anti_leakage(
            base_prompt + "\n\nPREVIOUS ATTEMPT REJECTED; fix every item below and resend the "
            "full document:\n" + report.summary()
        )
    raise ValidationFailure(report)
