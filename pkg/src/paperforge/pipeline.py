"""End-to-end orchestration: outline, then plotting in parallel with the
literature stage, then section writing, compilation, and the review-gated
refinement loop. Every intermediate artifact is persisted under the run
directory, and a manifest of artifact digests plus per-agent call counts seals
the package."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import latexc, litreview, plotting, refine, writer
from .errors import (
    MissingBlockError,
    ProviderFailure,
    SchemaViolation,
    StageFailure,
    ValidationFailure,
)
from .ingest import InputBundle, inject_anti_leakage
from .litreview import CitationRegistry
from .outline import Outline, parse_outline, serialize_outline
from .plotting import GeneratedFigure, PlotProvider, StubPlotProvider
from .providers import CallLedger, CompletionRequest, IndexClient, LlmClient
from . import prompts
from .writer import ManuscriptDraft

logger = logging.getLogger(__name__)

OUTLINE_RETRIES = 2
REPAIR_BUDGET = 1  # repair attempts per compile stage

#: Agents whose prompts generate manuscript content; the audit hook requires
#: the knowledge-isolation sentinel on every one of these at the provider
#: boundary. Evaluation prompts (reviews, autoraters) are exempt.
GENERATION_AGENTS = frozenset(
    {
        "outline",
        "literature-discovery",
        "literature-drafting",
        "section-writing",
        "plotting-caption",
        "refinement-revise",
        "compile-repair",
        "single-agent",
    }
)


def isolation_audit(req: CompletionRequest) -> None:
    from .ingest import carries_isolation_sentinel

    agent = req.tags.get("agent", "")
    if agent in GENERATION_AGENTS and not carries_isolation_sentinel(req.prompt):
        raise ValueError(f"generation prompt for {agent!r} lacks the isolation sentinel")

#: Files digested into the manifest, in emission order. Logs are excluded:
#: they are engine-dependent and carry no contract.
MANIFEST_GLOBS = (
    "outline.json",
    "citation_map.json",
    "references.bib",
    "figures/*",
    "template.tex",
    "worklog_*.json",
    "main.pdf",
)


@dataclass
class RunConfig:
    venue: str
    idea_density: str = "sparse"
    plot_mode: str = plotting.PLOT_OFF
    refine_limit: int = 3
    provider_mode: str = "replay"

    def __post_init__(self):
        if self.refine_limit < 0:
            raise ValueError("refine_limit must be >= 0")


@dataclass
class SubmissionPackage:
    tex: str
    pdf: bytes
    run_manifest: list[dict]
    call_ledger: dict
    run_dir: Path


@dataclass
class ProviderHub:
    """Everything the stages need from the outside world, behind one object."""

    llm: LlmClient
    index: IndexClient
    plot_provider: PlotProvider = field(default_factory=StubPlotProvider)
    reviewer: refine.ReviewerAdapter | None = None
    ledger: CallLedger = field(default_factory=CallLedger)
    compile_config: latexc.CompileConfig = field(default_factory=latexc.CompileConfig)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(run_dir: Path, ledger: dict) -> list[dict]:
    artifacts = []
    for pattern in MANIFEST_GLOBS:
        for path in sorted(run_dir.glob(pattern)):
            if path.is_file():
                artifacts.append({"path": str(path.relative_to(run_dir)), "sha256": _sha256(path)})
    manifest = {"artifacts": artifacts, "call_ledger": ledger}
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return artifacts


def verify_manifest(run_dir: Path) -> bool:
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    return all(
        _sha256(run_dir / item["path"]) == item["sha256"] for item in manifest["artifacts"]
    )


class _Timeline:
    def __init__(self):
        self._zero = time.monotonic()
        self.stages: list[dict] = []

    def run(self, name: str):
        timeline = self

        class _Span:
            def __enter__(self):
                self.start = time.monotonic() - timeline._zero
                return self

            def __exit__(self, exc_type, exc, tb):
                timeline.stages.append(
                    {
                        "stage": name,
                        "start_s": round(self.start, 4),
                        "end_s": round(time.monotonic() - timeline._zero, 4),
                        "ok": exc_type is None,
                    }
                )
                return False

        return _Span()

    def write(self, run_dir: Path) -> None:
        # Wall-clock data lives apart from the manifest so replay runs stay
        # byte-stable.
        (run_dir / "timings.json").write_text(
            json.dumps({"stages": self.stages}, indent=2) + "\n", encoding="utf-8"
        )


def _outline_stage(bundle: InputBundle, hub: ProviderHub) -> Outline:
    from .outline import build_outline_prompt

    base_prompt = build_outline_prompt(bundle)
    prompt = base_prompt
    last: Exception | None = None
    for attempt in range(OUTLINE_RETRIES + 1):
        reply = hub.llm.complete(CompletionRequest(prompt=prompt, tags={"agent": "outline"}))
        try:
            return parse_outline(reply, strict=True)
        except SchemaViolation as exc:
            last = exc
            prompt = inject_anti_leakage(
                base_prompt + f"\n\nPREVIOUS OUTPUT REJECTED ({exc}). "
                "Return one valid JSON object obeying every schema rule."
            )
    raise last  # type: ignore[misc]


def _literature_stage(
    bundle: InputBundle,
    outline: Outline,
    hub: ProviderHub,
    run_dir: Path,
) -> tuple[CitationRegistry, str]:
    cutoff = bundle.venue.cutoff
    candidates = litreview.discover_candidates(
        outline.strategy, cutoff, hub.llm.search_grounded_complete
    )
    unique = litreview.dedupe_candidates(candidates)
    verified = []
    for candidate in unique:  # strictly sequential verification
        outcome = litreview.verify_candidate(candidate, cutoff, hub.index.search)
        if isinstance(outcome, litreview.VerifiedPaper):
            verified.append(outcome)
        else:
            logger.info("candidate rejected (%s): %s", outcome.reason.value, candidate.title)
    registry = litreview.build_registry(verified, cutoff)
    if len(registry) == 0:
        raise ValueError("no candidates survived verification; cannot draft literature sections")
    (run_dir / "references.bib").write_text(litreview.render_bibtex(registry), encoding="utf-8")
    (run_dir / "citation_map.json").write_text(
        json.dumps(registry.citation_map(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lit_tex = litreview.draft_lit_sections(
        bundle, registry, bundle.template, hub.llm.complete, strategy=outline.strategy
    )
    return registry, lit_tex


def _plotting_stage(
    bundle: InputBundle,
    outline: Outline,
    cfg: RunConfig,
    hub: ProviderHub,
    run_dir: Path,
) -> list[GeneratedFigure]:
    try:
        return plotting.execute_plot_plan(
            outline.plotting_plan,
            bundle,
            hub.plot_provider,
            mode=cfg.plot_mode,
            out_dir=run_dir / "figures",
            captioner=hub.llm.complete,
            ledger_record=hub.ledger.record,
        )
    except Exception as exc:  # degradable: the manuscript must survive without figures
        logger.warning("plotting stage degraded to no figures: %s", exc)
        return []


def _compile_with_repair(
    run_dir: Path,
    hub: ProviderHub,
    draft: ManuscriptDraft,
    repair_budget: int = REPAIR_BUDGET,
) -> latexc.CompileResult:
    result = latexc.compile(run_dir, hub.compile_config)
    if result.ok or repair_budget <= 0:
        return result

    def validator(candidate: str) -> list[str]:
        report = writer.validate_manuscript(candidate, draft.registry, draft.figures, draft.protected)
        return [str(v) for v in report.violations]

    repaired = latexc.repair(draft.tex, result.diagnostics, hub.llm.complete, validator=validator)
    (run_dir / hub.compile_config.main_tex).write_text(repaired, encoding="utf-8")
    draft.tex = repaired
    return latexc.compile(run_dir, hub.compile_config)


def run_pipeline(
    bundle: InputBundle,
    cfg: RunConfig,
    hub: ProviderHub,
    out_dir: Path | str,
) -> SubmissionPackage:
    """The full five-step run. Raises StageFailure with partial artifacts on a
    fatal stage error; plotting alone degrades instead of failing the run."""
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    hub.llm.set_prompt_audit(isolation_audit)
    timeline = _Timeline()

    def fail(stage: str, cause: Exception) -> StageFailure:
        timeline.write(run_dir)
        artifacts = {p.name: p for p in run_dir.iterdir() if p.is_file()}
        return StageFailure(stage, cause, artifacts)

    try:
        with timeline.run("outline"):
            outline = _outline_stage(bundle, hub)
            (run_dir / "outline.json").write_text(serialize_outline(outline), encoding="utf-8")
    except Exception as exc:
        raise fail("outline", exc) from exc

    registry: CitationRegistry
    figures: list[GeneratedFigure]
    with ThreadPoolExecutor(max_workers=2) as pool:
        lit_future = pool.submit(
            lambda: _timed(timeline, "literature", lambda: _literature_stage(bundle, outline, hub, run_dir))
        )
        plot_future = pool.submit(
            lambda: _timed(timeline, "plotting", lambda: _plotting_stage(bundle, outline, cfg, hub, run_dir))
        )
        figures = plot_future.result()
        try:
            registry, lit_tex = lit_future.result()
        except Exception as exc:
            raise fail("literature", exc) from exc

    try:
        with timeline.run("writing"):
            protected = writer.capture_protected_spans(lit_tex, litreview.LIT_SECTIONS)
            draft, _report = writer.draft_sections(
                bundle, outline, registry, figures, lit_tex,
                hub.llm.complete, protected=protected,
            )
            (run_dir / hub.compile_config.main_tex).write_text(draft.tex, encoding="utf-8")
    except Exception as exc:
        raise fail("writing", exc) from exc

    try:
        with timeline.run("compile"):
            result = _compile_with_repair(run_dir, hub, draft)
            if not result.ok:
                raise ValidationFailureFromCompile(result)
    except Exception as exc:
        raise fail("compile", exc) from exc

    try:
        with timeline.run("refinement"):
            final_tex, final_pdf = _refinement_stage(bundle, cfg, hub, run_dir, draft, result)
    except Exception as exc:
        raise fail("refinement", exc) from exc

    try:
        with timeline.run("seal"):
            final_report = writer.validate_manuscript(final_tex, registry, figures, draft.protected)
            if not final_report.ok:
                raise ValidationFailure(final_report)
            (run_dir / hub.compile_config.main_tex).write_text(final_tex, encoding="utf-8")
            final_result = latexc.compile(run_dir, hub.compile_config)
            if not final_result.ok:
                raise ValidationFailureFromCompile(final_result)
            final_pdf = final_result.pdf or final_pdf
    except Exception as exc:
        raise fail("seal", exc) from exc

    timeline.write(run_dir)
    ledger = _merged_ledger(hub)
    artifacts = write_manifest(run_dir, ledger)
    return SubmissionPackage(
        tex=final_tex, pdf=final_pdf, run_manifest=artifacts, call_ledger=ledger, run_dir=run_dir
    )


def _timed(timeline: _Timeline, name: str, fn: Callable):
    with timeline.run(name):
        return fn()


class ValidationFailureFromCompile(Exception):
    def __init__(self, result: latexc.CompileResult):
        self.result = result
        errors = "; ".join(d.message for d in result.errors()) or "no PDF produced"
        super().__init__(f"compilation failed: {errors}")


def _refinement_stage(
    bundle: InputBundle,
    cfg: RunConfig,
    hub: ProviderHub,
    run_dir: Path,
    draft: ManuscriptDraft,
    compile_result: latexc.CompileResult,
) -> tuple[str, bytes]:
    if cfg.refine_limit == 0:
        return draft.tex, compile_result.pdf or b""

    reviewer = hub.reviewer or refine.simulated_reviewer(hub.llm.complete)
    citation_map_json = json.dumps(draft.registry.citation_map(), indent=2, sort_keys=True)

    def reviser(context: dict) -> str:
        prompt = refine.build_reviser_prompt(
            context, bundle.guidelines, bundle.experimental_log, citation_map_json
        )
        return hub.llm.complete(CompletionRequest(prompt=prompt, tags={"agent": "refinement-revise"}))

    def compiler(tex: str) -> tuple[bool, bytes]:
        (run_dir / hub.compile_config.main_tex).write_text(tex, encoding="utf-8")
        result = latexc.compile(run_dir, hub.compile_config)
        return result.ok, result.pdf or b""

    def persist_worklog(iteration: int, entry: refine.HistoryEntry) -> None:
        if entry.worklog is not None:
            (run_dir / f"worklog_{iteration}.json").write_text(
                json.dumps(entry.worklog.as_dict(), indent=2) + "\n", encoding="utf-8"
            )

    state = refine.RefinementState(
        current_tex=draft.tex,
        current_score=None,
        limit=cfg.refine_limit,
    )
    state = refine.refine_loop(state, reviewer, reviser, compiler, on_iteration=persist_worklog)
    ok, pdf = compiler(state.current_tex)
    if not ok:
        raise RuntimeError("accepted refinement state failed to recompile")
    return state.current_tex, pdf


def _merged_ledger(hub: ProviderHub) -> dict:
    merged: dict[str, int] = {}
    seen: set[int] = set()
    for source in (hub.llm.ledger, hub.index.ledger, hub.ledger):
        if id(source) in seen:  # hubs may share one ledger across clients
            continue
        seen.add(id(source))
        for agent, count in source.counts().items():
            merged[agent] = merged.get(agent, 0) + count
    return dict(sorted(merged.items()))


# --- single-agent baseline -----------------------------------------------------------

_TAGGED_FENCE = re.compile(r"```([a-zA-Z]*)[ \t]*\n(.*?)(?:\n)?```", re.DOTALL)


def extract_two_blocks(text: str) -> tuple[str, str]:
    """(bibtex, latex) from the baseline's reply; reversed order is tolerated
    with a warning, a missing block is not."""
    blocks = [(m.group(1).lower(), m.group(2)) for m in _TAGGED_FENCE.finditer(text)]
    bib = next((b for tag, b in blocks if tag == "bibtex"), None)
    tex = next((b for tag, b in blocks if tag in ("latex", "tex")), None)
    if bib is None:
        raise MissingBlockError("bibtex")
    if tex is None:
        raise MissingBlockError("latex")
    tags = [tag for tag, _ in blocks if tag in ("bibtex", "latex", "tex")]
    if tags and tags[0] != "bibtex":
        logger.warning("single-agent blocks arrived in unexpected order; reordering")
    return bib, tex


def run_single_agent(
    bundle: InputBundle,
    cfg: RunConfig,
    hub: ProviderHub,
    out_dir: Path | str,
) -> SubmissionPackage:
    """One end-to-end call producing the bibliography and the manuscript; no
    verification and no refinement."""
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    hub.llm.set_prompt_audit(isolation_audit)
    figures_dir = run_dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    for asset in bundle.figures:
        target = figures_dir / asset.path.name
        if target.resolve() != asset.path.resolve():
            target.write_bytes(asset.path.read_bytes())
    figures_text = "\n".join(f"- figures/{a.path.name}" for a in bundle.figures) or "(none)"
    system = prompts.render(
        "single_agent_system",
        guidelines=bundle.guidelines,
        cutoff_date=bundle.venue.cutoff.isoformat(),
        page_limit=bundle.venue.page_limit,
    )
    user = prompts.render(
        "single_agent_user",
        cutoff_date=bundle.venue.cutoff.isoformat(),
        idea_text=bundle.idea,
        experimental_log_text=bundle.experimental_log,
        figures_prompt_text=figures_text,
        template_text=bundle.template,
    )
    prompt = inject_anti_leakage(system + "\n\n" + user)
    try:
        reply = hub.llm.complete(CompletionRequest(prompt=prompt, tags={"agent": "single-agent"}))
        bib, tex = extract_two_blocks(reply)
    except (ProviderFailure, MissingBlockError) as exc:
        raise StageFailure("single-agent", exc) from exc
    (run_dir / "references.bib").write_text(bib + "\n", encoding="utf-8")
    (run_dir / hub.compile_config.main_tex).write_text(tex, encoding="utf-8")
    result = latexc.compile(run_dir, hub.compile_config)
    if not result.ok:
        raise StageFailure("single-agent-compile", ValidationFailureFromCompile(result))
    ledger = _merged_ledger(hub)
    artifacts = write_manifest(run_dir, ledger)
    return SubmissionPackage(
        tex=tex, pdf=result.pdf or b"", run_manifest=artifacts, call_ledger=ledger, run_dir=run_dir
    )
