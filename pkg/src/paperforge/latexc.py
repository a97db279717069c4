"""Deterministic LaTeX build driver: 4-pass compile, log scraping, and one
optional model-backed repair pass per stage."""

from __future__ import annotations

import logging
import re
import shutil
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import prompts
from .errors import CompileTimeoutError, RepairExhaustedError, ToolchainMissingError
from .providers import CompletionRequest

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 300


@dataclass(frozen=True)
class CompileDiagnostic:
    severity: str  # "error" | "warning"
    file: str
    line: int | None
    message: str

    def __post_init__(self):
        if not self.message:
            raise ValueError("diagnostic message must be non-empty")


@dataclass
class CompileResult:
    status: str  # "ok" | "failed"
    pdf: bytes | None
    diagnostics: list[CompileDiagnostic] = field(default_factory=list)
    passes_run: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def errors(self) -> list[CompileDiagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


@dataclass
class CompileConfig:
    engine: str = "auto"  # auto | pdflatex | minitex
    main_tex: str = "template.tex"
    output_pdf: str = "main.pdf"
    timeout_s: float = DEFAULT_TIMEOUT_S
    latex_cmd: tuple[str, ...] = ("pdflatex", "-interaction=nonstopmode")
    bib_cmd: tuple[str, ...] = ("bibtex",)


def _resolve_engine(config: CompileConfig) -> str:
    if config.engine == "auto":
        if shutil.which(config.latex_cmd[0]) and shutil.which(config.bib_cmd[0]):
            return "pdflatex"
        return "minitex"
    if config.engine == "pdflatex" and not shutil.which(config.latex_cmd[0]):
        raise ToolchainMissingError(f"{config.latex_cmd[0]} not on PATH")
    return config.engine


def _commands(engine: str, config: CompileConfig, main: Path) -> list[list[str]]:
    """tex -> bibliography -> tex -> tex."""
    if engine == "pdflatex":
        latex = [*config.latex_cmd, main.name]
        bib = [*config.bib_cmd, main.stem]
    else:
        latex = [sys.executable, "-m", "paperforge.minitex", main.name]
        bib = [sys.executable, "-m", "paperforge.minitex", main.name, "--pass", "bib"]
    return [latex, bib, latex, latex]


_ERROR_LINE = re.compile(r"^! (.*)$")
_LINE_REF = re.compile(r"^l\.(\d+)")
_WARNING_LINE = re.compile(r"^(?:LaTeX|Package \S+) Warning: (.*)$")
_ON_INPUT_LINE = re.compile(r"on input line (\d+)")


def parse_log(log_text: str, file_name: str) -> list[CompileDiagnostic]:
    """Line-oriented scan using the toolchain's sentinel conventions; lines the
    scanner does not recognize are ignored."""
    diagnostics: list[CompileDiagnostic] = []
    pending_error: str | None = None
    for raw in log_text.splitlines():
        line = raw.rstrip()
        err = _ERROR_LINE.match(line)
        if err:
            if pending_error is not None:
                diagnostics.append(CompileDiagnostic("error", file_name, None, pending_error))
            pending_error = err.group(1).strip() or "unidentified error"
            continue
        if pending_error is not None:
            ref = _LINE_REF.match(line)
            if ref:
                diagnostics.append(
                    CompileDiagnostic("error", file_name, int(ref.group(1)), pending_error)
                )
                pending_error = None
                continue
            inline = _ON_INPUT_LINE.search(pending_error)
            diagnostics.append(
                CompileDiagnostic(
                    "error", file_name, int(inline.group(1)) if inline else None, pending_error
                )
            )
            pending_error = None
        warn = _WARNING_LINE.match(line)
        if warn:
            message = warn.group(1).strip()
            inline = _ON_INPUT_LINE.search(message)
            diagnostics.append(
                CompileDiagnostic(
                    "warning", file_name, int(inline.group(1)) if inline else None, message
                )
            )
    if pending_error is not None:
        diagnostics.append(CompileDiagnostic("error", file_name, None, pending_error))
    return diagnostics


def compile(run_dir: Path | str, config: CompileConfig | None = None) -> CompileResult:  # noqa: A001
    """Compile the run directory to PDF via subprocess passes.

    Status is ok iff no error-severity diagnostics were parsed and a PDF was
    produced; the PDF is also copied to ``config.output_pdf``.
    """
    config = config or CompileConfig()
    run_dir = Path(run_dir)
    main = run_dir / config.main_tex
    if not main.is_file():
        raise FileNotFoundError(f"main tex file missing: {main}")
    engine = _resolve_engine(config)
    diagnostics: list[CompileDiagnostic] = []
    passes_run = 0
    log_path = main.with_suffix(".log")
    for i, cmd in enumerate(_commands(engine, config, main)):
        try:
            subprocess.run(
                cmd,
                cwd=run_dir,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                timeout=config.timeout_s,
                check=False,
            )
        except subprocess.TimeoutExpired as exc:
            raise CompileTimeoutError(f"pass {i + 1} exceeded {config.timeout_s}s") from exc
        except FileNotFoundError as exc:
            raise ToolchainMissingError(str(exc)) from exc
        passes_run += 1
        is_latex_pass = cmd[-1] == main.name or main.name in cmd
        if is_latex_pass and log_path.is_file():
            diagnostics = parse_log(log_path.read_text(encoding="utf-8", errors="replace"), config.main_tex)
            if any(d.severity == "error" for d in diagnostics):
                break
    pdf_path = main.with_suffix(".pdf")
    pdf = pdf_path.read_bytes() if pdf_path.is_file() else None
    has_errors = any(d.severity == "error" for d in diagnostics)
    status = "ok" if (pdf is not None and not has_errors) else "failed"
    if status == "ok" and config.output_pdf:
        (run_dir / config.output_pdf).write_bytes(pdf)
    return CompileResult(status=status, pdf=pdf if status == "ok" else None,
                         diagnostics=diagnostics, passes_run=passes_run)


def format_diagnostics(diags: Sequence[CompileDiagnostic]) -> str:
    return "\n".join(
        f"{d.severity.upper()} {d.file}:{d.line if d.line is not None else '?'}: {d.message}"
        for d in diags
    )


def repair(
    tex: str,
    diags: Sequence[CompileDiagnostic],
    reviser: Callable[[CompletionRequest], str],
    *,
    validator: Callable[[str], list[str]] | None = None,
) -> str:
    """One model call with the diagnostics appended; the caller recompiles.

    ``validator`` (when given) re-checks the returned source against the
    manuscript gates; any finding rejects the repair. One attempt per stage.
    """
    if not any(d.severity == "error" for d in diags):
        raise ValueError("repair requires at least one error diagnostic")
    from .ingest import inject_anti_leakage
    from .writer import extract_fenced_block

    prompt = inject_anti_leakage(
        prompts.render("repair", diagnostics=format_diagnostics(diags), paper_tex=tex)
    )
    reply = reviser(CompletionRequest(prompt=prompt, tags={"agent": "compile-repair"}))
    repaired = extract_fenced_block(reply, "latex")
    if validator is not None:
        problems = validator(repaired)
        if problems:
            raise RepairExhaustedError("; ".join(problems))
    return repaired
