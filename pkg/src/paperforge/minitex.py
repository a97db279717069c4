"""Bundled fallback TeX engine, runnable as ``python -m paperforge.minitex``.

Real venue builds use an installed TeX distribution; this engine exists so the
pipeline and its tests run deterministically on hosts without one. It performs
the structural checks a first LaTeX pass would fail on (environment balance,
missing graphics files, undefined citations), writes a log in the classic
``!``/``l.<n>``/``LaTeX Warning:`` conventions so one log parser serves both
engines, and emits a small real PDF whose page count is a deterministic
function of the source.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import zlib
from pathlib import Path

WORDS_PER_PAGE = 400
GRAPHIC_WORD_EQUIVALENT = 150

_BEGIN_END = re.compile(r"\\(begin|end)\{([^}]*)\}")
_INCLUDEGRAPHICS = re.compile(r"\\includegraphics(?:\[[^\]]*\])?\{([^}]*)\}")
_CITE = re.compile(r"\\cite[a-zA-Z]*\*?\s*(?:\[[^\]]*\]\s*){0,2}\{([^}]*)\}")
_BIB_KEY = re.compile(r"@[a-zA-Z]+\s*\{\s*([^,\s]+)\s*,")


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def check_source(tex: str, base_dir: Path) -> tuple[list[str], list[str]]:
    """(errors, warnings) in log-line format."""
    errors: list[str] = []
    warnings: list[str] = []

    if "\\begin{document}" not in tex:
        errors.append("! LaTeX Error: Missing \\begin{document}.")
        errors.append("l.1")

    stack: list[tuple[str, int]] = []
    for m in _BEGIN_END.finditer(tex):
        kind, name = m.group(1), m.group(2)
        line = _line_of(tex, m.start())
        if kind == "begin":
            stack.append((name, line))
        else:
            if not stack:
                errors.append(f"! LaTeX Error: \\end{{{name}}} without matching \\begin.")
                errors.append(f"l.{line}")
            else:
                open_name, open_line = stack.pop()
                if open_name != name:
                    errors.append(
                        f"! LaTeX Error: \\begin{{{open_name}}} on input line {open_line} "
                        f"ended by \\end{{{name}}}."
                    )
                    errors.append(f"l.{line}")
            if name == "document":
                break
    for open_name, open_line in stack:
        if open_name == "document":
            continue
        errors.append(f"! LaTeX Error: \\begin{{{open_name}}} on input line {open_line} never ended.")
        errors.append(f"l.{open_line}")

    for m in _INCLUDEGRAPHICS.finditer(tex):
        target = m.group(1).strip()
        line = _line_of(tex, m.start())
        path = base_dir / target
        candidates = [path] + [path.with_suffix(ext) for ext in (".png", ".jpg", ".pdf")]
        if not any(c.is_file() for c in candidates):
            errors.append(f"! LaTeX Error: File `{target}' not found.")
            errors.append(f"l.{line}")

    bib_keys: set[str] = set()
    bib_path = base_dir / "references.bib"
    if bib_path.is_file():
        bib_keys = set(_BIB_KEY.findall(bib_path.read_text(encoding="utf-8", errors="replace")))
    for m in _CITE.finditer(tex):
        line = _line_of(tex, m.start())
        for key in (k.strip() for k in m.group(1).split(",")):
            if key and key not in bib_keys:
                warnings.append(
                    f"LaTeX Warning: Citation `{key}' on page 1 undefined on input line {line}."
                )
    return errors, warnings


def page_count(tex: str) -> int:
    """Pages as a deterministic function of body volume and figure count."""
    body_match = re.search(r"\\begin\{document\}(.*)\\end\{document\}", tex, re.DOTALL)
    body = body_match.group(1) if body_match else tex
    body = re.sub(r"(?<!\\)%[^\n]*", "", body)
    n_graphics = len(_INCLUDEGRAPHICS.findall(body))
    words = len(body.split())
    effective = words + GRAPHIC_WORD_EQUIVALENT * n_graphics
    return max(1, math.ceil(effective / WORDS_PER_PAGE))


def _pdf_escape(text: str) -> str:
    return text.replace("\\", r"\\").replace("(", r"\(").replace(")", r"\)")


def render_pdf(tex: str, title: str = "") -> bytes:
    """A minimal, valid, timestamp-free PDF with page_count(tex) pages."""
    pages = page_count(tex)
    objects: list[bytes] = []

    def add(body: bytes) -> int:
        objects.append(body)
        return len(objects)

    font = add(b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>")
    page_ids = []
    content_ids = []
    for i in range(pages):
        label = _pdf_escape(f"{title} - page {i + 1} of {pages}".strip(" -"))
        stream = f"BT /F1 12 Tf 72 720 Td ({label}) Tj ET".encode("latin-1", "replace")
        compressed = zlib.compress(stream, 9)
        content_ids.append(
            add(
                b"<< /Length " + str(len(compressed)).encode() + b" /Filter /FlateDecode >>\n"
                b"stream\n" + compressed + b"\nendstream"
            )
        )
    pages_id_placeholder = len(objects) + pages + 1
    for i in range(pages):
        page_ids.append(
            add(
                (
                    f"<< /Type /Page /Parent {pages_id_placeholder} 0 R "
                    f"/MediaBox [0 0 612 792] /Contents {content_ids[i]} 0 R "
                    f"/Resources << /Font << /F1 {font} 0 R >> >> >>"
                ).encode()
            )
        )
    kids = " ".join(f"{pid} 0 R" for pid in page_ids)
    pages_id = add(f"<< /Type /Pages /Kids [{kids}] /Count {pages} >>".encode())
    assert pages_id == pages_id_placeholder
    catalog = add(f"<< /Type /Catalog /Pages {pages_id} 0 R >>".encode())

    out = bytearray(b"%PDF-1.4\n")
    offsets = [0]
    for i, body in enumerate(objects, start=1):
        offsets.append(len(out))
        out += f"{i} 0 obj\n".encode() + body + b"\nendobj\n"
    xref_at = len(out)
    out += f"xref\n0 {len(objects) + 1}\n".encode()
    out += b"0000000000 65535 f \n"
    for off in offsets[1:]:
        out += f"{off:010d} 00000 n \n".encode()
    out += (
        f"trailer\n<< /Size {len(objects) + 1} /Root {catalog} 0 R >>\n"
        f"startxref\n{xref_at}\n%%EOF\n"
    ).encode()
    return bytes(out)


def _extract_title(tex: str) -> str:
    m = re.search(r"\\title\{([^}]*)\}", tex)
    return re.sub(r"\\[a-zA-Z]+", "", m.group(1)).strip() if m else ""


def run_tex_pass(main: Path) -> int:
    tex = main.read_text(encoding="utf-8", errors="replace")
    errors, warnings = check_source(tex, main.parent)
    log_lines = [f"This is MiniTeX, structural pass on {main.name}"]
    log_lines += errors
    log_lines += warnings
    status = 1 if errors else 0
    if status == 0:
        pdf = render_pdf(tex, _extract_title(tex))
        main.with_suffix(".pdf").write_bytes(pdf)
        log_lines.append(f"Output written on {main.stem}.pdf ({page_count(tex)} pages).")
    else:
        log_lines.append("No pages of output.")
    main.with_suffix(".log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return status


def run_bib_pass(main: Path) -> int:
    """Stand-in for the bibliography processor: materializes a .bbl from
    references.bib so the classic 4-pass sequence stays observable."""
    bib_path = main.parent / "references.bib"
    keys = _BIB_KEY.findall(bib_path.read_text(encoding="utf-8", errors="replace")) if bib_path.is_file() else []
    lines = ["\\begin{thebibliography}{%d}" % max(len(keys), 1)]
    lines += [f"\\bibitem{{{key}}} {key}." for key in sorted(keys)]
    lines.append("\\end{thebibliography}")
    main.with_suffix(".bbl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="minitex", description=__doc__)
    parser.add_argument("texfile", help="main .tex file")
    parser.add_argument("--pass", dest="pass_kind", choices=["tex", "bib"], default="tex")
    args = parser.parse_args(argv)
    main_path = Path(args.texfile)
    if not main_path.is_file():
        print(f"minitex: no such file: {main_path}", file=sys.stderr)
        return 2
    if args.pass_kind == "bib":
        return run_bib_pass(main_path)
    return run_tex_pass(main_path)


if __name__ == "__main__":
    raise SystemExit(main())
