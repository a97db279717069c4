"""HTTP service behind the human annotation UI: blind pair assignment,
questionnaire delivery, judgment persistence, and win-margin summaries.

The pipeline identity of each document never reaches the client: assignments
expose only opaque left/right document URLs, and the orientation is drawn
uniformly at random per assignment. Unblinding happens server-side when a
judgment is submitted.
"""

from __future__ import annotations

import json
import logging
import random
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .autoraters import margin
from .errors import ExhaustedError, IncompleteAnswersError, NoDataError, UnknownPairError

logger = logging.getLogger(__name__)

ASPECTS = ("lit", "overall")

#: Default questionnaire: five literature criteria, six overall criteria, and
#: the two final holistic judgments. Operators may override via the manifest.
DEFAULT_LIT_QUESTIONS = (
    ("lit_motivation", "Motivation: which paper better explains the problem, why it matters, and the gap?"),
    ("lit_coverage", "Coverage: which overview of prior research is more relevant and complete?"),
    ("lit_synthesis", "Synthesis: which paper groups related work logically rather than listing papers?"),
    ("lit_positioning", "Positioning: which paper better explains how it differs from existing methods?"),
    ("lit_readability", "Readability: which text is more concise, clear, and easy to follow?"),
)
DEFAULT_OVERALL_QUESTIONS = (
    ("overall_depth", "Scientific depth: which paper has more rigorous foundations and setups?"),
    ("overall_execution", "Execution: which methodology is implemented more innovatively and effectively?"),
    ("overall_flow", "Logical flow: which paper transitions more smoothly from abstract to conclusion?"),
    ("overall_clarity", "Clarity: which writing is more precise and free of fluff or ambiguity?"),
    ("overall_evidence", "Evidence: which paper integrates figures, tables, and results more cleanly?"),
    ("overall_style", "Style: which paper maintains a more polished, professional academic tone?"),
)
FINAL_ITEMS = (("final_lit", "Final judgment: literature review quality"),
               ("final_overall", "Final judgment: overall paper quality"))

CHOICES = ("left", "tie", "right")


@dataclass
class QuestionnaireSchema:
    lit_questions: list[dict]
    overall_questions: list[dict]
    final_judgments: list[dict]

    @classmethod
    def default(cls) -> "QuestionnaireSchema":
        return cls(
            lit_questions=[{"id": qid, "text": text} for qid, text in DEFAULT_LIT_QUESTIONS],
            overall_questions=[{"id": qid, "text": text} for qid, text in DEFAULT_OVERALL_QUESTIONS],
            final_judgments=[{"id": qid, "text": text} for qid, text in FINAL_ITEMS],
        )

    def question_ids(self) -> list[str]:
        return [q["id"] for q in self.lit_questions + self.overall_questions]

    def as_dict(self) -> dict:
        return {
            "lit_questions": self.lit_questions,
            "overall_questions": self.overall_questions,
            "final_judgments": self.final_judgments,
            "choices": list(CHOICES),
        }


@dataclass(frozen=True)
class Pair:
    pair_id: str
    candidate_doc: str  # document of the pipeline under evaluation ("A")
    baseline_doc: str
    baseline: str


class SxsService:
    """Single-writer assignment and judgment store; reads are lock-free."""

    def __init__(
        self,
        manifest_path: Path | str,
        out_path: Path | str,
        *,
        docs_root: Path | str | None = None,
        rng: random.Random | None = None,
    ):
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        self.pairs: dict[str, Pair] = {}
        for item in manifest["pairs"]:
            pair = Pair(
                pair_id=str(item["pair_id"]),
                candidate_doc=str(item["candidate_doc"]),
                baseline_doc=str(item["baseline_doc"]),
                baseline=str(item.get("baseline", "baseline")),
            )
            self.pairs[pair.pair_id] = pair
        self.pipeline_names = set(manifest.get("pipeline_names", []))
        self.pipeline_names.update(p.baseline for p in self.pairs.values())
        self.pipeline_names.add("candidate")
        schema = manifest.get("questionnaire")
        self.questionnaire = (
            QuestionnaireSchema(
                lit_questions=schema["lit_questions"],
                overall_questions=schema["overall_questions"],
                final_judgments=schema.get(
                    "final_judgments", QuestionnaireSchema.default().final_judgments
                ),
            )
            if schema
            else QuestionnaireSchema.default()
        )
        self.out_path = Path(out_path)
        self.docs_root = Path(docs_root) if docs_root else Path(manifest_path).parent
        self._rng = rng or random.Random()
        self._lock = threading.Lock()
        # (annotator, pair_id) -> {"candidate_side": "left"|"right"}
        self.assignments: dict[tuple[str, str], dict] = {}
        self.served_counts: dict[str, int] = {p: 0 for p in self.pairs}
        self.judgments: dict[tuple[str, str], dict] = {}
        self._assignments_path = self.out_path.with_suffix(".assignments.json")
        self._restore()

    # -- persistence ----------------------------------------------------------

    def _restore(self) -> None:
        if self._assignments_path.is_file():
            stored = json.loads(self._assignments_path.read_text(encoding="utf-8"))
            for item in stored["assignments"]:
                key = (item["annotator_id"], item["pair_id"])
                self.assignments[key] = {"candidate_side": item["candidate_side"]}
            self.served_counts.update(stored.get("served_counts", {}))
        if self.out_path.is_file():
            for line in self.out_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    record = json.loads(line)
                    self.judgments[(record["annotator_id"], record["pair_id"])] = record

    def _persist_assignments(self) -> None:
        payload = {
            "assignments": [
                {"annotator_id": a, "pair_id": p, "candidate_side": info["candidate_side"]}
                for (a, p), info in sorted(self.assignments.items())
            ],
            "served_counts": self.served_counts,
        }
        self._assignments_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    def _persist_judgments(self) -> None:
        # Append-only in spirit; a resubmission rewrites the file with the
        # replacement line in place.
        lines = [json.dumps(rec, sort_keys=True) for _, rec in sorted(self.judgments.items())]
        self.out_path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    # -- assignment -------------------------------------------------------------

    def next_pair(self, annotator_id: str) -> dict:
        """Least-served unjudged pair for this annotator, freshly randomized
        left/right; persisted before the response leaves the server."""
        if not annotator_id:
            raise ValueError("annotator_id required")
        with self._lock:
            pending = [
                (annotator_id, pid)
                for pid in self.pairs
                if (annotator_id, pid) in self.assignments
                and (annotator_id, pid) not in self.judgments
            ]
            if pending:
                key = pending[0]  # refresh returns the same open assignment
                pair_id = key[1]
            else:
                candidates = [
                    pid for pid in self.pairs if (annotator_id, pid) not in self.judgments
                    and (annotator_id, pid) not in self.assignments
                ]
                if not candidates:
                    raise ExhaustedError(f"no unserved pairs for annotator {annotator_id!r}")
                pair_id = min(candidates, key=lambda pid: (self.served_counts[pid], pid))
                side = "left" if self._rng.random() < 0.5 else "right"
                self.assignments[(annotator_id, pair_id)] = {"candidate_side": side}
                self.served_counts[pair_id] += 1
                self._persist_assignments()
        return self._client_view(annotator_id, pair_id)

    def _client_view(self, annotator_id: str, pair_id: str) -> dict:
        return {
            "pair_id": pair_id,
            "annotator_id": annotator_id,
            "left_doc": f"/docs/{pair_id}/left.pdf?annotator={annotator_id}",
            "right_doc": f"/docs/{pair_id}/right.pdf?annotator={annotator_id}",
            "questionnaire": self.questionnaire.as_dict(),
        }

    def resolve_document(self, pair_id: str, side: str, annotator_id: str) -> Path:
        info = self.assignments.get((annotator_id, pair_id))
        if info is None:
            raise UnknownPairError(pair_id)
        pair = self.pairs[pair_id]
        candidate_on_left = info["candidate_side"] == "left"
        doc = pair.candidate_doc if (side == "left") == candidate_on_left else pair.baseline_doc
        return self.docs_root / doc

    # -- judgments ----------------------------------------------------------------

    def submit_judgment(self, record: dict) -> dict:
        pair_id = str(record.get("pair_id", ""))
        annotator_id = str(record.get("annotator_id", ""))
        key = (annotator_id, pair_id)
        if pair_id not in self.pairs or key not in self.assignments:
            raise UnknownPairError(pair_id)
        answers = dict(record.get("answers") or {})
        missing = [qid for qid in self.questionnaire.question_ids() if answers.get(qid) not in CHOICES]
        finals = {"lit": record.get("final_lit"), "overall": record.get("final_overall")}
        missing += [f"final_{aspect}" for aspect, value in finals.items() if value not in CHOICES]
        if missing:
            raise IncompleteAnswersError(missing)
        candidate_side = self.assignments[key]["candidate_side"]
        demapped = {
            aspect: _demap(str(finals[aspect]), candidate_side) for aspect in ASPECTS
        }
        stored = {
            "pair_id": pair_id,
            "annotator_id": annotator_id,
            "baseline": self.pairs[pair_id].baseline,
            "answers": answers,
            "final_lit": finals["lit"],
            "final_overall": finals["overall"],
            "submitted_at": datetime.now(timezone.utc).isoformat(),
            "demapped": demapped,
        }
        with self._lock:
            self.judgments[key] = stored
            self._persist_judgments()
        return {"status": "ok", "pair_id": pair_id, "demapped": demapped}

    def summary(self) -> dict:
        if not self.judgments:
            raise NoDataError("no judgments submitted")
        grouped: dict[str, dict[str, list[str]]] = {}
        for record in self.judgments.values():
            baseline = record["baseline"]
            bucket = grouped.setdefault(baseline, {aspect: [] for aspect in ASPECTS})
            for aspect in ASPECTS:
                bucket[aspect].append(record["demapped"][aspect])
        out: dict[str, dict] = {}
        for baseline, aspects in sorted(grouped.items()):
            out[baseline] = {}
            for aspect, outcomes in aspects.items():
                counts = {
                    "win": outcomes.count("win"),
                    "tie": outcomes.count("tie"),
                    "loss": outcomes.count("loss"),
                }
                out[baseline][aspect] = {**counts, "margin": margin(outcomes)}
        return {"baselines": out, "judgment_count": len(self.judgments)}

    def scan_for_identity_leaks(self, payload: str) -> list[str]:
        """Pipeline-name tokens present in a client-bound payload (must be [])."""
        lowered = payload.lower()
        return sorted(name for name in self.pipeline_names if name and name.lower() in lowered)


def _demap(final: str, candidate_side: str) -> str:
    if final == "tie":
        return "tie"
    return "win" if final == candidate_side else "loss"


# --- HTTP layer -------------------------------------------------------------------

_DOC_PATH = re.compile(r"^/docs/([^/]+)/(left|right)\.pdf$")


def make_handler(service: SxsService, ui_root: Path | None = None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # route through logging, not stderr
            logger.debug("http: " + fmt, *args)

        def _send_json(self, payload: dict, status: int = 200) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_error_json(self, exc: Exception) -> None:
            status = 404 if isinstance(exc, (ExhaustedError, UnknownPairError, NoDataError)) else 400
            self._send_json({"error": type(exc).__name__, "detail": str(exc)}, status)

        def do_GET(self):
            url = urlparse(self.path)
            query = parse_qs(url.query)
            if url.path == "/api/pairs/next":
                annotator = (query.get("annotator") or [""])[0]
                try:
                    self._send_json(service.next_pair(annotator))
                except Exception as exc:
                    self._send_error_json(exc)
                return
            if url.path == "/api/summary":
                try:
                    self._send_json(service.summary())
                except Exception as exc:
                    self._send_error_json(exc)
                return
            doc = _DOC_PATH.match(url.path)
            if doc:
                annotator = (query.get("annotator") or [""])[0]
                try:
                    path = service.resolve_document(doc.group(1), doc.group(2), annotator)
                    data = path.read_bytes()
                except Exception as exc:
                    self._send_error_json(exc)
                    return
                self.send_response(200)
                self.send_header("Content-Type", "application/pdf")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
                return
            if ui_root is not None:
                self._serve_static(url.path)
                return
            self._send_json({"error": "NotFound", "detail": url.path}, 404)

        def _serve_static(self, path: str) -> None:
            rel = path.lstrip("/") or "index.html"
            target = (ui_root / rel).resolve()
            if not str(target).startswith(str(ui_root.resolve())) or not target.is_file():
                self._send_json({"error": "NotFound", "detail": path}, 404)
                return
            types = {".html": "text/html", ".js": "text/javascript", ".css": "text/css"}
            data = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", types.get(target.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/api/judgments":
                self._send_json({"error": "NotFound", "detail": url.path}, 404)
                return
            length = int(self.headers.get("Content-Length") or 0)
            try:
                record = json.loads(self.rfile.read(length).decode("utf-8"))
                self._send_json(service.submit_judgment(record))
            except Exception as exc:
                self._send_error_json(exc)

    return Handler


def serve(service: SxsService, port: int, *, ui_root: Path | None = None) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(service, ui_root))
    return server
