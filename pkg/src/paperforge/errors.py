"""Exception types shared across the pipeline and evaluation modules."""

from __future__ import annotations


class PaperforgeError(Exception):
    """Base class for all package errors."""


# --- input loading -----------------------------------------------------------


class MissingFileError(PaperforgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required input file missing: {name}")


class EmptyDocumentError(PaperforgeError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"input document is empty: {name}")


class UnknownVenueError(PaperforgeError):
    def __init__(self, venue_id: str):
        self.venue_id = venue_id
        super().__init__(f"venue not in registry: {venue_id!r}")


# --- structured-output parsing -----------------------------------------------


class NoJsonFoundError(PaperforgeError):
    """Model output contained no extractable JSON object."""


class SchemaViolation(PaperforgeError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class NoBlockFoundError(PaperforgeError):
    """No fenced code block with the requested tag."""


class MissingBlockError(PaperforgeError):
    def __init__(self, which: str):
        self.which = which
        super().__init__(f"expected output block missing: {which}")


# --- providers ----------------------------------------------------------------


class ProviderFailure(PaperforgeError):
    """LLM or image provider call failed.

    kind is one of: auth, quota, transient-exhausted, malformed.
    """

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"provider failure ({kind}): {detail}")


class IndexLookupError(PaperforgeError):
    """Scholarly index query failed after bounded retries."""


# --- literature pipeline -------------------------------------------------------


class CitationClosureViolation(PaperforgeError):
    """Drafted sections cite keys outside the registry or use too few of it."""


class SectionTamperDetected(PaperforgeError):
    """Bytes outside the writable section slots were modified."""


# --- writer / refinement -------------------------------------------------------


class ValidationFailure(PaperforgeError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"manuscript validation failed: {report.summary()}")


class AxisMismatchError(PaperforgeError):
    """Two review scores do not share the same sub-axis set."""


class CaptionViolationError(PaperforgeError):
    """Caption still violates prefix/markup rules after the corrective retry."""


# --- compilation ---------------------------------------------------------------


class ToolchainMissingError(PaperforgeError):
    """No usable TeX toolchain binary was found."""


class CompileTimeoutError(PaperforgeError):
    pass


class RepairExhaustedError(PaperforgeError):
    """The single repair attempt did not produce an acceptable source."""


# --- autoraters ----------------------------------------------------------------


class UnparseableJudgmentError(PaperforgeError):
    """Judge output could not be mapped onto the expected verdict schema."""


class InvalidWinnerTokenError(UnparseableJudgmentError):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"winner token not in {{paper_1, paper_2, tie}}: {token!r}")


class WeightDomainError(PaperforgeError):
    """Axis score or adjustment outside its allowed numeric range."""


class EmptyInputError(PaperforgeError):
    pass


# --- benchkit ------------------------------------------------------------------


class LeakPersistsError(PaperforgeError):
    """Synthesized material still contains leaks after the corrective retry."""


class EmptyCorpusError(PaperforgeError):
    pass


# --- pipeline ------------------------------------------------------------------


class StageFailure(PaperforgeError):
    """A pipeline stage failed; artifacts produced so far are attached."""

    def __init__(self, stage: str, cause: Exception, artifacts: dict | None = None):
        self.stage = stage
        self.cause = cause
        self.artifacts = artifacts or {}
        super().__init__(f"stage {stage} failed: {cause}")


# --- annotation service ----------------------------------------------------------


class ExhaustedError(PaperforgeError):
    """No unserved pairs remain for this annotator."""


class UnknownPairError(PaperforgeError):
    def __init__(self, pair_id: str):
        self.pair_id = pair_id
        super().__init__(f"pair was never assigned: {pair_id!r}")


class IncompleteAnswersError(PaperforgeError):
    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__(f"unanswered questionnaire items: {', '.join(self.missing)}")


class NoDataError(PaperforgeError):
    pass
