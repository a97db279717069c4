"""Report-style validation results shared by the outline and manuscript gates."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Violation:
    path: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.path}: {self.message}"


@dataclass
class ValidationReport:
    """Violations fail a gate; warnings and infos never do."""

    violations: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)
    infos: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, rule: str, message: str, *, severity: str = "violation") -> None:
        item = Violation(path, rule, message)
        if severity == "violation":
            self.violations.append(item)
        elif severity == "warning":
            self.warnings.append(item)
        else:
            self.infos.append(item)

    def extend(self, other: "ValidationReport") -> None:
        self.violations.extend(other.violations)
        self.warnings.extend(other.warnings)
        self.infos.extend(other.infos)

    def summary(self) -> str:
        if self.ok and not self.warnings:
            return "clean"
        parts = [str(v) for v in self.violations]
        parts += [f"(warning) {w}" for w in self.warnings]
        return "; ".join(parts) or "clean"

    def as_dict(self) -> dict:
        return {
            "violations": [vars(v) for v in self.violations],
            "warnings": [vars(v) for v in self.warnings],
            "infos": [vars(v) for v in self.infos],
        }
