"""Synchronic coherence checks over a probed credence function.

A credence function assembled from probe records is audited against the
norms a probabilistically coherent believer satisfies: negation
complementarity, additivity over logical partitions, monotonicity along
entailment, credence 1/0 for tautologies/contradictions, satisfiability of
the full-belief set, and assent/dissent symmetry.  Each check reports a
numeric residual and passes when it stays within tolerance; the report as a
whole is coherent when every check passes.  Diffing two reports over the
same propositions shows whether an external change to the model (fine-tune,
edit) degraded coherence.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence

from .credence import ProbeRecord
from .errors import CredalError
from .logic import (
    And,
    AtomRegistry,
    Formula,
    Not,
    Or,
    entails,
    is_contradiction,
    is_satisfiable,
    is_tautology,
    parse_formula,
    print_formula,
)

DEFAULT_THETA = 0.9
DEFAULT_TOLERANCE = 0.05
DEFAULT_ENTAILMENT_BUDGET = 10_000

NORM_NEGATION = "negation"
NORM_PARTITION = "partition"
NORM_ENTAILMENT = "entailment"
NORM_TAUTOLOGY = "tautology"
NORM_CONTRADICTION = "contradiction"
NORM_FULL_BELIEF = "full-belief-consistency"
NORM_SYMMETRY = "assent-dissent-symmetry"

ALL_NORMS = (
    NORM_NEGATION,
    NORM_PARTITION,
    NORM_ENTAILMENT,
    NORM_TAUTOLOGY,
    NORM_CONTRADICTION,
    NORM_FULL_BELIEF,
    NORM_SYMMETRY,
)


class AuditError(CredalError):
    """Base for audit-specific failures."""


class MissingProbeError(AuditError):
    """A check needs a formula that was never probed."""

    def __init__(self, formulas: Sequence[str]):
        super().__init__(f"missing probes for: {', '.join(formulas)}")
        self.formulas = tuple(formulas)


class UndefinedCredenceError(AuditError):
    """A check needs a credence that is undefined (non-responsive probe)."""


class NotAPartitionError(AuditError):
    """Cells are not pairwise inconsistent and jointly exhaustive."""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class NoEntailmentError(AuditError):
    """The premise does not entail the conclusion."""


class MismatchedReportsError(AuditError):
    """Two reports do not cover the same formulas and lexicon."""


@dataclass
class CredenceFunction:
    """Finite map from probed formulas to their records."""

    registry: AtomRegistry
    entries: dict[Formula, ProbeRecord]
    lexicon_name: str
    backend_id: str

    def __post_init__(self):
        for f, record in self.entries.items():
            if record.credence is not None and not 0.0 <= record.credence <= 1.0:
                raise AuditError(
                    f"credence {record.credence!r} for {print_formula(f)!r} "
                    "is outside [0, 1]"
                )

    @classmethod
    def from_records(
        cls, records: Iterable[ProbeRecord], registry: AtomRegistry
    ) -> "CredenceFunction":
        entries: dict[Formula, ProbeRecord] = {}
        lexicons, backends = set(), set()
        for record in records:
            entries[record.formula] = record  # later records supersede earlier
            lexicons.add(record.lexicon_name)
            backends.add(record.backend_id)
        return cls(
            registry=registry,
            entries=entries,
            lexicon_name=",".join(sorted(lexicons)) or "unknown",
            backend_id=",".join(sorted(backends)) or "unknown",
        )

    def formulas(self) -> list[Formula]:
        return sorted(self.entries, key=print_formula)

    def record_of(self, f: Formula) -> ProbeRecord:
        try:
            return self.entries[f]
        except KeyError:
            raise MissingProbeError([print_formula(f)]) from None

    def credence_of(self, f: Formula) -> float:
        record = self.record_of(f)
        if record.credence is None:
            raise UndefinedCredenceError(
                f"credence undefined for {print_formula(f)!r} (non-responsive probe)"
            )
        return record.credence

    def digest(self) -> str:
        payload = json.dumps(
            [
                [print_formula(f), self.entries[f].credence]
                for f in self.formulas()
            ]
            + [self.lexicon_name, self.backend_id],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class NormCheck:
    norm_id: str
    subjects: tuple[str, ...]
    residual: float
    passed: bool
    tolerance: float
    witness: Optional[tuple[str, ...]] = None
    note: str = ""

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.norm_id, self.subjects)

    def to_dict(self) -> dict:
        return {
            "norm_id": self.norm_id,
            "subjects": list(self.subjects),
            "residual": self.residual,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "witness": None if self.witness is None else list(self.witness),
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "NormCheck":
        return cls(
            norm_id=data["norm_id"],
            subjects=tuple(data["subjects"]),
            residual=float(data["residual"]),
            passed=bool(data["passed"]),
            tolerance=float(data["tolerance"]),
            witness=None if data.get("witness") is None else tuple(data["witness"]),
            note=data.get("note", ""),
        )


@dataclass
class AuditConfig:
    theta: float = DEFAULT_THETA
    tolerance: float = DEFAULT_TOLERANCE
    partitions: list[list[str]] = field(default_factory=list)
    entailment_budget: int = DEFAULT_ENTAILMENT_BUDGET
    checks_enabled: Optional[frozenset[str]] = None

    def enabled(self, norm_id: str) -> bool:
        return self.checks_enabled is None or norm_id in self.checks_enabled

    @classmethod
    def from_dict(cls, data: Mapping) -> "AuditConfig":
        checks = data.get("checks_enabled")
        return cls(
            theta=float(data.get("theta", DEFAULT_THETA)),
            tolerance=float(data.get("tolerance", DEFAULT_TOLERANCE)),
            partitions=[list(cells) for cells in data.get("partitions", [])],
            entailment_budget=int(
                data.get("entailment_budget", DEFAULT_ENTAILMENT_BUDGET)
            ),
            checks_enabled=None if checks is None else frozenset(checks),
        )

    @classmethod
    def load(cls, path: str) -> "AuditConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


# ---------------------------------------------------------------------------
# Individual checks
# ---------------------------------------------------------------------------


def negation_check(
    cf: CredenceFunction, f: Formula, tolerance: float = DEFAULT_TOLERANCE
) -> NormCheck:
    """cr(f) and cr(!f) should sum to one."""
    cr_f = cf.credence_of(f)
    cr_not_f = cf.credence_of(Not(f))
    residual = abs(cr_f + cr_not_f - 1.0)
    return NormCheck(
        norm_id=NORM_NEGATION,
        subjects=(print_formula(f), print_formula(Not(f))),
        residual=residual,
        passed=residual <= tolerance,
        tolerance=tolerance,
    )


def verify_partition(cells: Sequence[Formula], registry: AtomRegistry) -> None:
    """Raise NotAPartitionError unless cells are exhaustive and exclusive."""
    disjunction = cells[0]
    for cell in cells[1:]:
        disjunction = Or(disjunction, cell)
    result = is_satisfiable([Not(disjunction)], registry=registry)
    if result:
        raise NotAPartitionError(
            "cells are not jointly exhaustive", witness=result.witness
        )
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            result = is_satisfiable([And(cells[i], cells[j])], registry=registry)
            if result:
                raise NotAPartitionError(
                    f"cells {print_formula(cells[i])!r} and "
                    f"{print_formula(cells[j])!r} are jointly satisfiable",
                    witness=result.witness,
                )


def partition_check(
    cf: CredenceFunction,
    cells: Sequence[Formula],
    tolerance: float = DEFAULT_TOLERANCE,
) -> NormCheck:
    """Credences over a logical partition should sum to one."""
    if not cells:
        raise NotAPartitionError("a partition needs at least one cell")
    verify_partition(cells, cf.registry)
    total = sum(cf.credence_of(cell) for cell in cells)
    residual = abs(total - 1.0)
    return NormCheck(
        norm_id=NORM_PARTITION,
        subjects=tuple(print_formula(c) for c in cells),
        residual=residual,
        passed=residual <= tolerance,
        tolerance=tolerance,
    )


def entailment_check(
    cf: CredenceFunction,
    premise: Formula,
    conclusion: Formula,
    tolerance: float = DEFAULT_TOLERANCE,
) -> NormCheck:
    """Credence must not drop along an entailment."""
    if not entails(premise, conclusion):
        raise NoEntailmentError(
            f"{print_formula(premise)!r} does not entail "
            f"{print_formula(conclusion)!r}"
        )
    residual = max(0.0, cf.credence_of(premise) - cf.credence_of(conclusion))
    return NormCheck(
        norm_id=NORM_ENTAILMENT,
        subjects=(print_formula(premise), print_formula(conclusion)),
        residual=residual,
        passed=residual <= tolerance,
        tolerance=tolerance,
    )


def bound_checks(
    cf: CredenceFunction, tolerance: float = DEFAULT_TOLERANCE
) -> tuple[list[NormCheck], list[str]]:
    """Tautologies should get credence 1, contradictions 0.

    Undefined credences are skipped with a warning entry instead of failing.
    """
    checks: list[NormCheck] = []
    warnings: list[str] = []
    for f in cf.formulas():
        tautology = is_tautology(f)
        contradiction = not tautology and is_contradiction(f)
        if not tautology and not contradiction:
            continue
        record = cf.entries[f]
        if record.credence is None:
            warnings.append(
                f"skipped bound check for {print_formula(f)!r}: credence undefined"
            )
            continue
        if tautology:
            residual = 1.0 - record.credence
            norm_id = NORM_TAUTOLOGY
        else:
            residual = record.credence
            norm_id = NORM_CONTRADICTION
        checks.append(
            NormCheck(
                norm_id=norm_id,
                subjects=(print_formula(f),),
                residual=residual,
                passed=residual <= tolerance,
                tolerance=tolerance,
            )
        )
    return checks, warnings


def full_belief_consistency(
    cf: CredenceFunction, theta: float = DEFAULT_THETA
) -> NormCheck:
    """The set of outright beliefs (credence >= theta) must be satisfiable.

    On failure the witness is a minimal unsatisfiable core found by greedy
    deletion.  theta must exceed 0.5 so coherent credences can never push
    both f and !f into the belief set.
    """
    if not 0.5 < theta <= 1.0:
        raise AuditError(f"theta must lie in (0.5, 1], got {theta!r}")
    believed = [
        f
        for f in cf.formulas()
        if cf.entries[f].credence is not None and cf.entries[f].credence >= theta
    ]
    subjects = tuple(print_formula(f) for f in believed)
    if is_satisfiable(believed, registry=cf.registry):
        return NormCheck(
            norm_id=NORM_FULL_BELIEF,
            subjects=subjects,
            residual=0.0,
            passed=True,
            tolerance=0.0,
            note=f"theta={theta}",
        )
    core = list(believed)
    for f in list(core):
        trial = [g for g in core if g != f]
        if not is_satisfiable(trial, registry=cf.registry):
            core = trial
    return NormCheck(
        norm_id=NORM_FULL_BELIEF,
        subjects=subjects,
        residual=1.0,
        passed=False,
        tolerance=0.0,
        witness=tuple(print_formula(f) for f in core),
        note=f"theta={theta}",
    )


def symmetry_check(
    cf: CredenceFunction, f: Formula, tolerance: float = DEFAULT_TOLERANCE
) -> NormCheck:
    """as(!f) should equal ds(f), using the probed records for f and !f."""
    record_f = cf.record_of(f)
    record_not_f = cf.record_of(Not(f))
    residual = abs(record_not_f.as_value - record_f.ds_value)
    return NormCheck(
        norm_id=NORM_SYMMETRY,
        subjects=(print_formula(f), print_formula(Not(f))),
        residual=residual,
        passed=residual <= tolerance,
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    digest: str
    created_at: str
    lexicon_name: str
    backend_id: str
    theta: float
    tolerance: float
    formulas: tuple[str, ...]
    checks: list[NormCheck]
    warnings: list[str]
    coherent: bool
    config_digest: str = ""
    seed: int = 0

    @property
    def summary(self) -> dict[str, int]:
        by_norm: dict[str, int] = {}
        for check in self.checks:
            by_norm[check.norm_id] = by_norm.get(check.norm_id, 0) + 1
        return {
            "total": len(self.checks),
            "passed": sum(1 for c in self.checks if c.passed),
            "failed": sum(1 for c in self.checks if not c.passed),
            **{f"n_{norm}": count for norm, count in sorted(by_norm.items())},
        }

    def to_dict(self) -> dict:
        return {
            "digest": self.digest,
            "created_at": self.created_at,
            "lexicon_name": self.lexicon_name,
            "backend_id": self.backend_id,
            "theta": self.theta,
            "tolerance": self.tolerance,
            "formulas": list(self.formulas),
            "checks": [c.to_dict() for c in self.checks],
            "warnings": list(self.warnings),
            "coherent": self.coherent,
            "summary": self.summary,
            "config_digest": self.config_digest,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AuditReport":
        return cls(
            digest=data["digest"],
            created_at=data["created_at"],
            lexicon_name=data["lexicon_name"],
            backend_id=data["backend_id"],
            theta=float(data["theta"]),
            tolerance=float(data["tolerance"]),
            formulas=tuple(data["formulas"]),
            checks=[NormCheck.from_dict(c) for c in data["checks"]],
            warnings=list(data.get("warnings", [])),
            coherent=bool(data["coherent"]),
            config_digest=data.get("config_digest", ""),
            seed=int(data.get("seed", 0)),
        )

    def render_table(self) -> str:
        lines = [
            f"audit of {len(self.formulas)} formulas "
            f"(lexicon {self.lexicon_name}, backend {self.backend_id})",
            f"{'norm':<28} {'residual':>12} {'tol':>8}  {'result':<6} subjects",
            "-" * 96,
        ]
        for check in self.checks:
            subjects = "; ".join(check.subjects)
            if len(subjects) > 40:
                subjects = subjects[:37] + "..."
            result = "pass" if check.passed else "FAIL"
            lines.append(
                f"{check.norm_id:<28} {check.residual:>12.6g} "
                f"{check.tolerance:>8.3g}  {result:<6} {subjects}"
            )
            if check.witness:
                lines.append(f"{'':<28} witness: {'; '.join(check.witness)}")
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        summary = self.summary
        verdict = "COHERENT" if self.coherent else "INCOHERENT"
        lines.append(
            f"{verdict}: {summary['passed']}/{summary['total']} checks passed"
        )
        return "\n".join(lines)


def _discover_entailments(
    cf: CredenceFunction, budget: int
) -> tuple[list[tuple[Formula, Formula]], bool]:
    pairs = []
    formulas = [
        f for f in cf.formulas() if cf.entries[f].credence is not None
    ]
    calls = 0
    truncated = False
    for premise in formulas:
        for conclusion in formulas:
            if premise == conclusion:
                continue
            if calls >= budget:
                truncated = True
                return pairs, truncated
            calls += 1
            if entails(premise, conclusion):
                pairs.append((premise, conclusion))
    return pairs, truncated


def run_audit(cf: CredenceFunction, config: Optional[AuditConfig] = None) -> AuditReport:
    """Run every applicable check; never abort the audit on one bad check.

    Deterministic for a fixed credence function and config: formulas are
    visited in canonical-text order and check errors become warning entries.
    """
    if config is None:
        config = AuditConfig()
    if not cf.entries:
        raise AuditError("cannot audit an empty credence function")

    checks: list[NormCheck] = []
    warnings: list[str] = []

    def attempt(description: str, thunk) -> None:
        try:
            checks.append(thunk())
        except CredalError as exc:
            warnings.append(f"{description}: {type(exc).__name__}: {exc}")

    if config.enabled(NORM_NEGATION):
        for f in cf.formulas():
            if Not(f) in cf.entries:
                attempt(
                    f"negation check for {print_formula(f)!r}",
                    lambda f=f: negation_check(cf, f, config.tolerance),
                )

    if config.enabled(NORM_PARTITION):
        for cell_texts in config.partitions:
            def run_partition(cell_texts=cell_texts):
                cells = [
                    parse_formula(text, cf.registry, auto_register=False)
                    for text in cell_texts
                ]
                return partition_check(cf, cells, config.tolerance)

            attempt(f"partition check for {cell_texts!r}", run_partition)

    if config.enabled(NORM_ENTAILMENT):
        pairs, truncated = _discover_entailments(cf, config.entailment_budget)
        if truncated:
            warnings.append(
                "entailment discovery truncated by budget "
                f"({config.entailment_budget} satisfiability calls)"
            )
        for premise, conclusion in pairs:
            attempt(
                "entailment check",
                lambda p=premise, c=conclusion: entailment_check(
                    cf, p, c, config.tolerance
                ),
            )

    if config.enabled(NORM_TAUTOLOGY) or config.enabled(NORM_CONTRADICTION):
        bounds, bound_warnings = bound_checks(cf, config.tolerance)
        checks.extend(
            c
            for c in bounds
            if config.enabled(c.norm_id)
        )
        warnings.extend(bound_warnings)

    if config.enabled(NORM_FULL_BELIEF):
        attempt(
            "full-belief consistency",
            lambda: full_belief_consistency(cf, config.theta),
        )

    if config.enabled(NORM_SYMMETRY):
        for f in cf.formulas():
            if Not(f) in cf.entries:
                attempt(
                    f"assent-dissent symmetry for {print_formula(f)!r}",
                    lambda f=f: symmetry_check(cf, f, config.tolerance),
                )

    return AuditReport(
        digest=cf.digest(),
        created_at=datetime.now(timezone.utc).isoformat(),
        lexicon_name=cf.lexicon_name,
        backend_id=cf.backend_id,
        theta=config.theta,
        tolerance=config.tolerance,
        formulas=tuple(print_formula(f) for f in cf.formulas()),
        checks=checks,
        warnings=warnings,
        coherent=all(c.passed for c in checks),
    )


# ---------------------------------------------------------------------------
# Report diffing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualChange:
    norm_id: str
    subjects: tuple[str, ...]
    before: float
    after: float

    @property
    def delta(self) -> float:
        return self.after - self.before

    def to_dict(self) -> dict:
        return {
            "norm_id": self.norm_id,
            "subjects": list(self.subjects),
            "before": self.before,
            "after": self.after,
            "delta": self.delta,
        }


@dataclass
class ReportDelta:
    residual_changes: list[ResidualChange]
    newly_failing: list[tuple[str, tuple[str, ...]]]
    newly_passing: list[tuple[str, tuple[str, ...]]]
    added: list[tuple[str, tuple[str, ...]]]
    removed: list[tuple[str, tuple[str, ...]]]

    @property
    def empty(self) -> bool:
        return not (
            self.residual_changes
            or self.newly_failing
            or self.newly_passing
            or self.added
            or self.removed
        )

    def to_dict(self) -> dict:
        return {
            "residual_changes": [c.to_dict() for c in self.residual_changes],
            "newly_failing": [list((k[0], list(k[1]))) for k in self.newly_failing],
            "newly_passing": [list((k[0], list(k[1]))) for k in self.newly_passing],
            "added": [list((k[0], list(k[1]))) for k in self.added],
            "removed": [list((k[0], list(k[1]))) for k in self.removed],
            "empty": self.empty,
        }

    def render_table(self) -> str:
        if self.empty:
            return "no differences"
        lines = []
        for change in self.residual_changes:
            lines.append(
                f"{change.norm_id} [{'; '.join(change.subjects)}]: "
                f"residual {change.before:.6g} -> {change.after:.6g} "
                f"(delta {change.delta:+.6g})"
            )
        for label, keys in (
            ("newly failing", self.newly_failing),
            ("newly passing", self.newly_passing),
            ("added", self.added),
            ("removed", self.removed),
        ):
            for norm_id, subjects in keys:
                lines.append(f"{label}: {norm_id} [{'; '.join(subjects)}]")
        return "\n".join(lines)


def diff_reports(before: AuditReport, after: AuditReport) -> ReportDelta:
    """Per-norm residual deltas and pass/fail transitions between two audits."""
    if set(before.formulas) != set(after.formulas):
        raise MismatchedReportsError("reports cover different formula sets")
    if before.lexicon_name != after.lexicon_name:
        raise MismatchedReportsError(
            f"reports use different lexicons: {before.lexicon_name!r} vs "
            f"{after.lexicon_name!r}"
        )
    before_by_key = {c.key: c for c in before.checks}
    after_by_key = {c.key: c for c in after.checks}

    residual_changes = []
    newly_failing = []
    newly_passing = []
    for key in sorted(set(before_by_key) & set(after_by_key)):
        b, a = before_by_key[key], after_by_key[key]
        if a.residual != b.residual:
            residual_changes.append(
                ResidualChange(key[0], key[1], b.residual, a.residual)
            )
        if b.passed and not a.passed:
            newly_failing.append(key)
        elif not b.passed and a.passed:
            newly_passing.append(key)
    added = sorted(set(after_by_key) - set(before_by_key))
    removed = sorted(set(before_by_key) - set(after_by_key))
    return ReportDelta(
        residual_changes=residual_changes,
        newly_failing=newly_failing,
        newly_passing=newly_passing,
        added=added,
        removed=removed,
    )
