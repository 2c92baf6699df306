"""Service-layer orchestration: request models in, response models out.

The FastAPI routes and the local CLI client both call these functions, so
probing, auditing, dominance analysis, and report diffing behave
identically over HTTP and on the command line.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime, timezone

import numpy as np

from ..accuracy import (
    CredenceVector,
    brier_score,
    dominance_certificate,
    score_against_truth,
    world_vectors,
)
from ..audit import (
    AuditConfig,
    AuditReport,
    CredenceFunction,
    diff_reports,
    run_audit,
)
from ..backend import BackendConfig, make_backend
from ..credence import (
    AssentLexicon,
    DEFAULT_EPISTEMIC_MARKERS,
    NonResponsiveError,
    ProbeRecord,
    credence,
    default_lexicon,
    load_lexicon,
)
from ..errors import CredalError
from ..logic import AtomRegistry, Formula, Not, parse_formula, print_formula
from . import schemas


def _build_registry(atoms: list[schemas.AtomModel]) -> AtomRegistry:
    return AtomRegistry((a.id, a.surface) for a in atoms)


def _resolve_lexicon(
    model: schemas.LexiconModel | None, markers
) -> AssentLexicon:
    if model is None:
        return default_lexicon()
    return load_lexicon(model.model_dump(), markers=markers)


def _record_to_model(record: ProbeRecord) -> schemas.ProbeRecordModel:
    return schemas.ProbeRecordModel(**record.to_dict())


def _records_from_models(
    models: list[schemas.ProbeRecordModel], registry: AtomRegistry
) -> list[ProbeRecord]:
    return [ProbeRecord.from_dict(m.model_dump(), registry) for m in models]


def _lexicon_head_tokens(lexicon: AssentLexicon, backend) -> set[str]:
    return {
        backend.tokenize(surface)[0]
        for surface in lexicon.assent | lexicon.dissent
    }


def run_probe(request: schemas.ProbeRequest) -> schemas.ProbeResponse:
    """Probe each formula (and optionally its negation) for a credence."""
    registry = _build_registry(request.atoms)
    markers = (
        DEFAULT_EPISTEMIC_MARKERS
        if request.epistemic_markers is None
        else tuple(request.epistemic_markers)
    )
    global_lexicon = _resolve_lexicon(request.lexicon, markers)
    backend = make_backend(
        BackendConfig(
            kind=request.backend.kind,
            endpoint=request.backend.endpoint,
            top_k=request.backend.top_k,
            timeout_s=request.backend.timeout_s,
            max_parallel=request.backend.max_parallel,
            auth_env=request.backend.auth_env,
            backend_id=request.backend.backend_id,
            strict=request.backend.strict,
        ),
        script=request.backend.script,
        field_names=request.backend.field_names,
    )

    overrides = {
        text: load_lexicon(model.model_dump(), markers=markers)
        for text, model in request.lexicon_overrides.items()
    }

    targets: list[tuple[Formula, AssentLexicon]] = []
    seen: set[str] = set()

    def add(f: Formula, lexicon: AssentLexicon) -> None:
        text = print_formula(f)
        if text not in seen:
            seen.add(text)
            targets.append((f, lexicon))

    for text in request.formulas:
        f = parse_formula(text, registry)
        lexicon = overrides.get(print_formula(f), global_lexicon)
        add(f, lexicon)
        if request.include_negations:
            add(Not(f), lexicon)

    warnings: list[str] = []
    head_tokens = set()
    for _, lexicon in targets:
        head_tokens |= _lexicon_head_tokens(lexicon, backend)
    if request.backend.top_k < len(head_tokens):
        warnings.append(
            f"backend top_k={request.backend.top_k} is below the "
            f"{len(head_tokens)} distinct lexicon head tokens; some entries "
            "may only be bounded by the residual"
        )

    def probe_one(target: tuple[Formula, AssentLexicon]):
        f, lexicon = target
        return credence(
            f,
            registry,
            lexicon,
            backend,
            epsilon_resp=request.epsilon_resp,
            force_binary=request.force_binary,
        )

    records: list[ProbeRecord] = []
    errors: list[schemas.ProbeErrorModel] = []
    # fan out probe workers up to the backend's in-flight budget; results are
    # order-independent and sorted below
    workers = min(request.backend.max_parallel, max(1, len(targets)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(probe_one, target): target for target in targets}
        for future in as_completed(futures):
            f, _ = futures[future]
            try:
                records.append(future.result())
            except NonResponsiveError as exc:
                records.append(exc.record)
                warnings.append(
                    f"non-responsive probe for {exc.record.formula_text!r}"
                )
            except CredalError as exc:
                errors.append(
                    schemas.ProbeErrorModel(
                        formula=print_formula(f),
                        error=type(exc).__name__,
                        message=str(exc),
                    )
                )

    records.sort(key=lambda r: r.formula_text)
    errors.sort(key=lambda e: e.formula)
    warnings.sort()
    return schemas.ProbeResponse(
        records=[_record_to_model(r) for r in records],
        errors=errors,
        warnings=warnings,
    )


def _registry_for_records(
    atoms: list[schemas.AtomModel], records: list[schemas.ProbeRecordModel]
) -> tuple[AtomRegistry, list[ProbeRecord]]:
    registry = _build_registry(atoms)
    return registry, _records_from_models(records, registry)


def run_audit_request(request: schemas.AuditRequest) -> schemas.AuditResponse:
    """Assemble a credence function from records and audit it."""
    registry, records = _registry_for_records(request.atoms, request.records)
    cf = CredenceFunction.from_records(records, registry)
    config = AuditConfig.from_dict(request.config.model_dump())
    report = run_audit(cf, config)
    report.config_digest = request.config_digest
    report.seed = request.seed
    return schemas.AuditResponse(
        report=schemas.AuditReportModel(**report.to_dict()),
        rendered=report.render_table(),
    )


def run_dominate(request: schemas.DominateRequest) -> schemas.DominateResponse:
    """Project the probed credence vector and certify Brier dominance."""
    registry, records = _registry_for_records(request.atoms, request.records)
    cf = CredenceFunction.from_records(records, registry)
    if request.formulas is None:
        formulas = [
            f for f in cf.formulas() if cf.entries[f].credence is not None
        ]
    else:
        formulas = [parse_formula(text, registry) for text in request.formulas]
    if not formulas:
        raise CredalError("no responsive probed formulas to project")
    world_set = world_vectors(formulas, registry)
    vector = CredenceVector.from_credence_function(cf, formulas)
    certificate = dominance_certificate(
        vector,
        world_set,
        epsilon=request.epsilon_proj,
        max_iterations=request.max_iterations,
    )

    truth_brier_original = truth_brier_projected = None
    if request.truth is not None:
        truth_map = {
            parse_formula(text, registry): value
            for text, value in request.truth.items()
        }
        restricted = CredenceFunction(
            registry,
            {f: cf.entries[f] for f in formulas},
            cf.lexicon_name,
            cf.backend_id,
        )
        truth_brier_original = score_against_truth(restricted, truth_map)
        truth_vector = [truth_map[f] for f in formulas]
        truth_brier_projected = brier_score(
            np.asarray(certificate.projected), truth_vector
        )

    model = schemas.CertificateModel(
        **certificate.to_dict(),
        truth_brier_original=truth_brier_original,
        truth_brier_projected=truth_brier_projected,
        created_at=datetime.now(timezone.utc).isoformat(),
        lexicon_name=cf.lexicon_name,
        backend_id=cf.backend_id,
        config_digest=request.config_digest,
        seed=request.seed,
    )
    return schemas.DominateResponse(
        certificate=model, rendered=certificate.render_table()
    )


def run_diff(request: schemas.DiffRequest) -> schemas.DiffResponse:
    """Diff two audit reports over the same formulas and lexicon."""
    before = AuditReport.from_dict(request.before.model_dump())
    after = AuditReport.from_dict(request.after.model_dump())
    delta = diff_reports(before, after)

    def keys(pairs):
        return [
            schemas.CheckKeyModel(norm_id=norm_id, subjects=list(subjects))
            for norm_id, subjects in pairs
        ]

    return schemas.DiffResponse(
        residual_changes=[
            schemas.ResidualChangeModel(
                norm_id=c.norm_id,
                subjects=list(c.subjects),
                before=c.before,
                after=c.after,
                delta=c.delta,
            )
            for c in delta.residual_changes
        ],
        newly_failing=keys(delta.newly_failing),
        newly_passing=keys(delta.newly_passing),
        added=keys(delta.added),
        removed=keys(delta.removed),
        empty=delta.empty,
        rendered=delta.render_table(),
    )
