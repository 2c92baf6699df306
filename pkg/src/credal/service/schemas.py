"""Pydantic request/response models for the REST service.

The CLI speaks the same models, so every payload documented here can be
produced either by an HTTP client or by the thin local client.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field


class AtomModel(BaseModel):
    id: str
    surface: str


class BackendSpecModel(BaseModel):
    """Where next-token probabilities come from.

    Mock backends carry their script inline; HTTP backends point at a
    logprob endpoint and authenticate via the named environment variable.
    """

    kind: Literal["mock", "http"] = "mock"
    script: Optional[dict[str, Any]] = None
    endpoint: Optional[str] = None
    top_k: int = 16
    timeout_s: float = 30.0
    max_parallel: int = 4
    auth_env: Optional[str] = None
    backend_id: Optional[str] = None
    strict: bool = True
    field_names: Optional[dict[str, str]] = None  # overrides for the HTTP contract


class LexiconModel(BaseModel):
    name: str
    assent: list[str]
    dissent: list[str]


class ProbeRequest(BaseModel):
    atoms: list[AtomModel] = Field(default_factory=list)
    formulas: list[str]
    backend: BackendSpecModel
    lexicon: Optional[LexiconModel] = None  # defaults to the shipped lexicon
    lexicon_overrides: dict[str, LexiconModel] = Field(default_factory=dict)
    epistemic_markers: Optional[list[str]] = None
    include_negations: bool = True
    force_binary: bool = False
    epsilon_resp: float = 1e-6


class ProbeRecordModel(BaseModel):
    formula: str
    prompt_text: str
    template_id: str
    as_value: float
    ds_value: float
    credence: Optional[float]
    approximate: bool
    responsive: bool
    digest: list[tuple[str, float]] = Field(default_factory=list)
    digest_residual: float = 0.0
    timestamp: str = ""
    backend_id: str
    lexicon_name: str


class ProbeErrorModel(BaseModel):
    formula: str
    error: str
    message: str


class ProbeResponse(BaseModel):
    records: list[ProbeRecordModel]
    errors: list[ProbeErrorModel] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)


class AuditConfigModel(BaseModel):
    theta: float = 0.9
    tolerance: float = 0.05
    partitions: list[list[str]] = Field(default_factory=list)
    entailment_budget: int = 10_000
    checks_enabled: Optional[list[str]] = None


class AuditRequest(BaseModel):
    atoms: list[AtomModel] = Field(default_factory=list)
    records: list[ProbeRecordModel]
    config: AuditConfigModel = Field(default_factory=AuditConfigModel)
    config_digest: str = ""
    seed: int = 0


class NormCheckModel(BaseModel):
    norm_id: str
    subjects: list[str]
    residual: float
    passed: bool
    tolerance: float
    witness: Optional[list[str]] = None
    note: str = ""


class AuditReportModel(BaseModel):
    digest: str
    created_at: str
    lexicon_name: str
    backend_id: str
    theta: float
    tolerance: float
    formulas: list[str]
    checks: list[NormCheckModel]
    warnings: list[str] = Field(default_factory=list)
    coherent: bool
    summary: dict[str, int] = Field(default_factory=dict)
    config_digest: str = ""
    seed: int = 0


class AuditResponse(BaseModel):
    report: AuditReportModel
    rendered: str


class DominateRequest(BaseModel):
    atoms: list[AtomModel] = Field(default_factory=list)
    records: list[ProbeRecordModel]
    formulas: Optional[list[str]] = None  # default: all responsive, sorted
    epsilon_proj: float = 1e-7
    max_iterations: int = 10_000
    truth: Optional[dict[str, int]] = None
    config_digest: str = ""
    seed: int = 0


class BrierPairModel(BaseModel):
    vector: list[int]
    world_count: int
    brier_original: float
    brier_projected: float


class CertificateModel(BaseModel):
    formulas: list[str]
    original: list[float]
    projected: list[float]
    hull_distance: float
    strictly_dominates: bool
    epsilon_proj: float
    iterations: int
    duality_gap: float
    pairs: list[BrierPairModel]
    truth_brier_original: Optional[float] = None
    truth_brier_projected: Optional[float] = None
    created_at: str = ""
    lexicon_name: str = ""
    backend_id: str = ""
    config_digest: str = ""
    seed: int = 0


class DominateResponse(BaseModel):
    certificate: CertificateModel
    rendered: str


class DiffRequest(BaseModel):
    before: AuditReportModel
    after: AuditReportModel


class ResidualChangeModel(BaseModel):
    norm_id: str
    subjects: list[str]
    before: float
    after: float
    delta: float


class CheckKeyModel(BaseModel):
    norm_id: str
    subjects: list[str]


class DiffResponse(BaseModel):
    residual_changes: list[ResidualChangeModel]
    newly_failing: list[CheckKeyModel]
    newly_passing: list[CheckKeyModel]
    added: list[CheckKeyModel]
    removed: list[CheckKeyModel]
    empty: bool
    rendered: str


class HealthResponse(BaseModel):
    status: str
    version: str
