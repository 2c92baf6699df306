"""Credence extraction and coherence auditing for language-model beliefs.

Probes a next-token probability source with "Is it the case that ...?"
questions, turns the assent/dissent answer mass into credences, and audits
the resulting credence function against synchronic coherence norms:
probabilistic coherence, logical consistency of outright beliefs, and
Brier-score accuracy dominance.
"""

__version__ = "0.1.0"

from .accuracy import (
    BrierPair,
    CredenceVector,
    DominanceCertificate,
    ProjectionResult,
    WorldVectorSet,
    brier_score,
    dominance_certificate,
    project_onto_vertices,
    project_to_coherent,
    score_against_truth,
    world_vectors,
)
from .audit import (
    AuditConfig,
    AuditReport,
    CredenceFunction,
    NormCheck,
    ReportDelta,
    diff_reports,
    entailment_check,
    full_belief_consistency,
    negation_check,
    partition_check,
    run_audit,
    verify_partition,
)
from .backend import (
    Backend,
    BackendConfig,
    HttpBackend,
    MockBackend,
    Prompt,
    TokenDistribution,
    build_prompt,
    make_backend,
    render_formula,
    script_key,
    sequence_probability,
)
from .credence import (
    AssentLexicon,
    NonResponsiveError,
    ProbeRecord,
    assent_dissent_symmetry_residual,
    assent_probability,
    credence,
    default_lexicon,
    dissent_probability,
    load_lexicon,
    yes_no_credence,
    yes_no_lexicon,
)
from .errors import CredalError
from .logic import (
    And,
    Atom,
    AtomRegistry,
    Formula,
    Implies,
    Not,
    Or,
    World,
    atoms_of,
    canonical_text,
    entails,
    enumerate_worlds,
    evaluate,
    is_satisfiable,
    parse_formula,
    print_formula,
)
