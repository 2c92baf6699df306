"""Credences from assent/dissent mass in next-token distributions.

The credence in a proposition is the share of answer mass that goes to
assenting: cr = as / (as + ds), where as and ds sum the chain-rule
probabilities of every assent and dissent surface after the probe question.
Mass on anything else (hedges, refusals, chatter) is deliberately left out;
if there is almost no answer mass at all the probe is non-responsive and the
credence is undefined.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from importlib import resources
from typing import Mapping, Optional, Sequence, Union

from .backend import (
    Backend,
    Prompt,
    SequenceProbability,
    TEMPLATE_BINARY,
    TEMPLATE_DEFAULT,
    build_prompt,
    sequence_probability,
)
from .errors import CredalError
from .logic import AtomRegistry, Formula, Not, print_formula

DEFAULT_EPSILON_RESP = 1e-6

#: Phrases that report on the speaker's own epistemic state.  Entries
#: containing one of these never belong in an assent/dissent lexicon: the
#: match between hedging and credence is a further norm to audit, not an
#: ingredient of credence.
DEFAULT_EPISTEMIC_MARKERS = (
    "i am sure",
    "i'm sure",
    "i am quite sure",
    "i am certain",
    "i'm certain",
    "i am quite certain",
    "certainly that",
    "i am not sure",
    "i doubt",
    "it seems",
    "it is doubtful",
    "probably",
    "perhaps",
    "maybe",
    "i think",
    "i believe",
    "i guess",
    "likely",
)


class LexiconError(CredalError):
    """An assent/dissent lexicon violates its construction rules."""


class NonResponsiveError(CredalError):
    """Assent plus dissent mass fell below the responsiveness threshold.

    Carries the probe record (with undefined credence) so callers can still
    persist what was observed.
    """

    def __init__(self, message: str, record: "ProbeRecord"):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class AssentLexicon:
    """Named sets of assent and dissent surface strings."""

    name: str
    assent: frozenset[str]
    dissent: frozenset[str]

    def __post_init__(self):
        overlap = self.assent & self.dissent
        if overlap:
            raise LexiconError(f"assent and dissent overlap: {sorted(overlap)!r}")


def load_lexicon(
    source: Union[str, Mapping],
    markers: Sequence[str] = DEFAULT_EPISTEMIC_MARKERS,
) -> AssentLexicon:
    """Load and validate a lexicon from a JSON file path or parsed mapping.

    Entries containing a configured epistemic marker are rejected outright.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    else:
        data = source
    try:
        name = data["name"]
        assent = [str(s) for s in data["assent"]]
        dissent = [str(s) for s in data["dissent"]]
    except (KeyError, TypeError) as exc:
        raise LexiconError(f"lexicon needs name/assent/dissent fields: {exc}") from exc
    for entry in assent + dissent:
        if not entry.strip():
            raise LexiconError("lexicon entries must be non-empty")
        lowered = entry.lower()
        for marker in markers:
            if marker in lowered:
                raise LexiconError(
                    f"entry {entry!r} contains epistemic marker {marker!r}"
                )
    return AssentLexicon(name, frozenset(assent), frozenset(dissent))


def _packaged_lexicon(filename: str) -> AssentLexicon:
    data = resources.files("credal.data.lexicons").joinpath(filename).read_text()
    return load_lexicon(json.loads(data))


def default_lexicon() -> AssentLexicon:
    """The shipped general lexicon (pin by name: default/v1)."""
    return _packaged_lexicon("default_v1.json")


def yes_no_lexicon() -> AssentLexicon:
    """Bare yes/no restriction with case and leading-space variants."""
    return _packaged_lexicon("yes_no_v1.json")


@dataclass(frozen=True)
class ProbeRecord:
    """One probed proposition: the question, the answer mass, the credence."""

    formula: Formula
    formula_text: str
    prompt: Prompt
    as_value: float
    ds_value: float
    credence: Optional[float]
    approximate: bool
    responsive: bool
    digest: tuple[tuple[str, float], ...]
    digest_residual: float
    timestamp: str
    backend_id: str
    lexicon_name: str

    def __post_init__(self):
        if self.as_value < 0.0 or self.ds_value < 0.0:
            raise CredalError("assent/dissent mass must be non-negative")
        if self.as_value + self.ds_value > 1.0 + 1e-6:
            raise CredalError(
                "assent plus dissent mass exceeds 1; check the lexicon for "
                "entries that are prefixes of each other"
            )
        if (self.credence is None) == self.responsive:
            raise CredalError("credence must be defined exactly when responsive")

    def to_dict(self) -> dict:
        return {
            "formula": self.formula_text,
            "prompt_text": self.prompt.text,
            "template_id": self.prompt.template_id,
            "as_value": self.as_value,
            "ds_value": self.ds_value,
            "credence": self.credence,
            "approximate": self.approximate,
            "responsive": self.responsive,
            "digest": [[t, p] for t, p in self.digest],
            "digest_residual": self.digest_residual,
            "timestamp": self.timestamp,
            "backend_id": self.backend_id,
            "lexicon_name": self.lexicon_name,
        }

    @classmethod
    def from_dict(cls, data: Mapping, registry: AtomRegistry) -> "ProbeRecord":
        from .logic import parse_formula

        formula = parse_formula(data["formula"], registry)
        return cls(
            formula=formula,
            formula_text=print_formula(formula),
            prompt=Prompt(data["prompt_text"], data["template_id"]),
            as_value=float(data["as_value"]),
            ds_value=float(data["ds_value"]),
            credence=None if data["credence"] is None else float(data["credence"]),
            approximate=bool(data["approximate"]),
            responsive=bool(data["responsive"]),
            digest=tuple((str(t), float(p)) for t, p in data.get("digest", [])),
            digest_residual=float(data.get("digest_residual", 0.0)),
            timestamp=str(data.get("timestamp", "")),
            backend_id=str(data["backend_id"]),
            lexicon_name=str(data["lexicon_name"]),
        )


def _surface_mass(
    surfaces: frozenset[str], prompt: Prompt, backend: Backend
) -> SequenceProbability:
    total = []
    approximate = False
    for surface in sorted(surfaces):
        result = sequence_probability(backend, prompt, backend.tokenize(surface))
        total.append(result.value)
        approximate = approximate or result.approximate
    return SequenceProbability(math.fsum(total), approximate)


def assent_probability(
    f: Formula,
    registry: AtomRegistry,
    lexicon: AssentLexicon,
    backend: Backend,
    template_id: str = TEMPLATE_DEFAULT,
) -> SequenceProbability:
    """Total probability of answering with any assent surface."""
    prompt = build_prompt(f, registry, template_id)
    return _surface_mass(lexicon.assent, prompt, backend)


def dissent_probability(
    f: Formula,
    registry: AtomRegistry,
    lexicon: AssentLexicon,
    backend: Backend,
    template_id: str = TEMPLATE_DEFAULT,
) -> SequenceProbability:
    """Total probability of answering with any dissent surface."""
    prompt = build_prompt(f, registry, template_id)
    return _surface_mass(lexicon.dissent, prompt, backend)


def _exact_ratio(as_value: float, ds_value: float) -> float:
    # Single correctly-rounded division: Fraction avoids the double rounding
    # of float(as) / (float(as) + float(ds)), which turns 0.6/0.8 into
    # 0.7499999999999999 instead of 0.75.
    return float(Fraction(as_value) / (Fraction(as_value) + Fraction(ds_value)))


def credence(
    f: Formula,
    registry: AtomRegistry,
    lexicon: AssentLexicon,
    backend: Backend,
    epsilon_resp: float = DEFAULT_EPSILON_RESP,
    force_binary: bool = False,
    digest_limit: int = 16,
) -> ProbeRecord:
    """Probe one formula and compute its credence.

    Raises :class:`NonResponsiveError` (carrying the record) when the
    combined answer mass stays below ``epsilon_resp``; the model is then
    answering with something unrelated to assent or dissent.
    """
    template_id = TEMPLATE_BINARY if force_binary else TEMPLATE_DEFAULT
    prompt = build_prompt(f, registry, template_id)
    as_result = _surface_mass(lexicon.assent, prompt, backend)
    ds_result = _surface_mass(lexicon.dissent, prompt, backend)
    first_step = backend.next_token_distribution(prompt, ())
    total = as_result.value + ds_result.value
    responsive = total >= epsilon_resp
    record = ProbeRecord(
        formula=f,
        formula_text=print_formula(f),
        prompt=prompt,
        as_value=as_result.value,
        ds_value=ds_result.value,
        credence=_exact_ratio(as_result.value, ds_result.value) if responsive else None,
        approximate=as_result.approximate or ds_result.approximate,
        responsive=responsive,
        digest=tuple(first_step.head(digest_limit)),
        digest_residual=first_step.residual,
        timestamp=datetime.now(timezone.utc).isoformat(),
        backend_id=backend.backend_id,
        lexicon_name=lexicon.name,
    )
    if not responsive:
        raise NonResponsiveError(
            f"answer mass {total!r} below threshold {epsilon_resp!r} for "
            f"{record.formula_text!r}",
            record,
        )
    return record


def yes_no_credence(
    f: Formula,
    registry: AtomRegistry,
    backend: Backend,
    epsilon_resp: float = DEFAULT_EPSILON_RESP,
    force_binary: bool = False,
) -> ProbeRecord:
    """Credence with the lexicon restricted to bare yes/no variants."""
    return credence(
        f,
        registry,
        yes_no_lexicon(),
        backend,
        epsilon_resp=epsilon_resp,
        force_binary=force_binary,
    )


def assent_dissent_symmetry_residual(
    f: Formula,
    registry: AtomRegistry,
    lexicon: AssentLexicon,
    backend: Backend,
    template_id: str = TEMPLATE_DEFAULT,
) -> float:
    """|as(not-f) - ds(f)|: a rationality diagnostic, never folded into cr.

    Equality of assenting-to-the-negation and dissenting is something a
    rational answerer should exhibit, not part of what credence is.
    """
    as_negation = assent_probability(Not(f), registry, lexicon, backend, template_id)
    ds_plain = dissent_probability(f, registry, lexicon, backend, template_id)
    return abs(as_negation.value - ds_plain.value)
