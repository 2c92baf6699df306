"""Propositional logic over natural-language atoms.

Formulas are immutable ASTs whose leaves are atoms carrying both a short
identifier and the natural-language sentence they stand for.  The module
provides parsing and printing (mutually inverse), classical evaluation over
possible worlds, world enumeration, a DPLL satisfiability check, and
entailment.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

from .errors import CredalError

#: Worlds are enumerated as bit vectors held in memory; 2^20 is the desk-scale
#: ceiling.  DPLL does not enumerate, so it gets a higher cap of its own.
DEFAULT_ENUMERATION_CAP = 20
DEFAULT_SAT_ATOM_CAP = 64

_IDENT_RE = re.compile(r"[a-zA-Z_][a-zA-Z0-9_]*\Z")


class FormulaSyntaxError(CredalError):
    """Formula text does not conform to the grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownAtomError(CredalError):
    """An atom id or surface is not present in the registry."""


class DuplicateAtomError(CredalError):
    """An atom id or surface would be registered twice with different data."""


class MissingAtomError(CredalError):
    """A world does not assign a truth value to a required atom."""


class AtomCapExceededError(CredalError):
    """The number of atoms exceeds the configured cap for an operation."""


@dataclass(frozen=True)
class Atom:
    id: str
    surface: str


@dataclass(frozen=True)
class Not:
    operand: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, Not, And, Or, Implies]


class AtomRegistry:
    """Ordered id -> surface table for atoms.

    Ids and surfaces are both unique (surfaces must be unique so that quoted
    sentences in formula text resolve to a single atom).  Order is fixed by
    insertion and drives world enumeration and vector layouts.
    """

    def __init__(self, atoms: Iterable[tuple[str, str]] = ()):
        self._surface_by_id: dict[str, str] = {}
        self._id_by_surface: dict[str, str] = {}
        for atom_id, surface in atoms:
            self.add(atom_id, surface)

    def add(self, atom_id: str, surface: str) -> Atom:
        if not _IDENT_RE.match(atom_id):
            raise DuplicateAtomError(f"invalid atom id {atom_id!r}")
        existing = self._surface_by_id.get(atom_id)
        if existing is not None:
            if existing != surface:
                raise DuplicateAtomError(
                    f"atom id {atom_id!r} already registered with surface {existing!r}"
                )
            return Atom(atom_id, surface)
        other = self._id_by_surface.get(surface)
        if other is not None:
            raise DuplicateAtomError(
                f"surface {surface!r} already registered under id {other!r}"
            )
        self._surface_by_id[atom_id] = surface
        self._id_by_surface[surface] = atom_id
        return Atom(atom_id, surface)

    def atom(self, atom_id: str) -> Atom:
        try:
            return Atom(atom_id, self._surface_by_id[atom_id])
        except KeyError:
            raise UnknownAtomError(f"unknown atom id {atom_id!r}") from None

    def by_surface(self, surface: str) -> Optional[Atom]:
        atom_id = self._id_by_surface.get(surface)
        if atom_id is None:
            return None
        return Atom(atom_id, surface)

    def surface(self, atom_id: str) -> Optional[str]:
        return self._surface_by_id.get(atom_id)

    def ids(self) -> tuple[str, ...]:
        return tuple(self._surface_by_id)

    def __len__(self) -> int:
        return len(self._surface_by_id)

    def __contains__(self, atom_id: str) -> bool:
        return atom_id in self._surface_by_id

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(self._surface_by_id.items())

    def to_json(self) -> list[dict[str, str]]:
        return [{"id": i, "surface": s} for i, s in self]

    @classmethod
    def from_json(cls, data: Iterable[dict[str, str]]) -> "AtomRegistry":
        return cls((entry["id"], entry["surface"]) for entry in data)

    def _slug_for(self, surface: str) -> str:
        base = re.sub(r"[^a-zA-Z0-9]+", "_", surface).strip("_").lower() or "atom"
        if base[0].isdigit():
            base = "a_" + base
        slug = base
        n = 2
        while slug in self._surface_by_id:
            slug = f"{base}_{n}"
            n += 1
        return slug

    def resolve_surface(self, surface: str, auto_register: bool) -> Atom:
        """Atom for a quoted sentence, registering a slug id if allowed."""
        atom = self.by_surface(surface)
        if atom is not None:
            return atom
        if not auto_register:
            raise UnknownAtomError(f"no atom registered for surface {surface!r}")
        return self.add(self._slug_for(surface), surface)

    def resolve_id(self, atom_id: str, auto_register: bool) -> Atom:
        """Atom for a bare identifier, registering surface=id if allowed."""
        if atom_id in self:
            return self.atom(atom_id)
        if not auto_register:
            raise UnknownAtomError(f"unknown atom id {atom_id!r}")
        return self.add(atom_id, atom_id)


@dataclass(frozen=True)
class World:
    """Total truth assignment over a registry's atoms (values 0/1)."""

    assignment: dict[str, int]

    def value(self, atom_id: str) -> int:
        try:
            return self.assignment[atom_id]
        except KeyError:
            raise MissingAtomError(f"world has no value for atom {atom_id!r}") from None


# ---------------------------------------------------------------------------
# Parsing and printing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<ident>[a-zA-Z_][a-zA-Z0-9_]*)"
    r'|(?P<string>"(?:[^"\\]|\\.)*")'
    r"|(?P<arrow>->)"
    r"|(?P<punct>[!&|()]))"
)


def _tokenize_formula(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise FormulaSyntaxError(f"unexpected character {stripped[0]!r}", at)
        kind = match.lastgroup
        value = match.group(kind)
        tokens.append((kind, value, match.start(kind)))
        pos = match.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, registry: AtomRegistry, auto_register: bool):
        self.tokens = _tokenize_formula(text)
        self.index = 0
        self.registry = registry
        self.auto_register = auto_register

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.index]

    def advance(self) -> tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def parse(self) -> Formula:
        formula = self.implies()
        kind, value, pos = self.peek()
        if kind != "eof":
            raise FormulaSyntaxError(f"unexpected token {value!r}", pos)
        return formula

    def implies(self) -> Formula:
        left = self.disjunction()
        kind, _, _ = self.peek()
        if kind == "arrow":
            self.advance()
            return Implies(left, self.implies())
        return left

    def disjunction(self) -> Formula:
        node = self.conjunction()
        while self.peek()[:2] == ("punct", "|"):
            self.advance()
            node = Or(node, self.conjunction())
        return node

    def conjunction(self) -> Formula:
        node = self.unary()
        while self.peek()[:2] == ("punct", "&"):
            self.advance()
            node = And(node, self.unary())
        return node

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if (kind, value) == ("punct", "!"):
            self.advance()
            return Not(self.unary())
        return self.primary()

    def primary(self) -> Formula:
        kind, value, pos = self.advance()
        if kind == "ident":
            return self.registry.resolve_id(value, self.auto_register)
        if kind == "string":
            surface = re.sub(r"\\(.)", r"\1", value[1:-1])
            return self.registry.resolve_surface(surface, self.auto_register)
        if (kind, value) == ("punct", "("):
            inner = self.implies()
            kind, value, pos = self.advance()
            if (kind, value) != ("punct", ")"):
                raise FormulaSyntaxError("expected ')'", pos)
            return inner
        if kind == "eof":
            raise FormulaSyntaxError("unexpected end of input", pos)
        raise FormulaSyntaxError(f"unexpected token {value!r}", pos)


def parse_formula(
    text: str, registry: AtomRegistry, auto_register: bool = True
) -> Formula:
    """Parse formula text against a registry.

    Bare identifiers and quoted sentences not present in the registry are
    auto-registered unless ``auto_register`` is off, in which case parsing
    raises :class:`UnknownAtomError`.
    """
    return _Parser(text, registry, auto_register).parse()


_PRECEDENCE = {Implies: 1, Or: 2, And: 3, Not: 4, Atom: 5}


def print_formula(f: Formula) -> str:
    """Canonical text for a formula; parses back to the identical AST."""

    def render(node: Formula, min_prec: int) -> str:
        prec = _PRECEDENCE[type(node)]
        if isinstance(node, Atom):
            text = node.id
        elif isinstance(node, Not):
            text = "!" + render(node.operand, 4)
        elif isinstance(node, And):
            text = f"{render(node.left, 3)} & {render(node.right, 4)}"
        elif isinstance(node, Or):
            text = f"{render(node.left, 2)} | {render(node.right, 3)}"
        else:
            # right-associative: the right child may be another implication
            text = f"{render(node.left, 2)} -> {render(node.right, 1)}"
        if prec < min_prec:
            return f"({text})"
        return text

    return render(f, 1)


canonical_text = print_formula


# ---------------------------------------------------------------------------
# Semantics
# ---------------------------------------------------------------------------


def atoms_of(f: Formula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset((f.id,))
    if isinstance(f, Not):
        return atoms_of(f.operand)
    return atoms_of(f.left) | atoms_of(f.right)


def evaluate(f: Formula, w: World) -> int:
    """Classical two-valued semantics; 1 for true, 0 for false."""
    if isinstance(f, Atom):
        return w.value(f.id)
    if isinstance(f, Not):
        return 1 - evaluate(f.operand, w)
    if isinstance(f, And):
        return evaluate(f.left, w) & evaluate(f.right, w)
    if isinstance(f, Or):
        return evaluate(f.left, w) | evaluate(f.right, w)
    return (1 - evaluate(f.left, w)) | evaluate(f.right, w)


def enumerate_worlds(
    registry: AtomRegistry, max_atoms: int = DEFAULT_ENUMERATION_CAP
) -> list[World]:
    """All 2^n worlds in binary counting order over the registry's atoms.

    The first registered atom is the most significant bit, so world 0 makes
    everything false and the last world makes everything true.
    """
    ids = registry.ids()
    n = len(ids)
    if n > max_atoms:
        raise AtomCapExceededError(
            f"{n} atoms exceed the enumeration cap of {max_atoms}"
        )
    worlds = []
    for index in range(1 << n):
        assignment = {ids[j]: (index >> (n - 1 - j)) & 1 for j in range(n)}
        worlds.append(World(assignment))
    return worlds


# ---------------------------------------------------------------------------
# Satisfiability (DPLL over direct CNF)
# ---------------------------------------------------------------------------

_Literal = tuple[str, bool]
_Clause = frozenset


def _nnf(f: Formula, positive: bool) -> Formula:
    if isinstance(f, Atom):
        return f if positive else Not(f)
    if isinstance(f, Not):
        return _nnf(f.operand, not positive)
    if isinstance(f, And):
        ctor = And if positive else Or
        return ctor(_nnf(f.left, positive), _nnf(f.right, positive))
    if isinstance(f, Or):
        ctor = Or if positive else And
        return ctor(_nnf(f.left, positive), _nnf(f.right, positive))
    if positive:
        return Or(_nnf(f.left, False), _nnf(f.right, True))
    return And(_nnf(f.left, True), _nnf(f.right, False))


def _cnf_clauses(f: Formula) -> list[_Clause]:
    """CNF of a formula already in negation normal form."""
    if isinstance(f, Atom):
        return [frozenset(((f.id, True),))]
    if isinstance(f, Not):
        return [frozenset(((f.operand.id, False),))]  # NNF: operand is an Atom
    if isinstance(f, And):
        return _cnf_clauses(f.left) + _cnf_clauses(f.right)
    left, right = _cnf_clauses(f.left), _cnf_clauses(f.right)
    merged = []
    for cl in left:
        for cr in right:
            clause = cl | cr
            if any((atom, not pol) in clause for atom, pol in clause):
                continue  # tautological clause
            merged.append(clause)
    return merged


def _dpll(clauses: list[_Clause], assignment: dict[str, bool]) -> Optional[dict[str, bool]]:
    while True:
        simplified = []
        unit: Optional[_Literal] = None
        for clause in clauses:
            satisfied = False
            remaining = []
            for atom, pol in clause:
                value = assignment.get(atom)
                if value is None:
                    remaining.append((atom, pol))
                elif value == pol:
                    satisfied = True
                    break
            if satisfied:
                continue
            if not remaining:
                return None  # conflict
            if len(remaining) == 1 and unit is None:
                unit = remaining[0]
            simplified.append(frozenset(remaining))
        clauses = simplified
        if not clauses:
            return assignment
        if unit is None:
            break
        assignment = dict(assignment)
        assignment[unit[0]] = unit[1]

    branch_atom = min(atom for clause in clauses for atom, _ in clause)
    for value in (True, False):
        trial = dict(assignment)
        trial[branch_atom] = value
        result = _dpll(clauses, trial)
        if result is not None:
            return result
    return None


@dataclass(frozen=True)
class SatResult:
    satisfiable: bool
    witness: Optional[World]

    def __bool__(self) -> bool:
        return self.satisfiable


def is_satisfiable(
    formulas: Iterable[Formula],
    registry: Optional[AtomRegistry] = None,
    max_atoms: int = DEFAULT_SAT_ATOM_CAP,
) -> SatResult:
    """Joint satisfiability of a set of formulas, with a witness world.

    The witness is total over the registry's atoms when a registry is given
    (unconstrained atoms default to false), otherwise over the formulas'
    atoms.  Agrees with truth-table enumeration on every input.
    """
    formulas = list(formulas)
    atom_ids = set()
    for f in formulas:
        atom_ids |= atoms_of(f)
    if registry is not None:
        atom_ids |= set(registry.ids())
    if len(atom_ids) > max_atoms:
        raise AtomCapExceededError(
            f"{len(atom_ids)} atoms exceed the satisfiability cap of {max_atoms}"
        )

    clauses = []
    for f in formulas:
        clauses.extend(_cnf_clauses(_nnf(f, True)))
    model = _dpll(clauses, {})
    if model is None:
        return SatResult(False, None)
    assignment = {atom_id: int(model.get(atom_id, False)) for atom_id in sorted(atom_ids)}
    return SatResult(True, World(assignment))


def entails(
    premise: Formula, conclusion: Formula, max_atoms: int = DEFAULT_SAT_ATOM_CAP
) -> bool:
    """premise |= conclusion, via unsatisfiability of {premise, !conclusion}."""
    return not is_satisfiable([premise, Not(conclusion)], max_atoms=max_atoms)


def is_tautology(f: Formula, max_atoms: int = DEFAULT_SAT_ATOM_CAP) -> bool:
    return not is_satisfiable([Not(f)], max_atoms=max_atoms)


def is_contradiction(f: Formula, max_atoms: int = DEFAULT_SAT_ATOM_CAP) -> bool:
    return not is_satisfiable([f], max_atoms=max_atoms)


def registry_from_file(path: str) -> AtomRegistry:
    """Registry from a JSON array of {id, surface} entries."""
    with open(path, "r", encoding="utf-8") as handle:
        return AtomRegistry.from_json(json.load(handle))
