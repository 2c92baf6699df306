"""Brier accuracy, the coherent polytope, and dominance certificates.

A credence vector over n propositions is coherent exactly when it lies in
the convex hull of the world truth-value vectors (the credences extendable
to a probability function over worlds).  An incoherent vector is strictly
beaten in Brier score at every possible world by its Euclidean projection
onto that hull: for the projection x* of c and any vertex v of the hull,
||v - x*||^2 <= ||v - c||^2 - ||c - x*||^2.  The projection is computed by
Frank-Wolfe with away steps, whose linear subproblem is a scan over the
enumerated vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .audit import CredenceFunction, MissingProbeError
from .errors import CredalError
from .logic import (
    AtomRegistry,
    Formula,
    Not,
    enumerate_worlds,
    evaluate,
    is_satisfiable,
    print_formula,
)

DEFAULT_EPSILON_PROJ = 1e-7
DEFAULT_MAX_ITERATIONS = 10_000


class DimensionMismatchError(CredalError):
    """Vector lengths do not line up."""


class InconsistentTruthError(CredalError):
    """A supplied truth assignment is not logically possible."""


class NonConvergenceError(CredalError):
    """Projection did not reach its duality-gap target; carries best iterate."""

    def __init__(self, message: str, result: "ProjectionResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True, eq=False)
class WorldVectorSet:
    """Distinct truth-value vectors of the formulas across all worlds."""

    formulas: tuple[Formula, ...]
    texts: tuple[str, ...]
    vectors: np.ndarray  # shape (m, n), entries 0.0/1.0
    counts: tuple[int, ...]  # worlds per distinct vector


def world_vectors(
    formulas: Sequence[Formula],
    registry: AtomRegistry,
    max_atoms: int = 20,
) -> WorldVectorSet:
    """Evaluate each formula at each world; deduplicate identical tuples.

    Vectors appear in order of first occurrence over the world enumeration,
    with the number of worlds that collapse onto each vector retained.
    """
    formulas = tuple(formulas)
    if not formulas:
        raise CredalError("world_vectors needs at least one formula")
    seen: dict[tuple[int, ...], int] = {}
    order: list[tuple[int, ...]] = []
    for world in enumerate_worlds(registry, max_atoms=max_atoms):
        vector = tuple(evaluate(f, world) for f in formulas)
        if vector not in seen:
            seen[vector] = 0
            order.append(vector)
        seen[vector] += 1
    return WorldVectorSet(
        formulas=formulas,
        texts=tuple(print_formula(f) for f in formulas),
        vectors=np.array(order, dtype=float),
        counts=tuple(seen[v] for v in order),
    )


@dataclass(frozen=True, eq=False)
class CredenceVector:
    """Credences listed in the same order as a WorldVectorSet's formulas."""

    texts: tuple[str, ...]
    values: np.ndarray

    @classmethod
    def from_credence_function(
        cls, cf: CredenceFunction, formulas: Sequence[Formula]
    ) -> "CredenceVector":
        values = [cf.credence_of(f) for f in formulas]
        return cls(
            texts=tuple(print_formula(f) for f in formulas),
            values=np.array(values, dtype=float),
        )


def brier_score(credences, world_vector) -> float:
    """Sum of squared gaps between credences and truth values (no 1/n)."""
    c = np.asarray(credences, dtype=float)
    v = np.asarray(world_vector, dtype=float)
    if c.shape != v.shape:
        raise DimensionMismatchError(
            f"credence vector has shape {c.shape}, world vector {v.shape}"
        )
    return float(np.sum((v - c) ** 2))


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    projected: np.ndarray
    hull_distance: float
    iterations: int
    duality_gap: float


def project_onto_vertices(
    point,
    vertices,
    epsilon: float = DEFAULT_EPSILON_PROJ,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> ProjectionResult:
    """Euclidean projection of a point onto conv(vertices).

    Frank-Wolfe with away steps and exact line search on the quadratic
    objective ||x - c||^2.  The duality gap target is epsilon^2 / 4: a
    vertex v then satisfies BR(c, v) - BR(x, v) = ||c - x||^2 - gap, so any
    reported hull distance above epsilon yields a strictly positive Brier
    margin at every vertex.  Points within epsilon of the hull are returned
    unchanged (declared coherent).
    """
    c = np.asarray(point, dtype=float)
    vertex_array = np.asarray(vertices, dtype=float)
    if vertex_array.ndim != 2 or vertex_array.shape[0] < 1:
        raise CredalError("projection needs at least one vertex")
    if c.shape != (vertex_array.shape[1],):
        raise DimensionMismatchError(
            f"point has shape {c.shape}, vertices are "
            f"{vertex_array.shape[1]}-dimensional"
        )
    gap_target = 0.25 * epsilon * epsilon

    start = int(np.argmin(((vertex_array - c) ** 2).sum(axis=1)))
    weights: dict[int, float] = {start: 1.0}
    x = vertex_array[start].copy()
    gap = math.inf
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        gradient = 2.0 * (x - c)
        scores = vertex_array @ gradient
        toward = int(scores.argmin())
        gap = float(gradient @ (x - vertex_array[toward]))
        if gap <= gap_target:
            break

        away = max(weights, key=lambda i: (scores[i], -i))
        away_gain = float(scores[away] - gradient @ x)
        if gap >= away_gain:
            direction = vertex_array[toward] - x
            gamma_max = 1.0
            step_vertex, is_away = toward, False
        else:
            alpha = weights[away]
            direction = x - vertex_array[away]
            gamma_max = alpha / (1.0 - alpha) if alpha < 1.0 else math.inf
            step_vertex, is_away = away, True

        denom = float(direction @ direction)
        if denom <= 0.0:
            break
        gamma = min(gamma_max, -float(gradient @ direction) / (2.0 * denom))
        if gamma <= 0.0:
            break

        if is_away:
            for key in weights:
                weights[key] *= 1.0 + gamma
            weights[step_vertex] -= gamma
        else:
            for key in weights:
                weights[key] *= 1.0 - gamma
            weights[step_vertex] = weights.get(step_vertex, 0.0) + gamma
        weights = {k: w for k, w in weights.items() if w > 1e-16}
        total = sum(weights.values())
        weights = {k: w / total for k, w in weights.items()}
        x = np.zeros_like(c)
        for k, w in weights.items():
            x += w * vertex_array[k]

    hull_distance = float(np.linalg.norm(c - x))
    projected = c.copy() if hull_distance <= epsilon else x
    result = ProjectionResult(
        projected=projected,
        hull_distance=hull_distance,
        iterations=iterations,
        duality_gap=gap,
    )
    if gap > gap_target:
        raise NonConvergenceError(
            f"projection stalled after {iterations} iterations with duality "
            f"gap {gap:.3e} (target {gap_target:.3e})",
            result,
        )
    return result


def project_to_coherent(
    credence_vector: CredenceVector,
    world_set: WorldVectorSet,
    epsilon: float = DEFAULT_EPSILON_PROJ,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> tuple[CredenceVector, ProjectionResult]:
    """Nearest coherent credence vector and the projection diagnostics."""
    if credence_vector.texts != world_set.texts:
        raise DimensionMismatchError(
            "credence vector and world vectors list different formulas"
        )
    result = project_onto_vertices(
        credence_vector.values, world_set.vectors, epsilon, max_iterations
    )
    projected = CredenceVector(credence_vector.texts, result.projected)
    return projected, result


@dataclass(frozen=True)
class BrierPair:
    vector: tuple[int, ...]
    world_count: int
    brier_original: float
    brier_projected: float

    def to_dict(self) -> dict:
        return {
            "vector": list(self.vector),
            "world_count": self.world_count,
            "brier_original": self.brier_original,
            "brier_projected": self.brier_projected,
        }


@dataclass(frozen=True)
class DominanceCertificate:
    """Per-world Brier comparison between a vector and its projection.

    When the original vector sits further than epsilon from the coherent
    polytope, the projection scores strictly better at every distinct world
    vector; the pairs make the inequality directly inspectable.
    """

    texts: tuple[str, ...]
    original: tuple[float, ...]
    projected: tuple[float, ...]
    hull_distance: float
    strictly_dominates: bool
    epsilon_proj: float
    iterations: int
    duality_gap: float
    pairs: tuple[BrierPair, ...]

    def to_dict(self) -> dict:
        return {
            "formulas": list(self.texts),
            "original": list(self.original),
            "projected": list(self.projected),
            "hull_distance": self.hull_distance,
            "strictly_dominates": self.strictly_dominates,
            "epsilon_proj": self.epsilon_proj,
            "iterations": self.iterations,
            "duality_gap": self.duality_gap,
            "pairs": [p.to_dict() for p in self.pairs],
        }

    def render_table(self) -> str:
        lines = [
            f"hull distance: {self.hull_distance:.6g} "
            f"(epsilon {self.epsilon_proj:.3g}) -> "
            + (
                "strictly dominated by projection"
                if self.strictly_dominates
                else "coherent within epsilon"
            ),
            f"{'world vector':<20} {'worlds':>6} {'BR(original)':>14} "
            f"{'BR(projected)':>14}",
            "-" * 58,
        ]
        for pair in self.pairs:
            vector_text = "(" + ",".join(str(b) for b in pair.vector) + ")"
            lines.append(
                f"{vector_text:<20} {pair.world_count:>6} "
                f"{pair.brier_original:>14.6g} {pair.brier_projected:>14.6g}"
            )
        return "\n".join(lines)


def dominance_certificate(
    credence_vector: CredenceVector,
    world_set: WorldVectorSet,
    epsilon: float = DEFAULT_EPSILON_PROJ,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> DominanceCertificate:
    """Project and tabulate Brier scores at every distinct world vector."""
    projected, result = project_to_coherent(
        credence_vector, world_set, epsilon, max_iterations
    )
    pairs = []
    for row, count in zip(world_set.vectors, world_set.counts):
        pairs.append(
            BrierPair(
                vector=tuple(int(b) for b in row),
                world_count=count,
                brier_original=brier_score(credence_vector.values, row),
                brier_projected=brier_score(projected.values, row),
            )
        )
    return DominanceCertificate(
        texts=credence_vector.texts,
        original=tuple(float(v) for v in credence_vector.values),
        projected=tuple(float(v) for v in projected.values),
        hull_distance=result.hull_distance,
        strictly_dominates=result.hull_distance > epsilon,
        epsilon_proj=epsilon,
        iterations=result.iterations,
        duality_gap=result.duality_gap,
        pairs=tuple(pairs),
    )


def score_against_truth(
    cf: CredenceFunction, truth: Mapping[Formula, int]
) -> float:
    """Brier score of the probed credences against a supplied truth row.

    The assignment must cover every responsive probed formula and must be
    logically possible (checked by satisfiability of the signed formulas).
    """
    formulas = [f for f in cf.formulas() if cf.entries[f].credence is not None]
    missing = [print_formula(f) for f in formulas if f not in truth]
    if missing:
        raise MissingProbeError(missing)
    for f, value in truth.items():
        if value not in (0, 1):
            raise InconsistentTruthError(
                f"truth value for {print_formula(f)!r} must be 0 or 1"
            )
    signed = [f if truth[f] == 1 else Not(f) for f in formulas]
    if not is_satisfiable(signed, registry=cf.registry):
        raise InconsistentTruthError(
            "truth assignment is not satisfiable by any world"
        )
    credences = [cf.credence_of(f) for f in formulas]
    values = [truth[f] for f in formulas]
    return brier_score(credences, values)
