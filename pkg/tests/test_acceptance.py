"""Acceptance gate: one test per shipping criterion, at pinned tolerances.

Each test prints a single [PASS]/[FAIL] line (visible with ``pytest -s`` or
on failure) and enforces its runtime budget.
"""

import json
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import make_workspace, yes_no_script
from credal.accuracy import (
    CredenceVector,
    dominance_certificate,
    project_onto_vertices,
    world_vectors,
)
from credal.audit import (
    AuditConfig,
    CredenceFunction,
    full_belief_consistency,
    negation_check,
    run_audit,
)
from credal.backend import MockBackend, build_prompt
from credal.cli import main
from credal.credence import credence, yes_no_credence, yes_no_lexicon
from credal.logic import (
    AtomRegistry,
    enumerate_worlds,
    evaluate,
    is_satisfiable,
    parse_formula,
)
from oracles import grid_projection_2d, random_formula, truth_table_satisfiable

ATOMS = [
    {"id": "p", "surface": "Paris is in France"},
    {"id": "q", "surface": "grass is green"},
]


@contextmanager
def criterion(number, description, budget_s):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {description}")
        raise
    elapsed = time.monotonic() - start
    assert elapsed < budget_s, (
        f"criterion {number} took {elapsed:.2f}s, budget {budget_s}s"
    )
    print(f"[PASS] criterion {number}: {description} ({elapsed:.2f}s)")


def test_criterion_1_credence_ratio_exactness(tmp_path):
    with criterion(1, "probe yields cr(p)=0.75 exactly from as=0.6, ds=0.2", 1.0):
        script = yes_no_script(ATOMS, {"p": (0.6, 0.2), "!p": (0.2, 0.6)})
        config = make_workspace(tmp_path / "run", ATOMS, ["p"], script)
        result = CliRunner().invoke(main, ["probe", "--config", str(config)])
        assert result.exit_code == 0, result.output
        rows = [
            json.loads(line)
            for line in (config.parent / "out" / "records.jsonl")
            .read_text()
            .splitlines()
        ]
        record = {row["formula"]: row for row in rows}["p"]
        assert record["as_value"] == 0.6
        assert record["ds_value"] == 0.2
        assert record["credence"] == 0.75  # exact, not 0.7499999999999999


def _credence_function(table):
    registry = AtomRegistry([(a["id"], a["surface"]) for a in ATOMS])
    backend = MockBackend(yes_no_script(ATOMS, table))
    records = [
        credence(parse_formula(text, registry), registry, yes_no_lexicon(), backend)
        for text in table
    ]
    return registry, CredenceFunction.from_records(records, registry)


def test_criterion_2_negation_coherence_detection():
    with criterion(2, "negation check flags 0.6/0.6 and passes 0.7/0.3", 1.0):
        registry, incoherent = _credence_function(
            {"p": (0.6, 0.4), "!p": (0.6, 0.4)}
        )
        check = negation_check(incoherent, parse_formula("p", registry), 0.05)
        assert not check.passed
        assert abs(check.residual - 0.2) <= 1e-12

        registry, coherent = _credence_function({"p": (0.7, 0.3), "!p": (0.3, 0.7)})
        check = negation_check(coherent, parse_formula("p", registry), tolerance=0.0)
        assert check.passed
        assert check.residual == 0.0


def test_criterion_3_dominance_property():
    with criterion(
        3, "1000 incoherent vectors strictly dominated at every world", 30.0
    ):
        vector_rng = np.random.default_rng(20240901)
        shape_rng = random.Random(20240901)
        registry = AtomRegistry([("a", "a"), ("b", "b"), ("c", "c")])
        atoms = [registry.atom(x) for x in "abc"]
        checked = 0
        while checked < 1000:
            n = shape_rng.randint(2, 4)
            formulas = [random_formula(shape_rng, atoms, 3) for _ in range(n)]
            world_set = world_vectors(formulas, registry)
            vector = CredenceVector(world_set.texts, vector_rng.random(n))
            certificate = dominance_certificate(vector, world_set, epsilon=1e-7)
            if certificate.hull_distance <= 1e-6:
                continue
            checked += 1
            assert certificate.strictly_dominates
            for pair in certificate.pairs:
                assert pair.brier_projected < pair.brier_original, (
                    f"counterexample at vector {pair.vector}: "
                    f"{pair.brier_projected} !< {pair.brier_original}"
                )


def test_criterion_4_projection_oracle_equivalence():
    with criterion(4, "projection matches 1e-4 grid oracle within 1e-3 (2D)", 10.0):
        # the canonical incoherent complement pair
        vertices = np.array([[1.0, 0.0], [0.0, 1.0]])
        result = project_onto_vertices([0.6, 0.6], vertices)
        assert np.allclose(result.projected, [0.5, 0.5], atol=1e-7)
        oracle = grid_projection_2d(np.array([0.6, 0.6]), vertices, step=1e-4)
        assert np.linalg.norm(result.projected - oracle) <= 1e-3

        rng = np.random.default_rng(42)
        corners = np.array(
            [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        )
        for _ in range(100):
            m = int(rng.integers(1, 5))
            vertices = corners[rng.choice(4, size=m, replace=False)]
            point = rng.random(2)
            result = project_onto_vertices(point, vertices)
            oracle = grid_projection_2d(point, vertices, step=1e-4)
            assert np.linalg.norm(result.projected - oracle) <= 1e-3


def test_criterion_5_projection_fixed_points_and_idempotence():
    with criterion(
        5, "500 convex combinations are projection fixed points", 10.0
    ):
        rng = np.random.default_rng(7)
        shape_rng = random.Random(7)
        registry = AtomRegistry([("a", "a"), ("b", "b"), ("c", "c")])
        atoms = [registry.atom(x) for x in "abc"]
        for _ in range(500):
            n = shape_rng.randint(2, 4)
            formulas = [random_formula(shape_rng, atoms, 3) for _ in range(n)]
            world_set = world_vectors(formulas, registry)
            weights = rng.dirichlet(np.ones(len(world_set.vectors)))
            point = weights @ world_set.vectors
            first = project_onto_vertices(point, world_set.vectors)
            assert first.hull_distance <= 1e-7
            assert np.array_equal(first.projected, point)  # returned unchanged
            second = project_onto_vertices(first.projected, world_set.vectors)
            assert (
                np.linalg.norm(second.projected - first.projected) <= 2e-7
            )


def test_criterion_6_sat_oracle_equivalence_and_belief_core():
    with criterion(
        6, "DPLL agrees with truth tables on 500 formulas; {p, !p} core found", 30.0
    ):
        rng = random.Random(20240902)
        registry = AtomRegistry((f"x{i}", f"sentence {i}") for i in range(12))
        atoms = [registry.atom(f"x{i}") for i in range(12)]
        for _ in range(500):
            formulas = [
                random_formula(rng, atoms, rng.randint(1, 5))
                for _ in range(rng.randint(1, 3))
            ]
            expected, _ = truth_table_satisfiable(formulas)
            result = is_satisfiable(formulas)
            assert bool(result) == expected
            if result:
                assert all(evaluate(f, result.witness) == 1 for f in formulas)

        _, cf = _credence_function({"p": (0.95, 0.05), "!p": (0.92, 0.08)})
        check = full_belief_consistency(cf, theta=0.9)
        assert not check.passed
        assert set(check.witness) == {"p", "!p"}


def test_criterion_7_probabilism_passes_audit(tmp_path):
    with criterion(
        7, "measure-derived credences pass all checks within 1e-9", 5.0
    ):
        atoms = [
            {"id": "a", "surface": "the coin landed heads"},
            {"id": "b", "surface": "the die rolled six"},
            {"id": "c", "surface": "it rained yesterday"},
        ]
        registry = AtomRegistry([(x["id"], x["surface"]) for x in atoms])
        worlds = enumerate_worlds(registry)
        measure = [Fraction(k, 64) for k in (30, 10, 6, 2, 6, 4, 4, 2)]
        assert sum(measure) == 1

        base_formulas = [
            "a",
            "b",
            "c",
            "a & b",
            "a | b",
            "a & !b",
            "a | !a",
            "a & !a",
        ]
        texts = []
        for text in base_formulas:
            texts.append(text)
            texts.append("!(" + text + ")")

        def world_measure(f):
            return sum(
                m for m, w in zip(measure, worlds) if evaluate(f, w) == 1
            )

        script = {}
        for text in texts:
            f = parse_formula(text, registry)
            cr = float(world_measure(f))  # dyadic: exact as a float
            prompt = build_prompt(f, registry)
            entries = {}
            if cr > 0.0:
                entries["yes"] = cr
            if cr < 1.0:
                entries["no"] = 1.0 - cr
            script[prompt.text] = {"entries": entries, "residual": 0.0}

        backend = MockBackend(script)
        records = [
            credence(parse_formula(t, registry), registry, yes_no_lexicon(), backend)
            for t in texts
        ]
        cf = CredenceFunction.from_records(records, registry)
        report = run_audit(
            cf,
            AuditConfig(
                theta=0.9,
                tolerance=1e-9,
                partitions=[["a & b", "a & !b", "!a"]],
            ),
        )
        assert report.coherent, report.render_table()
        assert {c.norm_id for c in report.checks} >= {
            "negation",
            "partition",
            "entailment",
            "tautology",
            "contradiction",
            "full-belief-consistency",
            "assent-dissent-symmetry",
        }
        for check in report.checks:
            assert check.residual <= 1e-9, check

        responsive = [f for f in cf.formulas() if cf.entries[f].credence is not None]
        world_set = world_vectors(responsive, registry)
        vector = CredenceVector.from_credence_function(cf, responsive)
        result = project_onto_vertices(vector.values, world_set.vectors)
        assert result.hull_distance <= 1e-7


def test_criterion_8_yes_no_approximation_agreement():
    with criterion(
        8, "credence == yes_no_credence bit-exactly on 100 scenarios", 5.0
    ):
        rng = random.Random(99)
        registry = AtomRegistry([(a["id"], a["surface"]) for a in ATOMS])
        p = parse_formula("p", registry)
        prompt = build_prompt(p, registry)
        for _ in range(100):
            yes = rng.uniform(0.01, 0.5)
            yes_cap = rng.uniform(0.0, 0.2)
            no = rng.uniform(0.01, 0.2)
            filler = 1.0 - yes - yes_cap - no
            backend = MockBackend(
                {
                    prompt.text: {
                        "entries": {
                            "yes": yes,
                            " Yes": yes_cap,
                            "no": no,
                            "other": filler,
                        },
                        "residual": 0.0,
                    }
                }
            )
            via_lexicon = credence(p, registry, yes_no_lexicon(), backend)
            via_shortcut = yes_no_credence(p, registry, backend)
            assert via_lexicon.credence == via_shortcut.credence
            assert via_lexicon.as_value == via_shortcut.as_value
            assert via_lexicon.ds_value == via_shortcut.ds_value


def test_criterion_9_diff_workflow_and_exit_codes(tmp_path):
    with criterion(
        9, "before/after diff lists exactly one newly failing check", 10.0
    ):
        runner = CliRunner()

        def snapshot(name, table):
            config = make_workspace(
                tmp_path / name, ATOMS, ["p"], yes_no_script(ATOMS, table)
            )
            probe = runner.invoke(main, ["probe", "--config", str(config)])
            assert probe.exit_code == 0, probe.output
            audit = runner.invoke(main, ["audit", "--config", str(config)])
            return config.parent / "out" / "audit_report.json", audit.exit_code

        before, before_exit = snapshot("before", {"p": (0.7, 0.3), "!p": (0.3, 0.7)})
        # injected violation: both credences 0.6, symmetry intact
        after, after_exit = snapshot("after", {"p": (0.45, 0.3), "!p": (0.3, 0.2)})
        assert before_exit == 0  # coherent
        assert after_exit == 1  # norm violation found

        diff = runner.invoke(main, ["diff", str(before), str(after)])
        assert diff.exit_code == 1
        assert diff.output.count("newly failing") == 1
        assert "negation" in diff.output

        identical = runner.invoke(main, ["diff", str(before), str(before)])
        assert identical.exit_code == 0

        other_config = make_workspace(
            tmp_path / "other",
            ATOMS,
            ["q"],
            yes_no_script(ATOMS, {"q": (0.7, 0.3), "!q": (0.3, 0.7)}),
        )
        runner.invoke(main, ["probe", "--config", str(other_config)])
        runner.invoke(main, ["audit", "--config", str(other_config)])
        mismatched = runner.invoke(
            main,
            ["diff", str(before), str(other_config.parent / "out" / "audit_report.json")],
        )
        assert mismatched.exit_code == 2
