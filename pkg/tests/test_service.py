import pytest
from fastapi.testclient import TestClient

from credal.backend import build_prompt
from credal.logic import AtomRegistry, Not, parse_formula
from credal.service.app import create_app

ATOMS = [
    {"id": "p", "surface": "Paris is in France"},
    {"id": "q", "surface": "grass is green"},
]

LEXICON = {"name": "tiny/v1", "assent": ["yes"], "dissent": ["no"]}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def script_for(table):
    """Mock script keyed by default prompts for the formula texts in table."""
    registry = AtomRegistry([(a["id"], a["surface"]) for a in ATOMS])
    script = {}
    for text, (yes, no) in table.items():
        f = parse_formula(text, registry)
        prompt = build_prompt(f, registry)
        script[prompt.text] = {
            "entries": {"yes": yes, "no": no},
            "residual": round(1.0 - yes - no, 12),
        }
    return script


def probe_payload(table, formulas, **kwargs):
    payload = {
        "atoms": ATOMS,
        "formulas": formulas,
        "backend": {"kind": "mock", "script": script_for(table)},
        "lexicon": LEXICON,
        "include_negations": True,
    }
    payload.update(kwargs)
    return payload


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "ok"


def test_probe_returns_records_for_formulas_and_negations(client):
    payload = probe_payload(
        {"p": (0.6, 0.2), "!p": (0.2, 0.6)}, ["p"]
    )
    response = client.post("/probe", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert [r["formula"] for r in body["records"]] == ["!p", "p"]
    by_formula = {r["formula"]: r for r in body["records"]}
    assert by_formula["p"]["credence"] == 0.75
    assert by_formula["p"]["as_value"] == 0.6
    assert body["errors"] == []


def test_probe_records_unscripted_formula_as_error_row(client):
    payload = probe_payload({"p": (0.6, 0.2), "!p": (0.2, 0.6)}, ["p", "q"])
    response = client.post("/probe", json=payload)
    assert response.status_code == 200
    body = response.json()
    errored = {e["formula"] for e in body["errors"]}
    assert errored == {"q", "!q"}
    assert {r["formula"] for r in body["records"]} == {"p", "!p"}


def test_probe_non_responsive_becomes_record_with_null_credence(client):
    registry = AtomRegistry([(a["id"], a["surface"]) for a in ATOMS])
    p = parse_formula("p", registry)
    script = {
        build_prompt(p, registry).text: {"entries": {"meh": 1.0}, "residual": 0.0},
        build_prompt(Not(p), registry).text: {"entries": {"yes": 0.5, "no": 0.5}},
    }
    payload = {
        "atoms": ATOMS,
        "formulas": ["p"],
        "backend": {"kind": "mock", "script": script},
        "lexicon": LEXICON,
    }
    response = client.post("/probe", json=payload)
    body = response.json()
    by_formula = {r["formula"]: r for r in body["records"]}
    assert by_formula["p"]["credence"] is None
    assert by_formula["p"]["responsive"] is False
    assert any("non-responsive" in w for w in body["warnings"])


def test_probe_warns_when_top_k_below_lexicon_heads(client):
    payload = probe_payload({"p": (0.6, 0.2), "!p": (0.2, 0.6)}, ["p"])
    payload["backend"]["top_k"] = 1
    response = client.post("/probe", json=payload)
    assert any("top_k" in w for w in response.json()["warnings"])


def test_probe_rejects_marker_contaminated_lexicon(client):
    payload = probe_payload({"p": (0.6, 0.2), "!p": (0.2, 0.6)}, ["p"])
    payload["lexicon"] = {
        "name": "bad/v1",
        "assent": ["I am sure it is"],
        "dissent": ["no"],
    }
    response = client.post("/probe", json=payload)
    assert response.status_code == 422
    assert response.json()["error"] == "LexiconError"


def test_probe_lexicon_override_applies_to_formula_and_negation(client):
    registry = AtomRegistry([(a["id"], a["surface"]) for a in ATOMS])
    p = parse_formula("p", registry)
    script = {
        build_prompt(p, registry).text: {"entries": {"aye": 0.8, "nay": 0.2}},
        build_prompt(Not(p), registry).text: {"entries": {"aye": 0.2, "nay": 0.8}},
    }
    payload = {
        "atoms": ATOMS,
        "formulas": ["p"],
        "backend": {"kind": "mock", "script": script},
        "lexicon": LEXICON,
        "lexicon_overrides": {
            "p": {"name": "nautical/v1", "assent": ["aye"], "dissent": ["nay"]}
        },
    }
    response = client.post("/probe", json=payload)
    body = response.json()
    by_formula = {r["formula"]: r for r in body["records"]}
    assert by_formula["p"]["credence"] == 0.8
    assert by_formula["p"]["lexicon_name"] == "nautical/v1"
    assert by_formula["!p"]["lexicon_name"] == "nautical/v1"


def probe_then_records(client, table, formulas):
    response = client.post("/probe", json=probe_payload(table, formulas))
    assert response.status_code == 200
    return response.json()["records"]


def test_audit_coherent_and_incoherent(client):
    coherent = probe_then_records(client, {"p": (0.7, 0.3), "!p": (0.3, 0.7)}, ["p"])
    response = client.post(
        "/audit",
        json={
            "atoms": ATOMS,
            "records": coherent,
            "config": {"tolerance": 0.0},
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["report"]["coherent"] is True
    assert "COHERENT" in body["rendered"]

    incoherent = probe_then_records(
        client, {"p": (0.45, 0.3), "!p": (0.3, 0.2)}, ["p"]
    )
    response = client.post(
        "/audit", json={"atoms": ATOMS, "records": incoherent}
    )
    body = response.json()
    assert body["report"]["coherent"] is False
    failing = [c for c in body["report"]["checks"] if not c["passed"]]
    assert [c["norm_id"] for c in failing] == ["negation"]


def test_audit_stamps_config_digest_and_seed(client):
    records = probe_then_records(client, {"p": (0.7, 0.3), "!p": (0.3, 0.7)}, ["p"])
    response = client.post(
        "/audit",
        json={
            "atoms": ATOMS,
            "records": records,
            "config_digest": "abc123",
            "seed": 7,
        },
    )
    body = response.json()["report"]
    assert body["config_digest"] == "abc123"
    assert body["seed"] == 7


def test_audit_empty_records_is_422(client):
    response = client.post("/audit", json={"atoms": ATOMS, "records": []})
    assert response.status_code == 422


def test_dominate_incoherent_pair(client):
    records = probe_then_records(client, {"p": (0.6, 0.4), "!p": (0.6, 0.4)}, ["p"])
    response = client.post(
        "/dominate", json={"atoms": ATOMS, "records": records}
    )
    assert response.status_code == 200
    certificate = response.json()["certificate"]
    assert certificate["strictly_dominates"] is True
    assert certificate["formulas"] == ["!p", "p"]
    for pair in certificate["pairs"]:
        assert pair["brier_projected"] < pair["brier_original"]


def test_dominate_with_truth_assignment(client):
    records = probe_then_records(client, {"p": (0.9, 0.1), "!p": (0.1, 0.9)}, ["p"])
    response = client.post(
        "/dominate",
        json={
            "atoms": ATOMS,
            "records": records,
            "formulas": ["p", "!p"],
            "truth": {"p": 1, "!p": 0},
        },
    )
    certificate = response.json()["certificate"]
    assert certificate["truth_brier_original"] == pytest.approx(0.02, abs=1e-12)
    assert certificate["truth_brier_projected"] is not None


def test_dominate_rejects_inconsistent_truth(client):
    records = probe_then_records(client, {"p": (0.9, 0.1), "!p": (0.1, 0.9)}, ["p"])
    response = client.post(
        "/dominate",
        json={
            "atoms": ATOMS,
            "records": records,
            "truth": {"p": 1, "!p": 1},
        },
    )
    assert response.status_code == 422
    assert response.json()["error"] == "InconsistentTruthError"


def test_diff_endpoint_detects_regression(client):
    def report_for(table):
        records = probe_then_records(client, table, ["p"])
        response = client.post(
            "/audit",
            json={"atoms": ATOMS, "records": records, "config": {"tolerance": 0.05}},
        )
        return response.json()["report"]

    before = report_for({"p": (0.7, 0.3), "!p": (0.3, 0.7)})
    after = report_for({"p": (0.45, 0.3), "!p": (0.3, 0.2)})
    response = client.post("/diff", json={"before": before, "after": after})
    assert response.status_code == 200
    body = response.json()
    assert body["empty"] is False
    assert len(body["newly_failing"]) == 1
    assert body["newly_failing"][0]["norm_id"] == "negation"

    identical = client.post("/diff", json={"before": before, "after": before})
    assert identical.json()["empty"] is True


def test_diff_endpoint_rejects_mismatched_reports(client):
    records_p = probe_then_records(client, {"p": (0.7, 0.3), "!p": (0.3, 0.7)}, ["p"])
    records_q = probe_then_records(client, {"q": (0.7, 0.3), "!q": (0.3, 0.7)}, ["q"])
    report_p = client.post(
        "/audit", json={"atoms": ATOMS, "records": records_p}
    ).json()["report"]
    report_q = client.post(
        "/audit", json={"atoms": ATOMS, "records": records_q}
    ).json()["report"]
    response = client.post("/diff", json={"before": report_p, "after": report_q})
    assert response.status_code == 422
    assert response.json()["error"] == "MismatchedReportsError"
