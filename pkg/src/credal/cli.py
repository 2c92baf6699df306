"""Command-line client for the probe/audit/dominate/diff pipeline.

Commands execute through the same request/response models as the REST
service; ``--server URL`` switches any command from in-process execution to
a remote credal service.  Exit codes are a stable scripting contract:
0 = success / coherent, 1 = norm violation found, 2 = operational error.
"""

from __future__ import annotations

import json
import os
import sys

import click
import httpx

from . import __version__
from .audit import AuditReport
from .backend import BackendConfig, derive_backend_id
from .credence import default_lexicon
from .errors import CredalError
from .logic import AtomRegistry, Not, parse_formula, print_formula
from .runs import (
    CERTIFICATE_FILENAME,
    RECORDS_FILENAME,
    REPORT_FILENAME,
    RunConfig,
    RunMaterials,
    append_probe_rows,
    latest_by_formula,
    load_probe_rows,
    load_run,
    probe_key,
    write_json,
)
from .service import handlers, schemas


class LocalExecutor:
    """Runs requests in-process through the service layer."""

    def probe(self, request):
        return handlers.run_probe(request)

    def audit(self, request):
        return handlers.run_audit_request(request)

    def dominate(self, request):
        return handlers.run_dominate(request)

    def diff(self, request):
        return handlers.run_diff(request)


class HttpExecutor:
    """Sends requests to a running credal service."""

    def __init__(self, base_url: str):
        self._client = httpx.Client(base_url=base_url, timeout=600.0)

    def _post(self, path, request, response_type):
        try:
            response = self._client.post(path, json=request.model_dump(mode="json"))
        except httpx.HTTPError as exc:
            raise CredalError(f"server unreachable: {exc}") from exc
        if response.status_code != 200:
            try:
                detail = response.json()
                message = f"{detail.get('error')}: {detail.get('message')}"
            except ValueError:
                message = f"HTTP {response.status_code}"
            raise CredalError(f"server rejected request: {message}")
        return response_type.model_validate(response.json())

    def probe(self, request):
        return self._post("/probe", request, schemas.ProbeResponse)

    def audit(self, request):
        return self._post("/audit", request, schemas.AuditResponse)

    def dominate(self, request):
        return self._post("/dominate", request, schemas.DominateResponse)

    def diff(self, request):
        return self._post("/diff", request, schemas.DiffResponse)


def _executor(server: str | None):
    return HttpExecutor(server) if server else LocalExecutor()


def _fail(message: str, code: int = 2):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _negations_enabled(materials: RunMaterials) -> bool:
    checks = materials.audit.get("checks_enabled")
    if checks is None:
        return True
    return "negation" in checks or "assent-dissent-symmetry" in checks


def _probe_targets(
    config: RunConfig, materials: RunMaterials
) -> list[tuple[str, str]]:
    """(canonical text, lexicon name) for every probe the run wants."""
    registry = AtomRegistry.from_json(materials.atoms)
    global_name = (
        materials.lexicon["name"] if materials.lexicon else default_lexicon().name
    )
    include_negations = _negations_enabled(materials)
    targets: list[tuple[str, str]] = []
    seen: set[str] = set()

    def add(text: str, lexicon_name: str) -> None:
        if text not in seen:
            seen.add(text)
            targets.append((text, lexicon_name))

    for text in materials.formulas:
        override = materials.lexicon_overrides.get(text)
        name = override["name"] if override else global_name
        add(text, name)
        if include_negations:
            add(print_formula(Not(parse_formula(text, registry))), name)
    return targets


def _backend_spec(config: RunConfig, materials: RunMaterials) -> schemas.BackendSpecModel:
    return schemas.BackendSpecModel(**config.backend, script=materials.script)


def _run_backend_id(config: RunConfig, materials: RunMaterials) -> str:
    spec = _backend_spec(config, materials)
    return derive_backend_id(
        BackendConfig(
            kind=spec.kind,
            endpoint=spec.endpoint,
            top_k=spec.top_k,
            timeout_s=spec.timeout_s,
            max_parallel=spec.max_parallel,
            auth_env=spec.auth_env,
            backend_id=spec.backend_id,
            strict=spec.strict,
        ),
        materials.script,
    )


def _audit_config_model(
    materials: RunMaterials, theta: float | None, tolerance: float | None
) -> schemas.AuditConfigModel:
    merged = dict(materials.audit)
    merged["partitions"] = materials.partitions + list(merged.get("partitions", []))
    if theta is not None:
        merged["theta"] = theta
    if tolerance is not None:
        merged["tolerance"] = tolerance
    allowed = set(schemas.AuditConfigModel.model_fields)
    return schemas.AuditConfigModel(**{k: v for k, v in merged.items() if k in allowed})


def _load_record_models(path: str) -> list[schemas.ProbeRecordModel]:
    rows = load_probe_rows(path)
    if not rows:
        raise CredalError(f"no probe records at {path}; run `credal probe` first")
    latest = latest_by_formula(rows)
    models = []
    for text in sorted(latest):
        row = {
            k: v
            for k, v in latest[text].items()
            if k in schemas.ProbeRecordModel.model_fields
        }
        models.append(schemas.ProbeRecordModel(**row))
    return models


@click.group()
@click.version_option(version=__version__, prog_name="credal")
def main():
    """Probe language-model credences and audit their coherence."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_dir", default=None, help="override output directory")
@click.option("--refresh", is_flag=True, help="re-probe formulas that already have records")
@click.option("--force-binary", is_flag=True, help="append an explicit yes/no instruction to prompts")
@click.option("--server", default=None, help="URL of a running credal service")
def probe(config_path, output_dir, refresh, force_binary, server):
    """Probe every configured formula (and negation) for a credence."""
    try:
        config, materials = load_run(config_path)
        out_dir = output_dir or config.output_dir
        store = os.path.join(out_dir, RECORDS_FILENAME)
        backend_id = _run_backend_id(config, materials)
        targets = _probe_targets(config, materials)

        existing: set[tuple[str, str, str]] = set()
        if not refresh:
            existing = {probe_key(row) for row in load_probe_rows(store)}
        wanted = [
            (text, name)
            for text, name in targets
            if (text, name, backend_id) not in existing
        ]
        if not wanted:
            click.echo(f"0 new records ({len(targets)} already probed) -> {store}")
            sys.exit(0)

        overrides = {}
        for text, _ in wanted:
            override = materials.lexicon_overrides.get(text)
            if override is not None:
                overrides[text] = schemas.LexiconModel(**override)
        # negations inherit the override of their base formula
        registry = AtomRegistry.from_json(materials.atoms)
        for text, override in materials.lexicon_overrides.items():
            negated = print_formula(Not(parse_formula(text, registry)))
            overrides.setdefault(negated, schemas.LexiconModel(**override))

        request = schemas.ProbeRequest(
            atoms=[schemas.AtomModel(**a) for a in materials.atoms],
            formulas=[text for text, _ in wanted],
            backend=_backend_spec(config, materials),
            lexicon=(
                schemas.LexiconModel(**materials.lexicon)
                if materials.lexicon
                else None
            ),
            lexicon_overrides=overrides,
            epistemic_markers=config.epistemic_markers,
            include_negations=False,
            force_binary=force_binary or config.force_binary,
            epsilon_resp=config.epsilon_resp,
        )
        response = _executor(server).probe(request)

        rows = []
        for record in response.records:
            row = record.model_dump()
            row["config_digest"] = materials.config_digest
            row["seed"] = config.seed
            rows.append(row)
        append_probe_rows(store, rows)

        for warning in response.warnings:
            click.echo(f"warning: {warning}", err=True)
        for error in response.errors:
            click.echo(f"error row: {error.formula}: {error.message}", err=True)
        click.echo(
            f"{len(rows)} new records ({len(targets) - len(wanted)} skipped) -> {store}"
        )
        if response.errors and not response.records:
            sys.exit(2)
        if response.errors:
            sys.exit(1)
        sys.exit(0)
    except CredalError as exc:
        _fail(str(exc))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--records", "records_path", default=None, help="records JSONL (default: output dir)")
@click.option("--output", "output_dir", default=None)
@click.option("--theta", type=float, default=None, help="full-belief threshold override")
@click.option("--tolerance", type=float, default=None, help="residual tolerance override")
@click.option("--server", default=None)
def audit(config_path, records_path, output_dir, theta, tolerance, server):
    """Audit probed credences against the coherence norms."""
    try:
        config, materials = load_run(config_path)
        out_dir = output_dir or config.output_dir
        store = records_path or os.path.join(out_dir, RECORDS_FILENAME)
        records = _load_record_models(store)

        probed = {r.formula for r in records}
        required = [text for text, _ in _probe_targets(config, materials)]
        registry = AtomRegistry.from_json(materials.atoms)
        for cells in materials.partitions + list(materials.audit.get("partitions", [])):
            for cell in cells:
                try:
                    required.append(
                        print_formula(parse_formula(cell, registry, auto_register=False))
                    )
                except CredalError:
                    pass  # surfaces as a report warning instead
        missing = sorted({text for text in required if text not in probed})
        if missing:
            raise CredalError(
                "missing probes for: " + ", ".join(missing) + "; run `credal probe`"
            )

        request = schemas.AuditRequest(
            atoms=[schemas.AtomModel(**a) for a in materials.atoms],
            records=records,
            config=_audit_config_model(materials, theta, tolerance),
            config_digest=materials.config_digest,
            seed=config.seed,
        )
        response = _executor(server).audit(request)
        report_path = os.path.join(out_dir, REPORT_FILENAME)
        write_json(report_path, response.report.model_dump())
        click.echo(response.rendered)
        click.echo(f"report -> {report_path}")
        sys.exit(0 if response.report.coherent else 1)
    except CredalError as exc:
        _fail(str(exc))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--records", "records_path", default=None)
@click.option("--output", "output_dir", default=None)
@click.option("--epsilon", "epsilon_proj", type=float, default=None, help="coherence threshold override")
@click.option("--server", default=None)
def dominate(config_path, records_path, output_dir, epsilon_proj, server):
    """Project the credence vector onto the coherent polytope and certify dominance."""
    try:
        config, materials = load_run(config_path)
        out_dir = output_dir or config.output_dir
        store = records_path or os.path.join(out_dir, RECORDS_FILENAME)
        records = _load_record_models(store)

        chosen = sorted(r.formula for r in records if r.credence is not None)
        truth = None
        if materials.truth is not None:
            if all(text in materials.truth for text in chosen):
                truth = materials.truth
            else:
                click.echo(
                    "note: truth assignment does not cover all probed formulas; "
                    "skipping truth scoring",
                    err=True,
                )
        request = schemas.DominateRequest(
            atoms=[schemas.AtomModel(**a) for a in materials.atoms],
            records=records,
            epsilon_proj=(
                epsilon_proj if epsilon_proj is not None else config.epsilon_proj
            ),
            truth=truth,
            config_digest=materials.config_digest,
            seed=config.seed,
        )
        response = _executor(server).dominate(request)
        certificate_path = os.path.join(out_dir, CERTIFICATE_FILENAME)
        write_json(certificate_path, response.certificate.model_dump())
        click.echo(response.rendered)
        if response.certificate.truth_brier_original is not None:
            click.echo(
                f"Brier against supplied truth: original "
                f"{response.certificate.truth_brier_original:.6g}, projected "
                f"{response.certificate.truth_brier_projected:.6g}"
            )
        click.echo(f"certificate -> {certificate_path}")
        sys.exit(1 if response.certificate.strictly_dominates else 0)
    except CredalError as exc:
        _fail(str(exc))


@main.command()
@click.argument("before", type=click.Path(dir_okay=False))
@click.argument("after", type=click.Path(dir_okay=False))
@click.option("--server", default=None)
def diff(before, after, server):
    """Compare two audit reports; exit 1 if any check newly fails."""
    try:
        try:
            with open(before, "r", encoding="utf-8") as handle:
                before_report = schemas.AuditReportModel(**json.load(handle))
            with open(after, "r", encoding="utf-8") as handle:
                after_report = schemas.AuditReportModel(**json.load(handle))
        except (OSError, ValueError) as exc:
            raise CredalError(f"cannot read report: {exc}") from exc
        request = schemas.DiffRequest(before=before_report, after=after_report)
        response = _executor(server).diff(request)
        click.echo(response.rendered)
        sys.exit(1 if response.newly_failing else 0)
    except CredalError as exc:
        _fail(str(exc))


@main.command()
@click.argument("report_path", type=click.Path(dir_okay=False))
def report(report_path):
    """Render a saved audit report as a table."""
    try:
        try:
            with open(report_path, "r", encoding="utf-8") as handle:
                loaded = AuditReport.from_dict(json.load(handle))
        except (OSError, ValueError, KeyError) as exc:
            raise CredalError(f"cannot read report: {exc}") from exc
        click.echo(loaded.render_table())
        sys.exit(0 if loaded.coherent else 1)
    except CredalError as exc:
        _fail(str(exc))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Start the REST service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
