"""Reproducible run plumbing: config files, proposition files, probe store.

A run is pinned by its config digest, which hashes the resolved contents of
every input (backend settings, lexicon, propositions, audit config) rather
than their paths.  Probe records land in an append-only JSONL store keyed
by (formula, lexicon, backend), so re-runs skip work they have already done
and crashes never corrupt earlier rows.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from .audit import NotAPartitionError, verify_partition
from .credence import DEFAULT_EPISTEMIC_MARKERS, load_lexicon
from .errors import CredalError
from .logic import AtomRegistry, Not, parse_formula, print_formula

RECORDS_FILENAME = "records.jsonl"
REPORT_FILENAME = "audit_report.json"
CERTIFICATE_FILENAME = "dominance_certificate.json"


class RunConfigError(CredalError):
    """A run config or one of its referenced files is invalid."""


@dataclass
class RunConfig:
    backend: dict[str, Any]
    propositions_path: str
    output_dir: str
    lexicon_path: Optional[str] = None
    audit_config_path: Optional[str] = None
    seed: int = 0
    force_binary: bool = False
    epsilon_resp: float = 1e-6
    epsilon_proj: float = 1e-7
    epistemic_markers: Optional[list[str]] = None


@dataclass
class RunMaterials:
    """Everything a run needs, resolved to content (not paths)."""

    atoms: list[dict[str, str]]
    formulas: list[str]  # canonical texts, listed order
    lexicon_overrides: dict[str, dict]
    partitions: list[list[str]]
    truth: Optional[dict[str, int]]
    lexicon: Optional[dict]  # None = shipped default
    script: Optional[dict]
    audit: dict[str, Any]
    config_digest: str = ""


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _load_json(path: str, what: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise RunConfigError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise RunConfigError(f"{what} is not valid JSON ({path}): {exc}") from exc


def load_propositions(
    data: Mapping[str, Any]
) -> tuple[AtomRegistry, list[str], dict[str, dict], list[list[str]], Optional[dict[str, int]]]:
    """Parse and validate a proposition file's contents.

    Formula entries are either plain formula text or
    ``{"formula": text, "lexicon": {...}}`` for a per-formula lexicon
    override.  Declared partitions (lists of indices into the formula list)
    must satisfy the partition precondition or the file is rejected with the
    witness world.
    """
    registry = AtomRegistry.from_json(data.get("atoms", []))
    formulas: list[str] = []
    overrides: dict[str, dict] = {}
    parsed = []
    for entry in data.get("formulas", []):
        if isinstance(entry, str):
            text, override = entry, None
        else:
            text, override = entry["formula"], entry.get("lexicon")
        f = parse_formula(text, registry)
        canonical = print_formula(f)
        if canonical not in formulas:
            formulas.append(canonical)
            parsed.append(f)
        if override is not None:
            overrides[canonical] = dict(override)

    partitions: list[list[str]] = []
    for cell_indices in data.get("partitions", []):
        try:
            cells = [parsed[i] for i in cell_indices]
        except (IndexError, TypeError) as exc:
            raise RunConfigError(
                f"partition indices {cell_indices!r} out of range"
            ) from exc
        try:
            verify_partition(cells, registry)
        except NotAPartitionError as exc:
            witness = getattr(exc, "witness", None)
            detail = f" (witness world: {witness.assignment})" if witness else ""
            raise RunConfigError(
                f"declared partition {cell_indices!r} rejected: {exc}{detail}"
            ) from exc
        partitions.append([print_formula(c) for c in cells])

    truth: Optional[dict[str, int]] = None
    if "truth" in data and data["truth"] is not None:
        truth = {}
        for text, value in data["truth"].items():
            if value not in (0, 1):
                raise RunConfigError(
                    f"truth value for {text!r} must be 0 or 1, got {value!r}"
                )
            truth[print_formula(parse_formula(text, registry))] = int(value)

    return registry, formulas, overrides, partitions, truth


def config_digest(*parts: Any) -> str:
    payload = json.dumps(list(parts), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def load_run(config_path: str) -> tuple[RunConfig, RunMaterials]:
    """Load a run config and validate every referenced file right away."""
    data = _load_json(config_path, "run config")
    base_dir = os.path.dirname(os.path.abspath(config_path))
    try:
        backend = dict(data["backend"])
        propositions_path = _resolve(base_dir, data["propositions_path"])
        output_dir = _resolve(base_dir, data["output_dir"])
    except KeyError as exc:
        raise RunConfigError(f"run config missing required field {exc}") from exc

    config = RunConfig(
        backend=backend,
        propositions_path=propositions_path,
        output_dir=output_dir,
        lexicon_path=(
            _resolve(base_dir, data["lexicon_path"])
            if data.get("lexicon_path")
            else None
        ),
        audit_config_path=(
            _resolve(base_dir, data["audit_config_path"])
            if data.get("audit_config_path")
            else None
        ),
        seed=int(data.get("seed", 0)),
        force_binary=bool(data.get("force_binary", False)),
        epsilon_resp=float(data.get("epsilon_resp", 1e-6)),
        epsilon_proj=float(data.get("epsilon_proj", 1e-7)),
        epistemic_markers=data.get("epistemic_markers"),
    )

    script = None
    if backend.get("kind", "mock") == "mock":
        script_path = backend.pop("script_path", None)
        if "script" in backend:
            script = backend.pop("script")
        elif script_path is not None:
            script = _load_json(_resolve(base_dir, script_path), "mock script")
        else:
            raise RunConfigError("mock backend needs script or script_path")
    elif not backend.get("endpoint"):
        raise RunConfigError("http backend needs an endpoint")

    lexicon = None
    markers = (
        DEFAULT_EPISTEMIC_MARKERS
        if config.epistemic_markers is None
        else tuple(config.epistemic_markers)
    )
    if config.lexicon_path is not None:
        lexicon = _load_json(config.lexicon_path, "lexicon")
        load_lexicon(lexicon, markers=markers)  # validate now

    propositions = _load_json(config.propositions_path, "proposition file")
    registry, formulas, overrides, partitions, truth = load_propositions(propositions)
    for override in overrides.values():
        load_lexicon(override, markers=markers)  # validate now
    # auto-registered atoms (quoted surfaces) must survive into requests
    atoms = registry.to_json()

    audit: dict[str, Any] = {}
    if config.audit_config_path is not None:
        audit = _load_json(config.audit_config_path, "audit config")

    materials = RunMaterials(
        atoms=atoms,
        formulas=formulas,
        lexicon_overrides=overrides,
        partitions=partitions,
        truth=truth,
        lexicon=lexicon,
        script=script,
        audit=audit,
    )
    materials.config_digest = config_digest(
        {
            "backend": backend,
            "script": script,
            "lexicon": lexicon,
            "propositions": propositions,
            "audit": audit,
            "seed": config.seed,
            "force_binary": config.force_binary,
            "epsilon_resp": config.epsilon_resp,
            "epsilon_proj": config.epsilon_proj,
        }
    )
    return config, materials


# ---------------------------------------------------------------------------
# Probe record store (append-only JSONL)
# ---------------------------------------------------------------------------


def probe_key(row: Mapping[str, Any]) -> tuple[str, str, str]:
    return (
        str(row["formula"]),
        str(row["lexicon_name"]),
        str(row["backend_id"]),
    )


def load_probe_rows(path: str) -> list[dict]:
    if not os.path.exists(path):
        return []
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise RunConfigError(
                    f"corrupt record at {path}:{line_number}: {exc}"
                ) from exc
    return rows


def latest_by_formula(rows: list[dict]) -> dict[str, dict]:
    """Last-written row per formula text (file order)."""
    latest: dict[str, dict] = {}
    for row in rows:
        latest[str(row["formula"])] = row
    return latest


def append_probe_rows(path: str, rows: list[dict]) -> None:
    """Append rows as JSONL in one write call; creates parent directories."""
    if not rows:
        return
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    payload = "".join(
        json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n" for row in rows
    )
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(payload)


def write_json(path: str, payload: Mapping[str, Any]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write("\n")
