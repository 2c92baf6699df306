import json

from credal.backend import build_prompt
from credal.logic import AtomRegistry, parse_formula

TINY_LEXICON = {"name": "tiny/v1", "assent": ["yes"], "dissent": ["no"]}


def write_json(path, data):
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def yes_no_script(atoms, table):
    """Mock script from formula text -> (yes_mass, no_mass).

    Leftover mass goes to an itemized filler token with residual 0, so
    lexicon entries outside the script contribute exactly zero.
    """
    registry = AtomRegistry([(a["id"], a["surface"]) for a in atoms])
    script = {}
    for text, spec in table.items():
        prompt = build_prompt(parse_formula(text, registry), registry)
        if isinstance(spec, tuple):
            yes, no = spec
            entries = {"yes": yes, "no": no}
            filler = 1.0 - yes - no
            if filler > 0.0:
                entries["hmm"] = filler
            spec = {"entries": entries, "residual": 0.0}
        script[prompt.text] = spec
    return script


def make_workspace(
    base,
    atoms,
    formulas,
    script,
    partitions=None,
    truth=None,
    audit=None,
    lexicon=TINY_LEXICON,
    seed=0,
    backend_extra=None,
):
    """Write a complete run workspace (config + inputs) under ``base``."""
    base.mkdir(parents=True, exist_ok=True)
    write_json(base / "script.json", script)
    propositions = {"atoms": atoms, "formulas": formulas}
    if partitions is not None:
        propositions["partitions"] = partitions
    if truth is not None:
        propositions["truth"] = truth
    write_json(base / "propositions.json", propositions)
    backend = {"kind": "mock", "script_path": "script.json"}
    if backend_extra:
        backend.update(backend_extra)
    config = {
        "backend": backend,
        "propositions_path": "propositions.json",
        "output_dir": "out",
        "seed": seed,
    }
    if lexicon is not None:
        write_json(base / "lexicon.json", lexicon)
        config["lexicon_path"] = "lexicon.json"
    if audit is not None:
        write_json(base / "audit.json", audit)
        config["audit_config_path"] = "audit.json"
    write_json(base / "run.json", config)
    return base / "run.json"
