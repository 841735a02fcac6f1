"""Validates configs and an output directory against docs/schemas.

usage: check_schemas.py [OUTPUT_DIR ...]
"""

import json
import pathlib
import re
import sys

import jsonschema

ROOT = pathlib.Path(__file__).resolve().parent.parent
SCHEMAS = ROOT / "docs" / "schemas"

FILES = {
    "cr_outer.json": "cr",
    "cr_inner.json": "cr",
    "meta.json": "meta",
    "timing.json": "timing",
    "attractors.json": "attractors",
    "conley_report.json": "conley_report",
    "union_bminus_a.json": "set_file",
    "symmetric_difference.json": "set_file",
    "inner_violations.json": "set_file",
    "outer_violations.json": "set_file",
    "chain.json": "chain",
    "verify.json": "verify",
}


def validator(schema):
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    return cls


def check_pgm(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "P2", path
    assert re.fullmatch(r"# config_hash [0-9a-f]{64}", lines[1]), path
    w, h = map(int, lines[2].split())
    assert lines[3] == "255", path
    rows = lines[4:]
    assert len(rows) == h and all(len(r.split()) == w for r in rows), path
    assert {v for r in rows for v in r.split()} <= {"0", "255"}, path


def main(dirs):
    config = json.loads((SCHEMAS / "config.schema.json").read_text())
    outputs = json.loads((SCHEMAS / "outputs.schema.json").read_text())
    validator(config)
    validator(outputs)
    n = 0
    for p in sorted((ROOT / "configs").glob("*.json")):
        jsonschema.validate(json.loads(p.read_text()), config)
        n += 1
    for d in map(pathlib.Path, dirs):
        for p in sorted(d.iterdir()):
            if p.suffix == ".pgm":
                check_pgm(p)
                n += 1
                continue
            name = FILES.get(p.name)
            if name is None:
                continue
            schema = dict(outputs, **{"$ref": f"#/$defs/{name}"})
            jsonschema.validate(json.loads(p.read_text()), schema)
            n += 1
    print(f"{n} documents valid")


if __name__ == "__main__":
    main(sys.argv[1:])
