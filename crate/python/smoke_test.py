"""Smoke test for the `chainrec` Python extension.

Imports an installed `chainrec` if there is one; otherwise builds the
extension with cargo and loads it from a temporary directory.
"""

import importlib
import json
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("chainrec")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "chainrec-py"], cwd=ROOT, check=True
    )
    lib = ROOT / "target" / "release" / "libchainrec.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "chainrec.so")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("chainrec")


def main():
    cr = load()
    halving = (ROOT / "configs" / "halving.json").read_text()

    h = cr.config_hash(halving)
    assert len(h) == 64, h
    # workers and output_dir do not change the hash
    cfg = json.loads(halving)
    cfg["workers"] = 1
    cfg["output_dir"] = "elsewhere"
    assert cr.config_hash(json.dumps(cfg)) == h

    outer = cr.chain_recurrent_cells(halving)
    inner = cr.chain_recurrent_cells(halving, mode="inner")
    assert set(map(tuple, inner)) <= set(map(tuple, outer))
    assert [31] in outer and [32] in outer and [0] not in outer, outer

    with tempfile.TemporaryDirectory() as out:
        counts = dict(cr.run_cr(halving, out))
        assert counts["outer"] == len(outer), counts
        written = json.loads((pathlib.Path(out) / "cr_outer.json").read_text())
        assert written["config_hash"] == h

        assert cr.find_chain(halving, out, [0.01], [0.0]) is not None
        assert cr.find_chain(halving, out, [0.9], [0.9]) is None

        small = json.loads(cr.zn_preset(32))
        verdict, code = cr.run_conley(json.dumps(small), out)
        assert (verdict, code) == ("CONSISTENT", 0), (verdict, code)
        verdict, code = cr.run_conley(json.dumps(small), out, corrupt_record=True)
        assert (verdict, code) == ("VIOLATION", 2), (verdict, code)

    bad = json.loads(halving)
    bad["connector_max_len"] = -1
    try:
        cr.config_hash(json.dumps(bad))
    except ValueError as e:
        assert "connector_max_len" in str(e), e
    else:
        raise AssertionError("negative connector_max_len accepted")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
