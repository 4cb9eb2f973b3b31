#!/usr/bin/env python3
"""Smoke test for the todshift_py extension module.

Build the extension first, then run this script from the repository root:

    cargo build --release -p todshift-py
    python3 python/smoke_test.py

The script copies the built cdylib into a temporary directory under the
importable name `todshift_py.so` and drives the main types and operations
against the bundled mini corpus.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
FIXTURE = REPO / "crates" / "core" / "fixtures" / "mini_corpus"


def import_extension():
    candidates = [
        REPO / "target" / "release" / "libtodshift_py.so",
        REPO / "target" / "debug" / "libtodshift_py.so",
        REPO / "target" / "release" / "libtodshift_py.dylib",
        REPO / "target" / "debug" / "libtodshift_py.dylib",
    ]
    built = next((c for c in candidates if c.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build --release -p todshift-py")
    stage = Path(tempfile.mkdtemp(prefix="todshift_py_"))
    shutil.copy2(built, stage / "todshift_py.so")
    sys.path.insert(0, str(stage))
    import todshift_py

    return todshift_py


def main():
    ts = import_extension()

    # corpus handle
    snap = ts.Snapshot.ingest(str(FIXTURE))
    assert snap.pair_counts() == (10, 2, 2), snap.pair_counts()
    assert len(snap.entity_ids()) == 8
    assert snap.variant == "none"

    stats = json.loads(snap.stats_json())
    assert stats["total_entities"] == 8
    assert stats["domains"]["hotel"]["mean_structured_slot_values"] == 7.0

    stream = snap.serialize_entity("restaurant-1")
    assert stream.startswith("<struct> <slot> name <val> meze bar"), stream
    assert "<unstruct>" in stream

    ranking = snap.rank("turkish restaurant in the centre")
    assert ranking[0][0] == "restaurant-1", ranking[:3]

    # max-cut: a 4-cycle cuts all 4 edges; brute force agrees
    edges = [(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)]
    side, cut_value, relaxation = ts.max_cut(4, edges, seed=7)
    assert cut_value == 4.0, (side, cut_value)
    assert relaxation >= cut_value - 1e-4
    _, exact = ts.brute_force_max_cut(4, edges)
    assert exact == 4.0

    # metrics
    assert ts.bleu(["the cat sat"], ["the cat sat"]) == 100.0
    assert ts.bleu(["aaa"], ["bbb"]) == 0.0
    p, r, f1 = ts.slot_prf([[("s", "a"), ("s", "b")]], [[("s", "a"), ("s", "c")]])
    assert (p, r, f1) == (50.0, 50.0, 50.0)
    assert ts.success_at_k([["e2", "e1"]], [["e1"]], 1) == 0.0
    assert ts.success_at_k([["e2", "e1"]], [["e1"]], 2) == 1.0
    assert ts.canonicalize("  Meze   Bar. ") == "meze bar"

    # full pipeline into a scratch directory
    out = Path(tempfile.mkdtemp(prefix="todshift_run_"))
    manifest = json.loads(ts.pipeline(str(FIXTURE), str(out), variant="hybrid", seed=7))
    assert manifest["moves_applied"] == 7, manifest["moves_applied"]
    assert manifest["preservation_losses"] == 0
    assert (out / "hybrid" / "entities.json").exists()
    assert (out / "cut.json").exists()

    hybrid = ts.Snapshot.load(str(out / "hybrid"))
    assert hybrid.variant == "hybrid"
    emitted = hybrid.emit_training_jsonl(str(out / "train.jsonl"), seed=7)
    assert emitted == 80, emitted

    print("smoke test passed")


if __name__ == "__main__":
    main()
