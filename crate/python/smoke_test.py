#!/usr/bin/env python3
"""Smoke test for the tablegraph_py extension module.

Builds nothing itself: expects `cargo build -p tablegraph-py` (debug or
release) to have produced target/*/libtablegraph_py.so. Copies the cdylib
into a temp directory under the importable name and exercises the public
surface end to end. Exits nonzero on the first failure.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / profile / "libtablegraph_py.so"
        for profile in ("release", "debug")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(f"no libtablegraph_py.so under {REPO}/target; "
                 "run `cargo build -p tablegraph-py` first")
    stage = Path(tempfile.mkdtemp(prefix="tablegraph-py-"))
    shutil.copy2(built, stage / "tablegraph_py.so")
    sys.path.insert(0, str(stage))
    import tablegraph_py
    return tablegraph_py


def check(name, condition, detail=""):
    status = "ok" if condition else "FAIL"
    print(f"  [{status}] {name}{': ' + detail if detail else ''}")
    if not condition:
        sys.exit(1)


def main():
    tg = import_module()
    print(f"tablegraph_py {tg.__version__} loaded")

    # Generation is deterministic and validates.
    a = tg.generate(1, seed=7)
    b = tg.generate(1, seed=7)
    c = tg.generate(1, seed=8)
    a.validate()
    check("deterministic generation",
          a.image_bytes() == b.image_bytes()
          and a.image_bytes() != c.image_bytes(),
          f"{a!r}")
    check("category-1 tables have no merged cells", not a.has_merges())

    # Ground-truth adjacency invariants.
    cells, rows, cols = a.adjacency()
    v = a.vertex_count
    symmetric = all(cells[i][j] == cells[j][i] for i in range(v) for j in range(v))
    reflexive = all(m[i][i] for m in (cells, rows, cols) for i in range(v))
    nested = all(
        (not cells[i][j]) or (rows[i][j] and cols[i][j])
        for i in range(v) for j in range(v)
    )
    check("adjacency symmetric/reflexive/nested",
          symmetric and reflexive and nested, f"v={v}")

    # Clique algorithms against a hand-checked 4-vertex graph: a triangle
    # {0,1,2} plus the edge {2,3}.
    m = [
        [True, True, True, False],
        [True, True, True, False],
        [True, True, True, True],
        [False, False, True, True],
    ]
    check("maximal cliques", tg.maximal_cliques(m) == [[0, 1, 2], [2, 3]])
    check("connected components", tg.connected_components(m) == [[0, 1, 2, 3]])
    check("clique cover round trip",
          tg.adjacency_from_cliques(tg.maximal_cliques(m), 4) == m)
    try:
        tg.maximal_cliques([[True, False], [True, True]])
        check("asymmetric input rejected", False)
    except ValueError:
        check("asymmetric input rejected", True)

    # Per-sample graph consistency: words of one cell share rows and cols.
    for vert in a.vertices():
        check_ok = len(vert.row_ids) == 1 and len(vert.col_ids) == 1
        if not check_ok:
            check("category-1 vertex spans a single track", False, repr(vert))
    check("category-1 vertices span single tracks", True)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)

        # Dataset round trip through the on-disk format.
        data = tmp / "data"
        n = tg.generate_dataset(data, 4, category="mixed", seed=3)
        check("dataset written", n == 4)
        reloaded = tg.load(data, "00000")
        reloaded.validate()
        check("dataset round trip", reloaded.category == 1)

        # Oracle evaluation scores the ground truth perfectly.
        report = json.loads(tg.evaluate(data))
        check("oracle evaluation is perfect",
              report["overall"]["perfect_matching"] == 100.0
              and report["overall"]["cells"]["tpr"] == 100.0
              and report["overall"]["cells"]["fpr"] == 0.0)

        # A short training run writes the usual artifacts and evaluates.
        config = {
            "model": {
                "dtype": "f32",
                "conv_widths": [4, 4],
                "conv_strides": [2, 2],
                "kernel": 3,
                "interaction": "dgcnn_star",
                "blocks": 1,
                "width": 8,
                "spatial": 2,
                "k": 2,
                "head_hidden": [8],
                "max_word_len": 20,
            },
            "train": {"steps": 30, "pairs_per_vertex": 2, "lr": 1e-3, "seed": 5},
        }
        run = tmp / "run"
        summary = json.loads(tg.train(data, run, json.dumps(config)))
        check("training ran", summary["steps_run"] == 30,
              f"final loss {summary['final_loss']:.4f}")
        check("training artifacts written",
              (run / "model.ckpt").exists()
              and (run / "config.json").exists()
              and (run / "runlog.jsonl").exists())

        # Resume continues from the checkpoint's absolute step counter.
        summary2 = json.loads(tg.train(data, run, json.dumps(config), resume=True))
        check("resume continues the step counter",
              summary2["final_step"] == 60)

        model_report = json.loads(tg.evaluate(data, run / "model.ckpt"))
        check("checkpoint evaluation produces a report",
              model_report["overall"]["samples"] == 4
              and 0.0 <= model_report["overall"]["perfect_matching"] <= 100.0)

    print("smoke test passed")


if __name__ == "__main__":
    main()
