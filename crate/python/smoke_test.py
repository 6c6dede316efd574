#!/usr/bin/env python3
"""Smoke test for the duorec_py extension module.

Build the module first, then run this script:

    cargo build -p duorec-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO / "target" / "release" / "libduorec_py.so",
        REPO / "target" / "debug" / "libduorec_py.so",
        REPO / "target" / "release" / "libduorec_py.dylib",
        REPO / "target" / "debug" / "libduorec_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p duorec-py")
    stage = Path(tempfile.mkdtemp(prefix="duorec_py_"))
    shutil.copy(built, stage / "duorec_py.so")
    sys.path.insert(0, str(stage))
    import duorec_py

    return duorec_py


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    d = load_module()

    # Overlap bound and unit-ball projection.
    assert d.min_overlap_required(16) == 120
    assert d.min_overlap_required(2) == 1
    p = d.project_unit_ball([3.0, 4.0])
    assert close(p[0], 0.6) and close(p[1], 0.8)
    assert d.project_unit_ball([0.3, 0.4]) == [0.3, 0.4]

    # Metrics against hand computations.
    assert close(d.rmse([0.0, 1.0], [1.0, 1.0]), math.sqrt(0.5), 1e-12)
    assert close(d.mae([0.0, 1.0], [1.0, 1.0]), 0.5, 1e-12)
    pct = d.improvement_pct(0.2184, 0.2213, "lower_better")
    assert abs(pct - 1.31) < 0.01, pct
    prec, rec = d.precision_recall_at_k(
        [([("a", 0.9), ("b", 0.8), ("c", 0.1)], ["a", "c"])], 2
    )
    assert close(prec, 0.5) and close(rec, 0.5)

    # Mapping algebra: orthonormalization, round trip, composition.
    m = d.Mapping.orthonormalize([[2.0, 0.0], [1.0, 1.0]])
    assert m.orthogonality_error() < 1e-10
    v = m.forward([0.3, -0.4])
    back = m.inverse(v)
    assert close(back[0], 0.3) and close(back[1], -0.4)
    rot90 = d.Mapping.orthonormalize([[0.0, -1.0], [1.0, 0.0]])
    twice = d.Mapping.compose([rot90, rot90])
    flipped = twice.forward([1.0, 0.0])
    assert close(flipped[0], -1.0) and close(flipped[1], 0.0)

    # Planted-rotation recovery: gradient fit matches the closed form.
    theta = 0.7
    c, s = math.cos(theta), math.sin(theta)
    pairs = []
    for ax, ay in [(1.0, 0.0), (0.0, 1.0), (0.5, -0.25), (-0.3, 0.6)]:
        pairs.append(([ax, ay], [c * ax - s * ay, s * ax + c * ay]))
    fitted = d.Mapping.fit(pairs, lr=0.5, steps=2000)
    oracle = d.Mapping.procrustes([p[0] for p in pairs], [p[1] for p in pairs])
    diff = max(
        abs(fitted.matrix()[i][j] - oracle.matrix()[i][j])
        for i in range(2)
        for j in range(2)
    )
    assert diff < 1e-3, diff
    primal, dual = fitted.alignment_loss(pairs)
    assert primal < 1e-6 and abs(primal - dual) < 1e-9

    # Coupled factorization: monotone objective, perturbation exercised.
    out = d.nmf_demo(seed=3, alpha=0.3, iters=200)
    hist = out["history"]
    assert out["perturbation"] > 0
    assert all(b <= a + 1e-10 * max(a, 1.0) for a, b in zip(hist, hist[1:]))
    assert hist[-1] < 1e-3 * hist[0]
    try:
        d.nmf_demo(seed=3, alpha=0.6)
        raise AssertionError("alpha 0.6 must be refused")
    except ValueError as e:
        assert "condition-a-violated" in str(e)

    # Synthetic data on disk.
    with tempfile.TemporaryDirectory() as tmp:
        d.synth_to_dir(tmp, seed=5, users=30, items=20, dim=4, overlap=10,
                       ratings_per_user=5)
        base = Path(tmp)
        for f in ["domain_a/ratings.csv", "domain_b/meta.csv", "planted_map.txt"]:
            assert (base / f).exists(), f

    # Tiny end-to-end training run, deterministic under the seed.
    run1 = d.train_synthetic(seed=11, epochs=6)
    run2 = d.train_synthetic(seed=11, epochs=6)
    assert run1["total_loss"] == run2["total_loss"]
    assert run1["epochs"] >= 1
    assert run1["max_ortho_drift"] <= 1e-6
    assert all(v > 0 for v in run1["val_a"])

    print("smoke test OK:", len(run1["total_loss"]), "epochs recorded,",
          "final total loss", f"{run1['total_loss'][-1]:.5f}")


if __name__ == "__main__":
    main()
