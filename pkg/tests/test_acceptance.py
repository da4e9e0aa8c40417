"""Acceptance suite: one test per release criterion, one line per result.

Run with `pytest tests/test_acceptance.py -v -s` for the criterion lines.
Tolerances are fixed here, not tuned: parameter counts within 15% of
1.9e6 (compressed) and 20% of 9.1e6 (baseline), compression ratio at
least 4.0, fp16 weight file within 15% of 4.0 MB, conv against the
direct oracle at 1e-5, gradients against finite differences at 1e-4.
"""

import time

import numpy as np
import pytest

from yofflenet.analyzer import analyze
from yofflenet.builders import build_yofflenet
from yofflenet.detect import giou, giou_loss_and_grad, nms
from yofflenet.evaluation import average_precision, evaluate
from yofflenet.executor import execute
from yofflenet.graph import infer_shapes
from yofflenet.kitti import anchor_kmeans, kmeans_anchors, split_dataset
from yofflenet.tensor_ops import ConvParams, Tensor, conv2d, depthwise_conv2d
from yofflenet.weights import init_random, save

from oracles import conv2d_direct, giou_numeric_grad, nms_exhaustive
from test_detect import det, random_pair
from test_eval import GOLDEN_AP, GOLDEN_MAP, load_golden

PARAM_TARGET_SP = 1.9e6
PARAM_TARGET_BASE = 9.1e6
WEIGHT_TARGET_BYTES = 4.0e6
MIN_COMPRESSION = 4.0


def ok(line):
    print(f"[PASS] {line}")


def test_c01_parameter_reproduction():
    t0 = time.perf_counter()
    sp = analyze(build_yofflenet("s+p")).total_params
    base = analyze(build_yofflenet("base-csp")).total_params
    elapsed = time.perf_counter() - t0
    assert abs(sp - PARAM_TARGET_SP) / PARAM_TARGET_SP <= 0.15
    assert abs(base - PARAM_TARGET_BASE) / PARAM_TARGET_BASE <= 0.20
    ratio = base / sp
    assert ratio >= MIN_COMPRESSION
    assert elapsed < 1.0
    ok(f"criterion 1: params s+p={sp:,} (target 1.9e6 +/-15%), "
       f"base-csp={base:,} (target 9.1e6 +/-20%), ratio {ratio:.2f}x >= 4.0, "
       f"{elapsed * 1e3:.0f} ms")


def test_c02_weight_size_reproduction(tmp_path):
    g = build_yofflenet("s+p")
    report = analyze(g)
    store = init_random(g, 0, dtype="f16")
    path = tmp_path / "sp_f16.yofw"
    save(store, path)
    actual = path.stat().st_size
    assert report.weight_file_bytes["f16"] == actual  # predicted to the byte
    assert abs(actual - WEIGHT_TARGET_BYTES) / WEIGHT_TARGET_BYTES <= 0.15
    ok(f"criterion 2: fp16 weight file {actual:,} B = {actual / 1e6:.2f} MB "
       f"(target 4.0 MB +/-15%), prediction exact")


def test_c03_cost_monotonicity():
    reports = {v: analyze(build_yofflenet(v)) for v in ("s+p", "s", "p", "base-csp")}
    p = {v: r.total_params for v, r in reports.items()}
    m = {v: r.total_macs for v, r in reports.items()}
    assert p["s+p"] < p["p"] < p["base-csp"]
    assert p["s+p"] < p["s"] < p["base-csp"]
    assert m["s+p"] < m["p"] < m["base-csp"]
    assert m["s+p"] < m["s"] < m["base-csp"]
    ok("criterion 3: params and MACs ordered s+p < p < base-csp and "
       "s+p < s < base-csp "
       f"(params {p['s+p']:,} < {p['p']:,} < {p['base-csp']:,}; s {p['s']:,})")


def test_c04_conv_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for case in range(100):
        n = int(rng.integers(1, 3))
        groups = int(rng.choice([1, 1, 1, 2, 4]))
        cing = int(rng.integers(1, 1 + 8 // groups))
        cog = int(rng.integers(1, 1 + 8 // groups))
        depthwise = case % 5 == 4
        if depthwise:
            groups = int(rng.integers(1, 9))
            cing = cog = 1
        c_in, c_out = cing * groups, cog * groups
        k = int(rng.choice([1, 3, 3, 5]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, (k + 1) // 2 + 1))
        h = int(rng.integers(k, 10))
        w = int(rng.integers(k, 10))
        x = Tensor(rng.standard_normal((n, c_in, h, w)).astype(np.float32))
        kern = rng.standard_normal((c_out, cing, k, k)).astype(np.float32)
        p = ConvParams(kern, stride=stride, padding=pad, groups=groups)
        got = (depthwise_conv2d if depthwise else conv2d)(x, p).data
        want = conv2d_direct(x.data, kern, stride, pad, groups)
        denom = max(1.0, float(np.max(np.abs(want))))
        assert np.max(np.abs(got - want)) / denom <= 1e-5, f"case {case}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    ok(f"criterion 4: 100 random conv cases (grouped + depthwise) match the "
       f"direct-loop oracle at 1e-5 in {elapsed:.1f} s")


def test_c05_shape_chain():
    g = build_yofflenet("s+p", num_classes=3, anchors_per_scale=3, input_size=416)
    heads = execute(g, init_random(g, 0), Tensor.zeros(1, 3, 416, 416))
    shapes = [h.shape for h in heads]
    assert shapes == [(1, 24, 26, 26), (1, 24, 13, 13)]
    g3 = build_yofflenet("s", num_classes=3, anchors_per_scale=3, input_size=416)
    assert len(g3.detect_layers()) == 3
    shapes3 = [infer_shapes(g3)[o] for o in g3.outputs]
    assert shapes3 == [(24, 52, 52), (24, 26, 26), (24, 13, 13)]
    ok(f"criterion 5: s+p executes to heads {shapes}; s declares three heads "
       f"{shapes3}")


def test_c06_giou_gradient():
    assert giou((0, 0, 2, 2), (0, 0, 2, 2)) == pytest.approx(1.0, abs=1e-9)
    assert giou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(-5 / 63, abs=1e-9)
    assert giou((0, 0, 1, 1), (2, 2, 3, 3)) == pytest.approx(-7 / 9, abs=1e-9)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        pred, gt = random_pair(rng)
        _, grad = giou_loss_and_grad(pred, gt)
        numeric = giou_numeric_grad(lambda p: giou_loss_and_grad(p, gt)[0], pred)
        scale = max(1.0, float(np.max(np.abs(numeric))))
        worst = max(worst, float(np.max(np.abs(grad - numeric))) / scale)
    assert worst <= 1e-4
    ok(f"criterion 6: hand GIoU values exact to 1e-9; analytic gradient vs "
       f"finite differences on 200 pairs, worst rel err {worst:.2e} <= 1e-4")


def test_c07_nms_and_ap_oracles():
    rng = np.random.default_rng(4096)
    for _ in range(100):
        boxes, confs, classes, dets = [], [], [], []
        for _ in range(20):
            l, t = rng.uniform(0, 60, 2)
            w, h = rng.uniform(4, 30, 2)
            c = float(rng.uniform(0, 1))
            cls = int(rng.integers(0, 3))
            boxes.append((l, t, l + w, t + h))
            confs.append(c)
            classes.append(cls)
            dets.append(det(l, t, l + w, t + h, c, cls_id=cls))
        thr = float(rng.uniform(0.2, 0.7))
        kept = nms(dets, thr, 0.1)
        want = nms_exhaustive(boxes, confs, classes, thr, 0.1)
        assert [k.confidence for k in kept] == pytest.approx(
            [confs[i] for i in want])

    report = evaluate(load_golden(), ("Car", "Pedestrian", "Cyclist"), 0.5)
    for cls, want_ap in GOLDEN_AP.items():
        assert report.per_class[cls].ap == pytest.approx(want_ap, abs=1e-9)
    assert report.map == pytest.approx(GOLDEN_MAP, abs=1e-9)

    confs = rng.uniform(0.05, 0.95, 30)
    flags = rng.uniform(0, 1, 30) > 0.5
    num_gt = int(flags.sum()) + 3
    base = average_precision(list(zip(confs, flags)), num_gt)
    for _ in range(10):
        a, b = float(rng.uniform(0.2, 4)), float(rng.uniform(0, 3))
        rescaled = average_precision(list(zip(a * confs + b, flags)), num_gt)
        assert rescaled == pytest.approx(base, abs=1e-12)
    ok(f"criterion 7: NMS matches exhaustive suppression on 100x20 boxes; "
       f"golden fixture mAP {report.map:.9f} = 8/9 exact; AP invariant under "
       f"10 monotone confidence rescalings")


def test_c08_dataset_split():
    ids = [f"{i:06d}" for i in range(7480)]
    split = split_dataset(ids, seed=0)
    sizes = (len(split.train), len(split.val), len(split.test))
    assert sizes == (3740, 2244, 1496)
    assert split == split_dataset(ids, seed=0)
    for n in range(1, 1001):
        sub = [str(i) for i in range(n)]
        parts = split_dataset(sub, seed=n)
        merged = list(parts.train) + list(parts.val) + list(parts.test)
        assert len(merged) == n and set(merged) == set(sub)
    ok(f"criterion 8: 7480 ids -> {sizes} deterministic; partition property "
       f"fuzz-tested for 1 <= n <= 1000")


def test_c09_kmeans_anchors():
    boxes = [(10.0, 10.0)] * 50 + [(50.0, 50.0)] * 50
    anchors = kmeans_anchors(boxes, k=2, seed=1)
    np.testing.assert_array_equal(anchors, [[10.0, 10.0], [50.0, 50.0]])
    rng = np.random.default_rng(5)
    modes = np.array([[12.0, 18.0], [45.0, 30.0], [90.0, 120.0]])
    jittered = np.vstack([m + rng.uniform(-2, 2, (50, 2)) for m in modes])
    for seed in range(3):
        hist = anchor_kmeans(jittered, k=3, seed=seed).objective_history
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    ok("criterion 9: planted 2-mode clusters recovered exactly; objective "
       "non-increasing over Lloyd iterations (3 seeds)")


def test_c10_benchmark_ordering():
    from yofflenet.cli import main

    import json
    import io
    from contextlib import redirect_stdout

    def fps(variant):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["bench", "--variant", variant, "--iterations", "2",
                         "--warmup", "1", "--seed", "0", "--format", "json"])
        assert code == 0
        return json.loads(buf.getvalue())["fps"]

    fast = fps("s+p")
    slow = fps("base-csp")
    assert fast > slow
    ok(f"criterion 10: single-image FPS ordering holds on this host: "
       f"s+p {fast:.2f} > base-csp {slow:.2f} (directional claim only)")


def test_c11_untrainable_targets_stated():
    # The published accuracy (85.8% mAP) and the loss value a full training
    # run converges to (~0.027) need 300 epochs on KITTI and are out of
    # scope; criteria 6 and 7 stand in for them by proving the loss
    # gradient and the metric implementation correct.
    ok("criterion 11: 85.8% mAP and GIoU-loss convergence value are training "
       "outcomes, excluded by design; covered by criteria 6-7 instead")
