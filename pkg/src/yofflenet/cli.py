"""Command-line interface: analyze, infer, bench, eval, anchors, init-weights, split.

Exit codes: 0 success, 2 configuration error, 3 file-format error,
4 data error. The YOFFLE_LOG environment variable sets log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analyzer import analyze
from .builders import VARIANTS, build_yofflenet
from .detect import (
    DEFAULT_ANCHORS_2SCALE,
    DEFAULT_ANCHORS_3SCALE,
    AnchorSet,
    nms,
    decode,
)
from .evaluation import DetBox, evaluate
from .executor import bind
from .graph import GraphError
from .kitti import (
    CLASSES,
    KittiFormatError,
    anchor_kmeans,
    letterbox_image,
    load_image,
    parse_kitti_label,
    read_anchors,
    split_dataset,
    write_anchors,
)
from .tensor_ops import Tensor
from .weights import WeightFileError, init_random, load, save

log = logging.getLogger("yofflenet")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_DATA = 4


class DataError(Exception):
    """Input data is structurally fine but unusable (mismatched, missing, empty)."""


def class_names(num_classes: int) -> list:
    if num_classes == len(CLASSES):
        return list(CLASSES)
    return [f"class{i}" for i in range(num_classes)]


def _add_model_flags(p):
    p.add_argument("--variant", choices=VARIANTS, default="s+p")
    p.add_argument("--input-size", type=int, default=416,
                   help="square input resolution, multiple of 32")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--anchors-per-scale", type=int, default=3)


def _build(args):
    return build_yofflenet(args.variant, args.classes, args.anchors_per_scale,
                           args.input_size)


def _default_anchors(n_scales: int) -> AnchorSet:
    return DEFAULT_ANCHORS_2SCALE if n_scales == 2 else DEFAULT_ANCHORS_3SCALE


def _anchor_set(args, graph) -> AnchorSet:
    strides = _head_strides(graph, args.input_size)
    if args.anchors:
        pairs = read_anchors(args.anchors)
        return AnchorSet.from_flat(pairs, strides)
    if args.anchors_per_scale != 3:
        raise ValueError("built-in anchors come 3 per scale; pass --anchors "
                         f"for {args.anchors_per_scale} per scale")
    return _default_anchors(len(strides))


def _head_strides(graph, input_size: int) -> list:
    from .graph import infer_shapes

    shapes = infer_shapes(graph)
    return [input_size // shapes[o][1] for o in graph.outputs]


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


# ----------------------------------------------------------------- analyze

def cmd_analyze(args) -> int:
    graph = _build(args)
    report = analyze(graph)
    base = analyze(build_yofflenet("base-csp", args.classes, args.anchors_per_scale,
                                   args.input_size))
    ratio = base.total_params / report.total_params
    fp16_mb = report.weight_file_bytes["f16"] / 1e6
    if args.format == "json":
        print(report.to_json(), end="")
    elif args.format == "csv":
        print(report.to_csv(), end="")
    else:
        print(f"variant {args.variant} @ {args.input_size}x{args.input_size}")
        print(f"  parameters    {report.total_params:>14,}")
        print(f"  MACs          {report.total_macs:>14,}")
        print(f"  memory access {report.total_mem_elements:>14,} elements "
              f"({report.total_mem_bytes:,} bytes)")
        print(f"  weight file   {report.weight_file_bytes['f32']:,} B fp32 / "
              f"{report.weight_file_bytes['f16']:,} B fp16 ({fp16_mb:.2f} MB)")
        print(f"  compression   {ratio:.2f}x fewer parameters than base-csp")
    if args.out:
        out = Path(args.out)
        _write(out / f"analyze_{args.variant.replace('+', 'p')}.csv", report.to_csv())
        _write(out / f"analyze_{args.variant.replace('+', 'p')}.json", report.to_json())
    return EXIT_OK


# ------------------------------------------------------------ init-weights

def cmd_init_weights(args) -> int:
    graph = _build(args)
    store = init_random(graph, args.seed, args.dtype)
    save(store, args.out)
    print(f"{args.out}: {len(store)} entries, {store.total_scalars():,} scalars, "
          f"{os.path.getsize(args.out):,} bytes ({args.dtype})")
    return EXIT_OK


# ------------------------------------------------------------------- infer

def _detect_image(model, anchor_set, strides, args, path: Path):
    rgb = load_image(path)
    chw, box_map = letterbox_image(rgb, args.input_size)
    heads = model(Tensor(chw))
    dets = []
    for head, stride in zip(heads, strides):
        dets.extend(decode(head, anchor_set.for_stride(stride), stride, args.classes))
    kept = nms(dets, args.nms_iou, args.conf)
    names = class_names(args.classes)
    lines = []
    for d in kept:
        l, t, r, b = box_map.to_original(d.corners)
        lines.append(f"{names[d.class_id]} {d.confidence:.6f} "
                     f"{l:.2f} {t:.2f} {r:.2f} {b:.2f}")
    return rgb, kept, box_map, lines


def _draw(rgb, kept, box_map, names, out_path: Path):
    from PIL import Image, ImageDraw

    img = Image.fromarray(rgb)
    drawer = ImageDraw.Draw(img)
    for d in kept:
        l, t, r, b = box_map.to_original(d.corners)
        drawer.rectangle([l, t, r, b], outline=(255, 64, 64), width=2)
        drawer.text((l + 2, max(0, t - 12)),
                    f"{names[d.class_id]} {d.confidence:.2f}", fill=(255, 64, 64))
    img.save(out_path)


def cmd_infer(args) -> int:
    graph = _build(args)
    store = load(args.weights)
    model = bind(graph, store)
    anchor_set = _anchor_set(args, graph)
    strides = _head_strides(graph, args.input_size)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = class_names(args.classes)

    def run_one(path: Path):
        try:
            rgb, kept, box_map, lines = _detect_image(model, anchor_set, strides, args, path)
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            return False
        _write(out_dir / f"{path.stem}.txt", "\n".join(lines) + ("\n" if lines else ""))
        if args.draw:
            _draw(rgb, kept, box_map, names, out_dir / f"{path.stem}.png")
        print(f"{path.name}: {len(kept)} detections")
        return True

    paths = [Path(p) for p in args.images]
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_one, paths))
    else:
        results = [run_one(p) for p in paths]
    failures = sum(1 for ok in results if not ok)
    if failures:
        log.warning("%d of %d images could not be processed", failures, len(paths))
        return EXIT_DATA
    return EXIT_OK


# ------------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    if args.iterations < 1:
        raise ValueError(f"--iterations must be >= 1, got {args.iterations}")
    if args.warmup < 0:
        raise ValueError(f"--warmup must be >= 0, got {args.warmup}")
    graph = _build(args)
    if args.weights:
        store = load(args.weights)
    else:
        store = init_random(graph, args.seed)
    model = bind(graph, store)
    anchor_set = _anchor_set(args, graph)
    strides = _head_strides(graph, args.input_size)
    rng = np.random.default_rng(args.seed)
    x = Tensor(rng.random((1, 3, args.input_size, args.input_size), dtype=np.float32))

    def one_pass():
        heads = model(x)
        dets = []
        for head, stride in zip(heads, strides):
            dets.extend(decode(head, anchor_set.for_stride(stride), stride, args.classes))
        nms(dets, args.nms_iou, args.conf)

    for _ in range(args.warmup):
        one_pass()
    times = []
    for _ in range(args.iterations):
        t0 = time.perf_counter()
        one_pass()
        times.append(time.perf_counter() - t0)
    times_ms = [t * 1e3 for t in times]
    mean_s = sum(times) / len(times)
    report = {
        "variant": args.variant,
        "input_size": args.input_size,
        "iterations": args.iterations,
        "warmup": args.warmup,
        "mean_ms": mean_s * 1e3,
        "median_ms": statistics.median(times_ms),
        "p95_ms": float(np.percentile(times_ms, 95)),
        "fps": 1.0 / mean_s,
        "host": {
            "platform": platform.platform(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "cpus": os.cpu_count(),
            "threads": args.threads,
        },
    }
    if args.format == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    elif args.format == "csv":
        print("variant,input_size,iterations,warmup,mean_ms,median_ms,p95_ms,fps")
        print(f"{args.variant},{args.input_size},{args.iterations},{args.warmup},"
              f"{report['mean_ms']:.3f},{report['median_ms']:.3f},"
              f"{report['p95_ms']:.3f},{report['fps']:.3f}")
    else:
        print(f"variant {args.variant} @ {args.input_size} "
              f"({args.iterations} iterations, {args.warmup} warmup)")
        print(f"  mean   {report['mean_ms']:8.2f} ms")
        print(f"  median {report['median_ms']:8.2f} ms")
        print(f"  p95    {report['p95_ms']:8.2f} ms")
        print(f"  fps    {report['fps']:8.2f}")
        print(f"  host   {report['host']['platform']} / numpy {np.__version__} "
              f"/ {report['host']['cpus']} cpus")
    if args.out:
        _write(Path(args.out), json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -------------------------------------------------------------------- eval

def _read_detection_file(path: Path) -> list:
    dets = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise KittiFormatError(
                f"{path.name} line {lineno}: expected 'class conf l t r b'"
            )
        try:
            conf = float(parts[1])
            corners = tuple(float(v) for v in parts[2:6])
        except ValueError as exc:
            raise KittiFormatError(f"{path.name} line {lineno}: {exc}") from exc
        dets.append(DetBox(parts[0], conf, corners))
    return dets


def cmd_eval(args) -> int:
    det_dir = Path(args.detections)
    label_dir = Path(args.labels)
    det_ids = {p.stem: p for p in sorted(det_dir.glob("*.txt"))}
    gt_ids = {p.stem: p for p in sorted(label_dir.glob("*.txt"))}
    if not gt_ids:
        raise DataError(f"no label files in {label_dir}")
    if set(det_ids) != set(gt_ids):
        missing = sorted(set(gt_ids) - set(det_ids))
        extra = sorted(set(det_ids) - set(gt_ids))
        raise DataError(
            "detection/label id mismatch: "
            f"missing detections for {missing or 'none'}, "
            f"unmatched detections {extra or 'none'}"
        )
    per_image = {}
    for image_id, det_path in det_ids.items():
        gts = parse_kitti_label(gt_ids[image_id].read_text(), image_id)
        per_image[image_id] = (_read_detection_file(det_path), gts)
    per_class_iou = {"Car": 0.7} if args.kitti_protocol else None
    report = evaluate(per_image, class_names(args.classes), args.eval_iou,
                      per_class_iou)
    if args.format == "json":
        print(report.to_json(), end="")
    elif args.format == "csv":
        print(report.to_csv(), end="")
    else:
        for name in sorted(report.per_class):
            r = report.per_class[name]
            print(f"  {name:<12} AP {r.ap:.4f}  ({r.num_tp}/{r.num_det} TP, "
                  f"{r.num_gt} GT)")
        print(f"  mAP@{args.eval_iou:.2f} = {report.map:.6f}")
    if args.out:
        out = Path(args.out)
        _write(out / "eval.json", report.to_json())
        _write(out / "eval.csv", report.to_csv())
    return EXIT_OK



# ----------------------------------------------------------------- anchors

def cmd_anchors(args) -> int:
    label_dir = Path(args.labels)
    sizes = []
    for path in sorted(label_dir.glob("*.txt")):
        for box in parse_kitti_label(path.read_text(), path.stem):
            sizes.append((box.width, box.height))
    if not sizes:
        raise DataError(f"no boxes found under {label_dir}")
    distinct = len({tuple(s) for s in sizes})
    if distinct < args.k:
        raise DataError(f"need at least k={args.k} distinct boxes, found {distinct}")
    result = anchor_kmeans(sizes, args.k, args.seed)
    write_anchors(args.out, result.centroids)
    print(f"{args.out}: {args.k} anchors from {len(sizes)} boxes, "
          f"mean best IoU {result.mean_best_iou:.4f}")
    return EXIT_OK


# ------------------------------------------------------------------- split

def cmd_split(args) -> int:
    if args.ids:
        ids = [line.strip() for line in Path(args.ids).read_text().splitlines()
               if line.strip()]
    else:
        ids = [p.stem for p in sorted(Path(args.labels).glob("*.txt"))]
    if not ids:
        raise DataError("no ids to split")
    ratios = tuple(float(v) for v in args.ratios.split(","))
    parts = split_dataset(ids, args.seed, ratios)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, chunk in zip(("train", "val", "test"), parts):
        _write(out / f"{name}.txt", "\n".join(chunk) + ("\n" if chunk else ""))
    print(f"split {len(ids)} ids -> train {len(parts.train)} / "
          f"val {len(parts.val)} / test {len(parts.test)} (seed {args.seed})")
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="yofflenet",
        description="Compressed two-scale object detector toolkit",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="parameter/MAC/weight-size report")
    _add_model_flags(pa)
    pa.add_argument("--format", choices=("text", "json", "csv"), default="text")
    pa.add_argument("--out", help="directory for CSV/JSON reports")
    pa.set_defaults(fn=cmd_analyze)

    pw = sub.add_parser("init-weights", help="write seeded random weights")
    _add_model_flags(pw)
    pw.add_argument("--seed", type=int, default=0)
    pw.add_argument("--dtype", choices=("f32", "f16"), default="f32")
    pw.add_argument("--out", required=True)
    pw.set_defaults(fn=cmd_init_weights)

    pi = sub.add_parser("infer", help="run detection on images")
    _add_model_flags(pi)
    pi.add_argument("--weights", required=True)
    pi.add_argument("--anchors", help="anchor file (w h per line); defaults built in")
    pi.add_argument("--conf", type=float, default=0.25)
    pi.add_argument("--nms-iou", type=float, default=0.45)
    pi.add_argument("--threads", type=int, default=1)
    pi.add_argument("--draw", action="store_true", help="write annotated copies")
    pi.add_argument("--out", required=True, help="directory for detection files")
    pi.add_argument("images", nargs="+")
    pi.set_defaults(fn=cmd_infer)

    pb = sub.add_parser("bench", help="single-image latency benchmark")
    _add_model_flags(pb)
    pb.add_argument("--weights", help="weight file; random init when omitted")
    pb.add_argument("--iterations", type=int, default=20)
    pb.add_argument("--warmup", type=int, default=3)
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--conf", type=float, default=0.25)
    pb.add_argument("--nms-iou", type=float, default=0.45)
    pb.add_argument("--threads", type=int, default=1)
    pb.add_argument("--anchors")
    pb.add_argument("--format", choices=("text", "json", "csv"), default="text")
    pb.add_argument("--out", help="write the JSON report here")
    pb.set_defaults(fn=cmd_bench)

    pe = sub.add_parser("eval", help="mAP of detection files vs KITTI labels")
    pe.add_argument("--detections", required=True)
    pe.add_argument("--labels", required=True)
    pe.add_argument("--classes", type=int, default=3)
    pe.add_argument("--eval-iou", type=float, default=0.5)
    pe.add_argument("--kitti-protocol", action="store_true",
                    help="official KITTI matching: IoU 0.7 for Car")
    pe.add_argument("--format", choices=("text", "json", "csv"), default="text")
    pe.add_argument("--out", help="directory for eval reports")
    pe.set_defaults(fn=cmd_eval)

    pk = sub.add_parser("anchors", help="k-means anchor boxes from labels")
    pk.add_argument("--labels", required=True)
    pk.add_argument("--k", type=int, default=6)
    pk.add_argument("--seed", type=int, default=0)
    pk.add_argument("--out", required=True)
    pk.set_defaults(fn=cmd_anchors)

    ps = sub.add_parser("split", help="deterministic train/val/test split")
    group = ps.add_mutually_exclusive_group(required=True)
    group.add_argument("--ids", help="file with one image id per line")
    group.add_argument("--labels", help="directory of label files; stems become ids")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--ratios", default="0.5,0.3,0.2")
    ps.add_argument("--out", required=True)
    ps.set_defaults(fn=cmd_split)

    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("YOFFLE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        bad = args.input_size % 32 if hasattr(args, "input_size") else 0
        if bad:
            parser.error(f"--input-size must be a multiple of 32, got {args.input_size}")
        return args.fn(args)
    except (WeightFileError, KittiFormatError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
