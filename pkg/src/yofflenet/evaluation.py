"""Detection-vs-ground-truth matching and average-precision computation.

AP uses all-point interpolation: the precision envelope (running maximum
from high recall toward low) integrated over recall. The confidence
values only matter through their ordering.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .detect import iou


@dataclass(frozen=True)
class DetBox:
    """One detection as it appears in a results file."""

    cls: str
    confidence: float
    corners: tuple  # (l, t, r, b)

    def __post_init__(self):
        object.__setattr__(self, "corners", tuple(float(v) for v in self.corners))


def match_detections(dets, gts, iou_threshold: float) -> list:
    """Label one image's detections TP/FP against its ground truth.

    Detections are taken in descending confidence (ties keep input
    order); each claims the highest-IoU unmatched ground truth of its own
    class when that IoU reaches the threshold. Returns (det, is_tp) pairs
    in the processed order.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = [False] * len(gts)
    out = []
    for i in order:
        det = dets[i]
        best, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j] or gt.cls != det.cls:
                continue
            v = iou(det.corners, gt.corners)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= iou_threshold:
            taken[best_j] = True
            out.append((det, True))
        else:
            out.append((det, False))
    return out


def average_precision(matches, num_gt: int) -> float:
    """All-point interpolated AP from (confidence, is_tp) pairs.

    With no ground truth the score is 1.0 for an empty detection list
    (nothing to find, nothing claimed) and 0.0 otherwise.
    """
    if num_gt < 0:
        raise ValueError("num_gt must be >= 0")
    if num_gt == 0:
        return 1.0 if not matches else 0.0
    if not matches:
        return 0.0
    order = sorted(range(len(matches)), key=lambda i: (-matches[i][0], i))
    flags = np.array([bool(matches[i][1]) for i in order])
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def mean_ap(per_class_ap: dict) -> float:
    """Unweighted mean of per-class AP values."""
    if not per_class_ap:
        raise ValueError("need at least one class")
    return float(sum(per_class_ap.values()) / len(per_class_ap))


@dataclass(frozen=True)
class ClassResult:
    ap: float
    num_gt: int
    num_det: int
    num_tp: int
    iou_threshold: float


@dataclass(frozen=True)
class EvalReport:
    per_class: dict  # class name -> ClassResult
    map: float
    iou_threshold: float

    def to_json(self) -> str:
        doc = {
            "iou_threshold": self.iou_threshold,
            "mAP": self.map,
            "classes": {
                name: {"ap": r.ap, "num_gt": r.num_gt, "num_det": r.num_det,
                       "num_tp": r.num_tp, "iou_threshold": r.iou_threshold}
                for name, r in self.per_class.items()
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "ap", "num_gt", "num_det", "num_tp"])
        for name in sorted(self.per_class):
            r = self.per_class[name]
            w.writerow([name, f"{r.ap:.9f}", r.num_gt, r.num_det, r.num_tp])
        w.writerow(["mAP", f"{self.map:.9f}", "", "", ""])
        return buf.getvalue()


def evaluate(per_image: dict, classes, iou_threshold: float = 0.5,
             per_class_iou: dict | None = None) -> EvalReport:
    """Evaluate detections against ground truth over a set of images.

    per_image maps image id -> (detections, ground_truth_boxes).
    per_class_iou overrides the matching threshold for individual classes
    (the official KITTI protocol wants 0.7 for cars).
    """
    thresholds = {c: iou_threshold for c in classes}
    if per_class_iou:
        thresholds.update({c: v for c, v in per_class_iou.items() if c in thresholds})
    collected: dict = {c: [] for c in classes}
    gt_counts: dict = {c: 0 for c in classes}
    for image_id in sorted(per_image):
        dets, gts = per_image[image_id]
        for gt in gts:
            if gt.cls in gt_counts:
                gt_counts[gt.cls] += 1
        for cls in classes:
            cls_dets = [d for d in dets if d.cls == cls]
            cls_gts = [g for g in gts if g.cls == cls]
            for det, is_tp in match_detections(cls_dets, cls_gts, thresholds[cls]):
                collected[cls].append((det.confidence, is_tp))
    per_class = {}
    for cls in classes:
        matches = collected[cls]
        per_class[cls] = ClassResult(
            ap=average_precision(matches, gt_counts[cls]),
            num_gt=gt_counts[cls],
            num_det=len(matches),
            num_tp=sum(1 for _, tp in matches if tp),
            iou_threshold=thresholds[cls],
        )
    return EvalReport(per_class, mean_ap({c: r.ap for c, r in per_class.items()}),
                      iou_threshold)
