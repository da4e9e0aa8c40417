"""Decoding of raw head tensors into boxes, box geometry, and suppression.

Boxes are carried as (cx, cy, w, h) centers internally and converted to
(l, t, r, b) corners at the edges. Classification is multi-label: every
class score goes through the logistic function independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_ops import Tensor


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def center_to_corners(box):
    cx, cy, w, h = box
    return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


def corners_to_center(box):
    l, t, r, b = box
    return ((l + r) / 2, (t + b) / 2, r - l, b - t)


@dataclass(frozen=True)
class AnchorSet:
    """Per-scale prior box dimensions (input-image pixels) and strides."""

    strides: tuple  # ascending
    anchors: tuple  # one tuple of (w, h) pairs per stride

    def __post_init__(self):
        if len(self.strides) != len(self.anchors) or not self.strides:
            raise ValueError("need one anchor group per stride")
        if list(self.strides) != sorted(self.strides):
            raise ValueError("strides must be ascending")
        per_scale = {len(a) for a in self.anchors}
        if len(per_scale) != 1:
            raise ValueError("every scale must have the same number of anchors")
        for group in self.anchors:
            for w, h in group:
                if w <= 0 or h <= 0:
                    raise ValueError(f"anchor dimensions must be positive, got {(w, h)}")
        object.__setattr__(self, "strides", tuple(self.strides))
        object.__setattr__(self, "anchors",
                           tuple(tuple((float(w), float(h)) for w, h in g)
                                 for g in self.anchors))

    @property
    def per_scale(self) -> int:
        return len(self.anchors[0])

    def for_stride(self, stride: int) -> tuple:
        return self.anchors[self.strides.index(stride)]

    @classmethod
    def from_flat(cls, pairs, strides):
        """Split a flat area-sorted anchor list evenly across strides."""
        pairs = [(float(w), float(h)) for w, h in pairs]
        if len(pairs) % len(strides) != 0:
            raise ValueError(f"{len(pairs)} anchors do not split over {len(strides)} scales")
        per = len(pairs) // len(strides)
        groups = tuple(tuple(pairs[i * per:(i + 1) * per]) for i in range(len(strides)))
        return cls(tuple(strides), groups)


# Fallback priors for running without a k-means pass; roughly geometric
# in area over typical road-scene objects at 416 input.
DEFAULT_ANCHORS_2SCALE = AnchorSet(
    (16, 32),
    (((18, 15), (38, 28), (68, 45)),
     ((106, 66), (172, 110), (302, 182))),
)
DEFAULT_ANCHORS_3SCALE = AnchorSet(
    (8, 16, 32),
    (((10, 9), (20, 15), (34, 23)),
     ((52, 34), (82, 52), (126, 80)),
     ((184, 112), (260, 160), (368, 228))),
)


@dataclass(frozen=True)
class Detection:
    """One decoded box with objectness and per-class scores."""

    box: tuple  # (cx, cy, w, h) in input pixels
    objectness: float
    class_scores: tuple

    @property
    def class_id(self) -> int:
        return int(np.argmax(self.class_scores))

    @property
    def confidence(self) -> float:
        return self.objectness * max(self.class_scores)

    @property
    def corners(self) -> tuple:
        return center_to_corners(self.box)


def decode(head: Tensor, anchors, stride: int, num_classes: int) -> list:
    """Decode one scale's raw head tensor into detections.

    Channel layout per anchor: tx, ty, tw, th, objectness, class logits.
    Cell (i, j) with anchor (pw, ph) decodes to
    cx = (sigmoid(tx) + j) * stride, cy = (sigmoid(ty) + i) * stride,
    w = pw * exp(tw), h = ph * exp(th); objectness and class scores are
    independent logistics.
    """
    anchors = [(float(w), float(h)) for w, h in anchors]
    n_anchor = len(anchors)
    want = n_anchor * (5 + num_classes)
    if head.c != want:
        raise ValueError(
            f"head has {head.c} channels, expected {n_anchor} anchors * "
            f"(5 + {num_classes} classes) = {want}"
        )
    if head.n != 1:
        raise ValueError("decode expects a single-image head tensor")
    gh, gw = head.h, head.w
    raw = head.data[0].reshape(n_anchor, 5 + num_classes, gh, gw).astype(np.float64)
    tx, ty, tw, th, tobj = raw[:, 0], raw[:, 1], raw[:, 2], raw[:, 3], raw[:, 4]
    cls = sigmoid(raw[:, 5:])
    jj = np.arange(gw, dtype=np.float64)[None, None, :]
    ii = np.arange(gh, dtype=np.float64)[None, :, None]
    cx = (sigmoid(tx) + jj) * stride
    cy = (sigmoid(ty) + ii) * stride
    pw = np.array([a[0] for a in anchors])[:, None, None]
    ph = np.array([a[1] for a in anchors])[:, None, None]
    bw = pw * np.exp(tw)
    bh = ph * np.exp(th)
    obj = sigmoid(tobj)
    dets = []
    for a in range(n_anchor):
        for i in range(gh):
            for j in range(gw):
                dets.append(Detection(
                    (float(cx[a, i, j]), float(cy[a, i, j]),
                     float(bw[a, i, j]), float(bh[a, i, j])),
                    float(obj[a, i, j]),
                    tuple(float(v) for v in cls[a, :, i, j]),
                ))
    return dets


def iou(a, b) -> float:
    """Corner-box intersection over union; zero-area boxes give 0."""
    al, at, ar, ab = a
    bl, bt, br, bb = b
    iw = min(ar, br) - max(al, bl)
    ih = min(ab, bb) - max(at, bt)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ar - al) * (ab - at) + (br - bl) * (bb - bt) - inter
    return inter / union if union > 0 else 0.0


def giou(a, b) -> float:
    """Generalized IoU: IoU minus the empty fraction of the enclosing box."""
    al, at, ar, ab = a
    bl, bt, br, bb = b
    iw = min(ar, br) - max(al, bl)
    ih = min(ab, bb) - max(at, bt)
    inter = iw * ih if (iw > 0 and ih > 0) else 0.0
    union = (ar - al) * (ab - at) + (br - bl) * (bb - bt) - inter
    cw = max(ar, br) - min(al, bl)
    ch = max(ab, bb) - min(at, bt)
    enclose = cw * ch
    base = inter / union if union > 0 else 0.0
    if enclose <= 0:
        return base
    return base - (enclose - union) / enclose


def giou_loss_and_grad(pred, gt) -> tuple:
    """GIoU loss 1 - giou(pred, gt) and its analytic gradient.

    pred is (cx, cy, w, h) with w, h > 0; gt is a corner box. The
    gradient is piecewise by which edges bind the intersection and the
    enclosing box; exact ties take the neighbouring box's branch (the
    left-limit subgradient), so they contribute zero.
    """
    cx, cy, w, h = (float(v) for v in pred)
    if w <= 0 or h <= 0:
        raise ValueError(f"prediction must have positive extents, got w={w}, h={h}")
    pl, pt, pr, pb = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
    gl, gt_, gr, gb = (float(v) for v in gt)
    ga = (gr - gl) * (gb - gt_)

    iw = min(pr, gr) - max(pl, gl)
    ih = min(pb, gb) - max(pt, gt_)
    overlap = iw > 0 and ih > 0
    inter = iw * ih if overlap else 0.0
    union = w * h + ga - inter
    cw = max(pr, gr) - min(pl, gl)
    ch = max(pb, gb) - min(pt, gt_)
    enclose = cw * ch
    loss = 1.0 - (inter / union - (enclose - union) / enclose)

    # d inter / d corner (zero unless the pred edge binds)
    dI = np.zeros(4)  # order: l, t, r, b
    if overlap:
        dI[0] = -ih if pl > gl else 0.0
        dI[1] = -iw if pt > gt_ else 0.0
        dI[2] = ih if pr < gr else 0.0
        dI[3] = iw if pb < gb else 0.0
    # d area(pred) / d corner
    dA = np.array([-h, -w, h, w], dtype=float)
    dU = dA - dI
    dC = np.array([
        -ch if pl < gl else 0.0,
        -cw if pt < gt_ else 0.0,
        ch if pr > gr else 0.0,
        cw if pb > gb else 0.0,
    ])
    # giou = inter/union + union/enclose - 1
    dG = (dI * union - inter * dU) / union ** 2 \
        + (dU * enclose - union * dC) / enclose ** 2
    dl, dt, dr, db = -dG  # d loss / d corner
    grad = np.array([
        dl + dr,
        dt + db,
        (dr - dl) / 2,
        (db - dt) / 2,
    ])
    return loss, grad


def nms(dets: list, iou_threshold: float, conf_threshold: float) -> list:
    """Greedy per-class non-maximum suppression.

    Detections below the confidence threshold are dropped; survivors are
    processed in descending confidence (ties: earlier input first) and a
    detection is kept only if it overlaps no kept same-class detection by
    more than the IoU threshold.
    """
    if not 0 <= iou_threshold <= 1 or not 0 <= conf_threshold <= 1:
        raise ValueError("thresholds must lie in [0, 1]")
    if not dets:
        return []
    conf = np.array([d.confidence for d in dets])
    boxes = np.array([d.corners for d in dets])
    classes = np.array([d.class_id for d in dets])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    order = sorted(range(len(dets)), key=lambda i: (-conf[i], i))
    # per-class buffers of kept boxes so each candidate checks one
    # vectorized IoU row instead of a python pair loop
    kept_by_class: dict = {}
    kept: list = []
    for i in order:
        if conf[i] < conf_threshold:
            continue
        cls = classes[i]
        group = kept_by_class.get(cls)
        if group is not None and group["n"]:
            k = group["n"]
            kb = group["boxes"][:k]
            iw = np.minimum(boxes[i, 2], kb[:, 2]) - np.maximum(boxes[i, 0], kb[:, 0])
            ih = np.minimum(boxes[i, 3], kb[:, 3]) - np.maximum(boxes[i, 1], kb[:, 1])
            inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
            union = areas[i] + group["areas"][:k] - inter
            overlap = np.divide(inter, union, out=np.zeros_like(inter),
                                where=union > 0)
            if np.any(overlap > iou_threshold):
                continue
        if group is None:
            group = {"boxes": np.empty((len(dets), 4)), "areas": np.empty(len(dets)),
                     "n": 0}
            kept_by_class[cls] = group
        group["boxes"][group["n"]] = boxes[i]
        group["areas"][group["n"]] = areas[i]
        group["n"] += 1
        kept.append(dets[i])
    return kept
