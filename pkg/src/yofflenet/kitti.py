"""KITTI label ingestion, dataset splitting, and anchor clustering.

Labels are the public KITTI object format: one object per line with
type, truncation, occlusion, alpha, the 2-D bounding box, then 3-D
fields this toolkit ignores. Vans count as cars and sitting persons as
pedestrians; everything outside the three road classes is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CLASSES = ("Car", "Pedestrian", "Cyclist")

_CLASS_MAP = {
    "Car": "Car",
    "Van": "Car",
    "Pedestrian": "Pedestrian",
    "Person_sitting": "Pedestrian",
    "Cyclist": "Cyclist",
}


class KittiFormatError(ValueError):
    """Malformed KITTI label text."""


@dataclass(frozen=True)
class GroundTruthBox:
    cls: str
    corners: tuple  # (left, top, right, bottom) in pixels
    image_id: str = ""

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ValueError(f"class {self.cls!r} is not one of {CLASSES}")
        l, t, r, b = self.corners
        if not (r > l and b > t):
            raise ValueError(f"degenerate box corners {self.corners}")
        object.__setattr__(self, "corners", tuple(float(v) for v in self.corners))

    @property
    def width(self) -> float:
        return self.corners[2] - self.corners[0]

    @property
    def height(self) -> float:
        return self.corners[3] - self.corners[1]


def parse_kitti_label(text: str, image_id: str = "") -> list:
    """Parse one label file's text into ground-truth boxes.

    Unknown classes (including DontCare) are dropped, but every line must
    still be structurally valid; a malformed line raises with its number.
    """
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 8:
            raise KittiFormatError(
                f"line {lineno}: expected at least 8 fields, got {len(fields)}"
            )
        kind = fields[0]
        try:
            l, t, r, b = (float(v) for v in fields[4:8])
        except ValueError as exc:
            raise KittiFormatError(f"line {lineno}: bad bounding box: {exc}") from exc
        cls = _CLASS_MAP.get(kind)
        if cls is None:
            continue
        if not (r > l and b > t):
            raise KittiFormatError(
                f"line {lineno}: degenerate box ({l}, {t}, {r}, {b})"
            )
        boxes.append(GroundTruthBox(cls, (l, t, r, b), image_id))
    return boxes


def format_kitti_label(boxes) -> str:
    """Canonical KITTI lines for the retained fields (class and corners)."""
    lines = []
    for box in boxes:
        l, t, r, b = box.corners
        lines.append(
            f"{box.cls} 0.00 0 0.00 {l:.2f} {t:.2f} {r:.2f} {b:.2f} "
            "0.00 0.00 0.00 0.00 0.00 0.00 0.00"
        )
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple
    val: tuple
    test: tuple

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def split_dataset(ids, seed: int, ratios=(0.5, 0.3, 0.2)) -> DatasetSplit:
    """Deterministic shuffled partition with largest-remainder rounding."""
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty id list")
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, val, test)")
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(ids)
    quotas = [n * r for r in ratios]
    sizes = [int(q) for q in quotas]
    # hand the leftover slots to the largest fractional parts, ties by position
    leftovers = sorted(range(3), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in leftovers[: n - sum(sizes)]:
        sizes[i] += 1
    a, b = sizes[0], sizes[0] + sizes[1]
    return DatasetSplit(tuple(order[:a]), tuple(order[a:b]), tuple(order[b:]))


def _wh_iou(box, others) -> np.ndarray:
    """IoU of origin-aligned (w, h) boxes against an (m, 2) array."""
    iw = np.minimum(box[0], others[:, 0])
    ih = np.minimum(box[1], others[:, 1])
    inter = iw * ih
    union = box[0] * box[1] + others[:, 0] * others[:, 1] - inter
    return inter / union


def _best_iou_matrix(boxes: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) IoU matrix of origin-aligned boxes vs centroids."""
    iw = np.minimum(boxes[:, None, 0], centroids[None, :, 0])
    ih = np.minimum(boxes[:, None, 1], centroids[None, :, 1])
    inter = iw * ih
    union = (boxes[:, 0] * boxes[:, 1])[:, None] + \
        (centroids[:, 0] * centroids[:, 1])[None, :] - inter
    return inter / union


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # (k, 2), sorted by area ascending
    objective_history: tuple  # mean (1 - best IoU) after each assignment
    mean_best_iou: float


def anchor_kmeans(boxes, k: int, seed: int, max_iters: int = 300) -> KMeansResult:
    """Lloyd iterations under the 1 - IoU distance with plus-plus seeding.

    Centroid updates use the per-cluster median of widths and heights,
    guarded so a cluster keeps its old centroid whenever the median would
    raise its cost; the objective is therefore non-increasing. Empty
    clusters are reseeded from the box farthest from every centroid.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 2)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(boxes) == 0:
        raise ValueError("no boxes to cluster")
    if np.any(boxes <= 0):
        raise ValueError("box dimensions must be positive")
    distinct = np.unique(boxes, axis=0)
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the {len(distinct)} distinct boxes")

    rng = np.random.default_rng(seed)
    centroids = _seed_plus_plus(boxes, k, rng)
    history = []
    assign = None
    for _ in range(max_iters):
        dist = 1.0 - _best_iou_matrix(boxes, centroids)
        new_assign = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(len(boxes)), new_assign].mean()))
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
        for c in range(k):
            members = boxes[assign == c]
            if len(members) == 0:
                far = int(np.argmax(np.min(dist, axis=1)))
                centroids[c] = boxes[far]
                continue
            candidate = np.median(members, axis=0)
            old_cost = (1.0 - _wh_iou(centroids[c], members)).sum()
            new_cost = (1.0 - _wh_iou(candidate, members)).sum()
            if new_cost <= old_cost:
                centroids[c] = candidate
    order = np.argsort(centroids[:, 0] * centroids[:, 1], kind="stable")
    centroids = centroids[order]
    best_iou = _best_iou_matrix(boxes, centroids).max(axis=1)
    return KMeansResult(centroids, tuple(history), float(best_iou.mean()))


def _seed_plus_plus(boxes: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ style seeding with squared 1 - IoU weighting."""
    first = rng.integers(len(boxes))
    centroids = [boxes[first]]
    while len(centroids) < k:
        dist = 1.0 - _best_iou_matrix(boxes, np.array(centroids)).max(axis=1)
        weights = dist ** 2
        total = weights.sum()
        if total <= 0:
            # all boxes coincide with a centroid; any distinct box works
            remaining = [b for b in boxes if not any(np.array_equal(b, c) for c in centroids)]
            centroids.append(remaining[0])
            continue
        pick = rng.choice(len(boxes), p=weights / total)
        centroids.append(boxes[pick])
    return np.array(centroids, dtype=np.float64)


def kmeans_anchors(boxes, k: int, seed: int) -> np.ndarray:
    """Anchor dimensions: (k, 2) array sorted by area ascending."""
    return anchor_kmeans(boxes, k, seed).centroids


def write_anchors(path, centroids) -> None:
    with open(path, "w") as fh:
        for w, h in centroids:
            fh.write(f"{w:.2f} {h:.2f}\n")


def read_anchors(path) -> list:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise KittiFormatError(f"anchor file line {lineno}: expected 'w h'")
            try:
                pairs.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise KittiFormatError(f"anchor file line {lineno}: {exc}") from exc
    if not pairs:
        raise KittiFormatError("anchor file is empty")
    return pairs


@dataclass(frozen=True)
class Letterbox:
    """Scale-and-pad mapping from an original image into the input square."""

    scale: float
    pad_x: float
    pad_y: float
    orig_w: int
    orig_h: int

    def to_input(self, corners) -> tuple:
        l, t, r, b = corners
        return (l * self.scale + self.pad_x, t * self.scale + self.pad_y,
                r * self.scale + self.pad_x, b * self.scale + self.pad_y)

    def to_original(self, corners) -> tuple:
        l, t, r, b = corners
        out = ((l - self.pad_x) / self.scale, (t - self.pad_y) / self.scale,
               (r - self.pad_x) / self.scale, (b - self.pad_y) / self.scale)
        return (min(max(out[0], 0.0), self.orig_w), min(max(out[1], 0.0), self.orig_h),
                min(max(out[2], 0.0), self.orig_w), min(max(out[3], 0.0), self.orig_h))


def letterbox_image(rgb: np.ndarray, size: int):
    """Fit an (h, w, 3) uint8 image into a gray-padded square tensor input.

    Returns ((1, 3, size, size) float32 array in [0, 1], Letterbox).
    """
    from PIL import Image

    h, w = rgb.shape[:2]
    scale = min(size / w, size / h)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    resized = np.asarray(
        Image.fromarray(rgb).resize((new_w, new_h), Image.BILINEAR),
        dtype=np.float32,
    ) / np.float32(255.0)
    canvas = np.full((size, size, 3), 0.5, dtype=np.float32)
    pad_x = (size - new_w) // 2
    pad_y = (size - new_h) // 2
    canvas[pad_y:pad_y + new_h, pad_x:pad_x + new_w] = resized
    chw = np.ascontiguousarray(canvas.transpose(2, 0, 1))[None]
    return chw, Letterbox(scale, float(pad_x), float(pad_y), w, h)


def load_image(path) -> np.ndarray:
    """Read an image as (h, w, 3) uint8 RGB."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
