"""
KITTI workflow
==============

Label parsing, the deterministic dataset split, IoU-metric anchor
clustering, and the evaluator, all on synthesized data.
"""

import numpy as np

from yofflenet import (
    DetBox,
    evaluate,
    kmeans_anchors,
    parse_kitti_label,
    split_dataset,
)

label_text = """\
Car 0.00 0 -1.57 100.0 120.0 200.0 180.0 1.5 1.6 3.8 2.1 1.4 8.4 0.0
Van 0.00 1 -1.20 300.0 110.0 420.0 190.0 2.0 1.9 5.1 3.0 1.5 12.0 0.1
DontCare -1 -1 -10 500.0 150.0 540.0 180.0 -1 -1 -1 -1000 -1000 -1000 -10
Pedestrian 0.00 0 0.40 50.0 100.0 80.0 200.0 1.8 0.6 0.9 -4.0 1.7 9.0 0.2
"""
boxes = parse_kitti_label(label_text, image_id="000042")
print("parsed boxes (Van folds into Car, DontCare dropped):")
for b in boxes:
    print(f"  {b.cls:<12} {b.corners}")

# the canonical 7480-image split
ids = [f"{i:06d}" for i in range(7480)]
split = split_dataset(ids, seed=0)
print(f"\nsplit sizes: train {len(split.train)}, val {len(split.val)}, "
      f"test {len(split.test)}")

# anchors: widths/heights cluster under 1 - IoU distance, medians as centroids
rng = np.random.default_rng(1)
wh = np.vstack([
    rng.normal((34, 28), 3, (300, 2)),    # cars
    rng.normal((18, 44), 2, (120, 2)),    # pedestrians
    rng.normal((80, 60), 6, (150, 2)),    # close vehicles
])
anchors = kmeans_anchors(np.abs(wh), k=6, seed=0)
print("\n6 anchors (area ascending):")
for w, h in anchors:
    print(f"  {w:6.1f} x {h:6.1f}")

# evaluation: one perfect detection, one duplicate, one miss
gts = boxes
dets = [
    DetBox("Car", 0.9, (100, 120, 200, 180)),   # exact hit
    DetBox("Car", 0.8, (102, 121, 198, 179)),   # duplicate -> FP
    DetBox("Pedestrian", 0.7, (400, 100, 430, 200)),  # wrong place -> FP
]
report = evaluate({"000042": (dets, gts)}, ("Car", "Pedestrian", "Cyclist"), 0.5)
for cls, res in report.per_class.items():
    print(f"{cls:<12} AP {res.ap:.3f}  ({res.num_tp} TP / {res.num_det} det, "
          f"{res.num_gt} GT)")
print(f"mAP = {report.map:.4f}")
