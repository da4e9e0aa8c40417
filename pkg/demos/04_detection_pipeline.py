"""
Detection pipeline
==================

Image in, boxes out: letterbox to the input square, run the graph,
decode each head against its anchors, suppress duplicates. Weights here
are random, so the boxes are meaningless; the point is the dataflow and
the geometry helpers.
"""

import numpy as np

from yofflenet import (
    Tensor,
    bind,
    build_yofflenet,
    decode,
    giou,
    giou_loss_and_grad,
    init_random,
    iou,
    nms,
)
from yofflenet.detect import DEFAULT_ANCHORS_2SCALE
from yofflenet.kitti import letterbox_image

SIZE = 416
graph = build_yofflenet("s+p", input_size=SIZE)
model = bind(graph, init_random(graph, seed=3))

# A fake road scene: gradient sky over dark ground, 1242x375 like KITTI.
rng = np.random.default_rng(0)
scene = np.zeros((375, 1242, 3), dtype=np.uint8)
scene[:200] = np.linspace(180, 90, 200, dtype=np.uint8)[:, None, None]
scene[200:] = 40
scene += rng.integers(0, 20, scene.shape, dtype=np.uint8)

chw, box_map = letterbox_image(scene, SIZE)
heads = model(Tensor(chw))
print("head tensors:", [h.shape for h in heads])

dets = []
for head, stride in zip(heads, DEFAULT_ANCHORS_2SCALE.strides):
    dets.extend(decode(head, DEFAULT_ANCHORS_2SCALE.for_stride(stride), stride, 3))
print("raw decoded boxes:", len(dets))

kept = nms(dets, iou_threshold=0.45, conf_threshold=0.2)
print("after suppression at conf 0.2:", len(kept))
for d in kept[:5]:
    l, t, r, b = box_map.to_original(d.corners)
    print(f"  class {d.class_id} conf {d.confidence:.3f} "
          f"box ({l:.0f}, {t:.0f}, {r:.0f}, {b:.0f})")

# The geometry the matcher and the loss are built on.
a, b = (0, 0, 2, 2), (1, 1, 3, 3)
print(f"\niou{a}{b} = {iou(a, b):.4f}, giou = {giou(a, b):.4f}")
loss, grad = giou_loss_and_grad((10.0, 50.0, 8.0, 8.0), (80.0, 46.0, 88.0, 54.0))
print(f"loss for a far-off prediction: {loss:.4f}, "
      f"d/dcx = {grad[0]:.5f} (negative pulls it toward the target)")
