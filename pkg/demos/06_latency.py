"""
Latency comparison
==================

Times a full single-image pass (forward + decode + suppression) per
variant. Absolute numbers depend entirely on this machine; the ordering
is the claim: the compressed model runs fastest, the dense baseline
slowest.
"""

import time

import numpy as np

from yofflenet import Tensor, bind, build_yofflenet, init_random
from yofflenet.detect import DEFAULT_ANCHORS_2SCALE, DEFAULT_ANCHORS_3SCALE, decode, nms

SIZE = 416
ITERS = 3
rng = np.random.default_rng(0)
x = Tensor(rng.random((1, 3, SIZE, SIZE), dtype=np.float32))

results = {}
for variant in ("s+p", "p", "s", "base-csp"):
    graph = build_yofflenet(variant, input_size=SIZE)
    model = bind(graph, init_random(graph, seed=0))
    anchors = DEFAULT_ANCHORS_2SCALE if len(graph.outputs) == 2 else DEFAULT_ANCHORS_3SCALE

    def one_pass():
        dets = []
        for head, stride in zip(model(x), anchors.strides):
            dets.extend(decode(head, anchors.for_stride(stride), stride, 3))
        nms(dets, 0.45, 0.25)

    one_pass()  # warmup
    t0 = time.perf_counter()
    for _ in range(ITERS):
        one_pass()
    ms = (time.perf_counter() - t0) / ITERS * 1e3
    results[variant] = ms
    print(f"{variant:<10} {ms:8.1f} ms/image  ({1e3 / ms:6.2f} fps)")

print("\ncompressed vs baseline speedup: "
      f"{results['base-csp'] / results['s+p']:.2f}x")
