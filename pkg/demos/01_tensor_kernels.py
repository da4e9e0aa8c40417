"""
Tensor kernels
==============

The numeric primitives behind the detector: convolution with folded
batch norm, channel split/shuffle, pooling and upsampling. Everything is
float32 NCHW and pure (inputs are never mutated).
"""

import numpy as np

from yofflenet import (
    ConvParams,
    Tensor,
    channel_shuffle,
    channel_split,
    concat_channels,
    conv2d,
    maxpool2d,
    upsample_nearest2x,
)

# A 3x3 all-ones kernel over an all-ones image sums the 3x3 neighbourhood:
# 9 in the middle, less at the borders where zero padding bleeds in.
x = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
p = ConvParams(np.ones((1, 1, 3, 3), dtype=np.float32), padding=1)
print("box-filter response:\n", conv2d(x, p).data[0, 0])

# Batch norm comes in as raw statistics and is folded into a per-channel
# affine at apply time.
p_bn = ConvParams(
    np.ones((1, 1, 3, 3), dtype=np.float32), padding=1,
    bn_gamma=[2.0], bn_beta=[-1.0], bn_mean=[0.0], bn_var=[1.0 - 1e-5],
)
print("with gamma=2, beta=-1:\n", conv2d(x, p_bn).data[0, 0])

# Channel split and shuffle are the backbone's data choreography: split
# halves the channels, shuffle interleaves groups so information crosses
# branch boundaries. Shuffling twice with complementary group counts is
# the identity.
feat = Tensor(np.arange(8, dtype=np.float32).reshape(1, 8, 1, 1))
a, b = channel_split(feat)
print("split:", a.data.ravel(), "|", b.data.ravel())
mixed = channel_shuffle(feat, 2)
print("shuffle g=2:", mixed.data.ravel())
print("shuffle back:", channel_shuffle(mixed, 4).data.ravel())
print("split+concat is identity:",
      np.array_equal(concat_channels([a, b]).data, feat.data))

# Pyramid pooling relies on odd kernels with (k-1)/2 padding keeping the
# spatial size; out-of-bounds cells count as -inf so maxima are honest.
deep = Tensor(np.random.default_rng(0).random((1, 4, 13, 13), dtype=np.float32))
for k in (5, 9, 13):
    print(f"maxpool k={k:2d} keeps shape:", maxpool2d(deep, k, 1, (k - 1) // 2).shape)

print("upsample 13x13 ->", upsample_nearest2x(deep).shape)
