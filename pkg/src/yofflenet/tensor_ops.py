"""NCHW tensor value type and the numeric layer primitives of the engine.

All operations are pure: inputs are never mutated (tensor buffers are
frozen), identical inputs give identical outputs, and compute is float32
throughout. Convolution uses patch-matrix lowering; the test suite checks
it against a direct six-loop reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

BN_EPS = 1e-5
LEAKY_SLOPE = np.float32(0.1)

ACT_NONE = "none"
ACT_LEAKY = "leaky_relu"


class Tensor:
    """Dense 4-D NCHW feature map of 32-bit reals.

    The backing array is C-contiguous and read-only; every dimension is
    at least 1. Construction copies unless the array is handed over via
    `_wrap`, so callers can never alias a Tensor's storage.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float32, order="C")
        if arr.ndim != 4:
            raise ValueError(f"tensor must be 4-D NCHW, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Takes ownership: arr must be a fresh float32 C-contiguous buffer.
        t = object.__new__(cls)
        arr.setflags(write=False)
        object.__setattr__(t, "data", arr)
        return t

    @classmethod
    def zeros(cls, n: int, c: int, h: int, w: int) -> "Tensor":
        return cls._wrap(np.zeros((n, c, h, w), dtype=np.float32))

    @classmethod
    def full(cls, shape, value) -> "Tensor":
        return cls._wrap(np.full(shape, value, dtype=np.float32))

    @property
    def shape(self):
        return self.data.shape

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    def __repr__(self):
        return f"Tensor{self.data.shape}"


@dataclass(frozen=True)
class ConvParams:
    """Convolution parameters with optional batch-norm statistics and bias.

    weights has shape (c_out, c_in/groups, k, k). Batch norm is given as
    the raw per-output-channel statistics and folded into a single affine
    at apply time: y = gamma * (conv - mean) / sqrt(var + eps) + beta.
    """

    weights: np.ndarray
    stride: int = 1
    padding: int = 0
    groups: int = 1
    activation: str = ACT_NONE
    bn_gamma: np.ndarray | None = None
    bn_beta: np.ndarray | None = None
    bn_mean: np.ndarray | None = None
    bn_var: np.ndarray | None = None
    bias: np.ndarray | None = None
    eps: float = BN_EPS

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float32)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ValueError(f"weights must be (c_out, c_in/groups, k, k), got {w.shape}")
        object.__setattr__(self, "weights", w)
        if self.groups < 1:
            raise ValueError("groups must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")
        if self.c_out % self.groups != 0:
            raise ValueError(f"c_out={self.c_out} not divisible by groups={self.groups}")
        if self.activation not in (ACT_NONE, ACT_LEAKY):
            raise ValueError(f"unknown activation {self.activation!r}")
        bn = [self.bn_gamma, self.bn_beta, self.bn_mean, self.bn_var]
        if any(v is not None for v in bn):
            if any(v is None for v in bn):
                raise ValueError("batch norm needs gamma, beta, mean and var together")
            for name, v in zip(("bn_gamma", "bn_beta", "bn_mean", "bn_var"), bn):
                v = np.asarray(v, dtype=np.float32).reshape(-1)
                if v.shape[0] != self.c_out:
                    raise ValueError(f"{name} must have length c_out={self.c_out}")
                object.__setattr__(self, name, v)
            if np.any(self.bn_var <= 0):
                raise ValueError("bn_var entries must be > 0")
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float32).reshape(-1)
            if b.shape[0] != self.c_out:
                raise ValueError(f"bias must have length c_out={self.c_out}")
            object.__setattr__(self, "bias", b)

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1] * self.groups

    @property
    def kernel(self) -> int:
        return self.weights.shape[2]

    @property
    def has_bn(self) -> bool:
        return self.bn_gamma is not None

    @classmethod
    def folded(cls, weights, scale, shift, **kw) -> "ConvParams":
        # Pre-folded affine expressed as identity-statistics batch norm:
        # mean 0 and var 1-eps make gamma/beta pass through unchanged.
        c_out = np.asarray(weights).shape[0]
        return cls(
            weights,
            bn_gamma=np.asarray(scale, dtype=np.float32),
            bn_beta=np.asarray(shift, dtype=np.float32),
            bn_mean=np.zeros(c_out, dtype=np.float32),
            bn_var=np.full(c_out, 1.0 - BN_EPS, dtype=np.float32),
            **kw,
        )

    def affine(self):
        """Folded per-channel (scale, shift) including batch norm and bias."""
        if self.has_bn:
            scale = self.bn_gamma / np.sqrt(self.bn_var + np.float32(self.eps))
            shift = self.bn_beta - self.bn_mean * scale
        else:
            scale = np.ones(self.c_out, dtype=np.float32)
            shift = np.zeros(self.c_out, dtype=np.float32)
        if self.bias is not None:
            shift = shift + self.bias
        return scale.astype(np.float32), shift.astype(np.float32)


def _out_hw(h: int, w: int, k: int, stride: int, pad: int):
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(
            f"kernel k={k} stride={stride} pad={pad} does not fit input {h}x{w}"
        )
    return oh, ow


def _pad2d(data: np.ndarray, pad: int, value: float) -> np.ndarray:
    if pad == 0:
        return data
    return np.pad(data, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                  constant_values=np.float32(value))


def _windows(data: np.ndarray, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    # View of shape (n, c, oh, ow, k, k); strictly read-only.
    n, c, _, _ = data.shape
    sn, sc, sh, sw = data.strides
    return as_strided(
        data,
        shape=(n, c, oh, ow, k, k),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def _finish(out: np.ndarray, p: ConvParams) -> Tensor:
    scale, shift = p.affine()
    if p.has_bn or p.bias is not None:
        out *= scale[None, :, None, None]
        out += shift[None, :, None, None]
    if p.activation == ACT_LEAKY:
        out = np.where(out > 0, out, out * LEAKY_SLOPE)
    return Tensor._wrap(np.ascontiguousarray(out))


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Grouped 2-D convolution with folded batch norm and activation.

    Zero padding; output spatial size floor((h + 2*pad - k)/stride) + 1.
    """
    if x.c != p.c_in:
        raise ValueError(f"conv expects {p.c_in} input channels, got {x.c}")
    if x.c % p.groups != 0:
        raise ValueError(f"groups={p.groups} does not divide c_in={x.c}")
    k = p.kernel
    oh, ow = _out_hw(x.h, x.w, k, p.stride, p.padding)
    xp = _pad2d(x.data, p.padding, 0.0)
    win = _windows(xp, k, p.stride, oh, ow)
    n = x.n
    cing = p.weights.shape[1]
    cog = p.c_out // p.groups
    out = np.empty((n, p.c_out, oh, ow), dtype=np.float32)
    for g in range(p.groups):
        xs = win[:, g * cing:(g + 1) * cing]
        # (n, oh*ow, cing*k*k) @ (cing*k*k, cog)
        xm = xs.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, cing * k * k)
        wm = p.weights[g * cog:(g + 1) * cog].reshape(cog, -1).T
        om = xm @ wm
        out[:, g * cog:(g + 1) * cog] = om.transpose(0, 2, 1).reshape(n, cog, oh, ow)
    return _finish(out, p)


def depthwise_conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Per-channel spatial convolution (groups == c_in == c_out)."""
    if not (p.groups == p.c_in == p.c_out):
        raise ValueError(
            f"depthwise needs groups == c_in == c_out, got groups={p.groups} "
            f"c_in={p.c_in} c_out={p.c_out}"
        )
    if x.c != p.c_in:
        raise ValueError(f"depthwise conv expects {p.c_in} input channels, got {x.c}")
    k = p.kernel
    s = p.stride
    oh, ow = _out_hw(x.h, x.w, k, s, p.padding)
    xp = _pad2d(x.data, p.padding, 0.0)
    out = np.zeros((x.n, x.c, oh, ow), dtype=np.float32)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, :, ki:ki + (oh - 1) * s + 1:s, kj:kj + (ow - 1) * s + 1:s]
            out += patch * p.weights[:, 0, ki, kj][None, :, None, None]
    return _finish(out, p)


def channel_split(x: Tensor) -> tuple[Tensor, Tensor]:
    """Split channels into two equal halves; inverse of concat_channels."""
    if x.c % 2 != 0:
        raise ValueError(f"channel_split needs an even channel count, got {x.c}")
    half = x.c // 2
    a = np.ascontiguousarray(x.data[:, :half])
    b = np.ascontiguousarray(x.data[:, half:])
    return Tensor._wrap(a), Tensor._wrap(b)


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    """Interleave channel groups: reshape (g, c/g), transpose, flatten.

    Output channel i holds input channel (i mod g)*(c/g) + i//g. Pure
    permutation; values are untouched.
    """
    if groups < 1:
        raise ValueError("groups must be >= 1")
    if x.c % groups != 0:
        raise ValueError(f"channels {x.c} not divisible by groups {groups}")
    n, c, h, w = x.shape
    out = (
        x.data.reshape(n, groups, c // groups, h, w)
        .swapaxes(1, 2)
        .reshape(n, c, h, w)
    )
    return Tensor._wrap(np.ascontiguousarray(out))


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Stack tensors along the channel axis in argument order."""
    if not xs:
        raise ValueError("concat_channels needs at least one input")
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if (t.n, t.h, t.w) != (n, h, w):
            raise ValueError(
                f"concat inputs must share (n, h, w): {(n, h, w)} vs {(t.n, t.h, t.w)}"
            )
    return Tensor._wrap(np.concatenate([t.data for t in xs], axis=1))


def maxpool2d(x: Tensor, k: int, stride: int, pad: int) -> Tensor:
    """Sliding-window maximum; out-of-bounds cells count as -inf."""
    if k <= 0:
        raise ValueError("pool kernel must be positive")
    if stride < 1 or pad < 0:
        raise ValueError("stride must be >= 1 and pad >= 0")
    oh, ow = _out_hw(x.h, x.w, k, stride, pad)
    xp = _pad2d(x.data, pad, -np.inf)
    out = np.full((x.n, x.c, oh, ow), -np.inf, dtype=np.float32)
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, :, ki:ki + (oh - 1) * stride + 1:stride,
                       kj:kj + (ow - 1) * stride + 1:stride]
            np.maximum(out, patch, out=out)
    return Tensor._wrap(out)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate every cell into a 2x2 block."""
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return Tensor._wrap(np.ascontiguousarray(out))
