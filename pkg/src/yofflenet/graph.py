"""Declarative layer-graph IR: layer specs, validation, shape inference.

A Graph is a topologically ordered list of LayerSpec nodes plus an input
shape and the ids of its detection outputs. Composite kinds (shuffle
units, dense cross-stage blocks, pyramid pooling) expand to an internal
sequence of convolutions via `layer_subconvs`; that expansion is the
single source of truth for parameter counting, weight naming and
execution.
"""

from __future__ import annotations

from dataclasses import dataclass

KINDS = (
    "conv",
    "dwconv",
    "shuffle_unit",
    "shuffle_unit_down",
    "csp_dense_block",
    "spp",
    "upsample",
    "maxpool",
    "concat",
    "split_take",
    "detect",
)

# Required hyperparameter keys per kind; all values are integers.
_REQUIRED = {
    "conv": ("c_in", "c_out", "k", "stride", "pad"),
    "dwconv": ("c", "k", "stride", "pad"),
    "shuffle_unit": ("c",),
    "shuffle_unit_down": ("c_in", "c_out"),
    "csp_dense_block": ("c", "n_convs"),
    "spp": ("c_in", "c_out", "k1", "k2", "k3"),
    "upsample": (),
    "maxpool": ("k", "stride", "pad"),
    "concat": (),
    "split_take": ("half",),
    "detect": ("c_in", "anchors", "classes"),
}

_N_INPUTS = {"concat": None}  # concat takes 2+; every other kind exactly 1


class GraphError(ValueError):
    """Raised for malformed graphs and execution-time graph violations."""


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    hyperparams: dict
    inputs: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"layer {self.id!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "hyperparams", dict(self.hyperparams))
        for key in _REQUIRED[self.kind]:
            if key not in self.hyperparams:
                raise GraphError(f"layer {self.id!r} ({self.kind}): missing hyperparam {key!r}")
        for key, val in self.hyperparams.items():
            if not isinstance(val, int):
                raise GraphError(f"layer {self.id!r}: hyperparam {key}={val!r} is not an integer")
        n_in = len(self.inputs)
        if self.kind == "concat":
            if n_in < 2:
                raise GraphError(f"layer {self.id!r}: concat needs at least 2 inputs")
        elif n_in != 1:
            raise GraphError(f"layer {self.id!r} ({self.kind}): expected 1 input, got {n_in}")

    def hp(self, key: str, default: int | None = None) -> int:
        if default is None:
            return self.hyperparams[key]
        return self.hyperparams.get(key, default)


INPUT_ID = "input"


@dataclass(frozen=True)
class Graph:
    """Immutable layer graph with a fixed input shape (c, h, w)."""

    layers: tuple
    input_shape: tuple
    outputs: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if len(self.input_shape) != 3:
            raise GraphError(f"input_shape must be (c, h, w), got {self.input_shape}")
        if not self.outputs:
            raise GraphError("graph must declare at least one output layer")
        seen = {INPUT_ID}
        by_id = {}
        for spec in self.layers:
            if spec.id in seen:
                raise GraphError(f"duplicate layer id {spec.id!r}")
            for src in spec.inputs:
                if src not in seen:
                    raise GraphError(
                        f"layer {spec.id!r} references {src!r} before it is defined"
                    )
            seen.add(spec.id)
            by_id[spec.id] = spec
        for out in self.outputs:
            if out not in by_id:
                raise GraphError(f"output {out!r} is not a layer id")
        # Channel arithmetic must close over the declared input shape.
        infer_shapes(self)

    def layer(self, layer_id: str) -> LayerSpec:
        for spec in self.layers:
            if spec.id == layer_id:
                return spec
        raise KeyError(layer_id)

    def detect_layers(self) -> list:
        return [s for s in self.layers if s.kind == "detect"]


def _conv_out_hw(h: int, w: int, k: int, stride: int, pad: int, who: str):
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh < 1 or ow < 1:
        raise GraphError(f"layer {who!r}: kernel does not fit {h}x{w}")
    return oh, ow


def infer_shapes(g: Graph) -> dict:
    """Static per-layer output shapes (c, h, w) from the graph alone.

    Raises GraphError when channel arithmetic does not close (wrong input
    widths, odd splits, indivisible groups, spatial mismatches).
    """
    shapes = {INPUT_ID: tuple(g.input_shape)}
    for spec in g.layers:
        ins = [shapes[i] for i in spec.inputs]
        shapes[spec.id] = _layer_out_shape(spec, ins)
    return shapes


def _layer_out_shape(spec: LayerSpec, ins: list) -> tuple:
    kind = spec.kind
    c, h, w = ins[0]
    if kind == "conv":
        if c != spec.hp("c_in"):
            raise GraphError(f"layer {spec.id!r}: expects c_in={spec.hp('c_in')}, got {c}")
        oh, ow = _conv_out_hw(h, w, spec.hp("k"), spec.hp("stride"), spec.hp("pad"), spec.id)
        return (spec.hp("c_out"), oh, ow)
    if kind == "dwconv":
        if c != spec.hp("c"):
            raise GraphError(f"layer {spec.id!r}: expects c={spec.hp('c')}, got {c}")
        oh, ow = _conv_out_hw(h, w, spec.hp("k"), spec.hp("stride"), spec.hp("pad"), spec.id)
        return (c, oh, ow)
    if kind == "shuffle_unit":
        if c != spec.hp("c"):
            raise GraphError(f"layer {spec.id!r}: expects c={spec.hp('c')}, got {c}")
        if c % 2 != 0:
            raise GraphError(f"layer {spec.id!r}: shuffle unit needs even channels, got {c}")
        return (c, h, w)
    if kind == "shuffle_unit_down":
        if c != spec.hp("c_in"):
            raise GraphError(f"layer {spec.id!r}: expects c_in={spec.hp('c_in')}, got {c}")
        c_out = spec.hp("c_out")
        if c_out % 2 != 0:
            raise GraphError(f"layer {spec.id!r}: c_out must be even, got {c_out}")
        oh, ow = _conv_out_hw(h, w, 3, 2, 1, spec.id)
        return (c_out, oh, ow)
    if kind == "csp_dense_block":
        if c != spec.hp("c"):
            raise GraphError(f"layer {spec.id!r}: expects c={spec.hp('c')}, got {c}")
        if c % 2 != 0:
            raise GraphError(f"layer {spec.id!r}: dense block needs even channels, got {c}")
        if spec.hp("n_convs") < 1:
            raise GraphError(f"layer {spec.id!r}: n_convs must be >= 1")
        return (c, h, w)
    if kind == "spp":
        if c != spec.hp("c_in"):
            raise GraphError(f"layer {spec.id!r}: expects c_in={spec.hp('c_in')}, got {c}")
        return (spec.hp("c_out"), h, w)
    if kind == "upsample":
        return (c, 2 * h, 2 * w)
    if kind == "maxpool":
        oh, ow = _conv_out_hw(h, w, spec.hp("k"), spec.hp("stride"), spec.hp("pad"), spec.id)
        return (c, oh, ow)
    if kind == "concat":
        for other in ins[1:]:
            if other[1:] != (h, w):
                raise GraphError(
                    f"layer {spec.id!r}: concat spatial mismatch {ins[0][1:]} vs {other[1:]}"
                )
        return (sum(s[0] for s in ins), h, w)
    if kind == "split_take":
        if c % 2 != 0:
            raise GraphError(f"layer {spec.id!r}: split needs even channels, got {c}")
        if spec.hp("half") not in (0, 1):
            raise GraphError(f"layer {spec.id!r}: half must be 0 or 1")
        return (c // 2, h, w)
    if kind == "detect":
        if c != spec.hp("c_in"):
            raise GraphError(f"layer {spec.id!r}: expects c_in={spec.hp('c_in')}, got {c}")
        return (spec.hp("anchors") * (5 + spec.hp("classes")), h, w)
    raise GraphError(f"layer {spec.id!r}: unhandled kind {kind}")


@dataclass(frozen=True)
class SubConv:
    """One parametric convolution inside a layer.

    `name` is empty for plain conv/detect/dwconv layers and a dotted
    suffix for convolutions inside composite units. Weight entries pack
    [kernel, scale, shift] (batch-norm convs) or [kernel, bias] (heads)
    as one flat vector per sub-convolution.
    """

    name: str
    c_in: int
    c_out: int
    k: int = 1
    stride: int = 1
    pad: int = 0
    depthwise: bool = False
    bn: bool = True
    bias: bool = False
    act: str = "leaky_relu"

    @property
    def groups(self) -> int:
        return self.c_in if self.depthwise else 1

    @property
    def kernel_scalars(self) -> int:
        return (self.c_in // self.groups) * self.c_out * self.k * self.k

    @property
    def param_scalars(self) -> int:
        n = self.kernel_scalars
        if self.bn:
            n += 2 * self.c_out
        if self.bias:
            n += self.c_out
        return n


def layer_subconvs(spec: LayerSpec) -> list:
    """Parametric convolutions of a layer, in canonical order."""
    kind = spec.kind
    if kind == "conv":
        return [SubConv(
            "", spec.hp("c_in"), spec.hp("c_out"), spec.hp("k"),
            spec.hp("stride"), spec.hp("pad"),
            bn=bool(spec.hp("bn", 1)), bias=bool(spec.hp("bias", 0)),
            act="leaky_relu" if spec.hp("act", 1) else "none",
        )]
    if kind == "dwconv":
        c = spec.hp("c")
        return [SubConv(
            "", c, c, spec.hp("k"), spec.hp("stride"), spec.hp("pad"),
            depthwise=True, act="leaky_relu" if spec.hp("act", 0) else "none",
        )]
    if kind == "shuffle_unit":
        half = spec.hp("c") // 2
        return [
            SubConv("br2_pw1", half, half),
            SubConv("br2_dw", half, half, k=3, pad=1, depthwise=True, act="none"),
            SubConv("br2_pw2", half, half),
        ]
    if kind == "shuffle_unit_down":
        c_in = spec.hp("c_in")
        half = spec.hp("c_out") // 2
        return [
            SubConv("br1_dw", c_in, c_in, k=3, stride=2, pad=1, depthwise=True, act="none"),
            SubConv("br1_pw", c_in, half),
            SubConv("br2_pw1", c_in, half),
            SubConv("br2_dw", half, half, k=3, stride=2, pad=1, depthwise=True, act="none"),
            SubConv("br2_pw2", half, half),
        ]
    if kind == "csp_dense_block":
        half = spec.hp("c") // 2
        n = spec.hp("n_convs")
        subs = [SubConv(f"dense{i}", half * i, half, k=3, pad=1) for i in range(1, n + 1)]
        subs.append(SubConv("fuse", half * (n + 2), spec.hp("c")))
        return subs
    if kind == "spp":
        return [SubConv("fuse", 4 * spec.hp("c_in"), spec.hp("c_out"))]
    if kind == "detect":
        c_out = spec.hp("anchors") * (5 + spec.hp("classes"))
        return [SubConv("", spec.hp("c_in"), c_out, bn=False, bias=True, act="none")]
    return []


def entry_name(layer_id: str, sub: SubConv) -> str:
    return f"{layer_id}.{sub.name}" if sub.name else layer_id


def weight_slots(g: Graph) -> list:
    """Ordered (entry_name, layer_id, SubConv) triples for the whole graph."""
    slots = []
    for spec in g.layers:
        for sub in layer_subconvs(spec):
            slots.append((entry_name(spec.id, sub), spec.id, sub))
    return slots


def to_text(g: Graph) -> str:
    """Human-readable one-layer-per-line serialization for golden tests."""
    c, h, w = g.input_shape
    lines = [f"input {c}x{h}x{w}"]
    for spec in g.layers:
        hp = ",".join(f"{k}={spec.hyperparams[k]}" for k in sorted(spec.hyperparams))
        lines.append(f"{spec.id} {spec.kind} {hp or '-'} <- {','.join(spec.inputs)}")
    lines.append(f"outputs {','.join(g.outputs)}")
    return "\n".join(lines) + "\n"
