"""Graph execution: bind a weight store to a graph and run the forward pass.

Binding validates the weight set against the graph (exact name match,
exact per-entry scalar counts) and unpacks every flat entry into kernel
plus affine/bias arrays once, so repeated execution does no re-parsing.
"""

from __future__ import annotations

from . import tensor_ops as ops
from .graph import (
    INPUT_ID,
    Graph,
    GraphError,
    SubConv,
    entry_name,
    infer_shapes,
    layer_subconvs,
)
from .tensor_ops import ConvParams, Tensor
from .weights import WeightStore


def _unpack(name: str, layer_id: str, sub: SubConv, store: WeightStore) -> ConvParams:
    entry = store.get(name)
    data = entry.data.reshape(-1)
    if data.size != sub.param_scalars:
        raise GraphError(
            f"layer {layer_id!r}: weight entry {name!r} has {data.size} scalars, "
            f"expected {sub.param_scalars}"
        )
    kw = sub.kernel_scalars
    kernel = data[:kw].reshape(sub.c_out, sub.c_in // sub.groups, sub.k, sub.k)
    common = dict(stride=sub.stride, padding=sub.pad, groups=sub.groups,
                  activation=sub.act)
    if sub.bn:
        scale = data[kw:kw + sub.c_out]
        shift = data[kw + sub.c_out:kw + 2 * sub.c_out]
        bias = data[kw + 2 * sub.c_out:] if sub.bias else None
        return ConvParams.folded(kernel, scale, shift, bias=bias, **common)
    bias = data[kw:] if sub.bias else None
    return ConvParams(kernel, bias=bias, **common)


class BoundModel:
    """A graph with its weights resolved, ready to run repeatedly."""

    def __init__(self, graph: Graph, store: WeightStore):
        self.graph = graph
        self.shapes = infer_shapes(graph)
        self.params: dict[str, dict[str, ConvParams]] = {}
        expected = set()
        for spec in graph.layers:
            bound = {}
            for sub in layer_subconvs(spec):
                name = entry_name(spec.id, sub)
                expected.add(name)
                if name not in store:
                    raise GraphError(f"layer {spec.id!r}: missing weight entry {name!r}")
                bound[sub.name] = _unpack(name, spec.id, sub, store)
            self.params[spec.id] = bound
        extra = sorted(set(store.names()) - expected)
        if extra:
            raise GraphError(f"weight store has entries for no layer: {', '.join(extra)}")

    def __call__(self, x: Tensor) -> list:
        c, h, w = self.graph.input_shape
        if x.shape[1:] != (c, h, w):
            raise GraphError(
                f"input shape {x.shape[1:]} does not match graph input {(c, h, w)}"
            )
        values = {INPUT_ID: x}
        for spec in self.graph.layers:
            ins = [values[i] for i in spec.inputs]
            try:
                out = _run_layer(spec, ins, self.params[spec.id])
            except ValueError as exc:
                raise GraphError(f"layer {spec.id!r}: {exc}") from exc
            want = self.shapes[spec.id]
            if out.shape[1:] != want:
                raise GraphError(
                    f"layer {spec.id!r}: produced {out.shape[1:]}, declared {want}"
                )
            values[spec.id] = out
        return [values[o] for o in self.graph.outputs]


def _run_layer(spec, ins, params) -> Tensor:
    kind = spec.kind
    x = ins[0]
    if kind in ("conv", "detect"):
        return ops.conv2d(x, params[""])
    if kind == "dwconv":
        return ops.depthwise_conv2d(x, params[""])
    if kind == "shuffle_unit":
        keep, work = ops.channel_split(x)
        work = ops.conv2d(work, params["br2_pw1"])
        work = ops.depthwise_conv2d(work, params["br2_dw"])
        work = ops.conv2d(work, params["br2_pw2"])
        return ops.channel_shuffle(ops.concat_channels([keep, work]), 2)
    if kind == "shuffle_unit_down":
        short = ops.depthwise_conv2d(x, params["br1_dw"])
        short = ops.conv2d(short, params["br1_pw"])
        work = ops.conv2d(x, params["br2_pw1"])
        work = ops.depthwise_conv2d(work, params["br2_dw"])
        work = ops.conv2d(work, params["br2_pw2"])
        return ops.channel_shuffle(ops.concat_channels([short, work]), 2)
    if kind == "csp_dense_block":
        cross, dense = ops.channel_split(x)
        n = spec.hp("n_convs")
        for i in range(1, n + 1):
            grown = ops.conv2d(dense, params[f"dense{i}"])
            dense = ops.concat_channels([dense, grown])
        return ops.conv2d(ops.concat_channels([cross, dense]), params["fuse"])
    if kind == "spp":
        pools = [x] + [
            ops.maxpool2d(x, k, 1, (k - 1) // 2)
            for k in (spec.hp("k1"), spec.hp("k2"), spec.hp("k3"))
        ]
        return ops.conv2d(ops.concat_channels(pools), params["fuse"])
    if kind == "upsample":
        return ops.upsample_nearest2x(x)
    if kind == "maxpool":
        return ops.maxpool2d(x, spec.hp("k"), spec.hp("stride"), spec.hp("pad"))
    if kind == "concat":
        return ops.concat_channels(ins)
    if kind == "split_take":
        return ops.channel_split(x)[spec.hp("half")]
    raise GraphError(f"unhandled kind {kind}")


def bind(g: Graph, store: WeightStore) -> BoundModel:
    return BoundModel(g, store)


def execute(g: Graph, store: WeightStore, x: Tensor) -> list:
    """Run the graph once; returns head tensors in declared output order."""
    return BoundModel(g, store)(x)
