"""Parameter, multiply-accumulate and memory-traffic analysis of a graph.

Costs are derived statically from the layer specs at the graph's input
resolution. MACs count kernel multiply-accumulates only (h_out * w_out *
kernel weights per convolution). Memory access follows the element-traffic
model: every operation reads its inputs and weights and writes its output
once, so a 1x1 convolution on an h*w map costs hw*(c_in + c_out) +
c_in*c_out elements. Bytes assume 4-byte elements.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from . import weights as weights_io
from .graph import Graph, infer_shapes, layer_subconvs, weight_slots

ELEMENT_BYTES = 4


@dataclass(frozen=True)
class LayerCost:
    id: str
    kind: str
    out_shape: tuple
    params: int
    macs: int
    mem_elements: int

    @property
    def mem_bytes(self) -> int:
        return self.mem_elements * ELEMENT_BYTES


@dataclass(frozen=True)
class CostReport:
    input_shape: tuple
    layers: tuple
    total_params: int
    total_macs: int
    total_mem_elements: int
    weight_file_bytes: dict  # dtype tag -> exact serialized size

    @property
    def total_mem_bytes(self) -> int:
        return self.total_mem_elements * ELEMENT_BYTES

    def to_json(self) -> str:
        doc = {
            "input_shape": list(self.input_shape),
            "totals": {
                "params": self.total_params,
                "macs": self.total_macs,
                "mem_elements": self.total_mem_elements,
                "mem_bytes": self.total_mem_bytes,
            },
            "weight_file_bytes": dict(self.weight_file_bytes),
            "layers": [
                {
                    "id": lc.id,
                    "kind": lc.kind,
                    "out_shape": list(lc.out_shape),
                    "params": lc.params,
                    "macs": lc.macs,
                    "mem_elements": lc.mem_elements,
                    "mem_bytes": lc.mem_bytes,
                }
                for lc in self.layers
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "kind", "out_c", "out_h", "out_w",
                    "params", "macs", "mem_elements", "mem_bytes"])
        for lc in self.layers:
            w.writerow([lc.id, lc.kind, *lc.out_shape,
                        lc.params, lc.macs, lc.mem_elements, lc.mem_bytes])
        w.writerow(["total", "", "", "", "",
                    self.total_params, self.total_macs,
                    self.total_mem_elements, self.total_mem_bytes])
        return buf.getvalue()


def conv_traffic(c_in: int, c_out: int, h_in: int, w_in: int,
                 h_out: int, w_out: int, kernel_scalars: int) -> int:
    """Element traffic of one convolution: read input, read weights, write output."""
    return h_in * w_in * c_in + h_out * w_out * c_out + kernel_scalars


def _layer_cost(spec, in_shapes, out_shape) -> tuple:
    """(params, macs, mem_elements) for one layer."""
    subs = layer_subconvs(spec)
    params = sum(s.param_scalars for s in subs)
    macs = 0
    mem = 0
    if subs:
        macs, mem = _conv_chain_cost(spec, subs, in_shapes[0], out_shape)
    mem += _mover_traffic(spec, in_shapes, out_shape)
    return params, macs, mem


# Per-sub (input, output) resolution inside a downsample unit: "in" is the
# unit's input resolution, "out" the halved one. The conv branch's leading
# 1x1 is the only sub-convolution that both reads and writes at full size.
_DOWN_UNIT_RES = {
    "br1_dw": ("in", "out"),
    "br1_pw": ("out", "out"),
    "br2_pw1": ("in", "in"),
    "br2_dw": ("in", "out"),
    "br2_pw2": ("out", "out"),
}


def _conv_chain_cost(spec, subs, in_shape, out_shape) -> tuple:
    """MACs and traffic of a layer's internal convolutions."""
    res = {"in": in_shape[1:], "out": out_shape[1:]}
    macs = 0
    mem = 0
    for sub in subs:
        if spec.kind == "shuffle_unit_down":
            rin, rout = _DOWN_UNIT_RES[sub.name]
        else:
            rin, rout = "in", "out"
        (sh_in, sw_in), (sh_out, sw_out) = res[rin], res[rout]
        macs += sub.kernel_scalars * sh_out * sw_out
        mem += conv_traffic(sub.c_in, sub.c_out, sh_in, sw_in, sh_out, sw_out,
                            sub.kernel_scalars)
    return macs, mem


def _mover_traffic(spec, in_shapes, out_shape) -> int:
    """Element traffic of the layer's pure data movement."""
    out_elems = out_shape[0] * out_shape[1] * out_shape[2]
    in_elems = sum(c * h * w for c, h, w in in_shapes)
    kind = spec.kind
    if kind in ("maxpool", "upsample", "concat", "split_take"):
        return in_elems + out_elems
    if kind == "shuffle_unit":
        # split + concat + shuffle move the full map three times over
        return 3 * 2 * in_elems
    if kind == "shuffle_unit_down":
        return 2 * 2 * out_elems  # concat + shuffle at the output resolution
    if kind == "csp_dense_block":
        c, h, w = in_shapes[0]
        half = c * h * w // 2
        n = spec.hp("n_convs")
        # split, the n dense concats (growing), and the final concat
        grow = sum(half * (i + 1) for i in range(1, n + 1))
        return 2 * (c * h * w + grow + half * (n + 2))
    if kind == "spp":
        c, h, w = in_shapes[0]
        pooled = 3 * c * h * w
        # three pools (read+write) plus the 4-way concat (read+write)
        return 2 * pooled + 2 * (4 * c * h * w)
    return 0


def analyze(g: Graph) -> CostReport:
    """Static cost report for a graph at its declared input resolution."""
    shapes = infer_shapes(g)
    rows = []
    for spec in g.layers:
        ins = [shapes[i] for i in spec.inputs]
        out = shapes[spec.id]
        params, macs, mem = _layer_cost(spec, ins, out)
        rows.append(LayerCost(spec.id, spec.kind, out, params, macs, mem))
    total_params = sum(r.params for r in rows)
    slots = [(name, sub.param_scalars) for name, _, sub in weight_slots(g)]
    file_bytes = {
        dtype: weights_io.predict_file_size(slots, dtype)
        for dtype in ("f32", "f16")
    }
    return CostReport(
        input_shape=g.input_shape,
        layers=tuple(rows),
        total_params=total_params,
        total_macs=sum(r.macs for r in rows),
        total_mem_elements=sum(r.mem_elements for r in rows),
        weight_file_bytes=file_bytes,
    )
