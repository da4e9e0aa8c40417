"""Builders for the detector variants and their building blocks.

Four variants share parts:

  s+p       shuffle backbone + two-level simplified neck (the compressed model)
  s         shuffle backbone + full three-level neck
  p         dense cross-stage backbone + two-level simplified neck
  base-csp  dense cross-stage backbone + full three-level neck (cost baseline)

The shuffle backbone follows the published 1.0x stage table (24 stem,
stage widths 116/232/464, repeats 4/8/4 counting the stride-2 unit that
opens each stage). The baseline backbone halves the reference detector's
widths (16 stem, 32..512) with dense block depths (1, 2, 4, 4, 2).
"""

from __future__ import annotations

from .graph import Graph, LayerSpec

VARIANTS = ("s", "p", "s+p", "base-csp")

SPP_KERNELS = (5, 9, 13)

_SHUFFLE_STAGES = ((116, 4), (232, 8), (464, 4))  # (width, total units incl. downsample)
_CSP_STAGES = ((32, 1), (64, 2), (128, 4), (256, 4), (512, 2))  # (width, n_convs)


def build_shuffle_unit(c: int, downsample: bool = False, *, c_out: int | None = None,
                       name: str = "unit", inputs: tuple = ("input",)) -> list:
    """Layer specs for one shuffle unit.

    Basic unit (stride 1): channel split, a 1x1 -> depthwise 3x3 -> 1x1
    branch on one half, identity on the other, concat, shuffle with two
    groups; output width equals input width. Downsample unit (stride 2):
    no split, a depthwise-led shortcut branch plus the conv branch, both
    at stride 2; output width defaults to 2*c.
    """
    if downsample:
        out = 2 * c if c_out is None else c_out
        if out % 2 != 0:
            raise ValueError(f"downsample unit output width must be even, got {out}")
        spec = LayerSpec(name, "shuffle_unit_down", {"c_in": c, "c_out": out}, inputs)
    else:
        if c % 2 != 0:
            raise ValueError(f"basic shuffle unit needs an even width, got {c}")
        if c_out is not None and c_out != c:
            raise ValueError("basic shuffle unit preserves width")
        spec = LayerSpec(name, "shuffle_unit", {"c": c}, inputs)
    return [spec]


def build_csp_dense_block(c: int, n_convs: int, *, name: str = "csp",
                          inputs: tuple = ("input",)) -> list:
    """Layer specs for one dense cross-stage block.

    Half the channels bypass; the other half runs n_convs 3x3 convolutions
    with dense concatenation (width grows to c/2*(n_convs+1)), then both
    halves are concatenated and fused back to width c by a 1x1 convolution.
    """
    if n_convs < 1:
        raise ValueError(f"dense block needs n_convs >= 1, got {n_convs}")
    if c % 2 != 0:
        raise ValueError(f"dense block needs an even width, got {c}")
    return [LayerSpec(name, "csp_dense_block", {"c": c, "n_convs": n_convs}, inputs)]


def _conv(name, src, c_in, c_out, k=1, stride=1, pad=0):
    return LayerSpec(name, "conv", {
        "c_in": c_in, "c_out": c_out, "k": k, "stride": stride, "pad": pad,
    }, (src,))


def _detect(name, src, c_in, anchors, classes):
    return LayerSpec(name, "detect", {
        "c_in": c_in, "anchors": anchors, "classes": classes,
    }, (src,))


def _spp(name, src, c_in, c_out):
    k1, k2, k3 = SPP_KERNELS
    return LayerSpec(name, "spp", {
        "c_in": c_in, "c_out": c_out, "k1": k1, "k2": k2, "k3": k3,
    }, (src,))


def _shuffle_backbone(layers: list) -> dict:
    """Stem + three shuffle stages; returns ids and widths of C3/C4/C5."""
    layers.append(_conv("stem", "input", 3, 24, k=3, stride=2, pad=1))
    layers.append(LayerSpec("pool1", "maxpool", {"k": 3, "stride": 2, "pad": 1}, ("stem",)))
    prev_id, prev_c = "pool1", 24
    taps = {}
    for si, (width, repeats) in enumerate(_SHUFFLE_STAGES, start=2):
        down = f"s{si}_d"
        layers.extend(build_shuffle_unit(prev_c, downsample=True, c_out=width,
                                         name=down, inputs=(prev_id,)))
        prev_id, prev_c = down, width
        for ui in range(1, repeats):
            unit = f"s{si}_u{ui}"
            layers.extend(build_shuffle_unit(width, name=unit, inputs=(prev_id,)))
            prev_id = unit
        taps[f"c{si + 1}"] = (prev_id, width)  # stage2 ends at stride 8 = C3
    return taps


def _csp_backbone(layers: list) -> dict:
    """Halved-width dense cross-stage backbone; returns C3/C4/C5 taps."""
    layers.append(_conv("stem", "input", 3, 16, k=3, stride=1, pad=1))
    prev_id, prev_c = "stem", 16
    taps = {}
    for si, (width, n_convs) in enumerate(_CSP_STAGES, start=1):
        down = f"d{si}"
        layers.append(_conv(down, prev_id, prev_c, width, k=3, stride=2, pad=1))
        block = f"c{si}"
        layers.extend(build_csp_dense_block(width, n_convs, name=block, inputs=(down,)))
        prev_id, prev_c = block, width
        if si >= 3:
            taps[f"c{si}"] = (block, width)  # stage3 is stride 8 = C3
    return {"c3": taps["c3"], "c4": taps["c4"], "c5": taps["c5"]}


def _two_level_neck(layers: list, c4, c5, anchors: int, classes: int) -> list:
    """Pyramid pooling plus one top-down and one bottom-up fusion step.

    Works on two scales (strides 16 and 32); every fusion is a concat
    followed by a 1x1 reduction back to half the concatenated width.
    """
    (c4_id, c4_c), (c5_id, c5_c) = c4, c5
    mid = c5_c // 2
    layers.append(_spp("spp", c5_id, c5_c, mid))
    layers.append(LayerSpec("p4_up", "upsample", {}, ("spp",)))
    layers.append(LayerSpec("p4_cat", "concat", {}, ("p4_up", c4_id)))
    layers.append(_conv("p4_fuse", "p4_cat", mid + c4_c, mid))
    layers.append(_conv("n5_down", "p4_fuse", mid, mid, k=3, stride=2, pad=1))
    layers.append(LayerSpec("n5_cat", "concat", {}, ("n5_down", "spp")))
    layers.append(_conv("n5_fuse", "n5_cat", 2 * mid, mid))
    layers.append(_detect("det16", "p4_fuse", mid, anchors, classes))
    layers.append(_detect("det32", "n5_fuse", mid, anchors, classes))
    return ["det16", "det32"]


def _three_level_neck(layers: list, c3, c4, c5, anchors: int, classes: int) -> list:
    """Full reference neck: pyramid pooling, two top-down steps with
    lateral reductions and 1x1/3x3/1x1 fusion blocks, then two bottom-up
    steps, with a head at each of the three scales."""
    (c3_id, c3_c), (c4_id, c4_c), (c5_id, c5_c) = c3, c4, c5

    def fusion_block(prefix, src, c):
        layers.append(_conv(f"{prefix}_blk1", src, 2 * c, c))
        layers.append(_conv(f"{prefix}_blk2", f"{prefix}_blk1", c, 2 * c, k=3, pad=1))
        layers.append(_conv(f"{prefix}_blk3", f"{prefix}_blk2", 2 * c, c))
        return f"{prefix}_blk3"

    layers.append(_conv("pre5", c5_id, c5_c, 256))
    layers.append(_spp("spp", "pre5", 256, 256))
    layers.append(_conv("td5", "spp", 256, 128))
    layers.append(LayerSpec("p4_up", "upsample", {}, ("td5",)))
    layers.append(_conv("lat4", c4_id, c4_c, 128))
    layers.append(LayerSpec("p4_cat", "concat", {}, ("p4_up", "lat4")))
    p4 = fusion_block("p4", "p4_cat", 128)
    layers.append(_conv("td4", p4, 128, 64))
    layers.append(LayerSpec("p3_up", "upsample", {}, ("td4",)))
    layers.append(_conv("lat3", c3_id, c3_c, 64))
    layers.append(LayerSpec("p3_cat", "concat", {}, ("p3_up", "lat3")))
    p3 = fusion_block("p3", "p3_cat", 64)
    layers.append(_detect("det8", p3, 64, anchors, classes))
    layers.append(_conv("n4_down", p3, 64, 128, k=3, stride=2, pad=1))
    layers.append(LayerSpec("n4_cat", "concat", {}, ("n4_down", p4)))
    n4 = fusion_block("n4", "n4_cat", 128)
    layers.append(_detect("det16", n4, 128, anchors, classes))
    layers.append(_conv("n5_down", n4, 128, 256, k=3, stride=2, pad=1))
    layers.append(LayerSpec("n5_cat", "concat", {}, ("n5_down", "spp")))
    n5 = fusion_block("n5", "n5_cat", 256)
    layers.append(_detect("det32", n5, 256, anchors, classes))
    return ["det8", "det16", "det32"]


def build_yofflenet(variant: str, num_classes: int = 3, anchors_per_scale: int = 3,
                    input_size: int = 416) -> Graph:
    """Assemble a full detector graph for one of the four variants."""
    key = variant.lower()
    if key not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    if anchors_per_scale < 1:
        raise ValueError(f"anchors_per_scale must be >= 1, got {anchors_per_scale}")
    if input_size % 32 != 0 or input_size < 32:
        raise ValueError(f"input_size must be a positive multiple of 32, got {input_size}")

    layers: list = []
    if key in ("s", "s+p"):
        taps = _shuffle_backbone(layers)
    else:
        taps = _csp_backbone(layers)

    if key in ("s+p", "p"):
        outputs = _two_level_neck(layers, taps["c4"], taps["c5"],
                                  anchors_per_scale, num_classes)
    else:
        outputs = _three_level_neck(layers, taps["c3"], taps["c4"], taps["c5"],
                                    anchors_per_scale, num_classes)

    return Graph(tuple(layers), (3, input_size, input_size), tuple(outputs))
