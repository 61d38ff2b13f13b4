"""tfjs graph -> engine topology + weight records.

Walks the supported op set (_FusedConv2D, DepthwiseConv2dNative, MaxPool,
AddV2, Relu, Pad, Reshape, Identity) in graph order and emits the engine's
layer list plus named weight records. TF SAME padding is resolved against
the tracked activation shapes: symmetric stride-1 padding folds into the
conv layer, anything asymmetric becomes an explicit pad layer.

Conventions mapped here:
- conv kernels HWIO -> (out, in, kh, kw); depthwise HWC1 -> (c, kh, kw)
- depthwise ops carry no bias in these checkpoints -> zero bias records
- head Reshape nodes become taps named cls_<grid> / reg_<grid>
"""

from __future__ import annotations

import numpy as np

from .tfjs import (
    GraphModel,
    attr_fused_ops,
    attr_ksize,
    attr_padding,
    attr_strides,
)


class ConversionError(ValueError):
    pass


def _short_name(tf_name: str) -> str:
    seg = tf_name.split("/")
    base = seg[-2] if len(seg) >= 2 else seg[-1]
    if base.startswith("tf_op_layer_"):
        base = base[len("tf_op_layer_") :]
    return base.lower()


def _same_pads(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    lo = total // 2
    return lo, total - lo


def convert_graph(model: GraphModel, input_size: int, network_name: str):
    """Returns (topology dict, weight records dict).

    topology = {"name", "layers": [layer dicts], "taps": {tap: layer}}
    """
    layers: list[dict] = []
    records: dict[str, np.ndarray] = {}
    taps: dict[str, str] = {}
    alias: dict[str, str | None] = {}  # tf node name -> our layer name
    shapes: dict[str | None, tuple[int, int, int]] = {}  # layer -> (h, w, c)

    def emit(layer: dict, out_shape: tuple[int, int, int]) -> str:
        layers.append(layer)
        shapes[layer["name"]] = out_shape
        return layer["name"]

    def src_of(node: dict, idx: int = 0) -> str | None:
        name = node["input"][idx]
        if name not in alias:
            raise ConversionError(f"{node['name']}: unknown input {name!r}")
        return alias[name]

    for node in model.nodes:
        op = node["op"]
        name = node["name"]
        if op == "Const":
            continue
        if op == "Placeholder":
            alias[name] = None
            shapes[None] = (input_size, input_size, 3)
            continue
        if op == "Identity":
            alias[name] = src_of(node)
            continue
        if op == "Reshape":
            conv_layer = src_of(node)
            alias[name] = conv_layer
            grid = shapes[conv_layer][0]
            kind = "cls" if "classificators" in name else "reg"
            tap = f"{kind}_{grid}"
            if tap in taps:
                raise ConversionError(f"duplicate tap {tap!r}")
            taps[tap] = conv_layer
            continue

        base = _short_name(name)
        src = src_of(node)
        h, w, c = shapes[src]

        if op in ("_FusedConv2D", "DepthwiseConv2dNative"):
            depthwise = op == "DepthwiseConv2dNative"
            kern = model.consts[node["input"][1]]
            stride = attr_strides(node)
            kh, kw = int(kern.shape[0]), int(kern.shape[1])
            if kh != kw:
                raise ConversionError(f"{name}: non-square kernel {kern.shape}")
            pad_attr = attr_padding(node)
            if pad_attr == "SAME":
                (pt, pb) = _same_pads(h, kh, stride)
                (pl, pr) = _same_pads(w, kw, stride)
            elif pad_attr == "VALID":
                pt = pb = pl = pr = 0
            else:
                raise ConversionError(f"{name}: padding {pad_attr!r}")
            conv_pad = 0
            if pt == pb == pl == pr:
                conv_pad, pt = pt, 0
                pb = pl = pr = 0
            if pt or pb or pl or pr:
                src = emit(
                    {"name": base + "_pad", "kind": "pad",
                     "padding": [pt, pb, pl, pr], "source": src},
                    (h + pt + pb, w + pl + pr, c),
                )
                h, w = h + pt + pb, w + pl + pr

            if depthwise:
                if int(kern.shape[3]) != 1:
                    raise ConversionError(f"{name}: channel multiplier != 1")
                if int(kern.shape[2]) != c:
                    raise ConversionError(f"{name}: {kern.shape} vs {c} channels")
                records[f"{base}.weight"] = np.transpose(
                    kern[:, :, :, 0], (2, 0, 1)
                ).astype(np.float32)
                records[f"{base}.bias"] = np.zeros(c, np.float32)
                out_c = c
                fused = []
            else:
                if int(kern.shape[2]) != c:
                    raise ConversionError(f"{name}: {kern.shape} vs {c} channels")
                fused = attr_fused_ops(node)
                if fused not in (["BiasAdd"], ["BiasAdd", "Relu"]):
                    raise ConversionError(f"{name}: fused ops {fused}")
                bias = model.consts[node["input"][2]]
                records[f"{base}.weight"] = np.transpose(
                    kern, (3, 2, 0, 1)
                ).astype(np.float32)
                records[f"{base}.bias"] = bias.astype(np.float32)
                out_c = int(kern.shape[3])
            oh = (h + 2 * conv_pad - kh) // stride + 1
            ow = (w + 2 * conv_pad - kw) // stride + 1
            last = emit(
                {"name": base,
                 "kind": "depthwise_conv2d" if depthwise else "conv2d",
                 "stride": stride, "pad": conv_pad, "source": src},
                (oh, ow, out_c),
            )
            if "Relu" in fused:
                last = emit(
                    {"name": base + "_act", "kind": "relu", "source": last},
                    (oh, ow, out_c),
                )
            alias[name] = last
        elif op == "MaxPool":
            kernel = attr_ksize(node)
            stride = attr_strides(node)
            if attr_padding(node) == "SAME" and (
                _same_pads(h, kernel, stride) != (0, 0)
                or _same_pads(w, kernel, stride) != (0, 0)
            ):
                raise ConversionError(f"{name}: SAME pooling needs padding")
            oh = (h - kernel) // stride + 1
            ow = (w - kernel) // stride + 1
            alias[name] = emit(
                {"name": base, "kind": "max_pool", "kernel": kernel,
                 "stride": stride, "source": src},
                (oh, ow, c),
            )
        elif op == "Relu":
            alias[name] = emit(
                {"name": base, "kind": "relu", "source": src}, (h, w, c)
            )
        elif op == "AddV2":
            other = src_of(node, 1)
            if shapes[other] != (h, w, c):
                raise ConversionError(
                    f"{name}: residual {shapes[other]} != {(h, w, c)}"
                )
            alias[name] = emit(
                {"name": base, "kind": "add_residual", "source": src,
                 "residual": other},
                (h, w, c),
            )
        elif op == "Pad":
            pads = model.consts[node["input"][1]]
            if pads.shape != (4, 2) or pads[0].any():
                raise ConversionError(f"{name}: unsupported paddings {pads}")
            (pt, pb), (pl, pr) = pads[1], pads[2]
            cb, ca = pads[3]
            layer = {"name": base, "kind": "pad", "source": src}
            if pt or pb or pl or pr:
                layer["padding"] = [int(pt), int(pb), int(pl), int(pr)]
            if cb or ca:
                layer["channel_padding"] = [int(cb), int(ca)]
            alias[name] = emit(
                layer, (h + pt + pb, w + pl + pr, c + cb + ca)
            )
        else:
            raise ConversionError(f"unsupported op {op} ({name})")

    if len(taps) != 4:
        raise ConversionError(f"expected 4 head taps, found {sorted(taps)}")
    topology = {"name": network_name, "layers": layers, "taps": taps}
    return topology, records
