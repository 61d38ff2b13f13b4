"""Reference execution of a tfjs graph with TensorFlow kernels.

Golden fixtures come from this executor, so the differential test compares
TensorFlow's conv/pool implementations against the engine's own. Only the
op set used by the BlazeFace checkpoints is supported.
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


def exec_graph(model: GraphModel, input_nhwc: np.ndarray) -> dict[str, np.ndarray]:
    """Run every node; returns tf node name -> value (numpy, batch kept)."""
    import tensorflow as tf

    values: dict[str, np.ndarray] = dict(model.consts)
    for node in model.nodes:
        op = node["op"]
        name = node["name"]
        if op == "Const":
            continue
        if op == "Placeholder":
            values[name] = input_nhwc.astype(np.float32)
            continue
        ins = [values[i] for i in node.get("input", []) if not i.startswith("^")]
        if op == "_FusedConv2D":
            s = attr_strides(node)
            y = tf.nn.conv2d(ins[0], ins[1], [1, s, s, 1], attr_padding(node))
            fused = attr_fused_ops(node)
            if "BiasAdd" in fused:
                y = tf.nn.bias_add(y, ins[2])
            if "Relu" in fused:
                y = tf.nn.relu(y)
            values[name] = y.numpy()
        elif op == "DepthwiseConv2dNative":
            s = attr_strides(node)
            y = tf.nn.depthwise_conv2d(
                ins[0], ins[1], [1, s, s, 1], attr_padding(node)
            )
            values[name] = y.numpy()
        elif op == "MaxPool":
            k, s = attr_ksize(node), attr_strides(node)
            values[name] = tf.nn.max_pool2d(
                ins[0], k, s, attr_padding(node)
            ).numpy()
        elif op == "AddV2":
            values[name] = ins[0] + ins[1]
        elif op == "Relu":
            values[name] = np.maximum(ins[0], 0.0)
        elif op == "Pad":
            values[name] = np.pad(ins[0], ins[1])
        elif op == "Reshape":
            values[name] = np.reshape(ins[0], ins[1])
        elif op == "Identity":
            values[name] = ins[0]
        else:
            raise ValueError(f"unsupported op {op} ({name})")
    return values
