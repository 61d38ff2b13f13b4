"""Reading tfjs graph-model checkpoints (model.json + weight shards)."""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DTYPES = {"float32": np.dtype("<f4"), "int32": np.dtype("<i4")}


@dataclass(frozen=True)
class GraphModel:
    nodes: list[dict]  # modelTopology nodes, graph order
    consts: dict[str, np.ndarray]  # const node name -> value
    checkpoint_sha256: str  # hash over model.json + all shards


def _attr_ints(node: dict, key: str) -> list[int]:
    return [int(v) for v in node["attr"][key]["list"]["i"]]


def attr_padding(node: dict) -> str:
    return base64.b64decode(node["attr"]["padding"]["s"]).decode()


def attr_fused_ops(node: dict) -> list[str]:
    raw = node["attr"].get("fused_ops", {}).get("list", {}).get("s", [])
    return [base64.b64decode(s).decode() for s in raw]


def attr_strides(node: dict) -> int:
    s = _attr_ints(node, "strides")
    if s[0] != 1 or s[3] != 1 or s[1] != s[2]:
        raise ValueError(f"{node['name']}: unsupported strides {s}")
    return s[1]


def attr_ksize(node: dict) -> int:
    k = _attr_ints(node, "ksize")
    if k[0] != 1 or k[3] != 1 or k[1] != k[2]:
        raise ValueError(f"{node['name']}: unsupported ksize {k}")
    return k[1]


def load_graph_model(json_path: str | Path) -> GraphModel:
    json_path = Path(json_path)
    doc = json.loads(json_path.read_text())
    digest = hashlib.sha256(json_path.read_bytes())

    consts: dict[str, np.ndarray] = {}
    for manifest in doc["weightsManifest"]:
        blob = b"".join(
            (json_path.parent / p).read_bytes() for p in manifest["paths"]
        )
        digest.update(blob)
        off = 0
        for entry in manifest["weights"]:
            dt = _DTYPES[entry["dtype"]]
            n = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
            arr = np.frombuffer(blob, dt, count=n, offset=off).reshape(entry["shape"])
            consts[entry["name"]] = arr.copy()
            off += n * dt.itemsize
        if off != len(blob):
            raise ValueError(f"{json_path}: weight shard size mismatch")

    nodes = doc["modelTopology"]["node"]
    # consts may also be embedded in the topology (none in practice for
    # these checkpoints, but tensorContent is legal)
    for node in nodes:
        if node["op"] != "Const" or node["name"] in consts:
            continue
        tensor = node["attr"]["value"]["tensor"]
        if "tensorContent" in tensor:
            dt = _DTYPES[{"DT_FLOAT": "float32", "DT_INT32": "int32"}[tensor["dtype"]]]
            shape = [int(d["size"]) for d in tensor["tensorShape"].get("dim", [])]
            raw = base64.b64decode(tensor["tensorContent"])
            consts[node["name"]] = np.frombuffer(raw, dt).reshape(shape).copy()
    return GraphModel(nodes, consts, digest.hexdigest())
