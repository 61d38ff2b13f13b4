"""Fixture pack writing: raw f32 tensors with a JSON sidecar.

Layout per pack directory:
  meta.json   {network, checkpoint_sha256, tolerances, cases: [...]}
  <case>_<name>.f32   raw little-endian float32, C order

Every pack records the producing checkpoint hash; tolerances are explicit
so the consuming test cannot silently loosen them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class FixturePack:
    def __init__(self, network: str, checkpoint_sha256: str, tolerances: dict):
        self.network = network
        self.checkpoint_sha256 = checkpoint_sha256
        self.tolerances = dict(tolerances)
        self.cases: list[dict] = []
        self._tensors: dict[str, np.ndarray] = {}

    def _tensor_ref(self, case_id: str, name: str, arr: np.ndarray) -> dict:
        fname = f"{case_id}_{name}.f32"
        self._tensors[fname] = np.ascontiguousarray(arr, dtype="<f4")
        return {"file": fname, "shape": list(arr.shape)}

    def add_case(self, case_id: str, input_tensor: np.ndarray,
                 taps: dict[str, np.ndarray],
                 detections: list[dict] | None = None,
                 note: str = "") -> None:
        case = {
            "id": case_id,
            "input": self._tensor_ref(case_id, "input", input_tensor),
            "taps": {
                name: self._tensor_ref(case_id, name, arr)
                for name, arr in taps.items()
            },
        }
        if detections is not None:
            case["detections"] = detections
        if note:
            case["note"] = note
        self.cases.append(case)

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for fname, arr in self._tensors.items():
            (directory / fname).write_bytes(arr.tobytes())
        meta = {
            "network": self.network,
            "checkpoint_sha256": self.checkpoint_sha256,
            "tolerances": self.tolerances,
            "cases": self.cases,
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=1) + "\n")


def load_tensor(directory: Path, ref: dict) -> np.ndarray:
    raw = (Path(directory) / ref["file"]).read_bytes()
    return np.frombuffer(raw, "<f4").reshape(ref["shape"]).copy()
