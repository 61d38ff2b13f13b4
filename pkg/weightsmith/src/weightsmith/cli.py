"""weightsmith command line: export weights, train, emit golden fixtures.

Subcommands:
  export-blazeface  tfjs checkpoints -> topology JSON + FDNW + fixture pack
  train-mtcnn       train the in-house torch checkpoint
  export-mtcnn      torch checkpoint -> FDNW + fixture pack
  parity            resampler parity fixtures (gradient ramp)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .fdnw import write_fdnw
from .goldens import FixturePack
from .resampler import gradient_ramp, resize_bilinear_u8

BLAZE_VARIANTS = {"front": ("blazeface-front.json", 128),
                  "rear": ("blazeface-back.json", 256)}


def _face_image(size: int) -> np.ndarray:
    """Large-face test image: square crop around the astronaut portrait."""
    from skimage import data as skdata

    crop = skdata.astronaut()[18:210, 128:320]  # face box with margin
    return resize_bilinear_u8(np.ascontiguousarray(crop), size, size)


def _scene_image(size: int) -> np.ndarray:
    from skimage import data as skdata

    return resize_bilinear_u8(skdata.astronaut(), size, size)


def cmd_export_blazeface(args) -> int:
    from .blazeface_ref import reference_detect
    from .convert import convert_graph
    from .tfexec import exec_graph
    from .tfjs import load_graph_model

    models_out = Path(args.models_out)
    models_out.mkdir(parents=True, exist_ok=True)
    for kind, (fname, size) in BLAZE_VARIANTS.items():
        gm = load_graph_model(Path(args.checkpoints) / fname)
        topo, records = convert_graph(gm, size, f"blazeface_{kind}")
        (models_out / f"blazeface_{kind}.topology.json").write_text(
            json.dumps(topo, indent=1) + "\n"
        )
        write_fdnw(records, models_out / f"blazeface_{kind}.fdnw")

        pack = FixturePack(
            f"blazeface_{kind}", gm.checkpoint_sha256,
            {"taps_rel": 1e-4, "box_px": 1.0, "score_abs": 1e-3},
        )
        cases = {
            "zeros": np.zeros((size, size, 3), np.uint8),
            "face": _face_image(size),
            "scene": _scene_image(size),
        }
        tap_nodes = {
            tap: next(
                n["name"] for n in gm.nodes
                if n["name"].endswith(f"/{layer}/BiasAdd")
            )
            for tap, layer in topo["taps"].items()
        }
        for case_id, img in cases.items():
            x = (img.astype(np.float32) - 127.5) / 127.5
            values = exec_graph(gm, x[None])
            taps_hwc = {tap: values[node][0] for tap, node in tap_nodes.items()}
            taps_chw = {t: np.moveaxis(v, 2, 0) for t, v in taps_hwc.items()}
            dets = reference_detect(taps_hwc, size)
            pack.add_case(
                case_id,
                img.astype(np.float32),  # raw pixels (h, w, 3), 0..255
                taps_chw,
                detections=dets,
            )
            print(f"blazeface_{kind}/{case_id}: {len(dets)} detection(s)")
        pack.write(Path(args.fixtures_out) / f"blazeface_{kind}")
    return 0


def cmd_train_mtcnn(args) -> int:
    from .train_mtcnn import train_all

    train_all(args.out, composites=args.composites, epochs=args.epochs,
              seed=args.seed)
    return 0


def cmd_export_mtcnn(args) -> int:
    import torch

    from .mtcnn_nets import NETWORKS, export_records
    from .mtcnn_ref import reference_detect

    ckpt_dir = Path(args.checkpoints)
    models_out = Path(args.models_out)
    models_out.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    nets = {}
    for name, cls in NETWORKS.items():
        path = ckpt_dir / f"{name}.pt"
        digest.update(path.read_bytes())
        net = cls()
        net.load_state_dict(torch.load(path, weights_only=True))
        net.eval()
        nets[name] = net
        write_fdnw(export_records(net), models_out / f"mtcnn_{name}.fdnw")
    sha = digest.hexdigest()

    pack = FixturePack(
        "mtcnn", sha, {"taps_rel": 1e-4, "box_px": 1.0, "score_abs": 1e-3}
    )
    # tensor-level cases per network: deterministic pseudo-images
    rng = np.random.default_rng(42)
    for name, size in (("pnet", 12), ("rnet", 24), ("onet", 48)):
        for case_id, img in (
            (f"{name}_zeros", np.zeros((size, size, 3), np.uint8)),
            (f"{name}_noise", rng.integers(0, 256, (size, size, 3)).astype(np.uint8)),
            (f"{name}_face", _face_image(size)),
        ):
            x = (np.moveaxis(img, 2, 0).astype(np.float32) - 127.5) / 128.0
            with torch.no_grad():
                outs = [o.numpy()[0] for o in nets[name](torch.from_numpy(x[None]))]
            logits = outs[0].reshape(2, -1)
            zz = logits - logits.max(axis=0, keepdims=True)
            ez = np.exp(zz, dtype=np.float64)
            prob = (ez / ez.sum(axis=0, keepdims=True)).astype(np.float32)
            taps = {"prob": prob.reshape(outs[0].shape), "reg": outs[1]}
            if name == "onet":
                taps["landmarks"] = outs[2]
            pack.add_case(case_id, x, taps, note=f"{name} {size}x{size} input")

    # end-to-end cases
    for case_id, img in (
        ("scene_face", _face_image(160)),
        ("scene_tiny", _face_image(32)),
        ("scene_astro", _scene_image(256)),
    ):
        dets = reference_detect(img, nets["pnet"], nets["rnet"], nets["onet"])
        pack.add_case(
            case_id, img.astype(np.float32), {}, detections=dets,
        )
        print(f"mtcnn/{case_id}: {len(dets)} detection(s)")
    pack.write(Path(args.fixtures_out) / "mtcnn")
    return 0


def cmd_parity(args) -> int:
    ramp = gradient_ramp()
    pack = FixturePack("resampler", hashlib.sha256(ramp.tobytes()).hexdigest(),
                       {"pixel_abs": 1.0})
    for w, h in ((64, 64), (128, 96), (37, 53), (256, 256)):
        out = resize_bilinear_u8(ramp, w, h)
        pack.add_case(
            f"ramp_{w}x{h}", ramp.astype(np.float32),
            {"resized": out.astype(np.float32)},
            note=f"target {w}x{h}",
        )
    pack.write(Path(args.fixtures_out) / "resampler")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="weightsmith")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-blazeface")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--models-out", required=True)
    p.add_argument("--fixtures-out", required=True)
    p.set_defaults(func=cmd_export_blazeface)

    p = sub.add_parser("train-mtcnn")
    p.add_argument("--out", required=True)
    p.add_argument("--composites", type=int, default=900)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_mtcnn)

    p = sub.add_parser("export-mtcnn")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--models-out", required=True)
    p.add_argument("--fixtures-out", required=True)
    p.set_defaults(func=cmd_export_mtcnn)

    p = sub.add_parser("parity")
    p.add_argument("--fixtures-out", required=True)
    p.set_defaults(func=cmd_parity)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
