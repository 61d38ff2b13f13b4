"""Training loop for the in-house MTCNN checkpoint.

Joint loss per network: masked cross-entropy (positives and negatives),
masked smooth-L1 box regression (positives and parts), and for O-Net a
landmark MSE against the template targets. Small synthetic corpus, fixed
seeds -> reproducible checkpoints.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from .mtcnn_data import build_composites, sample_crops
from .mtcnn_nets import ONet, PNet, RNet


def _epoch(net, opt, batches, landmark_head: bool):
    ce = nn.CrossEntropyLoss(reduction="none")
    sl1 = nn.SmoothL1Loss(reduction="none")
    total = 0.0
    for x, y, ym, r, rm, lm in batches:
        opt.zero_grad()
        out = net(x)
        logits, reg = out[0], out[1]
        logits = logits.reshape(len(x), 2)
        reg = reg.reshape(len(x), 4)
        loss_cls = (ce(logits, y) * ym).sum() / ym.sum().clamp(min=1.0)
        loss_reg = (sl1(reg, r).mean(dim=1) * rm).sum() / rm.sum().clamp(min=1.0)
        loss = loss_cls + 0.5 * loss_reg
        if landmark_head:
            lmk = out[2].reshape(len(x), 10)
            loss_lmk = (((lmk - lm) ** 2).mean(dim=1) * rm).sum() / rm.sum().clamp(min=1.0)
            loss = loss + 0.5 * loss_lmk
        loss.backward()
        opt.step()
        total += float(loss)
    return total / len(batches)


def _batches(arrays, batch_size: int):
    n = len(arrays[0])
    tensors = [torch.from_numpy(a) for a in arrays]
    return [tuple(t[i : i + batch_size] for t in tensors)
            for i in range(0, n, batch_size)]


def train_all(out_dir: str | Path, composites: int = 900, epochs: int = 30,
              seed: int = 0, quiet: bool = False) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    comps = build_composites(rng, composites)
    paths = {}
    for name, cls, size in (("pnet", PNet, 12), ("rnet", RNet, 24), ("onet", ONet, 48)):
        path = out_dir / f"{name}.pt"
        if path.exists():
            if not quiet:
                print(f"{name}: checkpoint exists, skipping")
            paths[name] = path
            continue
        data = sample_crops(comps, size, np.random.default_rng(seed + size))
        net = cls()
        opt = torch.optim.Adam(net.parameters(), lr=1e-3)
        batches = _batches(data, 256)
        sched = torch.optim.lr_scheduler.StepLR(opt, step_size=12, gamma=0.3)
        for epoch in range(epochs):
            loss = _epoch(net, opt, batches, landmark_head=(name == "onet"))
            sched.step()
            if not quiet and (epoch % 5 == 0 or epoch == epochs - 1):
                print(f"{name} epoch {epoch:3d} loss {loss:.4f}")
        # save before the sanity evaluation so a failed eval cannot lose
        # a finished training run
        torch.save(net.state_dict(), path)
        paths[name] = path
        # held-out style sanity: accuracy on the training distribution,
        # evaluated in mini-batches to bound memory
        preds = []
        with torch.no_grad():
            for i in range(0, len(data[0]), 512):
                x = torch.from_numpy(data[0][i : i + 512])
                logits = net(x)[0].reshape(len(x), 2)
                preds.append(logits.argmax(dim=1).numpy())
        pred = np.concatenate(preds)
        mask = data[2] > 0
        acc = float((pred[mask] == data[1][mask]).mean())
        if not quiet:
            print(f"{name} classification accuracy {acc:.3f} over {int(mask.sum())}")
    return paths
