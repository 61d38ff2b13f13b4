"""Pure-numpy fallback kernels.

Functionally identical to :mod:`facekit.kernels.numba_backend`; window scans
are vectorized over candidate positions and narrowed stage by stage.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "haar_scan",
    "lbp_scan",
    "cell_histograms",
    "conv2d",
    "depthwise_conv2d",
    "max_pool",
]

# Grid cells for the eight MB-LBP neighbors, clockwise from the top-left.
_LBP_NEIGHBORS = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0))


def _window_origins(img_w, img_h, win_w, win_h, step, stride):
    nx = (img_w - win_w) // step + 1
    ny = (img_h - win_h) // step + 1
    xs = np.arange(nx) * step
    ys = np.arange(ny) * step
    gx, gy = np.meshgrid(xs, ys)  # row-major: y outer, x inner
    return gx.ravel(), gy.ravel(), gy.ravel() * stride + gx.ravel()


def haar_scan(
    sums,
    sq_sums,
    stride,
    img_w,
    img_h,
    win_w,
    win_h,
    step,
    stage_thresh,
    stage_lo,
    stage_hi,
    stump_feat,
    stump_thresh,
    leaf_l,
    leaf_r,
    feat_lo,
    feat_hi,
    rect_off,
    rect_w,
):
    xs, ys, origins = _window_origins(img_w, img_h, win_w, win_h, step, stride)
    windows = origins.size
    inv_area = 1.0 / (win_w * win_h)
    br = win_h * stride + win_w
    tr = win_w
    bl = win_h * stride
    total = sums[origins + br] - sums[origins + tr] - sums[origins + bl] + sums[origins]
    sq_total = (
        sq_sums[origins + br] - sq_sums[origins + tr] - sq_sums[origins + bl] + sq_sums[origins]
    )
    mean = total * inv_area
    var = np.maximum(sq_total * inv_area - mean * mean, 1.0)
    inv_norm = 1.0 / np.sqrt(var)

    active = np.arange(windows)
    stage_evals = 0
    stump_evals = 0
    for s in range(stage_thresh.shape[0]):
        if active.size == 0:
            break
        o = origins[active]
        stage_evals += active.size
        stage_sum = np.zeros(active.size)
        for t in range(stage_lo[s], stage_hi[s]):
            stump_evals += active.size
            f = stump_feat[t]
            val = np.zeros(active.size)
            for r in range(feat_lo[f], feat_hi[f]):
                val += rect_w[r] * (
                    sums[o + rect_off[r, 3]]
                    - sums[o + rect_off[r, 1]]
                    - sums[o + rect_off[r, 2]]
                    + sums[o + rect_off[r, 0]]
                )
            stage_sum += np.where(val * inv_norm[active] < stump_thresh[t], leaf_l[t], leaf_r[t])
        active = active[stage_sum >= stage_thresh[s]]

    out = np.stack([xs[active], ys[active]], axis=1).astype(np.int64)
    return out, windows, stage_evals, stump_evals


def _block_sum(sums, o, grid_off, f, gr, gc):
    return (
        sums[o + grid_off[f, (gr + 1) * 4 + gc + 1]]
        - sums[o + grid_off[f, (gr + 1) * 4 + gc]]
        - sums[o + grid_off[f, gr * 4 + gc + 1]]
        + sums[o + grid_off[f, gr * 4 + gc]]
    )


def lbp_scan(
    sums,
    stride,
    img_w,
    img_h,
    win_w,
    win_h,
    step,
    stage_thresh,
    stage_lo,
    stage_hi,
    stump_feat,
    subsets,
    leaf_l,
    leaf_r,
    grid_off,
):
    xs, ys, origins = _window_origins(img_w, img_h, win_w, win_h, step, stride)
    windows = origins.size
    active = np.arange(windows)
    stage_evals = 0
    stump_evals = 0
    for s in range(stage_thresh.shape[0]):
        if active.size == 0:
            break
        o = origins[active]
        stage_evals += active.size
        stage_sum = np.zeros(active.size)
        for t in range(stage_lo[s], stage_hi[s]):
            stump_evals += active.size
            f = stump_feat[t]
            center = _block_sum(sums, o, grid_off, f, 1, 1)
            code = np.zeros(active.size, dtype=np.int64)
            for k, (gr, gc) in enumerate(_LBP_NEIGHBORS):
                v = _block_sum(sums, o, grid_off, f, gr, gc)
                code |= (v >= center).astype(np.int64) << (7 - k)
            word = subsets[t].astype(np.int64)[code >> 5]
            bit = (word >> (code & 31)) & 1
            stage_sum += np.where(bit == 1, leaf_l[t], leaf_r[t])
        active = active[stage_sum >= stage_thresh[s]]

    out = np.stack([xs[active], ys[active]], axis=1).astype(np.int64)
    return out, windows, stage_evals, stump_evals


def cell_histograms(mag, bin_lo, frac, cell, n_bins):
    h, w = mag.shape
    cy = h // cell
    cx = w // cell
    hist = np.zeros((cy, cx, n_bins), dtype=np.float64)
    ys, xs = np.mgrid[0 : cy * cell, 0 : cx * cell]
    cells = (ys // cell) * cx + (xs // cell)
    flat = hist.reshape(-1, n_bins).reshape(-1)
    m = mag[: cy * cell, : cx * cell]
    b = bin_lo[: cy * cell, : cx * cell]
    f = frac[: cy * cell, : cx * cell]
    np.add.at(flat, cells.ravel() * n_bins + b.ravel(), (m * (1.0 - f)).ravel())
    np.add.at(flat, cells.ravel() * n_bins + (b.ravel() + 1) % n_bins, (m * f).ravel())
    return flat.reshape(cy, cx, n_bins)


def _pad_input(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad)))


def conv2d(x, k, bias, stride, pad):
    ci, h, w = x.shape
    co, _, kh, kw = k.shape
    xp = _pad_input(x, pad)
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    # im2col: columns (ci*kh*kw, oh*ow)
    cols = np.empty((ci, kh, kw, oh, ow), dtype=np.float32)
    for ky in range(kh):
        for kx in range(kw):
            cols[:, ky, kx] = xp[:, ky : ky + oh * stride : stride, kx : kx + ow * stride : stride]
    out = k.reshape(co, -1).astype(np.float32) @ cols.reshape(ci * kh * kw, oh * ow)
    out += bias[:, None]
    return out.reshape(co, oh, ow).astype(np.float32)


def depthwise_conv2d(x, k, bias, stride, pad):
    ci, h, w = x.shape
    _, kh, kw = k.shape
    xp = _pad_input(x, pad)
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((ci, oh, ow), dtype=np.float32)
    for ky in range(kh):
        for kx in range(kw):
            out += (
                xp[:, ky : ky + oh * stride : stride, kx : kx + ow * stride : stride]
                * k[:, ky, kx][:, None, None]
            )
    out += bias[:, None, None]
    return out.astype(np.float32)


def max_pool(x, kernel, stride, ceil_mode):
    ci, h, w = x.shape
    if ceil_mode:
        oh = -((h - kernel) // -stride) + 1
        ow = -((w - kernel) // -stride) + 1
        # partial windows must still start inside the input
        if (oh - 1) * stride >= h:
            oh -= 1
        if (ow - 1) * stride >= w:
            ow -= 1
    else:
        oh = (h - kernel) // stride + 1
        ow = (w - kernel) // stride + 1
    out = np.full((ci, oh, ow), -np.inf, dtype=np.float32)
    for ky in range(kernel):
        for kx in range(kernel):
            ys = np.arange(oh) * stride + ky
            xs = np.arange(ow) * stride + kx
            vy = ys < h
            vx = xs < w
            sub = x[:, ys[vy][:, None], xs[vx][None, :]]
            region = out[:, vy][:, :, vx]
            out[np.ix_(np.arange(ci), vy, vx)] = np.maximum(region, sub)
    return out
