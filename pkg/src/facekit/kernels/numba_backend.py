"""Numba-compiled inner loops.

Signatures mirror :mod:`facekit.kernels.numpy_backend`; the flattened model
arrays are prepared by the calling modules so both backends stay thin.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "haar_scan",
    "lbp_scan",
    "cell_histograms",
    "conv2d",
    "depthwise_conv2d",
    "max_pool",
]


@njit(cache=True)
def haar_scan(
    sums,  # i8[:] flattened (h+1)*(w+1)
    sq_sums,  # i8[:]
    stride,  # row stride of the flattened tables
    img_w,
    img_h,
    win_w,
    win_h,
    step,
    stage_thresh,  # f8[S]
    stage_lo,  # i4[S]
    stage_hi,  # i4[S]
    stump_feat,  # i4[N]
    stump_thresh,  # f8[N]
    leaf_l,  # f8[N]
    leaf_r,  # f8[N]
    feat_lo,  # i4[F]
    feat_hi,  # i4[F]
    rect_off,  # i8[R,4]  tl, tr, bl, br flat offsets at window origin
    rect_w,  # f8[R]    weights with inv_area folded in
):
    """Slide a Haar cascade over one scale. Returns (xy, n, counters)."""
    inv_area = 1.0 / (win_w * win_h)
    br = win_h * stride + win_w  # window bottom-right corner offset
    tr = win_w
    bl = win_h * stride
    nx = (img_w - win_w) // step + 1
    ny = (img_h - win_h) // step + 1
    out = np.empty((nx * ny, 2), dtype=np.int64)
    n_out = 0
    windows = 0
    stage_evals = 0
    stump_evals = 0
    for yi in range(ny):
        y = yi * step
        row = y * stride
        for xi in range(nx):
            x = xi * step
            o = row + x
            windows += 1
            total = sums[o + br] - sums[o + tr] - sums[o + bl] + sums[o]
            sq_total = sq_sums[o + br] - sq_sums[o + tr] - sq_sums[o + bl] + sq_sums[o]
            mean = total * inv_area
            var = sq_total * inv_area - mean * mean
            if var < 1.0:
                var = 1.0
            inv_norm = 1.0 / np.sqrt(var)
            accept = True
            for s in range(stage_thresh.shape[0]):
                stage_evals += 1
                stage_sum = 0.0
                for t in range(stage_lo[s], stage_hi[s]):
                    stump_evals += 1
                    f = stump_feat[t]
                    val = 0.0
                    for r in range(feat_lo[f], feat_hi[f]):
                        p = o + rect_off[r, 0]
                        val += rect_w[r] * (
                            sums[o + rect_off[r, 3]]
                            - sums[o + rect_off[r, 1]]
                            - sums[o + rect_off[r, 2]]
                            + sums[p]
                        )
                    if val * inv_norm < stump_thresh[t]:
                        stage_sum += leaf_l[t]
                    else:
                        stage_sum += leaf_r[t]
                if stage_sum < stage_thresh[s]:
                    accept = False
                    break
            if accept:
                out[n_out, 0] = x
                out[n_out, 1] = y
                n_out += 1
    return out[:n_out], windows, stage_evals, stump_evals


@njit(cache=True)
def lbp_scan(
    sums,  # i8[:] flattened
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
    subsets,  # u4[N,8]
    leaf_l,
    leaf_r,
    grid_off,  # i8[F,16]  4x4 grid-corner flat offsets per feature
):
    """Slide an MB-LBP cascade over one scale. Returns (xy, n, counters)."""
    nx = (img_w - win_w) // step + 1
    ny = (img_h - win_h) // step + 1
    out = np.empty((nx * ny, 2), dtype=np.int64)
    n_out = 0
    windows = 0
    stage_evals = 0
    stump_evals = 0
    for yi in range(ny):
        y = yi * step
        row = y * stride
        for xi in range(nx):
            x = xi * step
            o = row + x
            windows += 1
            accept = True
            for s in range(stage_thresh.shape[0]):
                stage_evals += 1
                stage_sum = 0.0
                for t in range(stage_lo[s], stage_hi[s]):
                    stump_evals += 1
                    f = stump_feat[t]
                    # block sum at grid cell (gr, gc): corners p[gr*4+gc] etc.
                    c = (
                        sums[o + grid_off[f, 10]]
                        - sums[o + grid_off[f, 9]]
                        - sums[o + grid_off[f, 6]]
                        + sums[o + grid_off[f, 5]]
                    )
                    code = 0
                    bit = 7
                    # clockwise from the top-left block; MSB first
                    for k in range(8):
                        if k == 0:
                            gr, gc = 0, 0
                        elif k == 1:
                            gr, gc = 0, 1
                        elif k == 2:
                            gr, gc = 0, 2
                        elif k == 3:
                            gr, gc = 1, 2
                        elif k == 4:
                            gr, gc = 2, 2
                        elif k == 5:
                            gr, gc = 2, 1
                        elif k == 6:
                            gr, gc = 2, 0
                        else:
                            gr, gc = 1, 0
                        p00 = grid_off[f, gr * 4 + gc]
                        p01 = grid_off[f, gr * 4 + gc + 1]
                        p10 = grid_off[f, (gr + 1) * 4 + gc]
                        p11 = grid_off[f, (gr + 1) * 4 + gc + 1]
                        v = sums[o + p11] - sums[o + p10] - sums[o + p01] + sums[o + p00]
                        if v >= c:
                            code |= 1 << bit
                        bit -= 1
                    if (subsets[t, code >> 5] >> (code & 31)) & 1:
                        stage_sum += leaf_l[t]
                    else:
                        stage_sum += leaf_r[t]
                if stage_sum < stage_thresh[s]:
                    accept = False
                    break
            if accept:
                out[n_out, 0] = x
                out[n_out, 1] = y
                n_out += 1
    return out[:n_out], windows, stage_evals, stump_evals


@njit(cache=True)
def cell_histograms(mag, bin_lo, frac, cell, n_bins):
    """Accumulate per-cell orientation histograms with bin interpolation."""
    h, w = mag.shape
    cy = h // cell
    cx = w // cell
    hist = np.zeros((cy, cx, n_bins), dtype=np.float64)
    for y in range(cy * cell):
        for x in range(cx * cell):
            m = mag[y, x]
            b = bin_lo[y, x]
            f = frac[y, x]
            hist[y // cell, x // cell, b] += m * (1.0 - f)
            hist[y // cell, x // cell, (b + 1) % n_bins] += m * f
    return hist


# Convolutions are not compiled here: the im2col + BLAS matmul formulation in
# the numpy backend outstrips scalar @njit loops by an order of magnitude, so
# both backends share it. Numba earns its keep on the integral-image scans and
# cell histograms above, which have no vectorized formulation.
from .numpy_backend import conv2d, depthwise_conv2d  # noqa: E402


@njit(cache=True)
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
    out = np.empty((ci, oh, ow), dtype=np.float32)
    for c in range(ci):
        for oy in range(oh):
            for ox in range(ow):
                y0 = oy * stride
                x0 = ox * stride
                y1 = min(y0 + kernel, h)
                x1 = min(x0 + kernel, w)
                m = x[c, y0, x0]
                for iy in range(y0, y1):
                    for ix in range(x0, x1):
                        if x[c, iy, ix] > m:
                            m = x[c, iy, ix]
                out[c, oy, ox] = m
    return out
