"""Pixel buffers, color conversion, resizing, integral images and pyramids.

All detectors consume these primitives. Buffers are immutable by convention:
operations always return new instances and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImageBuffer",
    "IntegralImage",
    "PyramidLevel",
    "to_grayscale",
    "resize_bilinear",
    "integral",
    "rect_sum",
    "build_pyramid",
]

# ITU-R BT.601 luma weights, round-half-up. Pinned so fixtures are stable.
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major 8-bit raster, 1 (gray) or 3 (RGB) channels."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # shape (height, width, channels), uint8

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.data.dtype != np.uint8:
            raise ValueError("data must be uint8")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        """Wrap an (h, w), (h, w, 1) or (h, w, 3) uint8 array."""
        a = np.asarray(arr, dtype=np.uint8)
        if a.ndim == 2:
            a = a[:, :, None]
        h, w, c = a.shape
        return cls(width=w, height=h, channels=c, data=np.ascontiguousarray(a))

    def plane(self) -> np.ndarray:
        """Single-channel view as (h, w); requires channels == 1."""
        if self.channels != 1:
            raise ValueError("plane() requires a 1-channel image")
        return self.data[:, :, 0]


@dataclass(frozen=True)
class IntegralImage:
    """Summed-area tables of a grayscale image.

    ``sums[y][x]`` holds the sum over pixels in ``[0, x) x [0, y)``; row 0 and
    column 0 are zero. ``sq_sums`` satisfies the same recurrence over squared
    pixel values. Both are 64-bit so 640x480x255^2 cannot overflow.
    """

    width: int
    height: int
    sums: np.ndarray  # (height+1, width+1) int64
    sq_sums: np.ndarray  # (height+1, width+1) int64


@dataclass(frozen=True)
class PyramidLevel:
    scale: float
    image: ImageBuffer


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Convert to luminance; 1-channel input is returned unchanged."""
    if img.channels == 1:
        return img
    lum = img.data.astype(np.float64) @ _LUMA
    gray = np.floor(lum + 0.5).astype(np.uint8)  # round-half-up
    return ImageBuffer(img.width, img.height, 1, gray[:, :, None])


def _bilinear_coords(dst: int, src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-center sample positions, clamped to the source edge."""
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    hi = np.clip(lo + 1, 0, src - 1)
    lo = np.clip(lo, 0, src - 1)
    return lo, hi, frac


def resize_bilinear(img: ImageBuffer, w: int, h: int) -> ImageBuffer:
    """Bilinear resize with half-pixel center alignment and edge clamping."""
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be >= 1")
    if w == img.width and h == img.height:
        return ImageBuffer(img.width, img.height, img.channels, img.data.copy())
    x0, x1, fx = _bilinear_coords(w, img.width)
    y0, y1, fy = _bilinear_coords(h, img.height)
    src = img.data.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(w, h, img.channels, out)


def integral(img: ImageBuffer) -> IntegralImage:
    """Build sum and squared-sum tables for a grayscale image."""
    if img.channels != 1:
        raise ValueError("integral image requires a 1-channel image")
    p = img.plane().astype(np.int64)
    sums = np.zeros((img.height + 1, img.width + 1), dtype=np.int64)
    sq = np.zeros_like(sums)
    np.cumsum(np.cumsum(p, axis=0), axis=1, out=sums[1:, 1:])
    np.cumsum(np.cumsum(p * p, axis=0), axis=1, out=sq[1:, 1:])
    return IntegralImage(img.width, img.height, sums, sq)


def rect_sum(ii: IntegralImage, x: int, y: int, w: int, h: int) -> int:
    """Sum of pixels in the rectangle via four corner lookups."""
    if x < 0 or y < 0 or w < 0 or h < 0 or x + w > ii.width or y + h > ii.height:
        raise ValueError(f"rectangle ({x},{y},{w},{h}) out of bounds")
    s = ii.sums
    return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])


def build_pyramid(img: ImageBuffer, scale_factor: float, min_side: int) -> list[PyramidLevel]:
    """Downscale chain at scales 1, 1/f, 1/f^2, ... while min(w,h)*scale >= min_side."""
    if scale_factor <= 1.0:
        raise ValueError("scale_factor must be > 1")
    levels: list[PyramidLevel] = []
    scale = 1.0
    while min(img.width, img.height) * scale >= min_side:
        w = max(1, round(img.width * scale))
        h = max(1, round(img.height * scale))
        levels.append(PyramidLevel(scale, resize_bilinear(img, w, h)))
        scale /= scale_factor
    return levels
