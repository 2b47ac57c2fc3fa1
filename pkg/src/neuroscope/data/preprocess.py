"""Preprocessing: min-max normalization, corner-aligned bilinear resize,
RGB-to-grayscale conversion."""

from __future__ import annotations

import numpy as np

from .types import ImageGray

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def normalize_minmax_array(pixels: np.ndarray) -> np.ndarray:
    """(I - min) / (max - min); a constant raster maps to all zeros."""
    pixels = np.asarray(pixels, dtype=np.float64)
    lo = pixels.min()
    hi = pixels.max()
    if hi == lo:
        return np.zeros_like(pixels)
    return (pixels - lo) / (hi - lo)


def normalize_minmax(img: ImageGray) -> ImageGray:
    return ImageGray(normalize_minmax_array(img.pixels), img.spacing_mm)


def _corner_aligned_coords(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.zeros(1)
    return np.arange(dst) * ((src - 1) / (dst - 1))


def resize_bilinear_array(pixels: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Corner-aligned bilinear sampling; exact identity at the source size."""
    pixels = np.asarray(pixels, dtype=np.float64)
    h, w = pixels.shape
    if target_h == h and target_w == w:
        return pixels.copy()
    ys = _corner_aligned_coords(h, target_h)
    xs = _corner_aligned_coords(w, target_w)
    y0 = np.minimum(np.floor(ys).astype(np.int64), max(h - 2, 0))
    x0 = np.minimum(np.floor(xs).astype(np.int64), max(w - 2, 0))
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    tl = pixels[np.ix_(y0, x0)]
    tr = pixels[np.ix_(y0, x1)]
    bl = pixels[np.ix_(y1, x0)]
    br = pixels[np.ix_(y1, x1)]
    top = tl * (1.0 - fx) + tr * fx
    bot = bl * (1.0 - fx) + br * fx
    return top * (1.0 - fy) + bot * fy


def resize_bilinear(img: ImageGray, target: int) -> ImageGray:
    """Resize to a square ``target`` raster; spacing scales with width."""
    if target < 8:
        raise ValueError(f"target size must be >= 8, got {target}")
    out = resize_bilinear_array(img.pixels, target, target)
    new_spacing = img.spacing_mm * img.width / target
    return ImageGray(out, new_spacing)


def to_grayscale(rgb: np.ndarray, spacing_mm: float = 1.0) -> ImageGray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B over an (H, W, 3) array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB data, got shape {rgb.shape}")
    w = np.array(GRAY_WEIGHTS)
    return ImageGray(rgb @ w, spacing_mm)
