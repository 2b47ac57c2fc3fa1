"""Training-set augmentation: one randomized affine + photometric composite.

The image is resampled bilinearly with edge replication; the mask gets the
identical geometric transform with nearest-neighbor sampling and no
photometric changes. Flips and right-angle rotations permute the pixel grid
exactly, so mask pixel counts are preserved there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .preprocess import normalize_minmax_array
from .types import ImageGray, RoiMask, Sample


@dataclass
class AugmentConfig:
    h_flip: bool = True
    v_flip: bool = True
    rotation_deg_max: float = 270.0
    shift_frac: float = 0.20
    zoom_range: tuple = (0.1, 1.0)
    shear: float = 0.2
    brightness_range: tuple = (0.2, 1.0)
    clahe: bool = True
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.shift_frac < 1.0:
            raise ValueError("shift_frac must lie in [0, 1)")
        if not (0.0 < self.zoom_range[0] <= self.zoom_range[1]):
            raise ValueError("zoom_range must satisfy 0 < lo <= hi")
        if not (0.0 < self.brightness_range[0] <= self.brightness_range[1]):
            raise ValueError("brightness_range must satisfy 0 < lo <= hi")
        if self.rotation_deg_max < 0 or self.shear < 0:
            raise ValueError("rotation_deg_max and shear must be >= 0")

    @staticmethod
    def no_op() -> "AugmentConfig":
        return AugmentConfig(
            h_flip=False, v_flip=False, rotation_deg_max=0.0, shift_frac=0.0,
            zoom_range=(1.0, 1.0), shear=0.0, brightness_range=(1.0, 1.0), clahe=False,
        )


def clahe(pixels: np.ndarray, tiles: int = 8, clip_limit: float = 2.0) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on a [0,1] raster."""
    import cv2  # heavyweight; imported only when CLAHE is actually used

    u16 = np.round(np.clip(pixels, 0.0, 1.0) * 65535.0).astype(np.uint16)
    eq = cv2.createCLAHE(clipLimit=clip_limit, tileGridSize=(tiles, tiles)).apply(u16)
    return eq.astype(np.float64) / 65535.0


def _draw_params(cfg: AugmentConfig, rng: np.random.Generator, w: int, h: int) -> dict:
    return {
        "h_flip": bool(cfg.h_flip and rng.random() < 0.5),
        "v_flip": bool(cfg.v_flip and rng.random() < 0.5),
        "angle_deg": float(rng.uniform(0.0, cfg.rotation_deg_max)),
        "shift_x": float(rng.uniform(-cfg.shift_frac, cfg.shift_frac) * w),
        "shift_y": float(rng.uniform(-cfg.shift_frac, cfg.shift_frac) * h),
        "zoom": float(rng.uniform(cfg.zoom_range[0], cfg.zoom_range[1])),
        "shear_rad": float(rng.uniform(-cfg.shear, cfg.shear)),
        "brightness": float(rng.uniform(cfg.brightness_range[0], cfg.brightness_range[1])),
    }


def _forward_matrix(p: dict) -> np.ndarray:
    th = math.radians(p["angle_deg"])
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    shear = np.array([[1.0, math.tan(p["shear_rad"])], [0.0, 1.0]])
    zoom = np.diag([p["zoom"], p["zoom"]])
    flip = np.diag([-1.0 if p["h_flip"] else 1.0, -1.0 if p["v_flip"] else 1.0])
    return rot @ shear @ zoom @ flip


def _source_coords(p: dict, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-map destination pixel centers to source coordinates."""
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    minv = np.linalg.inv(_forward_matrix(p))
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = xs - cx - p["shift_x"]
    dy = ys - cy - p["shift_y"]
    sx = minv[0, 0] * dx + minv[0, 1] * dy + cx
    sy = minv[1, 0] * dx + minv[1, 1] * dy + cy
    return sx, sy


def _sample_bilinear_edge(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = img.shape
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(sx).astype(np.int64), w - 2) if w > 1 else np.zeros_like(sx, np.int64)
    y0 = np.minimum(np.floor(sy).astype(np.int64), h - 2) if h > 1 else np.zeros_like(sy, np.int64)
    fx = sx - x0
    fy = sy - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _sample_nearest_zero(mask: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    xi = np.rint(sx).astype(np.int64)
    yi = np.rint(sy).astype(np.int64)
    inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.zeros_like(mask, dtype=bool)
    out[inside] = mask[yi[inside], xi[inside]]
    return out


IDENTITY_PARAMS = {
    "h_flip": False, "v_flip": False, "angle_deg": 0.0, "shift_x": 0.0,
    "shift_y": 0.0, "zoom": 1.0, "shear_rad": 0.0, "brightness": 1.0,
}


def transform_sample(sample: Sample, p: dict, use_clahe: bool = False) -> Sample:
    """Apply one fixed parameter set (see ``IDENTITY_PARAMS`` for the keys)."""
    img = sample.image.pixels
    h, w = img.shape
    sx, sy = _source_coords(p, w, h)
    out = _sample_bilinear_edge(img, sx, sy)
    out = out * p["brightness"]
    if use_clahe:
        out = clahe(out)
    out = normalize_minmax_array(out)
    new_mask = None
    if sample.mask is not None:
        new_mask = RoiMask(_sample_nearest_zero(sample.mask.bits, sx, sy))
    return Sample(
        image=ImageGray(out, sample.image.spacing_mm),
        label=sample.label,
        id=f"{sample.id}_aug",
        mask=new_mask,
    )


def augment(sample: Sample, cfg: AugmentConfig, rng: np.random.Generator) -> Sample:
    """One randomized composite; label unchanged, mask transformed geometrically."""
    cfg.validate()
    h, w = sample.image.pixels.shape
    p = _draw_params(cfg, rng, w, h)
    return transform_sample(sample, p, use_clahe=cfg.clahe)
