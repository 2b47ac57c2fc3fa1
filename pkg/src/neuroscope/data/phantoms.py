"""Synthetic head phantoms with exact lesion masks.

Each image is an elliptical "brain" with a smooth intensity gradient and
noise, plus one lesion whose morphology depends on the class:

* glioma-like     -- irregular off-midline blob, 2-6 cm^2, half of them
                     ring-enhancing (bright annulus around a darker core)
* meningioma-like -- convex lens clipped against the brain boundary,
                     1.5-3.5 cm^2, with a bright enhancing rim
* pituitary-like  -- small bright midline blob, 0.3-0.9 cm^2

Masks are exact rasterizations. Everything is drawn from per-sample Philox
streams keyed by (seed, class, index), so datasets are bit-reproducible.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .types import CLASS_NAMES, ImageGray, PhantomDataset, RoiMask, Sample

CLASS_AREA_CM2 = {
    0: (2.0, 6.0),   # glioma-like
    1: (1.5, 3.5),   # meningioma-like
    2: (0.3, 0.9),   # pituitary-like
}
# generator targets stay this far inside the class interval so rasterization
# jitter can never leave it
_AREA_MARGIN_CM2 = 0.12

_BRAIN_RX = 0.42
_BRAIN_RY = 0.46


class GenerationError(RuntimeError):
    """Requested phantom geometry cannot be realized."""


def _rng_for(seed: int, label: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, label, index))))


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:size, 0:size]
    return xs.astype(np.float64), ys.astype(np.float64)


def _brain_mask(size: int) -> np.ndarray:
    xs, ys = _grid(size)
    cx = cy = (size - 1) / 2.0
    a, b = _BRAIN_RX * size, _BRAIN_RY * size
    return ((xs - cx) / a) ** 2 + ((ys - cy) / b) ** 2 <= 1.0


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    xs, ys = _grid(size)
    brain = _brain_mask(size)
    img = 0.01 + np.abs(rng.normal(0.0, 0.01, (size, size)))
    # fixed anatomy: smooth vertical gradient plus a central ventricle dip
    cx = cy = (size - 1) / 2.0
    inside = 0.28 + 0.10 * (ys / size - 0.5)
    inside = inside - 0.04 * np.exp(-(((xs - cx) ** 2 + (ys - 0.42 * size) ** 2) / (2 * (0.11 * size) ** 2)))
    inside = inside + rng.normal(0.0, 0.012, (size, size))
    img[brain] = inside[brain]
    return img


def _area_px(area_cm2: float, spacing_mm: float) -> float:
    return area_cm2 * 100.0 / (spacing_mm * spacing_mm)


def _rim_band(mask: np.ndarray, width: int = 2) -> np.ndarray:
    interior = ndimage.binary_erosion(mask, iterations=width)
    return mask & ~interior


def _glioma(size, spacing_mm, rng):
    """Star-convex irregular blob; returns (mask, intensity, ring_flag)."""
    xs, ys = _grid(size)
    cx = cy = (size - 1) / 2.0
    lo, hi = CLASS_AREA_CM2[0]
    target = _area_px(rng.uniform(lo + _AREA_MARGIN_CM2 + 0.13, hi - _AREA_MARGIN_CM2 - 0.13),
                      spacing_mm)
    ring = bool(rng.random() < 0.5)
    brain = _brain_mask(size)
    amps = rng.uniform(-0.09, 0.09, 5)
    phases = rng.uniform(0.0, 2 * np.pi, 5)
    for _ in range(40):
        side = 1.0 if rng.random() < 0.5 else -1.0
        ox = cx + side * rng.uniform(0.14, 0.24) * size
        oy = cy + rng.uniform(-0.14, 0.14) * size
        r0 = np.sqrt(target / np.pi)
        theta = np.arctan2(ys - oy, xs - ox)
        wobble = np.ones_like(theta)
        for k, (a, p) in enumerate(zip(amps, phases), start=2):
            wobble = wobble + a * np.cos(k * theta + p)
        dist = np.hypot(xs - ox, ys - oy)
        mask = None
        for _ in range(12):
            rb = r0 * wobble
            mask = dist <= rb
            area = int(mask.sum())
            if area == 0:
                r0 *= 1.3
                continue
            if abs(area - target) <= max(4, 0.02 * target):
                break
            r0 *= np.sqrt(target / area)
        area_cm2 = mask.sum() * spacing_mm**2 / 100.0
        centroid_x = xs[mask].mean()
        off_frac = abs(centroid_x - size / 2.0) / size
        if (
            lo + _AREA_MARGIN_CM2 <= area_cm2 <= hi - _AREA_MARGIN_CM2
            and np.all(brain[mask])
            and off_frac >= 0.125
        ):
            intensity = np.zeros((size, size))
            noise = rng.normal(0.0, 0.012, (size, size))
            if ring:
                band = _rim_band(mask, 3)
                intensity[mask] = 0.38
                intensity[band] = 0.95
            else:
                intensity[mask] = 0.88
            return mask, np.clip(intensity + noise, 0.0, 1.0), ring
    raise GenerationError("could not place a glioma-like lesion inside the brain ellipse")


def _meningioma(size, spacing_mm, rng):
    """Convex lens clipped by the brain boundary, with a bright rim."""
    xs, ys = _grid(size)
    cx = cy = (size - 1) / 2.0
    a, b = _BRAIN_RX * size, _BRAIN_RY * size
    lo, hi = CLASS_AREA_CM2[1]
    target = _area_px(rng.uniform(lo + _AREA_MARGIN_CM2 + 0.08, hi - _AREA_MARGIN_CM2 - 0.08),
                      spacing_mm)
    brain = _brain_mask(size)
    for _ in range(40):
        psi = rng.uniform(0.0, 2 * np.pi)
        bx = cx + a * np.cos(psi)
        by = cy + b * np.sin(psi)
        nx, ny = np.cos(psi) / a, np.sin(psi) / b
        norm = np.hypot(nx, ny)
        nx, ny = nx / norm, ny / norm
        r = np.sqrt(target / np.pi) * 1.35
        mask = None
        for _ in range(12):
            ox, oy = bx - nx * r * 0.45, by - ny * r * 0.45
            disk = (xs - ox) ** 2 + (ys - oy) ** 2 <= r * r
            mask = disk & brain
            area = int(mask.sum())
            if area == 0:
                r *= 1.3
                continue
            if abs(area - target) <= max(4, 0.02 * target):
                break
            r *= np.sqrt(target / area)
        area_cm2 = mask.sum() * spacing_mm**2 / 100.0
        interior = ndimage.binary_erosion(mask, iterations=2)
        if lo + _AREA_MARGIN_CM2 <= area_cm2 <= hi - _AREA_MARGIN_CM2 and interior.sum() >= 8:
            intensity = np.zeros((size, size))
            intensity[mask] = 0.97       # enhancing rim by default
            intensity[interior] = 0.62   # interior below the rim
            noise = rng.normal(0.0, 0.01, (size, size))
            return mask, np.clip(intensity + noise, 0.0, 1.0), False
    raise GenerationError("could not place a meningioma-like lens on the brain boundary")


def _pituitary(size, spacing_mm, rng):
    """Compact bright midline ellipse in the sellar region."""
    xs, ys = _grid(size)
    cx = cy = (size - 1) / 2.0
    lo, hi = CLASS_AREA_CM2[2]
    target = _area_px(rng.uniform(lo + _AREA_MARGIN_CM2 / 2 + 0.03, hi - _AREA_MARGIN_CM2 / 2 - 0.03),
                      spacing_mm)
    for _ in range(40):
        ox = cx + rng.uniform(-1.5, 1.5)
        oy = cy + rng.uniform(0.04, 0.12) * size
        e = rng.uniform(0.85, 1.2)
        r = np.sqrt(target / np.pi)
        mask = None
        for _ in range(12):
            rx, ry = r * np.sqrt(e), r / np.sqrt(e)
            mask = ((xs - ox) / rx) ** 2 + ((ys - oy) / ry) ** 2 <= 1.0
            area = int(mask.sum())
            if area == 0:
                r *= 1.3
                continue
            if abs(area - target) <= 2:
                break
            r *= np.sqrt(target / area)
        area_cm2 = mask.sum() * spacing_mm**2 / 100.0
        off_frac = abs(xs[mask].mean() - size / 2.0) / size
        if lo + 0.03 <= area_cm2 <= hi - 0.03 and off_frac <= 0.05:
            intensity = np.zeros((size, size))
            intensity[mask] = 0.95
            noise = rng.normal(0.0, 0.01, (size, size))
            return mask, np.clip(intensity + noise, 0.0, 1.0), False
    raise GenerationError("could not place a pituitary-like lesion on the midline")


_MAKERS = {0: _glioma, 1: _meningioma, 2: _pituitary}


def generate_phantoms(
    n_per_class: int, size: int = 64, spacing_mm: float = 1.0, seed: int = 0
) -> PhantomDataset:
    """Balanced dataset of ``3 * n_per_class`` phantoms with exact ROI masks."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if size < 32:
        raise ValueError(f"size must be >= 32, got {size}")
    brain_px = np.pi * (_BRAIN_RX * size) * (_BRAIN_RY * size)
    worst = max(_area_px(hi, spacing_mm) for _, hi in CLASS_AREA_CM2.values())
    if worst > 0.45 * brain_px:
        raise GenerationError(
            f"largest lesion ({worst:.0f} px) does not fit a {size}x{size} brain "
            f"at {spacing_mm} mm/px"
        )
    samples = []
    for label in (0, 1, 2):
        for i in range(n_per_class):
            rng = _rng_for(seed, label, i)
            bg = _background(size, rng)
            mask, lesion, ring = _MAKERS[label](size, spacing_mm, rng)
            img = np.where(mask, lesion, bg)
            img = np.clip(img, 0.0, 1.0)
            img = np.round(img * 65535.0) / 65535.0  # snap to the 16-bit storage grid
            samples.append(
                Sample(
                    image=ImageGray(img, spacing_mm),
                    label=label,
                    id=f"{CLASS_NAMES[label]}_{i:04d}",
                    mask=RoiMask(mask),
                )
            )
    return PhantomDataset(
        samples=samples,
        seed=seed,
        params={"n_per_class": n_per_class, "size": size, "spacing_mm": spacing_mm},
    )
