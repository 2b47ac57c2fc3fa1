"""Dataset value types: grayscale images, ROI masks, labeled samples."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

CLASS_NAMES = ("glioma", "meningioma", "pituitary")
LABEL_BY_NAME = {name: i for i, name in enumerate(CLASS_NAMES)}


@dataclass
class ImageGray:
    """Row-major grayscale raster with isotropic pixel spacing in mm."""

    pixels: np.ndarray  # (H, W) float64
    spacing_mm: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {self.pixels.shape}")
        if self.height < 8 or self.width < 8:
            raise ValueError(f"image must be at least 8x8, got {self.height}x{self.width}")
        if not self.spacing_mm > 0:
            raise ValueError(f"spacing_mm must be positive, got {self.spacing_mm}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class RoiMask:
    """Binary region-of-interest raster paired with an image."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits).astype(bool)
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.bits.shape}")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def area_cm2(self, spacing_mm: float) -> float:
        return float(self.bits.sum()) * spacing_mm * spacing_mm / 100.0


@dataclass
class Sample:
    image: ImageGray
    label: int
    id: str
    mask: Optional[RoiMask] = None

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise ValueError(f"label must be 0/1/2, got {self.label}")
        if self.mask is not None and (
            self.mask.height != self.image.height or self.mask.width != self.image.width
        ):
            raise ValueError(
                f"mask {self.mask.height}x{self.mask.width} does not match "
                f"image {self.image.height}x{self.image.width} for sample {self.id!r}"
            )


@dataclass
class PhantomDataset:
    samples: list
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def ids(self) -> list:
        return [s.id for s in self.samples]

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(f"no sample with id {sample_id!r}")
