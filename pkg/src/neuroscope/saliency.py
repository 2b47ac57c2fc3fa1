"""Grad-CAM++ saliency from the "cam_target" activation.

The channel weights use the exponential-score form of Grad-CAM++ (score
Y = exp(S)), under which the second/third-order terms reduce to powers of the
first-order gradient g = dS/dA:

    alpha_ij = g_ij^2 / (2 g_ij^2 + sum(A) * g_ij^3 + eps)
    w_k      = sum_ij alpha_ij * relu(g_ij)
    map      = relu(sum_k w_k A^k),  bilinearly upsampled, min-max normalized

Thresholding keeps the top ceil(frac * H * W) values, ties resolved in
row-major order so the count is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from . import engine as E
from . import networks
from .data.preprocess import normalize_minmax_array, resize_bilinear_array
from .engine import Tensor
from .networks import ModelHandle

ALPHA_EPS = 1e-8
DEFAULT_THRESHOLD = 0.20


@dataclass
class SaliencyMap:
    values: np.ndarray        # (H, W) in [0, 1], input resolution
    source_class: int
    layer: str
    threshold_frac: float
    binary: np.ndarray        # thresholded mask at threshold_frac


@dataclass
class OverlapScores:
    dice: float
    iou: float
    both_empty: bool = False

    def to_json(self) -> dict:
        return {"dice": self.dice, "iou": self.iou, "both_empty": self.both_empty}


def gradcam_weights(activation: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Per-channel Grad-CAM++ weights from [C,h,w] activation and gradient."""
    g2 = grad * grad
    g3 = g2 * grad
    sum_a = activation.sum(axis=(1, 2), keepdims=True)
    denom = 2.0 * g2 + sum_a * g3 + ALPHA_EPS
    alpha = np.where(np.abs(denom) < ALPHA_EPS, 0.0, g2 / denom)
    return (alpha * np.maximum(grad, 0.0)).sum(axis=(1, 2))


def gradcam_pp(
    model: ModelHandle,
    image: np.ndarray,
    class_index: int,
    layer: str = "cam_target",
    threshold_frac: float = DEFAULT_THRESHOLD,
) -> SaliencyMap:
    """Class-activation map for one grayscale image at input resolution."""
    if not 0 <= class_index < networks.NUM_CLASSES:
        raise ValueError(f"class_index must be 0..2, got {class_index}")
    for name, t in model.params.items():
        if not np.all(np.isfinite(t.data)):
            raise ValueError(f"model parameter {name!r} contains non-finite values")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got shape {image.shape}")
    h, w = image.shape

    batch = Tensor(image[None, None, :, :])
    with E.Tape() as tape:
        logits, _, acts = networks.forward(model, batch, training=False)
        if layer not in acts:
            raise KeyError(f"unknown activation layer {layer!r}")
        score = E.select_scalar(logits, 0, class_index)
    act_node = acts[layer]
    grad = E.grad_wrt_activation(score, act_node).data[0]
    activation = act_node.data[0]
    tape.release()

    weights = gradcam_weights(activation, grad)
    raw = np.maximum((weights[:, None, None] * activation).sum(axis=0), 0.0)
    upsampled = resize_bilinear_array(raw, h, w)
    values = normalize_minmax_array(upsampled)
    return SaliencyMap(
        values=values,
        source_class=class_index,
        layer=layer,
        threshold_frac=threshold_frac,
        binary=threshold_top_fraction(values, threshold_frac),
    )


def threshold_top_fraction(values: np.ndarray, frac: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Boolean mask of the ceil(frac * n) highest values (row-major ties)."""
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"threshold fraction must lie in (0, 1], got {frac}")
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    k = min(n, math.ceil(frac * n - 1e-9))  # guard against float noise in frac*n
    flat = values.reshape(-1)
    order = np.argsort(-flat, kind="stable")  # stable keeps row-major order on ties
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(values.shape)


def overlap(g: np.ndarray, m: np.ndarray) -> OverlapScores:
    """Dice and IoU between two binary masks; empty-vs-empty scores 1 (flagged)."""
    g = np.asarray(g).astype(bool)
    m = np.asarray(m).astype(bool)
    if g.shape != m.shape:
        raise ValueError(f"mask shapes differ: {g.shape} vs {m.shape}")
    inter = int((g & m).sum())
    size_g = int(g.sum())
    size_m = int(m.sum())
    union = size_g + size_m - inter
    if size_g == 0 and size_m == 0:
        return OverlapScores(dice=1.0, iou=1.0, both_empty=True)
    dice = 2.0 * inter / (size_g + size_m)
    iou = inter / union
    return OverlapScores(dice=dice, iou=iou)


def combine_maps(maps) -> np.ndarray:
    """Renormalized mean of several normalized saliency maps."""
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in maps])
    return normalize_minmax_array(stack.mean(axis=0))


def _jet(v: np.ndarray) -> np.ndarray:
    """Classic jet ramp; v in [0,1] -> (..., 3) floats in [0,1]."""
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def mask_contour(mask: np.ndarray) -> np.ndarray:
    """One-pixel inner boundary (4-connected erosion residue)."""
    mask = np.asarray(mask).astype(bool)
    return mask & ~ndimage.binary_erosion(mask)


def render_overlay(
    image: np.ndarray, values: np.ndarray, mask: Optional[np.ndarray] = None, alpha: float = 0.45
) -> np.ndarray:
    """Grayscale base + jet heatmap (per-pixel alpha 0.45*v) + red mask contour."""
    image = np.asarray(image, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if image.shape != values.shape:
        raise ValueError(f"image {image.shape} and map {values.shape} differ")
    base = np.repeat(np.clip(image, 0.0, 1.0)[:, :, None], 3, axis=2)
    heat = _jet(values)
    a = (alpha * values)[:, :, None]
    out = (1.0 - a) * base + a * heat
    if mask is not None:
        mask = np.asarray(mask).astype(bool)
        if mask.shape != image.shape:
            raise ValueError(f"mask {mask.shape} does not match image {image.shape}")
        out[mask_contour(mask)] = (1.0, 0.0, 0.0)
    return np.round(out * 255.0).astype(np.uint8)


def save_png(path, rgb: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(path)


def save_heatmap_pgm(path, values: np.ndarray) -> None:
    """8-bit PGM export of a normalized map."""
    u8 = np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(u8.tobytes())
