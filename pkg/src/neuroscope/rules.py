"""Clinical Decision Rule Overlay (CDRO).

Region features are computed from a binary mask (ground truth or thresholded
saliency) plus the grayscale image, then three symbolic rules fire on
location, morphology and enhancement:

    R1  ring-enhancing and area > 4 cm^2          -> glioblastoma-suggestive
    R2  non-ring, 2-4 cm^2, off the midline       -> glioma
    R3  on the midline and area < 1 cm^2          -> pituitary adenoma

The rules are post hoc: this module never feeds back into training or
prediction (it imports neither).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from skimage.morphology import convex_hull_image

from .data.types import CLASS_NAMES

RING_THRESHOLD = 1.3
MIDLINE_TOL = 0.10
DARK_EXTERIOR = 0.15


@dataclass
class RegionFeatures:
    area_cm2: float
    centroid: tuple          # (x, y) in pixels
    midline_offset_frac: float
    ring_score: float
    touches_boundary: bool
    convexity: float

    def to_json(self) -> dict:
        d = asdict(self)
        d["centroid"] = list(self.centroid)
        return d


@dataclass
class RuleResult:
    rule_id: str
    triggered: bool
    description: str
    implied_class: Optional[int] = None
    matches_prediction: Optional[bool] = None

    def to_json(self) -> dict:
        return asdict(self)


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labeled, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n <= 1:
        return mask
    sizes = ndimage.sum_labels(np.ones_like(mask, dtype=np.int64), labeled, range(1, n + 1))
    return labeled == (int(np.argmax(sizes)) + 1)


def region_features(image: np.ndarray, mask: np.ndarray, spacing_mm: float = 1.0) -> RegionFeatures:
    """Features of the largest connected component of ``mask``."""
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if image.shape != mask.shape:
        raise ValueError(f"image {image.shape} and mask {mask.shape} differ")
    if not mask.any():
        raise ValueError("mask is empty")
    comp = _largest_component(mask)
    h, w = comp.shape
    ys, xs = np.nonzero(comp)
    count = xs.size
    area_cm2 = count * spacing_mm * spacing_mm / 100.0
    cx = float(xs.mean())
    cy = float(ys.mean())
    midline_offset = abs(cx - w / 2.0) / w

    interior = ndimage.binary_erosion(comp, iterations=2)
    band = comp & ~interior
    if interior.any():
        interior_mean = float(image[interior].mean())
        ring_score = float(image[band].mean()) / interior_mean if interior_mean > 0 else 0.0
    else:
        ring_score = 0.0

    ringpx = ndimage.binary_dilation(comp) & ~comp
    edge = comp[0, :].any() or comp[-1, :].any() or comp[:, 0].any() or comp[:, -1].any()
    touches = bool(edge or (ringpx.any() and float(image[ringpx].min()) < DARK_EXTERIOR))

    hull = convex_hull_image(comp)
    convexity = count / float(hull.sum())
    return RegionFeatures(
        area_cm2=area_cm2,
        centroid=(cx, cy),
        midline_offset_frac=midline_offset,
        ring_score=ring_score,
        touches_boundary=touches,
        convexity=convexity,
    )


def evaluate_rules(
    features: RegionFeatures,
    prediction: Optional[int] = None,
    ring_threshold: float = RING_THRESHOLD,
    midline_tol: float = MIDLINE_TOL,
) -> list:
    """All three rule results; at most one can trigger for a region."""
    a = features.area_cm2
    ring = features.ring_score >= ring_threshold
    midline = features.midline_offset_frac <= midline_tol

    r1 = ring and a > 4.0
    r2 = (not ring) and 2.0 <= a <= 4.0 and not midline
    r3 = midline and a < 1.0
    assert r1 + r2 + r3 <= 1, "rule guards must be mutually exclusive"

    def result(rule_id, triggered, summary, diagnosis, implied):
        desc = f"Rule {rule_id[1]} activated: {summary} + area = {a:.1f} cm² → {diagnosis} probable" if triggered else ""
        matches = None
        if triggered and prediction is not None:
            matches = bool(implied == prediction)
        return RuleResult(
            rule_id=rule_id,
            triggered=triggered,
            description=desc,
            implied_class=implied if triggered else None,
            matches_prediction=matches,
        )

    return [
        # glioblastoma is a glioma subtype, so R1 maps to the glioma label
        result("R1_glioblastoma", r1, "ring-enhancing region", "glioblastoma", 0),
        result("R2_glioma", r2, "non-ring-enhancing hemispheric lesion", "glioma", 0),
        result("R3_pituitary", r3, "midline sellar region", "pituitary adenoma", 2),
    ]


def triggered_rule(results) -> Optional[RuleResult]:
    for r in results:
        if r.triggered:
            return r
    return None


def render_rules_table(rows) -> str:
    """Aligned text in the case-report layout.

    ``rows``: dicts with case_id, tumor_type, prediction, rule results list.
    """
    headers = [
        "Case ID",
        "Tumor Type",
        "Model Prediction",
        "Rule Triggered",
        "Rule Description",
        "Prediction Matches Rule",
    ]
    table = []
    for row in rows:
        hit = triggered_rule(row["rules"])
        table.append(
            [
                row["case_id"],
                row["tumor_type"],
                CLASS_NAMES[row["prediction"]],
                "Yes" if hit else "No",
                hit.description if hit else "-",
                ("Yes" if hit.matches_prediction else "No") if hit else "N/A",
            ]
        )
    cols = list(zip(*([headers] + table)))
    widths = [max(len(str(c)) for c in col) for col in cols]
    lines = [" | ".join(str(h).ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("-+-".join("-" * wd for wd in widths))
    for r in table:
        lines.append(" | ".join(str(c).ljust(widths[i]) for i, c in enumerate(r)).rstrip())
    return "\n".join(lines)
