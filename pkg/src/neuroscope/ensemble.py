"""Soft voting (primary) and hard voting (baseline) over member probabilities."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

TIE_EPS = 1e-12


def _check_prob_vector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"probability vector must have length 3, got shape {p.shape}")
    if np.any(p < -1e-9) or np.any(p > 1.0 + 1e-9) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError(f"invalid probability vector {p.tolist()}")
    return p


@dataclass
class EnsemblePrediction:
    member_probs: list
    averaged: list
    predicted_class: int
    tie_broken: bool

    def to_json(self) -> dict:
        return asdict(self)


def soft_vote(probs) -> EnsemblePrediction:
    """Average member distributions; argmax with lowest-index tie-break."""
    if len(probs) == 0:
        raise ValueError("soft_vote needs at least one member")
    members = [_check_prob_vector(p) for p in probs]
    averaged = np.mean(members, axis=0)
    predicted = int(np.argmax(averaged))  # argmax returns the lowest index on ties
    top_two = np.sort(averaged)[::-1][:2]
    tie = bool(len(averaged) > 1 and (top_two[0] - top_two[1]) <= TIE_EPS)
    return EnsemblePrediction(
        member_probs=[m.tolist() for m in members],
        averaged=averaged.tolist(),
        predicted_class=predicted,
        tie_broken=tie,
    )


def hard_vote(labels, fallback_probs) -> int:
    """Strict majority; falls back to soft voting when there is none."""
    if len(labels) == 0:
        raise ValueError("hard_vote needs at least one member")
    if len(labels) != len(fallback_probs):
        raise ValueError("labels and fallback_probs must have the same length")
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=3)
    winner = int(np.argmax(counts))
    if counts[winner] * 2 > len(labels):
        return winner
    return soft_vote(fallback_probs).predicted_class


def soft_vote_batch(member_prob_arrays) -> np.ndarray:
    """Row-wise averaged distribution for a list of [N,3] member outputs."""
    stack = np.stack([np.asarray(a, dtype=np.float64) for a in member_prob_arrays])
    return stack.mean(axis=0)
