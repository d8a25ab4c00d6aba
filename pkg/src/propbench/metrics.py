"""Scalar and curve metrics over matched-IoU multisets.

All scalar metrics use closed forms so results do not depend on any plotting
grid; the threshold grids only matter for emitted curve files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "RecallCurve",
    "CurveFamily",
    "default_thresholds",
    "recall_curve",
    "recall_at",
    "average_recall",
    "abo",
    "vus",
    "size_bin_edges",
    "assign_size_bins",
    "size_binned_mean",
    "pearson",
]


@dataclass(frozen=True)
class RecallCurve:
    """Step function recall(o) sampled on a strictly ascending IoU grid."""

    thresholds: tuple[float, ...]
    recall: tuple[float, ...]

    def __post_init__(self) -> None:
        t = np.asarray(self.thresholds, dtype=float)
        r = np.asarray(self.recall, dtype=float)
        if t.size != r.size:
            raise ValueError("thresholds and recall must have equal length")
        if t.size == 0:
            raise ValueError("a recall curve needs at least one threshold")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly ascending")
        if np.any((t < 0) | (t > 1)) or np.any((r < 0) | (r > 1)):
            raise ValueError("thresholds and recall must lie in [0, 1]")
        if np.any(np.diff(r) > 0):
            raise ValueError("recall must be non-increasing in the threshold")


@dataclass(frozen=True)
class CurveFamily:
    """One recall curve per proposal budget k, on a shared threshold grid."""

    proposal_counts: tuple[int, ...]
    curves: tuple[RecallCurve, ...]

    def __post_init__(self) -> None:
        ks = self.proposal_counts
        if len(ks) != len(self.curves) or not ks:
            raise ValueError("need one curve per proposal count")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("proposal counts must be strictly ascending")
        grids = {c.thresholds for c in self.curves}
        if len(grids) > 1:
            raise ValueError("curves must share one threshold grid")
        for prev, nxt in zip(self.curves, self.curves[1:]):
            if any(b < a for a, b in zip(prev.recall, nxt.recall)):
                raise ValueError("recall must be non-decreasing in the budget k")


def default_thresholds(lo: float = 0.5, hi: float = 1.0, step: float = 0.005) -> tuple[float, ...]:
    """Reporting grid for curve files (scalars never use it)."""
    n = int(round((hi - lo) / step))
    return tuple(float(v) for v in np.linspace(lo, hi, n + 1))


def _as_ious(matched_ious: Sequence[float]) -> np.ndarray:
    arr = np.asarray(matched_ious, dtype=float)
    if arr.size == 0:
        raise ValueError("matched-IoU set is empty (no ground truth)")
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("matched IoUs must lie in [0, 1]")
    return arr


def recall_curve(
    matched_ious: Sequence[float],
    thresholds: Sequence[float] | None = None,
) -> RecallCurve:
    """Fraction of targets with matched IoU >= o, for each threshold o."""
    ious = _as_ious(matched_ious)
    grid = tuple(thresholds) if thresholds is not None else default_thresholds()
    srt = np.sort(ious)
    # recall(o) = #(iou >= o) / n via one binary search per threshold
    counts = srt.size - np.searchsorted(srt, np.asarray(grid), side="left")
    return RecallCurve(grid, tuple(float(c) / srt.size for c in counts))


def recall_at(matched_ious: Sequence[float], threshold: float) -> float:
    """Single-point recall, inclusive at the threshold."""
    ious = _as_ious(matched_ious)
    return float(np.count_nonzero(ious >= threshold)) / ious.size


def average_recall(
    matched_ious: Sequence[float], lo: float = 0.5, hi: float = 1.0
) -> float:
    """Normalised integral of recall over IoU in [lo, hi], in closed form.

    With the default bounds this is the average recall score; with (0, 1) it
    reduces to the mean matched IoU, which is the repeatability integrand.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("need 0 <= lo < hi <= 1")
    ious = _as_ious(matched_ious)
    contrib = np.minimum(np.maximum(ious - lo, 0.0), hi - lo)
    return float(contrib.sum() / (ious.size * (hi - lo)))


def abo(best_overlaps: Sequence[float]) -> float:
    """Mean per-target best overlap (non-injective matching upstream)."""
    return float(_as_ious(best_overlaps).mean())


def vus(family: CurveFamily) -> float:
    """Volume under the recall surface over (IoU threshold, budget k).

    Each curve is integrated by the trapezoidal rule over its grid and
    normalised by the grid span, then averaged over the budgets, so a
    perfect family scores exactly 1.
    """
    t = np.asarray(family.curves[0].thresholds, dtype=float)
    span = t[-1] - t[0]
    if span <= 0:
        raise ValueError("threshold grid must span a positive range")
    per_k = [np.trapezoid(np.asarray(c.recall, dtype=float), t) / span for c in family.curves]
    return float(np.mean(per_k))


def size_bin_edges(sqrt_areas: Sequence[float], bins: int = 10) -> np.ndarray:
    """Interior quantile edges that split sqrt-areas into equal-count bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    arr = np.asarray(sqrt_areas, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot derive bin edges from an empty set")
    qs = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    return np.quantile(arr, qs)


def assign_size_bins(sqrt_areas: Sequence[float], edges: np.ndarray) -> np.ndarray:
    """Bin index per item; values equal to an edge fall into the lower bin."""
    return np.searchsorted(np.asarray(edges, dtype=float), np.asarray(sqrt_areas, dtype=float), side="left")


def size_binned_mean(
    reference_areas: Sequence[float],
    per_item_scores: Sequence[float],
    bins: int = 10,
) -> float:
    """Unweighted mean over non-empty area groups of the per-group score mean.

    Groups are equal-count quantile bins of sqrt(area), so the result is not
    dominated by whichever window sizes happen to be most frequent.
    """
    areas = np.asarray(reference_areas, dtype=float)
    scores = np.asarray(per_item_scores, dtype=float)
    if areas.size != scores.size:
        raise ValueError("areas and scores must have equal length")
    if areas.size == 0:
        raise ValueError("empty input")
    sqrt_areas = np.sqrt(areas)
    idx = assign_size_bins(sqrt_areas, size_bin_edges(sqrt_areas, bins))
    group_means = [scores[idx == g].mean() for g in range(bins) if np.any(idx == g)]
    return float(np.mean(group_means))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size:
        raise ValueError("sequences must have equal length")
    if x.size < 2:
        raise ValueError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0:
        raise ValueError("zero variance in at least one input")
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))
