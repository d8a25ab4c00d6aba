"""Post-processing that standardises heterogeneous proposal outputs.

Every operation returns a subsequence selection of its input: surviving
boxes are the identical objects, never mutated copies. Score ties always
break by input rank so results are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import ProposalSet, iou_matrix

__all__ = [
    "CalibrationTable",
    "dedup",
    "top_k",
    "random_k",
    "calibrate_count",
    "nms",
    "adaptive_nms",
    "adaptive_nms_thresholds",
]


@dataclass(frozen=True)
class CalibrationTable:
    """Observed (parameter value, mean proposal count) pairs of a method
    whose output size is only indirectly controllable."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.points) < 2:
            raise ValueError("calibration needs at least two observations")
        counts = [c for _, c in self.points]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("observed counts must be strictly ascending")


def calibrate_count(table: CalibrationTable, target_k: float) -> float:
    """Parameter value whose expected proposal count is ``target_k``,
    by piecewise-linear interpolation of the inverse count->parameter map."""
    params = np.array([p for p, _ in table.points], dtype=float)
    counts = np.array([c for _, c in table.points], dtype=float)
    if not counts[0] <= target_k <= counts[-1]:
        raise ValueError(
            f"target count {target_k} outside observed range [{counts[0]}, {counts[-1]}]"
        )
    return float(np.interp(target_k, counts, params))


def _rank_order(ps: ProposalSet) -> np.ndarray:
    """Indices in rank order: descending score (injected boxes first), ties
    by input position; pure input order for unscored rank-ordered sets."""
    if ps.scored or any(it.injected for it in ps.items):
        scores = ps.scores_array()
        if np.isnan(scores).any():
            raise ValueError("proposal set mixes scored and unscored items")
        return np.argsort(-scores, kind="stable")
    if ps.ordering_meaningful:
        return np.arange(len(ps.items))
    raise ValueError("operation needs scored or rank-ordered proposals")


def dedup(ps: ProposalSet) -> ProposalSet:
    """Collapse bit-identical boxes, keeping the highest-scoring copy
    (earliest on ties) and preserving relative order.

    Near-duplicates are left alone; collapsing those is NMS territory.
    """
    best: dict[tuple[float, float, float, float], int] = {}
    scores = ps.scores_array()
    for i, item in enumerate(ps.items):
        key = item.box.as_tuple()
        prev = best.get(key)
        if prev is None:
            best[key] = i
        else:
            s_prev, s_new = scores[prev], scores[i]
            if not np.isnan(s_new) and not np.isnan(s_prev) and s_new > s_prev:
                best[key] = i
    keep = sorted(best.values())
    return ps.replace_items(ps.items[i] for i in keep)


def top_k(ps: ProposalSet, k: int) -> ProposalSet:
    """First k proposals by score (or by rank for sorted unscored sets)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    order = _rank_order(ps)[:k]
    out = ps.replace_items(ps.items[int(i)] for i in order)
    return ProposalSet(out.image_id, out.items, ordering_meaningful=True)


def random_k(ps: ProposalSet, k: int, seed: int) -> ProposalSet:
    """Uniform sample of k proposals without replacement, deterministic in
    the seed; input relative order is preserved."""
    if k < 0:
        raise ValueError("k must be >= 0")
    n = len(ps.items)
    if k >= n:
        return ps
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=k, replace=False))
    return ps.replace_items(ps.items[int(i)] for i in keep)


def _survivor_scan(
    boxes: np.ndarray, order: np.ndarray, thresholds: np.ndarray, limit: int
) -> list[int]:
    """Greedy descending-rank scan; candidate i survives iff its IoU with
    every earlier survivor is <= the threshold in effect at that moment."""
    kept: list[int] = []
    kept_boxes = np.empty((min(limit, len(order)), 4))
    for idx in order:
        i = int(idx)
        beta = thresholds[len(kept)]
        if kept and iou_matrix(boxes[i : i + 1], kept_boxes[: len(kept)]).max() > beta:
            continue
        kept_boxes[len(kept)] = boxes[i]
        kept.append(i)
        if len(kept) == limit:
            break
    return kept


def nms(ps: ProposalSet, threshold: float) -> ProposalSet:
    """Standard greedy non-maximum suppression at a fixed IoU threshold.

    A proposal is suppressed when its IoU with an already kept, higher
    ranked proposal strictly exceeds the threshold.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    order = _rank_order(ps)
    boxes = ps.boxes_array()
    flat = np.full(len(order) + 1, threshold)
    keep = _survivor_scan(boxes, order, flat, limit=len(order))
    out = ps.replace_items(ps.items[i] for i in keep)
    return ProposalSet(out.image_id, out.items, ordering_meaningful=True)


def adaptive_nms_thresholds(n_keeps: int, beta0: float, eta: float) -> np.ndarray:
    """Decaying threshold schedule: entry i applies once i boxes are kept.

    Computed by the same sequential product the scan performs, so the values
    are bit-identical to the thresholds observed during suppression.
    """
    return np.cumprod(np.concatenate([[beta0], np.full(n_keeps, eta)]))


def adaptive_nms(
    ps: ProposalSet, k: int, beta0: float = 0.90, eta: float = 0.9996
) -> ProposalSet:
    """Non-maximum suppression with a multiplicatively decaying threshold.

    The scan starts permissive to sample densely around top candidates and
    tightens after every acceptance, trading duplicates for diversity; it
    stops after k acceptances. With eta = 1 this reduces to plain
    :func:`nms` truncated to k survivors.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < beta0 <= 1.0 or not 0.0 < eta <= 1.0:
        raise ValueError("beta0 and eta must lie in (0, 1]")
    order = _rank_order(ps)
    boxes = ps.boxes_array()
    schedule = adaptive_nms_thresholds(min(k, len(order)), beta0, eta)
    keep = _survivor_scan(boxes, order, schedule, limit=k)
    out = ps.replace_items(ps.items[i] for i in keep)
    return ProposalSet(out.image_id, out.items, ordering_meaningful=True)
