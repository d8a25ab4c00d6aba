"""Bipartite assignment of proposals to target boxes.

Matching is injective: one proposal cannot cover two targets. The production
path is greedy by descending IoU; the optimal-assignment routines exist as
reference oracles for small instances only.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .boxes import BBox, _iou_matrix_into, boxes_to_array, iou_matrix

__all__ = [
    "MatchResult",
    "greedy_match",
    "best_overlap",
    "exact_match_value",
    "exact_match_count",
]


@dataclass(frozen=True)
class MatchResult:
    """Per-target outcome of an injective matching.

    ``gt_iou[i]`` is the IoU of target i with its assigned candidate and 0
    when unmatched; ``assignment[i]`` is the candidate index or None.
    """

    gt_iou: tuple[float, ...]
    assignment: tuple[Optional[int], ...]

    def __post_init__(self) -> None:
        used = [a for a in self.assignment if a is not None]
        if len(used) != len(set(used)):
            raise ValueError("assigned candidate indices must be pairwise distinct")
        for v, a in zip(self.gt_iou, self.assignment):
            if (v > 0) != (a is not None):
                raise ValueError("gt_iou must be positive exactly for matched targets")

    @property
    def matched_count(self) -> int:
        return sum(a is not None for a in self.assignment)


def _pair_matrix(candidates: Sequence[BBox], targets: Sequence[BBox]) -> np.ndarray:
    """(T, C) IoU matrix, targets along rows."""
    return iou_matrix(boxes_to_array(targets), boxes_to_array(candidates))


_scratch = threading.local()


def _pair_matrix_scratch(candidates: Sequence[BBox], targets: Sequence[BBox]) -> np.ndarray:
    """Like :func:`_pair_matrix` but computed in per-thread reusable
    buffers: per-image matching at a fixed budget hits the same shape over
    and over, and reallocating multi-megabyte matrices dominates runtime.
    The result is only valid until the next call on the same thread."""
    t_arr = boxes_to_array(targets)
    c_arr = boxes_to_array(candidates)
    shape = (t_arr.shape[0], c_arr.shape[0])
    buffers = getattr(_scratch, "buffers", None)
    if buffers is None or buffers[0].shape != shape:
        buffers = tuple(np.empty(shape) for _ in range(3))
        _scratch.buffers = buffers
    return _iou_matrix_into(t_arr, c_arr, buffers)


def greedy_match(
    candidates: Sequence[BBox],
    targets: Sequence[BBox],
    min_iou: float = 0.0,
) -> MatchResult:
    """Greedy injective matching by descending IoU.

    All candidate-target pairs with IoU > ``min_iou`` are visited in
    descending IoU order (ties broken by target index, then candidate index)
    and accepted whenever both endpoints are still free. The result is a
    maximal matching under that order.
    """
    if not 0.0 <= min_iou < 1.0:
        raise ValueError("min_iou must lie in [0, 1)")
    n_t, n_c = len(targets), len(candidates)
    gt_iou = np.zeros(n_t)
    assignment: list[Optional[int]] = [None] * n_t
    if n_t and n_c:
        flat = _pair_matrix_scratch(candidates, targets).ravel()
        keep = np.flatnonzero(flat > min_iou)
        vals = flat[keep]
        cand_free = np.ones(n_c, dtype=bool)
        slots = min(n_t, n_c)
        # Visit pairs in descending IoU (ties by target then candidate
        # index, i.e. by flattened position). Materialising only the top
        # batch at a time avoids a full sort: matching usually saturates
        # long before the low-overlap tail would be reached.
        chunk = max(256, 4 * slots)
        while keep.size and slots:
            if keep.size <= chunk:
                batch, batch_vals = keep, vals
                keep = keep[:0]
            else:
                top = np.argpartition(-vals, chunk - 1)[:chunk]
                vmin = vals[top].min()
                strict = top[vals[top] > vmin]
                # Process values strictly above the partition boundary now;
                # boundary ties are handled as one global batch so the
                # flat-index tie order stays exact.
                sel = strict if strict.size else np.flatnonzero(vals == vmin)
                batch, batch_vals = keep[sel], vals[sel]
                rest = np.ones(keep.size, dtype=bool)
                rest[sel] = False
                keep, vals = keep[rest], vals[rest]
                chunk *= 2
            for pos in np.lexsort((batch, -batch_vals)):
                idx = int(batch[pos])
                t, c = divmod(idx, n_c)
                if assignment[t] is None and cand_free[c]:
                    assignment[t] = c
                    cand_free[c] = False
                    gt_iou[t] = batch_vals[pos]
                    slots -= 1
                    if slots == 0:
                        break
    return MatchResult(tuple(float(v) for v in gt_iou), tuple(assignment))


def best_overlap(candidates: Sequence[BBox], targets: Sequence[BBox]) -> list[float]:
    """Per-target maximum IoU over all candidates (non-injective); 0 when
    there are no candidates."""
    if not len(targets):
        return []
    if not len(candidates):
        return [0.0] * len(targets)
    return [float(v) for v in _pair_matrix(candidates, targets).max(axis=1)]


def exact_match_value(
    candidates: Sequence[BBox],
    targets: Sequence[BBox],
    max_size: int = 10,
) -> float:
    """Maximum total IoU over injective assignments (reference oracle).

    Solved by optimal assignment; refuses instances larger than
    ``max_size`` per side since this is not a production path.
    """
    _check_oracle_size(len(candidates), len(targets), max_size)
    if not len(candidates) or not len(targets):
        return 0.0
    ious = _pair_matrix(candidates, targets)
    rows, cols = linear_sum_assignment(ious, maximize=True)
    return float(ious[rows, cols].sum())


def exact_match_count(
    candidates: Sequence[BBox],
    targets: Sequence[BBox],
    min_iou: float = 0.0,
    max_size: int = 10,
) -> int:
    """Maximum number of matchable pairs with IoU > ``min_iou`` (reference
    oracle via optimal assignment on the 0/1 pair indicator)."""
    _check_oracle_size(len(candidates), len(targets), max_size)
    if not len(candidates) or not len(targets):
        return 0
    admissible = (_pair_matrix(candidates, targets) > min_iou).astype(float)
    rows, cols = linear_sum_assignment(admissible, maximize=True)
    return int(admissible[rows, cols].sum())


def _check_oracle_size(n_c: int, n_t: int, max_size: int) -> None:
    if n_c > max_size or n_t > max_size:
        raise ValueError(
            f"oracle instance {n_c}x{n_t} exceeds the configured bound {max_size}"
        )
