"""Detector-free analysis machinery: proposal filtering of dense
detections, ground-truth and suppression oracles, and PASCAL-style AP/mAP
so oracle effects are measurable."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import math

import numpy as np

from .boxes import Annotation, BBox, ProposalSet, ScoredBox, boxes_to_array, iou_matrix

__all__ = [
    "Detection",
    "filter_by_proposals",
    "augment_with_gt",
    "oracle_nms",
    "average_precision",
    "mean_ap",
]


@dataclass(frozen=True)
class Detection:
    """One scored, class-labelled detector output window."""

    image_id: str
    class_label: str
    box: BBox
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"detection score must be finite, got {self.score}")


def filter_by_proposals(
    dets: Sequence[Detection],
    proposals: Mapping[str, ProposalSet],
    min_iou: float = 0.8,
) -> list[Detection]:
    """Keep each detection iff some proposal in its image overlaps it with
    IoU strictly greater than ``min_iou``; NMS is the caller's next step."""
    by_image: dict[str, list[Detection]] = defaultdict(list)
    for d in dets:
        by_image[d.image_id].append(d)
    keep: set[int] = set()
    for image_id, group in by_image.items():
        ps = proposals.get(image_id)
        if ps is None or not len(ps.items):
            continue
        overlaps = iou_matrix(boxes_to_array(d.box for d in group), ps.boxes_array())
        for d, best in zip(group, overlaps.max(axis=1)):
            if best > min_iou:
                keep.add(id(d))
    return [d for d in dets if id(d) in keep]


def augment_with_gt(
    proposals: Mapping[str, ProposalSet],
    gts: Sequence[Annotation],
) -> dict[str, ProposalSet]:
    """Prepend every ground-truth box to its image's proposals, flagged as
    injected so it ranks ahead of all scored proposals.

    After augmentation every annotation has a perfect-overlap proposal, so
    average recall of the augmented sets is exactly 1.
    """
    by_image: dict[str, list[ScoredBox]] = defaultdict(list)
    for ann in gts:
        by_image[ann.image_id].append(ScoredBox(ann.box, injected=True))
    out: dict[str, ProposalSet] = dict(proposals)
    for image_id, injected in by_image.items():
        base = proposals.get(image_id)
        items = tuple(injected) + (base.items if base is not None else ())
        ordering = base.ordering_meaningful if base is not None else True
        out[image_id] = ProposalSet(image_id, items, ordering)
    return out


def _class_tp_flags(
    dets: Sequence[Detection],
    gts: Sequence[Annotation],
    iou_tp: float,
) -> tuple[np.ndarray, np.ndarray]:
    """PASCAL greedy matching for one class.

    Returns per-detection flags (tp, ignored) in the order of ``dets``.
    Detections are visited by descending score (input order on ties); each
    takes the highest-IoU ground truth of its image when that IoU reaches
    the threshold. Matches to difficult annotations are ignored rather than
    counted; crowd annotations must be excluded by the caller.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    gt_by_image: dict[str, list[Annotation]] = defaultdict(list)
    for g in gts:
        gt_by_image[g.image_id].append(g)
    boxes_by_image = {
        img: boxes_to_array(g.box for g in group) for img, group in gt_by_image.items()
    }
    used: dict[str, np.ndarray] = {
        img: np.zeros(len(group), dtype=bool) for img, group in gt_by_image.items()
    }
    tp = np.zeros(len(dets), dtype=bool)
    ignored = np.zeros(len(dets), dtype=bool)
    for i in order:
        det = dets[i]
        group = gt_by_image.get(det.image_id)
        if not group:
            continue
        overlaps = iou_matrix(boxes_to_array([det.box]), boxes_by_image[det.image_id])[0]
        j = int(np.argmax(overlaps))
        if overlaps[j] >= iou_tp:
            if group[j].difficult:
                ignored[i] = True
            elif not used[det.image_id][j]:
                used[det.image_id][j] = True
                tp[i] = True
    return tp, ignored


def oracle_nms(
    dets: Sequence[Detection],
    gts: Sequence[Annotation],
    iou_tp: float = 0.5,
) -> list[Detection]:
    """Optimal per-class suppression: drop every false positive that has any
    overlap with a same-class true positive in its image, keeping all true
    positives and all background false positives untouched."""
    by_class: dict[str, list[Detection]] = defaultdict(list)
    for d in dets:
        by_class[d.class_label].append(d)
    kept_ids: set[int] = set()
    for cls, group in by_class.items():
        cls_gts = [g for g in gts if g.class_label == cls and not g.crowd]
        tp, _ = _class_tp_flags(group, cls_gts, iou_tp)
        tp_boxes: dict[str, list[BBox]] = defaultdict(list)
        for d, flag in zip(group, tp):
            if flag:
                tp_boxes[d.image_id].append(d.box)
        for d, flag in zip(group, tp):
            if flag:
                kept_ids.add(id(d))
                continue
            anchors = tp_boxes.get(d.image_id)
            if anchors:
                overlaps = iou_matrix(boxes_to_array([d.box]), boxes_to_array(anchors))
                if overlaps.max() > 0:
                    continue
            kept_ids.add(id(d))
    return [d for d in dets if id(d) in kept_ids]


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[Annotation],
    class_label: str,
    iou_tp: float = 0.5,
    eleven_point: bool = False,
) -> Optional[float]:
    """PASCAL average precision for one class; None when the class has no
    countable ground truth.

    Difficult annotations are neither counted nor penalised, crowd
    annotations are excluded outright. The default integration is the
    all-points interpolated area; ``eleven_point`` switches to the legacy
    11-point average.
    """
    cls_gts = [g for g in gts if g.class_label == class_label and not g.crowd]
    npos = sum(not g.difficult for g in cls_gts)
    if npos == 0:
        return None
    cls_dets = [d for d in dets if d.class_label == class_label]
    if not cls_dets:
        return 0.0
    tp, ignored = _class_tp_flags(cls_dets, cls_gts, iou_tp)
    order = sorted(range(len(cls_dets)), key=lambda i: -cls_dets[i].score)
    tp_sorted = tp[order]
    counted = ~ignored[order]
    tp_cum = np.cumsum(tp_sorted[counted])
    fp_cum = np.cumsum(~tp_sorted[counted])
    if tp_cum.size == 0:
        return 0.0
    recall = tp_cum / npos
    precision = tp_cum / (tp_cum + fp_cum)
    if eleven_point:
        levels = np.linspace(0.0, 1.0, 11)
        vals = [
            float(precision[recall >= t].max()) if np.any(recall >= t) else 0.0
            for t in levels
        ]
        return float(np.mean(vals))
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def mean_ap(
    dets: Sequence[Detection],
    gts: Sequence[Annotation],
    iou_tp: float = 0.5,
    eleven_point: bool = False,
) -> float:
    """Mean of defined per-class APs over all annotated classes."""
    classes = sorted({g.class_label for g in gts})
    aps = [
        ap
        for cls in classes
        if (ap := average_precision(dets, gts, cls, iou_tp, eleven_point)) is not None
    ]
    if not aps:
        raise ValueError("no class has a defined average precision")
    return float(np.mean(aps))
