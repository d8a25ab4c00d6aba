"""End-to-end repeatability protocol: pair reference and perturbed proposal
sets, project the perturbed boxes back, match greedily, and score the mean
matched overlap per proposal-size group.

The per-set score is the area under the recall-versus-IoU curve on [0, 1],
which equals the mean matched IoU of the reference proposals; the overall
score averages that quantity unweighted over 10 size deciles so methods with
many small windows are not judged only on their hardest sizes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from .boxes import (
    BBox,
    ImageInfo,
    PerturbationSpec,
    ProposalSet,
    JPEG_LOSSLESS,
    boxes_to_array,
    inscribed_crop,
    project_box,
)
from .io import worker_count
from .matching import greedy_match
from .metrics import assign_size_bins, size_bin_edges
from .ops import top_k

__all__ = [
    "RepeatabilityReport",
    "RepeatabilityRun",
    "pixel_crop",
    "truncate_proposals",
    "evaluate_repeatability",
    "perturbation_suite",
    "run_repeatability_experiment",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 1000
DEFAULT_THETA_MAX = 20.0


@dataclass(frozen=True)
class RepeatabilityReport:
    """Score breakdown for one perturbation level."""

    spec: PerturbationSpec
    per_bin_scores: tuple[Optional[float], ...]
    overall: float
    matched_pairs: int
    reference_count: int

    def __post_init__(self) -> None:
        present = [s for s in self.per_bin_scores if s is not None]
        if not present:
            raise ValueError("all size bins are empty")
        if not math.isclose(self.overall, sum(present) / len(present), abs_tol=1e-12):
            raise ValueError("overall must be the mean of the present bin scores")
        if not -1e-12 <= self.overall <= 1 + 1e-12:
            raise ValueError("overall must lie in [0, 1]")


@dataclass(frozen=True)
class RepeatabilityRun:
    """Dataset-level results: one report per perturbation level, plus the
    (spec label, image id) pairs skipped for missing proposals."""

    reports: tuple[RepeatabilityReport, ...]
    missing: tuple[tuple[str, str], ...] = ()


def pixel_crop(img: ImageInfo, theta_max: float = DEFAULT_THETA_MAX) -> BBox:
    """Rotation crop rectangle quantised to whole-pixel dimensions.

    Floors the continuous inscribed crop to the integer size an image
    renderer actually produces, keeping it centred; both sides of the
    protocol (image generation and back-projection) must share this
    convention.
    """
    crop = inscribed_crop(img.width, img.height, theta_max)
    w = max(1.0, math.floor(crop.w))
    h = max(1.0, math.floor(crop.h))
    return BBox((img.width - w) / 2.0, (img.height - h) / 2.0, w, h)


def truncate_proposals(ps: ProposalSet, budget: int) -> ProposalSet:
    """Cut a proposal set to the experiment budget: top-k for scored or
    rank-ordered sets, head of the stored sequence otherwise."""
    if len(ps.items) <= budget:
        return ps
    if ps.scored or ps.ordering_meaningful:
        return top_k(ps, budget)
    return ps.replace_items(ps.items[:budget])


def _project_all(
    perturbed: ProposalSet,
    spec: PerturbationSpec,
    img: ImageInfo,
    crop: Optional[BBox],
    perturbed_img: Optional[ImageInfo],
) -> list[BBox]:
    """Back-project perturbed proposals into the reference frame; for
    rotation, drop boxes whose centre lands outside the reference image."""
    if spec.kind == "rotation":
        if crop is None:
            crop = pixel_crop(img)
        if perturbed_img is None:
            perturbed_img = ImageInfo(img.id + "#rot", int(crop.w), int(crop.h))
    elif perturbed_img is None:
        if spec.kind == "scale":
            s = spec.param
            perturbed_img = ImageInfo(
                img.id + "#scaled",
                max(1, int(round(img.width * s))),
                max(1, int(round(img.height * s))),
            )
        else:
            perturbed_img = img
    out = []
    for item in perturbed.items:
        box = project_box(item.box, spec, perturbed_img, crop)
        if spec.kind == "rotation":
            if not (0 <= box.cx <= img.width and 0 <= box.cy <= img.height):
                continue
        out.append(box)
    return out


def evaluate_repeatability(
    reference: ProposalSet,
    perturbed: ProposalSet,
    spec: PerturbationSpec,
    img: ImageInfo,
    crop: Optional[BBox] = None,
    bins: int = 10,
    bin_edges: Optional[np.ndarray] = None,
    perturbed_img: Optional[ImageInfo] = None,
) -> RepeatabilityReport:
    """Score one reference/perturbed pair for one image.

    Matching runs greedily over the full sets; the reference proposals are
    then partitioned into size deciles and each bin contributes the mean
    matched IoU of its members. Caller is responsible for truncating both
    sets to the experiment budget.
    """
    if not reference.items:
        raise ValueError("reference proposal set is empty")
    projected = _project_all(perturbed, spec, img, crop, perturbed_img)
    ref_boxes = [it.box for it in reference.items]
    result = greedy_match(projected, ref_boxes, min_iou=0.0)
    ious = np.asarray(result.gt_iou)
    arr = boxes_to_array(ref_boxes)
    sqrt_areas = np.sqrt(arr[:, 2] * arr[:, 3])
    if bin_edges is None:
        bin_edges = size_bin_edges(sqrt_areas, bins)
    idx = assign_size_bins(sqrt_areas, bin_edges)
    per_bin = tuple(
        float(ious[idx == g].mean()) if np.any(idx == g) else None for g in range(bins)
    )
    present = [s for s in per_bin if s is not None]
    return RepeatabilityReport(
        spec=spec,
        per_bin_scores=per_bin,
        overall=float(sum(present) / len(present)),
        matched_pairs=result.matched_count,
        reference_count=len(ref_boxes),
    )


_DEFAULT_GRID: dict[str, tuple[float, ...]] = {
    "none": (0.0,),
    "scale": (0.5, 0.75, 0.9, 0.95, 0.99, 1.01, 1.05, 1.1, 1.25, 1.5, 1.75, 2.0),
    "rotation": (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0),
    "blur": (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0),
    "jpeg": (5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 95.0, 100.0, JPEG_LOSSLESS),
    "illumination": (50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0, 140.0, 150.0),
    "saltpepper": (1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0),
}


def perturbation_suite(
    config: Optional[Mapping[str, Iterable[float]]] = None,
) -> list[PerturbationSpec]:
    """The perturbation grid: the identity plus every (kind, level) pair.

    The default levels cover scale 0.5x-2x with extra steps near 1, rotation
    in 5-degree steps within +-20, blur sigma 0-8, jpeg quality 5-100 plus a
    lossless setting, brightness 50%-150%, and 1-1000 noise pixels. Passing
    ``config`` (kind -> levels) replaces the grid per kind.
    """
    grid = dict(_DEFAULT_GRID)
    if config is not None:
        for kind, levels in config.items():
            grid[kind] = tuple(levels)
    specs: list[PerturbationSpec] = []
    for kind in ("none", "scale", "rotation", "blur", "jpeg", "illumination", "saltpepper"):
        for param in grid.get(kind, ()):
            specs.append(PerturbationSpec(kind, param))
    return specs


def run_repeatability_experiment(
    images: Mapping[str, ImageInfo],
    reference: Mapping[str, ProposalSet],
    perturbed_by_spec: Mapping[PerturbationSpec, Mapping[str, ProposalSet]],
    budget: int = DEFAULT_BUDGET,
    bins: int = 10,
    theta_max: float = DEFAULT_THETA_MAX,
) -> RepeatabilityRun:
    """Score every perturbation level over a dataset.

    Reference proposals of all images are pooled to fix the 10 size-decile
    edges, matching stays per-image, and each report aggregates the pooled
    per-proposal matched IoUs. Images without proposals for some level are
    recorded and skipped rather than failing the run.
    """
    image_ids = sorted(set(images) & set(reference))
    truncated_ref = {i: truncate_proposals(reference[i], budget) for i in image_ids}
    pooled_sqrt_areas = np.concatenate(
        [
            np.sqrt(np.array([it.box.area for it in truncated_ref[i].items], dtype=float))
            for i in image_ids
            if truncated_ref[i].items
        ]
        or [np.array([])]
    )
    if pooled_sqrt_areas.size == 0:
        raise ValueError("no reference proposals available")
    edges = size_bin_edges(pooled_sqrt_areas, bins)

    reports: list[RepeatabilityReport] = []
    missing: list[tuple[str, str]] = []
    for spec, per_image in perturbed_by_spec.items():

        def one_image(image_id: str):
            ref = truncated_ref[image_id]
            pert = per_image.get(image_id)
            if pert is None:
                return None
            if not ref.items:
                return ()
            img = images[image_id]
            crop = pixel_crop(img, theta_max) if spec.kind == "rotation" else None
            result = greedy_match(
                _project_all(truncate_proposals(pert, budget), spec, img, crop, None),
                [it.box for it in ref.items],
                min_iou=0.0,
            )
            return (
                np.sqrt(np.array([it.box.area for it in ref.items])),
                np.asarray(result.gt_iou),
                result.matched_count,
            )

        # Per-image jobs are pure; fan out capped by PROPBENCH_THREADS and
        # collect in image order so aggregation stays deterministic.
        workers = worker_count()
        if workers > 1 and len(image_ids) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(one_image, image_ids))
        else:
            outcomes = [one_image(i) for i in image_ids]

        areas: list[np.ndarray] = []
        ious: list[np.ndarray] = []
        matched = 0
        for image_id, outcome in zip(image_ids, outcomes):
            if outcome is None:
                missing.append((spec.label(), image_id))
            elif outcome:
                areas.append(outcome[0])
                ious.append(outcome[1])
                matched += outcome[2]
        if not areas:
            continue
        all_areas = np.concatenate(areas)
        all_ious = np.concatenate(ious)
        idx = assign_size_bins(all_areas, edges)
        per_bin = tuple(
            float(all_ious[idx == g].mean()) if np.any(idx == g) else None
            for g in range(bins)
        )
        present = [s for s in per_bin if s is not None]
        reports.append(
            RepeatabilityReport(
                spec=spec,
                per_bin_scores=per_bin,
                overall=float(sum(present) / len(present)),
                matched_pairs=matched,
                reference_count=int(all_areas.size),
            )
        )
    return RepeatabilityRun(tuple(reports), tuple(missing))
