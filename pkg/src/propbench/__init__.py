"""propbench: a benchmark toolkit for class-agnostic detection proposals.

Evaluates proposal quality (recall curves, average recall, best overlap),
proposal repeatability under image perturbations, and detector-free oracle
experiments, with reference baseline generators and deterministic file
formats throughout.
"""

__version__ = "0.1.0"

from .boxes import (
    Annotation,
    BBox,
    ImageInfo,
    JPEG_LOSSLESS,
    PerturbationSpec,
    ProposalSet,
    ScoredBox,
    box_features,
    clip_to_image,
    features_to_box,
    inscribed_crop,
    iou,
    iou_matrix,
    project_box,
)
from .matching import MatchResult, best_overlap, exact_match_count, exact_match_value, greedy_match
from .metrics import (
    CurveFamily,
    RecallCurve,
    abo,
    average_recall,
    pearson,
    recall_at,
    recall_curve,
    size_binned_mean,
    vus,
)
from .baselines import (
    BoxStats,
    GaussianGenerator,
    SlidingWindowGenerator,
    SuperpixelGenerator,
    UniformGenerator,
    fit_box_stats,
    sample_gaussian,
    sample_uniform,
    sliding_window,
)
from .segmentation import Raster, SegParams, felzenszwalb_segment, read_pnm, superpixel_proposals, write_pnm
from .ops import CalibrationTable, adaptive_nms, calibrate_count, dedup, nms, random_k, top_k
from .detection import Detection, augment_with_gt, average_precision, filter_by_proposals, mean_ap, oracle_nms
from .repeatability import (
    RepeatabilityReport,
    evaluate_repeatability,
    perturbation_suite,
    run_repeatability_experiment,
)
from .io import DatasetManifest, ResultTable, load_dataset, load_detections, load_proposals

__all__ = [name for name in dir() if not name.startswith("_")]
