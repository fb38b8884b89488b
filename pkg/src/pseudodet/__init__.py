"""Detector-agnostic pseudo-labeling toolkit for object detection.

Operates on detection files rather than inside a network: per-view
predictions are aggregated into candidate labels, an adaptive score
threshold is read off the candidate score histogram, surviving labels are
weighted by confidence and merged with the labeled set, and a simulator
exercises the whole loop end to end with known ground truth.
"""

from .geometry import (
    Box,
    DEFAULT_VIEWS,
    IDENTITY_VIEW,
    ImageDims,
    ViewSpec,
    apply_view,
    clip_box,
    invert_view,
    iou,
    parse_views,
)
from .nms import Detection, ViewPredictions, aggregate_views, nms
from .thresholding import (
    EmptyHistogramError,
    HistogramConfig,
    MissingClassThresholdError,
    ScoreHistogram,
    ThresholdSet,
    build_histogram,
    compute_thresholds,
    ground_threshold,
    threshold_report,
    threshold_set_from_report,
)
from .pseudolabel import (
    DuplicateImageIdError,
    InvalidThresholdPairError,
    PseudoLabel,
    alpha_weight,
    alpha_weight_general,
    build_pseudo_dataset,
    emit_pseudo_dataset,
    filter_candidates,
    merge_datasets,
    split_merged,
)
from .evaluation import (
    ApReport,
    GroundTruth,
    MatchResult,
    average_precision,
    match,
    match_dataset,
    pr_f1,
)
from .dataio import (
    Annotation,
    Category,
    Dataset,
    ImageInfo,
    IntegrityError,
    ParseError,
    PipelineConfig,
    UnknownViewError,
    load_dataset,
    load_detections,
    save_dataset,
    save_detections,
)
from .simulator import (
    DetectorModel,
    ImprovementModel,
    SceneConfig,
    SimulationSpec,
    candidate_recall,
    generate_scenes,
    run_iteration_loop,
    run_threshold_sweep,
    simulate_detector,
)

__version__ = "0.1.0"
