"""Linear-time two-pass segmentation of multi-channel images."""
from .cca import (
    EquivalenceStore,
    Run,
    RunTable,
    SegmentationResult,
    compact_labels,
    init_label,
    make_equivalent,
    region_stats,
    resolve_labels,
    segment,
)
from .image import (
    ImageBuffer,
    ImageFormatError,
    LabelMap,
    ScalarMap,
    load_labels,
    load_ppm,
    render_mean_colors,
    rgb_to_lab,
    save_labels,
    save_ppm,
)
from .measures import (
    ChannelTargetMeasure,
    ConstantPredicate,
    EuclideanMeasure,
    MeasureSpec,
    GradientMeasure,
    SaliencyMeasure,
    SimilarityPredicate,
    compute_gradient,
    compute_saliency,
    make_predicate,
    register_measure,
)

__version__ = "0.1.0"
