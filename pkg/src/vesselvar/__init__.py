"""Toolkit for quantifying agreement between annotators of vessel-like structures in 2D images."""

__version__ = "0.1.0"

from .raster import (
    AnnotationSet,
    BinaryMask,
    Contour,
    DimensionMismatch,
    FormatError,
    GrayImage,
    build_annotation,
    load_gray,
    rasterize_contours,
    save_gray,
)
from .distance import exact_edt, exact_edt_squared, sentinel_value, signed_edge_distance, tube_mask
from .skeleton import Skeleton, centerline_pixels, thin
from .metrics import (
    ClDiceResult,
    PairSummary,
    SweepCurve,
    cldice,
    dataset_summary,
    modified_cldice,
    threshold_sweep,
    topological_score,
)
from .vesselness import (
    DisagreementReport,
    FrangiParams,
    ScaleParams,
    disagreement_score,
    frangi,
    hessian_at_scale,
    sato,
)
from .patches import (
    DisagreementComponent,
    Patch,
    QuotaShortfall,
    RatingItem,
    RatingSet,
    SourceImage,
    build_rating_set,
    disagreement_components,
    load_rating_set,
    load_source_dataset,
    min_enclosing_circle,
    sample_patches,
    write_rating_bundle,
)
from .rating import (
    AgreementTable,
    RatingResponse,
    agreement_table,
    export_agreement_csv,
    intra_rater_consistency,
)

__all__ = [
    "AgreementTable",
    "AnnotationSet",
    "BinaryMask",
    "ClDiceResult",
    "Contour",
    "DimensionMismatch",
    "DisagreementComponent",
    "DisagreementReport",
    "FormatError",
    "FrangiParams",
    "GrayImage",
    "PairSummary",
    "Patch",
    "QuotaShortfall",
    "RatingItem",
    "RatingResponse",
    "RatingSet",
    "ScaleParams",
    "Skeleton",
    "SourceImage",
    "SweepCurve",
    "agreement_table",
    "build_annotation",
    "build_rating_set",
    "centerline_pixels",
    "cldice",
    "dataset_summary",
    "disagreement_components",
    "disagreement_score",
    "exact_edt",
    "exact_edt_squared",
    "export_agreement_csv",
    "frangi",
    "hessian_at_scale",
    "intra_rater_consistency",
    "load_gray",
    "load_rating_set",
    "load_source_dataset",
    "min_enclosing_circle",
    "modified_cldice",
    "rasterize_contours",
    "sample_patches",
    "sato",
    "save_gray",
    "sentinel_value",
    "signed_edge_distance",
    "thin",
    "threshold_sweep",
    "topological_score",
    "tube_mask",
    "write_rating_bundle",
]
