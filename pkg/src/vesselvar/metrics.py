"""Centerline-overlap agreement metrics between annotation pairs.

The standard score checks each annotation's centerline against the other's
binary mask; the modified variant replaces the mask with the set of pixels
closer than a distance threshold to the other centerline, read directly off
the centerline-distance field. Skeletons always come from the centerline
field (tau = 0.5), never from re-thinning, unless the annotation itself was
built from a bare mask.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import fsum, sqrt
from pathlib import Path
from typing import NamedTuple

from .raster import AnnotationSet, BinaryMask, DimensionMismatch
from .skeleton import Skeleton, centerline_pixels

DEFAULT_THRESHOLDS = tuple(0.5 * k for k in range(1, 13))  # 0.5 .. 6.0 px


class TopologicalScore(NamedTuple):
    value: float
    vacuous: bool  # True when the skeleton was empty and 1.0 is by convention


@dataclass(frozen=True)
class ClDiceResult:
    """Agreement scores for one annotation pair.

    ``cldice`` is the harmonic mean of tprec and tsens except for the
    documented empty-skeleton conventions: both skeletons empty scores 1.0,
    exactly one empty scores 0.0; the flags record which case applied.
    """

    tprec: float
    tsens: float
    cldice: float
    variant: str  # "standard" | "modified"
    threshold_px: float | None
    skel_a_size: int
    skel_b_size: int
    flags: tuple = ()


@dataclass(frozen=True)
class SweepCurve:
    thresholds: tuple
    results: tuple

    def __post_init__(self):
        if len(self.thresholds) != len(self.results):
            raise ValueError("thresholds and results must have equal length")

    def cldice_values(self) -> list:
        return [r.cldice for r in self.results]


@dataclass(frozen=True)
class PairSummary:
    """Per-pair results plus mean and sample (n-1) standard deviation."""

    variant: str
    threshold_px: float | None
    entries: tuple  # of (pair_id, ClDiceResult)
    mean_tprec: float
    std_tprec: float
    mean_tsens: float
    std_tsens: float
    mean_cldice: float
    std_cldice: float
    flags: tuple = ()


def _check_dims(a, b):
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatch(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def topological_score(skel: Skeleton, region: BinaryMask) -> TopologicalScore:
    """Fraction of skeleton pixels lying inside the region.

    An empty skeleton scores 1.0 by convention, flagged as vacuous.
    """
    _check_dims(skel, region)
    if len(skel) == 0:
        return TopologicalScore(1.0, True)
    coords = skel.coords()
    inside = int(region.bits[coords[:, 1], coords[:, 0]].sum())
    return TopologicalScore(inside / len(skel), False)


def _score_in_tube(skel: Skeleton, centerline_udf, d: float) -> TopologicalScore:
    # fraction of skeleton pixels strictly closer than d to the opposing
    # centerline, read off the distance field without materializing the tube
    if len(skel) == 0:
        return TopologicalScore(1.0, True)
    coords = skel.coords()
    inside = int((centerline_udf.data[coords[:, 1], coords[:, 0]] < d).sum())
    return TopologicalScore(inside / len(skel), False)


def _combine(tprec, tsens, skel_a, skel_b, variant, threshold_px) -> ClDiceResult:
    flags = []
    if tprec.vacuous:
        flags.append("skel_a_empty")
    if tsens.vacuous:
        flags.append("skel_b_empty")
    if tprec.vacuous and tsens.vacuous:
        cl = 1.0
    elif tprec.vacuous or tsens.vacuous:
        cl = 0.0
    else:
        total = tprec.value + tsens.value
        cl = 0.0 if total == 0 else 2.0 * tprec.value * tsens.value / total
    return ClDiceResult(
        tprec=tprec.value,
        tsens=tsens.value,
        cldice=cl,
        variant=variant,
        threshold_px=threshold_px,
        skel_a_size=len(skel_a),
        skel_b_size=len(skel_b),
        flags=tuple(flags),
    )


def cldice(a: AnnotationSet, b: AnnotationSet, tau: float = 0.5) -> ClDiceResult:
    """Standard centerline agreement: each skeleton against the other mask."""
    _check_dims(a.mask, b.mask)
    skel_a = centerline_pixels(a.centerline_udf, tau)
    skel_b = centerline_pixels(b.centerline_udf, tau)
    tprec = topological_score(skel_a, b.mask)
    tsens = topological_score(skel_b, a.mask)
    return _combine(tprec, tsens, skel_a, skel_b, "standard", None)


def modified_cldice(a: AnnotationSet, b: AnnotationSet, d: float, tau: float = 0.5) -> ClDiceResult:
    """Distance-thresholded variant: the mask is replaced by the pixels
    strictly closer than ``d`` to the opposing centerline."""
    if d <= 0:
        raise ValueError("distance threshold must be > 0")
    _check_dims(a.mask, b.mask)
    skel_a = centerline_pixels(a.centerline_udf, tau)
    skel_b = centerline_pixels(b.centerline_udf, tau)
    tprec = _score_in_tube(skel_a, b.centerline_udf, d)
    tsens = _score_in_tube(skel_b, a.centerline_udf, d)
    return _combine(tprec, tsens, skel_a, skel_b, "modified", float(d))


def threshold_sweep(a: AnnotationSet, b: AnnotationSet, thresholds=DEFAULT_THRESHOLDS) -> SweepCurve:
    """Modified score at each threshold of a strictly increasing grid."""
    thresholds = tuple(float(t) for t in thresholds)
    if any(t <= 0 for t in thresholds):
        raise ValueError("thresholds must be > 0")
    if any(t2 <= t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    results = tuple(modified_cldice(a, b, d) for d in thresholds)
    return SweepCurve(thresholds=thresholds, results=results)


def _mean_std(values) -> tuple:
    n = len(values)
    mean = fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, sqrt(var)


def dataset_summary(
    pairs,
    variant: str = "standard",
    d: float | None = None,
    pair_ids=None,
    threads: int | None = None,
) -> PairSummary:
    """Score every annotation pair and aggregate mean / sample std.

    Pairs are scored in parallel worker threads; the aggregation uses exact
    (fsum) summation so the report does not depend on scheduling order.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("dataset_summary needs at least one pair")
    if variant == "standard":
        score = lambda ab: cldice(ab[0], ab[1])
    elif variant == "modified":
        if d is None or d <= 0:
            raise ValueError("modified variant needs a positive threshold d")
        score = lambda ab: modified_cldice(ab[0], ab[1], d)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if pair_ids is None:
        pair_ids = [f"pair_{i:04d}" for i in range(len(pairs))]
    if len(pair_ids) != len(pairs):
        raise ValueError("pair_ids must match pairs")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(score, pairs))
    entries = tuple(zip(pair_ids, results))
    mp, sp = _mean_std([r.tprec for r in results])
    ms, ss = _mean_std([r.tsens for r in results])
    mc, sc = _mean_std([r.cldice for r in results])
    flags = ("n=1",) if len(results) == 1 else ()
    return PairSummary(
        variant=variant,
        threshold_px=float(d) if d is not None else None,
        entries=entries,
        mean_tprec=mp,
        std_tprec=sp,
        mean_tsens=ms,
        std_tsens=ss,
        mean_cldice=mc,
        std_cldice=sc,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

_PAIR_HEADER = [
    "image_id",
    "variant",
    "threshold_px",
    "tprec",
    "tsens",
    "cldice",
    "skel_a_size",
    "skel_b_size",
    "flags",
]


def _result_row(image_id: str, r: ClDiceResult) -> list:
    return [
        image_id,
        r.variant,
        "" if r.threshold_px is None else repr(r.threshold_px),
        repr(r.tprec),
        repr(r.tsens),
        repr(r.cldice),
        r.skel_a_size,
        r.skel_b_size,
        ";".join(r.flags),
    ]


def write_summary_csv(summary: PairSummary, path) -> None:
    """One row per pair plus mean and std summary rows."""
    with open(Path(path), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(_PAIR_HEADER)
        for pair_id, r in summary.entries:
            writer.writerow(_result_row(pair_id, r))
        thr = "" if summary.threshold_px is None else repr(summary.threshold_px)
        writer.writerow(
            ["mean", summary.variant, thr, repr(summary.mean_tprec), repr(summary.mean_tsens),
             repr(summary.mean_cldice), "", "", ";".join(summary.flags)]
        )
        writer.writerow(
            ["std", summary.variant, thr, repr(summary.std_tprec), repr(summary.std_tsens),
             repr(summary.std_cldice), "", "", ";".join(summary.flags)]
        )


def write_sweep_csv(curve: SweepCurve, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold_px", "tprec", "tsens", "cldice"])
        for t, r in zip(curve.thresholds, curve.results):
            writer.writerow([repr(t), repr(r.tprec), repr(r.tsens), repr(r.cldice)])
