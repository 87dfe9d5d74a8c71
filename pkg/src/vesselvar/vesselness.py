"""Multi-scale Hessian ridge filters and their use as disagreement predictors.

Second-derivative responses are computed by smoothing with a truncated
Gaussian (kernel radius ceil(4*sigma), reflective boundaries) and applying
central-difference stencils, then scale-normalized by sigma**2 so responses
are comparable across scales. Vessels darker than their background (the
default) are handled by negating the image before filtering.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .raster import AnnotationSet, DimensionMismatch, GrayImage

DARK_ON_BRIGHT = "dark-on-bright"
BRIGHT_ON_DARK = "bright-on-dark"


@dataclass(frozen=True)
class ScaleParams:
    """Strictly increasing filter scales (pixels) and ridge polarity."""

    sigmas: tuple = (1.0, 2.0, 3.0, 4.0, 5.0)
    polarity: str = DARK_ON_BRIGHT

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        if not sigmas:
            raise ValueError("need at least one sigma")
        if any(s <= 0 for s in sigmas):
            raise ValueError("sigmas must be > 0")
        if any(b <= a for a, b in zip(sigmas, sigmas[1:])):
            raise ValueError("sigmas must be strictly increasing")
        if self.polarity not in (DARK_ON_BRIGHT, BRIGHT_ON_DARK):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        object.__setattr__(self, "sigmas", sigmas)


@dataclass(frozen=True)
class FrangiParams:
    """Blobness (beta) and structureness (c) sensitivities.

    c scales with image intensity range; the default 15 is calibrated for
    values in [0, 255], so rescale it (or the image) for [0, 1] data.
    """

    beta: float = 0.5
    c: float = 15.0

    def __post_init__(self):
        if self.beta <= 0 or self.c <= 0:
            raise ValueError("beta and c must be > 0")


@dataclass(frozen=True)
class DisagreementReport:
    """How well a filter response ranks annotator-disagreement pixels.

    auc is the probability that a random disagreement pixel outranks a random
    background (neither-annotator) pixel, with tie correction; pearson_r
    correlates the response with edge proximity over a band near the edges.
    Both carry a defined-flag because either can be degenerate.
    """

    auc: float
    pearson_r: float
    n_disagree_pixels: int
    n_agree_pixels: int
    n_background_pixels: int
    auc_defined: bool
    pearson_defined: bool
    band_px: float


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(4.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _smooth(data: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel(sigma)
    out = correlate1d(data, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


_D1 = np.array([-0.5, 0.0, 0.5])
_D2 = np.array([1.0, -2.0, 1.0])


def hessian_at_scale(img: GrayImage, sigma: float):
    """Scale-normalized Gaussian second derivatives (Hxx, Hxy, Hyy)."""
    if sigma < 0.5:
        raise ValueError("sigma must be >= 0.5")
    smoothed = _smooth(img.data, sigma)
    s2 = sigma * sigma
    hxx = s2 * correlate1d(smoothed, _D2, axis=1, mode="reflect")
    hyy = s2 * correlate1d(smoothed, _D2, axis=0, mode="reflect")
    dx = correlate1d(smoothed, _D1, axis=1, mode="reflect")
    hxy = s2 * correlate1d(dx, _D1, axis=0, mode="reflect")
    wrap = lambda a: GrayImage.from_array(a, spacing=img.spacing)
    return wrap(hxx), wrap(hxy), wrap(hyy)


def _eigvals_by_magnitude(hxx, hxy, hyy):
    half_tr = 0.5 * (hxx + hyy)
    root = np.sqrt((0.5 * (hxx - hyy)) ** 2 + hxy * hxy)
    e_hi = half_tr + root
    e_lo = half_tr - root
    swap = np.abs(e_hi) > np.abs(e_lo)
    lam1 = np.where(swap, e_lo, e_hi)  # smaller magnitude
    lam2 = np.where(swap, e_hi, e_lo)  # larger magnitude
    return lam1, lam2


def _oriented(img: GrayImage, polarity: str) -> GrayImage:
    if polarity == DARK_ON_BRIGHT:
        return GrayImage.from_array(-img.data, spacing=img.spacing)
    return img


def _frangi_single(work: GrayImage, sigma: float, beta: float, c: float) -> np.ndarray:
    hxx, hxy, hyy = hessian_at_scale(work, sigma)
    lam1, lam2 = _eigvals_by_magnitude(hxx.data, hxy.data, hyy.data)
    resp = np.zeros_like(lam2)
    ridge = lam2 < 0
    if ridge.any():
        rb = lam1[ridge] / lam2[ridge]
        s2 = lam1[ridge] ** 2 + lam2[ridge] ** 2
        resp[ridge] = np.exp(-(rb * rb) / (2.0 * beta * beta)) * (
            1.0 - np.exp(-s2 / (2.0 * c * c))
        )
    return resp


def frangi(img: GrayImage, scales: ScaleParams = ScaleParams(), p: FrangiParams = FrangiParams()) -> GrayImage:
    """Multi-scale ridge-likelihood response in [0, 1).

    Per scale the response weighs down blob-like structure (eigenvalue ratio
    against beta) and flat regions (Hessian norm against c); the output is
    the pixelwise maximum over scales.
    """
    work = _oriented(img, scales.polarity)
    resp = _frangi_single(work, scales.sigmas[0], p.beta, p.c)
    for sigma in scales.sigmas[1:]:
        np.maximum(resp, _frangi_single(work, sigma, p.beta, p.c), out=resp)
    return GrayImage.from_array(resp, spacing=img.spacing)


def _sato_single(work: GrayImage, sigma: float) -> np.ndarray:
    hxx, hxy, hyy = hessian_at_scale(work, sigma)
    _, lam2 = _eigvals_by_magnitude(hxx.data, hxy.data, hyy.data)
    return np.maximum(0.0, -lam2)


def sato(img: GrayImage, scales: ScaleParams = ScaleParams()) -> GrayImage:
    """Line-filter response: the rectified larger-magnitude eigenvalue,
    scale-normalized, maximized over scales. Non-negative everywhere."""
    work = _oriented(img, scales.polarity)
    resp = _sato_single(work, scales.sigmas[0])
    for sigma in scales.sigmas[1:]:
        np.maximum(resp, _sato_single(work, sigma), out=resp)
    return GrayImage.from_array(resp, spacing=img.spacing)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    del uniq
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    return ((starts + ends) / 2.0)[inverse]


def rank_auc(positives: np.ndarray, negatives: np.ndarray) -> float:
    """P(random positive outranks random negative), ties counted half."""
    n_pos, n_neg = len(positives), len(negatives)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("rank_auc needs both classes nonempty")
    ranks = average_ranks(np.concatenate([positives, negatives]))
    r_pos = float(ranks[:n_pos].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (float(n_pos) * float(n_neg))


def disagreement_score(
    response: GrayImage,
    a: AnnotationSet,
    b: AnnotationSet,
    band_px: float = 4.0,
) -> DisagreementReport:
    """Evaluate a filter response as a predictor of annotator disagreement.

    Disagreement pixels are the XOR of the two masks; they are ranked against
    background pixels neither annotator marked. The edge-proximity
    correlation uses pixels within band_px of either annotation's edges.
    """
    if not (response.same_shape(a.mask) and response.same_shape(b.mask)):
        raise DimensionMismatch("response and annotations must share dimensions")
    fg_a, fg_b = a.mask.bits, b.mask.bits
    disagree = fg_a ^ fg_b
    agree = fg_a & fg_b
    background = ~(fg_a | fg_b)
    n_dis = int(disagree.sum())
    n_agr = int(agree.sum())
    n_bg = int(background.sum())
    if n_dis > 0 and n_bg > 0:
        auc = rank_auc(response.data[disagree], response.data[background])
        auc_defined = True
    else:
        auc, auc_defined = float("nan"), False
    edge_prox = np.minimum(np.abs(a.edge_sdf.data), np.abs(b.edge_sdf.data))
    band = edge_prox <= band_px
    x = response.data[band]
    y = -edge_prox[band]
    if x.size >= 2 and np.ptp(x) > 0 and np.ptp(y) > 0:
        r = float(np.corrcoef(x, y)[0, 1])
        pearson_defined = True
    else:
        r, pearson_defined = float("nan"), False
    return DisagreementReport(
        auc=auc,
        pearson_r=r,
        n_disagree_pixels=n_dis,
        n_agree_pixels=n_agr,
        n_background_pixels=n_bg,
        auc_defined=auc_defined,
        pearson_defined=pearson_defined,
        band_px=float(band_px),
    )


_REPORT_HEADER = ["patch_id", "filter", "auc", "pearson_r", "n_disagree", "n_agree"]


def append_disagreement_csv(path, patch_id: str, filter_name: str, report: DisagreementReport) -> None:
    """Append one report row, writing the header on first use."""
    path = Path(path)
    fresh = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if fresh:
            writer.writerow(_REPORT_HEADER)
        writer.writerow(
            [
                patch_id,
                filter_name,
                repr(report.auc) if report.auc_defined else "",
                repr(report.pearson_r) if report.pearson_defined else "",
                report.n_disagree_pixels,
                report.n_agree_pixels,
            ]
        )
