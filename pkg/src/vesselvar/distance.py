"""Exact Euclidean distance transforms and derived signed/tube fields.

Distances are measured between pixel centers, in pixels. The transform is the
separable two-pass squared-distance algorithm: a column sweep for the nearest
feature row, then a per-row lower envelope of parabolas, so squared distances
are exact integers and the runtime is linear in the pixel count. Fields for an
empty feature set are filled with the sentinel value width+height, which no
real distance can reach.
"""

from __future__ import annotations

import numpy as np

from .raster import BinaryMask, GrayImage

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def sentinel_value(width: int, height: int) -> float:
    """Distance value used to mark fields with no feature pixels."""
    return float(width + height)


def sentinel_field(width: int, height: int, spacing: float = 1.0) -> GrayImage:
    data = np.full((height, width), sentinel_value(width, height))
    return GrayImage(width=width, height=height, data=data, spacing=spacing)


def is_sentinel_field(img: GrayImage) -> bool:
    return bool(np.all(img.data == sentinel_value(img.width, img.height)))


@njit(cache=True)
def _row_envelope_sq(g: np.ndarray) -> np.ndarray:
    """Per row, out[x] = min over x' of (x - x')^2 + g[x'] via the parabola
    lower envelope. g must be finite."""
    h, w = g.shape
    out = np.empty((h, w), dtype=np.float64)
    v = np.empty(w, dtype=np.int64)
    z = np.empty(w + 1, dtype=np.float64)
    for y in range(h):
        k = 0
        v[0] = 0
        z[0] = -1e30
        z[1] = 1e30
        for q in range(1, w):
            fq = g[y, q] + q * q
            p = v[k]
            s = (fq - (g[y, p] + p * p)) / (2.0 * (q - p))
            while s <= z[k]:
                k -= 1
                p = v[k]
                s = (fq - (g[y, p] + p * p)) / (2.0 * (q - p))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = 1e30
        k = 0
        for x in range(w):
            while z[k + 1] < x:
                k += 1
            dx = x - v[k]
            out[y, x] = dx * dx + g[y, v[k]]
    return out


def _column_distance_sq(features: np.ndarray) -> np.ndarray:
    """Squared distance to the nearest feature row within each column.

    Columns without any feature get (width+height)^2, which exceeds every
    achievable squared distance and therefore never wins in the row pass.
    """
    h, w = features.shape
    far = h + w
    dist = np.full(w, far, dtype=np.int64)
    out = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        dist = np.minimum(dist + 1, far)
        dist[features[y]] = 0
        out[y] = dist
    dist = np.full(w, far, dtype=np.int64)
    for y in range(h - 1, -1, -1):
        dist = np.minimum(dist + 1, far)
        dist[features[y]] = 0
        np.minimum(out[y], dist, out=out[y])
    return (out * out).astype(np.float64)


def exact_edt_squared(features: BinaryMask) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest feature pixel.

    Returns an integer-valued float64 array. Raises ValueError for an empty
    feature set; callers wanting the sentinel convention use exact_edt.
    """
    if features.is_empty():
        raise ValueError("exact_edt_squared requires at least one feature pixel")
    g = _column_distance_sq(features.bits)
    return _row_envelope_sq(g)


def exact_edt(features: BinaryMask) -> GrayImage:
    """Exact Euclidean distance field; sentinel field if no features."""
    if features.is_empty():
        return sentinel_field(features.width, features.height)
    return GrayImage.from_array(np.sqrt(exact_edt_squared(features)))


def signed_edge_distance(mask: BinaryMask) -> GrayImage:
    """Signed distance to the mask boundary: negative inside the foreground,
    positive outside, measured between pixel centers.

    An all-foreground or all-background mask gets the sentinel magnitude on
    the side that has no opposite pixels to measure against.
    """
    w, h = mask.width, mask.height
    fg = mask.bits
    if not fg.any():
        return sentinel_field(w, h)
    if fg.all():
        return GrayImage.from_array(np.full((h, w), -sentinel_value(w, h)))
    d_out = np.sqrt(exact_edt_squared(mask))
    background = BinaryMask.from_array(~fg)
    d_in = np.sqrt(exact_edt_squared(background))
    return GrayImage.from_array(np.where(fg, -d_in, d_out))


def tube_mask(centerline_udf: GrayImage, d: float) -> BinaryMask:
    """Pixels strictly closer than ``d`` to the centerline."""
    if d <= 0:
        raise ValueError("distance threshold must be > 0")
    return BinaryMask.from_array(centerline_udf.data < d)
