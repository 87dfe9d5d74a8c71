"""Image grids, grayscale file I/O, and annotation construction.

Images are 2D float rasters stored row-major (numpy C order), pixel centers
on the integer grid. Distance values are in pixels; the optional ``spacing``
field converts to millimetres at reporting time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class FormatError(ValueError):
    """Unreadable or unsupported image file."""


class DimensionMismatch(ValueError):
    """Operands do not share raster dimensions."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GrayImage:
    """2D float raster with isotropic pixel spacing metadata.

    ``data`` has shape (height, width); all values must be finite.
    """

    width: int
    height: int
    data: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "spacing", float(self.spacing))
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.height, self.width):
            raise ValueError(
                f"data shape {data.shape} does not match (height, width)=({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def from_array(cls, data: np.ndarray, spacing: float = 1.0) -> "GrayImage":
        data = np.asarray(data, dtype=np.float64)
        h, w = data.shape
        return cls(width=w, height=h, data=data, spacing=spacing)

    def same_shape(self, other) -> bool:
        return self.width == other.width and self.height == other.height


@dataclass(frozen=True)
class BinaryMask:
    """Boolean raster; foreground pixels are True."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(
                f"bits shape {bits.shape} does not match (height, width)=({self.height}, {self.width})"
            )
        object.__setattr__(self, "bits", _readonly(bits))

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "BinaryMask":
        bits = np.asarray(bits, dtype=bool)
        h, w = bits.shape
        return cls(width=w, height=h, bits=bits)

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def same_shape(self, other) -> bool:
        return self.width == other.width and self.height == other.height


@dataclass(frozen=True)
class AnnotationSet:
    """One annotator's mask plus its two distance-field representations.

    ``edge_sdf`` is the signed distance to the vessel edges (negative inside),
    ``centerline_udf`` the unsigned distance to the vessel centerlines, both
    in pixels. Empty annotations carry sentinel-valued fields (width+height).
    """

    mask: BinaryMask
    edge_sdf: GrayImage
    centerline_udf: GrayImage
    annotator_id: str = ""

    def validate(self) -> None:
        """Raise ValueError if any structural invariant is violated."""
        if not (self.mask.same_shape(self.edge_sdf) and self.mask.same_shape(self.centerline_udf)):
            raise ValueError("mask, edge_sdf and centerline_udf must share dimensions")
        fg = self.mask.bits
        if fg.any():
            if not np.all(self.edge_sdf.data[fg] < 0):
                raise ValueError("edge_sdf must be negative on every foreground pixel")
            if not np.any(np.isclose(self.centerline_udf.data, 0.0)):
                raise ValueError("nonempty mask requires at least one zero centerline distance")
        if fg.size and not np.all(self.edge_sdf.data[~fg] >= 0):
            raise ValueError("edge_sdf must be non-negative on background pixels")
        if np.any(self.centerline_udf.data < 0):
            raise ValueError("centerline_udf must be non-negative")
        if not fg.any() and np.any(np.isclose(self.centerline_udf.data, 0.0)):
            raise ValueError("empty mask must not have zero centerline distances")


@dataclass(frozen=True)
class Contour:
    """Subpixel polyline with a per-point tube radius, both in pixels."""

    polyline: tuple
    radius_per_point: tuple = field(default=())

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.polyline)
        if len(pts) < 2:
            raise ValueError("contour needs at least 2 points")
        radii = tuple(float(r) for r in self.radius_per_point)
        if len(radii) != len(pts):
            raise ValueError("radius_per_point must match polyline length")
        if any(r < 0.5 for r in radii):
            raise ValueError("contour radii must be >= 0.5 px")
        object.__setattr__(self, "polyline", pts)
        object.__setattr__(self, "radius_per_point", radii)


# ---------------------------------------------------------------------------
# file I/O
#
# Formats: binary PGM (P5) and grayscale PNG, 8- or 16-bit. Values on disk are
# integer codes; in memory they are floats in [0, 1] unless the sidecar
# records an affine quantization (quant_min, quant_max), in which case codes
# map back to [quant_min, quant_max]. Rounding to codes is round-half-even.
# ---------------------------------------------------------------------------


def sidecar_path(path) -> Path:
    base = Path(path).with_suffix("")
    return base.with_name(base.name + ".meta.json")


def _read_sidecar(path: Path) -> dict:
    sc = sidecar_path(path)
    if sc.is_file():
        with open(sc, "r", encoding="utf-8") as f:
            return json.load(f)
    return {}


def _parse_pgm(raw: bytes, path) -> tuple[np.ndarray, int]:
    # header tokens may be separated by whitespace and '#' comments
    pos = 0

    def next_token():
        nonlocal pos
        while pos < len(raw):
            c = raw[pos : pos + 1]
            if c == b"#":
                while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        return raw[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise FormatError(f"{path}: unsupported PGM magic {magic!r} (only binary P5)")
    try:
        w = int(next_token())
        h = int(next_token())
        maxval = int(next_token())
    except ValueError as e:
        raise FormatError(f"{path}: malformed PGM header") from e
    if not (1 <= maxval <= 65535):
        raise FormatError(f"{path}: PGM maxval {maxval} out of range")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h
    pixels = np.frombuffer(raw, dtype=dtype, count=n, offset=pos)
    if pixels.size != n:
        raise FormatError(f"{path}: truncated PGM payload")
    return pixels.astype(np.float64).reshape(h, w), maxval


def _load_png(path) -> tuple[np.ndarray, int]:
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            return np.asarray(im, dtype=np.float64), 255
        if mode in ("I;16", "I;16B", "I;16L"):
            return np.asarray(im, dtype=np.float64), 65535
        if mode == "I":
            arr = np.asarray(im, dtype=np.float64)
            if arr.min() < 0 or arr.max() > 65535:
                raise FormatError(f"{path}: unsupported bit depth (32-bit integer values)")
            return arr, 65535
        raise FormatError(f"{path}: unsupported: non-grayscale (mode {mode})")


def load_gray(path) -> GrayImage:
    """Load an 8/16-bit grayscale PGM or PNG as a GrayImage.

    Codes are scaled to [0, 1] by the file's maxval; a sidecar with
    quant_min/quant_max remaps them to the original value range. Pixel
    spacing comes from the sidecar when present, else 1.0.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise FormatError(f"{path}: unreadable file: {e}") from e
    if raw[:2] == b"P5":
        codes, maxval = _parse_pgm(raw, path)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        codes, maxval = _load_png(path)
    else:
        raise FormatError(f"{path}: unrecognized image format")
    values = codes / float(maxval)
    meta = _read_sidecar(path)
    qmin = float(meta.get("quant_min", 0.0))
    qmax = float(meta.get("quant_max", 1.0))
    if (qmin, qmax) != (0.0, 1.0):
        values = values * (qmax - qmin) + qmin
    spacing = float(meta.get("spacing_mm", 1.0))
    return GrayImage.from_array(values, spacing=spacing)


def save_gray(img: GrayImage, path, bit_depth: int = 16, quant=None, sentinel=None) -> None:
    """Write a GrayImage to PGM or PNG (by extension) with deterministic bytes.

    Values must lie in [0, 1] unless ``quant=(lo, hi)`` maps them affinely to
    [0, 1] first; the quantization, spacing and optional sentinel flag are
    recorded in a ``<name>.meta.json`` sidecar so loading round-trips.
    """
    if bit_depth not in (8, 16):
        raise FormatError(f"unsupported bit depth {bit_depth}")
    data = img.data
    if quant is not None:
        lo, hi = float(quant[0]), float(quant[1])
        if not hi > lo:
            raise FormatError("quant range must satisfy hi > lo")
        norm = (data - lo) / (hi - lo)
    else:
        lo, hi = 0.0, 1.0
        norm = data
    if norm.min() < -1e-12 or norm.max() > 1.0 + 1e-12:
        raise FormatError(
            "values outside [0, 1]; pass quant=(lo, hi) metadata to save distance fields"
        )
    maxval = (1 << bit_depth) - 1
    codes = np.rint(np.clip(norm, 0.0, 1.0) * maxval)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
        payload = codes.astype(">u2" if bit_depth == 16 else "u1").tobytes()
        with open(path, "wb") as f:
            f.write(header + payload)
    elif suffix == ".png":
        if bit_depth == 8:
            pil = Image.fromarray(codes.astype(np.uint8), mode="L")
        else:
            pil = Image.fromarray(codes.astype(np.uint16))
        pil.save(path, format="PNG")
    else:
        raise FormatError(f"{path}: unsupported output format (use .pgm or .png)")
    if quant is not None or img.spacing != 1.0 or sentinel is not None:
        meta = {
            "spacing_mm": img.spacing,
            "quant_min": lo,
            "quant_max": hi,
            "sentinel": sentinel,
        }
        with open(sidecar_path(path), "w", encoding="utf-8") as f:
            json.dump(meta, f, sort_keys=True, indent=2)
            f.write("\n")


def load_mask(path) -> BinaryMask:
    """Load a binary mask image; any nonzero pixel is foreground."""
    img = load_gray(path)
    return BinaryMask.from_array(img.data > 0)


def save_mask(mask: BinaryMask, path) -> None:
    img = GrayImage.from_array(mask.bits.astype(np.float64))
    save_gray(img, path, bit_depth=8)


# ---------------------------------------------------------------------------
# contour rasterization
# ---------------------------------------------------------------------------


def load_contours(path) -> list:
    """Read contours from a JSON list of {points: [[x, y], ...], radii: [...]}."""
    with open(path, "r", encoding="utf-8") as f:
        entries = json.load(f)
    return [Contour(tuple(map(tuple, e["points"])), tuple(e["radii"])) for e in entries]


def _segment_covers(px, py, ax, ay, ar, bx, by, br) -> bool:
    # pixel center inside the linearly interpolated tube iff the quadratic
    # |p - P(t)|^2 - r(t)^2 has a non-positive minimum over t in [0, 1]
    qx, qy = px - ax, py - ay
    dx, dy = bx - ax, by - ay
    dr = br - ar
    a = dx * dx + dy * dy - dr * dr
    b = -2.0 * (qx * dx + qy * dy + ar * dr)
    c = qx * qx + qy * qy - ar * ar

    def h(t):
        return (a * t + b) * t + c

    best = min(h(0.0), h(1.0))
    if a > 0.0:
        t = min(1.0, max(0.0, -b / (2.0 * a)))
        best = min(best, h(t))
    return best <= 0.0


def rasterize_contours(contours, width: int, height: int) -> BinaryMask:
    """Rasterize tube contours: a pixel is foreground iff its center lies
    within the interpolated radius of the interpolated polyline.

    Points are clamped into the image bounds. An empty contour list yields an
    all-background mask. No anti-aliasing: the output is a hard binary mask.
    """
    bits = np.zeros((height, width), dtype=bool)
    for contour in contours:
        pts = [(min(max(x, 0.0), width - 1.0), min(max(y, 0.0), height - 1.0)) for x, y in contour.polyline]
        radii = contour.radius_per_point
        for i in range(len(pts) - 1):
            (ax, ay), (bx, by) = pts[i], pts[i + 1]
            ar, br = radii[i], radii[i + 1]
            pad = max(ar, br)
            x0 = max(0, int(math.floor(min(ax, bx) - pad)))
            x1 = min(width - 1, int(math.ceil(max(ax, bx) + pad)))
            y0 = max(0, int(math.floor(min(ay, by) - pad)))
            y1 = min(height - 1, int(math.ceil(max(ay, by) + pad)))
            for y in range(y0, y1 + 1):
                row = bits[y]
                for x in range(x0, x1 + 1):
                    if not row[x] and _segment_covers(float(x), float(y), ax, ay, ar, bx, by, br):
                        row[x] = True
    return BinaryMask.from_array(bits)


def build_annotation(mask: BinaryMask, annotator_id: str = "") -> AnnotationSet:
    """Derive the three-representation AnnotationSet from a binary mask.

    The centerline comes from morphological thinning of the mask, so fields
    built this way carry derived (not authored) centerlines. An empty mask
    yields sentinel-valued distance fields.
    """
    from .distance import exact_edt, signed_edge_distance
    from .skeleton import thin

    edge = signed_edge_distance(mask)
    skel = thin(mask)
    udf = exact_edt(skel.to_mask())
    return AnnotationSet(mask=mask, edge_sdf=edge, centerline_udf=udf, annotator_id=annotator_id)
