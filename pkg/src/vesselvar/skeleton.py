"""Centerline extraction: morphological thinning and distance-field thresholding.

The preferred centerline source is a centerline-distance field authored with
the annotations; thinning is the fallback when only a binary mask exists, and
downstream reports flag such centerlines as derived.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import BinaryMask, GrayImage


@dataclass(frozen=True)
class Skeleton:
    """Sparse set of centerline pixels as (x, y) coordinates."""

    pixels: frozenset
    width: int
    height: int

    def __post_init__(self):
        for x, y in self.pixels:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"skeleton pixel ({x}, {y}) outside {self.width}x{self.height}")

    def __len__(self) -> int:
        return len(self.pixels)

    def coords(self) -> np.ndarray:
        """Pixels as an (n, 2) int array of (x, y), sorted for determinism."""
        if not self.pixels:
            return np.empty((0, 2), dtype=np.int64)
        return np.array(sorted(self.pixels), dtype=np.int64)

    def to_mask(self) -> BinaryMask:
        bits = np.zeros((self.height, self.width), dtype=bool)
        for x, y in self.pixels:
            bits[y, x] = True
        return BinaryMask.from_array(bits)

    def to_csv(self, path) -> None:
        """Write sparse coordinates, one x,y row per pixel."""
        with open(Path(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["x", "y"])
            writer.writerows(self.coords().tolist())

    @classmethod
    def from_mask(cls, mask: BinaryMask) -> "Skeleton":
        ys, xs = np.nonzero(mask.bits)
        return cls(frozenset(zip(xs.tolist(), ys.tolist())), mask.width, mask.height)


def _neighbors(img: np.ndarray):
    # clockwise from north on the zero-padded array: P2..P9
    return (
        img[:-2, 1:-1],
        img[:-2, 2:],
        img[1:-1, 2:],
        img[2:, 2:],
        img[2:, 1:-1],
        img[2:, :-2],
        img[1:-1, :-2],
        img[:-2, :-2],
    )


def thin(mask: BinaryMask) -> Skeleton:
    """Two-subcycle morphological thinning to a 1-px-wide skeleton.

    Each subcycle marks every deletable pixel against the current image and
    then deletes them all at once, so the result is deterministic and the
    whole pass is a fixed point once it makes no change (re-thinning a
    skeleton rendered as a mask returns it unchanged).
    """
    img = np.zeros((mask.height + 2, mask.width + 2), dtype=np.uint8)
    img[1:-1, 1:-1] = mask.bits
    core = img[1:-1, 1:-1]
    while True:
        changed = False
        for step in (0, 1):
            p2, p3, p4, p5, p6, p7, p8, p9 = _neighbors(img)
            ring = np.stack([p2, p3, p4, p5, p6, p7, p8, p9, p2])
            b = ring[:-1].sum(axis=0, dtype=np.int16)
            a = ((ring[:-1] == 0) & (ring[1:] == 1)).sum(axis=0, dtype=np.int16)
            if step == 0:
                cond = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            deletable = (core == 1) & (b >= 2) & (b <= 6) & (a == 1) & cond
            if deletable.any():
                core[deletable] = 0
                changed = True
        if not changed:
            break
    return Skeleton.from_mask(BinaryMask.from_array(core.astype(bool)))


def centerline_pixels(centerline_udf: GrayImage, tau: float = 0.5) -> Skeleton:
    """Centerline pixels recovered from an unsigned distance field.

    With the default tau of 0.5 px this is exactly the zero-distance set, so
    dataset-provided fields reproduce their authoring centerlines. Sentinel
    (empty-annotation) fields yield an empty skeleton.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    ys, xs = np.nonzero(centerline_udf.data < tau)
    return Skeleton(
        frozenset(zip(xs.tolist(), ys.tolist())),
        centerline_udf.width,
        centerline_udf.height,
    )
