"""Shared test oracles and synthetic data builders.

The oracles here are deliberately naive, independent re-derivations:
brute-force nearest-feature search for distance transforms, a textbook
double-loop thinning pass, pairwise AUC enumeration. Implementation tests
compare the package's fast paths against these.
"""

from __future__ import annotations

import math

import numpy as np

from vesselvar import BinaryMask, GrayImage, SourceImage, build_annotation


def brute_force_edt_sq(bits: np.ndarray) -> np.ndarray:
    """Squared distance to the nearest foreground pixel, by full search."""
    h, w = bits.shape
    ys, xs = np.nonzero(bits)
    if len(ys) == 0:
        raise ValueError("no features")
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            best = None
            for fy, fx in zip(ys, xs):
                d = (x - int(fx)) ** 2 + (y - int(fy)) ** 2
                if best is None or d < best:
                    best = d
            out[y, x] = best
    return out


def reference_thin(bits: np.ndarray) -> np.ndarray:
    """Classic two-subiteration thinning, direct per-pixel loops."""
    img = bits.astype(np.uint8).copy()
    h, w = img.shape

    def at(y, x):
        if 0 <= y < h and 0 <= x < w:
            return int(img[y, x])
        return 0

    changed = True
    while changed:
        changed = False
        for step in range(2):
            marks = []
            for y in range(h):
                for x in range(w):
                    if img[y, x] == 0:
                        continue
                    p2 = at(y - 1, x)
                    p3 = at(y - 1, x + 1)
                    p4 = at(y, x + 1)
                    p5 = at(y + 1, x + 1)
                    p6 = at(y + 1, x)
                    p7 = at(y + 1, x - 1)
                    p8 = at(y, x - 1)
                    p9 = at(y - 1, x - 1)
                    ring = [p2, p3, p4, p5, p6, p7, p8, p9]
                    if not (2 <= sum(ring) <= 6):
                        continue
                    a = sum(
                        1
                        for i in range(8)
                        if ring[i] == 0 and ring[(i + 1) % 8] == 1
                    )
                    if a != 1:
                        continue
                    if step == 0:
                        if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                            continue
                    else:
                        if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                            continue
                    marks.append((y, x))
            if marks:
                changed = True
                for y, x in marks:
                    img[y, x] = 0
    return img.astype(bool)


def brute_force_auc(positives, negatives) -> float:
    """Pairwise win/tie enumeration, ties counted half."""
    wins = 0.0
    for p in positives:
        for q in negatives:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(positives) * len(negatives))


def gaussian_blur_oracle(data: np.ndarray, sigma: float) -> np.ndarray:
    """Separable truncated-Gaussian blur built from shifted views of a
    symmetric-padded array; shares no code with the package's filters."""
    radius = math.ceil(4.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    k /= k.sum()
    padded = np.pad(data, radius, mode="symmetric")
    h, w = data.shape
    tmp = np.zeros((h, w + 2 * radius))
    for i, weight in enumerate(k):
        tmp += weight * padded[i : i + h, :]
    out = np.zeros((h, w))
    for j, weight in enumerate(k):
        out += weight * tmp[:, j : j + w]
    return out


def random_mask(rng: np.random.Generator, h: int, w: int, p: float) -> BinaryMask:
    return BinaryMask.from_array(rng.random((h, w)) < p)


def blob_mask(rng: np.random.Generator, h: int, w: int, n_blobs=(1, 4)) -> BinaryMask:
    """A few stamped disks; produces connected, vessel-ish foreground."""
    bits = np.zeros((h, w), bool)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(n_blobs[0], n_blobs[1] + 1))):
        cy = rng.uniform(0, h - 1)
        cx = rng.uniform(0, w - 1)
        r = rng.uniform(1.0, max(2.0, min(h, w) / 4))
        bits |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return BinaryMask.from_array(bits)


def annotation_pair(rng: np.random.Generator, h: int = 16, w: int = 16):
    """Two overlapping random blob annotations for property tests."""
    a = blob_mask(rng, h, w)
    # second mask: same blobs perturbed, plus occasional extra blob
    shift = int(rng.integers(-2, 3))
    rolled = np.roll(a.bits, shift, axis=int(rng.integers(0, 2)))
    if rng.random() < 0.4:
        rolled = rolled | blob_mask(rng, h, w, (1, 1)).bits
    b = BinaryMask.from_array(rolled)
    return (
        build_annotation(a, annotator_id="A1"),
        build_annotation(b, annotator_id="A2"),
    )


def line_annotation(columns, row: int, h: int, w: int, annotator_id: str):
    """A one-pixel-thick horizontal line; its own skeleton and centerline."""
    bits = np.zeros((h, w), bool)
    for x in columns:
        bits[row, x] = True
    return build_annotation(BinaryMask.from_array(bits), annotator_id=annotator_id)


def draw_tube(bits: np.ndarray, x0, y0, x1, y1, radius: float) -> None:
    """Stamp a thick line segment (capsule) into a boolean array."""
    h, w = bits.shape
    steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
    for t in np.linspace(0.0, 1.0, steps * 2):
        cx = x0 + (x1 - x0) * t
        cy = y0 + (y1 - y0) * t
        xlo = max(0, int(cx - radius) - 1)
        xhi = min(w, int(cx + radius) + 2)
        ylo = max(0, int(cy - radius) - 1)
        yhi = min(h, int(cy + radius) + 2)
        for y in range(ylo, yhi):
            for x in range(xlo, xhi):
                if (x - cx) ** 2 + (y - cy) ** 2 <= radius * radius:
                    bits[y, x] = True


def make_vessel_source(idx: int, rng: np.random.Generator, size: int = 192) -> SourceImage:
    """A synthetic angiogram-like source: dark tubes on a bright background,
    two annotators with systematic differences, and an empty bottom band so
    background (NONE) circles always have room."""
    h = w = size
    img = rng.uniform(0.6, 0.9, (h, w))
    a = np.zeros((h, w), bool)
    b = np.zeros((h, w), bool)
    band = int(size * 0.55)
    for _ in range(3):
        x0, y0 = int(rng.integers(5, w // 3)), int(rng.integers(5, band))
        x1, y1 = int(rng.integers(2 * w // 3, w - 6)), int(rng.integers(5, band))
        draw_tube(a, x0, y0, x1, y1, 3.0)
        draw_tube(b, x0 + int(rng.integers(-2, 3)), y0 + int(rng.integers(-2, 3)), x1, y1, 2.2)
    x0, y0 = int(rng.integers(10, w // 2)), int(rng.integers(8, band // 2))
    draw_tube(a, x0, y0, min(w - 4, x0 + 70), min(band, y0 + 40), 2.5)
    x0, y0 = int(rng.integers(w // 2, w - 20)), int(rng.integers(8, band // 2))
    draw_tube(b, x0, y0, max(4, x0 - 60), min(band, y0 + 50), 2.5)
    img[a] -= 0.35
    img = np.clip(img, 0.0, 1.0)
    return SourceImage(
        image_id=f"img{idx:02d}",
        image=GrayImage.from_array(img),
        masks=(
            ("A1", BinaryMask.from_array(a)),
            ("A2", BinaryMask.from_array(b)),
        ),
    )
