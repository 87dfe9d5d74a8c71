"""Random patch extraction, disagreement-region labeling, and rating sets.

Patches are square crops of annotated source images. Distance fields are
recomputed on each crop rather than cropped from full-image fields, because
a cropped field is wrong near patch borders (the nearest feature may lie
outside the crop); metric comparisons stay consistent within a patch.

Disagreement regions fall into four categories: BOTH annotators marked a
vessel, only the first (A1_ONLY), only the second (A2_ONLY), or neither
(NONE, sampled background circles). A rating set draws a quota of circled
regions per category and re-issues a few items rotated by multiples of 90
degrees as intra-rater consistency probes.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import label as nd_label

from .distance import exact_edt, is_sentinel_field
from .raster import (
    AnnotationSet,
    BinaryMask,
    GrayImage,
    build_annotation,
    load_gray,
    load_mask,
    save_gray,
)

QUESTION = "Do you think this is a vessel?"

CATEGORY_BOTH = "BOTH"
CATEGORY_A1_ONLY = "A1_ONLY"
CATEGORY_A2_ONLY = "A2_ONLY"
CATEGORY_NONE = "NONE"
CATEGORIES = (CATEGORY_BOTH, CATEGORY_A1_ONLY, CATEGORY_A2_ONLY, CATEGORY_NONE)

DEFAULT_QUOTAS = {
    CATEGORY_NONE: 10,
    CATEGORY_BOTH: 30,
    CATEGORY_A1_ONLY: 30,
    CATEGORY_A2_ONLY: 30,
}
DEFAULT_N_DUPLICATES = 7

NONE_CIRCLE_RADIUS = 16.0
NONE_CLEARANCE_PX = 8.0
CIRCLE_MARGIN_PX = 2.0
ROTATIONS = (90, 180, 270)


class QuotaShortfall(ValueError):
    """Raised when some category lacks enough candidate regions.

    shortfalls maps category -> (available, requested).
    """

    def __init__(self, shortfalls):
        self.shortfalls = dict(shortfalls)
        parts = ", ".join(
            f"{cat}: have {have}, need {need}"
            for cat, (have, need) in sorted(self.shortfalls.items())
        )
        super().__init__(f"not enough candidate regions ({parts})")


def _short_hash(text: str, n: int = 16) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:n]


def patch_id_for(source_image_id: str, origin, size: int) -> str:
    """Stable opaque id for a crop of a source image."""
    x, y = origin
    return _short_hash(f"{source_image_id}|{int(x)}|{int(y)}|{int(size)}")


@dataclass(frozen=True)
class SourceImage:
    """A grayscale image with one binary vessel mask per annotator."""

    image_id: str
    image: GrayImage
    masks: tuple  # of (annotator_id, BinaryMask)

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be nonempty")
        masks = tuple(self.masks)
        seen = set()
        for annotator_id, mask in masks:
            if annotator_id in seen:
                raise ValueError(f"duplicate annotator id {annotator_id!r}")
            seen.add(annotator_id)
            if not mask.same_shape(self.image):
                raise ValueError("mask dimensions must match image")
        object.__setattr__(self, "masks", masks)


@dataclass(frozen=True)
class Patch:
    """A size x size crop with per-annotator annotations rebuilt on the crop."""

    patch_id: str
    source_image_id: str
    origin: tuple  # (x, y) top-left in the source image
    size: int
    image: GrayImage
    annotations: tuple  # of AnnotationSet

    def __post_init__(self):
        x, y = self.origin
        if x < 0 or y < 0:
            raise ValueError("origin must be non-negative")
        object.__setattr__(self, "origin", (int(x), int(y)))
        if self.image.width != self.size or self.image.height != self.size:
            raise ValueError("patch image must be size x size")
        annotations = tuple(self.annotations)
        for ann in annotations:
            if not ann.mask.same_shape(self.image):
                raise ValueError("annotation crops must share patch dimensions")
        object.__setattr__(self, "annotations", annotations)


def _build_patch(source: SourceImage, x: int, y: int, size: int) -> Patch:
    sub = source.image.data[y : y + size, x : x + size]
    image = GrayImage.from_array(sub, spacing=source.image.spacing)
    annotations = []
    for annotator_id, mask in source.masks:
        crop = BinaryMask.from_array(mask.bits[y : y + size, x : x + size])
        annotations.append(build_annotation(crop, annotator_id=annotator_id))
    return Patch(
        patch_id=patch_id_for(source.image_id, (x, y), size),
        source_image_id=source.image_id,
        origin=(x, y),
        size=size,
        image=image,
        annotations=tuple(annotations),
    )


def sample_patches(sources, n: int, size: int, seed: int, threads: int = None):
    """Draw n seeded random patches across the sources.

    The source is picked uniformly, then the top-left corner uniformly over
    all positions keeping the patch inside the source. Draws are made
    sequentially from one generator, so the result depends only on the seed;
    patch construction may run on several threads without changing it.
    """
    sources = list(sources)
    if not sources:
        raise ValueError("need at least one source image")
    if n <= 0:
        raise ValueError("n must be > 0")
    size = int(size)
    limit = min(min(s.image.width, s.image.height) for s in sources)
    if size <= 0 or size > limit:
        raise ValueError(f"size must be in [1, {limit}]")
    rng = random.Random(seed)
    draws = []
    for _ in range(n):
        src = sources[rng.randrange(len(sources))]
        x = rng.randrange(src.image.width - size + 1)
        y = rng.randrange(src.image.height - size + 1)
        draws.append((src, x, y))
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda d: _build_patch(d[0], d[1], d[2], size), draws))
    return [_build_patch(src, x, y, size) for src, x, y in draws]


@dataclass(frozen=True)
class DisagreementComponent:
    """One candidate region with its enclosing rating circle.

    pixels is an 8-connected set of (x, y) coordinates; it is empty for NONE
    regions, which are background circles rather than labeled components.
    circle is (cx, cy, r) in pixel coordinates.
    """

    category: str
    pixels: frozenset
    circle: tuple

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        pixels = frozenset((int(x), int(y)) for x, y in self.pixels)
        object.__setattr__(self, "pixels", pixels)
        cx, cy, r = (float(v) for v in self.circle)
        if r <= 0:
            raise ValueError("circle radius must be > 0")
        for x, y in pixels:
            if (x - cx) ** 2 + (y - cy) ** 2 > r * r:
                raise ValueError("circle must enclose all component pixels")
        object.__setattr__(self, "circle", (cx, cy, r))


def _circle_two(p, q):
    cx = 0.5 * (p[0] + q[0])
    cy = 0.5 * (p[1] + q[1])
    return (cx, cy, math.hypot(p[0] - cx, p[1] - cy))


def _circle_three(p, q, s):
    ax, ay = p
    bx, by = q
    cx, cy = s
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-12:
        return None  # collinear
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    return (ux, uy, math.hypot(ax - ux, ay - uy))


def _covers(circle, p) -> bool:
    cx, cy, r = circle
    return math.hypot(p[0] - cx, p[1] - cy) <= r * (1.0 + 1e-10) + 1e-10


def min_enclosing_circle(points):
    """Smallest circle containing all points, as (cx, cy, r).

    Incremental construction over a deterministically shuffled point list
    (expected linear time); the minimal circle itself is order-independent.
    """
    pts = sorted({(float(x), float(y)) for x, y in points})
    if not pts:
        raise ValueError("need at least one point")
    random.Random(8191).shuffle(pts)
    circle = (pts[0][0], pts[0][1], 0.0)
    for i, p in enumerate(pts[1:], start=1):
        if _covers(circle, p):
            continue
        circle = (p[0], p[1], 0.0)
        for j in range(i):
            q = pts[j]
            if _covers(circle, q):
                continue
            circle = _circle_two(p, q)
            for k in range(j):
                s = pts[k]
                if _covers(circle, s):
                    continue
                c3 = _circle_three(p, q, s)
                if c3 is None:
                    # collinear triple: widest pairwise circle covers it
                    c3 = max(
                        (_circle_two(p, s), _circle_two(q, s), _circle_two(p, q)),
                        key=lambda c: c[2],
                    )
                circle = c3
    return circle


_EIGHT = np.ones((3, 3), dtype=bool)


def _labeled_components(fg: np.ndarray, category: str):
    labels, count = nd_label(fg, structure=_EIGHT)
    out = []
    for idx in range(1, count + 1):
        ys, xs = np.nonzero(labels == idx)
        pixels = frozenset(zip(xs.tolist(), ys.tolist()))
        cx, cy, r = min_enclosing_circle(pixels)
        out.append(
            DisagreementComponent(
                category=category,
                pixels=pixels,
                circle=(cx, cy, r + CIRCLE_MARGIN_PX),
            )
        )
    return out


def disagreement_components(
    a: AnnotationSet,
    b: AnnotationSet,
    seed: int = 0,
    none_candidates: int = 2,
):
    """Label where the two annotations differ, agree, or are both empty.

    A1_ONLY regions are 8-connected components of a-minus-b foreground,
    A2_ONLY of b-minus-a, BOTH of the intersection; each gets the minimal
    enclosing circle of its pixels grown by a 2 px margin. NONE candidates
    are seeded random fixed-radius background circles lying entirely inside
    the image and clear of both masks by at least NONE_CLEARANCE_PX.
    """
    if not a.mask.same_shape(b.mask):
        raise ValueError("annotations must share dimensions")
    fg_a, fg_b = a.mask.bits, b.mask.bits
    out = []
    out.extend(_labeled_components(fg_a & fg_b, CATEGORY_BOTH))
    out.extend(_labeled_components(fg_a & ~fg_b, CATEGORY_A1_ONLY))
    out.extend(_labeled_components(fg_b & ~fg_a, CATEGORY_A2_ONLY))

    if none_candidates > 0:
        h, w = fg_a.shape
        clearance = exact_edt(BinaryMask.from_array(fg_a | fg_b))
        if is_sentinel_field(clearance):
            far_enough = np.ones(clearance.data.shape, dtype=bool)
        else:
            far_enough = clearance.data >= NONE_CIRCLE_RADIUS + NONE_CLEARANCE_PX
        r = NONE_CIRCLE_RADIUS
        ys, xs = np.nonzero(far_enough)
        inside = (xs >= r) & (xs <= w - 1 - r) & (ys >= r) & (ys <= h - 1 - r)
        centers = sorted(zip(xs[inside].tolist(), ys[inside].tolist()))
        rng = random.Random(seed)
        for x, y in sorted(rng.sample(centers, min(none_candidates, len(centers)))):
            out.append(
                DisagreementComponent(
                    category=CATEGORY_NONE,
                    pixels=frozenset(),
                    circle=(float(x), float(y), r),
                )
            )
    return out


@dataclass(frozen=True)
class RatingItem:
    """One yes/no question about a circled region of a patch.

    category and duplicate_of are bookkeeping for analysis; they must never
    reach a rater. Duplicate items point at a rotated copy of the base
    patch under a fresh patch_id, so served payloads and image URLs carry
    no trace of the link.
    """

    item_id: str
    patch_id: str
    circle: tuple  # (cx, cy, r)
    category: str
    question: str = QUESTION
    duplicate_of: str = None
    rotation_deg: int = 0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.rotation_deg not in (0,) + ROTATIONS:
            raise ValueError("rotation must be a multiple of 90 degrees")
        if (self.duplicate_of is None) != (self.rotation_deg == 0):
            raise ValueError("duplicates (and only duplicates) carry a rotation")
        cx, cy, r = (float(v) for v in self.circle)
        object.__setattr__(self, "circle", (cx, cy, r))


def rotate_point(x: float, y: float, size: int, degrees: int):
    """Rotate a point counterclockwise with the pixel grid of a size x size
    image (pixel centers at integer coordinates)."""
    s = size - 1
    if degrees == 0:
        return (x, y)
    if degrees == 90:
        return (y, s - x)
    if degrees == 180:
        return (s - x, s - y)
    if degrees == 270:
        return (s - y, x)
    raise ValueError("rotation must be one of 0, 90, 180, 270")


def rotate_circle(circle, size: int, degrees: int):
    cx, cy, r = circle
    rx, ry = rotate_point(cx, cy, size, degrees)
    return (rx, ry, r)


def rotated_patch_id(base_patch_id: str, degrees: int) -> str:
    return _short_hash(f"{base_patch_id}|rot{int(degrees)}")


def build_rating_set(
    patches,
    quotas: dict = None,
    n_duplicates: int = DEFAULT_N_DUPLICATES,
    seed: int = 0,
):
    """Select circled regions to meet per-category quotas, plus probes.

    Candidate regions are gathered per patch (patches sorted by patch_id, so
    the result is independent of input order), then drawn uniformly per
    category with one seeded generator. n_duplicates selected items are
    re-issued rotated by a random angle in {90, 180, 270} under fresh ids.
    Raises QuotaShortfall when any category lacks candidates.
    """
    if quotas is None:
        quotas = DEFAULT_QUOTAS
    unknown = set(quotas) - set(CATEGORIES)
    if unknown:
        raise ValueError(f"unknown categories in quotas: {sorted(unknown)}")
    if n_duplicates < 0:
        raise ValueError("n_duplicates must be >= 0")

    unique = {}
    for patch in patches:
        unique.setdefault(patch.patch_id, patch)
    ordered = [unique[pid] for pid in sorted(unique)]

    pools = {cat: [] for cat in CATEGORIES}
    for patch in ordered:
        if len(patch.annotations) != 2:
            raise ValueError("rating sets need exactly two annotators per patch")
        a, b = patch.annotations
        comp_seed = int(_short_hash(f"{seed}|{patch.patch_id}", 12), 16)
        for comp_index, comp in enumerate(
            disagreement_components(a, b, seed=comp_seed)
        ):
            pools[comp.category].append((patch.patch_id, comp_index, comp))

    shortfalls = {
        cat: (len(pools[cat]), need)
        for cat, need in quotas.items()
        if len(pools[cat]) < need
    }
    if shortfalls:
        raise QuotaShortfall(shortfalls)

    rng = random.Random(seed)
    items = []
    for cat in CATEGORIES:
        need = quotas.get(cat, 0)
        if need == 0:
            continue
        for patch_id, comp_index, comp in sorted(
            rng.sample(pools[cat], need), key=lambda t: (t[0], t[1])
        ):
            items.append(
                RatingItem(
                    item_id=_short_hash(f"{seed}|{patch_id}|{comp_index}", 12),
                    patch_id=patch_id,
                    circle=comp.circle,
                    category=cat,
                )
            )

    if n_duplicates > len(items):
        raise ValueError("n_duplicates exceeds the number of base items")
    size_of = {p.patch_id: p.size for p in ordered}
    for base in sorted(rng.sample(items, n_duplicates), key=lambda it: it.item_id):
        degrees = rng.choice(ROTATIONS)
        items.append(
            RatingItem(
                item_id=_short_hash(f"{seed}|dup|{base.item_id}|{degrees}", 12),
                patch_id=rotated_patch_id(base.patch_id, degrees),
                circle=rotate_circle(base.circle, size_of[base.patch_id], degrees),
                category=base.category,
                duplicate_of=base.item_id,
                rotation_deg=degrees,
            )
        )
    return items


def _item_to_json(item: RatingItem) -> dict:
    cx, cy, r = item.circle
    return {
        "item_id": item.item_id,
        "patch_id": item.patch_id,
        "circle": {"cx": cx, "cy": cy, "r": r},
        "category": item.category,
        "question": item.question,
        "duplicate_of": item.duplicate_of,
        "rotation_deg": item.rotation_deg,
    }


def _item_from_json(obj: dict) -> RatingItem:
    c = obj["circle"]
    return RatingItem(
        item_id=obj["item_id"],
        patch_id=obj["patch_id"],
        circle=(c["cx"], c["cy"], c["r"]),
        category=obj["category"],
        question=obj.get("question", QUESTION),
        duplicate_of=obj.get("duplicate_of"),
        rotation_deg=obj.get("rotation_deg", 0),
    )


@dataclass(frozen=True)
class RatingSet:
    """A rating-set manifest: the fixed question, seed, and item list."""

    seed: int
    question: str
    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        ids = [it.item_id for it in items]
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")
        base = {it.item_id for it in items if it.duplicate_of is None}
        for it in items:
            if it.duplicate_of is not None and it.duplicate_of not in base:
                raise ValueError(f"duplicate_of {it.duplicate_of!r} not in set")
        object.__setattr__(self, "items", items)

    def item(self, item_id: str) -> RatingItem:
        for it in self.items:
            if it.item_id == item_id:
                return it
        raise KeyError(item_id)


def _dump_json(obj, path: Path) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def write_rating_bundle(out_dir, patches, items, seed: int) -> None:
    """Write a self-contained directory a rating service can serve.

    Layout: patches/<patch_id>.png (8-bit grayscale, one per referenced
    patch id, rotated copies included under their own ids), dataset.json
    (patch id -> file and annotator ids), rating_set.json (the item list).
    """
    out_dir = Path(out_dir)
    (out_dir / "patches").mkdir(parents=True, exist_ok=True)
    by_id = {p.patch_id: p for p in patches}
    index = {}
    for item in items:
        if item.duplicate_of is None:
            patch = by_id[item.patch_id]
            image = patch.image
            entry = {
                "file": f"patches/{item.patch_id}.png",
                "source_image_id": patch.source_image_id,
                "origin": list(patch.origin),
                "size": patch.size,
                "annotators": [a.annotator_id for a in patch.annotations],
            }
        else:
            base_item = next(i for i in items if i.item_id == item.duplicate_of)
            patch = by_id[base_item.patch_id]
            image = GrayImage.from_array(
                np.rot90(patch.image.data, k=item.rotation_deg // 90),
                spacing=patch.image.spacing,
            )
            entry = {
                "file": f"patches/{item.patch_id}.png",
                "rotation_of": base_item.patch_id,
                "rotation_deg": item.rotation_deg,
                "annotators": [a.annotator_id for a in patch.annotations],
            }
        if item.patch_id not in index:
            index[item.patch_id] = entry
            save_gray(image, out_dir / "patches" / f"{item.patch_id}.png", bit_depth=8)
    _dump_json({"patches": index}, out_dir / "dataset.json")
    _dump_json(
        {
            "seed": int(seed),
            "question": QUESTION,
            "items": [_item_to_json(it) for it in items],
        },
        out_dir / "rating_set.json",
    )


def load_rating_set(bundle_dir) -> RatingSet:
    path = Path(bundle_dir)
    if path.is_dir():
        path = path / "rating_set.json"
    obj = json.loads(path.read_text(encoding="utf-8"))
    return RatingSet(
        seed=int(obj["seed"]),
        question=obj["question"],
        items=tuple(_item_from_json(o) for o in obj["items"]),
    )


def load_dataset_index(bundle_dir) -> dict:
    obj = json.loads(
        (Path(bundle_dir) / "dataset.json").read_text(encoding="utf-8")
    )
    return obj["patches"]


def load_source_dataset(root):
    """Load a source dataset index: root/dataset.json lists images with
    per-annotator mask files, all paths relative to root."""
    root = Path(root)
    obj = json.loads((root / "dataset.json").read_text(encoding="utf-8"))
    sources = []
    seen = set()
    for rec in obj["images"]:
        image_id = rec["image_id"]
        if image_id in seen:
            raise ValueError(f"duplicate image_id {image_id!r}")
        seen.add(image_id)
        image = load_gray(root / rec["image"])
        masks = tuple(
            (ann["annotator_id"], load_mask(root / ann["mask"]))
            for ann in rec["annotations"]
        )
        sources.append(SourceImage(image_id=image_id, image=image, masks=masks))
    return sources
