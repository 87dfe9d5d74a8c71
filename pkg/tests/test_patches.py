from __future__ import annotations

import hashlib
import itertools
import json
import math

import numpy as np
import pytest

from helpers import make_vessel_source
from vesselvar import (
    BinaryMask,
    GrayImage,
    QuotaShortfall,
    SourceImage,
    build_annotation,
    build_rating_set,
    disagreement_components,
    exact_edt,
    load_rating_set,
    load_source_dataset,
    min_enclosing_circle,
    sample_patches,
    thin,
    write_rating_bundle,
)
from vesselvar.patches import (
    CATEGORIES,
    CATEGORY_A1_ONLY,
    CATEGORY_A2_ONLY,
    CATEGORY_BOTH,
    CATEGORY_NONE,
    DEFAULT_QUOTAS,
    NONE_CIRCLE_RADIUS,
    NONE_CLEARANCE_PX,
    QUESTION,
    RatingItem,
    RatingSet,
    load_dataset_index,
    patch_id_for,
    rotate_circle,
    rotate_point,
    rotated_patch_id,
)


# ---------------------------------------------------------------------------
# patch sampling
# ---------------------------------------------------------------------------


def test_patch_id_is_stable_hash():
    expected = hashlib.sha256(b"img01|3|4|128").hexdigest()[:16]
    assert patch_id_for("img01", (3, 4), 128) == expected


def test_same_seed_reproduces_patch_list(vessel_sources):
    first = sample_patches(vessel_sources, n=12, size=64, seed=5)
    second = sample_patches(vessel_sources, n=12, size=64, seed=5)
    assert [p.patch_id for p in first] == [p.patch_id for p in second]
    assert [p.origin for p in first] == [p.origin for p in second]
    third = sample_patches(vessel_sources, n=12, size=64, seed=6)
    assert [p.patch_id for p in third] != [p.patch_id for p in first]


def test_thread_count_does_not_change_patches(vessel_sources):
    seq = sample_patches(vessel_sources, n=10, size=64, seed=9, threads=1)
    par = sample_patches(vessel_sources, n=10, size=64, seed=9, threads=4)
    assert [p.patch_id for p in seq] == [p.patch_id for p in par]
    for a, b in zip(seq, par):
        np.testing.assert_array_equal(a.image.data, b.image.data)


def test_origins_stay_inside_sources(vessel_sources):
    size = 64
    by_id = {s.image_id: s for s in vessel_sources}
    for p in sample_patches(vessel_sources, n=200, size=size, seed=1):
        src = by_id[p.source_image_id]
        x, y = p.origin
        assert 0 <= x <= src.image.width - size
        assert 0 <= y <= src.image.height - size
        assert p.size == size and p.image.width == size


def test_full_size_patch_has_single_origin(vessel_sources):
    src = vessel_sources[0]
    patches = sample_patches([src], n=5, size=src.image.width, seed=3)
    assert all(p.origin == (0, 0) for p in patches)
    assert len({p.patch_id for p in patches}) == 1


def test_sampling_validation(vessel_sources):
    with pytest.raises(ValueError):
        sample_patches([], n=3, size=32, seed=0)
    with pytest.raises(ValueError):
        sample_patches(vessel_sources, n=0, size=32, seed=0)
    with pytest.raises(ValueError):
        sample_patches(vessel_sources, n=3, size=10_000, seed=0)


def test_annotations_are_recomputed_on_the_crop(vessel_sources):
    patch = sample_patches(vessel_sources, n=3, size=64, seed=2)[0]
    src = {s.image_id: s for s in vessel_sources}[patch.source_image_id]
    x, y = patch.origin
    for (annotator_id, mask), ann in zip(src.masks, patch.annotations):
        assert ann.annotator_id == annotator_id
        crop = BinaryMask.from_array(mask.bits[y : y + 64, x : x + 64])
        np.testing.assert_array_equal(ann.mask.bits, crop.bits)
        # centerline field belongs to the crop's own skeleton, not a crop
        # of the source-level field
        expected_udf = exact_edt(thin(crop).to_mask())
        np.testing.assert_array_equal(ann.centerline_udf.data, expected_udf.data)


# ---------------------------------------------------------------------------
# minimal enclosing circles
# ---------------------------------------------------------------------------


def brute_force_mec(points):
    pts = list(points)
    if len(pts) == 1:
        return (pts[0][0], pts[0][1], 0.0)
    best = None

    def covers_all(c):
        cx, cy, r = c
        return all(math.hypot(x - cx, y - cy) <= r + 1e-9 for x, y in pts)

    for p, q in itertools.combinations(pts, 2):
        c = ((p[0] + q[0]) / 2, (p[1] + q[1]) / 2, math.hypot(p[0] - q[0], p[1] - q[1]) / 2)
        if covers_all(c) and (best is None or c[2] < best[2]):
            best = c
    for p, q, s in itertools.combinations(pts, 3):
        d = 2.0 * (p[0] * (q[1] - s[1]) + q[0] * (s[1] - p[1]) + s[0] * (p[1] - q[1]))
        if abs(d) < 1e-12:
            continue
        ux = (
            (p[0] ** 2 + p[1] ** 2) * (q[1] - s[1])
            + (q[0] ** 2 + q[1] ** 2) * (s[1] - p[1])
            + (s[0] ** 2 + s[1] ** 2) * (p[1] - q[1])
        ) / d
        uy = (
            (p[0] ** 2 + p[1] ** 2) * (s[0] - q[0])
            + (q[0] ** 2 + q[1] ** 2) * (p[0] - s[0])
            + (s[0] ** 2 + s[1] ** 2) * (q[0] - p[0])
        ) / d
        c = (ux, uy, math.hypot(p[0] - ux, p[1] - uy))
        if covers_all(c) and (best is None or c[2] < best[2]):
            best = c
    return best


def test_min_enclosing_circle_matches_brute_force():
    rng = np.random.default_rng(77)
    for _ in range(60):
        n = int(rng.integers(1, 12))
        pts = {(int(x), int(y)) for x, y in rng.integers(0, 30, (n, 2))}
        cx, cy, r = min_enclosing_circle(pts)
        assert all(math.hypot(x - cx, y - cy) <= r + 1e-7 for x, y in pts)
        expected = brute_force_mec(pts)
        assert abs(r - expected[2]) <= 1e-7


def test_min_enclosing_circle_goldens():
    assert min_enclosing_circle([(4, 5)]) == (4.0, 5.0, 0.0)
    cx, cy, r = min_enclosing_circle([(0, 0), (6, 0)])
    assert (cx, cy) == (3.0, 0.0) and r == 3.0
    cx, cy, r = min_enclosing_circle([(0, 0), (2, 0), (6, 0)])  # collinear
    assert abs(cx - 3.0) < 1e-9 and abs(r - 3.0) < 1e-9
    with pytest.raises(ValueError):
        min_enclosing_circle([])


def test_rotate_point_matches_array_rotation():
    size = 9
    x, y = 5, 2
    grid = np.zeros((size, size))
    grid[y, x] = 1.0
    for degrees, k in ((90, 1), (180, 2), (270, 3)):
        rx, ry = rotate_point(x, y, size, degrees)
        rotated = np.rot90(grid, k=k)
        assert rotated[int(ry), int(rx)] == 1.0, degrees
    assert rotate_point(x, y, size, 0) == (5, 2)
    with pytest.raises(ValueError):
        rotate_point(x, y, size, 45)


# ---------------------------------------------------------------------------
# disagreement labeling
# ---------------------------------------------------------------------------


def line_mask(h, w, row, cols):
    bits = np.zeros((h, w), bool)
    bits[row, list(cols)] = True
    return BinaryMask.from_array(bits)


def test_identical_annotations_yield_only_both():
    mask = line_mask(16, 16, 8, range(2, 14))
    a = build_annotation(mask, annotator_id="A1")
    b = build_annotation(mask, annotator_id="A2")
    comps = disagreement_components(a, b, none_candidates=0)
    assert [c.category for c in comps] == [CATEGORY_BOTH]
    assert comps[0].pixels == frozenset((x, 8) for x in range(2, 14))


def test_disjoint_halves_yield_one_of_each_side():
    a = build_annotation(line_mask(16, 16, 8, range(0, 7)), annotator_id="A1")
    b = build_annotation(line_mask(16, 16, 8, range(9, 16)), annotator_id="A2")
    comps = disagreement_components(a, b, none_candidates=0)
    cats = sorted(c.category for c in comps)
    assert cats == [CATEGORY_A1_ONLY, CATEGORY_A2_ONLY]


def test_empty_pair_yields_only_none_candidates():
    empty = build_annotation(BinaryMask.from_array(np.zeros((64, 64), bool)))
    comps = disagreement_components(empty, empty, seed=4, none_candidates=3)
    assert len(comps) == 3
    for c in comps:
        assert c.category == CATEGORY_NONE
        cx, cy, r = c.circle
        assert r == NONE_CIRCLE_RADIUS
        assert r <= cx <= 63 - r and r <= cy <= 63 - r


def test_category_membership_definitions():
    rng = np.random.default_rng(21)
    src = make_vessel_source(0, rng, size=128)
    (_, ma), (_, mb) = src.masks
    a = build_annotation(ma, annotator_id="A1")
    b = build_annotation(mb, annotator_id="A2")
    comps = disagreement_components(a, b, seed=1)
    seen = {cat: 0 for cat in CATEGORIES}
    for c in comps:
        seen[c.category] += 1
        for x, y in c.pixels:
            if c.category == CATEGORY_BOTH:
                assert ma.bits[y, x] and mb.bits[y, x]
            elif c.category == CATEGORY_A1_ONLY:
                assert ma.bits[y, x] and not mb.bits[y, x]
            elif c.category == CATEGORY_A2_ONLY:
                assert mb.bits[y, x] and not ma.bits[y, x]
    assert seen[CATEGORY_BOTH] >= 1
    assert seen[CATEGORY_A1_ONLY] >= 1
    assert seen[CATEGORY_A2_ONLY] >= 1


def test_component_circles_carry_margin():
    a = build_annotation(line_mask(32, 32, 10, range(4, 12)), annotator_id="A1")
    b = build_annotation(BinaryMask.from_array(np.zeros((32, 32), bool)), annotator_id="A2")
    comps = disagreement_components(a, b, none_candidates=0)
    assert len(comps) == 1
    cx, cy, r = comps[0].circle
    worst = max(math.hypot(x - cx, y - cy) for x, y in comps[0].pixels)
    assert r == pytest.approx(worst + 2.0, abs=1e-9)


def test_none_circles_keep_clearance_from_vessels():
    rng = np.random.default_rng(23)
    src = make_vessel_source(1, rng, size=192)
    (_, ma), (_, mb) = src.masks
    a = build_annotation(ma, annotator_id="A1")
    b = build_annotation(mb, annotator_id="A2")
    comps = disagreement_components(a, b, seed=2, none_candidates=4)
    nones = [c for c in comps if c.category == CATEGORY_NONE]
    assert nones
    union = exact_edt(BinaryMask.from_array(ma.bits | mb.bits))
    for c in nones:
        cx, cy, r = c.circle
        assert union.data[int(cy), int(cx)] >= NONE_CIRCLE_RADIUS + NONE_CLEARANCE_PX
        assert r <= cx <= 191 - r and r <= cy <= 191 - r


def test_components_are_deterministic():
    rng = np.random.default_rng(25)
    src = make_vessel_source(2, rng, size=128)
    (_, ma), (_, mb) = src.masks
    a = build_annotation(ma, annotator_id="A1")
    b = build_annotation(mb, annotator_id="A2")
    c1 = disagreement_components(a, b, seed=7)
    c2 = disagreement_components(a, b, seed=7)
    assert [(c.category, c.circle) for c in c1] == [(c.category, c.circle) for c in c2]


# ---------------------------------------------------------------------------
# rating-set construction
# ---------------------------------------------------------------------------


def test_rating_set_meets_quotas(rating_items):
    base = [it for it in rating_items if it.duplicate_of is None]
    dups = [it for it in rating_items if it.duplicate_of is not None]
    assert len(rating_items) == 107
    assert len(base) == 100 and len(dups) == 7
    counts = {cat: 0 for cat in CATEGORIES}
    for it in base:
        counts[it.category] += 1
    assert counts == DEFAULT_QUOTAS
    assert len({it.item_id for it in rating_items}) == 107


def test_duplicates_are_rotated_probes(rating_items):
    by_id = {it.item_id: it for it in rating_items}
    for dup in rating_items:
        if dup.duplicate_of is None:
            assert dup.rotation_deg == 0
            continue
        base = by_id[dup.duplicate_of]
        assert dup.rotation_deg in (90, 180, 270)
        assert dup.category == base.category
        assert dup.patch_id == rotated_patch_id(base.patch_id, dup.rotation_deg)
        assert dup.patch_id != base.patch_id
        assert dup.circle == rotate_circle(base.circle, 128, dup.rotation_deg)


def test_build_is_deterministic_and_order_independent(vessel_patches, rating_items):
    again = build_rating_set(vessel_patches, seed=3)
    assert again == rating_items
    reordered = build_rating_set(list(reversed(vessel_patches)), seed=3)
    assert reordered == rating_items
    other_seed = build_rating_set(vessel_patches, seed=4)
    assert other_seed != rating_items


def test_quota_shortfall_reports_counts(vessel_patches):
    with pytest.raises(QuotaShortfall) as exc:
        build_rating_set(vessel_patches[:2], seed=0)
    shortfalls = exc.value.shortfalls
    assert shortfalls
    for cat, (have, need) in shortfalls.items():
        assert cat in CATEGORIES and have < need


def test_build_rating_set_validation(vessel_patches):
    with pytest.raises(ValueError):
        build_rating_set(vessel_patches, quotas={"WEIRD": 1}, seed=0)
    with pytest.raises(ValueError):
        build_rating_set(vessel_patches, n_duplicates=-1, seed=0)
    small = build_rating_set(
        vessel_patches, quotas={CATEGORY_NONE: 2}, n_duplicates=0, seed=0
    )
    assert len(small) == 2
    with pytest.raises(ValueError):
        build_rating_set(vessel_patches, quotas={CATEGORY_NONE: 2}, n_duplicates=3, seed=0)


def test_rating_item_and_set_validation():
    item = RatingItem(item_id="i1", patch_id="p1", circle=(4, 4, 3), category="BOTH")
    assert item.question == QUESTION
    with pytest.raises(ValueError):
        RatingItem(item_id="i2", patch_id="p1", circle=(4, 4, 3), category="MAYBE")
    with pytest.raises(ValueError):  # rotation without duplicate_of
        RatingItem(
            item_id="i3", patch_id="p1", circle=(4, 4, 3), category="BOTH", rotation_deg=90
        )
    with pytest.raises(ValueError):  # duplicate ids
        RatingSet(seed=0, question=QUESTION, items=(item, item))
    dangling = RatingItem(
        item_id="i4",
        patch_id="p2",
        circle=(4, 4, 3),
        category="BOTH",
        duplicate_of="missing",
        rotation_deg=90,
    )
    with pytest.raises(ValueError):
        RatingSet(seed=0, question=QUESTION, items=(item, dangling))


# ---------------------------------------------------------------------------
# bundles on disk
# ---------------------------------------------------------------------------


def test_bundle_round_trip(bundle_dir, rating_items):
    rset = load_rating_set(bundle_dir)
    assert rset.seed == 3 and rset.question == QUESTION
    assert list(rset.items) == list(rating_items)
    index = load_dataset_index(bundle_dir)
    for it in rating_items:
        entry = index[it.patch_id]
        assert (bundle_dir / entry["file"]).is_file()
        if it.duplicate_of is not None:
            assert entry["rotation_deg"] == it.rotation_deg


def test_rotated_patch_images_match_base(bundle_dir, rating_items):
    from vesselvar import load_gray

    by_id = {it.item_id: it for it in rating_items}
    checked = 0
    for dup in rating_items:
        if dup.duplicate_of is None:
            continue
        base = by_id[dup.duplicate_of]
        base_img = load_gray(bundle_dir / "patches" / f"{base.patch_id}.png")
        dup_img = load_gray(bundle_dir / "patches" / f"{dup.patch_id}.png")
        np.testing.assert_array_equal(
            dup_img.data, np.rot90(base_img.data, k=dup.rotation_deg // 90)
        )
        checked += 1
    assert checked == 7


def test_bundle_bytes_are_reproducible(tmp_path, vessel_patches, rating_items):
    out1 = tmp_path / "b1"
    out2 = tmp_path / "b2"
    write_rating_bundle(out1, vessel_patches, rating_items, seed=3)
    write_rating_bundle(out2, vessel_patches, rating_items, seed=3)
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel


def test_item_json_round_trip(bundle_dir):
    raw = json.loads((bundle_dir / "rating_set.json").read_text())
    assert raw["question"] == QUESTION
    assert len(raw["items"]) == 107
    for obj in raw["items"]:
        assert set(obj) == {
            "item_id", "patch_id", "circle", "category", "question",
            "duplicate_of", "rotation_deg",
        }


# ---------------------------------------------------------------------------
# source datasets on disk
# ---------------------------------------------------------------------------


def test_load_source_dataset(dataset_dir, vessel_sources):
    sources = load_source_dataset(dataset_dir)
    assert [s.image_id for s in sources] == [s.image_id for s in vessel_sources]
    for got, want in zip(sources, vessel_sources):
        assert [a for a, _ in got.masks] == [a for a, _ in want.masks]
        for (_, gm), (_, wm) in zip(got.masks, want.masks):
            np.testing.assert_array_equal(gm.bits, wm.bits)
        assert np.max(np.abs(got.image.data - want.image.data)) <= 1.0 / 65535.0


def test_source_image_validation():
    img = GrayImage.from_array(np.zeros((8, 8)))
    mask = BinaryMask.from_array(np.zeros((8, 8), bool))
    with pytest.raises(ValueError):
        SourceImage(image_id="", image=img, masks=(("A1", mask),))
    with pytest.raises(ValueError):
        SourceImage(
            image_id="x", image=img, masks=(("A1", mask), ("A1", mask))
        )
    with pytest.raises(ValueError):
        SourceImage(
            image_id="x",
            image=img,
            masks=(("A1", BinaryMask.from_array(np.zeros((4, 4), bool))),),
        )
