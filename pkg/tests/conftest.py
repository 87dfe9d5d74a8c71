from __future__ import annotations

import json

import numpy as np
import pytest

from helpers import make_vessel_source
from vesselvar import GrayImage, build_rating_set, sample_patches, save_gray, write_rating_bundle


@pytest.fixture(scope="session")
def vessel_sources():
    rng = np.random.default_rng(99)
    return [make_vessel_source(i, rng) for i in range(6)]


@pytest.fixture(scope="session")
def vessel_patches(vessel_sources):
    return sample_patches(vessel_sources, n=90, size=128, seed=7)


@pytest.fixture(scope="session")
def rating_items(vessel_patches):
    return build_rating_set(vessel_patches, seed=3)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, vessel_sources):
    """The synthetic sources written out as an on-disk dataset for the CLI."""
    root = tmp_path_factory.mktemp("dataset")
    records = []
    for src in vessel_sources:
        img_name = f"{src.image_id}.png"
        save_gray(src.image, root / img_name, bit_depth=16)
        annotations = []
        for annotator_id, mask in src.masks:
            mask_name = f"{src.image_id}.{annotator_id}.png"
            save_gray(
                GrayImage.from_array(mask.bits.astype(np.float64)),
                root / mask_name,
                bit_depth=8,
            )
            annotations.append({"annotator_id": annotator_id, "mask": mask_name})
        records.append(
            {"image_id": src.image_id, "image": img_name, "annotations": annotations}
        )
    (root / "dataset.json").write_text(
        json.dumps({"images": records}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    return root


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory, vessel_patches, rating_items):
    """A written rating bundle ready for the service."""
    out = tmp_path_factory.mktemp("bundle")
    write_rating_bundle(out, vessel_patches, rating_items, seed=3)
    return out
