from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from pseudodet import (
    Annotation,
    Box,
    Category,
    Dataset,
    DEFAULT_VIEWS,
    DetectorModel,
    ImageInfo,
    SceneConfig,
    generate_scenes,
    save_dataset,
    save_detections,
    simulate_detector,
)


def build_corpus(root, n_labeled=8, n_unlabeled=40, seed=0):
    """Write a labeled set, an unlabeled pool, and a raw detection file."""
    scene = SceneConfig()
    labeled = generate_scenes(scene, n_labeled, seed, start_image_id=1, file_prefix="labeled")
    unlabeled = generate_scenes(
        scene, n_unlabeled, seed, start_image_id=n_labeled + 1, file_prefix="unlabeled"
    )
    preds = simulate_detector(unlabeled, DetectorModel(), DEFAULT_VIEWS, seed)
    paths = {
        "labeled": root / "labeled.json",
        "dataset": root / "unlabeled.json",
        "detections": root / "detections.json",
    }
    save_dataset(labeled, paths["labeled"])
    save_dataset(unlabeled, paths["dataset"])
    save_detections(preds, paths["detections"])
    return paths


@pytest.fixture
def tiny_labeled() -> Dataset:
    """Two labeled images with one ground-truth box each."""
    return Dataset(
        images=[
            ImageInfo(1, 640, 480, "img_000001.png"),
            ImageInfo(2, 640, 480, "img_000002.png"),
        ],
        annotations=[
            Annotation(1, 1, 1, Box(100, 100, 200, 200)),
            Annotation(2, 2, 2, Box(50, 60, 120, 130)),
        ],
        categories=[Category(1, "class_1"), Category(2, "class_2"), Category(3, "class_3")],
    )


@pytest.fixture
def tiny_pool() -> Dataset:
    """Unlabeled pool of four images (no annotations)."""
    return Dataset(
        images=[ImageInfo(i, 640, 480, f"img_{i:06d}.png") for i in (101, 102, 103, 104)],
        annotations=[],
        categories=[Category(1, "class_1"), Category(2, "class_2"), Category(3, "class_3")],
    )
