import csv
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))


def synth_image(seed: int, size=(24, 24)) -> Image.Image:
    """Small deterministic RGB test image."""
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    ramp = np.linspace(0, 255, size[0], dtype=np.uint8)[None, :, None]
    return Image.fromarray(np.clip(base // 2 + ramp // 2, 0, 255).astype(np.uint8))


@pytest.fixture
def image_folder(tmp_path):
    """Four labeled images plus a corrupt file that must be skipped."""
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    labels = {
        "img_a": {"color": "red", "kind": "chair"},
        "img_b": {"color": "blue", "kind": "chair"},
        "img_c": {"color": "red", "kind": "stool"},
        "img_d": {"color": "blue", "kind": "stool"},
    }
    for i, name in enumerate(sorted(labels)):
        synth_image(seed=i).save(img_dir / f"{name}.png")
    (img_dir / "img_broken.png").write_bytes(b"this is not a png")
    labels["img_broken"] = {"color": "red", "kind": "chair"}

    csv_path = tmp_path / "labels.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "color", "kind"])
        for item_id in sorted(labels):
            writer.writerow([item_id, labels[item_id]["color"], labels[item_id]["kind"]])
    return img_dir, csv_path


@pytest.fixture
def prompt_file(tmp_path):
    path = tmp_path / "prompts.txt"
    lines = ["a photo of running", "a photo of jumping", "a photo of running"]
    path.write_text("\n".join(lines) + "\n")
    return path
