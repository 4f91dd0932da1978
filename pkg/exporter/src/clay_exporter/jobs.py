"""Export jobs: image folders and prompt lists to engine-readable files.

The exporter only encodes and writes; similarity, subspaces, and
evaluation all live in the engine. Undecodable images are skipped and
listed in the manifest's source string so a run is auditable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from .encoders import load_encoder
from .errors import DecodeError, EmptyPromptFile, LabelFileError
from .formats import write_embedding_file, write_manifest_file

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


@dataclass
class ExportJob:
    model_id: str
    image_dir: str | None = None
    prompt_file: str | None = None
    label_csv: str | None = None
    out_embeddings: str = "embeddings.clayemb"
    out_manifest: str = "manifest.json"
    batch_size: int = 16
    skipped: list[str] = field(default_factory=list)


def read_label_csv(path) -> tuple[list[str], dict[str, dict[str, str]]]:
    """(attribute names, id -> {attr: value}) from a header CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LabelFileError(f"{path}: empty label file") from None
        if len(header) < 2 or header[0].strip().lower() != "id":
            raise LabelFileError(
                f"{path}: first column must be 'id' followed by attribute names"
            )
        attrs = [h.strip() for h in header[1:]]
        rows: dict[str, dict[str, str]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise LabelFileError(f"{path}:{lineno}: expected {len(header)} columns")
            item_id = row[0].strip()
            if item_id in rows:
                raise LabelFileError(f"{path}:{lineno}: duplicate id {item_id!r}")
            rows[item_id] = {a: v.strip() for a, v in zip(attrs, row[1:])}
    return attrs, rows


def _load_image(path: Path) -> Image.Image:
    try:
        with Image.open(path) as img:
            img.load()
            return img.copy()
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def export_images(job: ExportJob) -> tuple[str, str]:
    """Encode every image in ``image_dir``; returns the two output paths.

    Row order matches the manifest order (ids sorted). Images that fail
    to decode are skipped and reported in manifest.source; ids without a
    label row abort the job.
    """
    if not job.image_dir or not job.label_csv:
        raise LabelFileError("export_images needs image_dir and label_csv")
    attrs, label_rows = read_label_csv(job.label_csv)
    files = sorted(
        p for p in Path(job.image_dir).iterdir()
        if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not files:
        raise DecodeError(f"{job.image_dir}: no image files found")
    unlabeled = [p.stem for p in files if p.stem not in label_rows]
    if unlabeled:
        raise LabelFileError(
            f"{len(unlabeled)} image id(s) missing from {job.label_csv} "
            f"(first: {unlabeled[0]!r})"
        )

    encoder = load_encoder(job.model_id)
    kept: list[Path] = []
    images: list[Image.Image] = []
    for path in files:
        try:
            images.append(_load_image(path))
            kept.append(path)
        except DecodeError as exc:
            job.skipped.append(str(exc))

    if not kept:
        raise DecodeError(f"{job.image_dir}: every image failed to decode")
    blocks = [
        encoder.encode_images(images[i:i + job.batch_size])
        for i in range(0, len(images), job.batch_size)
    ]
    import numpy as np

    rows = np.vstack(blocks)
    write_embedding_file(job.out_embeddings, rows)

    source = f"clay-export model={encoder.model_id}"
    if job.skipped:
        source += f"; skipped {len(job.skipped)}: " + " | ".join(job.skipped)
    items = [(p.stem, label_rows[p.stem]) for p in kept]
    attributes = [
        (a, sorted({labels[a] for _, labels in items})) for a in attrs
    ]
    write_manifest_file(job.out_manifest, items, attributes, source)
    return job.out_embeddings, job.out_manifest


def export_prompts(job: ExportJob) -> str:
    """Encode a one-prompt-per-line file; line order and duplicates kept."""
    if not job.prompt_file:
        raise EmptyPromptFile("export_prompts needs prompt_file")
    lines = [
        line.strip()
        for line in Path(job.prompt_file).read_text().splitlines()
        if line.strip()
    ]
    if not lines:
        raise EmptyPromptFile(f"{job.prompt_file}: no prompts found")
    encoder = load_encoder(job.model_id)
    import numpy as np

    blocks = [
        encoder.encode_texts(lines[i:i + job.batch_size])
        for i in range(0, len(lines), job.batch_size)
    ]
    write_embedding_file(job.out_embeddings, np.vstack(blocks))
    return job.out_embeddings
