"""Writers for the retrieval engine's on-disk formats.

Implemented independently from the engine's own storage module on
purpose: the two components share only the byte layout, and golden
files checked into the repo prove both sides agree.

EmbeddingFile: 8-byte ASCII magic "CLAYEMB1", then version/count/dim as
u32 little-endian, then count*dim float32 little-endian, row-major.
Rows must be unit norm (within 1e-3; this writer normalizes exactly).

ManifestFile: JSON with items (id + labels), declared attributes, and a
free-form source string; serialized with sorted keys and 2-space indent.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

EMBEDDING_MAGIC = b"CLAYEMB1"
FORMAT_VERSION = 1


def write_embedding_file(path, rows: np.ndarray) -> None:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 2:
        raise ValueError(f"need an (n>=1, d>=2) matrix, got shape {rows.shape}")
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms <= 1e-12):
        raise ValueError("matrix contains a zero row")
    payload = (rows / norms).astype("<f4")
    count, dim = payload.shape
    header = EMBEDDING_MAGIC + struct.pack("<III", FORMAT_VERSION, count, dim)
    Path(path).write_bytes(header + payload.tobytes(order="C"))


def read_embedding_file(path) -> np.ndarray:
    """Minimal reader for the exporter's own round-trip tests."""
    blob = Path(path).read_bytes()
    if blob[:8] != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, count, dim = struct.unpack("<III", blob[8:20])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if len(blob) != 20 + count * dim * 4:
        raise ValueError(f"{path}: length mismatch")
    return np.frombuffer(blob[20:], dtype="<f4").reshape(count, dim).copy()


def write_manifest_file(path, items, attributes, source: str) -> None:
    """items: [(id, {attr: value})]; attributes: [(name, [values])]."""
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest ids must be unique")
    declared = [name for name, _ in attributes]
    for item_id, labels in items:
        missing = set(declared) - set(labels)
        if missing:
            raise ValueError(f"item {item_id!r} missing labels {sorted(missing)}")
    doc = {
        "items": [{"id": i, "labels": dict(l)} for i, l in items],
        "attributes": [{"name": n, "values": list(v)} for n, v in attributes],
        "source": source,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
