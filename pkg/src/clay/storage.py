"""Bit-exact file formats: embeddings, dataset manifests, condition subspaces.

Binary layouts (all integers little-endian, no padding):

EmbeddingFile (.clayemb)
    magic   8 bytes ASCII  "CLAYEMB1"
    version u32            1
    count   u32            number of rows
    dim     u32            row dimension
    payload count*dim float32, row-major; rows unit norm within 1e-3

SubspaceFile (.claysub)
    magic   8 bytes ASCII  "CLAYSUB1"
    version u32            1
    dim     u32
    k       u32            basis column count
    names   u32 count, then per name: u32 byte length + UTF-8 bytes
    mu_c    dim float64
    basis   dim*k float64, column-major
    sigma   u32 count, then count float64 (full spectrum, descending)

ManifestFile (.json)
    {"items": [{"id": ..., "labels": {attr: value}}],
     "attributes": [{"name": ..., "values": [...]}],
     "source": ...}

Embeddings store float32 (encoder output precision); subspace payloads
store float64 because the SVD artifacts feed tolerance-sensitive math.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionOverflow,
    DuplicateId,
    LabelCoverage,
    OrthonormalityViolation,
    StorageError,
    TruncatedFile,
    ZeroVector,
)
from .geometry import normalize_rows
from .subspace import ConditionSubspace

EMBEDDING_MAGIC = b"CLAYEMB1"
SUBSPACE_MAGIC = b"CLAYSUB1"
FORMAT_VERSION = 1
_U32_MAX = 2**32 - 1
_MAX_ELEMENTS = 2**34  # sanity cap against absurd headers
_ROW_NORM_TOL = 1e-3


def _check_dims(count: int, dim: int) -> None:
    if count < 1 or dim < 2:
        raise DimensionOverflow(f"count={count}, dim={dim} outside the valid range")
    if count > _U32_MAX or dim > _U32_MAX or count * dim > _MAX_ELEMENTS:
        raise DimensionOverflow(f"count={count}, dim={dim} exceeds format limits")


def write_embeddings(path, matrix) -> None:
    """Write an (N, d) embedding matrix.

    float32 input is treated as storage-format data and written verbatim
    (after validation); anything else is normalized in float64 first and
    then cast, so loaded rows stay unit within float32 rounding.
    """
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise DimensionOverflow(f"expected a 2-d matrix, got shape {arr.shape}")
    count, dim = arr.shape
    _check_dims(count, dim)
    if arr.dtype == np.float32:
        norms = np.linalg.norm(arr.astype(np.float64), axis=1)
        if np.any(norms <= 1e-12):
            raise ZeroVector("matrix contains a zero row")
        if np.max(np.abs(norms - 1.0)) > _ROW_NORM_TOL:
            raise StorageError("float32 rows must already be unit norm within 1e-3")
        payload = np.ascontiguousarray(arr)
    else:
        payload = normalize_rows(arr).astype(np.float32)
    header = EMBEDDING_MAGIC + struct.pack("<III", FORMAT_VERSION, count, dim)
    Path(path).write_bytes(header + payload.tobytes(order="C"))


def read_embeddings(path) -> np.ndarray:
    """Read an EmbeddingFile; returns the float32 rows exactly as stored.

    Rows are validated (finite, unit within 1e-3); consumers re-normalize
    in float64 when they ingest the matrix (build_index, PromptMatrix).
    """
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:8] != EMBEDDING_MAGIC:
        raise BadMagic(f"{path}: not an embedding file")
    if len(blob) < 20:
        raise TruncatedFile(f"{path}: header cut short at {len(blob)} bytes")
    version, count, dim = struct.unpack("<III", blob[8:20])
    if version != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported version {version}")
    _check_dims(count, dim)
    expected = 20 + count * dim * 4
    if len(blob) != expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes, found {len(blob)}")
    rows = np.frombuffer(blob[20:], dtype="<f4").reshape(count, dim).copy()
    if not np.all(np.isfinite(rows)):
        raise StorageError(f"{path}: payload contains non-finite values")
    norms = np.linalg.norm(rows.astype(np.float64), axis=1)
    if np.any(norms <= 1e-12):
        raise ZeroVector(f"{path}: zero row in payload")
    if np.max(np.abs(norms - 1.0)) > _ROW_NORM_TOL:
        worst = int(np.argmax(np.abs(norms - 1.0)))
        raise StorageError(f"{path}: row {worst} norm {norms[worst]:.6f} outside 1e-3 of unit")
    return rows


@dataclass(frozen=True)
class Manifest:
    """Dataset labels: one entry per item, every attribute fully covered."""

    items: tuple[tuple[str, dict[str, str]], ...]  # (id, labels)
    attributes: tuple[tuple[str, tuple[str, ...]], ...]  # (name, declared values)
    source: str = ""

    def __post_init__(self):
        ids = [i for i, _ in self.items]
        if len(set(ids)) != len(ids):
            raise DuplicateId("manifest ids must be unique")
        declared = {name for name, _ in self.attributes}
        for item_id, labels in self.items:
            missing = declared - set(labels)
            if missing:
                raise LabelCoverage(f"item {item_id!r} missing label(s) {sorted(missing)}")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(i for i, _ in self.items)

    def labels_by_attribute(self) -> dict[str, dict[str, str]]:
        return {
            name: {item_id: labels[name] for item_id, labels in self.items}
            for name, _ in self.attributes
        }

    def to_dict(self) -> dict:
        return {
            "items": [{"id": i, "labels": dict(l)} for i, l in self.items],
            "attributes": [{"name": n, "values": list(v)} for n, v in self.attributes],
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Manifest":
        try:
            items = tuple(
                (str(entry["id"]), {str(k): str(v) for k, v in entry["labels"].items()})
                for entry in data["items"]
            )
            attributes = tuple(
                (str(entry["name"]), tuple(str(v) for v in entry["values"]))
                for entry in data["attributes"]
            )
        except (KeyError, TypeError) as exc:
            raise StorageError(f"malformed manifest: {exc}") from exc
        return cls(items=items, attributes=attributes, source=str(data.get("source", "")))


def write_manifest(path, manifest: Manifest) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> Manifest:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise StorageError(f"{path}: invalid JSON ({exc})") from exc
    return Manifest.from_dict(data)


def write_subspace(path, s: ConditionSubspace) -> None:
    """Serialize a condition subspace (manifold subspaces only)."""
    if not s.manifold:
        raise StorageError(
            "Euclidean-ablation subspaces are analysis-only and not serializable "
            "(the file format pins the tangent-space construction)"
        )
    dim, k = s.basis.shape
    if dim < 2 or k < 1 or k > dim:
        raise DimensionOverflow(f"dim={dim}, k={k} outside the valid range")
    if dim > _U32_MAX or dim * k > _MAX_ELEMENTS:
        raise DimensionOverflow(f"dim={dim}, k={k} exceeds format limits")
    parts = [SUBSPACE_MAGIC, struct.pack("<III", FORMAT_VERSION, dim, k)]
    parts.append(struct.pack("<I", len(s.condition_names)))
    for name in s.condition_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    parts.append(np.ascontiguousarray(s.mu_c, dtype="<f8").tobytes())
    parts.append(np.asfortranarray(s.basis.astype("<f8")).tobytes(order="F"))
    sigma = np.ascontiguousarray(s.singular_values, dtype="<f8")
    parts.append(struct.pack("<I", sigma.shape[0]) + sigma.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedFile(f"{self.path}: needed {n} bytes at offset {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").copy()

    def done(self) -> None:
        if self.pos != len(self.blob):
            raise TruncatedFile(
                f"{self.path}: {len(self.blob) - self.pos} trailing bytes after payload"
            )


def read_subspace(path) -> ConditionSubspace:
    """Deserialize and re-validate a condition subspace."""
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:8] != SUBSPACE_MAGIC:
        raise BadMagic(f"{path}: not a subspace file")
    cur = _Cursor(blob, path)
    cur.pos = 8
    version = cur.u32()
    if version != FORMAT_VERSION:
        raise StorageError(f"{path}: unsupported version {version}")
    dim = cur.u32()
    k = cur.u32()
    if dim < 2 or k < 1 or k > dim:
        raise DimensionOverflow(f"{path}: dim={dim}, k={k} invalid")
    n_names = cur.u32()
    if n_names < 1 or n_names > 4096:
        raise StorageError(f"{path}: implausible name count {n_names}")
    names = tuple(cur.take(cur.u32()).decode("utf-8") for _ in range(n_names))
    mu = cur.f64(dim)
    basis = cur.f64(dim * k).reshape((dim, k), order="F")
    sigma = cur.f64(cur.u32())
    cur.done()

    if abs(float(np.linalg.norm(mu)) - 1.0) > 1e-6:
        raise OrthonormalityViolation(f"{path}: mu_c is not unit norm")
    gram = basis.T @ basis
    if np.max(np.abs(gram - np.eye(k))) > 1e-5:
        raise OrthonormalityViolation(f"{path}: basis columns are not orthonormal")
    if np.max(np.abs(basis.T @ mu)) > 1e-5:
        raise OrthonormalityViolation(f"{path}: basis columns are not tangent at mu_c")
    if np.any(sigma < 0) or np.any(np.diff(sigma) > 1e-12):
        raise StorageError(f"{path}: singular values must be non-negative and descending")
    return ConditionSubspace(
        mu_c=mu,
        basis=np.ascontiguousarray(basis),
        singular_values=sigma,
        k=k,
        condition_names=names,
        manifold=True,
        requested_k=k,
    )
