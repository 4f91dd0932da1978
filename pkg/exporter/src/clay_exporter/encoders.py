"""Encoder backends.

Two kinds of model id are understood:

* ``dev/hash-<dim>`` — a deterministic content-hash encoder with no
  model weights. Each image (canonicalized to 16x16 RGB) or text is
  hashed and the digest seeds a unit-norm Gaussian draw. Useful for
  format-conformance tests, golden files, and offline CI; carries no
  semantics.
* anything else — treated as a vision-language checkpoint on the public
  model hub, loaded through ``transformers``. Loading needs either
  network access or a local cache; offline failures raise
  ``ModelLoadError`` with the underlying reason.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from PIL import Image

from .errors import ModelLoadError

_DEV_PATTERN = re.compile(r"^dev/hash-(\d+)$")


class DevHashEncoder:
    """Deterministic stand-in encoder (no semantics, no downloads)."""

    def __init__(self, dim: int):
        if dim < 2:
            raise ModelLoadError(f"dev encoder dim must be >= 2, got {dim}")
        self.dim = dim
        self.model_id = f"dev/hash-{dim}"

    def _from_digest(self, payload: bytes) -> np.ndarray:
        digest = hashlib.blake2b(payload, digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for img in images:
            canon = img.convert("RGB").resize((16, 16), Image.BILINEAR)
            rows.append(self._from_digest(b"img:" + canon.tobytes()))
        return np.vstack(rows)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        return np.vstack([self._from_digest(b"txt:" + t.encode("utf-8")) for t in texts])


class HubVLMEncoder:
    """Contrastive VLM from the model hub (CLIP/SigLIP-style surface)."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import AutoModel, AutoProcessor
        except ImportError as exc:
            raise ModelLoadError(
                f"loading {model_id!r} needs the optional [vlm] extras "
                f"(torch + transformers): {exc}"
            ) from exc
        try:
            self.processor = AutoProcessor.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:  # hub errors surface as various OSError subtypes
            raise ModelLoadError(
                f"could not load {model_id!r} from the model hub; check the id, "
                f"or network/cache availability when offline ({exc})"
            ) from exc
        self.model.eval()
        self._torch = torch
        self.model_id = model_id
        self.dim = int(getattr(self.model.config, "projection_dim", 0)) or None

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        torch = self._torch
        batch = self.processor(images=[i.convert("RGB") for i in images], return_tensors="pt")
        with torch.no_grad():
            feats = self.model.get_image_features(**batch)
        rows = feats.double().cpu().numpy()
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        batch = self.processor(text=texts, return_tensors="pt", padding=True, truncation=True)
        with torch.no_grad():
            feats = self.model.get_text_features(**batch)
        rows = feats.double().cpu().numpy()
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def load_encoder(model_id: str):
    match = _DEV_PATTERN.match(model_id)
    if match:
        return DevHashEncoder(dim=int(match.group(1)))
    return HubVLMEncoder(model_id)
