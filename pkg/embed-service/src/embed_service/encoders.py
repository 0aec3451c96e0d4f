"""Encoder backends for the embedding service.

Every encoder exposes the same tiny surface: an ``info()`` descriptor plus
``embed_texts`` / ``embed_images`` returning L2-normalized float64 rows.
``StubEncoder`` is a deterministic stand-in used by the test-suite and for
wire-contract development; ``HFDualEncoder`` hosts real CLIP / SigLIP-style
checkpoints through the transformers library when weights are available.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, asdict

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class ServiceInfo:
    model_id: str
    dim: int
    input_side: int
    preprocessing: str
    version: str

    def to_dict(self) -> dict:
        return asdict(self)


def l2_normalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return rows / norms


def decode_png(b64_or_bytes) -> Image.Image:
    if isinstance(b64_or_bytes, str):
        import base64

        b64_or_bytes = base64.b64decode(b64_or_bytes, validate=True)
    return Image.open(io.BytesIO(b64_or_bytes)).convert("RGB")


class StubEncoder:
    """Deterministic hash-seeded encoder with the real wire semantics.

    Vectors are unit-norm and depend only on the payload (exact text, or
    pixel content after the service-side resize), so identical requests
    produce bit-identical responses without any model weights.
    """

    def __init__(self, dim: int = 32, input_side: int = 64):
        self.dim = dim
        self.input_side = input_side

    def info(self) -> ServiceInfo:
        return ServiceInfo(
            model_id="stub",
            dim=self.dim,
            input_side=self.input_side,
            preprocessing=f"resize({self.input_side}) + hash",
            version="stub-1",
        )

    def _vector_from(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.normal(size=self.dim)

    def embed_texts(self, texts) -> np.ndarray:
        rows = np.stack([self._vector_from(t.encode("utf-8")) for t in texts])
        return l2_normalize_rows(rows)

    def embed_images(self, images) -> np.ndarray:
        rows = []
        for image in images:
            resized = image.resize((self.input_side, self.input_side), Image.BICUBIC)
            rows.append(self._vector_from(resized.tobytes()))
        return l2_normalize_rows(np.stack(rows))


class HFDualEncoder:
    """CLIP / SigLIP dual encoders loaded through transformers.

    ``model_id`` is any local path or hub id exposing get_text_features /
    get_image_features (openai/clip-vit-base-patch32 at 224px,
    google/siglip2-base-patch32-256 at 256px, ...).  Inference runs in eval
    mode with gradients off, so identical payloads embed identically.
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        import torch
        from transformers import AutoModel, AutoProcessor

        self._torch = torch
        self.model_id = model_id
        self.processor = AutoProcessor.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).to(device).eval()
        self.device = device
        image_processor = getattr(self.processor, "image_processor", None)
        size = getattr(image_processor, "size", None) or {}
        self.input_side = int(
            size.get("shortest_edge") or size.get("height") or 224
        )
        with torch.no_grad():
            probe = self.model.get_text_features(
                **self.processor(text=["probe"], return_tensors="pt", padding=True).to(device)
            )
        self.dim = int(probe.shape[-1])

    def info(self) -> ServiceInfo:
        return ServiceInfo(
            model_id=self.model_id,
            dim=self.dim,
            input_side=self.input_side,
            preprocessing=f"processor({self.model_id})",
            version="hf-1",
        )

    def embed_texts(self, texts) -> np.ndarray:
        with self._torch.no_grad():
            batch = self.processor(
                text=list(texts), return_tensors="pt", padding=True, truncation=True
            ).to(self.device)
            feats = self.model.get_text_features(**batch)
        return l2_normalize_rows(feats.cpu().numpy().astype(np.float64))

    def embed_images(self, images) -> np.ndarray:
        with self._torch.no_grad():
            batch = self.processor(images=list(images), return_tensors="pt").to(self.device)
            feats = self.model.get_image_features(**batch)
        return l2_normalize_rows(feats.cpu().numpy().astype(np.float64))


def build_encoder(spec: str):
    """stub | stub:<dim>x<side> | any transformers model id or local path."""
    if spec == "stub":
        return StubEncoder()
    if spec.startswith("stub:"):
        dims, side = spec[len("stub:") :].split("x")
        return StubEncoder(dim=int(dims), input_side=int(side))
    return HFDualEncoder(spec)
