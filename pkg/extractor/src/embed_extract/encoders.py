"""Image/text encoders behind one small interface.

``hash`` is a deterministic offline featurizer for tests and plumbing checks;
anything else is treated as a Hugging Face CLIP model identifier and needs
torch + transformers plus locally available weights.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

HASH_DIM = 64


class HashEncoder:
    """Deterministic stand-in encoder: image grid statistics, hashed text."""

    name = "hash"

    def encode_image(self, path: Path) -> np.ndarray:
        with Image.open(path) as img:
            gray = img.convert("L").resize((8, 8), Image.BILINEAR)
        return np.asarray(gray, dtype=np.float64).ravel() + 1e-3

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            rows.append(rng.standard_normal(HASH_DIM))
        return np.asarray(rows)


class ClipEncoder:
    """Frozen CLIP towers via transformers; batched, CPU by default."""

    def __init__(self, model_id: str, device: str = "cpu", batch_size: int = 16):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:  # pragma: no cover - env without torch
            raise RuntimeError(
                "CLIP extraction needs the 'clip' extra (torch + transformers)"
            ) from exc
        self.name = model_id
        self.batch_size = batch_size
        self._torch = torch
        self._device = device
        self._model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self._processor = CLIPProcessor.from_pretrained(model_id)

    def encode_image(self, path: Path) -> np.ndarray:
        with Image.open(path) as img:
            pixel = self._processor(images=img.convert("RGB"),
                                    return_tensors="pt")["pixel_values"]
        with self._torch.no_grad():
            feats = self._model.get_image_features(pixel.to(self._device))
        return feats[0].cpu().numpy().astype(np.float64)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = []
        with self._torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                chunk = texts[start:start + self.batch_size]
                tokens = self._processor(text=chunk, return_tensors="pt",
                                         padding=True, truncation=True)
                feats = self._model.get_text_features(
                    **{k: v.to(self._device) for k, v in tokens.items()})
                rows.append(feats.cpu().numpy().astype(np.float64))
        return np.vstack(rows)


def make_encoder(model: str, device: str = "cpu", batch_size: int = 16):
    if model == "hash":
        return HashEncoder()
    return ClipEncoder(model, device=device, batch_size=batch_size)
