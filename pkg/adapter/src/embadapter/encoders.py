"""Encoder registry: deterministic hashing encoders plus optional
pretrained models.

Model identifiers select the backend:
  hash:<dim>        feature-hashing text encoder, no dependencies
  hash-image:<dim>  pixel-statistics image encoder, no dependencies
  st:<name>         sentence-transformers text model
  clip:<name>       transformers CLIP (text or image side)

The hash encoders exist so pipelines and tests run without model
downloads; they are deterministic across processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(RuntimeError):
    pass


def _token_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.normal(size=dim)


class HashTextEncoder:
    """Sum of deterministic per-token vectors; casing and punctuation folded."""

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderError(f"bad hash dimension {dim}")
        self.dim = dim

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            tokens = "".join(c if c.isalnum() else " " for c in text.lower()).split()
            if not tokens:
                raise EncoderError("empty text")
            for tok in tokens:
                out[row] += _token_vector(tok, self.dim)
            out[row] /= len(tokens)
        return out


class HashImageEncoder:
    """Downsampled luma grid plus channel moments, projected to `dim`."""

    GRID = 8

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderError(f"bad hash dimension {dim}")
        self.dim = dim
        rng = np.random.Generator(np.random.Philox(777))
        self._projection = rng.normal(size=(self.GRID * self.GRID + 6, dim))
        self._projection /= np.sqrt(self._projection.shape[0])

    def encode_array(self, rgb: np.ndarray) -> np.ndarray:
        arr = np.asarray(rgb, dtype=float)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=2)
        luma = 0.2126 * arr[..., 0] + 0.7152 * arr[..., 1] + 0.0722 * arr[..., 2]
        h, w = luma.shape
        ys = (np.arange(self.GRID) * h // self.GRID)
        xs = (np.arange(self.GRID) * w // self.GRID)
        hs = np.append(ys, h)
        ws = np.append(xs, w)
        grid = np.empty(self.GRID * self.GRID)
        k = 0
        for i in range(self.GRID):
            for j in range(self.GRID):
                grid[k] = luma[hs[i]:hs[i + 1], ws[j]:ws[j + 1]].mean()
                k += 1
        moments = np.concatenate([arr.mean(axis=(0, 1)), arr.std(axis=(0, 1))])
        features = np.concatenate([grid / 255.0, moments / 255.0])
        return features @ self._projection

    def encode(self, paths: list) -> np.ndarray:
        from PIL import Image
        out = np.empty((len(paths), self.dim))
        for row, path in enumerate(paths):
            try:
                with Image.open(path) as img:
                    rgb = np.asarray(img.convert("RGB"), dtype=float)
            except OSError as e:
                raise EncoderError(f"unreadable image {path}: {e}") from None
            out[row] = self.encode_array(rgb)
        return out


class SentenceTransformerEncoder:
    def __init__(self, name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise EncoderError(f"sentence-transformers unavailable: {e}") from None
        try:
            self._model = SentenceTransformer(name)
        except Exception as e:
            raise EncoderError(f"cannot load model {name!r}: {e}") from None

    def encode(self, texts: list[str]) -> np.ndarray:
        if any(not t.strip() for t in texts):
            raise EncoderError("empty text")
        return np.asarray(self._model.encode(list(texts), convert_to_numpy=True),
                          dtype=float)


class ClipEncoder:
    def __init__(self, name: str, modality: str):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as e:
            raise EncoderError(f"transformers/torch unavailable: {e}") from None
        try:
            self._model = CLIPModel.from_pretrained(name)
            self._processor = CLIPProcessor.from_pretrained(name)
        except Exception as e:
            raise EncoderError(f"cannot load model {name!r}: {e}") from None
        self._modality = modality

    def encode(self, items: list) -> np.ndarray:
        import torch
        from PIL import Image
        with torch.no_grad():
            if self._modality == "text":
                inputs = self._processor(text=list(items), return_tensors="pt",
                                         padding=True, truncation=True)
                feats = self._model.get_text_features(**inputs)
            else:
                images = [Image.open(p).convert("RGB") for p in items]
                inputs = self._processor(images=images, return_tensors="pt")
                feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(float)


def text_encoder(model_id: str):
    if model_id.startswith("hash:"):
        return HashTextEncoder(int(model_id.split(":", 1)[1]))
    if model_id.startswith("st:"):
        return SentenceTransformerEncoder(model_id.split(":", 1)[1])
    if model_id.startswith("clip:"):
        return ClipEncoder(model_id.split(":", 1)[1], "text")
    raise EncoderError(f"unknown text model id {model_id!r}")


def image_encoder(model_id: str):
    if model_id.startswith("hash-image:"):
        return HashImageEncoder(int(model_id.split(":", 1)[1]))
    if model_id.startswith("clip:"):
        return ClipEncoder(model_id.split(":", 1)[1], "image")
    raise EncoderError(f"unknown image model id {model_id!r}")
