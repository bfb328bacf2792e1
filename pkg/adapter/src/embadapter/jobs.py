"""Manifest-driven embedding jobs.

Input manifests are JSONL: {"key", "text"} for text jobs, {"key", "path"}
for image jobs. Each job writes one vector file plus a JSON manifest
recording the model id, dimension, normalization and preprocessing, so
downstream runs can trace exactly what produced the file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import EncoderError, image_encoder, text_encoder
from .formats import FormatError, read_text_vectors, write_vectors


class JobError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedJob:
    manifest: str | Path
    model_id: str
    output: str | Path
    format: str = "text"
    normalize: bool = False
    batch_size: int = 64
    precision: str = "f32"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.precision != "f32":
            raise JobError(f"unsupported precision {self.precision!r}")
        if self.batch_size < 1:
            raise JobError(f"batch_size must be >= 1, got {self.batch_size}")


def _read_manifest(path: str | Path, value_field: str) -> list[tuple[str, str]]:
    items, keys = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            key, value = rec.get("key"), rec.get(value_field)
            if not key or value in (None, ""):
                raise JobError(f"{Path(path).name}:{lineno}: need 'key' and "
                               f"{value_field!r}")
            if key in keys:
                raise JobError(f"{Path(path).name}:{lineno}: duplicate key {key!r}")
            keys.add(key)
            items.append((key, value))
    return items


def _run(job: EmbedJob, items: list[tuple[str, str]], encoder,
         preprocessing: dict) -> dict:
    entries: list[tuple[str, np.ndarray]] = []
    dim = None
    for start in range(0, len(items), job.batch_size):
        batch = items[start:start + job.batch_size]
        vectors = encoder.encode([value for _, value in batch])
        if dim is None:
            dim = vectors.shape[1]
        if job.normalize:
            norms = np.linalg.norm(vectors, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise JobError("zero-norm embedding cannot be normalized")
            vectors = vectors / norms
        vectors = vectors.astype(np.float32)
        entries.extend((key, vec) for (key, _), vec in zip(batch, vectors))
    if dim is None:
        raise JobError("empty manifest")
    write_vectors(job.output, entries, dim, job.format)
    manifest = {
        "model_id": job.model_id,
        "count": len(entries),
        "dim": int(dim),
        "format": job.format,
        "normalize": job.normalize,
        "precision": job.precision,
        "preprocessing": preprocessing,
        "output": str(job.output),
    }
    manifest_path = Path(str(job.output) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                             encoding="utf-8")
    return manifest


def embed_texts(job: EmbedJob) -> dict:
    """One vector per manifest text; returns the written manifest dict."""
    items = _read_manifest(job.manifest, "text")
    encoder = text_encoder(job.model_id)
    return _run(job, items, encoder, preprocessing={"input": "raw text"})


def embed_images(job: EmbedJob) -> dict:
    """One vector per manifest image path."""
    items = _read_manifest(job.manifest, "path")
    base = Path(job.manifest).parent
    resolved = [(k, str((base / p) if not Path(p).is_absolute() else Path(p)))
                for k, p in items]
    encoder = image_encoder(job.model_id)
    preprocessing = {"input": "RGB image", **job.options}
    return _run(job, resolved, encoder, preprocessing=preprocessing)


def export_word_vectors(vocab: list[str], source: str | Path,
                        output: str | Path, format: str = "text") -> dict:
    """Subset a word-vector flat file to `vocab`.

    Words missing from the source are listed in a sidecar report next to
    the output file; their absence is not fatal.
    """
    wanted = {w: i for i, w in enumerate(vocab)}
    if len(wanted) != len(vocab):
        raise JobError("vocab contains duplicates")
    found: dict[str, np.ndarray] = {}
    dim = 0
    for key, vec in read_text_vectors(source):
        dim = len(vec)
        if key in wanted and key not in found:
            found[key] = vec
    entries = [(w, found[w]) for w in vocab if w in found]
    write_vectors(output, entries, dim, format)
    missing = [w for w in vocab if w not in found]
    report_path = Path(str(output) + ".missing.txt")
    report_path.write_text("".join(w + "\n" for w in missing), encoding="utf-8")
    return {"count": len(entries), "missing": len(missing), "dim": dim,
            "output": str(output), "missing_report": str(report_path)}
