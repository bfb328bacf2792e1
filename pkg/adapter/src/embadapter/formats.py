"""Writers for the toolkit's flat vector-file formats.

Text: "count dim" header, then "key v1 ... vdim" per line. Binary:
little-endian magic "EMB1", u32 count, u32 dim, then per entry u32 key
byte length, UTF-8 key, dim float32 values. Values are float32 either
way (the text form prints the exact f32 value). Output files are written
atomically: a temp file in the target directory is renamed into place.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"


class FormatError(ValueError):
    pass


def _atomic_write(path: Path, write_body, binary: bool):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        mode = "wb" if binary else "w"
        with os.fdopen(fd, mode, **({} if binary else {"encoding": "utf-8"})) as fh:
            write_body(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_vectors(path: str | Path, entries: list[tuple[str, np.ndarray]],
                  dim: int, format: str = "text") -> None:
    """Write (key, vector) pairs at f32 precision; keys must be unique."""
    seen = set()
    for key, vec in entries:
        if " " in key or "\n" in key:
            raise FormatError(f"key {key!r} contains whitespace")
        if key in seen:
            raise FormatError(f"duplicate key {key!r}")
        seen.add(key)
        if len(vec) != dim:
            raise FormatError(f"vector for {key!r} has dim {len(vec)}, expected {dim}")

    if format == "text":
        def body(fh):
            fh.write(f"{len(entries)} {dim}\n")
            for key, vec in entries:
                vals = np.asarray(vec, dtype=np.float32)
                fh.write(key + " " + " ".join(repr(float(v)) for v in vals) + "\n")
        _atomic_write(Path(path), body, binary=False)
    elif format == "binary":
        def body(fh):
            fh.write(MAGIC + struct.pack("<II", len(entries), dim))
            for key, vec in entries:
                kb = key.encode("utf-8")
                fh.write(struct.pack("<I", len(kb)) + kb)
                fh.write(np.asarray(vec, dtype="<f4").tobytes())
        _atomic_write(Path(path), body, binary=True)
    else:
        raise FormatError(f"unknown vector format {format!r}")


def read_text_vectors(path: str | Path):
    """Iterate (key, float32 vector) entries of a text-format vector file."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(f"{Path(path).name}:1: expected 'count dim' header")
        count, dim = int(header[0]), int(header[1])
        n = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise FormatError(f"{Path(path).name}:{lineno}: expected {dim} values")
            yield parts[0], np.array(parts[1:], dtype=np.float32)
            n += 1
        if n != count:
            raise FormatError(f"{Path(path).name}: header says {count}, found {n}")
