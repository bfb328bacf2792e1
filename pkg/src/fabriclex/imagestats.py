"""Image texture characterization via gray-level co-occurrence entropy.

Images are converted to luma, quantized to a fixed number of gray
levels, and the Shannon entropy of the normalized co-occurrence matrix
is computed per offset and averaged. Randomness of texture shows up as
high entropy; flat images score zero.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_LEVELS = 64
DEFAULT_OFFSETS = ((1, 0), (0, 1))


class ImageStatsError(ValueError):
    pass


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray  # (height, width) integer gray levels in [0, levels)
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ImageStatsError(f"expected 2-D pixel array, got {px.ndim}-D")
        if px.size and (px.min() < 0 or px.max() >= self.levels):
            raise ImageStatsError(f"gray levels outside [0, {self.levels})")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def quantize_rgb(rgb: np.ndarray, levels: int = DEFAULT_LEVELS) -> GrayImage:
    """Luma (Rec. 709 weights) then uniform quantization to `levels` bins."""
    arr = np.asarray(rgb, dtype=float)
    if arr.ndim == 2:
        luma = arr
    elif arr.ndim == 3 and arr.shape[2] >= 3:
        luma = 0.2126 * arr[..., 0] + 0.7152 * arr[..., 1] + 0.0722 * arr[..., 2]
    else:
        raise ImageStatsError(f"unsupported pixel shape {arr.shape}")
    q = np.clip((luma * levels / 256.0).astype(np.int64), 0, levels - 1)
    return GrayImage(pixels=q, levels=levels)


def load_gray_image(path: str | Path, levels: int = DEFAULT_LEVELS) -> GrayImage:
    """Decode a PNG or PPM file to a quantized gray image."""
    path = Path(path)
    if path.suffix.lower() not in (".png", ".ppm"):
        raise ImageStatsError(f"{path.name}: only PNG and PPM are decoded here")
    from PIL import Image
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=float)
    return quantize_rgb(rgb, levels=levels)


def glcm(image: GrayImage, offset: tuple[int, int], symmetric: bool = True) -> np.ndarray:
    """Co-occurrence counts for one (dx, dy) offset; dx is columns, dy rows."""
    dx, dy = offset
    if dx == 0 and dy == 0:
        raise ImageStatsError("offset (0, 0) is not allowed")
    px = image.pixels
    h, w = px.shape
    y0, y1 = max(0, -dy), min(h, h - dy)
    x0, x1 = max(0, -dx), min(w, w - dx)
    if y1 <= y0 or x1 <= x0:
        raise ImageStatsError(f"offset {offset} leaves no pixel pairs in a {h}x{w} image")
    # int64 up front: level pairs overflow small integer dtypes.
    a = px[y0:y1, x0:x1].ravel().astype(np.int64)
    b = px[y0 + dy:y1 + dy, x0 + dx:x1 + dx].ravel().astype(np.int64)
    g = image.levels
    counts = np.bincount(a * g + b, minlength=g * g).reshape(g, g)
    if symmetric:
        counts = counts + counts.T
    return counts


def glcm_entropy(image: GrayImage, offsets=DEFAULT_OFFSETS,
                 symmetric: bool = True) -> float:
    """Mean co-occurrence entropy (bits) over the given offsets."""
    if image.height < 2 or image.width < 2:
        raise ImageStatsError("image must be at least 2x2")
    if not offsets:
        raise ImageStatsError("need at least one offset")
    entropies = []
    for offset in offsets:
        counts = glcm(image, offset, symmetric=symmetric)
        total = counts.sum()
        p = counts[counts > 0] / total
        entropies.append(float(-(p * np.log2(p)).sum()))
    return float(np.mean(entropies))


def glcm_entropy_many(images, offsets=DEFAULT_OFFSETS, symmetric: bool = True,
                      threads: int = 1) -> list[float]:
    """Entropy per image, optionally across a thread pool."""
    if threads <= 1:
        return [glcm_entropy(im, offsets, symmetric) for im in images]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda im: glcm_entropy(im, offsets, symmetric), images))


def entropy_histogram(entropies, bins=20,
                      value_range: tuple[float, float] | None = None):
    """Binned entropy counts: (counts, bin_edges), numpy semantics."""
    arr = np.asarray(list(entropies), dtype=float)
    if arr.size == 0:
        raise ImageStatsError("no entropy values")
    counts, edges = np.histogram(arr, bins=bins, range=value_range)
    return counts, edges
