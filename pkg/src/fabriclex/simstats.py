"""Within-image vs between-image description similarity.

Streams every unordered pair of description embeddings once, splits the
cosine similarities by whether the two descriptions share an image, and
tests group separation with ANOSIM on 1 - similarity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingStore
from .stattests import StatResult, StatTestError, anosim


class SimStatsError(ValueError):
    pass


@dataclass(frozen=True)
class SimilaritySummary:
    intra_mean: float
    intra_std: float
    inter_mean: float
    inter_std: float
    n_intra_pairs: int
    n_inter_pairs: int
    anosim: StatResult | None
    std_basis: str = "pairs"


class _MomentAccumulator:
    """Count/sum/sum-of-squares; merges are associative by construction."""

    def __init__(self):
        self.n = 0
        self.s = 0.0
        self.s2 = 0.0

    def add(self, values: np.ndarray):
        self.n += values.size
        self.s += float(values.sum())
        self.s2 += float(np.square(values).sum())

    @property
    def mean(self) -> float:
        return self.s / self.n

    @property
    def std(self) -> float:
        var = self.s2 / self.n - self.mean ** 2
        return float(np.sqrt(max(var, 0.0)))


def intra_inter(store: EmbeddingStore, image_of: dict[str, str],
                block_size: int = 2048,
                anosim_mode: str = "subsample",
                permutations: int = 999, seed: int = 0,
                per_image: int = 5, max_images: int = 1000) -> SimilaritySummary:
    """Mean and population std of pairwise similarities, intra vs inter image.

    image_of labels every description key with its image. anosim_mode is
    "subsample" (stratified: per_image descriptions for up to max_images
    images), "full" (every description, exact ranking up to 5000 items,
    histogram beyond), or "off".
    """
    keys = store.keys
    missing = [k for k in keys if k not in image_of]
    if missing:
        raise SimStatsError(f"unlabeled description keys: {missing[:3]}...")
    labels = [image_of[k] for k in keys]
    images = sorted(set(labels))
    if len(images) < 2:
        raise SimStatsError("inter-image similarity undefined with a single image")
    code_of = {img: i for i, img in enumerate(images)}
    codes = np.array([code_of[l] for l in labels])
    if int(np.max(np.bincount(codes))) < 2:
        raise SimStatsError("intra-image similarity undefined: no image has 2 descriptions")

    units = store.unit_matrix
    n = len(keys)
    intra = _MomentAccumulator()
    inter = _MomentAccumulator()
    for i0 in range(0, n, block_size):
        i1 = min(i0 + block_size, n)
        ru = units[i0:i1]
        for j0 in range(i0, n, block_size):
            j1 = min(j0 + block_size, n)
            vals = ru @ units[j0:j1].T
            np.clip(vals, -1.0, 1.0, out=vals)
            same = codes[i0:i1, None] == codes[None, j0:j1]
            if i0 == j0:
                upper = np.triu(np.ones(vals.shape, dtype=bool), 1)
            else:
                upper = np.ones(vals.shape, dtype=bool)
            intra.add(vals[same & upper])
            inter.add(vals[~same & upper])

    result = None
    if anosim_mode != "off":
        if anosim_mode == "subsample":
            sub_keys = _stratified_keys(keys, labels, per_image, max_images, seed)
            sub_idx = np.array([store.index(k) for k in sub_keys])
            sub_codes = np.array([code_of[image_of[k]] for k in sub_keys])
            sub_units = units[sub_idx]
            mode = "exact"
        elif anosim_mode == "full":
            sub_units = units
            sub_codes = codes
            mode = "auto"
        else:
            raise SimStatsError(f"unknown anosim_mode {anosim_mode!r}")

        def dissim(i: np.ndarray, j: np.ndarray) -> np.ndarray:
            sims = np.einsum("ij,ij->i", sub_units[i], sub_units[j])
            return 1.0 - np.clip(sims, -1.0, 1.0)

        try:
            result = anosim(dissim, sub_codes, permutations=permutations,
                            seed=seed, mode=mode)
        except StatTestError as e:
            raise SimStatsError(f"anosim failed: {e}") from None

    return SimilaritySummary(
        intra_mean=intra.mean, intra_std=intra.std,
        inter_mean=inter.mean, inter_std=inter.std,
        n_intra_pairs=intra.n, n_inter_pairs=inter.n,
        anosim=result,
    )


def _stratified_keys(keys, labels, per_image: int, max_images: int,
                     seed: int) -> list[str]:
    """Deterministic stratified subsample: up to per_image keys per image."""
    rng = np.random.Generator(np.random.Philox(seed))
    by_image: dict[str, list[str]] = {}
    for k, l in zip(keys, labels):
        by_image.setdefault(l, []).append(k)
    images = sorted(img for img, ks in by_image.items() if len(ks) >= 2)
    if len(images) > max_images:
        picked = rng.choice(len(images), size=max_images, replace=False)
        images = [images[i] for i in np.sort(picked)]
    out = []
    for img in images:
        ks = sorted(by_image[img])
        if len(ks) > per_image:
            picked = rng.choice(len(ks), size=per_image, replace=False)
            ks = [ks[i] for i in np.sort(picked)]
        out.extend(ks)
    return out
