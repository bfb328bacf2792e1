"""Embedding-based retrieval evaluation, invariance metrics and keywords.

Queries and candidates live in embedding stores; ranking is by cosine
similarity with deterministic key-ascending tie-breaks. Ground truth is
checked at material granularity by default, so any rendering of the
right material counts as a hit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attributes import AttributeSet
from .embeddings import EmbeddingStore
from .lexistats import Lexicon
from .stattests import StatResult, wilcoxon_signed_rank
from .textproc import ProcessedDescription


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class ImageMeta:
    material_id: str
    geometry: str
    lighting: str


def load_image_meta(path: str | Path) -> dict[str, ImageMeta]:
    """Read candidate metadata CSV: image_id,material_id,geometry,lighting."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out[row["image_id"]] = ImageMeta(material_id=row["material_id"],
                                             geometry=row["geometry"],
                                             lighting=row["lighting"])
    return out


@dataclass(frozen=True)
class RetrievalCase:
    query_key: str
    truth_material: str
    candidate_filter: dict[str, str] = field(default_factory=dict)
    truth_key: str | None = None


def load_cases(path: str | Path) -> list[RetrievalCase]:
    """Read cases JSONL: {"query_key", "truth_material", "candidate_filter"}."""
    cases = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            cases.append(RetrievalCase(query_key=rec["query_key"],
                                       truth_material=rec["truth_material"],
                                       candidate_filter=rec.get("candidate_filter") or {},
                                       truth_key=rec.get("truth_key")))
    return cases


@dataclass(frozen=True)
class RecallTable:
    ks: tuple[int, ...]
    recall: dict[int, float]
    n_cases: int


def _candidate_keys(image_store: EmbeddingStore,
                    meta: dict[str, ImageMeta] | None,
                    flt: dict[str, str]) -> list[str]:
    keys = sorted(image_store.keys)
    if not flt:
        return keys
    if meta is None:
        raise RetrievalError("candidate_filter requires image metadata")
    out = []
    for k in keys:
        m = meta.get(k)
        if m is None:
            continue
        if all(getattr(m, fieldname) == wanted for fieldname, wanted in flt.items()):
            out.append(k)
    return out


def _ranked(query_unit: np.ndarray, store: EmbeddingStore, keys: list[str],
            self_key: str | None = None) -> list[tuple[str, float]]:
    idx = np.array([store.index(k) for k in keys])
    sims = store.unit_matrix[idx] @ query_unit
    np.clip(sims, -1.0, 1.0, out=sims)
    if self_key is not None and self_key in store:
        self_pos = np.flatnonzero(idx == store.index(self_key))
        sims[self_pos] = 1.0
    order = sorted(range(len(keys)), key=lambda i: (-sims[i], keys[i]))
    return [(keys[i], float(sims[i])) for i in order]


def topk_recall(text_store: EmbeddingStore, image_store: EmbeddingStore,
                cases: list[RetrievalCase], ks=(1, 5, 10, 20, 100),
                meta: dict[str, ImageMeta] | None = None,
                mode: str = "material") -> RecallTable:
    """Fraction of cases whose ground truth lands in the top K candidates.

    mode "material" accepts any candidate of the right material (needs
    metadata unless keys equal material ids); mode "image" requires the
    exact truth_key.
    """
    if mode not in ("material", "image"):
        raise RetrievalError(f"unknown recall mode {mode!r}")
    if not cases:
        raise RetrievalError("no retrieval cases")
    ks = tuple(sorted(set(int(k) for k in ks)))
    hits = {k: 0 for k in ks}
    for case in cases:
        keys = _candidate_keys(image_store, meta, case.candidate_filter)
        if not keys:
            raise RetrievalError(f"case {case.query_key!r}: empty candidate set")

        def material(key: str) -> str:
            return meta[key].material_id if meta else key

        if mode == "material":
            if not any(material(k) == case.truth_material for k in keys):
                raise RetrievalError(
                    f"case {case.query_key!r}: ground truth {case.truth_material!r} "
                    "missing from candidates")
        else:
            if case.truth_key is None or case.truth_key not in keys:
                raise RetrievalError(
                    f"case {case.query_key!r}: truth_key missing from candidates")
        ranked = _ranked(text_store.unit(case.query_key), image_store, keys)
        for k in ks:
            top = ranked[:k]
            if mode == "material":
                hit = any(material(key) == case.truth_material for key, _ in top)
            else:
                hit = any(key == case.truth_key for key, _ in top)
            if hit:
                hits[k] += 1
    return RecallTable(ks=ks, recall={k: hits[k] / len(cases) for k in ks},
                       n_cases=len(cases))


def image_search(query, candidates: EmbeddingStore, k: int) -> list[tuple[str, float]]:
    """Top-k candidate keys by cosine to the query (key or raw vector)."""
    if len(candidates) == 0:
        raise RetrievalError("empty candidate store")
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    self_key = None
    if isinstance(query, str):
        unit = candidates.unit(query)
        self_key = query
    else:
        vec = np.asarray(query, dtype=float)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise RetrievalError("zero-norm query vector")
        unit = vec / norm
    return _ranked(unit, candidates, sorted(candidates.keys), self_key=self_key)[:k]


@dataclass(frozen=True)
class InvarianceResult:
    mean: float
    std: float
    per_material: dict[str, float]
    mode: str
    skipped: tuple[str, ...] = ()


def invariance(store: EmbeddingStore, meta: dict[str, ImageMeta],
               mode: str = "geometry") -> InvarianceResult:
    """Average cosine similarity across variants of the same material.

    mode "geometry" pairs renderings sharing material and lighting but
    differing in geometry; "lighting" is the converse. Materials with a
    single variant in the varied dimension are skipped (reported).
    """
    if mode not in ("geometry", "lighting"):
        raise RetrievalError(f"unknown invariance mode {mode!r}")
    fixed = "lighting" if mode == "geometry" else "geometry"
    cells: dict[tuple[str, str], list[str]] = {}
    for key in store.keys:
        m = meta.get(key)
        if m is None:
            continue
        cells.setdefault((m.material_id, getattr(m, fixed)), []).append(key)

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    materials_seen: set[str] = set()
    for (material, _), keys in sorted(cells.items()):
        materials_seen.add(material)
        if len(keys) < 2:
            continue
        keys = sorted(keys)
        idx = np.array([store.index(k) for k in keys])
        units = store.unit_matrix[idx]
        sims = np.clip(units @ units.T, -1.0, 1.0)
        iu = np.triu_indices(len(keys), 1)
        sums[material] = sums.get(material, 0.0) + float(sims[iu].sum())
        counts[material] = counts.get(material, 0) + iu[0].size

    per_material = {m: sums[m] / counts[m] for m in sorted(sums)}
    skipped = tuple(sorted(materials_seen - set(per_material)))
    if not per_material:
        raise RetrievalError(f"no material has 2+ variants under varying {mode}")
    values = np.array(list(per_material.values()))
    return InvarianceResult(mean=float(values.mean()),
                            std=float(values.std()),
                            per_material=per_material, mode=mode,
                            skipped=skipped)


def compare_invariance(a: InvarianceResult, b: InvarianceResult) -> StatResult:
    """Paired Wilcoxon signed-rank over per-material means of two stores."""
    common = sorted(set(a.per_material) & set(b.per_material))
    if len(common) < 6:
        raise RetrievalError(f"need 6+ shared materials, got {len(common)}")
    pairs = [(a.per_material[m], b.per_material[m]) for m in common]
    return wilcoxon_signed_rank(pairs)


def extract_keywords(descriptions: list[ProcessedDescription],
                     lexicon: Lexicon, attrs: AttributeSet,
                     psi: dict[str, float],
                     n_desc: int = 5) -> list[tuple[str, str, int]]:
    """Ordered (lemma, attribute, support) keywords for one image.

    Uses the first n_desc descriptions. Keywords are lexicon lemmas
    mapped to an attribute, ordered by how many descriptions contain
    them, then by the attribute's rank product, then alphabetically.
    """
    used = descriptions[:n_desc]
    attr_of = attrs.attribute_of()
    lex = set(lexicon.lemmas)
    support: dict[str, int] = {}
    for d in used:
        for lem in d.lemma_set:
            if lem in lex and lem in attr_of:
                support[lem] = support.get(lem, 0) + 1
    items = [(lem, attr_of[lem], count) for lem, count in support.items()]
    items.sort(key=lambda t: (-t[2], psi.get(t[1], float("inf")), t[0]))
    return items
