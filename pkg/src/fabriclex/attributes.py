"""Attribute discovery over lemma embeddings and attribute statistics.

Attributes are named clusters of lexicon lemmas. Clustering uses
affinity propagation on a similarity matrix; curated cluster-to-name
mappings turn raw clusters into the published attribute inventory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingStore
from .textproc import ProcessedDescription

UNCLASSIFIABLE = "unclassifiable"
DEFAULT_EXCLUDED = frozenset({"sewing", "weight", "military"})


class AttributeSetError(ValueError):
    pass


@dataclass(frozen=True)
class APResult:
    exemplars: tuple[int, ...]
    labels: np.ndarray  # item index -> exemplar item index
    converged: bool
    iterations: int


def affinity_propagation(similarity: np.ndarray, preference="median",
                         damping: float = 0.9, max_iters: int = 1000,
                         conv_iters: int = 50) -> APResult:
    """Cluster by exemplar message passing on a similarity matrix.

    Responsibilities and availabilities are damped updates; the run stops
    once the exemplar set is stable for conv_iters iterations. Items are
    assigned to their most similar exemplar. No noise is injected, so the
    result is deterministic; perfectly symmetric inputs may fail to
    converge and come back flagged.
    """
    s = np.array(similarity, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise AttributeSetError(f"similarity must be square, got {s.shape}")
    n = s.shape[0]
    if n < 2:
        raise AttributeSetError("need at least 2 items")
    if not np.isfinite(s).all():
        raise AttributeSetError("similarity contains non-finite values")
    if not 0.5 <= damping < 1:
        raise AttributeSetError(f"damping must be in [0.5, 1), got {damping}")
    if preference == "median":
        off_diag = s[~np.eye(n, dtype=bool)]
        preference = float(np.median(off_diag))
    np.fill_diagonal(s, preference)

    r = np.zeros((n, n))
    a = np.zeros((n, n))
    rows = np.arange(n)
    stable = 0
    last_exemplars: tuple[int, ...] | None = None
    it = 0
    for it in range(1, max_iters + 1):
        # Responsibilities: r(i,k) = s(i,k) - max_{k' != k} (a(i,k') + s(i,k'))
        a_plus_s = a + s
        best_idx = np.argmax(a_plus_s, axis=1)
        best = a_plus_s[rows, best_idx]
        a_plus_s[rows, best_idx] = -np.inf
        second = a_plus_s.max(axis=1)
        r_new = s - best[:, None]
        r_new[rows, best_idx] = s[rows, best_idx] - second
        r = damping * r + (1 - damping) * r_new

        # Availabilities: a(i,k) = min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        r_pos = np.maximum(r, 0)
        np.fill_diagonal(r_pos, r.diagonal())
        col_sums = r_pos.sum(axis=0)
        a_new = col_sums[None, :] - r_pos
        diag = a_new.diagonal().copy()
        a_new = np.minimum(a_new, 0)
        np.fill_diagonal(a_new, diag)
        a = damping * a + (1 - damping) * a_new

        # Strictly positive evidence required: symmetric degenerate inputs
        # ride the diag(A+R)=0 knife edge and must not all become exemplars.
        exemplars = tuple(np.flatnonzero((a + r).diagonal() > 1e-12))
        if exemplars and exemplars == last_exemplars:
            stable += 1
            if stable >= conv_iters:
                break
        else:
            stable = 0
        last_exemplars = exemplars

    converged = stable >= conv_iters
    exemplars = tuple(np.flatnonzero((a + r).diagonal() > 1e-12))
    if not exemplars:
        # Best effort: fall back to the best single medoid.
        exemplars = (int(np.argmax(s.sum(axis=0))),)
        converged = False
    ex = np.array(exemplars)
    labels = ex[np.argmax(s[:, ex], axis=1)]
    labels[ex] = ex
    return APResult(exemplars=exemplars, labels=labels, converged=converged,
                    iterations=it)


@dataclass(frozen=True)
class Attribute:
    name: str
    members: frozenset[str]
    exemplar: str
    centroid: np.ndarray | None = None


@dataclass(frozen=True)
class AttributeSet:
    attributes: tuple[Attribute, ...]
    outliers: frozenset[str] = frozenset()

    def __post_init__(self):
        seen: set[str] = set()
        for attr in self.attributes:
            overlap = seen & attr.members
            if overlap:
                raise AttributeSetError(f"lemma in multiple attributes: {sorted(overlap)[:3]}")
            seen |= attr.members

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute_of(self) -> dict[str, str]:
        out = {}
        for a in self.attributes:
            for lem in a.members:
                out[lem] = a.name
        return out

    def get(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise AttributeSetError(f"no attribute named {name!r}")


def _centroid_and_exemplar(members: list[str], store: EmbeddingStore | None):
    if store is None:
        return None, sorted(members)[0]
    for lem in members:
        if lem not in store:
            raise AttributeSetError(f"lemma {lem!r} absent from embedding store")
    vecs = np.stack([store.vector(lem) for lem in sorted(members)])
    centroid = vecs.mean(axis=0)
    cnorm = np.linalg.norm(centroid)
    if cnorm == 0:
        return centroid, sorted(members)[0]
    units = vecs / np.linalg.norm(vecs, axis=1)[:, None]
    sims = units @ (centroid / cnorm)
    return centroid, sorted(members)[int(np.argmax(sims))]


def build_attribute_set(clusters: dict[str, str],
                        curation: dict[str, str] | None = None,
                        store: EmbeddingStore | None = None) -> AttributeSet:
    """Assemble named attributes from a lemma -> cluster-id mapping.

    curation renames cluster ids to attribute names and may map a cluster
    to "outlier" to drop it; clusters sharing a curated name are merged.
    Without curation, clusters keep their id (typically the exemplar
    lemma) as name. Centroids are computed when a store is given.
    """
    curation = curation or {}
    members_by_name: dict[str, list[str]] = {}
    outliers: set[str] = set()
    for lemma, cluster in clusters.items():
        name = curation.get(cluster, cluster)
        if name == "outlier":
            outliers.add(lemma)
        else:
            members_by_name.setdefault(name, []).append(lemma)
    attrs = []
    for name in sorted(members_by_name):
        members = members_by_name[name]
        centroid, exemplar = _centroid_and_exemplar(members, store)
        attrs.append(Attribute(name=name, members=frozenset(members),
                               exemplar=exemplar, centroid=centroid))
    return AttributeSet(attributes=tuple(attrs), outliers=frozenset(outliers))


def bundled_attribute_csv() -> Path:
    """Path of the curated lemma-to-attribute table shipped with the package.

    Covers the eleven attribute names used throughout; meant as a starting
    point, editable per dataset.
    """
    from importlib import resources
    with resources.as_file(resources.files("fabriclex.data")
                           .joinpath("attributes.csv")) as p:
        return Path(p)


def attribute_set_from_csv(path: str | Path,
                           store: EmbeddingStore | None = None) -> AttributeSet:
    """Load a curated "lemma,attribute" CSV; attribute "outlier" is allowed."""
    clusters: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["lemma", "attribute"]:
            raise AttributeSetError(f"{Path(path).name}: expected 'lemma,attribute' header")
        for row in reader:
            if not row:
                continue
            clusters[row[0].strip()] = row[1].strip()
    return build_attribute_set(clusters, curation=None, store=store)


@dataclass(frozen=True)
class AttributeProbabilities:
    names: tuple[str, ...]
    p: np.ndarray                # p[i] = P(attribute i present in a description)
    p_cond: np.ndarray           # p_cond[i, j] = P(i present | j present)
    p_joint: np.ndarray          # p_joint[i, j] = P(i and j present)
    n_descriptions: int
    counts: np.ndarray = field(repr=False, default=None)


def attribute_probabilities(processed: list[ProcessedDescription],
                            attrs: AttributeSet) -> AttributeProbabilities:
    """Per-attribute occurrence probability and pairwise conditionals.

    An attribute occurs in a description when at least one member lemma
    does. p_cond[i, j] is NaN when attribute j never occurs; the diagonal
    is 1 by convention.
    """
    if not processed:
        raise AttributeSetError("empty corpus")
    names = attrs.names
    attr_of = attrs.attribute_of()
    idx = {name: i for i, name in enumerate(names)}
    presence = np.zeros((len(processed), len(names)), dtype=bool)
    for row, d in enumerate(processed):
        for lem in d.lemma_set:
            name = attr_of.get(lem)
            if name is not None:
                presence[row, idx[name]] = True
    counts = presence.sum(axis=0).astype(np.int64)
    joint = (presence.T.astype(np.int64) @ presence.astype(np.int64))
    d_total = len(processed)
    p = counts / d_total
    with np.errstate(invalid="ignore", divide="ignore"):
        p_cond = np.where(counts[None, :] > 0, joint / counts[None, :], np.nan)
    np.fill_diagonal(p_cond, 1.0)
    return AttributeProbabilities(names=names, p=p, p_cond=p_cond,
                                  p_joint=joint / d_total,
                                  n_descriptions=d_total, counts=counts)


def classify_keyword(word: str, attrs: AttributeSet, store: EmbeddingStore,
                     excluded: frozenset[str] | None = None) -> str:
    """Nearest attribute centroid by cosine; ties break on attribute name.

    Returns UNCLASSIFIABLE when the word has no embedding. Attributes in
    `excluded` (default: the fabric-only trio sewing/weight/military) are
    skipped.
    """
    excluded = DEFAULT_EXCLUDED if excluded is None else excluded
    if word not in store:
        return UNCLASSIFIABLE
    vec = store.vector(word)
    vnorm = np.linalg.norm(vec)
    best_name, best_sim = None, -np.inf
    for attr in attrs.attributes:
        if attr.name in excluded or attr.centroid is None:
            continue
        cnorm = np.linalg.norm(attr.centroid)
        if cnorm == 0:
            continue
        sim = float(vec @ attr.centroid / (vnorm * cnorm))
        if sim > best_sim or (sim == best_sim and attr.name < best_name):
            best_name, best_sim = attr.name, sim
    return best_name if best_name is not None else UNCLASSIFIABLE


@dataclass(frozen=True)
class PrecisionTable:
    per_class: dict[str, dict[str, float | None]]
    average: dict[str, float | None]
    predictions: tuple[tuple[str, str, str, str], ...]  # (word, truth, class, predicted)


def generalization_precision(labeled, attrs: AttributeSet, store: EmbeddingStore,
                             excluded: frozenset[str] | None = None) -> PrecisionTable:
    """Precision of keyword classification per (class, attribute).

    labeled is a sequence of (word, true attribute, class). Precision for
    attribute a within a class is true positives / predicted positives;
    attributes never predicted report None. Unclassifiable words count as
    misses (they are never predicted).
    """
    preds = []
    for word, truth, cls in labeled:
        preds.append((word, truth, cls, classify_keyword(word, attrs, store, excluded)))
    classes = sorted({cls for _, _, cls, _ in preds})
    names = attrs.names
    per_class: dict[str, dict[str, float | None]] = {}
    for cls in classes:
        rows = [p for p in preds if p[2] == cls]
        table: dict[str, float | None] = {}
        for name in names:
            predicted = [p for p in rows if p[3] == name]
            if not predicted:
                table[name] = None
            else:
                table[name] = sum(1 for p in predicted if p[1] == name) / len(predicted)
        per_class[cls] = table
    average: dict[str, float | None] = {}
    for name in names:
        vals = [per_class[cls][name] for cls in classes if per_class[cls][name] is not None]
        average[name] = sum(vals) / len(vals) if vals else None
    return PrecisionTable(per_class=per_class, average=average,
                          predictions=tuple(preds))
