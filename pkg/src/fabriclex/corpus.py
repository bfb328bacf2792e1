"""Data model, ingestion and audit logic for image-description corpora.

A corpus ties free-text descriptions to rendered images (material x
geometry x lighting) and to the describers who wrote them. Corpora are
immutable after ingestion; auditing returns a new corpus.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

GEOMETRIES = frozenset({"baseline", "sphere", "sphere_draped", "plane", "plane_draped"})
LIGHTINGS = frozenset({"baseline", "outdoor", "studio"})
REJECTED_STATUSES = frozenset({"rejected_generic", "rejected_wrong", "rejected_grammar"})
STATUSES = frozenset({"accepted", "unaudited"}) | REJECTED_STATUSES

RECORD_FIELDS = ("id", "image_id", "material_id", "geometry", "lighting",
                 "describer_id", "text")


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data."""


@dataclass(frozen=True)
class Describer:
    id: str
    description_count: int = 0


@dataclass(frozen=True)
class RenderImage:
    image_id: str
    material_id: str
    geometry: str
    lighting: str


@dataclass(frozen=True)
class Description:
    id: str
    image_id: str
    describer_id: str
    text: str
    status: str = "unaudited"
    rating: int | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise CorpusError(f"unknown status {self.status!r} for description {self.id!r}")
        if self.rating is not None and not 1 <= self.rating <= 5:
            raise CorpusError(f"rating out of range for description {self.id!r}: {self.rating}")


@dataclass(frozen=True)
class Corpus:
    describers: dict[str, Describer]
    images: dict[str, RenderImage]
    descriptions: tuple[Description, ...]
    pos_tags: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self):
        return len(self.descriptions)

    def accepted(self) -> list[Description]:
        return [d for d in self.descriptions if d.status == "accepted"]

    def by_describer(self) -> dict[str, list[Description]]:
        out: dict[str, list[Description]] = {k: [] for k in self.describers}
        for d in self.descriptions:
            out[d.describer_id].append(d)
        return out

    def by_image(self) -> dict[str, list[Description]]:
        out: dict[str, list[Description]] = {k: [] for k in self.images}
        for d in self.descriptions:
            out[d.image_id].append(d)
        return out


def _build(records: list[Description], images: dict[str, RenderImage],
           pos_tags: dict[str, tuple[str, ...]] | None = None) -> Corpus:
    counts: dict[str, int] = {}
    for d in records:
        counts[d.describer_id] = counts.get(d.describer_id, 0) + 1
    describers = {k: Describer(id=k, description_count=v) for k, v in sorted(counts.items())}
    return Corpus(describers=describers, images=images, descriptions=tuple(records),
                  pos_tags=pos_tags or {})


def _record_to_description(rec: dict, where: str,
                           images: dict[str, RenderImage]) -> Description:
    for fieldname in ("id", "image_id", "describer_id", "text"):
        if not rec.get(fieldname):
            raise CorpusError(f"{where}: missing required field {fieldname!r}")
    image_id = rec["image_id"]
    has_meta = any(rec.get(k) for k in ("material_id", "geometry", "lighting"))
    if has_meta:
        for fieldname in ("material_id", "geometry", "lighting"):
            if not rec.get(fieldname):
                raise CorpusError(f"{where}: missing required field {fieldname!r}")
        if rec["geometry"] not in GEOMETRIES:
            raise CorpusError(f"{where}: unknown geometry {rec['geometry']!r}")
        if rec["lighting"] not in LIGHTINGS:
            raise CorpusError(f"{where}: unknown lighting {rec['lighting']!r}")
        img = RenderImage(image_id, rec["material_id"], rec["geometry"], rec["lighting"])
        seen = images.get(image_id)
        if seen is not None and seen != img:
            raise CorpusError(f"{where}: image {image_id!r} redefined with conflicting metadata")
        images[image_id] = img
    elif image_id not in images:
        raise CorpusError(f"{where}: dangling image reference {image_id!r}")

    status = rec.get("status") or "unaudited"
    rating = rec.get("rating")
    if rating in ("", None):
        rating = None
    else:
        try:
            rating = int(rating)
        except (TypeError, ValueError):
            raise CorpusError(f"{where}: rating is not an integer: {rating!r}") from None
    try:
        return Description(id=rec["id"], image_id=image_id,
                           describer_id=rec["describer_id"], text=rec["text"],
                           status=status, rating=rating)
    except CorpusError as e:
        raise CorpusError(f"{where}: {e}") from None


def ingest(path: str | Path, format: str | None = None) -> Corpus:
    """Read a JSONL or CSV description export into a Corpus.

    Record fields: id, image_id, material_id, geometry, lighting,
    describer_id, text, plus optional status and rating. The format is
    inferred from the suffix when not given. Errors report the offending
    line number.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unknown corpus format {format!r}")

    records: list[Description] = []
    ids: set[str] = set()
    images: dict[str, RenderImage] = {}

    def add(rec: dict, where: str):
        d = _record_to_description(rec, where, images)
        if d.id in ids:
            raise CorpusError(f"{where}: duplicate description id {d.id!r}")
        ids.add(d.id)
        records.append(d)

    if format == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                where = f"{path.name}:{lineno}"
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    raise CorpusError(f"{where}: parse error: {e.msg}") from None
                if not isinstance(rec, dict):
                    raise CorpusError(f"{where}: record is not an object")
                add(rec, where)
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise CorpusError(f"{path.name}: empty CSV file")
            missing = [f for f in RECORD_FIELDS if f not in reader.fieldnames]
            if missing:
                raise CorpusError(f"{path.name}: CSV header missing {missing}")
            for rec in reader:
                add(rec, f"{path.name}:{reader.line_num}")

    return _build(records, images)


@dataclass(frozen=True)
class ValidationPolicy:
    """Collection constraints checked by validate().

    share_basis selects the denominator for the per-describer share cap:
    "valid" counts accepted descriptions only, "all" counts everything.
    """
    min_words: int = 20
    max_words: int = 100
    min_count: int = 10
    max_share: float = 0.09
    min_valid: int = 5
    share_basis: str = "valid"


@dataclass(frozen=True)
class ValidationReport:
    under_length: tuple[tuple[str, int], ...]
    over_length: tuple[tuple[str, int], ...]
    describers_below_min: tuple[tuple[str, int], ...]
    describers_over_share: tuple[tuple[str, float], ...]
    images_below_min_valid: tuple[tuple[str, int], ...]

    @property
    def clean(self) -> bool:
        return not (self.under_length or self.over_length or self.describers_below_min
                    or self.describers_over_share or self.images_below_min_valid)


def validate(corpus: Corpus, policy: ValidationPolicy | None = None) -> ValidationReport:
    """Report descriptions, describers and images violating the collection policy.

    Word counts are taken on the raw text (whitespace split), before any
    normalization. Report-only: the corpus is never modified.
    """
    policy = policy or ValidationPolicy()
    if policy.share_basis not in ("valid", "all"):
        raise CorpusError(f"unknown share_basis {policy.share_basis!r}")

    under, over = [], []
    for d in corpus.descriptions:
        wc = len(d.text.split())
        if wc < policy.min_words:
            under.append((d.id, wc))
        elif wc > policy.max_words:
            over.append((d.id, wc))

    below_min = [(k, v.description_count)
                 for k, v in sorted(corpus.describers.items())
                 if v.description_count < policy.min_count]

    if policy.share_basis == "valid":
        pool = corpus.accepted()
    else:
        pool = list(corpus.descriptions)
    over_share = []
    if pool:
        share_counts: dict[str, int] = {}
        for d in pool:
            share_counts[d.describer_id] = share_counts.get(d.describer_id, 0) + 1
        total = len(pool)
        for k in sorted(share_counts):
            share = share_counts[k] / total
            if share > policy.max_share:
                over_share.append((k, share))

    low_images = []
    for image_id, descs in sorted(corpus.by_image().items()):
        n_ok = sum(1 for d in descs if d.status == "accepted")
        if n_ok < policy.min_valid:
            low_images.append((image_id, n_ok))

    return ValidationReport(
        under_length=tuple(under),
        over_length=tuple(over),
        describers_below_min=tuple(below_min),
        describers_over_share=tuple(over_share),
        images_below_min_valid=tuple(low_images),
    )


def audit_apply(corpus: Corpus,
                audits: list[tuple[str, str, int | None]],
                cascade_threshold: float = 0.35) -> Corpus:
    """Apply audit decisions and cascade rejections to heavy offenders.

    Each audit is (description_id, status, rating). After applying them,
    any describer whose rejection rate among audited descriptions exceeds
    cascade_threshold has all remaining unaudited descriptions rejected
    as too generic. Returns a new corpus.
    """
    if not 0 < cascade_threshold <= 1:
        raise CorpusError(f"cascade_threshold must be in (0, 1], got {cascade_threshold}")
    by_id = {d.id: i for i, d in enumerate(corpus.descriptions)}
    descs = list(corpus.descriptions)
    for desc_id, status, rating in audits:
        if desc_id not in by_id:
            raise CorpusError(f"unknown description id {desc_id!r}")
        i = by_id[desc_id]
        descs[i] = replace(descs[i], status=status, rating=rating)

    # Rejection rate over audited descriptions only, before any cascade.
    audited: dict[str, int] = {}
    rejected: dict[str, int] = {}
    for d in descs:
        if d.status != "unaudited":
            audited[d.describer_id] = audited.get(d.describer_id, 0) + 1
            if d.status in REJECTED_STATUSES:
                rejected[d.describer_id] = rejected.get(d.describer_id, 0) + 1
    cascade = {k for k, n in audited.items()
               if rejected.get(k, 0) / n > cascade_threshold}

    for i, d in enumerate(descs):
        if d.status == "unaudited" and d.describer_id in cascade:
            descs[i] = replace(d, status="rejected_generic")

    return _build(descs, dict(corpus.images), dict(corpus.pos_tags))
