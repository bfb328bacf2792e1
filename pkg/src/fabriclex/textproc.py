"""Text normalization and token/type/lemma extraction.

Raw descriptions are lowercased, stripped of non-alphabetic characters
(intra-word hyphens and apostrophes survive), optionally spell-corrected,
filtered against a stop list, and lemmatized with a dictionary lookup
falling back to the surface form.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

POS_TAGS = ("noun", "adjective", "verb", "adverb", "other")

_STRIP_RE = re.compile(r"[^a-z'\-]+")
_EDGE_RE = re.compile(r"^['\-]+|['\-]+$")
_ALPHABET = string.ascii_lowercase + "'-"


class TextProcError(ValueError):
    pass


@dataclass(frozen=True)
class LemmaDictionary:
    """Surface form to lemma mapping plus a stop-word list.

    The mapping is closed on construction so that the lemma of a lemma is
    always itself.
    """
    mapping: dict[str, str]
    stopwords: frozenset[str]

    def __post_init__(self):
        closed = {}
        for surface, lemma in self.mapping.items():
            seen = {surface}
            while lemma in self.mapping and self.mapping[lemma] != lemma:
                if lemma in seen:
                    raise TextProcError(f"lemma cycle through {lemma!r}")
                seen.add(lemma)
                lemma = self.mapping[lemma]
            closed[surface] = lemma
        object.__setattr__(self, "mapping", closed)

    def lemma(self, token: str) -> str:
        return self.mapping.get(token, token)

    @classmethod
    def load(cls, lemma_path: str | Path | None = None,
             stopword_path: str | Path | None = None) -> "LemmaDictionary":
        """Load from TSV/stop-list files; defaults to the bundled tables."""
        if lemma_path is None:
            text = resources.files("fabriclex.data").joinpath("lemmas.tsv").read_text("utf-8")
        else:
            text = Path(lemma_path).read_text("utf-8")
        mapping = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TextProcError(f"lemma table line {lineno}: expected two columns")
            mapping[parts[0]] = parts[1]
        if stopword_path is None:
            stext = resources.files("fabriclex.data").joinpath("stopwords.txt").read_text("utf-8")
        else:
            stext = Path(stopword_path).read_text("utf-8")
        stops = set()
        for line in stext.splitlines():
            word = line.split("#", 1)[0].strip()
            if word:
                stops.add(word)
        return cls(mapping=mapping, stopwords=frozenset(stops))


@dataclass(frozen=True)
class SpellPolicy:
    """Conservative edit-distance-1 spell correction.

    A token is only corrected when its corpus frequency is below
    max_original_freq and some edit-1 candidate is at least `boost` times
    more frequent. Deterministic: highest candidate frequency wins, ties
    break alphabetically.
    """
    vocabulary: dict[str, int]
    max_original_freq: int = 3
    boost: int = 10

    def correct(self, token: str) -> str:
        freq = self.vocabulary.get(token, 0)
        if freq >= self.max_original_freq:
            return token
        need = max(1, self.boost * freq)
        best, best_freq = token, 0
        for cand in edit1_candidates(token):
            f = self.vocabulary.get(cand, 0)
            if f >= need and (f > best_freq or (f == best_freq and cand < best)):
                best, best_freq = cand, f
        return best if best_freq > 0 else token


def edit1_candidates(token: str) -> set[str]:
    """All strings at edit distance one (deletes, transposes, replaces, inserts)."""
    splits = [(token[:i], token[i:]) for i in range(len(token) + 1)]
    out = set()
    for left, right in splits:
        if right:
            out.add(left + right[1:])
            for c in _ALPHABET:
                out.add(left + c + right[1:])
        if len(right) > 1:
            out.add(left + right[1] + right[0] + right[2:])
        for c in _ALPHABET:
            out.add(left + c + right)
    out.discard(token)
    return out


@dataclass(frozen=True)
class ProcessedDescription:
    description_id: str
    tokens: tuple[str, ...]
    lemmas: tuple[str, ...]
    pos_tags: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.tokens) != len(self.lemmas):
            raise TextProcError(
                f"{self.description_id!r}: {len(self.tokens)} tokens vs {len(self.lemmas)} lemmas")

    @property
    def types(self) -> frozenset[str]:
        return frozenset(self.tokens)

    @property
    def lemma_set(self) -> frozenset[str]:
        return frozenset(self.lemmas)


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, drop non-alphabetic characters, split on whitespace."""
    cleaned = _STRIP_RE.sub(" ", text.lower())
    tokens = []
    for raw in cleaned.split():
        tok = _EDGE_RE.sub("", raw)
        if tok:
            tokens.append(tok)
    return tokens


def preprocess(text: str, lemma_dict: LemmaDictionary,
               spell: SpellPolicy | None = None,
               description_id: str = "",
               pos_tags: tuple[str, ...] | None = None) -> ProcessedDescription:
    """Normalize one description into kept tokens and their lemmas.

    Stop words are removed both as surface forms and as lemmas, so the
    lemma sequence never contains a stop word. Empty output is fine.
    """
    kept_tokens: list[str] = []
    kept_lemmas: list[str] = []
    for tok in normalize_tokens(text):
        if spell is not None:
            tok = spell.correct(tok)
        if tok in lemma_dict.stopwords:
            continue
        lem = lemma_dict.lemma(tok)
        if lem in lemma_dict.stopwords:
            continue
        kept_tokens.append(tok)
        kept_lemmas.append(lem)
    return ProcessedDescription(description_id=description_id,
                                tokens=tuple(kept_tokens),
                                lemmas=tuple(kept_lemmas),
                                pos_tags=pos_tags)


def preprocess_corpus(descriptions, lemma_dict: LemmaDictionary,
                      spell: SpellPolicy | None = None,
                      pos_annotations: dict[str, tuple[str, ...]] | None = None,
                      accepted_only: bool = True) -> list[ProcessedDescription]:
    """Preprocess corpus descriptions (Description objects or (id, text) pairs)."""
    pos_annotations = pos_annotations or {}
    out = []
    for d in descriptions:
        if hasattr(d, "id"):
            if accepted_only and getattr(d, "status", "accepted") != "accepted":
                continue
            did, text = d.id, d.text
        else:
            did, text = d
        out.append(preprocess(text, lemma_dict, spell, description_id=did,
                              pos_tags=pos_annotations.get(did)))
    return out


def build_spell_policy(texts, max_original_freq: int = 3, boost: int = 10) -> SpellPolicy:
    """Corpus-frequency vocabulary for spell correction, from raw texts."""
    vocab: dict[str, int] = {}
    for text in texts:
        for tok in normalize_tokens(text):
            vocab[tok] = vocab.get(tok, 0) + 1
    return SpellPolicy(vocabulary=vocab, max_original_freq=max_original_freq, boost=boost)


def split_sentences(text: str) -> list[str]:
    """Naive sentence split on ., ? and !."""
    parts = re.split(r"[.?!]+", text)
    return [p.strip() for p in parts if p.strip()]


def load_pos_annotations(path: str | Path) -> dict[str, tuple[str, ...]]:
    """Read adapter-produced JSONL: {"description_id", "tags": [...]}."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            tags = tuple(rec["tags"])
            bad = [t for t in tags if t not in POS_TAGS]
            if bad:
                raise TextProcError(f"{Path(path).name}:{lineno}: unknown POS tags {bad}")
            out[rec["description_id"]] = tags
    return out


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    q25: float
    q75: float

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


def _summary(values) -> Summary:
    arr = np.asarray(values, dtype=float)
    q25, q75 = np.percentile(arr, [25, 75])
    return Summary(mean=float(arr.mean()), median=float(np.median(arr)),
                   q25=float(q25), q75=float(q75))


@dataclass(frozen=True)
class TextStats:
    n_descriptions: int
    total_tokens: int
    n_types: int
    n_lemmas: int
    tokens_per_description: Summary
    types_per_description: Summary
    lemmas_per_description: Summary
    length_histogram: dict[int, int]
    raw_length_histogram: dict[int, int] | None = None
    pos_fractions: dict[str, Summary] = field(default_factory=dict)


def corpus_stats(processed: list[ProcessedDescription],
                 raw_token_counts: dict[str, int] | None = None) -> TextStats:
    """Corpus-wide totals plus per-description count summaries.

    raw_token_counts (description id -> pre-normalization token count)
    adds the before-cleanup length histogram when available.
    """
    if not processed:
        raise TextProcError("empty corpus")
    token_counts = [len(d.tokens) for d in processed]
    type_counts = [len(d.types) for d in processed]
    lemma_counts = [len(d.lemma_set) for d in processed]

    all_types: set[str] = set()
    all_lemmas: set[str] = set()
    for d in processed:
        all_types.update(d.tokens)
        all_lemmas.update(d.lemmas)

    hist: dict[int, int] = {}
    for n in token_counts:
        hist[n] = hist.get(n, 0) + 1
    raw_hist = None
    if raw_token_counts is not None:
        raw_hist = {}
        for n in raw_token_counts.values():
            raw_hist[n] = raw_hist.get(n, 0) + 1

    pos_fractions = {}
    tagged = [d for d in processed if d.pos_tags]
    if tagged:
        for tag in POS_TAGS:
            fracs = [d.pos_tags.count(tag) / len(d.pos_tags) for d in tagged]
            pos_fractions[tag] = _summary(fracs)

    return TextStats(
        n_descriptions=len(processed),
        total_tokens=sum(token_counts),
        n_types=len(all_types),
        n_lemmas=len(all_lemmas),
        tokens_per_description=_summary(token_counts),
        types_per_description=_summary(type_counts),
        lemmas_per_description=_summary(lemma_counts),
        length_histogram=dict(sorted(hist.items())),
        raw_length_histogram=dict(sorted(raw_hist.items())) if raw_hist else None,
        pos_fractions=pos_fractions,
    )
