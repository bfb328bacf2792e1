"""Lemma frequency, dispersion and lexicon selection.

Absolute frequency counts every occurrence of any surface form of a
lemma. Average reduced frequency (ARF) discounts lemmas whose
occurrences cluster in a few places: with occurrences at stream
positions p_1 < ... < p_f in a corpus of N tokens, circular gaps
d_i = p_{i+1} - p_i (wrapping for the last), and v = N / f,

    arf = (1/v) * sum_i min(d_i, v)

which equals f for perfectly even spacing and approaches 1 for a
single tight burst.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textproc import ProcessedDescription


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class LemmaStats:
    lemma: str
    f: int
    arf: float


@dataclass(frozen=True)
class Lexicon:
    lemmas: tuple[str, ...]
    size: int
    coverage: float


def token_stream(processed: list[ProcessedDescription]) -> list[str]:
    """Concatenated lemma stream in ascending description-id order.

    ARF depends on occurrence positions, so the order is fixed here once
    and used everywhere.
    """
    ordered = sorted(processed, key=lambda d: d.description_id)
    stream: list[str] = []
    for d in ordered:
        stream.extend(d.lemmas)
    return stream


def frequency_table(processed: list[ProcessedDescription]) -> list[tuple[str, int]]:
    """Absolute lemma frequencies, sorted by frequency then lemma."""
    counts: dict[str, int] = {}
    for d in processed:
        for lem in d.lemmas:
            counts[lem] = counts.get(lem, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def arf_from_positions(positions: np.ndarray, stream_length: int) -> float:
    """Closed-form ARF for sorted 0-based occurrence positions."""
    f = len(positions)
    if f == 0:
        raise LexiconError("lemma has no occurrences")
    v = stream_length / f
    gaps = np.empty(f, dtype=float)
    gaps[:-1] = np.diff(positions)
    gaps[-1] = stream_length - positions[-1] + positions[0]
    return float(np.minimum(gaps, v).sum() / v)


def arf_table(processed: list[ProcessedDescription]) -> dict[str, LemmaStats]:
    """Frequency and ARF for every lemma in the corpus."""
    stream = token_stream(processed)
    n = len(stream)
    if n == 0:
        raise LexiconError("empty token stream")
    positions: dict[str, list[int]] = {}
    for i, lem in enumerate(stream):
        positions.setdefault(lem, []).append(i)
    out = {}
    for lem, pos in positions.items():
        arr = np.asarray(pos)
        out[lem] = LemmaStats(lemma=lem, f=len(pos), arf=arf_from_positions(arr, n))
    return out


def arf(processed: list[ProcessedDescription], lemma: str) -> float:
    table = arf_table(processed)
    if lemma not in table:
        raise LexiconError(f"unknown lemma {lemma!r}")
    return table[lemma].arf


def arf_ranking(table: dict[str, LemmaStats]) -> list[str]:
    """Lemmas ordered by (arf desc, f desc, lemma asc)."""
    return [s.lemma for s in sorted(table.values(),
                                    key=lambda s: (-s.arf, -s.f, s.lemma))]


def coverage_curve(processed: list[ProcessedDescription],
                   ranking: list[str]) -> list[tuple[int, float]]:
    """Mean description coverage for every lexicon size k = 1..len(ranking).

    Coverage of a description is the fraction of its distinct lemmas found
    in the top-k set; descriptions with no lemmas are excluded.

    Counts are accumulated as integers grouped by description size, so the
    full-lexicon coverage is exactly 1.0 and the curve is non-decreasing
    even in floating point.
    """
    rank_of = {lem: i for i, lem in enumerate(ranking)}
    n_ranks = len(ranking)
    # gains_by_size[n] counts, per rank, lemma hits from descriptions
    # holding exactly n distinct lemmas.
    gains_by_size: dict[int, np.ndarray] = {}
    counted = 0
    for d in processed:
        distinct = d.lemma_set
        if not distinct:
            continue
        counted += 1
        n = len(distinct)
        gains = gains_by_size.get(n)
        if gains is None:
            gains = gains_by_size[n] = np.zeros(n_ranks, dtype=np.int64)
        for lem in distinct:
            try:
                gains[rank_of[lem]] += 1
            except KeyError:
                raise LexiconError(f"lemma {lem!r} missing from ranking") from None
    if counted == 0:
        raise LexiconError("no description has lemmas")
    curve = np.zeros(n_ranks, dtype=float)
    for n in sorted(gains_by_size):
        curve += np.cumsum(gains_by_size[n]) / n
    curve /= counted
    return [(k + 1, float(c)) for k, c in enumerate(curve)]


def select_lexicon(curve: list[tuple[int, float]], ranking: list[str],
                   target: float) -> Lexicon:
    """Smallest top-k prefix whose mean coverage reaches the target."""
    if not 0 < target <= 1:
        raise LexiconError(f"coverage target must be in (0, 1], got {target}")
    for k, cov in curve:
        # Tolerate last-digit float noise at the top of the curve.
        if cov >= target - 1e-12:
            return Lexicon(lemmas=tuple(ranking[:k]), size=k, coverage=cov)
    raise LexiconError(f"coverage target {target} not reachable (max {curve[-1][1]:.6f})")
