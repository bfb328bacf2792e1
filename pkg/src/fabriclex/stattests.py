"""Rank-based statistical tests.

Kruskal-Wallis with tie correction, Dunn's pairwise post-hoc, ANOSIM
with label permutations, and the Wilcoxon signed-rank test. All ranking
uses midranks for ties. Permutation tests draw from an explicit seeded
Philox generator, never global state.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import chi2, norm, rankdata


class StatTestError(ValueError):
    pass


@dataclass(frozen=True)
class StatResult:
    method: str
    statistic: float
    p_value: float
    n: int
    effect_size: float | None = None
    df: int | None = None
    permutations: int | None = None
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _tie_term(pooled: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(pooled, return_counts=True)
    t = counts.astype(float)
    return float(np.sum(t ** 3 - t))


def _check_groups(groups) -> list[np.ndarray]:
    if len(groups) < 2:
        raise StatTestError("need at least 2 groups")
    arrs = [np.asarray(g, dtype=float) for g in groups]
    for i, g in enumerate(arrs):
        if g.size == 0:
            raise StatTestError(f"group {i} is empty")
    return arrs


def kruskal_wallis(groups) -> StatResult:
    """Kruskal-Wallis H with midrank tie handling and chi-square p-value.

    H is assembled in exact rational arithmetic (midranks are
    half-integers) so textbook fixtures come out digit-exact; only the
    final value is floated.
    """
    arrs = _check_groups(groups)
    pooled = np.concatenate(arrs)
    n_total = pooled.size
    # Doubled midranks are exact integers.
    ranks2 = np.rint(2 * rankdata(pooled)).astype(np.int64)
    sum_term = Fraction(0)
    start = 0
    for g in arrs:
        r2_sum = int(ranks2[start:start + g.size].sum())
        sum_term += Fraction(r2_sum * r2_sum, 4 * g.size)
        start += g.size
    h_raw = Fraction(12, n_total * (n_total + 1)) * sum_term - 3 * (n_total + 1)
    _, tie_counts = np.unique(pooled, return_counts=True)
    ties = int(np.sum(tie_counts.astype(np.int64) ** 3 - tie_counts))
    correction = 1 - Fraction(ties, n_total ** 3 - n_total)
    df = len(arrs) - 1
    if correction <= 0:
        # Every pooled value identical: no evidence of any difference.
        return StatResult(method="kruskal_wallis", statistic=0.0, p_value=1.0,
                          n=n_total, df=df)
    h = float(h_raw / correction)
    return StatResult(method="kruskal_wallis", statistic=h,
                      p_value=float(chi2.sf(h, df)), n=n_total, df=df)


def holm_adjust(p_values: np.ndarray) -> np.ndarray:
    """Holm step-down adjusted p-values."""
    m = p_values.size
    order = np.argsort(p_values, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[idx]))
        adjusted[idx] = running
    return adjusted


def dunn_posthoc(groups, correction: str = "holm") -> np.ndarray:
    """Pairwise Dunn z-test p-value matrix after Kruskal-Wallis.

    Variance uses the pooled tie correction. correction is one of
    none, bonferroni, holm.
    """
    if correction not in ("none", "bonferroni", "holm"):
        raise StatTestError(f"unknown correction {correction!r}")
    arrs = _check_groups(groups)
    k = len(arrs)
    pooled = np.concatenate(arrs)
    n_total = pooled.size
    ranks = rankdata(pooled)
    mean_ranks, sizes = [], []
    start = 0
    for g in arrs:
        mean_ranks.append(ranks[start:start + g.size].mean())
        sizes.append(g.size)
        start += g.size
    tie = _tie_term(pooled) / (12.0 * (n_total - 1))
    var_base = n_total * (n_total + 1) / 12.0 - tie

    out = np.ones((k, k))
    if var_base <= 0:
        return out
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    raw = np.empty(len(pairs))
    for idx, (i, j) in enumerate(pairs):
        se = np.sqrt(var_base * (1.0 / sizes[i] + 1.0 / sizes[j]))
        z = (mean_ranks[i] - mean_ranks[j]) / se
        raw[idx] = 2.0 * norm.sf(abs(z))
    if correction == "bonferroni":
        adj = np.minimum(1.0, raw * len(pairs))
    elif correction == "holm":
        adj = holm_adjust(raw)
    else:
        adj = raw
    for idx, (i, j) in enumerate(pairs):
        out[i, j] = out[j, i] = adj[idx]
    return out


def _condensed_index(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    """Condensed upper-triangle index for pairs with i < j."""
    i = i.astype(np.int64)
    j = j.astype(np.int64)
    return i * n - i * (i + 1) // 2 + j - i - 1


def _iter_pair_chunks(n: int, chunk: int):
    """Yield (i_array, j_array) covering all i < j pairs in condensed order."""
    buf_i, buf_j, buffered = [], [], 0
    for i in range(n - 1):
        js = np.arange(i + 1, n, dtype=np.int64)
        buf_i.append(np.full(js.size, i, dtype=np.int64))
        buf_j.append(js)
        buffered += js.size
        if buffered >= chunk:
            yield np.concatenate(buf_i), np.concatenate(buf_j)
            buf_i, buf_j, buffered = [], [], 0
    if buffered:
        yield np.concatenate(buf_i), np.concatenate(buf_j)


class _PairRanks:
    """Midranks of all pairwise dissimilarities, exact or histogram-binned."""

    def __init__(self, ranks=None, bin_index=None, bin_midranks=None):
        self._ranks = ranks
        self._bin_index = bin_index
        self._bin_midranks = bin_midranks

    def lookup(self, condensed: np.ndarray) -> np.ndarray:
        if self._ranks is not None:
            return self._ranks[condensed]
        return self._bin_midranks[self._bin_index[condensed]]


def _pair_values(dissimilarity, n: int, chunk: int):
    """Yield condensed-order dissimilarity chunks from matrix/array/callable input."""
    if callable(dissimilarity):
        for i, j in _iter_pair_chunks(n, chunk):
            vals = np.asarray(dissimilarity(i, j), dtype=float)
            if vals.shape != i.shape:
                raise StatTestError("dissimilarity callable returned wrong shape")
            yield vals
        return
    arr = np.asarray(dissimilarity, dtype=float)
    m = n * (n - 1) // 2
    if arr.ndim == 1:
        if arr.size != m:
            raise StatTestError(f"condensed dissimilarity has {arr.size} entries, expected {m}")
        for lo in range(0, m, chunk):
            yield arr[lo:min(lo + chunk, m)]
    elif arr.ndim == 2:
        if arr.shape != (n, n):
            raise StatTestError(f"dissimilarity matrix shape {arr.shape} != ({n}, {n})")
        for i, j in _iter_pair_chunks(n, chunk):
            yield arr[i, j]
    else:
        raise StatTestError("dissimilarity must be 1-D, 2-D or callable")


def _rank_pairs_exact(dissimilarity, n: int, chunk: int) -> _PairRanks:
    values = np.concatenate(list(_pair_values(dissimilarity, n, chunk)))
    return _PairRanks(ranks=rankdata(values))


def _rank_pairs_histogram(dissimilarity, n: int, chunk: int, bins: int,
                          value_range: tuple[float, float]) -> _PairRanks:
    lo, hi = value_range
    if not hi > lo:
        raise StatTestError(f"bad value_range {value_range}")
    m = n * (n - 1) // 2
    scale = bins / (hi - lo)
    bin_index = np.empty(m, dtype=np.uint32)
    counts = np.zeros(bins, dtype=np.int64)
    pos = 0
    for vals in _pair_values(dissimilarity, n, chunk):
        idx = np.clip(((vals - lo) * scale).astype(np.int64), 0, bins - 1)
        bin_index[pos:pos + idx.size] = idx
        counts += np.bincount(idx, minlength=bins)
        pos += idx.size
    before = np.concatenate(([0], np.cumsum(counts)[:-1]))
    midranks = before + (counts + 1) / 2.0
    return _PairRanks(bin_index=bin_index, bin_midranks=midranks)


class _WithinPairs:
    """Condensed indices of same-group pairs for a label assignment."""

    def __init__(self, n: int):
        self.n = n
        self._templates: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def indices(self, codes: np.ndarray) -> np.ndarray:
        order = np.argsort(codes, kind="stable")
        sorted_codes = codes[order]
        boundaries = np.flatnonzero(np.diff(sorted_codes)) + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [codes.size]))
        by_size: dict[int, list[np.ndarray]] = {}
        for s, e in zip(starts, ends):
            if e - s >= 2:
                members = np.sort(order[s:e])
                by_size.setdefault(e - s, []).append(members)
        chunks = []
        for size, groups in by_size.items():
            tmpl = self._templates.get(size)
            if tmpl is None:
                tmpl = self._templates[size] = np.triu_indices(size, 1)
            ti, tj = tmpl
            members = np.vstack(groups)
            chunks.append(_condensed_index(members[:, ti].ravel(),
                                           members[:, tj].ravel(), self.n))
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)


def anosim(dissimilarity, labels, permutations: int = 999, seed: int = 0,
           mode: str = "auto", bins: int = 1 << 20,
           value_range: tuple[float, float] = (0.0, 2.0),
           chunk: int = 2_000_000) -> StatResult:
    """Analysis of similarities over grouped items.

    dissimilarity is a square matrix, a condensed upper-triangle vector,
    or a callable mapping index arrays (i, j) to values. R compares mean
    between-group and within-group dissimilarity ranks; the p-value
    counts label permutations reaching the observed R.

    mode "exact" ranks all pairs directly; "histogram" quantizes values
    into bins (midranks within each bin) so very large pair counts fit in
    memory; "auto" picks exact up to 5000 items.
    """
    codes = np.unique(np.asarray(labels), return_inverse=True)[1]
    n = codes.size
    if n < 4:
        raise StatTestError(f"need at least 4 items, got {n}")
    sizes = np.bincount(codes)
    if sizes.size < 2:
        raise StatTestError("degenerate grouping: single group covers all items")
    if int((sizes >= 2).sum()) < 2:
        raise StatTestError("need at least 2 groups with at least 2 members")
    if mode == "auto":
        mode = "exact" if n <= 5000 else "histogram"
    if mode == "exact":
        pair_ranks = _rank_pairs_exact(dissimilarity, n, chunk)
    elif mode == "histogram":
        pair_ranks = _rank_pairs_histogram(dissimilarity, n, chunk, bins, value_range)
    else:
        raise StatTestError(f"unknown anosim mode {mode!r}")

    m_pairs = n * (n - 1) // 2
    total_rank = m_pairs * (m_pairs + 1) / 2.0
    within = _WithinPairs(n)

    def r_stat(c: np.ndarray) -> float:
        idx = within.indices(c)
        m_w = idx.size
        s_w = float(pair_ranks.lookup(idx).sum())
        r_within = s_w / m_w
        r_between = (total_rank - s_w) / (m_pairs - m_w)
        return (r_between - r_within) / (m_pairs / 2.0)

    r_obs = r_stat(codes)
    rng = np.random.Generator(np.random.Philox(seed))
    hits = 0
    for _ in range(permutations):
        if r_stat(rng.permutation(codes)) >= r_obs - 1e-12:
            hits += 1
    p = (hits + 1) / (permutations + 1)
    return StatResult(method="anosim", statistic=float(r_obs), p_value=float(p),
                      n=n, effect_size=float(r_obs), permutations=permutations,
                      seed=seed)


def _exact_signed_rank_cdf(n: int) -> np.ndarray:
    """CDF of the one-sided signed-rank sum for n untied differences."""
    max_w = n * (n + 1) // 2
    counts = np.zeros(max_w + 1, dtype=float)
    counts[0] = 1.0
    for r in range(1, n + 1):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts = counts + shifted
    return np.cumsum(counts) / 2.0 ** n


def wilcoxon_signed_rank(pairs, mode: str = "auto") -> StatResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; |differences| are midranked. The
    statistic is the smaller signed-rank sum. mode "exact" enumerates the
    tail distribution (requires untied ranks), "normal" uses the Z
    approximation with continuity correction; "auto" is exact for n <= 25
    without ties. The reported effect size is |Z| / sqrt(n) in all modes.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise StatTestError("pairs must be a sequence of (x, y)")
    diffs = arr[:, 0] - arr[:, 1]
    diffs = diffs[diffs != 0]
    n = diffs.size
    if n == 0:
        raise StatTestError("degenerate: all differences are zero")
    if n < 6:
        raise StatTestError(f"need at least 6 non-zero differences, got {n}")
    absd = np.abs(diffs)
    ranks = rankdata(absd)
    t_plus = float(ranks[diffs > 0].sum())
    t_minus = float(ranks[diffs < 0].sum())
    w = min(t_plus, t_minus)

    mu = n * (n + 1) / 4.0
    tie = _tie_term(absd)
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie / 48.0
    if sigma2 <= 0:
        raise StatTestError("degenerate: zero variance")
    sigma = np.sqrt(sigma2)
    # Continuity correction pulls W half a step toward the mean.
    z = (w - mu + 0.5) / sigma if w < mu else 0.0
    effect = abs(z) / np.sqrt(n)

    has_ties = np.unique(absd).size != n
    if mode == "auto":
        mode = "exact" if (n <= 25 and not has_ties) else "normal"
    if mode == "exact":
        if has_ties:
            raise StatTestError("exact mode requires untied |differences|")
        cdf = _exact_signed_rank_cdf(n)
        p = min(1.0, 2.0 * float(cdf[int(round(w))]))
    elif mode == "normal":
        p = min(1.0, 2.0 * float(norm.cdf(z)))
    else:
        raise StatTestError(f"unknown wilcoxon mode {mode!r}")
    return StatResult(method="wilcoxon_signed_rank", statistic=w, p_value=p,
                      n=n, effect_size=float(effect))
