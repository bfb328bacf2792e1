"""Order-of-appearance analysis of attributes within descriptions.

Each description yields an ordinal rank per attribute it mentions (1 for
the attribute whose lemma appears first, and so on). Rank products
summarize where an attribute tends to surface; a Kruskal-Wallis test
plus Dunn post-hoc groups attributes with indistinguishable mean ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .attributes import AttributeSet
from .stattests import StatResult, dunn_posthoc, kruskal_wallis
from .textproc import ProcessedDescription


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class RankTable:
    """Ordinal attribute ranks collected over descriptions."""
    ranks: dict[str, list[int]]

    def counts(self) -> dict[str, int]:
        return {a: len(r) for a, r in self.ranks.items()}


def attribute_ranks(description: ProcessedDescription,
                    attrs) -> list[tuple[str, int]]:
    """Attributes present in a description with their appearance rank.

    Rank is the ordinal position of the attribute's first member lemma in
    the lemma sequence. attrs is an AttributeSet or a plain mapping of
    attribute name to member lemmas; with the latter, members may overlap
    and attributes tied on first position order alphabetically.
    """
    if isinstance(attrs, AttributeSet):
        member_sets = {a.name: a.members for a in attrs.attributes}
    else:
        member_sets = attrs
    first: dict[str, int] = {}
    member_of: dict[str, list[str]] = {}
    for name, members in member_sets.items():
        for lem in members:
            member_of.setdefault(lem, []).append(name)
    for pos, lem in enumerate(description.lemmas):
        for name in member_of.get(lem, ()):
            if name not in first:
                first[name] = pos
    ordered = sorted(first.items(), key=lambda kv: (kv[1], kv[0]))
    return [(name, rank) for rank, (name, _) in enumerate(ordered, start=1)]


def rank_table(processed: list[ProcessedDescription],
               attrs: AttributeSet) -> RankTable:
    table: dict[str, list[int]] = {name: [] for name in attrs.names}
    for d in processed:
        for name, rank in attribute_ranks(d, attrs):
            table[name].append(rank)
    return RankTable(ranks=table)


def rank_product(table: RankTable) -> dict[str, float]:
    """Geometric mean rank per attribute, in log space.

    Attributes that never appear are omitted (the CLI reports them n/a).
    """
    out = {}
    for name, ranks in table.ranks.items():
        if ranks:
            out[name] = math.exp(sum(math.log(r) for r in ranks) / len(ranks))
    return out


@dataclass(frozen=True)
class StructureResult:
    kw: StatResult
    attribute_order: tuple[str, ...]       # by rank product, ascending
    psi: dict[str, float]
    posthoc_p: dict[tuple[str, str], float]
    groups: tuple[tuple[str, ...], ...]


def structure_test(table: RankTable, alpha: float = 0.05,
                   correction: str = "holm") -> StructureResult:
    """Kruskal-Wallis over attribute ranks plus post-hoc grouping.

    Attributes are ordered by rank product; walking that order, an
    attribute joins the current group when Dunn's test finds it
    indistinguishable from at least one member (single-linkage chaining),
    which yields contiguous groups.
    """
    psi = rank_product(table)
    names = sorted(psi, key=lambda a: (psi[a], a))
    if len(names) < 2:
        raise StructureError("need at least 2 attributes with observations")
    samples = [table.ranks[a] for a in names]
    kw = kruskal_wallis(samples)
    p_matrix = dunn_posthoc(samples, correction=correction)
    posthoc = {}
    for i, a in enumerate(names):
        for j in range(i + 1, len(names)):
            posthoc[(a, names[j])] = float(p_matrix[i, j])

    def pairwise_p(a: str, b: str) -> float:
        return posthoc[(a, b)] if (a, b) in posthoc else posthoc[(b, a)]

    groups: list[list[str]] = [[names[0]]]
    for name in names[1:]:
        if any(pairwise_p(name, member) > alpha for member in groups[-1]):
            groups[-1].append(name)
        else:
            groups.append([name])
    return StructureResult(kw=kw, attribute_order=tuple(names), psi=psi,
                           posthoc_p=posthoc,
                           groups=tuple(tuple(g) for g in groups))
