from itertools import combinations

import numpy as np
import pytest

from fabriclex.attributes import (UNCLASSIFIABLE, AttributeSetError,
                                  affinity_propagation, attribute_probabilities,
                                  attribute_set_from_csv, build_attribute_set,
                                  classify_keyword, generalization_precision)
from fabriclex.textproc import ProcessedDescription

from conftest import store_from


def proc(desc_id, lemmas):
    lem = tuple(lemmas.split())
    return ProcessedDescription(description_id=desc_id, tokens=lem, lemmas=lem)


def two_blobs(rng, n_per=10, spread=0.05, offset=8.0):
    a = rng.normal(scale=spread, size=(n_per, 2))
    b = rng.normal(scale=spread, size=(n_per, 2)) + offset
    return np.vstack([a, b])


def best_two_medoids(sim):
    """Exhaustive 2-medoid search maximizing total similarity to the medoid."""
    n = sim.shape[0]
    best, best_score = None, -np.inf
    for pair in combinations(range(n), 2):
        assign = np.argmax(sim[:, pair], axis=1)
        score = sum(sim[i, pair[assign[i]]] for i in range(n))
        if score > best_score:
            best, best_score = pair, score
    return best


def test_ap_two_blobs_matches_medoid_oracle():
    rng = np.random.default_rng(0)
    pts = two_blobs(rng)
    sim = -np.square(pts[:, None] - pts[None, :]).sum(axis=2)
    result = affinity_propagation(sim, preference="median", damping=0.9)
    assert result.converged
    assert len(result.exemplars) == 2
    ap_groups = {tuple(np.flatnonzero(result.labels == e))
                 for e in result.exemplars}
    # Exhaustive 2-medoid search must induce the same partition.
    medoids = best_two_medoids(sim)
    oracle_assign = np.argmax(sim[:, medoids], axis=1)
    oracle_groups = {tuple(np.flatnonzero(oracle_assign == g)) for g in (0, 1)}
    assert ap_groups == oracle_groups
    assert ap_groups == {tuple(range(10)), tuple(range(10, 20))}


def test_ap_two_points_low_preference_single_exemplar():
    sim = np.array([[0.0, 5.0], [5.0, 0.0]])
    result = affinity_propagation(sim, preference=-10.0)
    assert len(result.exemplars) == 1
    assert set(result.labels) == set(result.exemplars)


def test_ap_two_points_high_preference_two_exemplars():
    sim = np.array([[0.0, -5.0], [-5.0, 0.0]])
    result = affinity_propagation(sim, preference=10.0)
    assert len(result.exemplars) == 2


def test_ap_shift_invariance():
    rng = np.random.default_rng(1)
    pts = two_blobs(rng, n_per=7)
    sim = -np.square(pts[:, None] - pts[None, :]).sum(axis=2)
    base = affinity_propagation(sim, preference="median")
    shifted = affinity_propagation(sim + 3.7, preference="median")
    assert np.array_equal(base.labels, shifted.labels)


def test_ap_input_validation():
    with pytest.raises(AttributeSetError):
        affinity_propagation(np.zeros((2, 3)))
    with pytest.raises(AttributeSetError):
        affinity_propagation(np.array([[np.nan, 0], [0, 0]]))
    with pytest.raises(AttributeSetError):
        affinity_propagation(np.zeros((3, 3)), damping=0.4)


def _toy_store():
    return store_from({
        "red": [1, 0, 0, 0], "blue": [0.9, 0.1, 0, 0], "green": [0.95, 0.05, 0, 0],
        "soft": [0, 1, 0, 0], "rough": [0, 0.9, 0.1, 0],
        "plaid": [0, 0, 1, 0], "striped": [0, 0.1, 0.9, 0],
    })


def test_build_attribute_set_with_curation():
    store = _toy_store()
    clusters = {"red": "c0", "blue": "c0", "green": "c0",
                "soft": "c1", "rough": "c1",
                "plaid": "c2", "striped": "c2"}
    curation = {"c0": "color", "c1": "touch", "c2": "pattern"}
    attrs = build_attribute_set(clusters, curation, store)
    assert attrs.names == ("color", "pattern", "touch")
    color = attrs.get("color")
    assert color.members == {"red", "blue", "green"}
    expected = np.mean([store.vector(k) for k in sorted(color.members)], axis=0)
    assert np.allclose(color.centroid, expected)
    assert color.exemplar in color.members


def test_build_attribute_set_outliers_and_merge():
    store = _toy_store()
    clusters = {"red": "c0", "blue": "c1", "soft": "c2", "plaid": "c3"}
    curation = {"c0": "color", "c1": "color", "c2": "outlier", "c3": "pattern"}
    attrs = build_attribute_set(clusters, curation, store)
    assert attrs.get("color").members == {"red", "blue"}
    assert attrs.outliers == {"soft"}


def test_build_attribute_set_exemplar_named_without_curation():
    store = _toy_store()
    attrs = build_attribute_set({"red": "red", "blue": "red", "soft": "soft"},
                                curation=None, store=store)
    assert attrs.names == ("red", "soft")


def test_build_attribute_set_missing_lemma():
    store = _toy_store()
    with pytest.raises(AttributeSetError, match="absent"):
        build_attribute_set({"velvetine": "c0"}, {"c0": "touch"}, store)


def test_attribute_set_rejects_overlap():
    from fabriclex.attributes import Attribute, AttributeSet
    a = Attribute("x", frozenset({"l1"}), "l1")
    b = Attribute("y", frozenset({"l1"}), "l1")
    with pytest.raises(AttributeSetError, match="multiple"):
        AttributeSet(attributes=(a, b))


def test_attribute_csv_roundtrip(tmp_path):
    path = tmp_path / "attrs.csv"
    path.write_text("lemma,attribute\nred,color\nsoft,touch\nodd,outlier\n")
    attrs = attribute_set_from_csv(path)
    assert attrs.names == ("color", "touch")
    assert attrs.outliers == {"odd"}


def test_bundled_curation_loads_eleven_attributes():
    from fabriclex.attributes import bundled_attribute_csv
    attrs = attribute_set_from_csv(bundled_attribute_csv())
    assert set(attrs.names) == {"color", "lightness", "metallic", "pattern",
                                "fabric_type", "sewing", "touch", "weight",
                                "use", "weathering", "military"}


def _attrs_no_store():
    return build_attribute_set(
        {"red": "color", "blue": "color", "soft": "touch", "plaid": "pattern"},
        curation=None, store=None)


def test_probabilities_color_everywhere():
    attrs = _attrs_no_store()
    processed = [proc("a", "red soft"), proc("b", "blue"), proc("c", "red plaid")]
    probs = attribute_probabilities(processed, attrs)
    assert probs.p[list(probs.names).index("color")] == 1.0


def test_probabilities_hand_enumerated():
    attrs = _attrs_no_store()
    # d1: color+touch, d2: color only
    processed = [proc("d1", "red soft"), proc("d2", "blue blue")]
    probs = attribute_probabilities(processed, attrs)
    names = list(probs.names)
    c, p_, t = names.index("color"), names.index("pattern"), names.index("touch")
    assert probs.p[c] == 1.0
    assert probs.p[t] == 0.5
    assert probs.p[p_] == 0.0
    # p(touch | color) = 1/2 ; p(color | touch) = 1
    assert probs.p_cond[t, c] == 0.5
    assert probs.p_cond[c, t] == 1.0
    assert np.isnan(probs.p_cond[c, p_])


def test_probabilities_joint_identity():
    rng = np.random.default_rng(2)
    attrs = _attrs_no_store()
    vocab = ["red", "blue", "soft", "plaid", "filler"]
    processed = [proc(f"d{i}", " ".join(rng.choice(vocab, size=rng.integers(1, 5))))
                 for i in range(50)]
    probs = attribute_probabilities(processed, attrs)
    k = len(probs.names)
    for i in range(k):
        for j in range(k):
            if i == j or probs.counts[j] == 0 or probs.counts[i] == 0:
                continue
            lhs = probs.p_cond[i, j] * probs.p[j]
            rhs = probs.p_cond[j, i] * probs.p[i]
            assert abs(lhs - probs.p_joint[i, j]) < 1e-12
            assert abs(lhs - rhs) < 1e-12


def test_probabilities_empty_corpus():
    with pytest.raises(AttributeSetError):
        attribute_probabilities([], _attrs_no_store())


def test_classify_orthogonal_centroids():
    store = store_from({"w1": [1, 0], "w2": [0, 1], "q": [1, 0]})
    attrs = build_attribute_set({"w1": "a1", "w2": "a2"}, None, store)
    assert classify_keyword("q", attrs, store, excluded=frozenset()) == "a1"


def test_classify_exemplar_maps_to_own_attribute():
    store = _toy_store()
    attrs = build_attribute_set(
        {"red": "c0", "blue": "c0", "soft": "c1", "rough": "c1", "plaid": "c2"},
        {"c0": "color", "c1": "touch", "c2": "pattern"}, store)
    for attr in attrs.attributes:
        assert classify_keyword(attr.exemplar, attrs, store,
                                excluded=frozenset()) == attr.name


def test_classify_scale_invariance():
    store = store_from({"w1": [1, 0], "w2": [0, 1], "q": [3, 1]})
    scaled = store_from({"w1": [1, 0], "w2": [0, 1], "q": [30, 10]})
    attrs = build_attribute_set({"w1": "a1", "w2": "a2"}, None, store)
    assert (classify_keyword("q", attrs, store, frozenset())
            == classify_keyword("q", attrs, scaled, frozenset()))


def test_classify_missing_embedding():
    store = store_from({"w1": [1, 0]})
    attrs = build_attribute_set({"w1": "a1"}, None, store)
    assert classify_keyword("ghost", attrs, store) == UNCLASSIFIABLE


def test_classify_default_exclusions():
    store = store_from({"w1": [1, 0], "w2": [0, 1], "q": [1, 0.1]})
    attrs = build_attribute_set({"w1": "sewing", "w2": "color"}, None, store)
    # Nearest centroid is sewing, but sewing is excluded by default.
    assert classify_keyword("q", attrs, store) == "color"


def test_generalization_precision_all_correct():
    store = store_from({"w1": [1, 0], "w2": [0, 1], "k1": [0.9, 0.1], "k2": [0.1, 0.9]})
    attrs = build_attribute_set({"w1": "a1", "w2": "a2"}, None, store)
    table = generalization_precision(
        [("k1", "a1", "wood"), ("k2", "a2", "wood")], attrs, store, frozenset())
    assert table.per_class["wood"]["a1"] == 1.0
    assert table.per_class["wood"]["a2"] == 1.0
    assert table.average["a1"] == 1.0


def test_generalization_precision_hand_confusions():
    # 10 keywords, 2 known confusions: k9 truly a2 predicted a1, k10 truly a1 predicted a2.
    vectors = {"w1": [1, 0], "w2": [0, 1]}
    for i in range(1, 5):
        vectors[f"p{i}"] = [1, 0.01 * i]        # predicted a1, labeled a1
    for i in range(5, 9):
        vectors[f"p{i}"] = [0.01 * i, 1]        # predicted a2, labeled a2
    vectors["k9"] = [1, 0.2]                    # predicted a1, labeled a2
    vectors["k10"] = [0.2, 1]                   # predicted a2, labeled a1
    store = store_from(vectors)
    attrs = build_attribute_set({"w1": "a1", "w2": "a2"}, None, store)
    labeled = ([(f"p{i}", "a1", "stone") for i in range(1, 5)]
               + [(f"p{i}", "a2", "stone") for i in range(5, 9)]
               + [("k9", "a2", "stone"), ("k10", "a1", "stone")])
    table = generalization_precision(labeled, attrs, store, frozenset())
    # a1 predictions: p1..p4 correct + k9 wrong -> 4/5; same for a2.
    assert table.per_class["stone"]["a1"] == pytest.approx(0.8)
    assert table.per_class["stone"]["a2"] == pytest.approx(0.8)


def test_generalization_precision_unpredicted_is_none():
    store = store_from({"w1": [1, 0], "w2": [0, 1], "k": [1, 0]})
    attrs = build_attribute_set({"w1": "a1", "w2": "a2"}, None, store)
    table = generalization_precision([("k", "a1", "metal")], attrs, store, frozenset())
    assert table.per_class["metal"]["a2"] is None
    assert table.average["a2"] is None
