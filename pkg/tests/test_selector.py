import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from nrdetector.exceptions import SpectralRadiusViolation
from nrdetector.selector import (
    DegenerateEmbeddingWarning,
    InsufficientUnlabeledWarning,
    SampleSelector,
    SelectionResult,
    SimilarityGraph,
    assemble_refined,
    build_knn_graph,
    confidence_extract,
    katz_similarity,
    propagate_labels,
)


def _graph(A):
    return SimilarityGraph(sp.csr_matrix(np.asarray(A, dtype=float)), k=1)


def test_knn_graph_symmetric_nonnegative(rng):
    X = rng.normal(size=(30, 5))
    g = build_knn_graph(X, k=4)
    W = g.knn_weights.toarray()
    assert np.allclose(W, W.T)
    assert (W >= 0).all() and np.all(np.diag(W) == 0)
    # every node keeps at least its own k links (zero weights stay stored)
    assert (np.diff(g.knn_weights.indptr) >= 4).all()


def test_knn_graph_hand_case():
    X = np.array([[1.0, 0.0], [1.0, 0.1], [0.0, 1.0], [-1.0, 0.0]])
    W = build_knn_graph(X, k=1).knn_weights.toarray()
    assert W[0, 1] > 0.99 and W[1, 0] == W[0, 1]
    # node 3 has cosine 0 with node 2 and negative with 0/1; edge kept with weight 0
    assert W[3].max() == 0


def test_knn_graph_zero_vector_warns():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.warns(DegenerateEmbeddingWarning):
        build_knn_graph(X, k=1)


def test_katz_two_node_hand_case():
    g = _graph([[0, 1], [1, 0]])
    K = katz_similarity(g, beta=0.5, closed_form=True)
    assert np.allclose(K, [[1 / 3, 2 / 3], [2 / 3, 1 / 3]])
    T = katz_similarity(g, beta=0.5, l_max=2)
    assert np.allclose(T, [[0.25, 0.5], [0.5, 0.25]])


def test_katz_closed_form_needs_small_beta():
    g = _graph([[0, 1], [1, 0]])
    with pytest.raises(SpectralRadiusViolation):
        katz_similarity(g, beta=1.0, closed_form=True)


def test_extract_hand_case():
    # positives {0}; unlabeled 1..5 ordered by decreasing similarity to node 0
    n = 6
    K = np.zeros((n, n))
    K[1:, 0] = K[0, 1:] = [0.9, 0.7, 0.5, 0.3, 0.1]
    rn, out = confidence_extract(K, [0], [1, 2, 3, 4, 5], m=2, lambda0=1.0)
    assert out.tolist() == [1, 2]
    # reference = {0, 1, 2}; three least similar remaining are 3, 4, 5
    assert rn.tolist() == [3, 4, 5]


def test_extract_ties_go_to_lower_index():
    K = np.zeros((5, 5))
    rn, out = confidence_extract(K, [0], [1, 2, 3, 4], m=1, lambda0=1.0)
    assert out.tolist() == [1]
    assert rn.tolist() == [2, 3]


def test_extract_warns_when_pool_too_small():
    K = np.zeros((4, 4))
    with pytest.warns(InsufficientUnlabeledWarning):
        confidence_extract(K, [0, 1], [2, 3], m=1, lambda0=0.5)


def test_propagation_two_node_hand_case():
    g = _graph([[0, 1], [1, 0]])
    prop = propagate_labels(g, positives=[0])
    assert np.allclose(prop.F, [[0, 1], [0, 1]])


def test_propagation_isolated_node_unchanged():
    g = _graph([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    prop = propagate_labels(g, positives=[0], reliable_negatives=[2])
    assert np.allclose(prop.F[2], [1, 0])


def test_propagation_chain_between_classes():
    # 0 (pos) - 1 - 2 - 3 (neg): interior masses interpolate linearly
    A = np.zeros((4, 4))
    for i in range(3):
        A[i, i + 1] = A[i + 1, i] = 1
    F = propagate_labels(_graph(A), [0], [3], tol=1e-12).F
    assert np.allclose(F[1], [1 / 3, 2 / 3], atol=1e-9)
    assert np.allclose(F[2], [2 / 3, 1 / 3], atol=1e-9)


def test_propagation_rejects_overlap():
    with pytest.raises(ValueError):
        propagate_labels(_graph([[0, 1], [1, 0]]), [0], [0])


def test_assemble_margin_and_ties():
    class P:
        F = np.array([[0, 1], [0.6, 0.4], [0.5, 0.5], [0, 0], [0.9, 0.1]])

    res = assemble_refined(P, reliable_negatives=[4], excluded=[], unlabeled_idx=[1, 2, 3, 4])
    assert res.propagated_negatives.tolist() == [1]
    res = assemble_refined(P, [4], [], [1, 2, 3, 4], margin=0.3)
    assert res.propagated_negatives.tolist() == []


def _clusters(rng, n_pos=20, n_neg=80, d=4):
    X = np.vstack([rng.normal(3, 1, size=(n_pos, d)), rng.normal(-3, 1, size=(n_neg, d))])
    truth = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
    y = np.zeros_like(truth)
    y[:8] = 1
    return X, y, truth


def test_selector_partitions_unlabeled(rng):
    X, y, _ = _clusters(rng)
    sel = SampleSelector().fit(X, y).selection_
    U = set(np.flatnonzero(y == 0))
    rn, pn, out = set(sel.reliable_negatives), set(sel.propagated_negatives), set(sel.excluded)
    assert rn | pn | out <= U
    assert not (rn & pn) and not (rn & out) and not (pn & out)
    assert sel.labeled.tolist() == list(range(8))


def test_selector_removes_hidden_positives(rng):
    X, y, truth = _clusters(rng)
    sel = SampleSelector().fit(X, y).selection_
    assert truth[sel.refined_unlabeled].sum() == 0


def test_selector_both_off_keeps_everything(rng):
    X, y, _ = _clusters(rng)
    sel = SampleSelector(extraction=False, propagation=False).fit(X, y).selection_
    assert sel.refined_unlabeled.tolist() == np.flatnonzero(y == 0).tolist()


def test_selector_ablation_modes_run(rng):
    X, y, _ = _clusters(rng)
    a = SampleSelector(propagation=False).fit(X, y).selection_
    assert a.propagated_negatives.size == 0 and a.reliable_negatives.size > 0
    b = SampleSelector(extraction=False).fit(X, y).selection_
    assert b.reliable_negatives.size == 0 and b.excluded.size == 0


def test_training_mask(rng):
    X, y, _ = _clusters(rng)
    s = SampleSelector().fit(X, y)
    mask = s.training_mask(len(X))
    assert mask[:8].all()
    assert mask.sum() == 8 + s.selection_.refined_unlabeled.size


def test_selection_json_roundtrip(tmp_path):
    res = SelectionResult(np.array([3, 4]), np.array([7]), np.array([1]), np.array([0]))
    path = tmp_path / "sel.json"
    res.save(path)
    back = SelectionResult.load(path)
    assert back.to_dict() == res.to_dict()
    assert json.loads(path.read_text())["refined_unlabeled"] == [3, 4, 7]


@given(st.integers(4, 12), st.integers(0, 10_000))
def test_propagated_rows_are_distributions(n, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 3))
    g = build_knn_graph(X, k=2)
    F = propagate_labels(g, [0], [n - 1], max_iter=500).F
    assert (F >= -1e-12).all() and (F.sum(axis=1) <= 1 + 1e-9).all()
