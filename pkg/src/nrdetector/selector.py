"""Confidence-based sample selection over a segment similarity graph.

The selector removes likely positives from the unlabeled pool before
training. It works in four steps:

1. a symmetric cosine KNN graph over segment embeddings,
2. Katz similarities on that graph,
3. confidence extraction: repeatedly move the unlabeled segments most
   similar to the labeled positives into an excluded set, then keep the
   least similar remaining segments as reliable negatives,
4. label propagation from positives (and reliable negatives) to collect
   further likely negatives.

All rankings break ties by ascending segment index.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from ._validation import as_index_array, check_embeddings, round_half_up
from .exceptions import SpectralRadiusViolation


class DegenerateEmbeddingWarning(UserWarning):
    pass


class InsufficientUnlabeledWarning(UserWarning):
    pass


@dataclass
class SimilarityGraph:
    knn_weights: sp.csr_matrix
    k: int
    katz: np.ndarray = None
    beta: float = None
    l_max: int = None

    @property
    def n(self):
        return self.knn_weights.shape[0]


def cosine_similarity_matrix(X):
    """Pairwise cosine similarity; rows with zero norm get similarity 0."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = X / safe[:, None]
    U[norms == 0] = 0.0
    return U @ U.T


def _top_k_by_row(S, k):
    """Indices of the ``k`` largest entries of each row, ties by lower index.

    ``S`` must already have its diagonal masked to ``-inf``.
    """
    n = S.shape[0]
    # stable sort of -S keeps index order within equal values
    order = np.argsort(-S, axis=1, kind="stable")
    return order[:, :k] if k < n else order


def build_knn_graph(embeddings, k=5):
    """Symmetric KNN graph with weights ``max(cos, 0)``.

    Each node is linked to its ``k`` most cosine-similar other nodes; the
    union of both directions is kept with the larger weight. Zero-weight
    edges stay in the structure (stored explicitly).
    """
    X = check_embeddings(embeddings)
    n = X.shape[0]
    if n < k + 1:
        raise ValueError(f"need at least k+1={k + 1} embeddings, got {n}")
    if (np.linalg.norm(X, axis=1) == 0).any():
        warnings.warn("zero embedding vector; its edges get weight 0", DegenerateEmbeddingWarning)
    S = cosine_similarity_matrix(X)
    np.fill_diagonal(S, -np.inf)
    nbrs = _top_k_by_row(S, k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    vals = np.clip(S[rows, cols], 0.0, 1.0)
    # symmetrize by union with max weight
    W = np.full((n, n), -1.0)
    W[rows, cols] = vals
    W = np.maximum(W, W.T)
    r, c = np.nonzero(W >= 0)
    A = sp.csr_matrix((W[r, c], (r, c)), shape=(n, n))
    return SimilarityGraph(knn_weights=A, k=k)


def spectral_radius(A):
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    return float(np.max(np.abs(np.linalg.eigvalsh(A))))


def katz_similarity(graph, beta=0.05, l_max=4, closed_form=False):
    """Katz index over the weighted adjacency ``A`` of ``graph``.

    Truncated mode returns ``sum_{l=1..l_max} beta**l A**l``. With
    ``closed_form`` the exact series ``inv(I - beta A) - I`` is returned,
    which requires ``beta * rho(A) < 1``. The result is also stored on the
    graph.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    A = graph.knn_weights.toarray() if sp.issparse(graph.knn_weights) else np.asarray(graph.knn_weights)
    n = A.shape[0]
    if closed_form:
        rho = spectral_radius(A)
        if beta * rho >= 1:
            raise SpectralRadiusViolation(f"beta * rho(A) = {beta * rho:.4g} >= 1")
        K = np.linalg.inv(np.eye(n) - beta * A) - np.eye(n)
        K = np.maximum(K, 0.0)  # clear round-off below zero
    else:
        K = np.zeros((n, n))
        term = np.eye(n)
        for _ in range(l_max):
            term = beta * (term @ A)
            K += term
    graph.katz, graph.beta, graph.l_max = K, beta, (None if closed_form else l_max)
    return K


def _rank(scores, idx, descending):
    """Order ``idx`` by ``scores`` with ties broken by ascending index."""
    idx = np.asarray(idx)
    keys = -scores if descending else scores
    # lexsort uses the last key as primary
    return idx[np.lexsort((idx, keys))]


def confidence_extract(katz, labeled_idx, unlabeled_idx, m=4, lambda0=0.32):
    """Reliable negatives and excluded segments from Katz similarities.

    For ``m`` rounds the unlabeled segments are scored by their mean Katz
    similarity to the labeled positives and the top
    ``round(lambda0 / m * N_P)`` (at least 1) move to the excluded set.
    The remaining unlabeled segments are then rescored against positives
    plus excluded segments, and the ``N_P + |excluded|`` lowest scorers are
    the reliable negatives.

    Returns
    -------
    reliable_negatives, excluded : sorted int arrays
    """
    katz = np.asarray(katz)
    positives = np.asarray(labeled_idx, dtype=np.int64)
    remaining = np.asarray(unlabeled_idx, dtype=np.int64)
    n_p = positives.size
    if m < 1:
        raise ValueError("m must be >= 1")
    if n_p == 0:
        raise ValueError("confidence extraction needs at least one labeled positive")
    per_round = max(1, round_half_up(lambda0 / m * n_p))
    excluded = []
    for _ in range(m):
        if remaining.size == 0:
            break
        scores = katz[np.ix_(remaining, positives)].mean(axis=1)
        top = _rank(scores, remaining, descending=True)[:per_round]
        excluded.extend(top.tolist())
        remaining = np.setdiff1d(remaining, top)
    reference = np.concatenate([positives, np.asarray(excluded, dtype=np.int64)])
    n_rn = n_p + len(excluded)
    if remaining.size < n_rn:
        warnings.warn(
            f"only {remaining.size} unlabeled segments remain, {n_rn} reliable negatives requested",
            InsufficientUnlabeledWarning,
        )
    if remaining.size:
        scores = katz[np.ix_(remaining, reference)].mean(axis=1)
        rn = _rank(scores, remaining, descending=False)[:n_rn]
    else:
        rn = remaining
    return np.sort(rn), np.sort(np.asarray(excluded, dtype=np.int64))


@dataclass
class PropagatedLabels:
    """Propagated class mass; column 0 is negative, column 1 positive."""

    F: np.ndarray
    iterations: int
    residual: float


def propagate_labels(graph, positives, reliable_negatives=(), max_iter=10_000, tol=1e-7,
                     clamp_negatives=True, initial=None):
    """Iterate ``F <- D^-1 W F`` with labeled positives clamped to [0, 1].

    Positives start at [0, 1], reliable negatives at [1, 0] and everything
    else at [0, 0] (``initial`` overrides the start matrix). Rows of
    zero-degree nodes are left unchanged. With ``clamp_negatives`` the
    reliable-negative rows are also reset every sweep. Iteration stops once
    the max-abs change of a sweep drops below ``tol``.
    """
    W = graph.knn_weights if sp.issparse(graph.knn_weights) else sp.csr_matrix(graph.knn_weights)
    n = W.shape[0]
    pos = np.asarray(list(positives), dtype=np.int64)
    neg = np.asarray(list(reliable_negatives), dtype=np.int64)
    if np.intersect1d(pos, neg).size:
        raise ValueError("positives and reliable negatives overlap")
    if initial is None:
        F = np.zeros((n, 2))
        F[neg] = (1.0, 0.0)
    else:
        F = np.array(initial, dtype=np.float64)
    F[pos] = (0.0, 1.0)
    clamped = pos
    clamped_values = np.tile([0.0, 1.0], (pos.size, 1))
    if clamp_negatives and neg.size:
        F[neg] = (1.0, 0.0)
        clamped = np.concatenate([pos, neg])
        clamped_values = np.vstack([clamped_values, np.tile([1.0, 0.0], (neg.size, 1))])

    degree = np.asarray(W.sum(axis=1)).ravel()
    active = degree > 0
    inv = np.zeros(n)
    inv[active] = 1.0 / degree[active]
    P = sp.diags(inv) @ W

    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        new = P @ F
        new[~active] = F[~active]
        new[clamped] = clamped_values
        residual = float(np.max(np.abs(new - F))) if n else 0.0
        F = new
        if residual < tol:
            break
    return PropagatedLabels(F=F, iterations=it, residual=residual)


@dataclass
class SelectionResult:
    reliable_negatives: np.ndarray
    propagated_negatives: np.ndarray
    excluded: np.ndarray
    labeled: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def refined_unlabeled(self):
        return np.union1d(self.reliable_negatives, self.propagated_negatives)

    def to_dict(self):
        return {
            "labeled": self.labeled.tolist(),
            "reliable_negatives": self.reliable_negatives.tolist(),
            "propagated_negatives": self.propagated_negatives.tolist(),
            "excluded": self.excluded.tolist(),
            "refined_unlabeled": self.refined_unlabeled.tolist(),
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(
            reliable_negatives=as_index_array(data["reliable_negatives"]),
            propagated_negatives=as_index_array(data["propagated_negatives"]),
            excluded=as_index_array(data["excluded"]),
            labeled=as_index_array(data.get("labeled", [])),
        )


def assemble_refined(propagated, reliable_negatives, excluded, unlabeled_idx, margin=0.0):
    """Collect propagated negatives and build the refined unlabeled set.

    A candidate (unlabeled, not a reliable negative, not excluded) joins the
    propagated negatives when its negative mass exceeds its positive mass
    by at least ``margin``. Rows that are tied or carry no mass never join.
    """
    F = propagated.F
    candidates = np.setdiff1d(
        np.asarray(unlabeled_idx, dtype=np.int64),
        np.union1d(reliable_negatives, excluded),
    )
    neg, pos = F[candidates, 0], F[candidates, 1]
    keep = (neg - pos >= margin) & (neg > pos) & (neg + pos > 0)
    return SelectionResult(
        reliable_negatives=np.sort(np.asarray(reliable_negatives, dtype=np.int64)),
        propagated_negatives=candidates[keep],
        excluded=np.sort(np.asarray(excluded, dtype=np.int64)),
    )


class SampleSelector(BaseEstimator):
    """Refine the unlabeled pool of a PU segment set.

    Parameters
    ----------
    k : int, default=5
        Neighbours per node in the KNN graph.
    beta : float, default=0.05
        Katz attenuation.
    l_max : int, default=4
        Katz truncation depth.
    m : int, default=4
        Extraction rounds.
    lambda0 : float, default=0.32
        Fraction of ``N_P`` excluded over all rounds.
    margin : float, default=0.0
    extraction, propagation : bool, default=True
        Switch either step off for ablations. With both off every unlabeled
        segment is kept. Without extraction, propagation starts from every
        unlabeled segment at [1, 0], unclamped, and runs
        ``propagation_only_sweeps`` sweeps.
    clamp_negatives : bool, default=True
        Reset reliable-negative rows every propagation sweep.
    max_iter, tol : propagation stopping rule
    propagation_only_sweeps : int, default=10

    Attributes
    ----------
    graph_ : SimilarityGraph
    propagated_ : PropagatedLabels or None
    selection_ : SelectionResult
    """

    def __init__(self, k=5, beta=0.05, l_max=4, m=4, lambda0=0.32, margin=0.0,
                 extraction=True, propagation=True, clamp_negatives=True,
                 max_iter=10_000, tol=1e-7, propagation_only_sweeps=10):
        self.k = k
        self.beta = beta
        self.l_max = l_max
        self.m = m
        self.lambda0 = lambda0
        self.margin = margin
        self.extraction = extraction
        self.propagation = propagation
        self.clamp_negatives = clamp_negatives
        self.max_iter = max_iter
        self.tol = tol
        self.propagation_only_sweeps = propagation_only_sweeps

    def fit(self, X, y):
        """``X``: segment embeddings (n, d); ``y``: 1 for labeled positives, else 0."""
        X = check_embeddings(X)
        y = np.asarray(y)
        labeled = np.flatnonzero(y == 1)
        unlabeled = np.flatnonzero(y != 1)
        empty = np.zeros(0, dtype=np.int64)
        self.propagated_ = None
        if not (self.extraction or self.propagation):
            self.selection_ = SelectionResult(unlabeled, empty, empty, labeled)
            return self

        self.graph_ = build_knn_graph(X, k=min(self.k, len(X) - 1))
        if self.extraction:
            katz = katz_similarity(self.graph_, self.beta, self.l_max)
            rn, out = confidence_extract(katz, labeled, unlabeled, self.m, self.lambda0)
        else:
            rn, out = empty, empty

        if not self.propagation:
            result = SelectionResult(rn, empty, out)
        elif self.extraction:
            prop = propagate_labels(self.graph_, labeled, rn, self.max_iter, self.tol,
                                    clamp_negatives=self.clamp_negatives)
            self.propagated_ = prop
            result = assemble_refined(prop, rn, out, unlabeled, self.margin)
        else:
            start = np.zeros((len(X), 2))
            start[unlabeled] = (1.0, 0.0)
            prop = propagate_labels(self.graph_, labeled, (), self.propagation_only_sweeps, 0.0,
                                    initial=start)
            self.propagated_ = prop
            result = assemble_refined(prop, empty, empty, unlabeled, self.margin)
        result.labeled = labeled
        self.selection_ = result
        return self

    def training_mask(self, n=None):
        """Boolean mask of segments used for training (positives + refined unlabeled)."""
        sel = self.selection_
        if n is None:
            n = int(max(np.concatenate([sel.labeled, sel.refined_unlabeled, sel.excluded, [-1]])) + 1)
        mask = np.zeros(n, dtype=bool)
        mask[sel.labeled] = True
        mask[sel.refined_unlabeled] = True
        return mask
