"""Point-level detection inside predicted-positive segments.

Points of every predicted-positive segment are ranked by score, the top
``k`` fraction is taken as pseudo anomalies, and a consensus estimator
fitted on nearest-neighbour label agreement turns the pseudo labels into an
estimate of the clean anomaly rate ``p_hat``. The top ``round(p_hat * M)``
ranked points are the final detections; every point of a predicted-normal
segment is normal.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import round_half_up
from .exceptions import InvalidK


class DegenerateFeaturesWarning(UserWarning):
    pass


@dataclass
class RankedPoints:
    segment: np.ndarray
    offset: np.ndarray
    score: np.ndarray
    source: str = "classifier"

    def __len__(self):
        return self.score.size


def rank_points(positive_segments, scores, source="classifier"):
    """Sort all points of ``positive_segments`` by score, highest first.

    ``scores`` is an (n_segments, L) array of point scores. Ties keep the
    (segment index, offset) order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    segs = np.sort(np.asarray(positive_segments, dtype=np.int64))
    L = scores.shape[1]
    seg = np.repeat(segs, L)
    off = np.tile(np.arange(L), segs.size)
    flat = scores[segs].ravel()
    order = np.argsort(-flat, kind="stable")
    return RankedPoints(seg[order], off[order], flat[order], source)


def pseudo_labels(ranked, k):
    """Label the top ``round(k * M)`` ranked points 1 and the rest 0."""
    if not 0 < k < 1:
        raise InvalidK(f"k must lie in (0, 1), got {k}")
    M = len(ranked)
    out = np.zeros(M, dtype=np.int64)
    out[: round_half_up(k * M)] = 1
    return out


@dataclass
class RateEstimate:
    p_hat: float
    e0_hat: float
    e1_hat: float
    residual: float


def nearest_neighbors(features, n_neighbors=2, chunk=2048):
    """Indices of the ``n_neighbors`` most cosine-similar other rows.

    Ties go to the lower row index. Computed in row chunks so memory stays
    at ``chunk * n`` floats.
    """
    X = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    U = X / np.where(norms > 0, norms, 1.0)[:, None]
    n = X.shape[0]
    out = np.empty((n, n_neighbors), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        S = U[start:stop] @ U.T
        S[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        # candidates: anything at least as similar as the k-th best
        part = np.argpartition(-S, n_neighbors - 1, axis=1)[:, :n_neighbors]
        kth = np.take_along_axis(S, part, axis=1).min(axis=1)
        for r in range(stop - start):
            cand = np.flatnonzero(S[r] >= kth[r])
            best = cand[np.lexsort((cand, -S[r, cand]))][:n_neighbors]
            out[start + r] = best
    return out


def consensus_counts(labels, neighbors):
    """First-, second- and third-order label agreement frequencies.

    Every point forms a neighbourhood with its nearest neighbours, and the
    frequencies are averaged over all ordered pairs and triples of distinct
    members inside each neighbourhood. Returns ``(c1, c2, c3)`` with shapes
    (2,), (2, 2) and (2, 2, 2); e.g. ``c2[1, 0]`` is the frequency of a
    (positive, negative) ordered pair.
    """
    y = np.asarray(labels, dtype=np.int64)
    G = np.column_stack([y, y[neighbors]])
    m = G.shape[1]
    if m < 3:
        raise ValueError("need at least 2 neighbours per point")
    ones = G.sum(axis=1).astype(np.float64)
    zeros = m - ones
    c1 = np.array([zeros.mean(), ones.mean()]) / m
    c2 = np.empty((2, 2))
    c3 = np.empty((2, 2, 2))
    count = (zeros, ones)
    for j in (0, 1):
        for k in (0, 1):
            ck = count[k] - (j == k)
            c2[j, k] = np.mean(count[j] * ck) / (m * (m - 1))
            for l in (0, 1):
                cl = count[l] - (l == j) - (l == k)
                c3[j, k, l] = np.mean(count[j] * ck * cl) / (m * (m - 1) * (m - 2))
    return c1, c2, c3


P_GRID = np.round(np.arange(1, 100) * 0.01, 2)
E_GRID = np.round(np.arange(0, 50) * 0.01, 2)


def fit_consensus(c1, c2, c3, p_grid=P_GRID, e_grid=E_GRID):
    """Grid search for the clean prior and flip rates matching the counts.

    The model assumes a point and its nearest neighbours share one
    clean label and flip independently with ``T = [[1-e0, e0], [e1, 1-e1]]``.
    Returns ``(p, e0, e1, residual)`` minimizing the summed squared error
    of all 14 frequencies; the first grid point wins ties.
    """
    p1 = p_grid[:, None, None]
    e0 = e_grid[None, :, None]
    e1 = e_grid[None, None, :]
    p0 = 1.0 - p1
    # T[i][j] = P(noisy j | clean i)
    T = ((1.0 - e0, e0), (e1, 1.0 - e1))
    prior = (p0, p1)
    res = 0.0
    for j in (0, 1):
        m1 = sum(prior[i] * T[i][j] for i in (0, 1))
        res = res + (m1 - c1[j]) ** 2
        for k in (0, 1):
            m2 = sum(prior[i] * T[i][j] * T[i][k] for i in (0, 1))
            res = res + (m2 - c2[j, k]) ** 2
            for l in (0, 1):
                m3 = sum(prior[i] * T[i][j] * T[i][k] * T[i][l] for i in (0, 1))
                res = res + (m3 - c3[j, k, l]) ** 2
    res = np.broadcast_to(res, (p_grid.size, e_grid.size, e_grid.size))
    a, b, c = np.unravel_index(np.argmin(res), res.shape)
    return float(p_grid[a]), float(e_grid[b]), float(e_grid[c]), float(res[a, b, c])


def estimate_clean_rate(features, labels, n_neighbors=16):
    """Estimate the clean positive rate behind noisy point labels.

    Parameters
    ----------
    features : ndarray (M, d)
        One representation per point.
    labels : ndarray (M,)
        Noisy (pseudo) 0/1 labels.
    n_neighbors : int, default=16
        Cosine nearest neighbours per point assumed to share its clean
        label. Two is the minimum; more neighbours lower the variance of
        the agreement frequencies.

    Returns
    -------
    RateEstimate
        When all features coincide the neighbour statistics carry no
        information; the empirical label rate is returned with a warning.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] < 3:
        raise ValueError("rate estimation needs at least 3 points")
    if X.shape[0] != y.size:
        raise ValueError("features and labels differ in length")
    if not np.isfinite(X).all():
        raise ValueError("features contain non-finite values")
    if np.ptp(X, axis=0).max() == 0 or not np.linalg.norm(X, axis=1).any():
        warnings.warn("all features identical; using the empirical label rate", DegenerateFeaturesWarning)
        return RateEstimate(float(y.mean()), 0.0, 0.0, float("nan"))
    nbrs = nearest_neighbors(X, min(n_neighbors, X.shape[0] - 1))
    c1, c2, c3 = consensus_counts(y, nbrs)
    p, e0, e1, res = fit_consensus(c1, c2, c3)
    return RateEstimate(p, e0, e1, res)


def threshold_points(ranked, p_hat, n_segments, L):
    """Final point labels (n_segments, L): top ``round(p_hat * M)`` ranked points are 1."""
    if not 0 <= p_hat <= 1:
        raise ValueError("p_hat must lie in [0, 1]")
    out = np.zeros((n_segments, L), dtype=np.int64)
    n_pos = round_half_up(p_hat * len(ranked))
    out[ranked.segment[:n_pos], ranked.offset[:n_pos]] = 1
    return out


class PointDetector(BaseEstimator):
    """Turn segment predictions and point scores into point labels.

    Parameters
    ----------
    k : float, default=0.5
        Pseudo-label rate among ranked points.
    use_rate_estimator : bool, default=True
        If False the final rate is ``k`` itself.
    n_neighbors : int, default=16
        Neighbourhood size of the rate estimator.
    max_points : int or None, default=20000
        Rate estimation uses an evenly spaced subsample of the ranked points
        when there are more than this many.

    Attributes
    ----------
    ranked_ : RankedPoints
    rate_ : RateEstimate or None
    p_hat_ : float
    """

    def __init__(self, k=0.5, use_rate_estimator=True, n_neighbors=16, max_points=20_000):
        self.k = k
        self.use_rate_estimator = use_rate_estimator
        self.n_neighbors = n_neighbors
        self.max_points = max_points

    def fit_predict(self, point_scores, segment_labels, features=None, source="classifier"):
        """Point labels of shape (n_segments, L).

        ``features`` (n_segments, L, d) feed the rate estimator and are
        required when ``use_rate_estimator`` is set.
        """
        point_scores = np.asarray(point_scores, dtype=np.float64)
        n, L = point_scores.shape
        positive = np.flatnonzero(np.asarray(segment_labels) == 1)
        self.ranked_ = rank_points(positive, point_scores, source)
        self.rate_ = None
        M = len(self.ranked_)
        if M == 0:
            self.p_hat_ = 0.0
            return np.zeros((n, L), dtype=np.int64)
        pseudo = pseudo_labels(self.ranked_, self.k)
        if self.use_rate_estimator and M >= 3:
            feats = np.asarray(features)[self.ranked_.segment, self.ranked_.offset]
            keep = np.arange(M)
            if self.max_points and M > self.max_points:
                keep = np.linspace(0, M - 1, self.max_points).round().astype(np.int64)
            self.rate_ = estimate_clean_rate(feats[keep], pseudo[keep], self.n_neighbors)
            self.p_hat_ = self.rate_.p_hat
        else:
            self.p_hat_ = float(self.k)
        return threshold_points(self.ranked_, self.p_hat_, n, L)
