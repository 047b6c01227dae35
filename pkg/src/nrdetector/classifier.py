"""Six-layer perceptron segment classifier trained with the PU criterion.

Layer widths are ``d -> 256 -> 256 -> 128 -> 128 -> T -> 1`` by default.
Rectifiers sit between all layers; the rectified width-``T`` output is the
point-score vector ``h`` and the logistic of the last layer is the segment
score ``f``.
"""

from dataclasses import dataclass, field, replace
from typing import List

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_embeddings, check_random_state
from .checkpoint import load_checkpoint, save_checkpoint
from .criterion import (
    BatchOutputs,
    CriterionConfig,
    bce_grad,
    bce_loss,
    pu_grad,
    pu_loss,
    sep_loss,
    smooth_loss,
    tc_grad,
)
from .encoder import sigmoid
from .exceptions import Divergence, ShapeMismatch
from .optim import Adam

DEFAULT_HIDDEN = (256, 256, 128, 128)


@dataclass
class ClassifierParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        for W, b in zip(self.weights, self.biases):
            if W.shape[1] != b.shape[0]:
                raise ShapeMismatch("weight and bias widths differ")
        for W0, W1 in zip(self.weights, self.weights[1:]):
            if W0.shape[1] != W1.shape[0]:
                raise ShapeMismatch("consecutive layer widths differ")
        if self.weights[-1].shape[1] != 1:
            raise ShapeMismatch("last layer must have width 1")

    @property
    def d(self):
        return self.weights[0].shape[0]

    @property
    def T(self):
        return self.weights[-1].shape[0]

    def arrays(self):
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self):
        return ClassifierParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def save(self, path):
        arrays = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"layer{i}.weight"] = W
            arrays[f"layer{i}.bias"] = b
        save_checkpoint(path, "classifier", arrays, {"n_layers": len(self.weights)})

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path, "classifier")
        n = meta["n_layers"]
        return cls(
            [arrays[f"layer{i}.weight"] for i in range(n)],
            [arrays[f"layer{i}.bias"] for i in range(n)],
        )


def init_classifier(d, T, seed=0, hidden=DEFAULT_HIDDEN):
    """Fan-in scaled uniform weights, zero biases."""
    rng = check_random_state(seed)
    widths = [d, *hidden, T, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths, widths[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ClassifierParams(weights, biases)


def forward(params, X, return_cache=False):
    """Point scores ``h`` (n, T) and segment scores ``f`` (n,) for embeddings ``X``."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.d:
        raise ShapeMismatch(f"embedding width {X.shape[1]} != classifier input {params.d}")
    cache = [X]
    a = X
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ W + b
        a = np.maximum(z, 0.0)
        cache.append(z)
    h = a
    f = sigmoid(h @ params.weights[-1][:, 0] + params.biases[-1][0])
    cache.append(f)
    if single:
        h, f = h[0], f[0]
    if return_cache:
        return h, f, cache
    return h, f


def backward(params, cache, grad_f, grad_h):
    """Chain rule from output gradients to every weight and bias.

    ``grad_f`` (n,) and ``grad_h`` (n, T) are derivatives of the loss with
    respect to the segment and point scores. Returns gradients aligned with
    :meth:`ClassifierParams.arrays`.
    """
    X, zs, f = cache[0], cache[1:-1], cache[-1]
    n_hidden = len(zs)
    acts = [X] + [np.maximum(z, 0.0) for z in zs]
    d_weights = [None] * (n_hidden + 1)
    d_biases = [None] * (n_hidden + 1)

    dz = (np.asarray(grad_f) * f * (1.0 - f))[:, None]
    d_weights[-1] = acts[-1].T @ dz
    d_biases[-1] = dz.sum(axis=0)
    da = dz @ params.weights[-1].T + grad_h
    for i in range(n_hidden - 1, -1, -1):
        dz = da * (zs[i] > 0)
        d_weights[i] = acts[i].T @ dz
        d_biases[i] = dz.sum(axis=0)
        if i:
            da = dz @ params.weights[i].T
    return [g for pair in zip(d_weights, d_biases) for g in pair]


def loss_and_grad(params, X, labeled, criterion, objective="pu", tc=True):
    """Batch objective and parameter gradients.

    Parameters
    ----------
    X : ndarray (n, d)
    labeled : bool ndarray (n,)
        True for labeled positives, False for (refined) unlabeled rows.
    criterion : CriterionConfig
    objective : {"pu", "bce"}
        ``"bce"`` replaces the PU loss by binary cross-entropy with
        unlabeled rows as negatives.
    tc : bool
        Include the time-constraint term.

    Returns
    -------
    parts : dict of loss components (``total`` included)
    grads : list of arrays aligned with ``params.arrays()``
    """
    labeled = np.asarray(labeled, dtype=bool)
    h, f, cache = forward(params, X, return_cache=True)
    f_L, f_U = f[labeled], f[~labeled]
    cfg = criterion if tc else replace(criterion, lam=0.0)
    batch = BatchOutputs(f_L, f_U, h)
    t_L, t_U, g_h = tc_grad(batch, cfg)
    parts = {"smooth": smooth_loss(h), "sep": sep_loss(f_U, f_L)}
    tc_value = cfg.lam * (cfg.lam1 * parts["smooth"] + cfg.lam2 * parts["sep"])
    grad_f = np.empty_like(f)
    grad_f[labeled], grad_f[~labeled] = t_L, t_U
    if objective == "pu":
        parts["pu"] = pu_loss(f_L, f_U, cfg.pi_p)
        p_L, p_U = pu_grad(f_L, f_U, cfg.pi_p)
        grad_f[labeled] += p_L
        grad_f[~labeled] += p_U
    elif objective == "bce":
        y = labeled.astype(np.float64)
        parts["bce"] = bce_loss(f, y)
        grad_f += bce_grad(f, y)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    parts["total"] = parts[objective] + tc_value
    return parts, backward(params, cache, grad_f, g_h)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    criterion: CriterionConfig = field(default_factory=CriterionConfig)
    threshold: float = 0.5
    objective: str = "pu"
    tc: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


def stratified_batches(labeled_idx, unlabeled_idx, batch_size, rng):
    """Split rows into batches that each hold >= 1 labeled and >= 1 unlabeled row.

    The number of batches is ``ceil(n / batch_size)``; a side with fewer
    members than batches is topped up by sampling with replacement.
    """
    labeled_idx = rng.permutation(labeled_idx)
    unlabeled_idx = rng.permutation(unlabeled_idx)
    n = labeled_idx.size + unlabeled_idx.size
    n_batches = max(1, -(-n // batch_size))
    batches = []
    for part_L, part_U in zip(np.array_split(labeled_idx, n_batches), np.array_split(unlabeled_idx, n_batches)):
        if part_L.size == 0:
            part_L = rng.choice(labeled_idx, size=1)
        if part_U.size == 0:
            part_U = rng.choice(unlabeled_idx, size=1)
        batches.append(np.concatenate([part_L, part_U]))
    return batches


def train(params, X, labeled, cfg):
    """Train on embeddings ``X`` where ``labeled`` marks labeled positives.

    Rows not marked labeled are the refined unlabeled set; callers must
    leave excluded segments out of ``X`` entirely. Returns
    ``(trained_params, history)`` where ``history`` holds one dict of mean
    loss components per epoch.
    """
    X = check_embeddings(X, params.d)
    labeled = np.asarray(labeled, dtype=bool)
    L_idx, U_idx = np.flatnonzero(labeled), np.flatnonzero(~labeled)
    if L_idx.size == 0:
        raise ValueError("training needs at least one labeled positive")
    if U_idx.size == 0:
        raise ValueError("training needs a non-empty unlabeled set")
    params = params.copy()
    history = []
    if cfg.epochs == 0:
        return params, history
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(params.arrays(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    for epoch in range(cfg.epochs):
        sums = {}
        batches = stratified_batches(L_idx, U_idx, cfg.batch_size, rng)
        for b in batches:
            parts, grads = loss_and_grad(params, X[b], labeled[b], cfg.criterion, cfg.objective, cfg.tc)
            if not np.isfinite(parts["total"]):
                raise Divergence(f"non-finite loss in epoch {epoch}", history)
            opt.step(grads)
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v
        history.append({k: v / len(batches) for k, v in sums.items()})
    return params, history


def predict_segments(params, X, threshold=0.5):
    """Segment scores and labels; a segment is positive iff ``f > threshold``."""
    _, f = forward(params, np.atleast_2d(X))
    return f, (f > threshold).astype(np.int64)


class PUSegmentClassifier(ClassifierMixin, BaseEstimator):
    """Segment classifier trained from labeled positives and unlabeled rows.

    ``fit(X, y)`` takes segment embeddings and ``y = 1`` for labeled
    positives, ``0`` for unlabeled segments. The classifier exposes segment
    scores through :meth:`predict_proba` and point scores through
    :meth:`point_scores`.

    Parameters
    ----------
    T : int, default=100
        Segment length, i.e. the width of the point-score layer.
    hidden : tuple of int, default=(256, 256, 128, 128)
    pi_p, lam, lam1, lam2 : criterion weights
    objective : {"pu", "bce"}, default="pu"
    tc : bool, default=True
    learning_rate, batch_size, epochs, threshold, seed
    """

    def __init__(self, T=100, hidden=DEFAULT_HIDDEN, pi_p=0.25, lam=1.0, lam1=8e-5,
                 lam2=8e-5, objective="pu", tc=True, learning_rate=1e-4,
                 batch_size=32, epochs=100, threshold=0.5, seed=0):
        self.T = T
        self.hidden = hidden
        self.pi_p = pi_p
        self.lam = lam
        self.lam1 = lam1
        self.lam2 = lam2
        self.objective = objective
        self.tc = tc
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.threshold = threshold
        self.seed = seed

    def _config(self):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            criterion=CriterionConfig(self.pi_p, self.lam, self.lam1, self.lam2),
            threshold=self.threshold,
            objective=self.objective,
            tc=self.tc,
        )

    def fit(self, X, y):
        X = check_embeddings(X)
        y = np.asarray(y)
        self.classes_ = np.array([0, 1])
        params = init_classifier(X.shape[1], self.T, self.seed, tuple(self.hidden))
        self.params_, self.history_ = train(params, X, y == 1, self._config())
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return forward(self.params_, check_embeddings(X, self.params_.d))[1]

    def predict_proba(self, X):
        f = self.decision_function(X)
        return np.column_stack([1 - f, f])

    def predict(self, X):
        return (self.decision_function(X) > self.threshold).astype(np.int64)

    def point_scores(self, X):
        check_is_fitted(self, "params_")
        return forward(self.params_, check_embeddings(X, self.params_.d))[0]
