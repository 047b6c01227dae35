"""Temporal embedding with a dilated causal CNN.

Each layer is a causal convolution of kernel width ``K`` and dilation
``2**i``; the output vector ``h_t`` at each time step is the point
representation, the time-average of ``h`` is the segment embedding and
``sigmoid(w @ h_t)`` is the per-point anomaly score.

Forward and backward passes are written out by hand in numpy so the whole
encoder is differentiable without a framework.
"""

import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_random_state, check_segments
from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import Divergence, ShapeMismatch
from .optim import Adam


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ConvLayer:
    """One causal convolution; ``weight`` has shape (K, C_in, C_out).

    Tap ``k`` reads the input at ``t - (K - 1 - k) * dilation``.
    """

    weight: np.ndarray
    bias: np.ndarray
    dilation: int

    @property
    def kernel_width(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[2]


@dataclass
class EncoderParams:
    layers: List[ConvLayer] = field(default_factory=list)
    w: np.ndarray = None

    def __post_init__(self):
        dilations = [layer.dilation for layer in self.layers]
        for a, b in zip(dilations, dilations[1:]):
            if b != 2 * a:
                raise ValueError(f"dilations must double layer to layer, got {dilations}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ShapeMismatch("channel widths of consecutive layers do not match")
        if self.w is not None and self.layers and self.w.shape != (self.layers[-1].out_channels,):
            raise ShapeMismatch(f"anomaly weight has shape {self.w.shape}, expected ({self.d},)")

    @property
    def d(self):
        if self.layers:
            return self.layers[-1].out_channels
        return self.w.shape[0]

    @property
    def input_dim(self):
        return self.layers[0].in_channels if self.layers else self.w.shape[0]

    def arrays(self):
        """Flat list of trainable arrays (layer weights and biases, then ``w``)."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        out.append(self.w)
        return out

    def copy(self):
        return EncoderParams(
            [ConvLayer(l.weight.copy(), l.bias.copy(), l.dilation) for l in self.layers],
            self.w.copy(),
        )

    def save(self, path):
        arrays = {"w": self.w}
        for i, layer in enumerate(self.layers):
            arrays[f"layer{i}.weight"] = layer.weight
            arrays[f"layer{i}.bias"] = layer.bias
        meta = {"dilations": [l.dilation for l in self.layers]}
        save_checkpoint(path, "encoder", arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path, "encoder")
        layers = [
            ConvLayer(arrays[f"layer{i}.weight"], arrays[f"layer{i}.bias"], dil)
            for i, dil in enumerate(meta["dilations"])
        ]
        return cls(layers, arrays["w"])


def init_encoder(input_dim, d=64, n_layers=7, kernel_width=2, seed=0):
    """He-uniform initialization of an ``n_layers`` dilated causal CNN.

    ``n_layers=0`` gives the identity featurizer (``h_t = x_t``, ``d = D``).
    """
    rng = check_random_state(seed)
    layers = []
    c_in = input_dim
    for i in range(n_layers):
        bound = np.sqrt(6.0 / (kernel_width * c_in))
        weight = rng.uniform(-bound, bound, size=(kernel_width, c_in, d))
        layers.append(ConvLayer(weight, np.zeros(d), 2**i))
        c_in = d
    width = d if n_layers else input_dim
    w = rng.uniform(-1, 1, size=width) / np.sqrt(width)
    return EncoderParams(layers, w)


def _shift(x, lag):
    """Delay ``x`` (B, L, C) by ``lag`` steps along time, zero-filling."""
    if lag == 0:
        return x
    out = np.zeros_like(x)
    if lag < x.shape[1]:
        out[:, lag:] = x[:, :-lag]
    return out


def _unshift(g, lag):
    """Adjoint of :func:`_shift`."""
    if lag == 0:
        return g
    out = np.zeros_like(g)
    if lag < g.shape[1]:
        out[:, :-lag] = g[:, lag:]
    return out


def _layer_forward(layer, x):
    K = layer.kernel_width
    taps = [_shift(x, (K - 1 - k) * layer.dilation) for k in range(K)]
    stacked = np.concatenate(taps, axis=-1)
    W = layer.weight.reshape(K * layer.in_channels, layer.out_channels)
    return stacked @ W + layer.bias, stacked


def _check_input(params, x):
    x = check_segments(x)
    if x.shape[2] != params.input_dim:
        raise ShapeMismatch(f"segments have D={x.shape[2]}, encoder expects {params.input_dim}")
    return x


def encode(params, x, return_cache=False):
    """Point representations ``h`` of shape (n, L, d) for segments ``x``.

    ``x`` is (n, L, D) or a single (L, D) segment. Every layer but the last
    is followed by a rectifier.
    """
    x = _check_input(params, x)
    cache = []
    a = x
    n_layers = len(params.layers)
    for i, layer in enumerate(params.layers):
        z, stacked = _layer_forward(layer, a)
        relu = i < n_layers - 1
        cache.append((stacked, z, relu))
        a = np.maximum(z, 0.0) if relu else z
    if return_cache:
        return a, cache
    return a


def encode_backward(params, cache, grad_h):
    """Gradients of a scalar loss w.r.t. every layer weight and bias.

    Returns ``(layer_grads, grad_x)`` where ``layer_grads`` is a list of
    ``(d_weight, d_bias)`` pairs aligned with ``params.layers``.
    """
    grads = [None] * len(params.layers)
    g = grad_h
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        stacked, z, relu = cache[i]
        if relu:
            g = g * (z > 0)
        K, c_in, c_out = layer.weight.shape
        g2 = g.reshape(-1, c_out)
        d_weight = (stacked.reshape(-1, K * c_in).T @ g2).reshape(K, c_in, c_out)
        d_bias = g2.sum(axis=0)
        grads[i] = (d_weight, d_bias)
        g_stacked = g @ layer.weight.reshape(K * c_in, c_out).T
        g_in = np.zeros(g.shape[:2] + (c_in,))
        for k in range(K):
            g_in += _unshift(g_stacked[..., k * c_in : (k + 1) * c_in], (K - 1 - k) * layer.dilation)
        g = g_in
    return grads, g


def gap(h):
    """Global average pooling over the time axis.

    Works on a single (L, d) sequence or a batch (n, L, d).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-2] == 0:
        raise ValueError("cannot pool an empty sequence")
    return h.mean(axis=-2)


def point_scores(params, h):
    """Per-point anomaly scores ``sigmoid(w @ h_t)``."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.w.shape[0]:
        raise ShapeMismatch(f"h has width {h.shape[-1]}, anomaly weight has {params.w.shape[0]}")
    return sigmoid(h @ params.w)


def segment_scores(params, h):
    """Segment score ``sigmoid(w @ GAP(h))``."""
    return sigmoid(gap(h) @ params.w)


def bce_with_logits(s, y, weights=None):
    # log(1 + e^s) - y*s, stable for large |s|
    terms = np.logaddexp(0.0, s) - y * s
    if weights is None:
        return np.mean(terms)
    return np.sum(weights * terms) / len(terms)


def balanced_weights(y):
    """Per-sample weights giving both classes equal total weight.

    Each class then carries half the loss, whatever its size. Returns
    ones when a class is absent.
    """
    y = np.asarray(y, dtype=np.float64)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.ones_like(y)
    return np.where(y == 1, y.size / (2 * n_pos), y.size / (2 * n_neg))


def pretrain_loss_and_grad(params, x, y, weights=None):
    """Segment-level BCE on ``sigmoid(w @ GAP(h))`` and its gradients.

    ``weights`` are optional per-segment loss weights. Returns
    ``(loss, grads)`` with ``grads`` aligned to ``params.arrays()``.
    """
    h, cache = encode(params, x, return_cache=True)
    X = gap(h)
    s = X @ params.w
    y = np.asarray(y, dtype=np.float64)
    w_i = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    loss = bce_with_logits(s, y, w_i)
    ds = w_i * (sigmoid(s) - y) / len(y)
    dw = X.T @ ds
    dX = ds[:, None] * params.w[None, :]
    dh = np.repeat(dX[:, None, :], h.shape[1], axis=1) / h.shape[1]
    layer_grads, _ = encode_backward(params, cache, dh)
    grads = []
    for d_weight, d_bias in layer_grads:
        grads += [d_weight, d_bias]
    grads.append(dw)
    return loss, grads


@dataclass
class PretrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    balanced: bool = True


def pretrain_encoder(params, segments, labels, config=None):
    """Fit the encoder and anomaly weight on noisy segment labels.

    Labeled positives are targets 1 and unlabeled segments targets 0.
    With ``config.balanced`` both targets carry equal total weight; the
    anomaly head has no bias, so unweighted BCE on a small labeled set is
    mostly lowered by pointing ``w`` away from the mean feature.

    Returns ``(trained_params, loss_history)``; the input params are not
    modified. ``epochs=0`` returns an unchanged copy.
    """
    config = config or PretrainConfig()
    x = _check_input(params, segments)
    y = np.asarray(labels, dtype=np.float64)
    weights = balanced_weights(y) if config.balanced else np.ones_like(y)
    params = params.copy()
    history = []
    if config.epochs == 0:
        return params, history
    rng = np.random.default_rng(config.seed)
    opt = Adam(params.arrays(), learning_rate=config.learning_rate)
    n = len(y)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = pretrain_loss_and_grad(params, x[batch], y[batch], weights[batch])
            if not np.isfinite(loss):
                raise Divergence("encoder pretraining loss became non-finite", history)
            opt.step(grads)
            total += loss * len(batch)
        history.append(total / n)
    return params, history


class DilatedCNNEncoder(TransformerMixin, BaseEstimator):
    """Segment encoder with a fit/transform interface.

    Parameters
    ----------
    d : int, default=64
        Width of the point representations.
    n_layers : int, default=7
        Number of dilated causal convolutions (dilations 1, 2, 4, ...).
    kernel_width : int, default=2
    mode : {"dicnn", "random", "identity"}, default="dicnn"
        ``"dicnn"`` pretrains on noisy segment labels, ``"random"`` keeps
        the random initialization of the convolutions and only fits the
        anomaly weight, ``"identity"`` uses the raw point values as ``h``.
    epochs, batch_size, learning_rate : pretraining settings
    balanced : bool, default=True
        Weight both target classes equally during pretraining.
    seed : int

    Attributes
    ----------
    params_ : EncoderParams
    loss_history_ : list of float
    """

    def __init__(self, d=64, n_layers=7, kernel_width=2, mode="dicnn", epochs=10,
                 batch_size=32, learning_rate=1e-3, balanced=True, seed=0):
        self.d = d
        self.n_layers = n_layers
        self.kernel_width = kernel_width
        self.mode = mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.balanced = balanced
        self.seed = seed

    def _init(self, input_dim):
        n_layers = 0 if self.mode == "identity" else self.n_layers
        return init_encoder(input_dim, self.d, n_layers, self.kernel_width, self.seed)

    def fit(self, X, y=None):
        """Pretrain on segments ``X`` (n, L, D) with PU labels ``y``."""
        if self.mode not in ("dicnn", "random", "identity"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")
        X = check_segments(X)
        params = self._init(X.shape[2])
        cfg = PretrainConfig(self.epochs, self.batch_size, self.learning_rate, self.seed, self.balanced)
        self.loss_history_ = []
        if y is None:
            if self.mode == "dicnn":
                warnings.warn("no labels given; encoder left at its random initialization")
            self.params_ = params
            return self
        if self.mode == "dicnn":
            params, self.loss_history_ = pretrain_encoder(params, X, y, cfg)
        else:
            params, self.loss_history_ = _fit_anomaly_weight(params, X, y, cfg)
        self.params_ = params
        return self

    def point_features(self, X, chunk=256):
        """Point representations ``h`` with shape (n, L, d)."""
        check_is_fitted(self, "params_")
        X = check_segments(X)
        return np.concatenate(
            [encode(self.params_, X[i : i + chunk]) for i in range(0, len(X), chunk)]
        )

    def transform(self, X):
        """Segment embeddings (n, d) by global average pooling."""
        return gap(self.point_features(X))

    def point_scores(self, X):
        return point_scores(self.params_, self.point_features(X))

    def segment_scores(self, X):
        return segment_scores(self.params_, self.point_features(X))


def _fit_anomaly_weight(params, x, y, config):
    """Logistic fit of ``w`` alone on frozen GAP embeddings."""
    params = params.copy()
    X = np.concatenate([gap(encode(params, x[i : i + 256])) for i in range(0, len(x), 256)])
    y = np.asarray(y, dtype=np.float64)
    weights = balanced_weights(y) if config.balanced else np.ones_like(y)
    opt = Adam([params.w], learning_rate=config.learning_rate)
    history = []
    for _ in range(config.epochs):
        s = X @ params.w
        history.append(bce_with_logits(s, y, weights))
        opt.step([X.T @ (weights * (sigmoid(s) - y) / len(y))])
    return params, history
