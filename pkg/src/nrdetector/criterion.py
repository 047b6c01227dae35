"""PU criterion: distribution-alignment PU loss plus a time-constraint term.

For a batch with labeled-positive segment scores ``f_L``, refined-unlabeled
scores ``f_U`` and point-score vectors ``h`` (one row per segment in the
batch)::

    R_pu     = 2 pi_p |mean(f_L) - 1| + |mean(f_U) - pi_p|
    L_smooth = (1/N) sum_i sum_j (h_i[j] - h_i[j+1])**2
    L_sep    = mean(f_U) - mean(f_L)
    L        = R_pu + lam * (lam1 * L_smooth + lam2 * L_sep)

The subgradient of ``|.|`` at 0 is taken as 0.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptySide

BCE_EPS = 1e-7


@dataclass(frozen=True)
class CriterionConfig:
    """Weights of the PU criterion.

    ``pi_p`` is the class prior used by the alignment term; ``lam`` scales
    the whole time-constraint loss, ``lam1``/``lam2`` its smoothness and
    separability parts.
    """

    pi_p: float = 0.25
    lam: float = 1.0
    lam1: float = 8e-5
    lam2: float = 8e-5

    def __post_init__(self):
        if not 0 < self.pi_p < 1:
            raise ValueError(f"pi_p must lie in (0, 1), got {self.pi_p}")
        if min(self.lam, self.lam1, self.lam2) < 0:
            raise ValueError("criterion weights must be non-negative")


@dataclass
class BatchOutputs:
    f_L: np.ndarray
    f_U: np.ndarray
    h_all: np.ndarray


def _nonempty(f_L, f_U):
    f_L = np.asarray(f_L, dtype=np.float64)
    f_U = np.asarray(f_U, dtype=np.float64)
    if f_L.size == 0:
        raise EmptySide("batch has no labeled positives")
    if f_U.size == 0:
        raise EmptySide("batch has no unlabeled segments")
    return f_L, f_U


def pu_loss(f_L, f_U, pi_p):
    f_L, f_U = _nonempty(f_L, f_U)
    return 2 * pi_p * abs(f_L.mean() - 1.0) + abs(f_U.mean() - pi_p)


def smooth_loss(h_all):
    h = np.atleast_2d(np.asarray(h_all, dtype=np.float64))
    return float(np.sum(np.diff(h, axis=1) ** 2) / h.shape[0])


def sep_loss(f_U, f_L):
    f_L, f_U = _nonempty(f_L, f_U)
    return float(f_U.mean() - f_L.mean())


def total_loss(batch, cfg):
    tc = cfg.lam1 * smooth_loss(batch.h_all) + cfg.lam2 * sep_loss(batch.f_U, batch.f_L)
    return pu_loss(batch.f_L, batch.f_U, cfg.pi_p) + cfg.lam * tc


def smooth_grad(h_all):
    """Gradient of :func:`smooth_loss`: ``2/N`` times the discrete Laplacian."""
    h = np.atleast_2d(np.asarray(h_all, dtype=np.float64))
    diff = np.diff(h, axis=1)
    g = np.zeros_like(h)
    g[:, :-1] -= 2 * diff
    g[:, 1:] += 2 * diff
    return g / h.shape[0]


def pu_grad(f_L, f_U, pi_p):
    """Subgradients of :func:`pu_loss` w.r.t. ``f_L`` and ``f_U``."""
    f_L, f_U = _nonempty(f_L, f_U)
    g_L = np.full(f_L.size, 2 * pi_p * np.sign(f_L.mean() - 1.0) / f_L.size)
    g_U = np.full(f_U.size, np.sign(f_U.mean() - pi_p) / f_U.size)
    return g_L, g_U


def tc_grad(batch, cfg):
    """Gradients of ``lam * (lam1 * L_smooth + lam2 * L_sep)``."""
    f_L, f_U = _nonempty(batch.f_L, batch.f_U)
    g_L = np.full(f_L.size, -cfg.lam * cfg.lam2 / f_L.size)
    g_U = np.full(f_U.size, cfg.lam * cfg.lam2 / f_U.size)
    g_h = cfg.lam * cfg.lam1 * smooth_grad(batch.h_all)
    return g_L, g_U, g_h


def grad_total(batch, cfg):
    """Subgradients of :func:`total_loss` w.r.t. ``f_L``, ``f_U`` and ``h_all``."""
    p_L, p_U = pu_grad(batch.f_L, batch.f_U, cfg.pi_p)
    t_L, t_U, g_h = tc_grad(batch, cfg)
    return p_L + t_L, p_U + t_U, g_h


def bce_loss(f, targets):
    """Mean binary cross-entropy with scores clipped to ``[eps, 1 - eps]``."""
    f = np.clip(np.asarray(f, dtype=np.float64), BCE_EPS, 1 - BCE_EPS)
    y = np.asarray(targets, dtype=np.float64)
    return float(-np.mean(y * np.log(f) + (1 - y) * np.log(1 - f)))


def bce_grad(f, targets):
    f_raw = np.asarray(f, dtype=np.float64)
    f = np.clip(f_raw, BCE_EPS, 1 - BCE_EPS)
    y = np.asarray(targets, dtype=np.float64)
    g = (-(y / f) + (1 - y) / (1 - f)) / f.size
    # no gradient through the clip
    g[(f_raw < BCE_EPS) | (f_raw > 1 - BCE_EPS)] = 0.0
    return g
