"""Detection metrics: P/R/F1, point adjustment, PA%K and its AUC.

Also hosts the noisy-label generalization bound
``e1 + sqrt(2 ln(4 / delta) / N) + mismatch``.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_binary_pair
from .exceptions import InvalidDelta


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    undefined: bool = False


def prf(pred, truth):
    """Precision, recall and F1 of binary predictions.

    A zero denominator gives 0 for that quantity and sets ``undefined``.

    Examples
    --------
    >>> prf([1, 0, 0, 0], [1, 1, 0, 0])
    PRF(precision=1.0, recall=0.5, f1=0.6666666666666666, undefined=False)
    """
    pred, truth = check_binary_pair(pred, truth)
    tp = int(np.sum(pred & truth))
    n_pred = int(pred.sum())
    n_true = int(truth.sum())
    undefined = n_pred == 0 or n_true == 0
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_true if n_true else 0.0
    if precision + recall == 0:
        return PRF(0.0, 0.0, 0.0, True)
    return PRF(precision, recall, 2 * precision * recall / (precision + recall), undefined)


def anomaly_runs(truth):
    """(start, stop) half-open bounds of the maximal runs of ones."""
    t = np.concatenate(([0], np.asarray(truth, dtype=np.int64), [0]))
    edges = np.flatnonzero(np.diff(t))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def pa_percent_k(pred, truth, K):
    """Point adjustment that only fires when a run's hit rate exceeds ``K`` percent.

    A run counts as detected when ``100 * hits / length > K``; detected
    runs are filled with ones. ``K = 0`` is plain point adjustment.
    """
    if not 0 <= K <= 100:
        raise ValueError(f"K must lie in [0, 100], got {K}")
    pred, truth = check_binary_pair(pred, truth)
    out = pred.copy()
    for a, b in anomaly_runs(truth):
        hits = int(pred[a:b].sum())
        # integer form of 100 * hits / n > K, avoids float ties at the boundary
        if 100 * hits > K * (b - a):
            out[a:b] = 1
    return out


def point_adjust(pred, truth):
    """Mark a whole anomaly run detected when any point inside is flagged."""
    return pa_percent_k(pred, truth, 0)


K_GRID = tuple(range(101))


def f1_pa_k_auc(pred, truth):
    """Mean F1 after :func:`pa_percent_k` over ``K = 0, 1, ..., 100``."""
    pred, truth = check_binary_pair(pred, truth)
    return float(np.mean([prf(pa_percent_k(pred, truth, K), truth).f1 for K in K_GRID]))


def segment_f1(pred, truth):
    """P/R/F1 between segment-level predictions and segment-level truth."""
    return prf(pred, truth)


def generalization_bound(e1, N, delta=0.05, mismatch=0.0):
    """Upper bound on the clean risk of a classifier trained on noisy labels.

    Parameters
    ----------
    e1 : float
        Rate at which true positives are left unlabeled.
    N : int
        Number of training samples.
    delta : float
        Failure probability, in (0, 1).
    mismatch : float
        Probability that the noisy label disagrees with the noisy Bayes
        optimal label.

    Examples
    --------
    >>> round(generalization_bound(0.6, 1000, 0.05), 4)
    0.6936
    """
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    if not 0 <= e1 <= 1 or not 0 <= mismatch <= 1:
        raise ValueError("e1 and mismatch must lie in [0, 1]")
    return e1 + math.sqrt(2.0 * math.log(4.0 / delta) / N) + mismatch


REPORT_FIELDS = ("f1", "precision", "recall", "f1_pa", "f1_pa_k_auc", "f1_segment", "bound")
RESERVED_FIELDS = ("aff_p", "aff_r", "r_a_r", "r_a_p", "v_roc", "v_pr")


@dataclass
class MetricReport:
    f1: float
    precision: float
    recall: float
    f1_pa: float
    f1_pa_k_auc: float
    f1_segment: Optional[float] = None
    bound: Optional[float] = None
    flags: list = field(default_factory=list)
    # reserved, never populated here
    aff_p: Optional[float] = None
    aff_r: Optional[float] = None
    r_a_r: Optional[float] = None
    r_a_p: Optional[float] = None
    v_roc: Optional[float] = None
    v_pr: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        rows = [f"{name:<12} {_fmt(getattr(self, name))}" for name in REPORT_FIELDS]
        if self.flags:
            rows.append("flags        " + ", ".join(self.flags))
        return "\n".join(rows) + "\n"


def _fmt(v):
    return "n/a" if v is None else f"{v:.6f}"


def evaluate(pred, truth, segment_pred=None, segment_truth=None, bound_inputs=None):
    """Full metric report for point predictions.

    ``bound_inputs`` is an optional dict of :func:`generalization_bound`
    keyword arguments.
    """
    pred, truth = check_binary_pair(pred, truth)
    plain = prf(pred, truth)
    flags = []
    if plain.undefined:
        flags.append("point_prf_zero_division")
    report = MetricReport(
        f1=plain.f1,
        precision=plain.precision,
        recall=plain.recall,
        f1_pa=prf(point_adjust(pred, truth), truth).f1,
        f1_pa_k_auc=f1_pa_k_auc(pred, truth),
        flags=flags,
    )
    if segment_pred is not None:
        seg = segment_f1(segment_pred, segment_truth)
        report.f1_segment = seg.f1
        if seg.undefined:
            flags.append("segment_prf_zero_division")
    if bound_inputs is not None:
        report.bound = generalization_bound(**bound_inputs)
    return report
