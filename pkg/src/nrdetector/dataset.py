"""Time-series ingestion, windowing, PU label noise and a synthetic generator.

Arrays are stored time-major: a series is ``(T_total, D)`` and a collection
of segments is ``(n_segments, L, D)``.
"""

import csv
import warnings
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from ._validation import check_random_state, round_half_up
from .exceptions import EmptyFile, InvalidRate, MalformedRow, NoPositives, TooShort


class PULabel(IntEnum):
    UNLABELED = 0
    LABELED_POSITIVE = 1


class SelectorClass(IntEnum):
    NONE = 0
    RELIABLE_NEGATIVE = 1
    PROPAGATED_NEGATIVE = 2
    EXCLUDED = 3


def zscore(values, reference=None):
    """Standardize each column; zero-variance columns become all zeros.

    Parameters
    ----------
    values : ndarray of shape (T, D)
    reference : slice or ndarray of row indices, optional
        Rows used to compute the mean and standard deviation. Defaults to
        every row.
    """
    values = np.asarray(values, dtype=np.float64)
    ref = values if reference is None else values[reference]
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    out = values - mean
    constant = std == 0
    out[:, ~constant] /= std[~constant]
    out[:, constant] = 0.0
    return out


@dataclass
class TimeSeriesDataset:
    """A multivariate series with optional point-level ground truth.

    Attributes
    ----------
    values : ndarray of shape (T_total, D)
    point_labels : ndarray of shape (T_total,), optional
        1 marks an anomalous time point. Only used for evaluation.
    name : str
    intervals : list of (start, stop, kind)
        Planted anomaly intervals, filled in by :func:`synth_generate`.
    """

    values: np.ndarray
    point_labels: Optional[np.ndarray] = None
    name: str = "series"
    intervals: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"values must be (T_total >= 1, D >= 1), got {self.values.shape}")
        if self.point_labels is not None:
            labels = np.asarray(self.point_labels)
            if labels.shape != (self.values.shape[0],):
                raise ValueError(
                    f"point_labels has length {labels.size}, expected {self.values.shape[0]}"
                )
            if not np.isin(labels, (0, 1)).all():
                raise ValueError("point_labels must be 0/1")
            self.point_labels = labels.astype(np.int64)

    @property
    def T_total(self):
        return self.values.shape[0]

    @property
    def D(self):
        return self.values.shape[1]


def _parse_float(text):
    value = float(text)
    if not np.isfinite(value):
        raise ValueError(text)
    return value


def load_csv(path, has_labels=False, normalize=True, name=None):
    """Read a comma-separated series.

    Each row holds ``D`` numeric fields, followed by an integer 0/1 label
    when ``has_labels`` is set. A non-numeric first row is treated as a
    header. With ``normalize`` the values are z-scored per dimension over the
    whole file.

    Raises
    ------
    EmptyFile
        No data rows.
    MalformedRow
        Wrong number of fields or a non-numeric value; the message names the
        1-based line number.
    """
    rows = []
    labels = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for line_number, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None and not rows:
                try:
                    [_parse_float(c) for c in row]
                except ValueError:
                    # header
                    continue
            if width is None:
                width = len(row)
                if has_labels and width < 2:
                    raise MalformedRow(line_number, "expected at least one value column and a label")
            if len(row) != width:
                raise MalformedRow(line_number, f"expected {width} fields, found {len(row)}")
            n_values = width - 1 if has_labels else width
            try:
                rows.append([_parse_float(c) for c in row[:n_values]])
            except ValueError:
                raise MalformedRow(line_number, "non-numeric value") from None
            if has_labels:
                cell = row[-1].strip()
                try:
                    label = int(float(cell))
                except ValueError:
                    raise MalformedRow(line_number, f"label {cell!r} is not an integer") from None
                if label not in (0, 1) or float(cell) != label:
                    raise MalformedRow(line_number, f"label {cell!r} is not 0 or 1")
                labels.append(label)
    if not rows:
        raise EmptyFile(f"{path} contains no data rows")
    values = np.asarray(rows, dtype=np.float64)
    if normalize:
        values = zscore(values)
    return TimeSeriesDataset(
        values=values,
        point_labels=np.asarray(labels, dtype=np.int64) if has_labels else None,
        name=name or str(path),
    )


def save_csv(dataset, path):
    """Write ``dataset`` in the format read by :func:`load_csv` (with header)."""
    header = [f"x{j}" for j in range(dataset.D)]
    if dataset.point_labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(dataset.T_total):
            row = [repr(float(v)) for v in dataset.values[t]]
            if dataset.point_labels is not None:
                row.append(str(int(dataset.point_labels[t])))
            writer.writerow(row)


@dataclass
class Segment:
    index: int
    values: np.ndarray
    true_label: Optional[int]
    pu_label: PULabel
    selector_class: SelectorClass
    embedding: Optional[np.ndarray]


@dataclass
class SegmentCollection:
    """Fixed-length windows of one series plus their PU bookkeeping.

    All per-segment attributes are stored as parallel arrays; indexing with
    an integer returns a :class:`Segment` view.
    """

    values: np.ndarray
    starts: np.ndarray
    point_labels: Optional[np.ndarray] = None
    true_labels: Optional[np.ndarray] = None
    pu_labels: Optional[np.ndarray] = None
    selector_class: Optional[np.ndarray] = None
    embeddings: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.values.shape[0]
        if self.point_labels is not None and self.true_labels is None:
            self.true_labels = self.point_labels.max(axis=1).astype(np.int64)
        if self.pu_labels is None:
            self.pu_labels = np.full(n, PULabel.UNLABELED, dtype=np.int64)
        if self.selector_class is None:
            self.selector_class = np.full(n, SelectorClass.NONE, dtype=np.int64)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i):
        return Segment(
            index=int(i),
            values=self.values[i],
            true_label=None if self.true_labels is None else int(self.true_labels[i]),
            pu_label=PULabel(int(self.pu_labels[i])),
            selector_class=SelectorClass(int(self.selector_class[i])),
            embedding=None if self.embeddings is None else self.embeddings[i],
        )

    @property
    def L(self):
        return self.values.shape[1]

    @property
    def D(self):
        return self.values.shape[2]

    @property
    def labeled_idx(self):
        return np.flatnonzero(self.pu_labels == PULabel.LABELED_POSITIVE)

    @property
    def unlabeled_idx(self):
        return np.flatnonzero(self.pu_labels == PULabel.UNLABELED)

    def subset(self, idx):
        """Return a new collection restricted to ``idx`` (re-indexed from 0)."""
        idx = np.asarray(idx)

        def take(a):
            return None if a is None else a[idx].copy()

        return SegmentCollection(
            values=self.values[idx].copy(),
            starts=self.starts[idx].copy(),
            point_labels=take(self.point_labels),
            true_labels=take(self.true_labels),
            pu_labels=take(self.pu_labels),
            selector_class=take(self.selector_class),
            embeddings=take(self.embeddings),
        )


def window(dataset, L=100):
    """Cut ``dataset`` into ``floor(T_total / L)`` consecutive segments.

    Segment ``i`` covers points ``[i*L, (i+1)*L)``; the trailing remainder is
    dropped. A segment is positive when any point inside is anomalous.
    """
    if L < 2:
        raise ValueError(f"window length must be >= 2, got {L}")
    if dataset.T_total < L:
        raise TooShort(f"series has {dataset.T_total} points, fewer than L={L}")
    n = dataset.T_total // L
    values = dataset.values[: n * L].reshape(n, L, dataset.D).copy()
    point_labels = None
    if dataset.point_labels is not None:
        point_labels = dataset.point_labels[: n * L].reshape(n, L).copy()
    return SegmentCollection(
        values=values,
        starts=np.arange(n, dtype=np.int64) * L,
        point_labels=point_labels,
    )


def train_test_split(segments, train_ratio=0.7):
    """Ordered (unshuffled) split of a collection into train and test parts."""
    if not 0 < train_ratio <= 1:
        raise ValueError("train_ratio must lie in (0, 1]")
    n_train = round_half_up(train_ratio * len(segments))
    n_train = min(max(n_train, 1), len(segments))
    idx = np.arange(len(segments))
    return segments.subset(idx[:n_train]), segments.subset(idx[n_train:])


@dataclass(frozen=True)
class NoiseSpec:
    """PU label noise: each true positive stays unlabeled with rate ``e1``."""

    e1: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.e1 < 1:
            raise ValueError(f"e1 must lie in [0, 1), got {self.e1}")


def inject_pu_noise(segments, spec):
    """Label ``round((1 - e1) * N_P)`` true positives, chosen uniformly.

    Negatives are never labeled, so the false-positive flip rate is zero.
    Returns a copy of ``segments`` with ``pu_labels`` filled in.
    """
    if segments.true_labels is None:
        raise ValueError("segment ground truth is required to inject PU noise")
    positives = np.flatnonzero(segments.true_labels == 1)
    if positives.size == 0:
        raise NoPositives("collection contains no positive segments")
    n_keep = round_half_up((1.0 - spec.e1) * positives.size)
    rng = np.random.default_rng(spec.seed)
    keep = np.sort(rng.choice(positives, size=n_keep, replace=False))
    pu = np.full(len(segments), PULabel.UNLABELED, dtype=np.int64)
    pu[keep] = PULabel.LABELED_POSITIVE
    return replace(
        segments,
        pu_labels=pu,
        selector_class=np.full(len(segments), SelectorClass.NONE, dtype=np.int64),
    )


ANOMALY_KINDS = ("spike", "level_shift", "frequency_change")


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic benchmark generator.

    The base signal of every dimension is a sum of two sinusoids plus AR(1)
    noise. Anomalies are planted as disjoint intervals whose lengths are
    drawn from ``[min_length, max_length]``; the total anomalous point count
    is exactly ``round(anomaly_rate * T_total)``.
    """

    D: int = 8
    T_total: int = 50_000
    anomaly_kinds: Sequence[str] = ANOMALY_KINDS
    anomaly_rate: float = 0.1
    min_length: int = 20
    max_length: int = 80
    period_range: tuple = (50.0, 400.0)
    ar_coef: float = 0.5
    noise_scale: float = 0.3
    magnitude: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.anomaly_rate < 1:
            raise InvalidRate(f"anomaly_rate must lie in [0, 1), got {self.anomaly_rate}")
        unknown = set(self.anomaly_kinds) - set(ANOMALY_KINDS)
        if unknown:
            raise ValueError(f"unknown anomaly kinds: {sorted(unknown)}")
        if not self.anomaly_kinds and self.anomaly_rate > 0:
            raise ValueError("anomaly_kinds is empty")
        if self.min_length < 1 or self.max_length < self.min_length:
            raise ValueError("need 1 <= min_length <= max_length")


def _plant_intervals(rng, T, n_target, min_len, max_len):
    occupied = np.zeros(T + 2, dtype=bool)  # padded so touching runs stay apart
    intervals = []
    remaining = n_target
    failures = 0
    while remaining > 0:
        length = int(rng.integers(min_len, max_len + 1))
        length = min(length, remaining)
        start = int(rng.integers(0, T - length + 1))
        # the run plus one guard cell either side must be free
        if occupied[start : start + length + 2].any():
            failures += 1
            if failures > 10_000:
                raise InvalidRate("could not place anomaly intervals; rate too high for T_total")
            continue
        occupied[start + 1 : start + length + 1] = True
        intervals.append((start, start + length))
        remaining -= length
    return sorted(intervals)


def synth_generate(config):
    """Generate a labeled multivariate series according to ``config``.

    Returns a z-scored :class:`TimeSeriesDataset` whose ``intervals`` lists
    every planted ``(start, stop, kind)`` triple.
    """
    rng = np.random.default_rng(config.seed)
    T, D = config.T_total, config.D
    t = np.arange(T, dtype=np.float64)

    lo, hi = config.period_range
    periods = rng.uniform(lo, hi, size=(D, 2))
    phases = rng.uniform(0, 2 * np.pi, size=(D, 2))
    amps = rng.uniform(0.5, 1.0, size=(D, 2))
    seasonal = np.zeros((T, D))
    for j in range(D):
        for c in range(2):
            seasonal[:, j] += amps[j, c] * np.sin(2 * np.pi * t / periods[j, c] + phases[j, c])
    noise = lfilter([1.0], [1.0, -config.ar_coef], rng.normal(0, config.noise_scale, size=(T, D)), axis=0)
    values = seasonal + noise
    scale = values.std(axis=0)

    labels = np.zeros(T, dtype=np.int64)
    planted = []
    n_target = round_half_up(config.anomaly_rate * T)
    if n_target:
        intervals = _plant_intervals(rng, T, n_target, config.min_length, config.max_length)
        for start, stop in intervals:
            kind = config.anomaly_kinds[int(rng.integers(len(config.anomaly_kinds)))]
            n_dims = int(rng.integers(1, max(1, D // 2) + 1))
            dims = rng.choice(D, size=n_dims, replace=False)
            length = stop - start
            for j in dims:
                m = config.magnitude * scale[j]
                if kind == "spike":
                    signs = rng.choice([-1.0, 1.0], size=length)
                    values[start:stop, j] += signs * m * rng.uniform(0.7, 1.3, size=length)
                elif kind == "level_shift":
                    values[start:stop, j] += rng.choice([-1.0, 1.0]) * m
                else:
                    period = rng.uniform(4.0, 10.0)
                    local = t[start:stop] - start
                    values[start:stop, j] = (
                        seasonal[start:stop, j].std() + 0.5 * m
                    ) * np.sin(2 * np.pi * local / period) + noise[start:stop, j]
            labels[start:stop] = 1
            planted.append((start, stop, kind))
    realized = labels.mean()
    if config.anomaly_rate > 0 and abs(realized - config.anomaly_rate) > 0.1 * config.anomaly_rate:
        warnings.warn(f"realized anomaly rate {realized:.4f} is off target", RuntimeWarning)
    return TimeSeriesDataset(
        values=zscore(values),
        point_labels=labels,
        name=f"synth-seed{config.seed}",
        intervals=planted,
    )
