import numpy as np
import pytest

from nrdetector.dataset import (
    NoiseSpec,
    PULabel,
    SynthConfig,
    TimeSeriesDataset,
    inject_pu_noise,
    load_csv,
    save_csv,
    synth_generate,
    train_test_split,
    window,
    zscore,
)
from nrdetector.exceptions import EmptyFile, InvalidRate, MalformedRow, NoPositives, TooShort


def _series(T=1000, D=2, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.zeros(T, dtype=int)
    labels[120:130] = 1
    labels[555:560] = 1
    return TimeSeriesDataset(rng.normal(size=(T, D)), labels)


def test_zscore_constant_column_is_zero():
    x = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    z = zscore(x)
    assert np.allclose(z[:, 1], 0)
    assert np.isclose(z[:, 0].mean(), 0) and np.isclose(z[:, 0].std(), 1)


def test_window_drops_remainder_and_labels_segments():
    ds = _series(T=1050)
    seg = window(ds, 100)
    assert len(seg) == 10 and seg.L == 100 and seg.D == 2
    assert seg.starts.tolist() == list(range(0, 1000, 100))
    assert seg.true_labels.tolist() == [0, 1, 0, 0, 0, 1, 0, 0, 0, 0]
    assert np.array_equal(seg.values[3], ds.values[300:400])


def test_window_too_short():
    with pytest.raises(TooShort):
        window(_series(T=50), 100)


def test_ordered_split():
    seg = window(_series(T=1000), 100)
    tr, te = train_test_split(seg, 0.7)
    assert len(tr) == 7 and len(te) == 3
    assert te.starts[0] == 700


@pytest.mark.parametrize("e1", [0.0, 0.3, 0.6, 0.9])
def test_noise_labels_exact_count(e1):
    ds = synth_generate(SynthConfig(D=2, T_total=20_000, seed=1))
    seg = window(ds, 100)
    n_pos = int(seg.true_labels.sum())
    noisy = inject_pu_noise(seg, NoiseSpec(e1, seed=5))
    labeled = noisy.labeled_idx
    assert labeled.size == int(np.floor((1 - e1) * n_pos + 0.5))
    # negatives are never labeled
    assert seg.true_labels[labeled].all()
    assert set(np.unique(noisy.pu_labels)) <= {PULabel.LABELED_POSITIVE, PULabel.UNLABELED}


def test_noise_is_seeded():
    seg = window(synth_generate(SynthConfig(D=2, T_total=10_000, seed=2)), 100)
    a = inject_pu_noise(seg, NoiseSpec(0.6, 9)).pu_labels
    b = inject_pu_noise(seg, NoiseSpec(0.6, 9)).pu_labels
    assert np.array_equal(a, b)


def test_noise_without_positives():
    ds = TimeSeriesDataset(np.zeros((300, 1)), np.zeros(300, dtype=int))
    with pytest.raises(NoPositives):
        inject_pu_noise(window(ds, 100), NoiseSpec(0.5))


def test_synth_exact_rate_and_shape():
    cfg = SynthConfig(D=4, T_total=12_345, anomaly_rate=0.1, seed=4)
    ds = synth_generate(cfg)
    assert ds.values.shape == (12_345, 4)
    assert ds.point_labels.sum() == int(np.floor(0.1 * 12_345 + 0.5))
    assert np.allclose(ds.values.mean(axis=0), 0, atol=1e-9)
    assert all(kind in cfg.anomaly_kinds for _, _, kind in ds.intervals)


def test_synth_deterministic():
    a = synth_generate(SynthConfig(D=2, T_total=3000, seed=8))
    b = synth_generate(SynthConfig(D=2, T_total=3000, seed=8))
    assert np.array_equal(a.values, b.values)


def test_synth_rejects_bad_rate():
    with pytest.raises(InvalidRate):
        SynthConfig(anomaly_rate=1.5)


def test_csv_roundtrip(tmp_path):
    ds = _series(T=300, D=3)
    path = tmp_path / "s.csv"
    save_csv(ds, path)
    back = load_csv(path, has_labels=True, normalize=False)
    assert np.allclose(back.values, ds.values)
    assert np.array_equal(back.point_labels, ds.point_labels)


def test_csv_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("a,b\n")
    with pytest.raises(EmptyFile):
        load_csv(empty)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    with pytest.raises(MalformedRow, match="2"):
        load_csv(bad)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("1,2\n3\n")
    with pytest.raises(MalformedRow):
        load_csv(ragged)
