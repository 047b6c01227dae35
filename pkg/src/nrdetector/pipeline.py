"""End-to-end orchestration: ingest, window, embed, select, train, detect, evaluate.

:class:`Pipeline` runs the stages in order for one :class:`PipelineConfig`.
With an output directory every stage leaves an artifact behind, and a
re-run with the same configuration loads finished stages instead of
recomputing them. :class:`NRDetector` wraps the model-fitting stages behind
an estimator interface for in-memory use.
"""

import csv
import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_segments
from .classifier import ClassifierParams, TrainConfig, forward, init_classifier, train
from .config import PipelineConfig
from .criterion import CriterionConfig
from .dataset import (
    NoiseSpec,
    SynthConfig,
    TimeSeriesDataset,
    inject_pu_noise,
    load_csv,
    synth_generate,
    train_test_split,
    window,
)
from .encoder import DilatedCNNEncoder, EncoderParams
from .exceptions import NoPositives, NRDetectorError, StageError
from .metrics import evaluate, prf
from .pointdet import PointDetector, threshold_points
from .selector import SampleSelector, SelectionResult

log = logging.getLogger(__name__)

STAGES = ("ingest", "window", "embed", "select", "train", "detect", "evaluate")
REPORT_FORMAT = "nrdetector-report/1"
ABLATION_TOGGLES = ("extraction", "propagation", "pu_loss", "tc_loss", "rate_estimator")
STAGE_ERRORS = (NRDetectorError, ValueError, OSError, KeyError, FloatingPointError)


# ---------------------------------------------------------------- stages


def load_series(cfg):
    if cfg.data.source == "synth":
        s = cfg.synth
        return synth_generate(
            SynthConfig(
                D=s.D,
                T_total=s.T_total,
                anomaly_kinds=s.kinds,
                anomaly_rate=s.anomaly_rate,
                min_length=s.min_length,
                max_length=s.max_length,
                magnitude=s.magnitude,
                noise_scale=s.noise_scale,
                ar_coef=s.ar_coef,
                seed=cfg.seed,
            )
        )
    if not os.path.exists(cfg.data.path):
        raise FileNotFoundError(f"no such file: {cfg.data.path}")
    return load_csv(cfg.data.path, has_labels=cfg.data.has_labels, normalize=cfg.data.normalize)


def make_segments(cfg, dataset):
    """Window ``dataset``, inject PU noise and split into train and test parts."""
    segments = window(dataset, cfg.data.window)
    if segments.true_labels is None:
        raise NoPositives("PU labels are derived from ground truth; the series has no labels")
    segments = inject_pu_noise(segments, NoiseSpec(cfg.noise.e1, cfg.seed))
    return train_test_split(segments, cfg.data.train_ratio)


def pu_targets(segments):
    """1 for labeled positives, 0 for unlabeled segments."""
    y = np.zeros(len(segments), dtype=np.int64)
    y[segments.labeled_idx] = 1
    return y


def make_encoder(cfg):
    e = cfg.encoder
    return DilatedCNNEncoder(
        d=e.d,
        n_layers=e.n_layers,
        kernel_width=e.kernel_width,
        mode=e.mode,
        epochs=e.epochs,
        batch_size=e.batch_size,
        learning_rate=e.learning_rate,
        balanced=e.balanced,
        seed=cfg.seed,
    )


def fit_encoder(cfg, X, y):
    return make_encoder(cfg).fit(X, y)


def embedding_scaler(cfg, E_train):
    """Per-column mean and scale used to standardize embeddings."""
    if not cfg.encoder.standardize:
        return np.zeros(E_train.shape[1]), np.ones(E_train.shape[1])
    mean = E_train.mean(axis=0)
    scale = E_train.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def fit_selection(cfg, E_train, y):
    s = cfg.selector
    selector = SampleSelector(
        k=s.k,
        beta=s.beta,
        l_max=s.l_max,
        m=s.m,
        lambda0=s.lambda0,
        margin=s.margin,
        extraction=s.extraction,
        propagation=s.propagation,
        clamp_negatives=s.clamp_negatives,
    )
    return selector.fit(E_train, y).selection_


def train_config(cfg):
    c, t = cfg.criterion, cfg.train
    return TrainConfig(
        learning_rate=t.learning_rate,
        batch_size=t.batch_size,
        epochs=t.epochs,
        seed=cfg.seed,
        criterion=CriterionConfig(c.pi_p, c.lam, c.lam1, c.lam2),
        threshold=t.threshold,
        objective="pu" if c.pu_loss else "bce",
        tc=c.tc_loss,
    )


def fit_classifier(cfg, E_train, y, selection):
    """Train on labeled positives plus the refined unlabeled segments."""
    keep = np.union1d(np.flatnonzero(y == 1), selection.refined_unlabeled)
    params = init_classifier(E_train.shape[1], cfg.data.window, cfg.seed, tuple(cfg.train.hidden))
    return train(params, E_train[keep], y[keep] == 1, train_config(cfg))


@dataclass
class Detection:
    """Stage-2 output for one group of segments."""

    segment_scores: np.ndarray
    segment_labels: np.ndarray
    points: np.ndarray
    points_fixed_rate: np.ndarray
    p_hat: float
    e0_hat: float
    e1_hat: float
    residual: float
    n_ranked: int

    def arrays(self, prefix):
        return {
            f"{prefix}.segment_scores": self.segment_scores,
            f"{prefix}.segment_labels": self.segment_labels,
            f"{prefix}.points": self.points,
            f"{prefix}.points_fixed_rate": self.points_fixed_rate,
            f"{prefix}.stats": np.array([self.p_hat, self.e0_hat, self.e1_hat, self.residual, self.n_ranked]),
        }

    @classmethod
    def from_arrays(cls, arrays, prefix):
        p, e0, e1, res, m = arrays[f"{prefix}.stats"].tolist()
        return cls(
            arrays[f"{prefix}.segment_scores"],
            arrays[f"{prefix}.segment_labels"],
            arrays[f"{prefix}.points"],
            arrays[f"{prefix}.points_fixed_rate"],
            p,
            e0,
            e1,
            res,
            int(m),
        )


def detect(cfg, params, encoder, E, X):
    """Segment predictions, then point predictions inside positive segments.

    ``points_fixed_rate`` keeps the top ``pointdet.k`` fraction of ranked
    points instead of the estimated rate.
    """
    p = cfg.pointdet
    h, f = forward(params, E)
    seg_labels = (f > cfg.train.threshold).astype(np.int64)
    scores = h if p.score_source == "classifier" else encoder.point_scores(X)
    features = encoder.point_features(X) if p.rate_estimator else None
    det = PointDetector(p.k, p.rate_estimator, p.n_neighbors, p.max_points)
    points = det.fit_predict(scores, seg_labels, features, p.score_source)
    fixed = threshold_points(det.ranked_, p.k, *points.shape)
    rate = det.rate_
    return Detection(
        segment_scores=f,
        segment_labels=seg_labels,
        points=points,
        points_fixed_rate=fixed,
        p_hat=float(det.p_hat_),
        e0_hat=float("nan") if rate is None else rate.e0_hat,
        e1_hat=float("nan") if rate is None else rate.e1_hat,
        residual=float("nan") if rate is None else rate.residual,
        n_ranked=len(det.ranked_),
    )


# ---------------------------------------------------------------- estimator


class NRDetector(BaseEstimator):
    """Two-stage detector with an estimator interface.

    ``fit(X, y)`` takes training segments ``X`` of shape (n, L, D) and PU
    labels ``y`` (1 = labeled anomalous segment, 0 = unlabeled).
    ``predict(X)`` returns point labels of shape (n, L) and
    ``predict_segments(X)`` segment labels.

    Parameters
    ----------
    config : PipelineConfig, optional
        Every hyperparameter; defaults to ``PipelineConfig()``. Only the
        encoder, selector, criterion, train and pointdet sections matter.

    Attributes
    ----------
    encoder_ : DilatedCNNEncoder
    selection_ : SelectionResult
    params_ : ClassifierParams
    history_ : list of dict
    """

    def __init__(self, config=None):
        self.config = config

    def _cfg(self):
        return self.config if self.config is not None else PipelineConfig()

    def fit(self, X, y):
        cfg = self._cfg()
        X = check_segments(X)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[1] != cfg.data.window:
            cfg = cfg.with_overrides({"data.window": X.shape[1]})
        self.encoder_ = fit_encoder(cfg, X, y)
        E = self.encoder_.transform(X)
        self.mean_, self.scale_ = embedding_scaler(cfg, E)
        E = (E - self.mean_) / self.scale_
        self.selection_ = fit_selection(cfg, E, y)
        self.params_, self.history_ = fit_classifier(cfg, E, y, self.selection_)
        self.fitted_config_ = cfg
        return self

    def embed(self, X):
        check_is_fitted(self, "params_")
        return (self.encoder_.transform(check_segments(X)) - self.mean_) / self.scale_

    def decision_function(self, X):
        return forward(self.params_, self.embed(X))[1]

    def predict_segments(self, X):
        return (self.decision_function(X) > self.fitted_config_.train.threshold).astype(np.int64)

    def detect(self, X):
        X = check_segments(X)
        return detect(self.fitted_config_, self.params_, self.encoder_, self.embed(X), X)

    def predict(self, X):
        return self.detect(X).points


# ---------------------------------------------------------------- pipeline


def _json_default(v):
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(type(v).__name__)


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, NaN to None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if x != x else x
    if isinstance(x, np.integer):
        return int(x)
    return x


class _Stop(Exception):
    def __init__(self, result):
        self.result = result


class Pipeline:
    """Run every stage for one configuration.

    Parameters
    ----------
    config : PipelineConfig
    out_dir : str or Path, optional
        Where artifacts go. Without it nothing is written and nothing is
        resumed.
    resume : bool, default=True
        Load artifacts of finished stages when the stored configuration
        fingerprint matches.
    stop_after : str, optional
        Name of the last stage to run; :meth:`run` then returns ``None``.
    """

    def __init__(self, config, out_dir=None, resume=True, stop_after=None):
        if stop_after is not None and stop_after not in STAGES:
            raise ValueError(f"unknown stage {stop_after!r}")
        self.config = config
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.resume = resume
        self.stop_after = stop_after
        self.completed = []

    # artifact bookkeeping
    def _path(self, *parts):
        return self.out_dir.joinpath(*parts)

    def _load_manifest(self):
        if self.out_dir is None or not self.resume:
            return []
        path = self._path("stages", "manifest.json")
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("fingerprint") != self.config.fingerprint():
            log.info("configuration changed; recomputing every stage")
            return []
        return list(manifest.get("completed", []))

    def _mark_done(self, stage):
        if stage not in self.completed:
            self.completed.append(stage)
        if self.out_dir is None:
            return
        with open(self._path("stages", "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump({"fingerprint": self.config.fingerprint(), "completed": self.completed}, fh, indent=1)
            fh.write("\n")

    def _stage(self, name, compute, load):
        try:
            if name in self._done_before:
                log.info("stage %s: loaded from artifacts", name)
                result = load()
            else:
                log.info("stage %s: running", name)
                result = compute()
        except StageError:
            raise
        except STAGE_ERRORS as exc:
            raise StageError(name, exc) from exc
        self._mark_done(name)
        if name == self.stop_after:
            raise _Stop(result)
        return result

    def _save(self, fn, *parts):
        if self.out_dir is not None:
            fn(self._path(*parts))

    def run(self):
        """Run all stages and return the report dict."""
        try:
            return self._run()
        except _Stop as stop:
            self.last_result_ = stop.result
            return None

    def _run(self):
        cfg = self.config
        if self.out_dir is not None:
            self._path("stages").mkdir(parents=True, exist_ok=True)
        self._done_before = set(self._load_manifest())
        # a stage may only be reused if every earlier stage was too
        for i, name in enumerate(STAGES):
            if name not in self._done_before:
                self._done_before -= set(STAGES[i:])
                break
        self.completed = []

        def ingest():
            ds = load_series(cfg)
            labels = ds.point_labels if ds.point_labels is not None else np.zeros(0, dtype=np.int64)
            self._save(lambda p: np.savez(p, values=ds.values, labels=labels, name=np.array(ds.name)),
                       "stages", "series.npz")
            return ds

        def ingest_load():
            with np.load(self._path("stages", "series.npz")) as z:
                labels = z["labels"] if z["labels"].size else None
                return TimeSeriesDataset(z["values"].copy(), labels, str(z["name"]))

        ds = self._stage("ingest", ingest, ingest_load)

        def windowing():
            tr, te = make_segments(cfg, ds)
            self._save(lambda p: np.savez(p, train_pu=tr.pu_labels, test_pu=te.pu_labels),
                       "stages", "segments.npz")
            return tr, te

        def windowing_load():
            tr, te = make_segments(cfg, ds)
            with np.load(self._path("stages", "segments.npz")) as z:
                tr.pu_labels, te.pu_labels = z["train_pu"].copy(), z["test_pu"].copy()
            return tr, te

        train_seg, test_seg = self._stage("window", windowing, windowing_load)
        y = pu_targets(train_seg)

        def embed():
            enc = fit_encoder(cfg, train_seg.values, y)
            E_tr = enc.transform(train_seg.values)
            mean, scale = embedding_scaler(cfg, E_tr)
            E_te = enc.transform(test_seg.values)
            self._save(enc.params_.save, "encoder.npz")
            self._save(lambda p: np.savez(p, mean=mean, scale=scale), "stages", "embed.npz")
            return enc, (E_tr - mean) / scale, (E_te - mean) / scale

        def embed_load():
            enc = make_encoder(cfg)
            enc.params_ = EncoderParams.load(self._path("encoder.npz"))
            with np.load(self._path("stages", "embed.npz")) as z:
                mean, scale = z["mean"].copy(), z["scale"].copy()
            return enc, (enc.transform(train_seg.values) - mean) / scale, (enc.transform(test_seg.values) - mean) / scale

        encoder, E_train, E_test = self._stage("embed", embed, embed_load)

        def select():
            sel = fit_selection(cfg, E_train, y)
            self._save(sel.save, "selection.json")
            return sel

        selection = self._stage("select", select, lambda: SelectionResult.load(self._path("selection.json")))

        def fit():
            params, history = fit_classifier(cfg, E_train, y, selection)
            self._save(params.save, "classifier.npz")
            self._save(lambda p: p.write_text(json.dumps(history, indent=1) + "\n", encoding="utf-8"),
                       "stages", "history.json")
            return params, history

        def fit_load():
            params = ClassifierParams.load(self._path("classifier.npz"))
            history = json.loads(self._path("stages", "history.json").read_text(encoding="utf-8"))
            return params, history

        params, history = self._stage("train", fit, fit_load)

        def point_stage():
            det_te = detect(cfg, params, encoder, E_test, test_seg.values)
            det_tr = detect(cfg, params, encoder, E_train, train_seg.values)
            self._save(lambda p: np.savez(p, **det_tr.arrays("train"), **det_te.arrays("test")),
                       "stages", "detect.npz")
            return det_tr, det_te

        def point_load():
            with np.load(self._path("stages", "detect.npz")) as z:
                arrays = {k: z[k].copy() for k in z.files}
            return Detection.from_arrays(arrays, "train"), Detection.from_arrays(arrays, "test")

        det_train, det_test = self._stage("detect", point_stage, point_load)

        def report():
            rep = build_report(cfg, ds, train_seg, test_seg, selection, history, det_train, det_test)
            if self.out_dir is not None:
                write_predictions(self._path("predictions.csv"), ds.T_total, train_seg, test_seg, det_train, det_test)
                self._path("report.json").write_text(report_json(rep), encoding="utf-8")
                self._path("report.txt").write_text(report_text(rep), encoding="utf-8")
            return rep

        # the report is cheap and always rebuilt from the detect artifacts
        self._done_before.discard("evaluate")
        self.report_ = self._stage("evaluate", report, None)
        return self.report_


def run_pipeline(config, out_dir=None, resume=True):
    """Run the full pipeline; returns the report dict."""
    return Pipeline(config, out_dir, resume).run()


def write_predictions(path, T_total, train_seg, test_seg, det_train, det_test):
    """One 0/1 prediction per input point; points after the last window are 0."""
    col = np.zeros(T_total, dtype=np.int64)
    L = train_seg.L
    for seg, det in ((train_seg, det_train), (test_seg, det_test)):
        for start, row in zip(seg.starts, det.points):
            col[start : start + L] = row
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["prediction"])
        w.writerows([[int(v)] for v in col])


def _split_metrics(cfg, seg, det, n_train):
    truth = seg.point_labels.ravel()
    rep = evaluate(
        det.points.ravel(),
        truth,
        det.segment_labels,
        seg.true_labels,
        {"e1": cfg.noise.e1, "N": n_train, "delta": cfg.eval.delta, "mismatch": cfg.eval.mismatch},
    )
    out = rep.to_dict()
    out["f1_fixed_rate"] = prf(det.points_fixed_rate.ravel(), truth).f1
    return out


def build_report(cfg, ds, train_seg, test_seg, selection, history, det_train, det_test):
    n_covered = (len(train_seg) + len(test_seg)) * train_seg.L
    return _clean(
        {
            "format": REPORT_FORMAT,
            "config_fingerprint": cfg.fingerprint(),
            "config": cfg.to_flat(),
            "data": {
                "name": ds.name,
                "T_total": ds.T_total,
                "D": ds.D,
                "window": train_seg.L,
                "n_train_segments": len(train_seg),
                "n_test_segments": len(test_seg),
                "dropped_points": ds.T_total - n_covered,
                "coverage": n_covered / ds.T_total,
            },
            "labels": {
                "train_true_positive_segments": int(train_seg.true_labels.sum()),
                "train_labeled_positive_segments": int(train_seg.labeled_idx.size),
                "test_true_positive_segments": int(test_seg.true_labels.sum()),
            },
            "selection": {
                "reliable_negatives": int(selection.reliable_negatives.size),
                "propagated_negatives": int(selection.propagated_negatives.size),
                "excluded": int(selection.excluded.size),
                "refined_unlabeled": int(selection.refined_unlabeled.size),
            },
            "training": {"epochs": len(history), "final": history[-1] if history else {}},
            "detection": {
                split: {
                    "predicted_positive_segments": int(det.segment_labels.sum()),
                    "ranked_points": det.n_ranked,
                    "flagged_points": int(det.points.sum()),
                    "p_hat": det.p_hat,
                    "e0_hat": det.e0_hat,
                    "e1_hat": det.e1_hat,
                    "residual": det.residual,
                }
                for split, det in (("train", det_train), ("test", det_test))
            },
            "metrics": _split_metrics(cfg, test_seg, det_test, len(train_seg)),
        }
    )


def report_json(rep):
    return json.dumps(rep, indent=2, default=_json_default) + "\n"


def _f(v):
    return "n/a" if v is None else f"{v:.4f}"


def report_text(rep):
    m = rep["metrics"]
    d = rep["data"]
    det = rep["detection"]["test"]
    sel = rep["selection"]
    lines = [
        f"nrdetector report  profile={rep['config']['run.profile']}  seed={rep['config']['run.seed']}"
        f"  config={rep['config_fingerprint']}",
        f"series {d['name']}: T={d['T_total']} D={d['D']} window={d['window']}"
        f" train/test segments={d['n_train_segments']}/{d['n_test_segments']}"
        f" dropped points={d['dropped_points']}",
        f"selection: reliable neg={sel['reliable_negatives']} propagated neg={sel['propagated_negatives']}"
        f" excluded={sel['excluded']} refined unlabeled={sel['refined_unlabeled']}",
        f"test: positive segments={det['predicted_positive_segments']} ranked points={det['ranked_points']}"
        f" flagged={det['flagged_points']} p_hat={_f(det['p_hat'])}",
        "",
        f"{'metric':<16}{'value':>10}",
    ]
    for key in ("f1", "precision", "recall", "f1_pa", "f1_pa_k_auc", "f1_segment", "f1_fixed_rate", "bound"):
        lines.append(f"{key:<16}{_f(m[key]):>10}")
    if m["flags"]:
        lines.append("flags: " + ", ".join(m["flags"]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- ablation


def ablation_variants(toggles):
    """Named on/off settings for every combination of ``toggles``.

    ``rate_estimator`` never adds rows: each row reports point F1 both with
    and without it.
    """
    unknown = set(toggles) - set(ABLATION_TOGGLES)
    if unknown:
        raise ValueError(f"unknown ablation toggles {sorted(unknown)}; choose from {list(ABLATION_TOGGLES)}")
    axes = [t for t in ABLATION_TOGGLES if t in toggles and t != "rate_estimator"]
    rows = []
    for values in product((True, False), repeat=len(axes)):
        setting = dict(zip(axes, values))
        name = "+".join(a for a in axes if setting[a]) or "none"
        rows.append(("baseline" if not axes else name, setting))
    return rows


_TOGGLE_KEYS = {
    "extraction": "selector.extraction",
    "propagation": "selector.propagation",
    "pu_loss": "criterion.pu_loss",
    "tc_loss": "criterion.tc_loss",
}


@contextmanager
def _tagged(stage):
    try:
        yield
    except StageError:
        raise
    except STAGE_ERRORS as exc:
        raise StageError(stage, exc) from exc


def run_ablation(config, toggles):
    """Point and segment F1 for every toggle combination on the same data.

    The series, windows, noisy labels and embeddings are computed once and
    shared by all rows. Returns a list of dicts with ``variant``, the
    settings, ``f1_w`` (segment F1), ``f1_d`` (point F1) and
    ``f1_d_fixed_rate`` (point F1 without the rate estimator), all on the
    test split.
    """
    cfg = config.with_overrides({"pointdet.rate_estimator": True})
    with _tagged("ingest"):
        ds = load_series(cfg)
    with _tagged("window"):
        train_seg, test_seg = make_segments(cfg, ds)
    y = pu_targets(train_seg)
    with _tagged("embed"):
        enc = fit_encoder(cfg, train_seg.values, y)
        E_tr = enc.transform(train_seg.values)
        mean, scale = embedding_scaler(cfg, E_tr)
        E_tr = (E_tr - mean) / scale
        E_te = (enc.transform(test_seg.values) - mean) / scale
    truth = test_seg.point_labels.ravel()
    rows = []
    for name, setting in ablation_variants(toggles):
        vcfg = cfg.with_overrides({_TOGGLE_KEYS[k]: v for k, v in setting.items()})
        with _tagged(f"ablate:{name}"):
            selection = fit_selection(vcfg, E_tr, y)
            params, _ = fit_classifier(vcfg, E_tr, y, selection)
            det = detect(vcfg, params, enc, E_te, test_seg.values)
        rows.append(
            {
                "variant": name,
                **setting,
                "refined_unlabeled": int(selection.refined_unlabeled.size),
                "f1_w": prf(det.segment_labels, test_seg.true_labels).f1,
                "f1_d": prf(det.points.ravel(), truth).f1,
                "f1_d_fixed_rate": prf(det.points_fixed_rate.ravel(), truth).f1,
            }
        )
    return rows


def ablation_text(rows):
    cols = [c for c in ABLATION_TOGGLES if c in rows[0]]
    head = f"{'variant':<40}" + "".join(f"{c[:11]:>12}" for c in cols) + f"{'F1-W':>9}{'F1-D':>9}{'F1-D fixed':>12}"
    out = [head]
    for r in rows:
        flags = "".join(f"{('on' if r[c] else 'off'):>12}" for c in cols)
        out.append(f"{r['variant']:<40}{flags}{r['f1_w']:>9.4f}{r['f1_d']:>9.4f}{r['f1_d_fixed_rate']:>12.4f}")
    return "\n".join(out) + "\n"


def eval_only(pred_path, truth_path):
    """Metric report for two aligned single-column 0/1 files."""
    pred = read_binary_column(pred_path)
    truth = read_binary_column(truth_path)
    return evaluate(pred, truth)


def read_binary_column(path):
    """Read the last column of a CSV as 0/1 integers, skipping a header row."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            cell = row[-1].strip()
            try:
                v = int(float(cell))
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: {cell!r} is not 0 or 1") from None
            if v not in (0, 1):
                raise ValueError(f"{path}:{lineno}: {cell!r} is not 0 or 1")
            out.append(v)
    return np.asarray(out, dtype=np.int64)
