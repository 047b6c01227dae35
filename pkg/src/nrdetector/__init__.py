"""Two-stage time-series anomaly detection from noisy segment-level labels.

Stage one learns a segment classifier from a few labeled anomalous windows
and many unlabeled ones (positive-unlabeled learning), after a graph-based
selector cleans the unlabeled pool. Stage two ranks the points of windows
predicted anomalous and keeps an estimated fraction of them.
"""

__version__ = "0.1.0"

from .classifier import PUSegmentClassifier
from .config import PROFILES, PipelineConfig, build_config
from .dataset import (
    NoiseSpec,
    SegmentCollection,
    SynthConfig,
    TimeSeriesDataset,
    inject_pu_noise,
    load_csv,
    synth_generate,
    train_test_split,
    window,
)
from .encoder import DilatedCNNEncoder
from .exceptions import NRDetectorError
from .metrics import evaluate, f1_pa_k_auc, generalization_bound, pa_percent_k, point_adjust, prf
from .pipeline import NRDetector, Pipeline, run_ablation, run_pipeline
from .pointdet import PointDetector, estimate_clean_rate
from .selector import SampleSelector

__all__ = [
    "DilatedCNNEncoder",
    "NRDetector",
    "NRDetectorError",
    "NoiseSpec",
    "PROFILES",
    "PUSegmentClassifier",
    "Pipeline",
    "PipelineConfig",
    "PointDetector",
    "SampleSelector",
    "SegmentCollection",
    "SynthConfig",
    "TimeSeriesDataset",
    "build_config",
    "estimate_clean_rate",
    "evaluate",
    "f1_pa_k_auc",
    "generalization_bound",
    "inject_pu_noise",
    "load_csv",
    "pa_percent_k",
    "point_adjust",
    "prf",
    "run_ablation",
    "run_pipeline",
    "synth_generate",
    "train_test_split",
    "window",
]
