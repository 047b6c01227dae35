"""Pipeline configuration: typed sections, named profiles and a flat file format.

A configuration file holds one ``section.key = value`` assignment per line;
``#`` starts a comment. Unknown keys are errors. Values are resolved in the
order defaults, profile, file, command-line overrides::

    run.seed = 7
    data.source = synth
    criterion.pi_p = 0.25
    train.hidden = 256, 256, 128, 128
"""

import hashlib
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .exceptions import ConfigError


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    profile: str = "synth"


@dataclass(frozen=True)
class DataSection:
    source: str = "synth"
    path: str = ""
    has_labels: bool = True
    normalize: bool = True
    window: int = 100
    train_ratio: float = 0.7


@dataclass(frozen=True)
class SynthSection:
    D: int = 8
    T_total: int = 50_000
    anomaly_rate: float = 0.1
    kinds: tuple = ("spike", "level_shift", "frequency_change")
    min_length: int = 20
    max_length: int = 80
    magnitude: float = 3.0
    noise_scale: float = 0.3
    ar_coef: float = 0.5


@dataclass(frozen=True)
class NoiseSection:
    e1: float = 0.6


@dataclass(frozen=True)
class EncoderSection:
    mode: str = "dicnn"
    d: int = 64
    n_layers: int = 7
    kernel_width: int = 2
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    balanced: bool = True
    standardize: bool = True


@dataclass(frozen=True)
class SelectorSection:
    extraction: bool = True
    propagation: bool = True
    k: int = 5
    beta: float = 0.05
    l_max: int = 4
    m: int = 4
    lambda0: float = 0.32
    margin: float = 0.0
    clamp_negatives: bool = True


@dataclass(frozen=True)
class CriterionSection:
    pu_loss: bool = True
    tc_loss: bool = True
    pi_p: float = 0.25
    lam: float = 1.0
    lam1: float = 8e-5
    lam2: float = 8e-5


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    threshold: float = 0.5
    hidden: tuple = (256, 256, 128, 128)


@dataclass(frozen=True)
class PointdetSection:
    k: float = 0.5
    score_source: str = "classifier"
    rate_estimator: bool = True
    n_neighbors: int = 16
    max_points: int = 20_000


@dataclass(frozen=True)
class EvalSection:
    delta: float = 0.05
    mismatch: float = 0.0


SECTIONS = {
    "run": RunSection,
    "data": DataSection,
    "synth": SynthSection,
    "noise": NoiseSection,
    "encoder": EncoderSection,
    "selector": SelectorSection,
    "criterion": CriterionSection,
    "train": TrainSection,
    "pointdet": PointdetSection,
    "eval": EvalSection,
}

# prior / pseudo anomaly rate per dataset
PROFILES = {
    "emg": {"criterion.pi_p": 0.25, "pointdet.k": 0.65},
    "smd": {"criterion.pi_p": 0.8, "pointdet.k": 0.15},
    "psm": {"criterion.pi_p": 0.4, "pointdet.k": 0.6},
    "msl": {"criterion.pi_p": 0.5, "pointdet.k": 0.8},
    "smap": {"criterion.pi_p": 0.5, "pointdet.k": 0.9},
    # desk-scale benchmark: untrained conv features, prior near the positive
    # rate of the refined unlabeled set, encoder point scores for ranking
    "synth": {
        "data.source": "synth",
        "encoder.mode": "random",
        "encoder.epochs": 50,
        "encoder.learning_rate": 1e-2,
        "criterion.pi_p": 0.1,
        "pointdet.k": 0.5,
        "pointdet.score_source": "encoder",
    },
}


@dataclass(frozen=True)
class PipelineConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    synth: SynthSection = field(default_factory=SynthSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    selector: SelectorSection = field(default_factory=SelectorSection)
    criterion: CriterionSection = field(default_factory=CriterionSection)
    train: TrainSection = field(default_factory=TrainSection)
    pointdet: PointdetSection = field(default_factory=PointdetSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        _check(self)

    @property
    def seed(self):
        return self.run.seed

    def to_flat(self):
        """Ordered ``{"section.key": value}`` dict of every setting."""
        flat = {}
        for name in SECTIONS:
            section = getattr(self, name)
            for f in fields(section):
                flat[f"{name}.{f.name}"] = getattr(section, f.name)
        return flat

    def to_text(self):
        return "".join(f"{k} = {format_value(v)}\n" for k, v in self.to_flat().items())

    def fingerprint(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, overrides):
        """New config with ``{"section.key": value}`` overrides applied.

        Values may be strings (parsed by field type) or already typed.
        """
        updates = {}
        for key, raw in overrides.items():
            section_name, fname = _split_key(key)
            ftype = _field_types(SECTIONS[section_name])[fname]
            value = parse_value(raw, ftype, key) if isinstance(raw, str) else _coerce(raw, ftype, key)
            updates.setdefault(section_name, {})[fname] = value
        # validated once, after every override is in place
        return replace(self, **{name: replace(getattr(self, name), **kv) for name, kv in updates.items()})


def _field_types(cls):
    # every section field has a plain default whose type is the field type
    return {f.name: type(f.default) for f in fields(cls)}


def _split_key(key):
    if key.count(".") != 1:
        raise ConfigError(f"config key {key!r} must look like section.key")
    section_name, fname = key.split(".")
    if section_name not in SECTIONS:
        raise ConfigError(f"unknown config section {section_name!r} in {key!r}")
    if fname not in _field_types(SECTIONS[section_name]):
        raise ConfigError(f"unknown config key {key!r}")
    return section_name, fname


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    return str(v)


def parse_value(text, ftype, key="value"):
    text = text.strip()
    try:
        if ftype is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if ftype is int:
            return int(text.replace("_", ""))
        if ftype is float:
            return float(text)
        if ftype is tuple:
            parts = [p.strip() for p in text.split(",") if p.strip()]
            return tuple(int(p) if p.lstrip("-").isdigit() else p for p in parts)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {ftype.__name__}") from None


def _coerce(value, ftype, key):
    if ftype is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if ftype is tuple and isinstance(value, list):
        return tuple(value)
    if not isinstance(value, ftype) or (ftype is int and isinstance(value, bool)):
        raise ConfigError(f"{key}: expected {ftype.__name__}, got {value!r}")
    return value


def _check(cfg):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.run.profile in PROFILES, f"unknown profile {cfg.run.profile!r}; choose from {sorted(PROFILES)}")
    need(cfg.data.source in ("synth", "csv"), "data.source must be synth or csv")
    need(cfg.data.source != "csv" or cfg.data.path, "data.path is required when data.source = csv")
    need(cfg.data.window >= 2, "data.window must be >= 2")
    need(0 < cfg.data.train_ratio < 1, "data.train_ratio must lie in (0, 1)")
    need(0 <= cfg.noise.e1 < 1, "noise.e1 must lie in [0, 1)")
    need(cfg.encoder.mode in ("dicnn", "random", "identity"), "encoder.mode must be dicnn, random or identity")
    need(0 < cfg.criterion.pi_p < 1, "criterion.pi_p must lie in (0, 1)")
    need(cfg.train.batch_size >= 2, "train.batch_size must be >= 2")
    need(0 < cfg.train.threshold < 1, "train.threshold must lie in (0, 1)")
    need(0 < cfg.pointdet.k < 1, "pointdet.k must lie in (0, 1)")
    need(cfg.pointdet.score_source in ("classifier", "encoder"), "pointdet.score_source must be classifier or encoder")
    need(cfg.pointdet.n_neighbors >= 2, "pointdet.n_neighbors must be >= 2")
    need(0 < cfg.eval.delta < 1, "eval.delta must lie in (0, 1)")


def parse_config_text(text, source="<config>"):
    """Parse flat ``section.key = value`` lines into an ordered dict of strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        _split_key(key)
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def build_config(path: Optional[str] = None, profile: Optional[str] = None, overrides=None):
    """Resolve defaults, profile, file and overrides into a :class:`PipelineConfig`.

    The profile comes from ``profile`` if given, else from the file's
    ``run.profile``, else ``synth``.
    """
    file_values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                file_values = parse_config_text(fh.read(), str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    overrides = dict(overrides or {})
    name = profile or overrides.get("run.profile") or file_values.get("run.profile") or "synth"
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    cfg = PipelineConfig().with_overrides(PROFILES[name])
    cfg = cfg.with_overrides(file_values).with_overrides(overrides)
    return cfg.with_overrides({"run.profile": name})
