"""Run configuration, bundle persistence and the offline training pipeline."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .encoding import AGGREGATION, FeatureSpec, LogContext, build_spec, encode_bucket
from .errors import BundleMismatch, ConfigError, DegenerateTargets, SpecMismatch
from .evaluation import temporal_split
from .event_log import CsvSchema, EventLog, LabeledLog, label_outcome, parse_csv, remaining_time_targets, rule_from_dict
from .learner import CLASSIFY, REGRESS, GbtModel, TrainConfig, train
from .prefixing import BucketingStrategy, assign_buckets, generate_prefixes

log = logging.getLogger(__name__)

BUNDLE_VERSION = 1


@dataclass(frozen=True)
class LogConfig:
    path: str = "log.csv"
    case_id: str = "case_id"
    activity: str = "activity"
    timestamp: str = "timestamp"
    resource: str | None = None
    case_attributes: tuple[str, ...] = ()
    timestamp_format: str = "%Y-%m-%d %H:%M:%S"
    delimiter: str = ","

    def schema(self) -> CsvSchema:
        d = asdict(self)
        d.pop("path")
        return CsvSchema.from_dict(d)


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "outcome"  # outcome | remaining_time
    rule: dict | None = None


@dataclass(frozen=True)
class EncodingConfig:
    kind: str = AGGREGATION
    engineered: bool = False


@dataclass(frozen=True)
class LearnerConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    subsample_ratio: float = 1.0


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8


@dataclass(frozen=True)
class ExplainConfig:
    n_samples: int = 5000
    kernel_width: float | None = None
    k_features: int = 10
    grid_size: int = 20
    surrogate: str = "tree"
    surrogate_depth: int = 3


@dataclass(frozen=True)
class AuditConfig:
    leakage_threshold: float = 0.7
    query_prefix_len: int | None = None
    top_k: int = 10


@dataclass(frozen=True)
class RunConfig:
    log: LogConfig = field(default_factory=LogConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    bucketing: BucketingStrategy = field(default_factory=BucketingStrategy)
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    train: LearnerConfig = field(default_factory=LearnerConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    seed: int = 0
    base_dir: str = field(default=".", compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "RunConfig":
        sections = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        types = {
            "log": LogConfig, "task": TaskConfig, "bucketing": BucketingStrategy,
            "encoding": EncodingConfig, "train": LearnerConfig, "split": SplitConfig,
            "explain": ExplainConfig, "audit": AuditConfig,
        }
        for key, value in d.items():
            if key not in sections or key == "base_dir":
                raise ConfigError(f"unknown config section {key!r}")
            if key in types:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                known = {f.name for f in fields(types[key])}
                extra = set(value) - known
                if extra:
                    raise ConfigError(f"unknown keys in {key!r}: {sorted(extra)}")
                if key == "log" and "case_attributes" in value:
                    value = {**value, "case_attributes": tuple(value["case_attributes"])}
                try:
                    kwargs[key] = types[key](**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"section {key!r}: {exc}") from exc
            else:
                kwargs[key] = value
        cfg = cls(**kwargs, base_dir=base_dir)
        if cfg.task.kind not in ("outcome", "remaining_time"):
            raise ConfigError(f"unknown task kind {cfg.task.kind!r}")
        if cfg.task.kind == "outcome" and not cfg.task.rule:
            raise ConfigError("outcome task needs a labeling rule")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=str(path.parent))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["log"]["case_attributes"] = list(d["log"]["case_attributes"])
        return d

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else replace(self, seed=seed)

    @property
    def log_path(self) -> Path:
        p = Path(self.log.path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def learner_task(self) -> str:
        return CLASSIFY if self.task.kind == "outcome" else REGRESS

    def train_config(self) -> TrainConfig:
        return TrainConfig(**asdict(self.train), seed=self.seed, task=self.learner_task)

    def training_hash(self) -> str:
        """Hash of everything that determines a bundle's contents."""
        d = self.to_dict()
        d["log"].pop("path")
        for k in ("explain", "audit"):
            d.pop(k)
        return _sha(json.dumps(d, sort_keys=True))


def _sha(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


# --- data preparation ---------------------------------------------------------


def load_log(config: RunConfig) -> EventLog:
    with open(config.log_path, "rb") as fh:
        return parse_csv(fh, config.log.schema())


def label_log(config: RunConfig, event_log: EventLog) -> LabeledLog:
    if config.task.kind == "remaining_time":
        return remaining_time_targets(event_log)
    try:
        rule = rule_from_dict(config.task.rule)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad labeling rule: {exc}") from exc
    return label_outcome(event_log, rule)


@dataclass
class Prepared:
    event_log: EventLog
    labeled: LabeledLog
    train: LabeledLog
    test: LabeledLog


def prepare(config: RunConfig) -> Prepared:
    event_log = load_log(config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        labeled = label_log(config, event_log)
    train_log, test_log = temporal_split(labeled, config.split.train_fraction)
    return Prepared(event_log, labeled, train_log, test_log)


# --- bundles --------------------------------------------------------------------


@dataclass
class Bundle:
    config: RunConfig
    models: dict[str, GbtModel]

    @property
    def strategy(self) -> BucketingStrategy:
        return self.config.bucketing

    @property
    def engineered(self) -> bool:
        return self.config.encoding.engineered

    @property
    def task(self) -> str:
        return self.config.task.kind

    def files(self) -> dict[str, str]:
        out = {"config.json": json.dumps(self.config.to_dict(), sort_keys=True, indent=1) + "\n"}
        for b, m in sorted(self.models.items()):
            out[f"buckets/{b}/spec.json"] = m.spec.to_json() + "\n"
            out[f"buckets/{b}/model.json"] = m.to_json() + "\n"
        return out

    def manifest(self) -> dict:
        files = self.files()
        return {
            "format_version": BUNDLE_VERSION,
            "training_hash": self.config.training_hash(),
            "buckets": {
                b: {"spec_hash": m.spec.content_hash(), "n_trees": len(m.trees), "degenerate": m.degenerate}
                for b, m in sorted(self.models.items())
            },
            "files": {k: _sha(v) for k, v in sorted(files.items())},
        }

    def save(self, directory) -> str:
        """Write the bundle; returns its content hash (hash of the manifest)."""
        root = Path(directory)
        for rel, text in self.files().items():
            p = root / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text)
        manifest = json.dumps(self.manifest(), sort_keys=True, indent=1) + "\n"
        (root / "manifest.json").write_text(manifest)
        return _sha(manifest)

    @classmethod
    def load(cls, directory, expect: RunConfig | None = None) -> "Bundle":
        root = Path(directory)
        if not (root / "manifest.json").exists():
            raise BundleMismatch(f"{root} is not a bundle (no manifest.json)")
        manifest = json.loads((root / "manifest.json").read_text())
        if manifest.get("format_version") != BUNDLE_VERSION:
            raise BundleMismatch("unsupported bundle format")
        for rel, digest in manifest["files"].items():
            p = root / rel
            if not p.exists() or _sha(p.read_text()) != digest:
                raise BundleMismatch(f"bundle file {rel} is missing or was altered")
        config = RunConfig.from_dict(json.loads((root / "config.json").read_text()))
        if config.training_hash() != manifest["training_hash"]:
            raise BundleMismatch("bundle config does not match its manifest")
        if expect is not None and expect.training_hash() != manifest["training_hash"]:
            raise BundleMismatch("config differs from the one the bundle was trained with")
        models = {}
        for b, meta in manifest["buckets"].items():
            spec = FeatureSpec.from_dict(json.loads((root / f"buckets/{b}/spec.json").read_text()))
            if spec.content_hash() != meta["spec_hash"]:
                raise BundleMismatch(f"feature spec of bucket {b} was altered")
            try:
                models[b] = GbtModel.from_json((root / f"buckets/{b}/model.json").read_text(), spec)
            except SpecMismatch as exc:
                raise BundleMismatch(str(exc)) from exc
        if expect is not None:
            config = replace(config, base_dir=expect.base_dir, log=replace(config.log, path=expect.log.path))
        return cls(config, models)


def bucket_matrices(config: RunConfig, train_log: LabeledLog, specs: dict[str, FeatureSpec] | None = None):
    """Training buckets with their encoded matrices: {bucket_id: (bucket, matrix)}.

    Specs are built from the buckets unless given (e.g. loaded from a bundle).
    """
    pairs = generate_prefixes(train_log, config.bucketing)
    buckets = assign_buckets(pairs, config.bucketing)
    context = LogContext.from_traces(train_log.traces) if config.encoding.engineered else None
    out = {}
    for b in buckets:
        if specs is not None:
            if b.bucket_id not in specs:
                continue
            spec = specs[b.bucket_id]
        else:
            spec = build_spec(b, config.encoding.kind, config.encoding.engineered, context)
        out[b.bucket_id] = (b, encode_bucket(b, spec, context))
    return out


def train_bundle(config: RunConfig, train_log: LabeledLog) -> Bundle:
    models = {}
    tc = config.train_config()
    for bid, (_, matrix) in bucket_matrices(config, train_log).items():
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateTargets)
            model = train(matrix, tc)
        for w in caught:
            log.warning("bucket %s: %s", bid, w.message)
        models[bid] = model
        log.info("bucket %s: %d rows x %d features, %d trees", bid, *matrix.shape, len(model.trees))
    return Bundle(config, models)


def env_log_level() -> int:
    return getattr(logging, os.environ.get("PROCSIGHT_LOG_LEVEL", "WARNING").upper(), logging.WARNING)
