"""End-to-end procedure: select features, refit with regularization, forecast.

Stage 1 runs the greedy selection with unregularized inner fits, stage 2
re-estimates the selected model on the whole training set with the
regularized trainer, stage 3 loads the test data for the first time and
forecasts it. ``mode="logFM"`` swaps stage 2 for a plain FM fitted to
log-responses, exponentiated at forecast time.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .abgd import TrainConfig, TrainReport, descend, train
from .errors import ConfigError, DataError, SchemaError
from .loss import LossKind, RegularizerTable
from .metrics import EvaluationReport, TrainingDiagnostics, diagnostics, evaluate
from .model import FeatureConfig, ParameterSet, model_to_dict, predict
from .schema import TEST, TRAINING, Dataset, SchemaSpec, load_csv, partition_kfold
from .selection import SelectionConfig, SelectionResult, gfsfs

log = logging.getLogger(__name__)

MODES = ("EFM", "logFM")

# Defaults per loss: the published settings for the student-performance data
DEFAULTS = {
    LossKind.PES: {
        "train": {"eta": 4.95e-6, "max_iterations": 4000, "lambda_v": 1e-3, "lambda_w": 10.0, "sigma": 0.1, "f": 2},
        "selection": {"lambda_A": 0.005, "lambda_I": 0.10, "b": 3, "g": 2, "k": 5},
    },
    LossKind.ES: {
        "train": {"eta": 4.80e-10, "max_iterations": 5000, "lambda_v": 100.0, "lambda_w": 0.0, "sigma": 0.1, "f": 2},
        "selection": {"lambda_A": 1000.0, "lambda_I": 1000.0, "b": 3, "g": 2, "k": 5},
    },
}

_TRAIN_KEYS = {"eta", "max_iterations", "lambda_v", "lambda_w", "sigma", "f", "seed", "epsilon"}
_SELECTION_KEYS = {"lambda_A", "lambda_I", "b", "g", "k", "alpha", "seed", "eta", "max_iterations"}
_PIPELINE_KEYS = {"train_path", "test_path", "schema_path", "output_dir", "remap_unseen", "logfm_eta", "logfm_max_iterations"}
_TOP_KEYS = {"loss", "mode", "seed", "train", "selection", "pipeline"}


@dataclass(frozen=True)
class PipelineConfig:
    kind: LossKind
    train: TrainConfig
    selection: SelectionConfig
    mode: str = "EFM"
    train_path: str | None = None
    test_path: str | None = None
    schema_path: str | None = None
    output_dir: str | None = None
    remap_unseen: bool = False
    logfm_train: TrainConfig | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        """Build from the JSON layout ``{loss, mode, seed, train, selection, pipeline}``.

        Missing hyper-parameters fall back to the defaults of the chosen loss.
        """
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kind = LossKind.parse(d.get("loss", "PES"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        tr_in, sel_in, pl_in = d.get("train", {}), d.get("selection", {}), d.get("pipeline", {})
        for section, allowed, name in ((tr_in, _TRAIN_KEYS, "train"), (sel_in, _SELECTION_KEYS, "selection"),
                                       (pl_in, _PIPELINE_KEYS, "pipeline")):
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be an object")
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
        seed = int(d.get("seed", 0))
        tr = {**DEFAULTS[kind]["train"], **tr_in}
        sel = {**DEFAULTS[kind]["selection"], **sel_in}
        try:
            train_cfg = TrainConfig(
                eta=float(tr["eta"]),
                max_iterations=int(tr["max_iterations"]),
                reg=RegularizerTable(float(tr["lambda_v"]), float(tr["lambda_w"])),
                epsilon=tr.get("epsilon"),
                init_sigma=float(tr["sigma"]),
                seed=int(tr.get("seed", seed)),
                f=int(tr["f"]),
            )
            inner = replace(
                train_cfg,
                eta=float(sel.get("eta", train_cfg.eta)),
                max_iterations=int(sel.get("max_iterations", train_cfg.max_iterations)),
            )
            selection = SelectionConfig(
                train=inner,
                b=int(sel["b"]),
                g=int(sel["g"]),
                lambda_A=float(sel["lambda_A"]),
                lambda_I=float(sel["lambda_I"]),
                k=int(sel["k"]),
                alpha=float(sel.get("alpha", 0.05)),
                seed=int(sel.get("seed", seed)),
            )
            logfm = None
            if "logfm_eta" in pl_in or "logfm_max_iterations" in pl_in:
                logfm = replace(
                    train_cfg,
                    eta=float(pl_in.get("logfm_eta", train_cfg.eta)),
                    max_iterations=int(pl_in.get("logfm_max_iterations", train_cfg.max_iterations)),
                )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid hyper-parameter: {exc}") from None

        def _path(key):
            v = pl_in.get(key)
            if v is None:
                return None
            p = Path(v)
            return str(p if p.is_absolute() or base_dir is None else base_dir / p)

        return cls(
            kind=kind,
            train=train_cfg,
            selection=selection,
            mode=d.get("mode", "EFM"),
            train_path=_path("train_path"),
            test_path=_path("test_path"),
            schema_path=_path("schema_path"),
            output_dir=_path("output_dir"),
            remap_unseen=bool(pl_in.get("remap_unseen", False)),
            logfm_train=logfm,
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        p = Path(path)
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw, base_dir=p.parent)


# -- data access ------------------------------------------------------------------


def load_dataset(path, spec_path=None, role=TRAINING, schema=None, remap_unseen=False) -> Dataset:
    """Read an ingested dataset (``.json``) or a raw CSV with its schema spec."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if path.suffix.lower() == ".json":
        data = Dataset.load_json(path).with_role(role)
        if schema is not None and data.schema.fingerprint() != schema.fingerprint():
            raise SchemaError(f"{path}: encoded with a different schema than the training data")
        return data
    if spec_path is None:
        raise ConfigError(f"{path}: CSV input needs a schema spec")
    return load_csv(path, SchemaSpec.load(spec_path), role=role, schema=schema, remap_unseen=remap_unseen)


# -- results ------------------------------------------------------------------------


@dataclass
class PipelineResult:
    kind: LossKind
    mode: str
    schema: object
    params: ParameterSet
    selection: SelectionResult
    train_report: TrainReport
    training: TrainingDiagnostics
    evaluation: EvaluationReport | None
    forecasts: list[tuple[str, str, float, float]]
    events: list[str] = field(default_factory=list)

    @property
    def features(self) -> FeatureConfig:
        return self.selection.features

    def model_dict(self) -> dict:
        return model_to_dict(self.params, self.features, self.schema, loss=self.kind.value, mode=self.mode)

    def report_dict(self) -> dict:
        return {
            "loss": self.kind.value,
            "mode": self.mode,
            "features": self.features.to_dict(self.schema),
            "cv_errors": [float(e) for e in self.selection.cv.errors],
            "training": self.training.to_dict(),
            "test": self.evaluation.to_dict() if self.evaluation else None,
            "halvings": self.train_report.halvings,
        }

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "model": out / "model.json",
            "forecasts": out / "forecasts.csv",
            "report": out / "report.json",
            "selection": out / "selection.json",
            "trace": out / "training_trace.csv",
        }
        paths["model"].write_text(json.dumps(self.model_dict(), indent=1))
        write_forecasts(self.forecasts, paths["forecasts"])
        paths["report"].write_text(json.dumps(self.report_dict(), indent=1))
        self.selection.save_json(paths["selection"], self.schema)
        self.train_report.write_csv(paths["trace"])
        return paths


def write_forecasts(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item", "group", "actual", "forecast"])
        for item, group, actual, fc in rows:
            w.writerow([item, group, repr(float(actual)), repr(float(fc))])


def read_forecasts(path) -> tuple[dict, dict]:
    """Inverse of :func:`write_forecasts`: ``(forecasts, actuals)`` keyed by (item, group)."""
    fc, act = {}, {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"item", "group", "actual", "forecast"}
        if not need <= set(reader.fieldnames or []):
            raise DataError(f"{path}: expected columns {sorted(need)}")
        for n, rec in enumerate(reader):
            key = (rec["item"], rec["group"])
            if key in fc:
                raise DataError(f"{path}: duplicate key {key} on line {n + 2}")
            try:
                fc[key] = float(rec["forecast"])
                act[key] = float(rec["actual"])
            except ValueError:
                raise DataError(f"{path}: non-numeric value on line {n + 2}") from None
    return fc, act


# -- the procedure ------------------------------------------------------------------------


def fit_logfm(data: Dataset, features: FeatureConfig, kind, cfg: TrainConfig) -> TrainReport:
    """Plain FM on ``log d`` trained with the same adaptive descent.

    Under PES the percentage errors are taken on the log scale, which needs
    every response to differ from 1.
    """
    kind = LossKind.parse(kind)
    y = np.log(data.responses)
    if kind is LossKind.PES and np.any(np.abs(y) < 1e-12):
        raise DataError("log-scale percentage errors are undefined for responses equal to 1")
    rng = np.random.default_rng(cfg.seed)
    params = ParameterSet.initialize(data.schema, features, cfg.f, cfg.init_sigma, rng)
    return descend(data.levels, y, features, kind, cfg, params, link="identity")


def run_pipeline(
    cfg: PipelineConfig,
    train_data: Dataset | None = None,
    test_source: Callable[[], Dataset] | Dataset | None = None,
    write: bool = True,
) -> PipelineResult:
    """Run the three stages and (optionally) write the artifacts.

    ``test_source`` may be a dataset or a zero-argument loader; it is only
    touched in stage 3. Without it, the test path from the config is used.
    ``events`` on the result records the order of data accesses.
    """
    events: list[str] = []
    kind = cfg.kind

    if train_data is None:
        if cfg.train_path is None:
            raise ConfigError("no training data given")
        train_data = load_dataset(cfg.train_path, cfg.schema_path, TRAINING)
    events.append("load:train")
    if len(train_data) == 0:
        raise DataError("empty training set")

    events.append("stage1:start")
    selection = gfsfs(train_data, kind, cfg.selection)
    events.append("stage1:end")
    features = selection.features
    log.info("selected %s", features.describe(train_data.schema))

    events.append("stage2:start")
    if cfg.mode == "EFM":
        report = train(train_data, features, kind, cfg.train)
    else:
        report = fit_logfm(train_data, features, kind, cfg.logfm_train or cfg.train)
    params = report.final_params
    fitted = predict(params, features, train_data)
    training = diagnostics(fitted, train_data.responses)
    events.append("stage2:end")

    events.append("stage3:start")
    test = _resolve_test(cfg, test_source, train_data)
    evaluation, rows = None, []
    if test is not None:
        events.append("load:test")
        fc = predict(params, features, test)
        rows = [(k[0], k[1], float(a), float(f)) for k, a, f in zip(test.keys, test.responses, fc)]
        evaluation = evaluate({r[:2]: r[3] for r in rows}, {r[:2]: r[2] for r in rows})
    events.append("stage3:end")

    result = PipelineResult(kind, cfg.mode, train_data.schema, params, selection, report, training, evaluation,
                            rows, events)
    if write and cfg.output_dir:
        result.write(cfg.output_dir)
    return result


def _resolve_test(cfg, test_source, train_data):
    if callable(test_source):
        test = test_source()
    elif test_source is not None:
        test = test_source
    elif cfg.test_path is not None:
        test = load_dataset(cfg.test_path, cfg.schema_path, TEST, train_data.schema, cfg.remap_unseen)
    else:
        return None
    if test.schema.fingerprint() != train_data.schema.fingerprint():
        raise SchemaError("test data uses a different schema than the training data")
    return test


def run_logfm(cfg: PipelineConfig, train_data=None, test_source=None, write=True) -> PipelineResult:
    return run_pipeline(replace(cfg, mode="logFM"), train_data, test_source, write)


def run_cv_protocol(cfg: PipelineConfig, data: Dataset, k: int = 5, seed: int = 0) -> list[PipelineResult]:
    """Repeat the procedure with each of ``k`` random folds as the test set."""
    part = partition_kfold(data, k, seed)
    out = []
    for i in range(k):
        tr = data.subset(part.complement_rows(i), role=TRAINING)
        te = data.subset(part.fold_rows(i), role=TEST)
        out.append(run_pipeline(cfg, tr, te, write=False))
    return out
