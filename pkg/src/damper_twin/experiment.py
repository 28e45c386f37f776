"""Ablation study: which preparation stages does the regressor need?

Every configuration sees the same held-out test runs, scaled with the state
fitted on its training partition and otherwise untouched, and trains a fresh
model from the same seed, so metric differences come from data preparation
alone.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import PreparedDataset, RawDataset, apply_scaling, fit_scaling, split_by_runs
from .metrics import CSV_HEADER, MetricReport, evaluate
from .mlp import MlpConfig, MlpModel, init_model, train
from .pipeline import STAGES, PipelineConfig, StageLog, run_pipeline, write_stage_log
from .plant import PlantParams, generate_program, params_from_dict, program_from_list

log = logging.getLogger(__name__)

DEFAULT_CONFIGURATIONS = (
    ("full", ("indexing", "augmentation", "oversampling")),
    ("no-oversample", ("indexing", "augmentation")),
    ("no-augment", ("indexing",)),
    ("raw", ()),
)
DEFAULT_HELD_OUT = (3, 7, 11)  # one run per driving speed: 10, 15, 20 km/h


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AblationSpec:
    configurations: tuple = DEFAULT_CONFIGURATIONS
    mlp: MlpConfig = field(default_factory=MlpConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    held_out_runs: tuple = DEFAULT_HELD_OUT

    def __post_init__(self):
        configs = tuple((str(n), tuple(s)) for n, s in self.configurations)
        object.__setattr__(self, "configurations", configs)
        names = [n for n, _ in configs]
        if len(set(names)) != len(names):
            raise ConfigError(f"configuration names must be unique: {names}")
        if "full" not in names:
            raise ConfigError("a 'full' configuration is required")
        for name, stages in configs:
            bad = set(stages) - set(STAGES)
            if bad:
                raise ConfigError(f"configuration {name!r}: unknown stage(s) {sorted(bad)}")
        if not self.held_out_runs:
            raise ConfigError("held_out_runs must not be empty")


@dataclass(frozen=True)
class RunConfig:
    """Everything a study needs, as read from one JSON document."""

    seed: int = 0
    plant: PlantParams = field(default_factory=PlantParams)
    program: tuple = ()
    ablation: AblationSpec = field(default_factory=AblationSpec)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        known = {"seed", "plant", "program", "held_out_runs", "indexing", "augmentation",
                 "oversampling", "mlp", "configurations"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        try:
            configurations = DEFAULT_CONFIGURATIONS
            if "configurations" in doc:
                configurations = [(c["name"], c.get("stages", [])) for c in doc["configurations"]]
            spec = AblationSpec(
                configurations=configurations,
                mlp=MlpConfig.from_dict(doc.get("mlp")),
                pipeline=PipelineConfig.from_dict(
                    {k: doc[k] for k in ("indexing", "augmentation", "oversampling") if k in doc}
                ),
                held_out_runs=tuple(doc.get("held_out_runs", DEFAULT_HELD_OUT)),
            )
            return cls(
                seed=int(doc.get("seed", 0)),
                plant=params_from_dict(doc.get("plant")),
                program=tuple(program_from_list(doc.get("program"))),
                ablation=spec,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    @classmethod
    def default(cls) -> "RunConfig":
        return cls.from_dict({})

    def generate(self) -> RawDataset:
        return generate_program(list(self.program), self.plant, self.seed)


@dataclass
class AblationRow:
    name: str
    stages: tuple
    metrics: MetricReport
    stage_log: list[StageLog]
    test_digest: str
    model: MlpModel
    loss_history: list[float]
    predictions_path: Optional[Path] = None


@dataclass
class AblationReport:
    rows: list[AblationRow]

    def __getitem__(self, name: str) -> AblationRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def r2(self) -> dict:
        return {row.name: row.metrics.r2 for row in self.rows}

    def to_csv(self) -> str:
        lines = [CSV_HEADER] + [row.metrics.csv_row(row.name) for row in self.rows]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _digest(data: PreparedDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.X).tobytes())
    h.update(np.ascontiguousarray(data.y).tobytes())
    return h.hexdigest()


def dump_predictions(model: MlpModel, test: PreparedDataset, path) -> None:
    """Write ``index,y_true,y_pred`` rows for plotting test traces."""
    pred = model.predict(test.X)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("index,y_true,y_pred\n")
        for i, (yt, yp) in enumerate(zip(test.y, pred)):
            fh.write(f"{i},{float(yt)!r},{float(yp)!r}\n")


def run_ablation(spec: AblationSpec, data: RawDataset, out_dir=None) -> AblationReport:
    """Train and score one model per configuration of ``spec``.

    If ``out_dir`` is given, per-configuration stage logs and prediction dumps
    are written there.
    """
    train_raw, test_raw = split_by_runs(data, spec.held_out_runs)
    scaling = fit_scaling(train_raw)
    test = apply_scaling(test_raw, scaling)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        scaling.save(out_dir / "scaling.json")

    rows = []
    for name, stages in spec.configurations:
        try:
            prepared, stage_log = run_pipeline(train_raw, stages, spec.pipeline, scaling)
            model, history = train(init_model(spec.mlp), prepared, spec.mlp)
            metrics = evaluate(test.y, model.predict(test.X))
        except Exception as exc:
            raise RuntimeError(f"configuration {name!r} failed: {exc}") from exc
        log.info("%s: %d training rows, r2=%.4f mse=%.5f mae=%.5f",
                 name, len(prepared), metrics.r2, metrics.mse, metrics.mae)
        row = AblationRow(name, stages, metrics, stage_log, _digest(test), model, history)
        if out_dir is not None:
            row.predictions_path = out_dir / f"predictions_{name}.csv"
            dump_predictions(model, test, row.predictions_path)
            write_stage_log(stage_log, out_dir / f"stages_{name}.csv")
        rows.append(row)
    return AblationReport(rows)
