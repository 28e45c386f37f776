"""Training-data preparation: indexing, Gaussian augmentation and histogram
oversampling on top of min-max scaling.

Each stage is a pure function of its input and an explicit config; random
stages draw from a generator seeded by that config only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import (
    AUGMENTED, ORIGINAL, OVERSAMPLED, PreparedDataset, RawDataset, ScalingState,
    apply_scaling,
)

STAGES = ("indexing", "augmentation", "oversampling")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class IndexingConfig:
    threshold: float = 0.08  # mm on |delta_displacement|

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("indexing threshold must be > 0")


@dataclass(frozen=True)
class AugmentationConfig:
    mu: float = 0.0
    sigma: float = 0.05
    seed: int = 1

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


@dataclass(frozen=True)
class OversamplingConfig:
    n_bins: int = 20
    seed: int = 2

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")


@dataclass(frozen=True)
class PipelineConfig:
    indexing: IndexingConfig = field(default_factory=IndexingConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    oversampling: OversamplingConfig = field(default_factory=OversamplingConfig)

    @classmethod
    def from_dict(cls, doc: Optional[dict]) -> "PipelineConfig":
        doc = doc or {}
        return cls(
            IndexingConfig(**doc.get("indexing", {})),
            AugmentationConfig(**doc.get("augmentation", {})),
            OversamplingConfig(**doc.get("oversampling", {})),
        )


def index_filter(data: PreparedDataset, raw_targets, cfg: IndexingConfig) -> PreparedDataset:
    """Keep the examples whose native target magnitude reaches the threshold.

    The y-indices that pass are stored first and the x-rows are then taken at
    exactly those indices, so pairs stay aligned and in order.
    """
    raw_targets = np.asarray(raw_targets, dtype=float)
    if raw_targets.shape != (len(data),):
        raise PipelineError(
            f"raw_targets has {raw_targets.size} entries for {len(data)} examples"
        )
    kept = np.flatnonzero(np.abs(raw_targets) >= cfg.threshold)
    if kept.size == 0:
        raise PipelineError(
            f"indexing threshold {cfg.threshold:g} mm removes every example "
            f"(max |delta| = {np.abs(raw_targets).max():g} mm)"
        )
    return data.take(kept)


def augment_gaussian(data: PreparedDataset, cfg: AugmentationConfig) -> PreparedDataset:
    """Append one noisy replica of every example.

    Noise ~ N(mu, sigma^2) is drawn independently for each feature and for the
    target of each replica.
    """
    if len(data) == 0:
        raise PipelineError("cannot augment an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    noise = rng.normal(cfg.mu, cfg.sigma, size=(len(data), data.X.shape[1] + 1))
    replica = PreparedDataset(
        data.X + noise[:, :-1],
        data.y + noise[:, -1],
        np.full(len(data), AUGMENTED, dtype=np.int8),
        data.source_index.copy(),
    )
    return PreparedDataset.concat([data, replica])


def histogram_bins(y: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width bin index of each target over ``[min(y), max(y)]``."""
    lo, hi = float(y.min()), float(y.max())
    if hi == lo:
        return np.zeros(len(y), dtype=np.int64)
    idx = np.floor((y - lo) / (hi - lo) * n_bins).astype(np.int64)
    return np.clip(idx, 0, n_bins - 1)


def oversample_histogram(data: PreparedDataset, cfg: OversamplingConfig) -> PreparedDataset:
    """Resample every non-empty target bin up to the fullest bin's count.

    Replicas are drawn with replacement, uniformly within a bin, and appended
    after all original examples. Empty bins stay empty.
    """
    if len(data) == 0:
        raise PipelineError("cannot oversample an empty dataset")
    bins = histogram_bins(data.y, cfg.n_bins)
    counts = np.bincount(bins, minlength=cfg.n_bins)
    target = counts.max()
    rng = np.random.default_rng(cfg.seed)
    picks = []
    for b in range(cfg.n_bins):
        deficit = target - counts[b]
        if counts[b] == 0 or deficit == 0:
            continue
        members = np.flatnonzero(bins == b)
        picks.append(members[rng.integers(0, members.size, size=deficit)])
    if not picks:
        return data
    replicas = data.take(np.concatenate(picks))
    replicas = PreparedDataset(
        replicas.X, replicas.y,
        np.full(len(replicas), OVERSAMPLED, dtype=np.int8),
        replicas.source_index,
    )
    return PreparedDataset.concat([data, replicas])


@dataclass(frozen=True)
class StageLog:
    stage: str
    rows_in: int
    rows_out: int


def run_pipeline(
    raw: RawDataset,
    stages,
    configs: PipelineConfig,
    scaling: ScalingState,
) -> tuple[PreparedDataset, list[StageLog]]:
    """Scale, then index, augment and oversample in that fixed order.

    ``stages`` is either a mapping ``{stage: bool}`` or an iterable of the
    enabled stage names. Disabled stages pass data through unchanged but are
    still logged.
    """
    enabled = _enabled_stages(stages)
    data = apply_scaling(raw, scaling)
    log = [StageLog("scale", len(raw), len(data))]

    steps = (
        ("indexing", lambda d: index_filter(d, raw.delta_displacement[d.source_index], configs.indexing)),
        ("augmentation", lambda d: augment_gaussian(d, configs.augmentation)),
        ("oversampling", lambda d: oversample_histogram(d, configs.oversampling)),
    )
    for name, step in steps:
        before = len(data)
        if name in enabled:
            data = step(data)
        log.append(StageLog(name, before, len(data)))
    return data, log


def _enabled_stages(stages) -> set:
    if isinstance(stages, dict):
        enabled = {k for k, v in stages.items() if v}
        names = set(stages)
    else:
        enabled = names = set(stages)
    unknown = names - set(STAGES)
    if unknown:
        raise PipelineError(f"unknown stage(s): {sorted(unknown)}; choose from {', '.join(STAGES)}")
    return enabled


def write_stage_log(log: list[StageLog], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stage", "rows_in", "rows_out"])
        for entry in log:
            writer.writerow([entry.stage, entry.rows_in, entry.rows_out])


# keep provenance constants importable from here for callers of the stages
__all__ = [
    "AugmentationConfig", "IndexingConfig", "OversamplingConfig", "PipelineConfig",
    "PipelineError", "StageLog", "STAGES", "ORIGINAL", "AUGMENTED", "OVERSAMPLED",
    "index_filter", "augment_gaussian", "oversample_histogram", "histogram_bins",
    "run_pipeline", "write_stage_log",
]
