"""Raw and prepared data containers, CSV persistence, run-wise splitting and
min-max scaling.

Raw sensor data is held column-wise in numpy arrays; ``RawDataset.records``
materialises the row view when it is needed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SAMPLE_STEP = 0.001  # s, 1000 Hz sensor rate
I_BOUNDS = (0.0, 1.6)  # A
V_BOUNDS = (0.0, 25.0)  # km/h

CSV_COLUMNS = ("t", "run_id", "V", "I", "displacement", "delta_displacement")
FEATURES = ("V", "I", "displacement")
TARGET = "delta_displacement"
SCALED_COLUMNS = FEATURES + (TARGET,)

ORIGINAL, AUGMENTED, OVERSAMPLED = 0, 1, 2
PROVENANCE_NAMES = ("original", "augmented", "oversample-replica")

# relative tolerance on the 1 ms time step and on recomputed deltas
_STEP_RTOL = 1e-6
_DELTA_ATOL = 1e-9


class DatasetError(ValueError):
    """Raised for malformed, empty or inconsistent datasets."""


@dataclass(frozen=True)
class RawRecord:
    t: float
    V: float
    I: float
    displacement: float
    delta_displacement: float
    run_id: int


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Time-stamped sensor rows, grouped contiguously by test run.

    Parameters
    ----------
    t, V, I, displacement, delta_displacement : np.ndarray
        Float columns in s, km/h, A, mm and mm.
    run_id : np.ndarray
        Integer test-run identifier per row.
    """

    t: np.ndarray
    run_id: np.ndarray
    V: np.ndarray
    I: np.ndarray
    displacement: np.ndarray
    delta_displacement: np.ndarray

    feature_names = FEATURES
    target_name = TARGET

    def __post_init__(self):
        n = len(self.t)
        for name in CSV_COLUMNS:
            col = getattr(self, name)
            if not isinstance(col, np.ndarray) or col.ndim != 1 or len(col) != n:
                raise DatasetError(f"column {name!r} must be a 1-d array of length {n}")
            col.setflags(write=False)
        validate(self)

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_columns(cls, **columns) -> "RawDataset":
        missing = set(CSV_COLUMNS) - set(columns)
        if missing:
            raise DatasetError(f"missing columns: {sorted(missing)}")
        arrays = {
            name: np.array(columns[name], dtype=np.int64 if name == "run_id" else float)
            for name in CSV_COLUMNS
        }
        return cls(**arrays)

    @classmethod
    def from_records(cls, records: Iterable[RawRecord]) -> "RawDataset":
        records = list(records)
        return cls.from_columns(
            **{name: [getattr(r, name) for r in records] for name in CSV_COLUMNS}
        )

    @classmethod
    def concat(cls, parts: Sequence["RawDataset"]) -> "RawDataset":
        if not parts:
            raise DatasetError("empty dataset")
        return cls.from_columns(
            **{name: np.concatenate([getattr(p, name) for p in parts]) for name in CSV_COLUMNS}
        )

    @property
    def records(self) -> list[RawRecord]:
        return [
            RawRecord(float(t), float(v), float(i), float(d), float(dd), int(r))
            for t, r, v, i, d, dd in zip(
                self.t, self.run_id, self.V, self.I, self.displacement, self.delta_displacement
            )
        ]

    @property
    def run_ids(self) -> list[int]:
        """Run identifiers in order of first appearance."""
        _, first = np.unique(self.run_id, return_index=True)
        return [int(self.run_id[i]) for i in sorted(first)]

    def features(self) -> np.ndarray:
        return np.column_stack([getattr(self, name) for name in FEATURES])

    def select(self, mask: np.ndarray) -> "RawDataset":
        return RawDataset.from_columns(**{name: getattr(self, name)[mask] for name in CSV_COLUMNS})

    def equals(self, other: "RawDataset") -> bool:
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in CSV_COLUMNS)


def validate(data: RawDataset) -> None:
    """Check the per-record and per-run invariants, raising DatasetError."""
    n = len(data.t)
    if n == 0:
        raise DatasetError("empty dataset")
    for name in CSV_COLUMNS[2:] + ("t",):
        col = getattr(data, name)
        if not np.all(np.isfinite(col)):
            row = int(np.flatnonzero(~np.isfinite(col))[0])
            raise DatasetError(f"non-finite {name} at row {row}")
    for name, (lo, hi), unit in (("I", I_BOUNDS, "A"), ("V", V_BOUNDS, "km/h")):
        col = getattr(data, name)
        bad = np.flatnonzero((col < lo) | (col > hi))
        if bad.size:
            row = int(bad[0])
            raise DatasetError(
                f"{name} = {col[row]:g} {unit} at row {row} outside [{lo:g}, {hi:g}] {unit}"
            )

    # runs must be contiguous blocks
    boundaries = np.flatnonzero(np.diff(data.run_id) != 0) + 1
    starts = np.concatenate(([0], boundaries))
    if len(np.unique(data.run_id)) != len(starts):
        raise DatasetError("records of a run are not contiguous")

    new_run = np.zeros(n, dtype=bool)
    new_run[starts] = True
    dt = np.diff(data.t)
    within = ~new_run[1:]
    bad = np.flatnonzero(within & (np.abs(dt - SAMPLE_STEP) > _STEP_RTOL * SAMPLE_STEP))
    if bad.size:
        row = int(bad[0]) + 1
        raise DatasetError(
            f"time not strictly increasing at {1 / SAMPLE_STEP:g} Hz within run "
            f"{int(data.run_id[row])} at row {row}"
        )

    expected = np.empty(n)
    expected[0] = 0.0
    expected[1:] = np.diff(data.displacement)
    expected[new_run] = 0.0
    scale = np.maximum(1.0, np.abs(data.displacement))
    bad = np.flatnonzero(np.abs(expected - data.delta_displacement) > _DELTA_ATOL * scale)
    if bad.size:
        row = int(bad[0])
        raise DatasetError(f"delta_displacement inconsistent with displacement at row {row}")


def _format(value: float) -> str:
    return repr(float(value))


def save_csv(dataset: RawDataset, path) -> None:
    """Write ``dataset`` as UTF-8 CSV with LF line endings.

    Floats are written with ``repr`` so that loading reproduces them exactly.
    """
    if len(dataset) == 0:
        raise DatasetError("empty dataset")
    path = Path(path)
    try:
        fh = open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    with fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        fh.writelines(
            f"{_format(t)},{int(r)},{_format(v)},{_format(i)},{_format(d)},{_format(dd)}\n"
            for t, r, v, i, d, dd in zip(
                dataset.t, dataset.run_id, dataset.V, dataset.I,
                dataset.displacement, dataset.delta_displacement,
            )
        )


def load_csv(path) -> RawDataset:
    """Read a raw dataset written by :func:`save_csv` (or by a vehicle logger
    using the same header) and validate it."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise DatasetError(
                f"{path}: header must be {','.join(CSV_COLUMNS)}, got {','.join(header or [])}"
            )
        cols: list[list] = [[] for _ in CSV_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise DatasetError(f"{path}: row {lineno}: expected {len(CSV_COLUMNS)} fields")
            try:
                cols[1].append(int(row[1]))
                for j in (0, 2, 3, 4, 5):
                    v = float(row[j])
                    if not math.isfinite(v):
                        raise ValueError(row[j])
                    cols[j].append(v)
            except ValueError as exc:
                raise DatasetError(f"{path}: row {lineno}: malformed value ({exc})") from None
    if not cols[0]:
        raise DatasetError(f"{path}: empty dataset")
    try:
        return RawDataset.from_columns(**dict(zip(CSV_COLUMNS, cols)))
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def split_by_runs(data: RawDataset, test_runs) -> tuple[RawDataset, RawDataset]:
    """Partition by whole runs; returns ``(train, test)``."""
    test_runs = {int(r) for r in test_runs}
    present = set(data.run_ids)
    if not test_runs:
        raise DatasetError("test_runs must not be empty")
    unknown = test_runs - present
    if unknown:
        raise DatasetError(f"unknown run_id(s): {sorted(unknown)}")
    if test_runs >= present:
        raise DatasetError("no training data: test_runs cover every run")
    is_test = np.isin(data.run_id, sorted(test_runs))
    return data.select(~is_test), data.select(is_test)


@dataclass(frozen=True)
class ScalingState:
    """Column-wise ``(min, max)`` captured from training data."""

    bounds: dict

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if not hi > lo:
                raise DatasetError(f"degenerate scaling range for column {name!r}")

    def scale(self, column: str, values):
        lo, hi = self._get(column)
        return (np.asarray(values, dtype=float) - lo) / (hi - lo)

    def unscale(self, column: str, values):
        lo, hi = self._get(column)
        return np.asarray(values, dtype=float) * (hi - lo) + lo

    def _get(self, column):
        try:
            return self.bounds[column]
        except KeyError:
            raise KeyError(f"unknown column {column!r}") from None

    def to_json(self) -> str:
        return json.dumps(
            {k: {"min": lo, "max": hi} for k, (lo, hi) in self.bounds.items()}, indent=2
        )

    @classmethod
    def from_json(cls, text: str) -> "ScalingState":
        doc = json.loads(text)
        return cls({k: (float(v["min"]), float(v["max"])) for k, v in doc.items()})

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ScalingState":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit_scaling(train: RawDataset) -> ScalingState:
    bounds = {}
    for name in SCALED_COLUMNS:
        col = getattr(train, name)
        lo, hi = float(col.min()), float(col.max())
        if not hi > lo:
            raise DatasetError(f"column {name!r} is constant ({lo:g}); cannot scale")
        bounds[name] = (lo, hi)
    return ScalingState(bounds)


def invert_scaling(value, column: str, state: ScalingState):
    return state.unscale(column, value)


@dataclass(frozen=True, eq=False)
class PreparedDataset:
    """Scaled example sequence of ``(x, y)`` pairs.

    ``source_index`` gives, for every example, the row of the scaled source
    dataset it was derived from; ``provenance`` holds one of ORIGINAL,
    AUGMENTED, OVERSAMPLED.
    """

    X: np.ndarray
    y: np.ndarray
    provenance: np.ndarray
    source_index: np.ndarray

    def __post_init__(self):
        n = len(self.y)
        if self.X.shape != (n, len(FEATURES)):
            raise DatasetError(f"X must have shape ({n}, {len(FEATURES)}), got {self.X.shape}")
        if len(self.provenance) != n or len(self.source_index) != n:
            raise DatasetError("provenance/source_index misaligned with examples")
        for arr in (self.X, self.y, self.provenance, self.source_index):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def examples(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.X, self.y.tolist()))

    @property
    def provenance_names(self) -> list[str]:
        return [PROVENANCE_NAMES[p] for p in self.provenance]

    def take(self, idx) -> "PreparedDataset":
        return PreparedDataset(
            self.X[idx], self.y[idx], self.provenance[idx], self.source_index[idx]
        )

    @staticmethod
    def concat(parts: Sequence["PreparedDataset"]) -> "PreparedDataset":
        return PreparedDataset(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.provenance for p in parts]),
            np.concatenate([p.source_index for p in parts]),
        )

    def equals(self, other: "PreparedDataset") -> bool:
        return (
            np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.provenance, other.provenance)
            and np.array_equal(self.source_index, other.source_index)
        )

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(FEATURES + (TARGET, "provenance", "source_index")) + "\n")
            for x, y, p, s in zip(self.X, self.y, self.provenance, self.source_index):
                fh.write(",".join(map(_format, x)) + f",{_format(y)},{PROVENANCE_NAMES[p]},{s}\n")

    @classmethod
    def load_csv(cls, path) -> "PreparedDataset":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        rows = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            expected = list(FEATURES + (TARGET, "provenance", "source_index"))
            if header != expected:
                raise DatasetError(f"{path}: header must be {','.join(expected)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append((
                        [float(v) for v in row[:4]],
                        PROVENANCE_NAMES.index(row[4]),
                        int(row[5]),
                    ))
                except (ValueError, IndexError):
                    raise DatasetError(f"{path}: row {lineno}: malformed row") from None
        if not rows:
            raise DatasetError(f"{path}: empty dataset")
        xy = np.array([r[0] for r in rows])
        return cls(
            xy[:, :3].copy(), xy[:, 3].copy(),
            np.array([r[1] for r in rows], dtype=np.int8),
            np.array([r[2] for r in rows], dtype=np.int64),
        )


def apply_scaling(data: RawDataset, state: ScalingState) -> PreparedDataset:
    """Map every feature and the target onto the fitted range. Values outside
    the fitted range are left unclamped."""
    X = np.column_stack([state.scale(name, getattr(data, name)) for name in FEATURES])
    y = state.scale(TARGET, data.delta_displacement)
    n = len(y)
    return PreparedDataset(X, y, np.full(n, ORIGINAL, dtype=np.int8), np.arange(n))
