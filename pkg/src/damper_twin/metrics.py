"""Regression quality metrics: MSE, MAE and the coefficient of determination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    mse: float
    mae: float
    r2: float  # nan when y_true is constant
    n: int

    @property
    def r2_defined(self) -> bool:
        return not math.isnan(self.r2)

    def csv_row(self, name: str) -> str:
        return f"{name},{self.r2!r},{self.mse!r},{self.mae!r},{self.n}"


CSV_HEADER = "config_name,r2,mse,mae,n"


def evaluate(y_true, y_pred) -> MetricReport:
    """Score predictions against targets.

    R^2 is taken about the mean of ``y_true``. If ``y_true`` is constant the
    ratio is undefined and ``r2`` is nan; MSE and MAE are still reported.
    """
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.size} targets vs {y_pred.size} predictions")
    if y_true.size < 2:
        raise ValueError("need at least 2 samples")
    err = y_true - y_pred
    ss_res = float(np.sum(err * err))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return MetricReport(
        mse=ss_res / y_true.size,
        mae=float(np.mean(np.abs(err))),
        r2=r2,
        n=int(y_true.size),
    )
