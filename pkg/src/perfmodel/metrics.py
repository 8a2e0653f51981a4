"""Prediction-quality metrics: MAPE, MSE, RMSE and R^2."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from perfmodel.errors import DataError, NumericalError


def _pair(measured, predicted, *, positive=False, min_len=1):
    t = np.asarray(measured, dtype=float).reshape(-1)
    p = np.asarray(predicted, dtype=float).reshape(-1)
    if t.shape != p.shape:
        raise DataError(f"length mismatch: {t.size} measured vs {p.size} predicted")
    if t.size < min_len:
        raise DataError(f"need at least {min_len} values, got {t.size}")
    if positive and np.any(t <= 0):
        raise DataError(f"measured values must be > 0 (index {int(np.argmax(t <= 0))})")
    return t, p


def mape(measured, predicted) -> float:
    """Mean absolute percentage error as a fraction (0.07 means 7%)."""
    t, p = _pair(measured, predicted, positive=True)
    return float(np.mean(np.abs(t - p) / t))


def mse(measured, predicted) -> float:
    t, p = _pair(measured, predicted)
    return float(np.mean((t - p) ** 2))


def rmse(measured, predicted) -> float:
    return math.sqrt(mse(measured, predicted))


def mae(measured, predicted) -> float:
    t, p = _pair(measured, predicted)
    return float(np.mean(np.abs(t - p)))


def r2(measured, predicted) -> float:
    """Coefficient of determination, ``1 - SS_res / SS_tot`` around the measured mean."""
    t, p = _pair(measured, predicted, min_len=2)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        raise NumericalError("R^2 is undefined for a constant measured series")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def format_percent(fraction: float, decimals: int = 1) -> str:
    return f"{100.0 * fraction:.{decimals}f}%"


@dataclass(frozen=True)
class MetricsReport:
    mape: float
    mse: float
    rmse: float
    mae: float
    r2: float | None  # None when undefined (fewer than 2 records or constant series)
    n: int

    @classmethod
    def compute(cls, measured, predicted) -> "MetricsReport":
        m = mse(measured, predicted)
        try:
            r = r2(measured, predicted)
        except (DataError, NumericalError):
            r = None
        return cls(mape=mape(measured, predicted), mse=m, rmse=math.sqrt(m),
                   mae=mae(measured, predicted), r2=r, n=len(np.atleast_1d(measured)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        return cls(**d)

    def summary(self) -> str:
        r = "n/a" if self.r2 is None else f"{self.r2:.4f}"
        return (f"MAPE {format_percent(self.mape)}  MSE {self.mse:.4g}  "
                f"RMSE {self.rmse:.4g}  R2 {r}  (n={self.n})")
