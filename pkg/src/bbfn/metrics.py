"""Evaluation metrics for sentiment regression and binary tasks.

Conventions used throughout this repo:

* Acc-7 clamps both labels and predictions to [-3, 3] and rounds half away
  from zero to an integer class.
* Acc-2 and F1 drop samples whose label is exactly 0; a prediction of
  exactly 0 counts as negative.
* F1 defaults to the support-weighted mean of the positive and negative
  class F1 scores (``average="macro"`` and ``"binary"`` are available).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np


class MetricError(ValueError):
    pass


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise MetricError("no samples")
    if y.shape != y_hat.shape:
        raise MetricError(f"length mismatch: {y.size} labels vs {y_hat.size} predictions")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def pearson(y, y_hat, strict: bool = False) -> float:
    """Centered correlation. Returns NaN (or raises with ``strict``) when
    either side has zero variance."""
    y, y_hat = _pair(y, y_hat)
    yc, pc = y - y.mean(), y_hat - y_hat.mean()
    denom = math.sqrt(float(yc @ yc) * float(pc @ pc))
    if denom == 0.0:
        if strict:
            raise MetricError("correlation undefined for a constant sequence")
        return float("nan")
    return float(np.clip((yc @ pc) / denom, -1.0, 1.0))


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def sentiment_class(x) -> np.ndarray:
    return round_half_away(np.clip(np.asarray(x, dtype=np.float64), -3.0, 3.0)).astype(int)


def acc7(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(sentiment_class(y) == sentiment_class(y_hat)))


def _f1(tp, fp, fn) -> float:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def binary_f1(truth: np.ndarray, pred: np.ndarray, average: str = "weighted") -> float:
    """F1 for boolean class arrays (True = positive)."""
    tp = int(np.sum(truth & pred))
    fp = int(np.sum(~truth & pred))
    fn = int(np.sum(truth & ~pred))
    tn = int(np.sum(~truth & ~pred))
    f_pos, f_neg = _f1(tp, fp, fn), _f1(tn, fn, fp)
    if average == "binary":
        return f_pos
    if average == "macro":
        return (f_pos + f_neg) / 2
    if average == "weighted":
        n_pos, n_neg = tp + fn, tn + fp
        return (f_pos * n_pos + f_neg * n_neg) / (n_pos + n_neg)
    raise ValueError(f"unknown F1 average {average!r}")


def acc2_f1(y, y_hat, average: str = "weighted") -> tuple[float, float, int]:
    """(Acc-2, F1, number of non-zero labels used)."""
    y, y_hat = _pair(y, y_hat)
    keep = y != 0
    if not keep.any():
        raise MetricError("all labels are zero; Acc-2 is undefined")
    truth, pred = y[keep] > 0, y_hat[keep] > 0
    return float(np.mean(truth == pred)), binary_f1(truth, pred, average), int(keep.sum())


@dataclass
class MetricsReport:
    task: str
    n: int
    acc2: float
    acc2_count: int
    mae: float | None = None
    corr: float | None = None
    corr_defined: bool = True
    acc7: float | None = None
    f1: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def row(self) -> list:
        return [self.mae, self.corr, self.acc7, self.acc2, self.f1]


METRIC_COLUMNS = ["mae", "corr", "acc7", "acc2", "f1"]


def evaluate_predictions(y, y_hat, task: str = "regression", f1_average: str = "weighted") -> MetricsReport:
    y, y_hat = _pair(y, y_hat)
    if task == "binary":
        acc = float(np.mean((y_hat > 0.5) == (y > 0.5)))
        return MetricsReport("binary", y.size, acc, y.size)
    a2, f1, cnt = acc2_f1(y, y_hat, f1_average)
    corr = pearson(y, y_hat)
    return MetricsReport("regression", y.size, a2, cnt, mae=mae(y, y_hat), corr=corr,
                         corr_defined=not math.isnan(corr), acc7=acc7(y, y_hat), f1=f1)


def error_histogram(y, y_hat, bin_width: float) -> list[tuple[float, float, int]]:
    """Counts of |y - y_hat| in bins [k w, (k+1) w) from 0 up to the largest error."""
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    y, y_hat = _pair(y, y_hat)
    err = np.abs(y - y_hat)
    idx = np.floor(err / bin_width).astype(np.int64)
    counts = np.bincount(idx)
    return [(k * bin_width, (k + 1) * bin_width, int(c)) for k, c in enumerate(counts)]


def histogram_csv(bins) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_start", "bin_end", "count"])
    for lo, hi, c in bins:
        w.writerow([repr(float(lo)), repr(float(hi)), c])
    return buf.getvalue()
