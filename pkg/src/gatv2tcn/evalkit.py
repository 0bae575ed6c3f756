"""Forecast metrics and the Higher-Lower pick evaluator.

All metrics are computed on original (de-normalised) units over masked
entries. MAPE is a fraction, with the denominator floored at ``eps``.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

R_CLAMP = 1.0 - 1e-12
DEFAULT_MAPE_EPS = 1.0


class MetricError(ValueError):
    pass


def _masked(pred, actual, mask):
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise MetricError(f"prediction shape {pred.shape} != actual shape {actual.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    else:
        # a W x n mask applies to every statistic column
        mask = np.asarray(mask, dtype=bool)
        mask = np.broadcast_to(mask.reshape(mask.shape + (1,) * (pred.ndim - mask.ndim)), pred.shape)
    if not mask.any():
        raise MetricError("mask selects no entries")
    return pred[mask], actual[mask]


def rmse(pred, actual, mask=None) -> float:
    p, a = _masked(pred, actual, mask)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(pred, actual, mask=None) -> float:
    p, a = _masked(pred, actual, mask)
    return float(np.mean(np.abs(p - a)))


def mape(pred, actual, mask=None, eps: float = DEFAULT_MAPE_EPS) -> float:
    if eps <= 0:
        raise MetricError("mape eps must be positive")
    p, a = _masked(pred, actual, mask)
    return float(np.mean(np.abs(p - a) / np.maximum(np.abs(a), eps)))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc, yc = x - x.mean(), y - y.mean()
    return float(np.sum(xc * yc) / np.sqrt(np.sum(xc * xc) * np.sum(yc * yc)))


def fisher_mean(rs: Sequence[float]) -> float:
    """``tanh(mean(atanh(r)))`` with ``r`` clamped away from +-1."""
    z = [math.atanh(min(max(r, -R_CLAMP), R_CLAMP)) for r in rs]
    if not z:
        raise MetricError("no correlations to average")
    return math.tanh(sum(z) / len(z))


def corr_fisher(pred, actual) -> float:
    """Fisher-z average of per-column Pearson correlations of ``N x k`` arrays.

    Columns with zero variance in either input are skipped with a warning.
    """
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.ndim == 1:
        pred, actual = pred[:, None], actual[:, None]
    if pred.shape != actual.shape:
        raise MetricError(f"prediction shape {pred.shape} != actual shape {actual.shape}")
    rs, skipped = [], []
    for k in range(pred.shape[1]):
        if np.ptp(pred[:, k]) == 0 or np.ptp(actual[:, k]) == 0:
            skipped.append(k)
            continue
        rs.append(pearson(pred[:, k], actual[:, k]))
    if skipped:
        warnings.warn(f"zero-variance output column(s) {skipped} excluded from CORR", stacklevel=2)
    if not rs:
        raise MetricError("every output column has zero variance")
    return fisher_mean(rs)


@dataclass
class EvalReport:
    rmse: float
    mae: float
    mape: float
    corr: float
    count: int
    per_stat: dict[str, dict[str, float]] = field(default_factory=dict)
    mape_eps: float = DEFAULT_MAPE_EPS


def evaluate(pred, actual, mask, stat_names: Sequence[str], mape_eps: float = DEFAULT_MAPE_EPS) -> EvalReport:
    """Metrics over ``W x n x k`` forecasts with a ``W x n`` activity mask."""
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    k = pred.shape[-1]
    rows_p = pred[mask].reshape(-1, k)
    rows_a = actual[mask].reshape(-1, k)
    if rows_p.shape[0] == 0:
        raise MetricError("mask selects no entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        corr = corr_fisher(rows_p, rows_a)
    per_stat = {}
    for j, name in enumerate(stat_names):
        p, a = rows_p[:, j], rows_a[:, j]
        per_stat[name] = {
            "rmse": rmse(p, a),
            "mae": mae(p, a),
            "mape": mape(p, a, eps=mape_eps),
            "corr": pearson(p, a) if np.ptp(p) > 0 and np.ptp(a) > 0 else float("nan"),
        }
    return EvalReport(
        rmse=rmse(rows_p, rows_a),
        mae=mae(rows_p, rows_a),
        mape=mape(rows_p, rows_a, eps=mape_eps),
        corr=corr,
        count=int(rows_p.shape[0]),
        per_stat=per_stat,
        mape_eps=mape_eps,
    )


REPORT_HEADER = ("model", "split", "statistic", "rmse", "mae", "mape", "corr", "count")


def report_rows(name: str, split: str, report: EvalReport) -> list[tuple]:
    rows = [(name, split, "ALL", report.rmse, report.mae, report.mape, report.corr, report.count)]
    for stat, m in report.per_stat.items():
        rows.append((name, split, stat, m["rmse"], m["mae"], m["mape"], m["corr"], report.count))
    return rows


def write_report_csv(path: str | os.PathLike, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])


def format_table(rows: Sequence[tuple]) -> str:
    lines = [f"{'model':<12} {'split':<6} {'stat':<10} {'RMSE':>8} {'MAE':>8} {'MAPE':>8} {'CORR':>8} {'N':>7}"]
    for name, split, stat, r, m, p, c, n in rows:
        lines.append(f"{name:<12} {split:<6} {stat:<10} {r:8.3f} {m:8.3f} {p:8.3f} {c:8.3f} {n:7d}")
    return "\n".join(lines)


@dataclass(frozen=True)
class BetLine:
    player_id: str
    stat: str
    threshold: float
    actual: float
    predicted: float
    date: str = ""

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise MetricError(f"line threshold for {self.player_id} is not finite")


@dataclass(frozen=True)
class BetResult:
    correct: int
    total: int
    pushes: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else float("nan")

    def summary(self) -> str:
        return f"{self.correct}/{self.total} correct (pushes excluded: {self.pushes}), accuracy {self.accuracy:.4f}"


def bet_eval(lines: Sequence[BetLine]) -> BetResult:
    """A pick is correct when prediction and outcome land on the same side of the line.

    Outcomes exactly on the line are pushes and leave the total; a
    prediction exactly on the line counts as a miss.
    """
    correct = total = pushes = 0
    for line in lines:
        actual_side = np.sign(line.actual - line.threshold)
        if actual_side == 0:
            pushes += 1
            continue
        total += 1
        if np.sign(line.predicted - line.threshold) == actual_side:
            correct += 1
    return BetResult(correct, total, pushes)


def parse_stat_expr(expr: str, allowed: Sequence[str]) -> list[str]:
    """Split a composite like ``PTS+REB+AST`` into base statistic names."""
    parts = [p.strip() for p in expr.split("+")]
    bad = [p for p in parts if p not in allowed]
    if not parts or bad:
        raise MetricError(f"statistic expression {expr!r} uses {bad or 'nothing'}; allowed: {list(allowed)}")
    return parts


LINES_HEADER = ("date", "player_id", "stat_expr", "threshold", "actual")


def read_lines_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LINES_HEADER:
            raise MetricError(f"lines file header must be {','.join(LINES_HEADER)}")
        return list(reader)
