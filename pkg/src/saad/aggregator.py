"""Confidence-gated combination of statistical and FCN labels, and the (a, b) sweep.

Decision rules, with ``v`` the FCN confidence:

    stat  fcn   condition   result
    0     0     -           0
    1     1     -           1
    0     1     v > a       1
    0     1     v <= a      0
    1     0     v < b       1
    1     0     v >= b      0
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from saad import metrics
from saad.errors import ValidationError

log = logging.getLogger(__name__)

DEFAULT_A_VALUES = (0.51, 0.52, 0.53, 0.54, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80,
                    0.85, 0.90, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0)
DEFAULT_B_VALUES = (0.00, 0.01, 0.02, 0.03, 0.04, 0.05, 0.10, 0.15, 0.20, 0.25,
                    0.30, 0.35, 0.40, 0.45, 0.46, 0.47, 0.48, 0.49, 0.50)

# Rule ids in table order.
BOTH_NORMAL, BOTH_ANOMALY, FCN_ACCEPTED, FCN_REJECTED, STAT_KEPT, STAT_DROPPED = range(6)
RULE_NAMES = ("both_normal", "both_anomaly", "fcn_anomaly_v_gt_a", "fcn_anomaly_v_le_a",
              "stat_anomaly_v_lt_b", "stat_anomaly_v_ge_b")


@dataclass(frozen=True)
class AggregationParams:
    a: float = 1.0
    b: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValidationError("a and b must be finite")
        if not (0.0 <= self.b <= 0.5 <= self.a <= 1.0):
            log.warning("aggregation thresholds outside 0 <= b <= 0.5 <= a <= 1: a=%s b=%s", self.a, self.b)


@dataclass(frozen=True)
class LabeledPair:
    stat_label: int
    dl_label: int
    confidence: float

    def __post_init__(self):
        if self.stat_label not in (0, 1) or self.dl_label not in (0, 1):
            raise ValidationError("labels must be 0 or 1")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence}")
        if self.dl_label != int(self.confidence > 0.5):
            raise ValidationError(f"dl_label {self.dl_label} inconsistent with confidence {self.confidence}")


@dataclass(frozen=True)
class PairBatch:
    """Column form of a list of :class:`LabeledPair`."""

    stat: np.ndarray
    dl: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        stat = np.asarray(self.stat, dtype=np.int64).reshape(-1)
        dl = np.asarray(self.dl, dtype=np.int64).reshape(-1)
        v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        if not stat.shape == dl.shape == v.shape:
            raise ValidationError("stat, dl and v must have the same length")
        if not (np.all((stat == 0) | (stat == 1)) and np.all((dl == 0) | (dl == 1))):
            raise ValidationError("labels must be 0 or 1")
        if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
            raise ValidationError("confidences must lie in [0, 1]")
        if np.any(dl != (v > 0.5)):
            raise ValidationError("dl labels inconsistent with confidences")
        object.__setattr__(self, "stat", stat)
        object.__setattr__(self, "dl", dl)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_confidences(cls, stat, v) -> "PairBatch":
        v = np.asarray(v, dtype=np.float64)
        return cls(stat, (v > 0.5).astype(np.int64), v)

    @classmethod
    def of(cls, pairs: Sequence[LabeledPair]) -> "PairBatch":
        return cls([p.stat_label for p in pairs], [p.dl_label for p in pairs],
                   [p.confidence for p in pairs])

    def __len__(self) -> int:
        return self.stat.shape[0]


def _as_batch(pairs) -> PairBatch:
    return pairs if isinstance(pairs, PairBatch) else PairBatch.of(list(pairs))


def aggregate(pair: LabeledPair, params: AggregationParams) -> int:
    if pair.stat_label == pair.dl_label:
        return pair.stat_label
    if pair.dl_label == 1:
        return int(pair.confidence > params.a)
    return int(pair.confidence < params.b)


def rule_ids(pairs, params: AggregationParams) -> np.ndarray:
    """Which of the six decision rules fires for each pair."""
    p = _as_batch(pairs)
    return np.select(
        [
            (p.stat == 0) & (p.dl == 0),
            (p.stat == 1) & (p.dl == 1),
            (p.stat == 0) & (p.v > params.a),
            p.stat == 0,
            p.v < params.b,
        ],
        [BOTH_NORMAL, BOTH_ANOMALY, FCN_ACCEPTED, FCN_REJECTED, STAT_KEPT],
        default=STAT_DROPPED,
    )


_RULE_RESULT = np.array([0, 1, 1, 0, 1, 0], dtype=np.int64)


def aggregate_batch(pairs, params: AggregationParams) -> np.ndarray:
    p = _as_batch(pairs)
    if len(p) == 0:
        return np.zeros(0, dtype=np.int64)
    return _RULE_RESULT[rule_ids(p, params)]


@dataclass(frozen=True)
class DisagreementReport:
    """Rule firing counts plus, for disagreement rows, which method supplied the final label."""

    rule_counts: dict
    ones_from_stat: int = 0
    ones_from_fcn: int = 0
    zeros_from_stat: int = 0
    zeros_from_fcn: int = 0

    @property
    def n_disagreements(self) -> int:
        return self.ones_from_stat + self.ones_from_fcn + self.zeros_from_stat + self.zeros_from_fcn

    def to_dict(self) -> dict:
        return {
            "rule_counts": dict(self.rule_counts),
            "ones_from_stat": self.ones_from_stat,
            "ones_from_fcn": self.ones_from_fcn,
            "zeros_from_stat": self.zeros_from_stat,
            "zeros_from_fcn": self.zeros_from_fcn,
        }


def decompose_disagreements(pairs, params: AggregationParams) -> DisagreementReport:
    """Count rule firings; attribute each disagreement's final label to the method that voted for it."""
    p = _as_batch(pairs)
    rules = rule_ids(p, params)
    final = _RULE_RESULT[rules]
    counts = {name: int(np.sum(rules == i)) for i, name in enumerate(RULE_NAMES)}
    dis = p.stat != p.dl
    from_stat = dis & (final == p.stat)
    from_fcn = dis & (final == p.dl)
    return DisagreementReport(
        rule_counts=counts,
        ones_from_stat=int(np.sum(from_stat & (final == 1))),
        ones_from_fcn=int(np.sum(from_fcn & (final == 1))),
        zeros_from_stat=int(np.sum(from_stat & (final == 0))),
        zeros_from_fcn=int(np.sum(from_fcn & (final == 0))),
    )


@dataclass(frozen=True)
class SweepGrid:
    """Metric matrices indexed ``[b_index, a_index]``; NaN marks an undefined F1."""

    a_values: tuple[float, ...]
    b_values: tuple[float, ...]
    accuracy: np.ndarray
    f1: np.ndarray
    reports: dict = field(default_factory=dict, compare=False, repr=False)

    def best(self) -> tuple[float, float, float]:
        """(a, b, accuracy) of the most accurate cell, first in row-major order on ties."""
        i, j = np.unravel_index(int(np.argmax(self.accuracy)), self.accuracy.shape)
        return self.a_values[j], self.b_values[i], float(self.accuracy[i, j])

    def cell(self, a: float, b: float) -> tuple[float, float]:
        i, j = self.b_values.index(b), self.a_values.index(a)
        return float(self.accuracy[i, j]), float(self.f1[i, j])


def sweep(pairs, truth, a_values: Sequence[float] = DEFAULT_A_VALUES,
          b_values: Sequence[float] = DEFAULT_B_VALUES) -> SweepGrid:
    p = _as_batch(pairs)
    y = np.asarray(truth).reshape(-1)
    if y.shape[0] != len(p):
        raise ValidationError(f"{len(p)} pairs but {y.shape[0]} truth labels")
    if len(a_values) == 0 or len(b_values) == 0:
        raise ValidationError("sweep axes must not be empty")
    a_values, b_values = tuple(map(float, a_values)), tuple(map(float, b_values))
    acc = np.empty((len(b_values), len(a_values)))
    f1 = np.empty_like(acc)
    reports = {}
    for i, b in enumerate(b_values):
        for j, a in enumerate(a_values):
            r = metrics.report(aggregate_batch(p, AggregationParams(a, b)), y)
            acc[i, j] = r.accuracy
            f1[i, j] = math.nan if r.f1 is None else r.f1
            reports[(b, a)] = r
    return SweepGrid(a_values, b_values, acc, f1, reports)


def _axis_label(x: float) -> str:
    s = f"{x:.2f}"
    return s[:-3] if s.endswith(".00") and x >= 1 else s


def _cell(x: float, scale: float, digits: int) -> str:
    return "n/a" if math.isnan(x) else f"{x * scale:.{digits}f}"


def table_csv(grid: SweepGrid, metric: str = "accuracy") -> str:
    """Table layout: a-axis header row, b-axis first column.

    Accuracy cells are percentages with one decimal, F1 cells fractions with
    two decimals.
    """
    if metric == "accuracy":
        values, scale, digits = grid.accuracy, 100.0, 1
    elif metric == "f1":
        values, scale, digits = grid.f1, 1.0, 2
    else:
        raise ValidationError(f"unknown metric {metric!r}")
    lines = [",".join(["b\\a"] + [_axis_label(a) for a in grid.a_values])]
    for i, b in enumerate(grid.b_values):
        lines.append(",".join([_axis_label(b)] + [_cell(x, scale, digits) for x in values[i]]))
    return "\n".join(lines) + "\n"


def long_csv(grid: SweepGrid) -> str:
    lines = ["b,a,accuracy,f1"]
    for i, b in enumerate(grid.b_values):
        for j, a in enumerate(grid.a_values):
            cells = (b, a, grid.accuracy[i, j], grid.f1[i, j])
            lines.append(",".join("NaN" if math.isnan(x) else repr(float(x)) for x in cells))
    return "\n".join(lines) + "\n"


def grid_to_dict(grid: SweepGrid) -> dict:
    def nullable(row):
        return [None if math.isnan(x) else float(x) for x in row]

    return {
        "a_values": list(grid.a_values),
        "b_values": list(grid.b_values),
        "accuracy": [nullable(r) for r in grid.accuracy],
        "f1": [nullable(r) for r in grid.f1],
    }


def grid_from_dict(d) -> SweepGrid:
    def arr(rows):
        return np.array([[math.nan if x is None else x for x in r] for r in rows], dtype=np.float64)

    return SweepGrid(tuple(d["a_values"]), tuple(d["b_values"]), arr(d["accuracy"]), arr(d["f1"]))


def write_sweep(grid: SweepGrid, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "accuracy_table": out / "sweep_accuracy.csv",
        "f1_table": out / "sweep_f1.csv",
        "long": out / "sweep_long.csv",
        "json": out / "sweep.json",
    }
    paths["accuracy_table"].write_text(table_csv(grid, "accuracy"), encoding="utf-8")
    paths["f1_table"].write_text(table_csv(grid, "f1"), encoding="utf-8")
    paths["long"].write_text(long_csv(grid), encoding="utf-8")
    paths["json"].write_text(json.dumps(grid_to_dict(grid), indent=1) + "\n", encoding="utf-8")
    return paths
