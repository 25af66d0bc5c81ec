"""Binary classification metrics with 1 (anomaly) as the positive class.

A metric whose denominator is zero is reported as ``None`` rather than 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from saad.errors import ValidationError

UNDEFINED = None


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    confusion: ConfusionMatrix
    n_positive: int
    n_negative: int
    beta: float = 1.0
    f_beta: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d


def _binary(v, name: str) -> np.ndarray:
    a = np.asarray(v).reshape(-1)
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ValidationError(f"{name} must contain only 0 and 1")
    return a.astype(bool)


def confusion(pred, truth) -> ConfusionMatrix:
    p, t = _binary(pred, "pred"), _binary(truth, "truth")
    if p.shape != t.shape:
        raise ValidationError(f"pred has {p.size} entries, truth has {t.size}")
    if p.size == 0:
        raise ValidationError("cannot score empty predictions")
    return ConfusionMatrix(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)),
        fn=int(np.sum(~p & t)),
    )


def _ratio(num: float, den: float) -> float | None:
    return UNDEFINED if den == 0 else num / den


def precision(cm: ConfusionMatrix) -> float | None:
    return _ratio(cm.tp, cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> float | None:
    return _ratio(cm.tp, cm.tp + cm.fn)


def f_beta(cm: ConfusionMatrix, beta: float = 1.0) -> float | None:
    """``(1 + b^2) P R / (b^2 P + R)``; ``None`` if any denominator is zero."""
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    p, r = precision(cm), recall(cm)
    if p is None or r is None:
        return UNDEFINED
    b2 = beta * beta
    return _ratio((1 + b2) * p * r, b2 * p + r)


def report(pred, truth, beta: float = 1.0) -> MetricsReport:
    cm = confusion(pred, truth)
    return MetricsReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision(cm),
        recall=recall(cm),
        f1=f_beta(cm, 1.0),
        confusion=cm,
        n_positive=cm.tp + cm.fn,
        n_negative=cm.tn + cm.fp,
        beta=float(beta),
        f_beta=f_beta(cm, beta),
    )
