"""Unsupervised artificial labeling from per-feature histograms.

Each feature gets an equal-width histogram (Freedman-Diaconis width by
default). Bins whose relative frequency is strictly below ``t`` are
anomalous; an instance is an artificial anomaly when at least ``k`` of its
feature values fall into anomalous bins or outside the fitted range.

Nothing here reads ground-truth labels: fitting and labeling take the
feature matrix only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from saad.dataset import Dataset, format_float
from saad.errors import ValidationError

WidthPolicy = Union[str, float]  # "auto" or a fixed positive width

OUT_OF_RANGE = -1
CALIBRATION_GRID = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1)
MAX_BINS = 1_000_000


def _matrix(data) -> np.ndarray:
    X = data.features if isinstance(data, Dataset) else data
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def quantile(values, q: float) -> float:
    """Linear interpolation between order statistics at position (count-1)*q."""
    xs = sorted(float(v) for v in values)
    if not xs:
        raise ValidationError("quantile of an empty sequence")
    pos = (len(xs) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    return xs[lo] + (xs[hi] - xs[lo]) * frac


def sturges_width(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    n_bins = math.ceil(math.log2(v.size) + 1)
    return float(v.max() - v.min()) / n_bins


def fd_bin_width(values) -> float:
    """Freedman-Diaconis width ``2 * IQR / cbrt(count)``.

    When the IQR is zero, or the width would give more than ``MAX_BINS``
    bins, the Sturges width ``range / ceil(log2(count) + 1)`` is returned
    instead (0.0 when all values are equal).
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size < 2:
        raise ValidationError("Freedman-Diaconis width needs at least 2 values")
    iqr = quantile(v, 0.75) - quantile(v, 0.25)
    width = 2.0 * iqr / np.cbrt(v.size)
    spread = float(v.max() - v.min())
    if iqr <= 0 or not math.isfinite(width) or width <= 0 or spread / width > MAX_BINS:
        return sturges_width(v)
    return float(width)


@dataclass(frozen=True)
class Bin:
    lower: float
    upper: float
    count: int
    rel_freq: float


@dataclass(frozen=True)
class FeatureBins:
    """Contiguous equal-width histogram of one feature.

    ``edges`` has one more entry than there are bins. Bins are half-open
    ``[lower, upper)`` except the last, which is closed. A constant feature
    yields a single point bin with ``lower == upper``.
    """

    feature_index: int
    edges: np.ndarray
    counts: np.ndarray
    total_count: int

    def __post_init__(self):
        edges = np.array(self.edges, dtype=np.float64)
        counts = np.array(self.counts, dtype=np.int64)
        edges.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def rel_freq(self) -> np.ndarray:
        return self.counts / self.total_count

    @property
    def domain_min(self) -> float:
        return float(self.edges[0])

    @property
    def domain_max(self) -> float:
        return float(self.edges[-1])

    @property
    def bins(self) -> list[Bin]:
        rf = self.rel_freq
        return [
            Bin(float(self.edges[i]), float(self.edges[i + 1]), int(self.counts[i]), float(rf[i]))
            for i in range(self.n_bins)
        ]

    def index_of(self, x) -> np.ndarray:
        """Vectorized :func:`bin_of_value`."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx = np.minimum(idx, self.n_bins - 1)
        out = (x < self.edges[0]) | (x > self.edges[-1]) | np.isnan(x)
        return np.where(out, OUT_OF_RANGE, idx)


def _resolve_width(values: np.ndarray, width_policy: WidthPolicy) -> float:
    if width_policy == "auto":
        return fd_bin_width(values) if values.size >= 2 else 0.0
    try:
        width = float(width_policy)
    except (TypeError, ValueError):
        raise ValidationError(f"width policy must be 'auto' or a number, got {width_policy!r}") from None
    if not (width > 0 and math.isfinite(width)):
        raise ValidationError(f"fixed bin width must be positive, got {width_policy!r}")
    return width


def build_bins(values, width_policy: WidthPolicy = "auto", feature_index: int = 0) -> FeatureBins:
    """Equal-width histogram starting at ``min(values)``.

    Bin count is ``max(1, ceil((max - min) / width))``; the last edge is
    pinned to ``max(values)``.
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValidationError("cannot build a histogram from no values")
    if not np.all(np.isfinite(v)):
        raise ValidationError("histogram values must be finite")
    lo, hi = float(v.min()), float(v.max())
    width = _resolve_width(v, width_policy)
    if hi == lo or width <= 0:
        return FeatureBins(feature_index, np.array([lo, hi]), np.array([v.size]), int(v.size))

    n_bins = max(1, math.ceil((hi - lo) / width))
    if n_bins > MAX_BINS:
        raise ValidationError(f"width {width} would give {n_bins} bins")
    edges = lo + width * np.arange(n_bins + 1, dtype=np.float64)
    edges[-1] = hi
    # rounding can push an interior edge onto or past the maximum
    while edges.size > 2 and edges[-2] >= hi:
        edges = np.delete(edges, -2)
    fb = FeatureBins(feature_index, edges, np.zeros(edges.size - 1, dtype=np.int64), int(v.size))
    counts = np.bincount(fb.index_of(v), minlength=fb.n_bins)
    return FeatureBins(feature_index, edges, counts, int(v.size))


def bin_of_value(x: float, fb: FeatureBins) -> int:
    """Index of the bin holding ``x``, or ``OUT_OF_RANGE``."""
    return int(fb.index_of(x))


@dataclass(frozen=True)
class StatModel:
    per_feature_bins: tuple[FeatureBins, ...]
    per_feature_anomalous: tuple[tuple[int, ...], ...]
    t: float
    k: int
    width_policy: WidthPolicy = "auto"

    def __post_init__(self):
        n = len(self.per_feature_bins)
        if len(self.per_feature_anomalous) != n:
            raise ValidationError("bins and anomalous sets are not aligned")
        _check_tk(self.t, self.k, n)
        for fb, anomalous in zip(self.per_feature_bins, self.per_feature_anomalous):
            rf = fb.rel_freq
            for i in anomalous:
                if not 0 <= i < fb.n_bins or not rf[i] < self.t:
                    raise ValidationError(f"bin {i} of feature {fb.feature_index} is not anomalous")

    @property
    def n_features(self) -> int:
        return len(self.per_feature_bins)

    def with_k(self, k: int) -> "StatModel":
        return StatModel(self.per_feature_bins, self.per_feature_anomalous, self.t, k, self.width_policy)

    def anomalous_mask(self, X) -> np.ndarray:
        """Boolean m x n matrix: value lies in an anomalous bin or out of range."""
        X = _matrix(X)
        if X.shape[1] != self.n_features:
            raise ValidationError(f"model has {self.n_features} features, input has {X.shape[1]}")
        mask = np.zeros(X.shape, dtype=bool)
        for j, (fb, anomalous) in enumerate(zip(self.per_feature_bins, self.per_feature_anomalous)):
            flags = np.zeros(fb.n_bins + 1, dtype=bool)  # last slot catches OUT_OF_RANGE
            flags[list(anomalous)] = True
            flags[-1] = True
            mask[:, j] = flags[fb.index_of(X[:, j])]
        return mask

    def to_dict(self) -> dict:
        return {
            "t": format_float(self.t),
            "k": self.k,
            "width_policy": self.width_policy if self.width_policy == "auto" else format_float(self.width_policy),
            "features": [
                {
                    "index": fb.feature_index,
                    "edges": [format_float(e) for e in fb.edges],
                    "counts": [int(c) for c in fb.counts],
                    "rel_freq": [format_float(r) for r in fb.rel_freq],
                    "total_count": fb.total_count,
                    "anomalous": list(anomalous),
                }
                for fb, anomalous in zip(self.per_feature_bins, self.per_feature_anomalous)
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "StatModel":
        bins, anomalous = [], []
        for f in d["features"]:
            bins.append(FeatureBins(int(f["index"]), np.array([float(e) for e in f["edges"]]),
                                    np.array(f["counts"], dtype=np.int64), int(f["total_count"])))
            anomalous.append(tuple(int(i) for i in f["anomalous"]))
        wp = d["width_policy"]
        return cls(tuple(bins), tuple(anomalous), float(d["t"]), int(d["k"]),
                   wp if wp == "auto" else float(wp))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "StatModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_tk(t: float, k: int, n: int) -> None:
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t must lie in [0, 1], got {t}")
    if int(k) != k or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k}")
    if n and k >= n:
        raise ValidationError(f"k must be smaller than the feature count ({n}), got {k}")


def select_anomalous_bins(data, t: float = 0.05, width_policy: WidthPolicy = "auto", k: int = 3) -> StatModel:
    """Histogram every feature and keep the bins with ``rel_freq < t``."""
    X = _matrix(data)
    if X.shape[0] == 0:
        raise ValidationError("cannot fit on an empty dataset")
    _check_tk(t, k, X.shape[1])
    B, A = [], []
    for j in range(X.shape[1]):
        fb = build_bins(X[:, j], width_policy, feature_index=j)
        B.append(fb)
        A.append(tuple(int(i) for i in np.flatnonzero(fb.rel_freq < t)))
    return StatModel(tuple(B), tuple(A), float(t), int(k), width_policy)


fit = select_anomalous_bins


def label_instance(d: Sequence[float], model: StatModel) -> int:
    x = np.asarray(d, dtype=np.float64).reshape(-1)
    if x.shape[0] != model.n_features:
        raise ValidationError(f"instance has {x.shape[0]} values, model expects {model.n_features}")
    return int(label_dataset(x.reshape(1, -1), model)[0])


def label_dataset(data, model: StatModel) -> np.ndarray:
    """0/1 artificial label per row."""
    X = _matrix(data)
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return (model.anomalous_mask(X).sum(axis=1) >= model.k).astype(np.int64)


def anomaly_rate(data, model: StatModel) -> float:
    return float(label_dataset(data, model).mean())


def calibrate_t(
    data,
    k: int,
    target_rate: float,
    width_policy: WidthPolicy = "auto",
    grid: Sequence[float] = CALIBRATION_GRID,
) -> float:
    """Grid value of ``t`` whose artificial anomaly rate is closest to ``target_rate``.

    Ties go to the smaller ``t``.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValidationError(f"target_rate must lie in (0, 1), got {target_rate}")
    X = _matrix(data)
    if X.shape[0] == 0:
        raise ValidationError("cannot calibrate on an empty dataset")
    best_t, best_err = None, math.inf
    for t in sorted(grid):
        err = abs(anomaly_rate(X, select_anomalous_bins(X, t, width_policy, k)) - target_rate)
        if err < best_err:
            best_t, best_err = float(t), err
    return best_t
