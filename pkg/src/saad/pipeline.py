"""End-to-end stages behind the CLI subcommands.

Each stage reads its inputs from and writes its outputs to ``cfg.out_dir``
(input CSVs may live elsewhere), so stages can be rerun one at a time.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from saad import aggregator, bundle, dataset, fcn, metrics, stat_labeler, synth
from saad.config import RunConfig, SplitConfig, derive_seed
from saad.dataset import ColumnSpec, Dataset
from saad.errors import ValidationError

log = logging.getLogger(__name__)

STAT_MODEL = "stat_model.json"
FCN_BUNDLE = "fcn_bundle.json"
HISTORY = "train_history.json"
EVAL = "eval.json"


def default_splits() -> dict[str, SplitConfig]:
    """The bundled experiment: subtle positive drifts in training, plus unseen negative spikes at test time."""
    drift = synth.AnomalySpec(affected_feature_count=3, magnitude_sigmas=1.5, mode="drift", direction=1)
    spike = synth.AnomalySpec(affected_feature_count=5, magnitude_sigmas=8.0, mode="spike", direction=-1)
    return {
        "train": SplitConfig(synth.ManeuverConfig(n_maneuvers=50, anomaly_rate=0.15), (drift,)),
        "test": SplitConfig(synth.ManeuverConfig(n_maneuvers=15, anomaly_rate=0.15), (drift, spike)),
    }


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    return path


def _require_dir(path: Path) -> None:
    if not path.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {path}")


def generate_data(cfg: RunConfig) -> dict[str, Path]:
    _require_dir(cfg.out_dir)
    splits = {**default_splits(), **cfg.generate}
    written = {}
    for name, path in (("train", cfg.train_path), ("test", cfg.test_path)):
        split = splits[name]
        mcfg = replace(split.maneuvers, seed=derive_seed(cfg.seed, f"generate.{name}"))
        ds = synth.generate(mcfg, split.anomalies)
        written[name] = dataset.write_csv(ds, path, cfg.target_column)
        log.info("wrote %d rows to %s", ds.n_rows, path)
    return written


def column_spec(cfg: RunConfig, path: Path) -> ColumnSpec:
    """Configured columns, or every header column except the target."""
    if cfg.selected_features:
        return ColumnSpec(cfg.selected_features, cfg.target_column, cfg.categorical_columns)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None) or []
    features = tuple(h.strip() for h in header if h.strip() != cfg.target_column)
    return ColumnSpec(features, cfg.target_column, cfg.categorical_columns)


def _load_encoded(path: Path, spec: ColumnSpec, mapping=None) -> tuple[Dataset, dataset.CategoryMap]:
    ds = dataset.clean_rows(dataset.load_csv(path, spec))
    ds, mapping = dataset.encode_categoricals(ds, spec, mapping)
    return dataset.clean_rows(ds), mapping


def _write_labels(path: Path, ds: Dataset, labels: np.ndarray) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "stat_label"])
        for rid, y in zip(ds.row_ids, labels):
            w.writerow([rid, int(y)])
    return path


def fit_stat(cfg: RunConfig) -> dict:
    """Fit the histogram labeler on the configured split and label both splits."""
    spec = column_spec(cfg, cfg.train_path)
    train, mapping = _load_encoded(cfg.train_path, spec)
    test, _ = _load_encoded(cfg.test_path, spec, mapping)
    fit_on = train if cfg.stat.fit_split == "train" else test
    t = cfg.stat.t
    if cfg.stat.calibrate_target is not None:
        t = stat_labeler.calibrate_t(fit_on.features, cfg.stat.k, cfg.stat.calibrate_target, cfg.stat.width)
        log.info("calibrated t = %s for target rate %s", t, cfg.stat.calibrate_target)
    model = stat_labeler.select_anomalous_bins(fit_on.features, t, cfg.stat.width, cfg.stat.k)
    model.save(cfg.output(STAT_MODEL))
    labels = {}
    for name, ds in (("train", train), ("test", test)):
        labels[name] = stat_labeler.label_dataset(ds.features, model)
        _write_labels(cfg.output(f"stat_labels_{name}.csv"), ds, labels[name])
    return {"t": t, "k": model.k, "rates": {n: float(v.mean()) for n, v in labels.items()}}


def train_model(cfg: RunConfig) -> tuple[bundle.ModelBundle, fcn.TrainHistory]:
    spec = column_spec(cfg, cfg.train_path)
    raw = dataset.load_csv(cfg.train_path, spec)
    if raw.labels is None:
        raise ValidationError("training data has no target column")
    ds, mapping, scaler = dataset.prepare(raw, spec)
    net, history = fcn.train(ds, cfg.network_config())
    b = bundle.ModelBundle(net, ds.feature_names, scaler, mapping)
    bundle.save(b, cfg.output(FCN_BUNDLE))
    _write_json(cfg.output(HISTORY), history.to_dict())
    return b, history


@dataclass(frozen=True)
class ScoredSplit:
    stat: np.ndarray
    confidence: np.ndarray
    truth: np.ndarray

    @property
    def pairs(self) -> aggregator.PairBatch:
        return aggregator.PairBatch.from_confidences(self.stat, self.confidence)

    @property
    def fcn_labels(self) -> np.ndarray:
        return (self.confidence > 0.5).astype(np.int64)


def score_test(cfg: RunConfig) -> ScoredSplit:
    """Statistical labels, FCN confidences and ground truth for the test split."""
    for name in (STAT_MODEL, FCN_BUNDLE):
        if not cfg.output(name).is_file():
            raise FileNotFoundError(f"missing {cfg.output(name)}; run the earlier stages first")
    model = stat_labeler.StatModel.load(cfg.output(STAT_MODEL))
    b = bundle.load(cfg.output(FCN_BUNDLE))
    spec = ColumnSpec(b.feature_names, cfg.target_column, tuple(b.categories.codes))
    test, _ = _load_encoded(cfg.test_path, spec, b.categories)
    if test.labels is None:
        raise ValidationError("test data has no target column")
    scaled = dataset.apply_scaler(test, b.scaler)
    _, v = fcn.predict_batch(b.network, scaled.features)
    return ScoredSplit(stat_labeler.label_dataset(test.features, model), v, np.asarray(test.labels))


def run_sweep(cfg: RunConfig) -> aggregator.SweepGrid:
    scored = score_test(cfg)
    grid = aggregator.sweep(scored.pairs, scored.truth, cfg.a_values, cfg.b_values)
    aggregator.write_sweep(grid, cfg.out_dir)
    return grid


def evaluate(cfg: RunConfig) -> dict:
    """Metrics of the statistical labeler, the FCN and their aggregation at the configured (a, b)."""
    scored = score_test(cfg)
    params = cfg.aggregation
    combined = aggregator.aggregate_batch(scored.pairs, params)
    result = {
        "aggregation": {"a": params.a, "b": params.b},
        "statistical": metrics.report(scored.stat, scored.truth, cfg.beta).to_dict(),
        "fcn": metrics.report(scored.fcn_labels, scored.truth, cfg.beta).to_dict(),
        "aggregated": metrics.report(combined, scored.truth, cfg.beta).to_dict(),
        "disagreements": aggregator.decompose_disagreements(scored.pairs, params).to_dict(),
    }
    _write_json(cfg.output(EVAL), result)
    return result
