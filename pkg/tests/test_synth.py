import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saad import dataset, synth
from saad.errors import ValidationError


def small(**kw):
    base = dict(n_maneuvers=4, samples_per_maneuver=50, seed=3)
    base.update(kw)
    return synth.ManeuverConfig(**base)


def test_positive_rate_close_to_target():
    ds = synth.generate(synth.ManeuverConfig(n_maneuvers=100, samples_per_maneuver=100, anomaly_rate=0.3, seed=11))
    assert ds.n_rows == 10_000
    assert 0.24 <= ds.labels.mean() <= 0.36


def test_speed_within_envelope():
    ds = synth.generate(synth.ManeuverConfig(n_maneuvers=30, seed=2))
    speed = ds.features[:, ds.feature_names.index("vehicle_speed")]
    assert speed.min() >= 0 and speed.max() <= 150
    pedal = ds.features[:, ds.feature_names.index("brake_pedal")]
    assert pedal.min() >= 5 and pedal.max() <= 100


def test_same_seed_same_bytes(tmp_path):
    a = synth.write_csv(synth.generate(small()), tmp_path / "a.csv")
    b = synth.write_csv(synth.generate(small()), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_distinct_seeds_distinct_data():
    assert not np.array_equal(synth.generate(small(seed=1)).features, synth.generate(small(seed=2)).features)


def test_header_has_18_features_and_target(tmp_path):
    path = synth.write_csv(synth.generate(small()), tmp_path / "d.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert len(header) == 19 and header[-1] == "label"
    assert len(set(header)) == 19


def test_feature_names_pad_with_noise():
    assert synth.feature_names(20)[-2:] == ("noise_0", "noise_1")
    assert synth.feature_names(2) == ("vehicle_speed", "brake_pedal")
    assert synth.generate(small(n_features=22)).n_features == 22


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 16), st.sampled_from(synth.MODES), st.sampled_from((-1, 0, 1)))
def test_injected_rows_differ_in_exactly_count_features(seed, count, mode, direction):
    cfg = small(seed=seed, n_maneuvers=2, samples_per_maneuver=40, anomaly_rate=0.25)
    spec = synth.AnomalySpec(affected_feature_count=count, mode=mode, direction=direction)
    clean = synth.simulate_clean(cfg)
    X, labels, kinds = synth.inject(clean, cfg, spec)
    changed = (X != clean).sum(axis=1)
    assert np.all(changed[labels == 1] == count)
    assert np.all(changed[labels == 0] == 0)
    assert labels.sum() == round(0.25 * 80)
    assert np.all((kinds >= 0) == (labels == 1))
    assert np.all(X[:, sorted(synth.PROTECTED)] == clean[:, sorted(synth.PROTECTED)])


def test_generate_matches_simulate_plus_inject():
    cfg = small()
    specs = synth.default_anomalies()
    X, labels, _ = synth.inject(synth.simulate_clean(cfg), cfg, specs)
    ds = synth.generate(cfg)
    np.testing.assert_array_equal(ds.features, X)
    np.testing.assert_array_equal(ds.labels, labels)


def test_direction_fixes_sign():
    cfg = small(anomaly_rate=0.3)
    clean = synth.simulate_clean(cfg)
    X, labels, _ = synth.inject(clean, cfg, synth.AnomalySpec(3, 2.0, "spike", direction=-1))
    diff = (X - clean)[labels == 1]
    assert np.all(diff[diff != 0] < 0)


def test_round_trip(tmp_path):
    ds = synth.generate(small())
    path = synth.write_csv(ds, tmp_path / "d.csv")
    back = dataset.load_csv(path, dataset.ColumnSpec(ds.feature_names, "label"))
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_empty_dataset_writes_header_only(tmp_path):
    ds = synth.generate(small(n_maneuvers=0))
    assert ds.n_rows == 0
    text = synth.write_csv(ds, tmp_path / "e.csv").read_text()
    assert text.count("\n") == 1 and text.startswith("vehicle_speed,")


def test_config_errors():
    with pytest.raises(ValidationError):
        synth.ManeuverConfig(speed_range=(0, 200))
    with pytest.raises(ValidationError):
        synth.ManeuverConfig(brake_pressure_range=(0, 100))
    with pytest.raises(ValidationError):
        synth.ManeuverConfig(anomaly_rate=1.0)
    with pytest.raises(ValidationError):
        synth.ManeuverConfig(n_features=1)
    with pytest.raises(ValidationError):
        synth.AnomalySpec(mode="wobble")
    with pytest.raises(ValidationError):
        synth.inject(np.zeros((10, 4)), small(n_features=4), synth.AnomalySpec(affected_feature_count=3))
