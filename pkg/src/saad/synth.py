"""Synthetic under-brake maneuver data with injected sensor anomalies.

Each maneuver starts at a random speed and runs one or more brake
activations. Speed and pedal position are simulation inputs and stay within
their physical ranges; anomalies are injected into the measured channels
only. Labels mark the perturbed rows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from saad.dataset import Dataset, write_csv  # noqa: F401  (write_csv re-exported)
from saad.errors import ValidationError

BASE_CHANNELS = (
    "vehicle_speed", "brake_pedal", "master_cyl_pressure",
    "wheel_speed_fl", "wheel_speed_fr", "wheel_speed_rl", "wheel_speed_rr",
    "deceleration", "long_accel",
    "pad_temp_fl", "pad_temp_fr", "pad_temp_rl", "pad_temp_rr",
    "abs_valve_current", "yaw_rate", "steering_angle", "battery_voltage", "ambient_temp",
)
# speed and pedal are inputs of the simulated loop, not sensor readings
PROTECTED = frozenset({0, 1})
MODES = ("spike", "drift", "stuck")
DT = 0.1


@dataclass(frozen=True)
class ManeuverConfig:
    n_maneuvers: int = 50
    samples_per_maneuver: int = 100
    speed_range: tuple[float, float] = (0.0, 150.0)
    brake_pressure_range: tuple[float, float] = (5.0, 100.0)
    n_features: int = 18
    anomaly_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "speed_range", tuple(map(float, self.speed_range)))
        object.__setattr__(self, "brake_pressure_range", tuple(map(float, self.brake_pressure_range)))
        if self.n_maneuvers < 0 or self.samples_per_maneuver < 1:
            raise ValidationError("n_maneuvers must be >= 0 and samples_per_maneuver >= 1")
        lo, hi = self.speed_range
        if not 0.0 <= lo < hi <= 150.0:
            raise ValidationError(f"speed_range must lie within [0, 150], got {self.speed_range}")
        lo, hi = self.brake_pressure_range
        if not 5.0 <= lo < hi <= 100.0:
            raise ValidationError(f"brake_pressure_range must lie within [5, 100], got {self.brake_pressure_range}")
        if self.n_features < 2:
            raise ValidationError("n_features must be at least 2")
        if not 0.0 < self.anomaly_rate < 1.0:
            raise ValidationError("anomaly_rate must lie in (0, 1)")

    @property
    def n_rows(self) -> int:
        return self.n_maneuvers * self.samples_per_maneuver


@dataclass(frozen=True)
class AnomalySpec:
    affected_feature_count: int = 3
    magnitude_sigmas: float = 4.0
    mode: str = "spike"
    weight: float = 1.0
    direction: int = 0  # +1 / -1 fixes the sign of spike and drift offsets, 0 draws it per value

    def __post_init__(self):
        if self.affected_feature_count < 1:
            raise ValidationError("affected_feature_count must be >= 1")
        if not self.magnitude_sigmas > 0:
            raise ValidationError("magnitude_sigmas must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.weight > 0:
            raise ValidationError("weight must be positive")
        if self.direction not in (-1, 0, 1):
            raise ValidationError("direction must be -1, 0 or 1")


def feature_names(n_features: int) -> tuple[str, ...]:
    extra = tuple(f"noise_{i}" for i in range(max(0, n_features - len(BASE_CHANNELS))))
    return (BASE_CHANNELS + extra)[:n_features]


def _maneuver(cfg: ManeuverConfig, rng: np.random.Generator) -> np.ndarray:
    S = cfg.samples_per_maneuver
    v_lo, v_hi = cfg.speed_range
    p_lo, p_hi = cfg.brake_pressure_range

    # pedal: smooth press/hold/release pulses on top of the resting position
    pedal = np.full(S, p_lo)
    for _ in range(rng.integers(1, 4)):
        start = rng.integers(0, S)
        length = rng.integers(max(2, S // 8), max(3, S // 2))
        level = rng.uniform(p_lo + 0.2 * (p_hi - p_lo), p_hi)
        idx = np.arange(start, min(S, start + length))
        ramp = np.sin(np.pi * (idx - start) / length) ** 0.5
        pedal[idx] = np.maximum(pedal[idx], p_lo + (level - p_lo) * ramp)
    pedal = np.clip(pedal, p_lo, p_hi)

    # speed: braking decelerates, otherwise mild acceleration
    decel = 0.1 * (pedal - p_lo)                      # m/s^2
    speed = np.empty(S)
    v = rng.uniform(v_lo + 0.1 * (v_hi - v_lo), v_hi)
    for i in range(S):
        v += (-decel[i] if pedal[i] > p_lo + 1 else 0.3) * DT * 3.6
        v = min(max(v, v_lo), v_hi)
        speed[i] = v
    decel = np.where(speed > v_lo, decel, 0.0)

    mc_pressure = 1.5 * (pedal - p_lo) + rng.normal(0, 1.0, S)
    slip = 0.002 * (pedal - p_lo)
    wheel = [speed * (1 - slip * f) + rng.normal(0, 0.5, S) for f in (1.2, 1.2, 0.8, 0.8)]
    decel_meas = decel + rng.normal(0, 0.2, S)
    long_accel = -decel + rng.normal(0, 0.3, S)

    ambient = rng.uniform(15, 35)
    pads = []
    for f in (1.3, 1.3, 0.7, 0.7):
        T = np.empty(S)
        temp = ambient + rng.uniform(0, 60)
        for i in range(S):
            temp += DT * (0.05 * f * (pedal[i] - p_lo) * speed[i] / 10 - 0.02 * (temp - ambient))
            T[i] = temp
        pads.append(T + rng.normal(0, 0.5, S))

    abs_active = (pedal > p_lo + 0.75 * (p_hi - p_lo)) & (speed > 30)
    abs_current = np.where(abs_active, 2.0, 0.1) + rng.normal(0, 0.05, S)
    steering = rng.uniform(-10, 10) + rng.normal(0, 0.3, S)
    yaw = 0.001 * steering * speed + rng.normal(0, 0.2, S)
    battery = 13.8 - 0.002 * (pedal - p_lo) + rng.normal(0, 0.05, S)
    ambient_meas = ambient + rng.normal(0, 0.2, S)

    cols = [speed, pedal, mc_pressure, *wheel, decel_meas, long_accel, *pads,
            abs_current, yaw, steering, battery, ambient_meas]
    base = np.column_stack(cols)
    n = cfg.n_features
    if n <= base.shape[1]:
        return base[:, :n]
    return np.hstack([base, rng.normal(0, 1.0, (S, n - base.shape[1]))])


def simulate_clean(cfg: ManeuverConfig) -> np.ndarray:
    """Anomaly-free feature matrix, maneuvers stacked in order."""
    if cfg.n_maneuvers == 0:
        return np.zeros((0, cfg.n_features))
    blocks = [
        _maneuver(cfg, np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, i])))
        for i in range(cfg.n_maneuvers)
    ]
    return np.vstack(blocks)


def _as_specs(spec) -> tuple[AnomalySpec, ...]:
    specs = (spec,) if isinstance(spec, AnomalySpec) else tuple(spec)
    if not specs:
        raise ValidationError("need at least one anomaly spec")
    return specs


def inject(clean: np.ndarray, cfg: ManeuverConfig, spec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Perturb a random ``anomaly_rate`` share of rows.

    Returns ``(features, labels, kinds)`` where ``kinds[i]`` is the index of
    the anomaly spec applied to row i, or -1.
    """
    specs = _as_specs(spec)
    m, n = clean.shape
    eligible = np.array([j for j in range(n) if j not in PROTECTED])
    for s in specs:
        if s.affected_feature_count > eligible.size:
            raise ValidationError(
                f"affected_feature_count {s.affected_feature_count} exceeds the {eligible.size} injectable features"
            )
    X = clean.copy()
    labels = np.zeros(m, dtype=np.int64)
    kinds = np.full(m, -1, dtype=np.int64)
    if m == 0:
        return X, labels, kinds

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    sigma = clean.std(axis=0)
    sigma = np.where(sigma > 0, sigma, 1.0)
    S = cfg.samples_per_maneuver
    rows = np.sort(rng.choice(m, size=int(round(cfg.anomaly_rate * m)), replace=False))
    weights = np.array([s.weight for s in specs])
    choice = rng.choice(len(specs), size=rows.size, p=weights / weights.sum())
    for r, which in zip(rows, choice):
        s = specs[which]
        cols = rng.choice(eligible, size=s.affected_feature_count, replace=False)
        for j in cols:
            sign = s.direction or rng.choice((-1.0, 1.0))
            if s.mode == "spike":
                delta = sign * s.magnitude_sigmas * sigma[j] * rng.uniform(0.8, 1.2)
            elif s.mode == "drift":
                delta = sign * s.magnitude_sigmas * sigma[j] * rng.uniform(0.5, 1.0)
            else:
                # frozen sensor: repeats a reading from earlier in the maneuver
                start = (r // S) * S
                src = start + rng.integers(0, max(1, r - start)) if r > start else r
                delta = clean[src, j] - clean[r, j]
                if delta == 0:
                    delta = s.magnitude_sigmas * sigma[j]
            X[r, j] = clean[r, j] + delta
            if X[r, j] == clean[r, j]:
                X[r, j] = np.nextafter(clean[r, j], math.inf)
        labels[r] = 1
        kinds[r] = which
    return X, labels, kinds


def default_anomalies() -> tuple[AnomalySpec, ...]:
    return (
        AnomalySpec(affected_feature_count=4, magnitude_sigmas=5.0, mode="spike", weight=1.0),
        AnomalySpec(affected_feature_count=3, magnitude_sigmas=1.5, mode="drift", weight=1.0),
    )


def generate(cfg: ManeuverConfig, spec: AnomalySpec | Sequence[AnomalySpec] | None = None) -> Dataset:
    """Simulated maneuvers with ground-truth labels; same config, same data."""
    specs = default_anomalies() if spec is None else _as_specs(spec)
    clean = simulate_clean(cfg)
    X, labels, _ = inject(clean, cfg, specs)
    S = cfg.samples_per_maneuver
    return Dataset(
        feature_names=feature_names(cfg.n_features),
        features=X,
        labels=labels,
        row_ids=tuple(f"m{i // S:04d}:{i % S}" for i in range(X.shape[0])),
    )
