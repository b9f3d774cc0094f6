"""Experiment configuration, execution, metrics, and benchmarking."""
from __future__ import annotations

import dataclasses
import json
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import dataset as dataset_io
from .errors import ConfigError, DataError
from .eskf import (
    VARIANTS,
    EngineConfig,
    Event,
    FusionEngine,
    ImuSample,
    NominalState,
    OdometrySample,
)
from .linalg import spd_solve
from .sim import NoiseSpec, ScenarioSpec, SensorSpec, TruthTrajectory, generate_truth, sample_sensors
from .so3 import quat_conjugate, quat_multiply, quat_to_rotvec

SCENARIO_KINDS = ("hover", "waypoints", "figure8")


@dataclass
class RunConfig:
    """Everything needed to reproduce one fusion run."""

    filter: str = "vb-amcckf"
    window: int = 10
    rho: float = 0.97
    beta: float = 1.0
    sigma_mode: str = "adaptive"
    sigma_static: float = 2.0
    sigma_min: float = 0.5
    sigma_max: float = 1e6
    r0: float = 0.01
    r0_overrides: dict[str, float] = field(default_factory=dict)
    q0: float = 1e-5
    p0: float = 1e-4
    adapt_q: bool = True
    seed: int = 0
    scenario: Optional[str] = None
    dataset: Optional[str] = None
    truth: Optional[str] = None
    out: Optional[str] = None
    # Scenario synthesis knobs (ignored in dataset mode).
    duration: float = 30.0
    imu_rate: float = 100.0
    odom_rate: float = 10.0
    sensors: int = 2
    noise_std: float = 0.02
    imu_accel_std: float = 0.02
    imu_gyro_std: float = 0.002
    jump_probability: float = 0.0
    jump_magnitude: float = 0.0
    jump_duration: int = 1
    drift_rate: float = 0.0
    drift_start: float = 0.0
    drift_duration: float = math.inf
    faulty_sensor: Optional[str] = None

    def validate(self) -> None:
        problems = []
        if self.filter not in VARIANTS:
            problems.append(f"filter must be one of {VARIANTS}, got '{self.filter}'")
        if self.window < 1:
            problems.append(f"window must be >= 1, got {self.window}")
        if not 0.9 <= self.rho <= 1.0:
            problems.append(f"rho must lie in [0.9, 1.0], got {self.rho}")
        if not 0.0 < self.beta <= 1.0:
            problems.append(f"beta must lie in (0, 1], got {self.beta}")
        if self.sigma_mode not in ("static", "adaptive"):
            problems.append(f"sigma_mode must be 'static' or 'adaptive', got '{self.sigma_mode}'")
        if self.sigma_static <= 0:
            problems.append("sigma_static must be positive")
        if not 0.0 < self.sigma_min < self.sigma_max:
            problems.append("sigma clamps must satisfy 0 < sigma_min < sigma_max")
        if self.r0 <= 0 or any(v <= 0 for v in self.r0_overrides.values()):
            problems.append("initial measurement noise scales must be positive")
        if self.q0 < 0:
            problems.append("q0 must be non-negative")
        if self.p0 <= 0:
            problems.append("p0 must be positive")
        if (self.scenario is None) == (self.dataset is None):
            problems.append("exactly one of scenario or dataset must be set")
        if self.scenario is not None and self.scenario not in SCENARIO_KINDS:
            problems.append(f"scenario must be one of {SCENARIO_KINDS}, got '{self.scenario}'")
        if self.scenario is not None:
            if self.duration <= 0 or self.imu_rate <= 0 or self.odom_rate <= 0:
                problems.append("duration and rates must be positive")
            if self.sensors < 1:
                problems.append("at least one odometry sensor is required")
        if problems:
            raise ConfigError("; ".join(problems))


def build_scenario(config: RunConfig) -> ScenarioSpec:
    """Expand a run configuration into a concrete scenario."""
    sensors = []
    for i in range(config.sensors):
        sensor_id = f"odom{i}"
        corrupted = config.faulty_sensor is None or config.faulty_sensor == sensor_id
        noise = NoiseSpec(
            gaussian_std=config.noise_std,
            jump_probability=config.jump_probability if corrupted else 0.0,
            jump_magnitude=config.jump_magnitude if corrupted else 0.0,
            jump_duration=config.jump_duration,
            drift_rate=config.drift_rate if corrupted else 0.0,
            drift_start=config.drift_start,
            drift_duration=config.drift_duration,
        )
        sensors.append(SensorSpec(sensor_id=sensor_id, rate=config.odom_rate, noise=noise))
    return ScenarioSpec(
        kind=config.scenario, duration=config.duration, imu_rate=config.imu_rate,
        sensors=sensors, imu_accel_std=config.imu_accel_std,
        imu_gyro_std=config.imu_gyro_std, seed=config.seed)


def build_engine(config: RunConfig, sensor_ids: list[str]) -> FusionEngine:
    engine_config = EngineConfig(
        variant=config.filter,
        process_noise=config.q0 * np.eye(9),
        window=config.window,
        forgetting=config.rho,
        smoothing=config.beta,
        sigma_mode=config.sigma_mode,
        sigma_static=config.sigma_static,
        sigma_min=config.sigma_min,
        sigma_max=config.sigma_max,
        adapt_q=config.adapt_q,
    )
    noise = {sid: config.r0_overrides.get(sid, config.r0) for sid in sensor_ids}
    return FusionEngine(engine_config, noise)


@dataclass
class MetricsReport:
    """Aggregated accuracy, consistency, adaptation, and timing figures."""

    variant: str
    seed: int
    correction_count: int = 0
    rmse_position: Optional[list[float]] = None
    rmse_position_total: Optional[float] = None
    rmse_velocity: Optional[list[float]] = None
    rmse_velocity_total: Optional[float] = None
    rmse_orientation: Optional[list[float]] = None
    rmse_orientation_total: Optional[float] = None
    nees_mean: Optional[float] = None
    correction_times: dict[str, list[float]] = field(default_factory=dict)
    r_trace: dict[str, list[float]] = field(default_factory=dict)
    kb_inverse: dict[str, list[float]] = field(default_factory=dict)
    dropped: dict[str, int] = field(default_factory=dict)
    timing_ns: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timing: bool = False) -> dict:
        out = dataclasses.asdict(self)
        if not include_timing:
            # Wall-clock figures vary run to run; keeping them out of the
            # metrics file makes repeated runs bitwise identical.
            del out["timing_ns"]
        return out


@dataclass
class ExperimentResult:
    config: RunConfig
    metrics: MetricsReport
    estimates: list[list[float]]
    timings_ns: np.ndarray
    engine: FusionEngine


def _init_from_odometry(events: list[Event]) -> NominalState:
    for event in events:
        if isinstance(event, OdometrySample):
            return NominalState(
                position=np.asarray(event.position, dtype=float).copy(),
                velocity=np.asarray(event.velocity, dtype=float).copy(),
                orientation=np.asarray(event.orientation, dtype=float).copy(),
                time=event.time)
    raise DataError("dataset contains no odometry events to initialize from")


def _collect_sensor_ids(events: list[Event]) -> list[str]:
    seen: list[str] = []
    for event in events:
        if isinstance(event, OdometrySample) and event.sensor_id not in seen:
            seen.append(event.sensor_id)
    return seen


def _orientation_error(q_est: np.ndarray, q_true: np.ndarray) -> np.ndarray:
    return quat_to_rotvec(quat_multiply(quat_conjugate(q_est), q_true))


def run_experiment(config: RunConfig) -> ExperimentResult:
    """Run one configuration end to end and aggregate metrics.

    In scenario mode the stream is synthesized (deterministically from the
    seed); in dataset mode it is read from disk, with ground truth optional.
    Output files, when requested, contain no wall-clock data and are
    therefore bitwise reproducible for a fixed configuration.
    """
    config.validate()
    truth: Optional[TruthTrajectory] = None
    if config.scenario is not None:
        scenario = build_scenario(config)
        truth = generate_truth(scenario)
        events = sample_sensors(truth, scenario)
        sensor_ids = [s.sensor_id for s in scenario.sensors]
        init_state = truth.state(0)
    else:
        events = dataset_io.ingest_dataset(config.dataset)
        if config.truth:
            truth = dataset_io.read_truth(config.truth)
        sensor_ids = _collect_sensor_ids(events)
        if not sensor_ids:
            raise DataError("dataset contains no odometry events")
        init_state = _init_from_odometry(events)
        events = [e for e in events if e.time >= init_state.time]

    engine = build_engine(config, sensor_ids)
    engine.initialize(init_state, config.p0)

    metrics = MetricsReport(variant=config.filter, seed=config.seed)
    for sid in sensor_ids:
        metrics.correction_times[sid] = []
        metrics.r_trace[sid] = []
        metrics.kb_inverse[sid] = []

    estimates: list[list[float]] = []
    timings = np.zeros(len(events))
    pos_err, vel_err, ori_err, nees_vals = [], [], [], []

    for i, event in enumerate(events):
        start = _time.perf_counter_ns()
        result = engine.process(event)
        timings[i] = _time.perf_counter_ns() - start

        state = engine.state
        estimates.append([state.time, *state.position, *state.orientation,
                          *state.velocity, *np.diag(engine.covariance)])

        if result is None:
            continue
        metrics.correction_count += 1
        metrics.correction_times[result.sensor_id].append(result.time)
        metrics.r_trace[result.sensor_id].append(result.noise_trace)
        metrics.kb_inverse[result.sensor_id].append(float(np.mean(1.0 / result.bandwidth)))

        if truth is not None:
            try:
                idx = truth.index_at(result.time)
            except ValueError:
                continue
            e_p = truth.positions[idx] - result.state.position
            e_v = truth.velocities[idx] - result.state.velocity
            e_q = _orientation_error(result.state.orientation, truth.orientations[idx])
            pos_err.append(e_p)
            vel_err.append(e_v)
            ori_err.append(e_q)
            e9 = np.concatenate([e_p, e_v, e_q])  # matches the error-state order
            sol, _ = spd_solve(result.record.cov_post, e9)
            nees_vals.append(float(e9 @ sol))

    if pos_err:
        pos_arr, vel_arr, ori_arr = map(np.asarray, (pos_err, vel_err, ori_err))
        metrics.rmse_position = list(np.sqrt(np.mean(pos_arr ** 2, axis=0)))
        metrics.rmse_position_total = float(np.sqrt(np.mean(np.sum(pos_arr ** 2, axis=1))))
        metrics.rmse_velocity = list(np.sqrt(np.mean(vel_arr ** 2, axis=0)))
        metrics.rmse_velocity_total = float(np.sqrt(np.mean(np.sum(vel_arr ** 2, axis=1))))
        metrics.rmse_orientation = list(np.sqrt(np.mean(ori_arr ** 2, axis=0)))
        metrics.rmse_orientation_total = float(np.sqrt(np.mean(np.sum(ori_arr ** 2, axis=1))))
        metrics.nees_mean = float(np.mean(nees_vals))

    metrics.dropped = dict(engine.dropped)
    metrics.timing_ns = {
        "mean": float(np.mean(timings)) if len(timings) else 0.0,
        "min": float(np.min(timings)) if len(timings) else 0.0,
        "max": float(np.max(timings)) if len(timings) else 0.0,
        "std": float(np.std(timings)) if len(timings) else 0.0,
    }

    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_estimates(out_dir / "estimates.csv", estimates)
        with open(out_dir / "metrics.json", "w") as fh:
            json.dump(metrics.to_dict(include_timing=False), fh, indent=2, sort_keys=True)
            fh.write("\n")

    return ExperimentResult(config=config, metrics=metrics, estimates=estimates,
                            timings_ns=timings, engine=engine)


_ESTIMATE_HEADER = ["time_s", "px", "py", "pz", "qw", "qx", "qy", "qz",
                    "vx", "vy", "vz"] + [f"c{i}" for i in range(9)]


def _write_estimates(path: Path, estimates: list[list[float]]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_ESTIMATE_HEADER)
        for row in estimates:
            writer.writerow([repr(float(v)) for v in row])


def compare(config: RunConfig, variants: list[str]) -> dict[str, ExperimentResult]:
    """Run several filter variants on the identical event stream."""
    results: dict[str, ExperimentResult] = {}
    for variant in variants:
        sub = dataclasses.replace(config, filter=variant)
        if config.out:
            sub = dataclasses.replace(sub, out=str(Path(config.out) / variant))
        results[variant] = run_experiment(sub)
    return results


def bench(config: RunConfig, variants: list[str], windows: list[int],
          repeats: int = 1) -> list[dict]:
    """Measure per-event processing time across variants and window lengths."""
    rows = []
    for variant in variants:
        for window in windows:
            for rep in range(repeats):
                sub = dataclasses.replace(config, filter=variant, window=window, out=None)
                result = run_experiment(sub)
                rows.append({
                    "variant": variant,
                    "window": window,
                    "repeat": rep,
                    "events": len(result.timings_ns),
                    "mean_ns": float(np.mean(result.timings_ns)),
                    "max_ns": float(np.max(result.timings_ns)),
                })
    return rows
