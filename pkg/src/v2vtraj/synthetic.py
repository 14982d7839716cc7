"""Synthetic cut-in scenarios built from the four-phase maneuver taxonomy.

A scenario is a straight-road drive split into intention (steady cruise),
preparation (smooth speed change), transition (lane shift driven by a
two-lobe sinusoidal lateral acceleration) and completion (steady cruise in
the new lane). Kinematic channels are derived analytically from the road-frame
motion so that position, heading, yaw rate and steering agree with the
bicycle model; sensor noise is added last.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InfeasibleSpec
from .trajectory_data import (
    COLUMNS,
    DEFAULT_RATE_HZ,
    Trajectory,
    geodetic_from_offset,
    write_trajectory_csv,
)

log = logging.getLogger(__name__)

G = 9.81
MAX_LATERAL_ACCEL = 0.2 * G

DEFAULT_NOISE = {
    "speed": 0.05,  # m/s
    "heading": 0.3,  # deg
    "steering_angle": 1.0,  # deg
    "accel_lon": 0.05,  # m/s^2
    "accel_lat": 0.05,  # m/s^2
    "yaw_rate": 0.01,  # rad/s
}


@dataclass(frozen=True)
class CutInSpec:
    seed: int = 0
    initial_speed: float = 25.0
    speed_delta: float = 0.0
    lane_offset: float = 3.5  # positive = to the right of travel
    phase_durations: tuple = (2.0, 2.5, 4.5, 3.0)  # intention, preparation, transition, completion
    lateral_accel_peak: float = MAX_LATERAL_ACCEL
    noise_std: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))
    road_heading: float = 0.0  # deg clockwise from north
    origin_lat: float = 42.28
    origin_lon: float = -83.74
    elevation: float = 250.0
    veh_length: float = 5.0
    veh_width: float = 1.8

    def validate(self) -> None:
        if not self.initial_speed > 0:
            raise InfeasibleSpec(f"initial_speed must be positive, got {self.initial_speed}")
        if not self.initial_speed + self.speed_delta > 0:
            raise InfeasibleSpec("speed_delta would stop or reverse the vehicle")
        if len(self.phase_durations) != 4:
            raise InfeasibleSpec("phase_durations needs exactly four entries")
        intention, preparation, transition, completion = self.phase_durations
        if min(intention, preparation, completion) <= 0 or transition < 0:
            raise InfeasibleSpec(f"invalid phase durations {self.phase_durations}")
        if not 0 < self.lateral_accel_peak <= MAX_LATERAL_ACCEL + 1e-12:
            raise InfeasibleSpec(
                f"lateral_accel_peak {self.lateral_accel_peak} outside (0, {MAX_LATERAL_ACCEL}]"
            )
        if transition > 0 and required_lateral_peak(self.lane_offset, transition) > self.lateral_accel_peak:
            raise InfeasibleSpec(
                f"offset {self.lane_offset} m needs peak "
                f"{required_lateral_peak(self.lane_offset, transition):.3f} m/s^2 in {transition} s, "
                f"bound is {self.lateral_accel_peak:.3f}"
            )
        if any(v < 0 for v in self.noise_std.values()):
            raise InfeasibleSpec("noise std devs must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phase_durations"] = list(self.phase_durations)
        return d


def required_lateral_peak(lane_offset: float, transition: float) -> float:
    """Peak of ``A sin(2 pi t / T)`` over one period that shifts ``lane_offset``.

    Integrating twice from rest gives ``y(T) = A T^2 / (2 pi)``.
    """
    return 2.0 * math.pi * abs(lane_offset) / transition**2


def _road_frame(spec: CutInSpec, t: np.ndarray) -> dict:
    """Noiseless longitudinal/lateral kinematics along the road axis."""
    t_int, t_prep, t_tr, _ = spec.phase_durations
    v0, dv = spec.initial_speed, spec.speed_delta

    # longitudinal: raised-cosine speed ramp during preparation
    tau = np.clip(t - t_int, 0.0, t_prep)
    in_prep = (t > t_int) & (t < t_int + t_prep)
    u = v0 + dv * 0.5 * (1.0 - np.cos(math.pi * tau / t_prep))
    au = np.where(in_prep, dv * math.pi / (2.0 * t_prep) * np.sin(math.pi * tau / t_prep), 0.0)
    x = (
        v0 * t
        + dv * 0.5 * (tau - t_prep / math.pi * np.sin(math.pi * tau / t_prep))
        + dv * np.maximum(t - t_int - t_prep, 0.0)
    )

    # lateral: accelerate-then-decelerate sine pulse during transition
    start = t_int + t_prep
    if t_tr > 0:
        amp = math.copysign(required_lateral_peak(spec.lane_offset, t_tr), spec.lane_offset)
        w = 2.0 * math.pi / t_tr
        s = np.clip(t - start, 0.0, t_tr)
        in_tr = (t > start) & (t < start + t_tr)
        ay = np.where(in_tr, amp * np.sin(w * s), 0.0)
        vy = amp / w * (1.0 - np.cos(w * s))
        y = amp / w * (s - np.sin(w * s) / w)
    else:
        ay = vy = y = np.zeros_like(t)

    return {"x": x, "y": y, "u": u, "vy": vy, "au": au, "ay": ay}


def generate_cutin(spec: CutInSpec, rate_hz: float = DEFAULT_RATE_HZ, scenario_id: str = "cutin") -> Trajectory:
    """Render one cut-in scenario as a BSM trajectory."""
    spec.validate()
    total = float(sum(spec.phase_durations))
    n = int(round(total * rate_hz))
    t = np.arange(n) / rate_hz
    m = _road_frame(spec, t)

    u, vy, au, ay = m["u"], m["vy"], m["au"], m["ay"]
    speed = np.hypot(u, vy)
    theta = np.arctan2(vy, u)
    theta_dot = (u * ay - vy * au) / speed**2
    accel_lon = (u * au + vy * ay) / speed
    accel_lat = speed * theta_dot
    steering = np.arctan(theta_dot * spec.veh_length / speed)

    psi = math.radians(spec.road_heading)
    east = m["x"] * math.sin(psi) + m["y"] * math.cos(psi)
    north = m["x"] * math.cos(psi) - m["y"] * math.sin(psi)
    lat, lon = geodetic_from_offset(east, north, spec.origin_lat, spec.origin_lon)

    channels = {
        "t": t,
        "lat": lat,
        "lon": lon,
        "elev": np.full(n, spec.elevation),
        "speed": speed,
        "heading": spec.road_heading + np.degrees(theta),
        "steering_angle": np.degrees(steering),
        "accel_lon": accel_lon,
        "accel_lat": accel_lat,
        "accel_vert": np.zeros(n),
        "yaw_rate": theta_dot,
        "veh_length": np.full(n, spec.veh_length),
        "veh_width": np.full(n, spec.veh_width),
    }

    rng = np.random.default_rng(spec.seed)
    for name in sorted(spec.noise_std):
        std = spec.noise_std[name]
        noise = rng.normal(0.0, 1.0, n)
        if std > 0:
            channels[name] = channels[name] + std * noise
    channels["speed"] = np.maximum(channels["speed"], 0.0)
    heading = channels["heading"] % 360.0
    channels["heading"] = np.where(heading >= 360.0, 0.0, heading)

    values = np.column_stack([channels[c] for c in COLUMNS])
    return Trajectory.from_array(scenario_id, rate_hz, values)


@dataclass(frozen=True)
class CorpusRanges:
    """Uniform sampling ranges; completion fills the rest of ``total_duration``."""

    initial_speed: tuple = (20.0, 30.0)
    speed_delta: tuple = (-4.0, 4.0)
    lane_offset: tuple = (3.2, 3.8)
    intention: tuple = (1.5, 2.5)
    preparation: tuple = (2.0, 3.0)
    transition: tuple = (4.0, 5.0)
    total_duration: float = 12.0
    lateral_accel_peak: float = MAX_LATERAL_ACCEL
    road_heading: tuple = (0.0, 360.0)
    origin_lat: tuple = (42.25, 42.30)
    origin_lon: tuple = (-83.78, -83.70)
    both_sides: bool = True
    noise_std: dict = field(default_factory=lambda: dict(DEFAULT_NOISE))


def _draw(rng: np.random.Generator, bounds) -> float:
    lo, hi = bounds
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def sample_spec(ranges: CorpusRanges, seed: int, index: int, attempt: int = 0) -> CutInSpec:
    """Draw the parameters of scenario ``index`` from its own RNG stream."""
    rng = np.random.default_rng([seed, index, attempt])
    intention = _draw(rng, ranges.intention)
    preparation = _draw(rng, ranges.preparation)
    transition = _draw(rng, ranges.transition)
    completion = ranges.total_duration - intention - preparation - transition
    offset = _draw(rng, ranges.lane_offset)
    if ranges.both_sides and rng.random() < 0.5:
        offset = -offset
    return CutInSpec(
        seed=int(rng.integers(0, 2**31 - 1)),
        initial_speed=_draw(rng, ranges.initial_speed),
        speed_delta=_draw(rng, ranges.speed_delta),
        lane_offset=offset,
        phase_durations=(intention, preparation, transition, completion),
        lateral_accel_peak=ranges.lateral_accel_peak,
        noise_std=dict(ranges.noise_std),
        road_heading=_draw(rng, ranges.road_heading),
        origin_lat=_draw(rng, ranges.origin_lat),
        origin_lon=_draw(rng, ranges.origin_lon),
    )


def generate_corpus(n: int, seed: int, ranges: CorpusRanges | None = None,
                    rate_hz: float = DEFAULT_RATE_HZ, max_attempts: int = 100):
    """Generate ``n`` scenarios; returns ``(trajectories, specs)``.

    Infeasible draws are logged and redrawn from the next attempt stream of
    the same index, so the corpus is a pure function of ``(n, seed, ranges)``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    ranges = ranges or CorpusRanges()
    trajs, specs = [], []
    for i in range(n):
        for attempt in range(max_attempts):
            spec = sample_spec(ranges, seed, i, attempt)
            try:
                traj = generate_cutin(spec, rate_hz, scenario_id=f"cutin_{i:03d}")
            except InfeasibleSpec as exc:
                log.warning("scenario %d attempt %d infeasible: %s", i, attempt, exc)
                continue
            break
        else:
            raise InfeasibleSpec(f"scenario {i}: no feasible draw in {max_attempts} attempts")
        trajs.append(traj)
        specs.append(spec)
    return trajs, specs


def write_corpus(directory, trajs, specs, extra: dict | None = None) -> Path:
    """One CSV per scenario plus ``manifest.json`` listing ids and parameters."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for traj in trajs:
        write_trajectory_csv(traj, directory / f"{traj.scenario_id}.csv")
    manifest = {
        "scenarios": [
            {"scenario_id": tr.scenario_id, "spec": sp.to_dict()} for tr, sp in zip(trajs, specs)
        ]
    }
    manifest.update(extra or {})
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
