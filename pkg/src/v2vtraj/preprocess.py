"""Signal conditioning: deadband smoothing, differencing and [-1, 1] scaling.

Per channel the order is smooth -> difference -> normalize. Normalizers are
fitted on training series only and stored with the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DegenerateRange

# Deadbands in the units used by EnuTrack (radians for angles).
DEADBANDS = {
    "steering_angle": math.radians(3.0),
    "heading": 0.1,
    "speed": 0.1,
    "accel_lon": 0.1,
    "yaw_rate": 0.01,
    "x": 0.0,
    "y": 0.0,
}


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    deadband: float
    norm_min: float
    norm_max: float

    def __post_init__(self):
        if not self.norm_max > self.norm_min:
            raise DegenerateRange(f"{self.name}: norm_max must exceed norm_min")
        if self.deadband < 0:
            raise ValueError(f"{self.name}: deadband must be >= 0")

    def normalize(self, x):
        return normalize(self, x)

    def denormalize(self, u):
        return denormalize(self, u)

    def to_dict(self) -> dict:
        return {"name": self.name, "deadband": self.deadband,
                "norm_min": self.norm_min, "norm_max": self.norm_max}


def deadband_smooth(series, threshold: float) -> np.ndarray:
    """Hold the last output until the input moves at least ``threshold`` away."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    x = np.asarray(series, dtype=float)
    out = x.copy()
    if threshold == 0 or len(x) == 0:
        return out
    held = x[0]
    for i in range(1, len(x)):
        if abs(x[i] - held) >= threshold:
            held = x[i]
        out[i] = held
    return out


def difference(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if len(x) < 2:
        raise DegenerateInput(f"differencing needs at least 2 samples, got {len(x)}")
    return x[1:] - x[:-1]


def reconstruct(first: float, diffs) -> np.ndarray:
    """Rebuild a series from its first value and successive differences."""
    d = np.asarray(diffs, dtype=float)
    out = np.empty(len(d) + 1)
    out[0] = first
    np.cumsum(d, out=out[1:])
    out[1:] += first
    return out


def fit_normalizer(series, name: str = "", deadband: float | None = None) -> ChannelSpec:
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise DegenerateRange(f"{name}: cannot fit a normalizer on an empty series")
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DegenerateRange(f"{name}: training series is constant ({lo})")
    if deadband is None:
        deadband = DEADBANDS.get(name, 0.0)
    return ChannelSpec(name, float(deadband), lo, hi)


def normalize(spec: ChannelSpec, x):
    """Affine map of [norm_min, norm_max] onto [-1, 1]; no clipping."""
    x = np.asarray(x, dtype=float)
    return 2.0 * (x - spec.norm_min) / (spec.norm_max - spec.norm_min) - 1.0


def denormalize(spec: ChannelSpec, u):
    u = np.asarray(u, dtype=float)
    return (u + 1.0) * 0.5 * (spec.norm_max - spec.norm_min) + spec.norm_min


def condition(series, spec: ChannelSpec) -> np.ndarray:
    """Smooth, difference and normalize one raw channel with a fitted spec."""
    return normalize(spec, difference(deadband_smooth(series, spec.deadband)))
