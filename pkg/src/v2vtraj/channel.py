"""Lossy V2V link: i.i.d. whole-packet drops and zero-order-hold recovery."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .trajectory_data import Trajectory, write_trajectory_csv


@dataclass(frozen=True)
class ChannelConfig:
    drop_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError(f"drop_rate must lie in [0, 1], got {self.drop_rate}")


@dataclass(frozen=True)
class LossyStream:
    """Received packets on the nominal sample grid; ``None`` marks a drop."""

    scenario_id: str
    rate_hz: float
    times: tuple
    received: tuple
    drop_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.received)


def drop_mask(n: int, cfg: ChannelConfig) -> np.ndarray:
    """Boolean mask of dropped samples; sample 0 always arrives."""
    rng = np.random.default_rng(cfg.seed)
    mask = rng.random(n) < cfg.drop_rate
    if n:
        mask[0] = False
    return mask


def apply_drops(traj: Trajectory, cfg: ChannelConfig) -> LossyStream:
    if len(traj) == 0:
        raise ValueError("cannot transmit an empty trajectory")
    mask = drop_mask(len(traj), cfg)
    received = tuple(None if lost else rec for rec, lost in zip(traj.records, mask))
    times = tuple(rec.t for rec in traj.records)
    return LossyStream(traj.scenario_id, traj.rate_hz, times, received, mask)


def zero_order_hold(stream: LossyStream) -> Trajectory:
    """Fill each gap with the latest received record, re-stamped on the grid."""
    if len(stream) == 0 or stream.received[0] is None:
        raise ValueError("zero-order hold needs a received first sample")
    out = []
    last = None
    for t, rec in zip(stream.times, stream.received):
        if rec is not None:
            last = rec
            out.append(rec)
        else:
            out.append(replace(last, t=t))
    return Trajectory(stream.scenario_id, stream.rate_hz, tuple(out))


def degrade(traj: Trajectory, cfg: ChannelConfig) -> tuple[Trajectory, np.ndarray]:
    """Drop and hold in one step; returns the held trajectory and drop mask."""
    if cfg.drop_rate == 0.0:
        return traj, np.zeros(len(traj), dtype=bool)
    stream = apply_drops(traj, cfg)
    return zero_order_hold(stream), stream.drop_mask


def write_lossy_csv(stream: LossyStream, path):
    """Export the held stream with a trailing 0/1 ``dropped`` column."""
    held = zero_order_hold(stream)
    return write_trajectory_csv(held, path, {"dropped": [int(v) for v in stream.drop_mask]})


def hold_indices(mask) -> np.ndarray:
    """Index of the most recent received sample at each position."""
    mask = np.asarray(mask, dtype=bool)
    idx = np.where(mask, 0, np.arange(len(mask)))
    return np.maximum.accumulate(idx)


def hold_track(track, mask):
    """Zero-order hold applied to an ENU track; timestamps stay on the grid."""
    src = hold_indices(mask)
    arrays = {
        f.name: getattr(track, f.name)[src]
        for f in fields(track)
        if isinstance(getattr(track, f.name), np.ndarray) and f.name != "t"
    }
    return replace(track, **arrays)
