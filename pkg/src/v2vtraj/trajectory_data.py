"""BSM-style trajectory records, CSV I/O and the host-relative rotated ENU frame.

Tracks are stored one scenario per CSV file with the header::

    t,lat,lon,elev,speed,heading,steering_angle,accel_lon,accel_lat,accel_vert,yaw_rate,veh_length,veh_width

Units: seconds, degrees (WGS-84), meters, m/s, degrees clockwise from north,
degrees, m/s^2 (x3), rad/s (clockwise positive), meters, meters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    IndexOutOfRange,
    MissingColumn,
    NonFiniteValue,
    NonMonotoneTimestamp,
)

EARTH_RADIUS_M = 6378137.0
DEFAULT_RATE_HZ = 10.0

COLUMNS = (
    "t",
    "lat",
    "lon",
    "elev",
    "speed",
    "heading",
    "steering_angle",
    "accel_lon",
    "accel_lat",
    "accel_vert",
    "yaw_rate",
    "veh_length",
    "veh_width",
)


@dataclass(frozen=True)
class BsmRecord:
    t: float
    lat: float
    lon: float
    elev: float
    speed: float
    heading: float
    steering_angle: float
    accel_lon: float
    accel_lat: float
    accel_vert: float
    yaw_rate: float
    veh_length: float
    veh_width: float

    def validate(self, row=None) -> None:
        for name in COLUMNS:
            if not math.isfinite(getattr(self, name)):
                raise NonFiniteValue(f"{name} is not finite", row=row)
        if self.speed < 0:
            raise NonFiniteValue(f"speed {self.speed} is negative", row=row)
        if not 0.0 <= self.heading < 360.0:
            raise NonFiniteValue(f"heading {self.heading} outside [0, 360)", row=row)
        if self.veh_length <= 0:
            raise NonFiniteValue(f"veh_length {self.veh_length} must be positive", row=row)

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in COLUMNS)


@dataclass(frozen=True)
class Trajectory:
    """A time-ordered record sequence for one maneuver scenario."""

    scenario_id: str
    rate_hz: float
    records: tuple

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def as_array(self) -> np.ndarray:
        """Records as a ``(len, 13)`` array in ``COLUMNS`` order."""
        if not self.records:
            return np.empty((0, len(COLUMNS)))
        return np.array([r.as_tuple() for r in self.records], dtype=float)

    @classmethod
    def from_array(cls, scenario_id: str, rate_hz: float, values: np.ndarray) -> "Trajectory":
        recs = tuple(BsmRecord(*(float(v) for v in row)) for row in np.asarray(values, dtype=float))
        return cls(scenario_id, float(rate_hz), recs)

    def is_uniform(self, tol: float = 1e-6) -> bool:
        if len(self) < 2:
            return True
        dt = np.diff(self.column("t"))
        return bool(np.all(np.abs(dt - 1.0 / self.rate_hz) <= tol))

    def validate(self) -> None:
        prev = None
        for i, rec in enumerate(self.records, start=1):
            rec.validate(row=i)
            if prev is not None and not rec.t > prev:
                raise NonMonotoneTimestamp(f"t={rec.t} does not increase past {prev}", row=i)
            prev = rec.t


@dataclass(frozen=True)
class EnuTrack:
    """Planar track in the rotated ENU frame of a reference sample.

    ``x`` runs along the reference heading, ``y`` is positive to the right of
    it. Angles are radians relative to the reference heading, clockwise
    positive, so ``y`` grows when ``heading_rad`` is positive.
    """

    scenario_id: str
    rate_hz: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray
    heading_rad: np.ndarray
    steering_rad: np.ndarray
    accel_lon: np.ndarray
    yaw_rate: np.ndarray
    veh_length: float = 5.0
    ref_heading_deg: float = 0.0

    def __len__(self) -> int:
        return len(self.t)

    def channel(self, name: str) -> np.ndarray:
        if name == "steering_angle":
            return self.steering_rad
        if name == "heading":
            return self.heading_rad
        return getattr(self, name)

    def head(self, stop: int) -> "EnuTrack":
        """The first ``stop`` samples (a causal history prefix)."""
        arrays = {
            f.name: getattr(self, f.name)[:stop]
            for f in fields(self)
            if isinstance(getattr(self, f.name), np.ndarray)
        }
        return replace(self, **arrays)


def _parse_float(text: str, name: str, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise NonFiniteValue(f"{name}={text!r} is not a number", row=row) from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"{name} is not finite", row=row)
    return value


def _infer_rate(t: Sequence[float]) -> float:
    if len(t) < 2:
        return DEFAULT_RATE_HZ
    dt = float(np.median(np.diff(np.asarray(t, dtype=float))))
    return round(1.0 / dt, 6)


def parse_trajectory_csv(path) -> Trajectory:
    """Read one scenario file; the scenario id is the file stem.

    Raises ``MissingColumn``, ``NonFiniteValue`` or ``NonMonotoneTimestamp``,
    the last two carrying the 1-based data row that failed.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path.name}: missing column(s) {', '.join(missing)}")
        records = []
        prev_t = None
        for i, row in enumerate(reader, start=1):
            rec = BsmRecord(*(_parse_float(row[c], c, i) for c in COLUMNS))
            rec.validate(row=i)
            if prev_t is not None and not rec.t > prev_t:
                raise NonMonotoneTimestamp(f"t={rec.t} does not increase past {prev_t}", row=i)
            prev_t = rec.t
            records.append(rec)
    return Trajectory(path.stem, _infer_rate([r.t for r in records]), tuple(records))


def write_trajectory_csv(traj: Trajectory, path, extra_columns: dict | None = None) -> Path:
    """Write ``traj`` in the trajectory schema; floats keep full precision.

    ``extra_columns`` maps additional column names to per-row values, e.g.
    the ``dropped`` flag of a lossy stream.
    """
    path = Path(path)
    extra_columns = extra_columns or {}
    for name, values in extra_columns.items():
        if len(values) != len(traj):
            raise ValueError(f"extra column {name!r} has {len(values)} values for {len(traj)} rows")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(COLUMNS) + list(extra_columns))
        for i, rec in enumerate(traj.records):
            writer.writerow([repr(float(v)) for v in rec.as_tuple()] + [extra_columns[k][i] for k in extra_columns])
    return path


def load_corpus(directory) -> list[Trajectory]:
    """Parse every ``*.csv`` in ``directory`` (sorted by name)."""
    return [parse_trajectory_csv(p) for p in sorted(Path(directory).glob("*.csv"))]


def geodetic_offset(lat, lon, lat_ref: float, lon_ref: float):
    """East/north offsets (m) of ``lat, lon`` from the reference point.

    Equirectangular local-tangent-plane approximation on the equatorial
    radius; adequate for the sub-kilometre extent of a single maneuver.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    east = EARTH_RADIUS_M * math.cos(math.radians(lat_ref)) * np.radians(lon - lon_ref)
    north = EARTH_RADIUS_M * np.radians(lat - lat_ref)
    return east, north


def geodetic_from_offset(east, north, lat_ref: float, lon_ref: float):
    """Inverse of :func:`geodetic_offset`."""
    lat = lat_ref + np.degrees(np.asarray(north, dtype=float) / EARTH_RADIUS_M)
    lon = lon_ref + np.degrees(
        np.asarray(east, dtype=float) / (EARTH_RADIUS_M * math.cos(math.radians(lat_ref)))
    )
    return lat, lon


def rotate_to_heading(east, north, heading_deg: float):
    """Project east/north offsets onto (forward, right) axes of a heading."""
    h = math.radians(heading_deg)
    s, c = math.sin(h), math.cos(h)
    east = np.asarray(east, dtype=float)
    north = np.asarray(north, dtype=float)
    return east * s + north * c, east * c - north * s


def wrap_angle(a):
    """Wrap radians into [-pi, pi)."""
    return (np.asarray(a, dtype=float) + math.pi) % (2.0 * math.pi) - math.pi


def to_rotated_enu(traj: Trajectory, ref_index: int = 0) -> EnuTrack:
    """Convert a geodetic trajectory into the frame of sample ``ref_index``.

    The frame is fixed for the whole scenario. Elevation is ignored.
    """
    n = len(traj)
    if not -n <= ref_index < n or n == 0:
        raise IndexOutOfRange(f"ref_index {ref_index} outside trajectory of length {n}")
    ref = traj.records[ref_index]
    east, north = geodetic_offset(traj.column("lat"), traj.column("lon"), ref.lat, ref.lon)
    x, y = rotate_to_heading(east, north, ref.heading)
    heading_rel = wrap_angle(np.radians(traj.column("heading") - ref.heading))
    return EnuTrack(
        scenario_id=traj.scenario_id,
        rate_hz=traj.rate_hz,
        t=traj.column("t"),
        x=x,
        y=y,
        speed=traj.column("speed"),
        heading_rad=heading_rel,
        steering_rad=np.radians(traj.column("steering_angle")),
        accel_lon=traj.column("accel_lon"),
        yaw_rate=traj.column("yaw_rate"),
        veh_length=float(ref.veh_length),
        ref_heading_deg=float(ref.heading),
    )


def interpolate_heading(t_new, t, heading_deg) -> np.ndarray:
    """Interpolate compass headings along the shortest arc via unit vectors."""
    h = np.radians(np.asarray(heading_deg, dtype=float))
    s = np.interp(t_new, t, np.sin(h))
    c = np.interp(t_new, t, np.cos(h))
    out = np.degrees(np.arctan2(s, c)) % 360.0
    # arctan2 can return -0.0 or a value that rounds up to 360.0
    return np.where(out >= 360.0, 0.0, out)


def resample_uniform(traj: Trajectory, rate_hz: float = DEFAULT_RATE_HZ) -> Trajectory:
    """Linearly resample onto an exact ``1/rate_hz`` grid starting at the first sample."""
    if len(traj) < 2:
        raise DegenerateInput(f"resampling needs at least 2 records, got {len(traj)}")
    values = traj.as_array()
    t = values[:, 0]
    span = t[-1] - t[0]
    n = int(math.floor(span * rate_hz + 1e-9)) + 1
    t_new = t[0] + np.arange(n) / rate_hz
    out = np.empty((n, values.shape[1]))
    out[:, 0] = t_new
    for j, name in enumerate(COLUMNS[1:], start=1):
        if name == "heading":
            out[:, j] = interpolate_heading(t_new, t, values[:, j])
        else:
            out[:, j] = np.interp(t_new, t, values[:, j])
    return Trajectory.from_array(traj.scenario_id, rate_hz, out)

