"""Parsing, validation, frame conversion and resampling of BSM trajectories."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_traj
from v2vtraj.errors import DataError, IndexOutOfRange, MissingColumn, NonFiniteValue, NonMonotoneTimestamp
from v2vtraj.trajectory_data import (
    COLUMNS,
    BsmRecord,
    Trajectory,
    geodetic_from_offset,
    geodetic_offset,
    interpolate_heading,
    parse_trajectory_csv,
    resample_uniform,
    to_rotated_enu,
    write_trajectory_csv,
)

# 6378137 * pi / 180 * 1e-4, evaluated by hand to 9 digits
NORTH_1E4_DEG_M = 11.1319491


def _write_rows(path, rows, header=COLUMNS):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _row(t, heading=0.0, **kw):
    base = dict(t=t, lat=42.0, lon=-83.0, elev=200.0, speed=10.0, heading=heading, steering_angle=0.0,
                accel_lon=0.0, accel_lat=0.0, accel_vert=0.0, yaw_rate=0.0, veh_length=5.0, veh_width=1.8)
    base.update(kw)
    return [base[c] for c in COLUMNS]


class TestParse:
    def test_three_rows_at_10hz(self, tmp_path):
        p = _write_rows(tmp_path / "abc.csv", [_row(0.0), _row(0.1), _row(0.2)])
        traj = parse_trajectory_csv(p)
        assert len(traj) == 3
        assert traj.rate_hz == 10.0
        assert traj.scenario_id == "abc"

    def test_heading_360_rejected(self, tmp_path):
        p = _write_rows(tmp_path / "h.csv", [_row(0.0), _row(0.1, heading=360.0)])
        with pytest.raises(NonFiniteValue) as exc:
            parse_trajectory_csv(p)
        assert exc.value.row == 2
        assert "row 2" in str(exc.value)

    @pytest.mark.parametrize("bad", ["nan", "inf", "abc", ""])
    def test_non_numeric_rejected(self, tmp_path, bad):
        p = _write_rows(tmp_path / "n.csv", [_row(0.0), _row(0.1, speed=bad)])
        with pytest.raises(NonFiniteValue):
            parse_trajectory_csv(p)

    def test_missing_column(self, tmp_path):
        header = [c for c in COLUMNS if c != "yaw_rate"]
        p = _write_rows(tmp_path / "m.csv", [[0.0] * len(header)], header=header)
        with pytest.raises(MissingColumn, match="yaw_rate"):
            parse_trajectory_csv(p)

    @pytest.mark.parametrize("times", [(0.0, 0.1, 0.1), (0.0, 0.2, 0.1)])
    def test_non_monotone_timestamps(self, tmp_path, times):
        p = _write_rows(tmp_path / "t.csv", [_row(t) for t in times])
        with pytest.raises(NonMonotoneTimestamp) as exc:
            parse_trajectory_csv(p)
        assert exc.value.row == 3

    def test_errors_share_a_value_error_base(self):
        assert issubclass(NonFiniteValue, DataError) and issubclass(DataError, ValueError)

    def test_round_trip_30_rows(self, tmp_path):
        rng = np.random.default_rng(4)
        traj = make_traj(30, scenario_id="rt", speed=rng.uniform(0, 30, 30), heading=rng.uniform(0, 360, 30),
                         steering_angle=rng.normal(0, 5, 30), yaw_rate=rng.normal(0, 0.1, 30))
        back = parse_trajectory_csv(write_trajectory_csv(traj, tmp_path / "rt.csv"))
        assert back == traj

    def test_extra_column_written_and_ignored_on_parse(self, tmp_path):
        traj = make_traj(5, scenario_id="x")
        p = write_trajectory_csv(traj, tmp_path / "x.csv", {"dropped": [0, 1, 0, 0, 1]})
        assert p.read_text().splitlines()[0].endswith(",dropped")
        assert parse_trajectory_csv(p) == traj


class TestRotatedEnu:
    def _pair(self, ref_heading):
        recs = [BsmRecord(0.0, 0.0, 0.0, 0.0, 10.0, ref_heading, 0, 0, 0, 0, 0, 5.0, 1.8),
                BsmRecord(0.1, 1e-4, 0.0, 0.0, 10.0, ref_heading, 0, 0, 0, 0, 0, 5.0, 1.8)]
        return to_rotated_enu(Trajectory("p", 10.0, recs))

    def test_reference_maps_to_origin(self):
        trk = to_rotated_enu(make_traj(20), ref_index=7)
        assert trk.x[7] == 0.0 and trk.y[7] == 0.0

    def test_north_offset_heading_north(self):
        trk = self._pair(0.0)
        assert trk.x[1] == pytest.approx(NORTH_1E4_DEG_M, abs=1e-2)
        assert trk.y[1] == pytest.approx(0.0, abs=1e-2)

    def test_north_offset_heading_east(self):
        trk = self._pair(90.0)
        assert trk.x[1] == pytest.approx(0.0, abs=1e-2)
        assert trk.y[1] == pytest.approx(-NORTH_1E4_DEG_M, abs=1e-2)

    def test_bad_ref_index(self):
        with pytest.raises(IndexOutOfRange):
            to_rotated_enu(make_traj(5), ref_index=5)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-500, 500), st.floats(-500, 500), st.floats(-60, 60))
    def test_distance_preserved_within_a_km(self, east, north, lat_ref):
        lat, lon = geodetic_from_offset(east, north, lat_ref, 10.0)
        e2, n2 = geodetic_offset(lat, lon, lat_ref, 10.0)
        assert math.hypot(e2, n2) == pytest.approx(math.hypot(east, north), rel=1e-3, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 359.9), st.floats(-180, 180), st.integers(0, 2**16))
    def test_rotating_reference_rotates_outputs(self, psi, delta, seed):
        rng = np.random.default_rng(seed)
        lat = 42.0 + rng.normal(0, 1e-3, 12)
        lon = -83.0 + rng.normal(0, 1e-3, 12)
        heading = np.full(12, psi)
        a = to_rotated_enu(make_traj(12, lat=lat, lon=lon, heading=heading))
        psi2 = (psi + delta) % 360.0
        b = to_rotated_enu(make_traj(12, lat=lat, lon=lon, heading=np.full(12, psi2)))
        # turning the reference by delta turns every (x, y) by -delta
        d = math.radians(delta)
        xr = a.x * math.cos(d) + a.y * math.sin(d)
        yr = -a.x * math.sin(d) + a.y * math.cos(d)
        np.testing.assert_allclose(b.x, xr, atol=1e-9)
        np.testing.assert_allclose(b.y, yr, atol=1e-9)


class TestResample:
    def test_identity_on_grid(self):
        traj = make_traj(25)
        out = resample_uniform(traj, 10.0)
        np.testing.assert_allclose(out.as_array(), traj.as_array(), atol=1e-9)

    def test_linear_midpoint(self):
        recs = (BsmRecord(0.0, 42, -83, 0, 0.0, 0, 0, 0, 0, 0, 0, 5, 1.8),
                BsmRecord(0.2, 42, -83, 0, 10.0, 0, 0, 0, 0, 0, 0, 5, 1.8))
        out = resample_uniform(Trajectory("m", 5.0, recs), 10.0)
        assert len(out) == 3
        assert out.records[1].t == pytest.approx(0.1)
        assert out.records[1].speed == pytest.approx(5.0)

    def test_heading_wraps_through_north(self):
        recs = (BsmRecord(0.0, 42, -83, 0, 1.0, 350.0, 0, 0, 0, 0, 0, 5, 1.8),
                BsmRecord(0.2, 42, -83, 0, 1.0, 10.0, 0, 0, 0, 0, 0, 5, 1.8))
        mid = resample_uniform(Trajectory("w", 5.0, recs), 10.0).records[1].heading
        assert min(mid, 360.0 - mid) == pytest.approx(0.0, abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 359.99), st.floats(0, 359.99))
    def test_heading_interpolation_stays_in_range(self, h0, h1):
        out = interpolate_heading(np.linspace(0, 1, 7), [0.0, 1.0], [h0, h1])
        assert np.all((out >= 0) & (out < 360))

    def test_irregular_input_lands_on_exact_grid(self):
        t = np.array([0.0, 0.09, 0.21, 0.30, 0.42, 0.5])
        traj = make_traj(6, t=t)
        traj = Trajectory(traj.scenario_id, 10.0, traj.records)
        out = resample_uniform(traj, 10.0)
        np.testing.assert_allclose(out.column("t"), np.arange(6) / 10.0, atol=1e-12)
