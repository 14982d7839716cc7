"""Synthetic cut-in generator: geometry, comfort bound, determinism."""

import json

import numpy as np
import pytest

from v2vtraj.errors import InfeasibleSpec
from v2vtraj.synthetic import (
    G,
    CorpusRanges,
    CutInSpec,
    generate_corpus,
    generate_cutin,
    required_lateral_peak,
    write_corpus,
)
from v2vtraj.trajectory_data import load_corpus, to_rotated_enu

QUIET = {k: 0.0 for k in ("speed", "heading", "steering_angle", "accel_lon", "accel_lat", "yaw_rate")}


def quiet_spec(**kw):
    return CutInSpec(noise_std=dict(QUIET), **kw)


def test_final_lateral_displacement_matches_offset():
    trk = to_rotated_enu(generate_cutin(quiet_spec(lane_offset=3.5)))
    assert trk.y[-1] == pytest.approx(3.5, abs=1e-3)


def test_left_cut_in_goes_negative():
    trk = to_rotated_enu(generate_cutin(quiet_spec(lane_offset=-3.5)))
    assert trk.y[-1] == pytest.approx(-3.5, abs=1e-3)


def test_zero_transition_is_a_straight_drive():
    spec = quiet_spec(speed_delta=0.0, phase_durations=(2.0, 2.5, 0.0, 3.0))
    trk = to_rotated_enu(generate_cutin(spec))
    np.testing.assert_allclose(trk.y, 0.0, atol=1e-6)
    np.testing.assert_allclose(trk.speed, 25.0)


def test_default_length_is_120_samples():
    assert len(generate_cutin(CutInSpec())) == 120


def test_peak_against_fine_step_integration():
    """Closed-form peak drives a numerically integrated sine pulse to the offset."""
    T, offset, dt = 4.0, 3.5, 1e-4
    A = required_lateral_peak(offset, T)
    t = np.arange(0.0, T, dt)
    a = A * np.sin(2 * np.pi * t / T)
    v = np.concatenate([[0.0], np.cumsum(a) * dt])
    y = np.sum(0.5 * (v[1:] + v[:-1])) * dt
    assert y == pytest.approx(offset, abs=1e-3)


def test_infeasible_offset_rejected():
    # 3.5 m in 2 s needs a peak of about 5.5 m/s^2, above 0.2 g
    with pytest.raises(InfeasibleSpec):
        generate_cutin(quiet_spec(phase_durations=(2.0, 2.0, 2.0, 3.0)))


@pytest.mark.parametrize("kw", [dict(initial_speed=0.0), dict(speed_delta=-30.0),
                                dict(phase_durations=(0.0, 2.0, 4.0, 3.0)),
                                dict(lateral_accel_peak=3.0)])
def test_invalid_specs(kw):
    with pytest.raises(InfeasibleSpec):
        quiet_spec(**kw).validate()


def test_noiseless_track_is_kinematically_consistent():
    spec = quiet_spec(speed_delta=3.0, road_heading=37.0)
    trk = to_rotated_enu(generate_cutin(spec))
    dt = 1.0 / trk.rate_hz
    vx = (trk.x[2:] - trk.x[:-2]) / (2 * dt)
    vy = (trk.y[2:] - trk.y[:-2]) / (2 * dt)
    v, th = trk.speed[1:-1], trk.heading_rad[1:-1]
    np.testing.assert_allclose(vx, v * np.cos(th), atol=1e-2)
    np.testing.assert_allclose(vy, v * np.sin(th), atol=1e-2)


def test_noise_is_seeded():
    a = generate_cutin(CutInSpec(seed=3))
    b = generate_cutin(CutInSpec(seed=3))
    c = generate_cutin(CutInSpec(seed=4))
    assert a == b
    assert a != c


class TestCorpus:
    def test_ninety_scenarios_identical_across_runs(self, tmp_path):
        t1, s1 = generate_corpus(90, 7)
        t2, s2 = generate_corpus(90, 7)
        assert len(t1) == 90
        write_corpus(tmp_path / "a", t1, s1)
        write_corpus(tmp_path / "b", t2, s2)
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_point_ranges_reduce_to_single_scenario(self):
        ranges = CorpusRanges(initial_speed=(22.0, 22.0), speed_delta=(1.0, 1.0), lane_offset=(3.5, 3.5),
                              intention=(2.0, 2.0), preparation=(2.5, 2.5), transition=(4.5, 4.5),
                              road_heading=(90.0, 90.0), origin_lat=(42.0, 42.0), origin_lon=(-83.0, -83.0),
                              both_sides=False)
        (traj,), (spec,) = generate_corpus(1, 11, ranges)
        direct = CutInSpec(seed=spec.seed, initial_speed=22.0, speed_delta=1.0, lane_offset=3.5,
                           phase_durations=(2.0, 2.5, 4.5, 3.0), road_heading=90.0,
                           origin_lat=42.0, origin_lon=-83.0)
        assert traj.records == generate_cutin(direct, scenario_id="cutin_000").records

    def test_lateral_acceleration_within_comfort_bound(self):
        trajs, _ = generate_corpus(90, 7, CorpusRanges(noise_std=dict(QUIET)))
        for tr in trajs:
            assert np.max(np.abs(tr.column("accel_lat"))) <= 0.2 * G + 1e-9

    def test_every_scenario_is_long_enough_for_one_window(self):
        trajs, _ = generate_corpus(10, 1)
        assert all(len(tr) >= 26 for tr in trajs)

    def test_written_corpus_reloads(self, tmp_path):
        trajs, specs = generate_corpus(4, 2)
        manifest = write_corpus(tmp_path, trajs, specs, {"seed": 2})
        doc = json.loads(manifest.read_text())
        assert [s["scenario_id"] for s in doc["scenarios"]] == [t.scenario_id for t in trajs]
        assert load_corpus(tmp_path) == trajs

    def test_infeasible_draws_are_redrawn(self):
        # transitions of 2-5 s: the shortest are infeasible for 3.5 m at 0.2 g
        ranges = CorpusRanges(transition=(2.0, 5.0), intention=(1.0, 1.0), preparation=(2.0, 2.0))
        trajs, specs = generate_corpus(20, 5, ranges)
        assert len(trajs) == 20
        assert all(required_lateral_peak(s.lane_offset, s.phase_durations[2]) <= 0.2 * G for s in specs)
