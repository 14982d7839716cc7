import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from v2vtraj.errors import DegenerateInput, DegenerateRange
from v2vtraj.preprocess import (
    DEADBANDS,
    ChannelSpec,
    condition,
    deadband_smooth,
    denormalize,
    difference,
    fit_normalizer,
    normalize,
    reconstruct,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
series = arrays(np.float64, st.integers(1, 60), elements=finite)


class TestDeadband:
    def test_zero_threshold_is_identity(self):
        x = np.random.default_rng(0).normal(size=20)
        np.testing.assert_array_equal(deadband_smooth(x, 0.0), x)

    def test_hold_rule_by_hand(self):
        np.testing.assert_array_equal(deadband_smooth([0, 0.05, 0.2], 0.1), [0, 0, 0.2])

    @pytest.mark.parametrize("threshold", [0.0, 0.01, 1.0, 100.0])
    def test_constant_series_unchanged(self, threshold):
        np.testing.assert_array_equal(deadband_smooth(np.full(9, 3.3), threshold), np.full(9, 3.3))

    def test_step_exactly_at_threshold_passes(self):
        np.testing.assert_array_equal(deadband_smooth([0.0, 0.5, 0.6], 0.5), [0.0, 0.5, 0.5])

    def test_slow_drift_is_tracked_in_jumps(self):
        out = deadband_smooth(np.arange(10) * 0.04, 0.1)
        np.testing.assert_allclose(out, [0, 0, 0, 0.12, 0.12, 0.12, 0.24, 0.24, 0.24, 0.36])

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            deadband_smooth([1.0, 2.0], -0.1)

    @settings(max_examples=200, deadline=None)
    @given(series, st.floats(0, 50))
    def test_idempotent(self, x, threshold):
        once = deadband_smooth(x, threshold)
        np.testing.assert_array_equal(deadband_smooth(once, threshold), once)

    @settings(max_examples=200, deadline=None)
    @given(series, st.floats(0, 50))
    def test_no_new_values(self, x, threshold):
        assert set(deadband_smooth(x, threshold).tolist()) <= set(x.tolist())

    def test_angle_thresholds_are_radians(self):
        assert DEADBANDS["steering_angle"] == pytest.approx(math.radians(3.0))
        assert DEADBANDS["heading"] == 0.1
        assert DEADBANDS["x"] == DEADBANDS["y"] == 0.0


class TestDifference:
    def test_definition(self):
        np.testing.assert_array_equal(difference([1, 3, 6]), [2, 3])

    def test_constant(self):
        np.testing.assert_array_equal(difference(np.full(5, 2.5)), np.zeros(4))

    def test_too_short(self):
        with pytest.raises(DegenerateInput):
            difference([1.0])

    def test_reconstruct_by_hand(self):
        np.testing.assert_array_equal(reconstruct(1.0, [2, 3]), [1, 3, 6])

    def test_reconstruct_empty(self):
        np.testing.assert_array_equal(reconstruct(4.0, []), [4.0])

    def test_random_round_trip(self):
        x = np.random.default_rng(1).normal(0, 10, 50)
        np.testing.assert_allclose(reconstruct(x[0], difference(x)), x, rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(2, 1000), elements=st.floats(-100, 100)))
    def test_round_trips_both_ways(self, x):
        np.testing.assert_allclose(reconstruct(x[0], difference(x)), x, rtol=0, atol=1e-10)
        d = x[1:]
        np.testing.assert_allclose(difference(reconstruct(x[0], d)), d, rtol=0, atol=1e-10)


class TestNormalizer:
    spec = fit_normalizer([-2.0, 0.5, 2.0], name="speed")

    def test_midpoint(self):
        assert normalize(self.spec, 0.0) == 0.0

    def test_endpoints(self):
        assert normalize(self.spec, 2.0) == 1.0
        assert normalize(self.spec, -2.0) == -1.0

    def test_deadband_defaults_from_channel(self):
        assert self.spec.deadband == DEADBANDS["speed"]

    def test_inverse_on_random_values(self):
        x = np.random.default_rng(2).uniform(-10, 10, 1000)
        np.testing.assert_allclose(denormalize(self.spec, normalize(self.spec, x)), x, rtol=0, atol=1e-12)

    def test_no_clipping_outside_range(self):
        assert normalize(self.spec, 6.0) == 3.0

    def test_constant_series_rejected(self):
        with pytest.raises(DegenerateRange):
            fit_normalizer(np.ones(5))
        with pytest.raises(DegenerateRange):
            fit_normalizer([])

    def test_spec_invariants(self):
        with pytest.raises(DegenerateRange):
            ChannelSpec("x", 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            ChannelSpec("x", -1.0, 0.0, 1.0)

    def test_condition_chains_all_three(self):
        spec = ChannelSpec("speed", 0.1, -1.0, 1.0)
        x = [10.0, 10.05, 10.3, 10.3]
        np.testing.assert_allclose(condition(x, spec), [0.0, 0.3, 0.0])
