import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from wsmpc.data import TimeSeries
from wsmpc.errors import EmptyMask, GridMismatch, ZeroReference
from wsmpc.metrics import (SUMMARY_COLUMNS, avg_rel_error, clearance_in_window, min_clearance,
                           mse_outside_obstacle, prediction_horizon, quartiles, summarize,
                           tracking_success, write_summary_csv)


def ts(X, dt=0.1):
    return TimeSeries.from_arrays(X, None, dt)


class TestPredictionHorizon:
    def test_identical(self):
        a = ts(np.random.default_rng(0).normal(size=(51, 3)))
        assert prediction_horizon(a, a) == pytest.approx(5.0)

    def test_immediate(self):
        a = ts(np.zeros((10, 2)))
        b = ts(np.tile([3.0, 4.0], (10, 1)))
        assert prediction_horizon(a, b, 3.0) == 0.0

    def test_linear_growth(self):
        t = np.arange(401) * 0.01
        a = ts(np.zeros((401, 1)), 0.01)
        b = ts((1.5 * t)[:, None], 0.01)
        assert prediction_horizon(a, b, 3.0) == pytest.approx(2.0, abs=1e-12)

    def test_nan_counts_as_failure(self):
        a = ts(np.zeros((10, 1)))
        X = np.zeros((10, 1))
        X[4] = np.nan
        assert prediction_horizon(a, ts(X)) == pytest.approx(0.4)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            prediction_horizon(ts(np.zeros((10, 1))), ts(np.zeros((11, 1))))

    @given(arrays(float, (30, 2), elements=st.floats(-5, 5)), st.floats(0, 1))
    def test_monotone(self, E, shrink):
        truth = ts(np.zeros((30, 2)))
        big = prediction_horizon(truth, ts(E))
        small = prediction_horizon(truth, ts(shrink * E))
        assert small >= big


class TestRelativeError:
    def test_examples(self):
        r = np.linspace(1, 2, 20)
        assert avg_rel_error(r, r) == 0
        assert avg_rel_error(1.03 * r, r) == pytest.approx(0.03, rel=1e-12)
        assert tracking_success(0.029) and not tracking_success(0.031)
        assert not tracking_success(np.nan)

    def test_zero_reference(self):
        with pytest.raises(ZeroReference):
            avg_rel_error(np.ones(3), np.zeros(3))


class TestObstacleMetrics:
    def test_mse_examples(self):
        ref = np.zeros((4, 3))
        ref[:, 0] = [0, 1, 2, 3]
        traj = ref.copy()
        assert mse_outside_obstacle(traj, ref, [100, 0, 0], 1.0) == 0
        traj[:, 1] = [1, 2, 3, 4]
        assert mse_outside_obstacle(traj, ref, [100, 0, 0], 1.0) == pytest.approx(7.5)
        # references at x = 0, 1 lie within 1.5 of the obstacle at x = 0
        assert mse_outside_obstacle(traj, ref, [0, 0, 0], 1.5) == pytest.approx(12.5)
        with pytest.raises(EmptyMask):
            mse_outside_obstacle(traj, ref, [1.5, 0, 0], 10.0)

    def test_clearance_examples(self):
        traj = np.column_stack([np.linspace(-1, 1, 201), np.full(201, 0.5), np.zeros(201)])
        assert min_clearance(traj, [0, 0, 0], 0.1, 0.165) == pytest.approx(0.235)
        assert min_clearance([[0.265, 0, 0]], [0, 0, 0], 0.1, 0.165) == pytest.approx(0, abs=1e-15)
        assert clearance_in_window(0.15) and not clearance_in_window(0.21)
        assert clearance_in_window(0.10) and clearance_in_window(0.20)

    @given(arrays(float, (10, 3), elements=st.floats(-5, 5)), arrays(float, 3, elements=st.floats(-5, 5)))
    def test_translation_invariance(self, traj, shift):
        o = np.array([0.3, -0.1, 0.2])
        a = min_clearance(traj, o, 0.1, 0.165)
        b = min_clearance(traj + shift, o + shift, 0.1, 0.165)
        assert a == pytest.approx(b, abs=1e-9)


class TestSummaries:
    def test_median(self):
        assert summarize([1, 2, 3]).median == 2

    def test_constant(self):
        s = summarize([4.0] * 5)
        assert s.q25 == s.median == s.q75 == 4.0

    def test_hazen(self):
        # Hazen positions n p + 1/2: 2.5, 4.5, 6.5 on 1..8
        assert quartiles(np.arange(1, 9)) == (2.5, 4.5, 6.5)
        assert quartiles([1.0, 2.0, 3.0, 4.0]) == (1.5, 2.5, 3.5)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40), st.randoms())
    def test_order_and_permutation(self, values, rnd):
        s1 = summarize(values, success=[v > 0 for v in values])
        shuffled = values[:]
        rnd.shuffle(shuffled)
        s2 = summarize(shuffled, success=[v > 0 for v in shuffled])
        assert s1.q25 <= s1.median <= s1.q75
        assert (s1.median, s1.q25, s1.q75, s1.success_rate) == (s2.median, s2.q25, s2.q75, s2.success_rate)
        assert 0 <= s1.success_rate <= 1

    def test_failed_runs_are_worst(self):
        s = summarize([1.0, 2.0, np.nan, np.inf])
        assert s.q75 == np.inf and s.median == pytest.approx(np.inf)
        s = summarize([1.0, 2.0, 3.0, np.nan])
        assert s.q25 == 1.5 and s.median == 2.5 and s.q75 == np.inf

    def test_csv_schema(self, tmp_path):
        p = tmp_path / "s.csv"
        write_summary_csv([summarize([1, 2], "wsindyc", 0.1, "mse", [True, False])], p)
        rows = list(csv.reader(p.open()))
        assert rows[0] == SUMMARY_COLUMNS
        assert rows[1][0] == "wsindyc" and float(rows[1][6]) == 0.5 and rows[1][7] == "2"
