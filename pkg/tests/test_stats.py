import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from forgetaudit import stats as S
from forgetaudit.errors import DegenerateCalibrationError, InputError

unit = st.floats(0.0, 1.0, allow_nan=False)
samples = arrays(np.float64, st.integers(1, 40), elements=unit)
# Few distinct values, so ties are the rule rather than the exception.
tied = arrays(np.float64, st.integers(1, 40), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))


def brute_ecdf(sample, x):
    return np.count_nonzero(np.asarray(sample) <= x) / len(sample)


def brute_ks(a, b):
    # Both ECDFs are constant between consecutive pooled values, so checking
    # every pooled value covers the supremum.
    pooled = np.concatenate([a, b])
    return max(abs(brute_ecdf(a, x) - brute_ecdf(b, x)) for x in pooled)


def softmax_rows(rng, n, m):
    z = rng.standard_normal((n, m))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class TestExtractConfidences:
    def test_picks_true_class_entry_per_row(self):
        rng = np.random.default_rng(0)
        t = softmax_rows(rng, 30, 4)
        y = rng.integers(0, 4, 30)
        expected = sorted(t[i, y[i]] for i in range(30))
        got = S.extract_confidences(t, y).values
        np.testing.assert_array_equal(got, expected)

    def test_small_example(self):
        t = [[0.9, 0.1], [0.3, 0.7], [0.6, 0.4]]
        got = S.extract_confidences(t, [0, 0, 1]).values
        assert got.tolist() == [0.3, 0.4, 0.9]

    def test_result_is_read_only(self):
        c = S.extract_confidences([[0.5, 0.5]], [1])
        with pytest.raises(ValueError):
            c.values[0] = 0.1

    @pytest.mark.parametrize(
        "t, y, msg",
        [
            ([[0.5, 0.5]], [2], "labels"),
            ([[0.5, 0.5]], [-1], "labels"),
            ([[0.5, 0.5]], [0.5], "integers"),
            ([[0.7, 0.7]], [0], "sum to 1"),
            ([[1.2, -0.2]], [0], r"\[0, 1\]"),
            ([[np.nan, 1.0]], [0], r"\[0, 1\]"),
            ([[0.5, 0.5]], [0, 1], "rows"),
            ([0.5, 0.5], [0], "N x M"),
            (np.zeros((0, 2)), np.zeros(0, dtype=int), "empty"),
        ],
    )
    def test_rejects_bad_input(self, t, y, msg):
        with pytest.raises(InputError, match=msg):
            S.extract_confidences(t, y)

    def test_row_sum_tolerance(self):
        S.extract_confidences([[0.5, 0.5 + 5e-7]], [0])
        with pytest.raises(InputError):
            S.extract_confidences([[0.5, 0.5 + 5e-6]], [0])

    def test_float_labels_with_integer_values_accepted(self):
        got = S.extract_confidences([[0.2, 0.8]], np.array([1.0]))
        assert got.values.tolist() == [0.8]


class TestEcdf:
    def test_hand_example_with_ties(self):
        e = S.build_ecdf([0.1, 0.4, 0.4, 0.9])
        assert e.points.tolist() == [0.1, 0.4, 0.9]
        assert e.heights.tolist() == [0.25, 0.75, 1.0]
        assert e(0.0) == 0.0
        assert e(0.4) == 0.75  # right-continuous: the jump counts at its point
        assert e(0.39) == 0.25
        assert e(2.0) == 1.0

    def test_unsorted_input_rejected(self):
        with pytest.raises(InputError, match="sorted"):
            S.build_ecdf([0.5, 0.2])

    @pytest.mark.parametrize("bad", [[], [1.5], [-0.1], [np.inf]])
    def test_invalid_values_rejected(self, bad):
        with pytest.raises(InputError):
            S.build_ecdf(bad)

    @given(samples)
    def test_matches_counting_oracle(self, x):
        x = np.sort(x)
        e = S.build_ecdf(x)
        probes = np.concatenate([x, x - 1e-9, x + 1e-9, [0.0, 1.0]])
        for p in probes:
            assert e(p) == pytest.approx(brute_ecdf(x, p), abs=1e-15)

    @given(st.one_of(samples, tied))
    def test_shape_invariants(self, x):
        e = S.build_ecdf(np.sort(x))
        assert np.all(np.diff(e.points) > 0)
        assert np.all(np.diff(e.heights) > 0)
        assert e.heights[-1] == 1.0
        assert 0 < e.heights[0] <= 1
        assert e.points.size == np.unique(x).size


class TestKsDistance:
    @pytest.mark.parametrize(
        "a, b, expected",
        [
            ([0.2, 0.4, 0.6], [0.2, 0.4, 0.6], 0.0),
            ([0.1, 0.2], [0.8, 0.9], 1.0),
            ([0.1, 0.5], [0.5, 0.9], 0.5),
            ([0.3], [0.3, 0.3, 0.3], 0.0),
            ([0.0, 1.0], [0.5], 0.5),
        ],
    )
    def test_hand_values(self, a, b, expected):
        assert S.ks_samples(a, b).distance == expected

    def test_location_is_where_gap_is_largest(self):
        r = S.ks_samples([0.1, 0.2, 0.3], [0.7, 0.8, 0.9])
        assert r.distance == 1.0
        assert r.location == 0.3

    def test_agrees_with_scipy(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = rng.beta(2, 5, rng.integers(1, 60))
            b = rng.beta(2, 3, rng.integers(1, 60))
            ref = scipy_stats.ks_2samp(a, b, method="asymp").statistic
            assert S.ks_samples(a, b).distance == pytest.approx(ref, abs=1e-12)

    @given(st.one_of(samples, tied), st.one_of(samples, tied))
    def test_matches_brute_force(self, a, b):
        assert S.ks_samples(a, b).distance == pytest.approx(brute_ks(a, b), abs=1e-12)

    @given(samples, samples)
    def test_symmetric_and_bounded(self, a, b):
        ab = S.ks_samples(a, b).distance
        assert ab == S.ks_samples(b, a).distance
        assert 0.0 <= ab <= 1.0

    @given(samples)
    def test_identity(self, a):
        assert S.ks_samples(a, a).distance == 0.0

    @given(samples, samples, samples)
    @settings(max_examples=50)
    def test_triangle_inequality(self, a, b, c):
        ab = S.ks_samples(a, b).distance
        bc = S.ks_samples(b, c).distance
        ac = S.ks_samples(a, c).distance
        assert ac <= ab + bc + 1e-12

    @given(samples)
    def test_invariant_to_input_order(self, a):
        rng = np.random.default_rng(0)
        b = np.linspace(0, 1, 7)
        assert S.ks_samples(rng.permutation(a), b).distance == S.ks_samples(a, b).distance


class TestRatioAndDecision:
    # Reference figures from the MNIST/SVHN/CIFAR-10 benchmark.
    def test_calibration_identity_is_one(self):
        assert S.forgetting_ratio(0.596, 0.596) == 1.0

    def test_query_column(self):
        assert S.forgetting_ratio(0.049, 0.596) == pytest.approx(0.0822, abs=5e-5)

    @pytest.mark.parametrize(
        "ks, rho",
        [(0.049, 0.082), (0.669, 1.122), (0.652, 1.094), (0.056, 0.094),
         (0.039, 0.065), (0.029, 0.049), (0.957, 1.606)],
    )
    def test_reported_ratios_follow_from_reported_distances(self, ks, rho):
        # Both rows are printed to three decimals, hence the loose tolerance.
        assert S.forgetting_ratio(ks, 0.596) == pytest.approx(rho, abs=1.5e-3)

    @pytest.mark.parametrize(
        "rho, decision",
        [
            (1.606, S.Decision.FORGOTTEN),
            (1.0, S.Decision.FORGOTTEN),
            (0.047, S.Decision.NOT_FORGOTTEN),
            (0.0, S.Decision.NOT_FORGOTTEN),
            (math.nextafter(1.0, 0.0), S.Decision.NOT_FORGOTTEN),
        ],
    )
    def test_threshold(self, rho, decision):
        assert S.decide(rho) is decision

    def test_zero_calibration_distance_is_inconclusive(self):
        with pytest.raises(DegenerateCalibrationError):
            S.forgetting_ratio(0.3, 0.0)

    def test_zero_over_zero_is_inconclusive(self):
        with pytest.raises(DegenerateCalibrationError):
            S.forgetting_ratio(0.0, 0.0)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_distance_out_of_range(self, bad):
        with pytest.raises(InputError):
            S.forgetting_ratio(bad, 0.5)

    @pytest.mark.parametrize("bad", [-1.0, float("inf"), float("nan")])
    def test_decide_rejects_bad_rho(self, bad):
        with pytest.raises(InputError):
            S.decide(bad)

    def test_accepts_ks_results(self):
        a = S.KsResult(0.2, 0.5)
        b = S.KsResult(0.4, 0.5)
        assert S.forgetting_ratio(a, b) == 0.5

    @given(st.floats(0, 1), st.floats(1e-6, 1))
    def test_decision_consistent_with_ratio(self, t, c):
        rho = S.forgetting_ratio(t, c)
        assert (S.decide(rho) is S.Decision.FORGOTTEN) == (t / c >= 1)

    def test_near_threshold_band(self):
        assert S.near_threshold(1.0)
        assert S.near_threshold(0.96)
        assert not S.near_threshold(0.94)
        assert not S.near_threshold(1.06)

    def test_decision_string(self):
        assert str(S.Decision.NOT_FORGOTTEN) == "NotForgotten"
