import numpy as np
import pytest

from ordlag import (DegenerateInputError, RecodingMap, build_lag_design,
                    compute_recovery, compute_workload, kmeans_1d,
                    kmeans_dp_oracle, recode_ordinal)
from ordlag.panel import CovariatePanel

from conftest import tiny_panel_from_arrays


class TestKmeans1d:
    def test_two_cluster_exact(self):
        # all 1-D partitions of {1,1,2,8,9,9} enumerate to {1,1,2} | {8,9,9}
        rec = kmeans_1d([1, 1, 2, 8, 9, 9], k=2)
        np.testing.assert_allclose(rec.centers, [4 / 3, 26 / 3])
        np.testing.assert_allclose(rec.cut_points, [5.0])

    def test_singleton_clusters(self):
        values = np.repeat([1, 2, 3, 4, 5], 4)
        rec = kmeans_1d(values, k=5)
        np.testing.assert_allclose(rec.centers, [1, 2, 3, 4, 5])

    def test_matches_dp_oracle_uniform(self):
        values = np.repeat(np.arange(1, 11), 3)
        rec = kmeans_1d(values, k=5, restarts=25)
        dp = kmeans_dp_oracle(values, 5)
        np.testing.assert_allclose(np.sort(rec.centers), dp.centers)

    def test_lloyd_never_beats_dp(self):
        rng = np.random.default_rng(42)
        for trial in range(30):
            values = rng.integers(1, 11, size=rng.integers(10, 51)).astype(float)
            if np.unique(values).size < 4:
                continue
            rec = kmeans_1d(values, k=4, restarts=25, seed=trial)
            dp = kmeans_dp_oracle(values, 4)
            obj = _wcss(values, rec.centers)
            assert obj >= dp.objective - 1e-9
            assert obj <= dp.objective + 1e-9  # restarts find the optimum at this size

    def test_too_few_distinct_values(self):
        with pytest.raises(DegenerateInputError):
            kmeans_1d([1, 1, 1, 2], k=3)


def _wcss(values, centers):
    d = np.abs(np.asarray(values)[:, None] - np.asarray(centers)[None, :])
    return float((d.min(axis=1) ** 2).sum())


class TestDpOracle:
    def test_clean_split(self):
        dp = kmeans_dp_oracle([1, 1, 9, 9], 2)
        assert dp.objective == 0.0
        np.testing.assert_allclose(dp.centers, [1, 9])

    def test_three_points(self):
        # splits: {1},{2,8} cost 18; {1,2},{8} cost 0.5
        dp = kmeans_dp_oracle([1, 2, 8], 2)
        assert dp.objective == pytest.approx(0.5)
        np.testing.assert_allclose(dp.centers, [1.5, 8])

    def test_k_equals_n(self):
        dp = kmeans_dp_oracle([3.0, 1.0, 7.0], 3)
        assert dp.objective == 0.0


class TestRecode:
    def setup_method(self):
        self.rec = RecodingMap(centers=np.array([2.0, 5.0, 8.0]),
                               cut_points=np.array([3.5, 6.5]))

    def test_below_first_cut(self):
        assert recode_ordinal(1, self.rec) == 1

    def test_above_last_cut(self):
        assert recode_ordinal(9, self.rec) == 3

    def test_tie_goes_low(self):
        assert recode_ordinal(3.5, self.rec) == 1
        assert recode_ordinal(3.5 + 1e-9, self.rec) == 2
        assert recode_ordinal(6.5, self.rec) == 2

    def test_monotone(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            cuts = np.sort(rng.uniform(1, 10, size=4))
            cuts += np.arange(4) * 1e-6  # ensure strictly ascending
            rec = RecodingMap(centers=np.sort(rng.uniform(1, 10, size=5)) + np.arange(5) * 1e-5,
                              cut_points=cuts)
            raws = np.sort(rng.uniform(0, 11, size=50))
            codes = recode_ordinal(raws, rec)
            assert np.all(np.diff(codes) >= 0)


class TestWorkload:
    def test_rest_day(self):
        assert compute_workload(0, 1.5) == 0.0

    def test_product(self):
        assert compute_workload(7, 1.5) == pytest.approx(10.5)

    def test_zero_duration(self):
        assert compute_workload(10, 0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DegenerateInputError):
            compute_workload(-1, 1)


class TestRecovery:
    def test_rank_one(self):
        h = np.array([5.0, 6.0, 7.0, 8.0, 9.0])
        scores, loading = compute_recovery(h, 2 * h + 1)
        assert loading.variance_explained == pytest.approx(1.0)
        np.testing.assert_allclose(loading.loadings, [np.sqrt(0.5)] * 2)

    def test_independent_noise_half_variance(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal(20000)
        q = rng.standard_normal(20000)
        if np.corrcoef(h, q)[0, 1] < 0:
            q = -q  # orient so the nonnegative-loading convention is satisfiable
        scores, loading = compute_recovery(h, q)
        assert abs(loading.variance_explained - 0.5) < 0.02

    def test_matches_eigendecomposition(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            h = rng.normal(7, 1, size=50)
            q = 0.5 * h + rng.normal(6, 0.8, size=50)
            scores, loading = compute_recovery(h, q)
            W = np.column_stack([(h - h.mean()) / h.std(ddof=1),
                                 (q - q.mean()) / q.std(ddof=1)])
            corr = W.T @ W / 49
            top = np.linalg.eigvalsh(corr)[-1]
            assert loading.variance_explained == pytest.approx(top / 2, abs=1e-10)
            assert scores.mean() == pytest.approx(0, abs=1e-12)
            assert scores.var(ddof=1) == pytest.approx(top, abs=1e-10)

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateInputError):
            compute_recovery(np.full(10, 7.0), np.arange(10, dtype=float))

    def test_negative_correlation_rejected(self):
        h = np.arange(20, dtype=float)
        with pytest.raises(DegenerateInputError):
            compute_recovery(h, -2 * h + np.random.default_rng(1).normal(0, 0.1, 20))


class TestLagDesign:
    def test_lag_zero_is_standardized_series(self):
        values = np.ones((1, 1, 5), dtype=int)
        w = np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
        r = np.array([[0.3, -0.1, 0.5, 0.2, -0.4]])
        panel, covs = tiny_panel_from_arrays(values, w, r, L=0)
        des = build_lag_design(covs, 0)
        assert des.usable.all()
        expected = (w[0] - w[0].mean()) / w[0].std(ddof=1)
        np.testing.assert_allclose(des.design[0, 0, :, 0], expected)

    def test_lag_rows_shift(self):
        values = np.ones((1, 1, 4), dtype=int)
        w = np.array([[1.0, 2.0, 3.0, 4.0]])
        r = np.array([[0.1, 0.9, -0.3, 0.6]])
        panel, covs = tiny_panel_from_arrays(values, w, r, L=2)
        des = build_lag_design(covs, 2)
        # only day 4 (t=3) has a full 2-lag history besides t=2
        assert des.usable[0].tolist() == [False, False, True, True]
        std = des.standardized[0, 0]
        np.testing.assert_allclose(des.design[0, 0, 3], [std[3], std[2], std[1]])

    def test_constant_series_rejected(self):
        values = np.ones((1, 1, 5), dtype=int)
        w = np.full((1, 5), 2.0)
        r = np.array([[0.3, -0.1, 0.5, 0.2, -0.4]])
        panel, covs = tiny_panel_from_arrays(values, w, r, L=1)
        with pytest.raises(DegenerateInputError):
            build_lag_design(covs, 1)

    def test_calendar_gap_breaks_history(self):
        values = np.ones((1, 1, 5), dtype=int)
        day_index = np.array([[0, 1, 2, 4, 5]])  # day 3 absent
        series = np.stack([np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]),
                           np.array([[0.3, -0.1, 0.5, 0.2, -0.4]])])
        covs = CovariatePanel(series=series, L=1, day_index=day_index,
                              T=np.array([5]))
        des = build_lag_design(covs, 1)
        # rows at days 0 (no prior), 4 (day 3 missing) are unusable
        assert des.usable[0].tolist() == [False, True, True, False, True]
        assert des.excluded[0] == 2

    def test_reconstruction_roundtrip(self):
        rng = np.random.default_rng(8)
        values = np.ones((2, 1, 30), dtype=int)
        w = rng.gamma(2.0, 1.0, size=(2, 30))
        r = rng.standard_normal((2, 30))
        panel, covs = tiny_panel_from_arrays(values, w, r, L=3)
        des = build_lag_design(covs, 3)
        for i in range(2):
            for t in np.nonzero(des.usable[i])[0]:
                for l in range(4):
                    for m in range(2):
                        assert des.design[m, i, t, l] == des.standardized[m, i, t - l]
