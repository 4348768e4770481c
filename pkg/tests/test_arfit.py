import numpy as np
import pytest
from hypothesis import given, strategies as st

from arselect.arfit import (
    REFACTOR_INTERVAL, OrderFits, advance, cholesky_update, first_valid_index, fit_at, gram_is_valid, lag_matrix,
    residual_variance,
)
from arselect.errors import BoundsError, EstimationError
from arselect.procgen import ProcessSpec, SeriesWindow, simulate


def brute_coeffs(v, k, K, i):
    # least squares over j = K..i-1 of x_{j+1} on -(x_j..x_{j-k+1}), written out by index
    X = np.array([[v[j - 1 - l] for l in range(k)] for j in range(K, i)])
    y = np.array([v[j] for j in range(K, i)])
    return -np.linalg.lstsq(X, y, rcond=None)[0]


def noiseless_ar1(n, phi=0.5):
    return SeriesWindow(phi ** np.arange(n))


def test_hand_example():
    s = SeriesWindow(np.array([1.0, 2.0, 3.0, 4.0]))
    f = fit_at(s, 1, 1, 4)
    assert f.valid
    assert f.coeffs[0] == pytest.approx(-10 / 7, rel=1e-14)
    assert f.predict_next(s) == pytest.approx(40 / 7, rel=1e-14)
    np.testing.assert_allclose(f.normalized_gram, [[14 / 3]])
    # normal equations: -(gram / rows) a = cross / rows
    np.testing.assert_allclose(-f.normalized_gram @ f.coeffs, f.cross / f.rows)


def test_zero_series_is_invalid():
    s = SeriesWindow(np.zeros(30))
    for k, K, i in [(1, 1, 5), (2, 3, 20), (3, 5, 30)]:
        f = fit_at(s, k, K, i)
        assert not f.valid and f.coeffs is None
        with pytest.raises(EstimationError):
            f.predictor()


def test_noiseless_ar1_is_recovered_exactly():
    s = noiseless_ar1(40)
    f = fit_at(s, 1, 3, 40)
    assert f.coeffs[0] == pytest.approx(-0.5, abs=1e-15)
    assert residual_variance(s, 1, 3) == pytest.approx(0.0, abs=1e-30)


def test_bounds():
    s = SeriesWindow(np.arange(1.0, 11.0))
    with pytest.raises(BoundsError):
        fit_at(s, 2, 1, 5)  # k > K_n
    with pytest.raises(BoundsError):
        fit_at(s, 1, 2, 2)  # i < K_n + k
    with pytest.raises(BoundsError):
        fit_at(s, 1, 2, 11)  # i > n
    with pytest.raises(BoundsError):
        fit_at(s, 1, 0, 5)
    with pytest.raises(BoundsError):
        advance(fit_at(s, 1, 2, 10), s)


def test_advance_matches_batch_on_random_series():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(40, 90))
        s = SeriesWindow(rng.standard_normal(n))
        k = int(rng.integers(1, 9))
        K = int(rng.integers(k, 9))
        f = fit_at(s, k, K, 2 * K + k)
        while f.i < n:
            f = advance(f, s)
            ref = fit_at(s, k, K, f.i)
            assert f.valid == ref.valid
            if f.valid:
                worst = max(worst, np.max(np.abs(f.coeffs - ref.coeffs)) / np.max(np.abs(ref.coeffs)))
    assert worst < 1e-8


def test_advance_refactorizes_on_schedule():
    rng = np.random.default_rng(1)
    s = SeriesWindow(rng.standard_normal(400))
    f = fit_at(s, 4, 6, 20)
    for _ in range(REFACTOR_INTERVAL - 1):
        f = advance(f, s)
    assert f.updates == REFACTOR_INTERVAL - 1
    f = advance(f, s)
    assert f.updates == 0
    np.testing.assert_allclose(f.coeffs, brute_coeffs(s.values, 4, 6, f.i), rtol=1e-10, atol=1e-12)


def test_advance_keeps_gram_psd_on_repeating_series():
    base = np.random.default_rng(2).standard_normal(10)
    s = SeriesWindow(np.tile(base, 8))
    f = fit_at(s, 3, 4, 12)
    while f.i < s.n:
        f = advance(f, s)
        assert np.linalg.eigvalsh(f.gram).min() >= -1e-10 * np.trace(f.gram)


def test_cholesky_update():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 6))
    G = A @ A.T + np.eye(6)
    x = rng.standard_normal(6)
    L = cholesky_update(np.linalg.cholesky(G), x)
    np.testing.assert_allclose(L @ L.T, G + np.outer(x, x), rtol=1e-12)
    np.testing.assert_allclose(L, np.linalg.cholesky(G + np.outer(x, x)), atol=1e-12)


def test_lag_matrix_rows():
    v = np.arange(1.0, 11.0)
    X = lag_matrix(v, 3, 4, 6)
    np.testing.assert_array_equal(X, [[4, 3, 2], [5, 4, 3], [6, 5, 4]])


def test_gram_validity_rule():
    assert not gram_is_valid(np.eye(3), 2)  # fewer rows than order
    assert gram_is_valid(np.eye(3), 3)
    assert not gram_is_valid(np.diag([1.0, 1.0, 1e-12]), 10)


def test_white_noise_residual_variance():
    s = simulate(ProcessSpec.white_noise(), 10 ** 5, seed=5)
    assert residual_variance(s, 1, 316) == pytest.approx(1.0, rel=0.02)


@given(st.integers(0, 10 ** 6), st.integers(1, 8))
def test_residual_variance_monotone(seed, K):
    s = SeriesWindow(np.random.default_rng(seed).standard_normal(60))
    s2 = [residual_variance(s, k, K) for k in range(1, K + 1)]
    assert all(b <= a + 1e-10 for a, b in zip(s2, s2[1:]))
    np.testing.assert_allclose(OrderFits(s, K).residual_variances, s2, rtol=1e-10)


@given(st.integers(0, 10 ** 6), st.floats(0.01, 100.0))
def test_scale_equivariance(seed, c):
    s = SeriesWindow(np.random.default_rng(seed).standard_normal(50))
    f, g = fit_at(s, 3, 4, 50), fit_at(s.scaled(c), 3, 4, 50)
    np.testing.assert_allclose(g.coeffs, f.coeffs, rtol=1e-9, atol=1e-12)
    assert residual_variance(s.scaled(c), 3, 4) == pytest.approx(c * c * residual_variance(s, 3, 4), rel=1e-9)


class TestOrderFits:
    def setup_method(self):
        self.s = simulate(ProcessSpec.arma11(0.5, 0.4), 150, seed=8)
        self.K = 6
        self.fits = OrderFits(self.s, self.K)

    def test_final_quantities_match_fit_at(self):
        n = self.s.n
        for k in range(1, self.K + 1):
            f = fit_at(self.s, k, self.K, n)
            np.testing.assert_allclose(self.fits.coefficients(k), f.coeffs, rtol=1e-10)
            np.testing.assert_allclose(self.fits.coefficients(k), brute_coeffs(self.s.values, k, self.K, n), rtol=1e-10)
            assert self.fits.final_predictions[k - 1] == pytest.approx(f.predict_next(self.s), rel=1e-10)

    def test_sequential_errors_match_brute_force(self):
        start = 30
        err, valid = self.fits.sequential_errors(start)
        assert valid.all()
        v = self.s.values
        for k in (1, 3, 6):
            for i in range(start, self.s.n):
                a = brute_coeffs(v, k, self.K, i)
                pred = -v[i - k:i][::-1] @ a
                assert err[i - start, k - 1] == pytest.approx(v[i] - pred, rel=1e-9, abs=1e-12)

    def test_cache_extends_downwards(self):
        late = self.fits.ape(100).copy()
        early = self.fits.ape(40)
        np.testing.assert_allclose(OrderFits(self.s, self.K).ape(100), late, rtol=1e-12)
        assert np.all(early >= late)

    def test_m_is_first_valid_full_order_index(self):
        assert self.fits.m == 2 * self.K == first_valid_index(self.s, self.K)

    def test_m_skips_degenerate_prefix(self):
        v = np.concatenate((np.zeros(20), np.random.default_rng(4).standard_normal(60)))
        fits = OrderFits(SeriesWindow(v), 3)
        m = fits.m
        assert m > 6
        assert fit_at(SeriesWindow(v), 3, 3, m).valid and not fit_at(SeriesWindow(v), 3, 3, m - 1).valid

    def test_predict_other(self):
        y = simulate(ProcessSpec.arma11(0.5, 0.4), 150, seed=99)
        for k in (1, 4):
            assert self.fits.predict_other(y, k) == pytest.approx(-y.regressor(150, k) @ self.fits.coefficients(k))

    def test_overordered_noiseless_fit_is_invalid(self):
        fits = OrderFits(noiseless_ar1(40), 3)
        assert fits.final_valid[0] and not fits.final_valid[2]
        with pytest.raises(EstimationError):
            fits.coefficients(3)
