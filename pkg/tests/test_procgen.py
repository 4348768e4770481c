import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import polynomial as P

from arselect.errors import InvalidSpecError
from arselect.procgen import (
    ProcessSpec, SeriesWindow, arma11_autocov_closed_form, arma_to_ar_inf, check_stationary, exp_truncation,
    ma_inf_weights, simulate, theoretical_autocov,
)

coef = st.floats(-0.98, 0.98, allow_nan=False)


def long_division(phi, theta, T):
    # power series of (1 - phi z) / (1 + theta z), coefficients after the leading 1
    out = np.zeros(T + 1)
    num = np.zeros(T + 1)
    num[0], num[1] = 1.0, -phi
    for i in range(T + 1):
        out[i] = num[i] - (theta * out[i - 1] if i else 0.0)
    return out[1:]


@pytest.mark.parametrize("phi,theta,T,expected", [
    (0.5, 0.4, 3, [-0.9, 0.36, -0.144]),
    (0.9, 0.0, 3, [-0.9, 0.0, 0.0]),
    (0.0, 0.98, 2, [-0.98, 0.9604]),
])
def test_arma_to_ar_inf_examples(phi, theta, T, expected):
    a = arma_to_ar_inf(ProcessSpec.arma11(phi, theta), T)
    np.testing.assert_allclose(a, expected, atol=1e-15)
    np.testing.assert_allclose(a, long_division(phi, theta, T), atol=1e-15)


@given(coef, coef)
def test_ar_series_times_ma_recovers_ar_polynomial(phi, theta):
    T = 60
    A = np.concatenate(([1.0], arma_to_ar_inf(ProcessSpec.arma11(phi, theta), T)))
    prod = np.zeros(T)
    full = P.polymul(A, [1.0, theta])[:T]
    prod[: full.size] = full
    target = np.zeros(T)
    target[0], target[1] = 1.0, -phi
    np.testing.assert_allclose(prod, target, atol=1e-12)


def test_invalid_specs():
    with pytest.raises(InvalidSpecError):
        ProcessSpec.arma11(0.5, 1.0)
    with pytest.raises(InvalidSpecError):
        ProcessSpec.arma11(1.0, 0.0)
    with pytest.raises(InvalidSpecError):
        ProcessSpec.ar([-1.5, 0.2])
    with pytest.raises(InvalidSpecError):
        ProcessSpec.ar_inf_alg(0.5)
    with pytest.raises(InvalidSpecError):
        ProcessSpec.ar_inf_exp(-1.0)
    with pytest.raises(InvalidSpecError):
        ProcessSpec.arma11(0.5, 0.4, sigma2=0.0)
    # root on the unit circle: 1 - z
    with pytest.raises(InvalidSpecError):
        check_stationary([-1.0])


def test_autocov_examples():
    g = theoretical_autocov(ProcessSpec.arma11(0.5, 0.4), 3)
    np.testing.assert_allclose(g[:2], [2.08, 1.44], atol=1e-12)
    g = theoretical_autocov(ProcessSpec.arma11(0.0, 0.98), 3)
    np.testing.assert_allclose(g, [1.9604, 0.98, 0.0, 0.0], atol=1e-12)
    g = theoretical_autocov(ProcessSpec.white_noise(), 5)
    np.testing.assert_allclose(g, [1, 0, 0, 0, 0, 0], atol=1e-15)


@given(coef, coef, st.floats(0.1, 5.0))
def test_autocov_matches_closed_form_and_recursion(phi, theta, s2):
    g = theoretical_autocov(ProcessSpec.arma11(phi, theta, s2), 12)
    ref = arma11_autocov_closed_form(phi, theta, s2, 12)
    np.testing.assert_allclose(g, ref, rtol=1e-9, atol=1e-10 * ref[0])
    np.testing.assert_allclose(g[2:], phi * g[1:-1], atol=1e-10 * g[0])


def test_autocov_of_finite_ar_solves_yule_walker():
    spec = ProcessSpec.ar([-0.5, 0.3])
    g = theoretical_autocov(spec, 10)
    # gamma_j + a_1 gamma_{j-1} + a_2 gamma_{j-2} = 0 for j >= 1
    for j in range(2, 11):
        assert abs(g[j] - 0.5 * g[j - 1] + 0.3 * g[j - 2]) < 1e-12
    assert abs(g[1] - 0.5 * g[0] + 0.3 * g[1]) < 1e-12


def test_ma_weights_decay():
    psi = ma_inf_weights(ProcessSpec.arma11(0.9, 0.0))
    assert abs(psi[-1]) >= 1e-14
    np.testing.assert_allclose(psi[:5], 0.9 ** np.arange(5))


def test_simulate_white_noise_moments():
    n = 10 ** 6
    x = simulate(ProcessSpec.white_noise(), n, seed=7).values
    assert abs(x.mean()) < 4 / np.sqrt(n)
    assert abs(x.var() - 1) < 0.01


def test_simulate_is_deterministic():
    spec = ProcessSpec.arma11(0.5, 0.4)
    a = simulate(spec, 500, burn_in=50, seed=3)
    b = simulate(spec, 500, burn_in=50, seed=3)
    c = simulate(spec, 500, burn_in=50, seed=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_simulate_burn_in_is_a_suffix():
    # same seed, longer burn-in consumes the same noise stream: the extra
    # values are just discarded
    spec = ProcessSpec.arma11(0.5, 0.4)
    long = simulate(spec, 300, burn_in=0, seed=11)
    short = simulate(spec, 200, burn_in=100, seed=11)
    np.testing.assert_array_equal(long.values[100:], short.values)


def test_simulate_sample_autocov_converges():
    spec = ProcessSpec.arma11(0.5, 0.4)
    n = 10 ** 6
    x = simulate(spec, n, seed=2024).values
    g = theoretical_autocov(spec, 5)
    ghat = np.array([x[: n - h] @ x[h:] / n for h in range(6)])
    assert abs(ghat[1] - 1.44) < 0.02 * 1.44
    # Bartlett-type standard error bound for ARMA autocovariances
    se = np.sqrt(2 * np.sum(theoretical_autocov(spec, 200) ** 2) * 2 / n)
    assert np.all(np.abs(ghat - g) < 3 * se)


def test_simulated_innovations_reproduce_series():
    spec = ProcessSpec.arma11(0.5, 0.4)
    s = simulate(spec, 400, burn_in=0, seed=9)
    x, e = s.values, s.innovations
    np.testing.assert_allclose(x[1:], 0.5 * x[:-1] + e[1:] + 0.4 * e[:-1], atol=1e-12)


def test_presets_tails_and_truncation():
    exp = ProcessSpec.ar_inf_exp(0.5)
    a = exp.ar_coefficients()
    assert a.size == exp.truncation == exp_truncation(0.5, 0.2)
    assert abs(a[-1]) < 1e-12 <= abs(a[-2])
    assert exp.default_burn_in() == 10 * exp.truncation
    alg = ProcessSpec.ar_inf_alg(2.0)
    assert alg.ar_coefficients().size == 200
    # sum of |i^(1/2) a_i| is finite by construction; check it is modest
    i = np.arange(1, 201)
    assert np.sum(np.sqrt(i) * np.abs(alg.ar_coefficients())) < 10
    for spec in (exp, alg):
        check_stationary(spec.ar_coefficients())


@pytest.mark.parametrize("spec", [
    ProcessSpec.arma11(0.5, -0.3, 2.0),
    ProcessSpec.ar([0.2, -0.1, 0.05]),
    ProcessSpec.ar_inf_exp(0.7, scale=0.3),
    ProcessSpec.ar_inf_alg(2.5, truncation=50),
])
def test_config_round_trip(spec):
    assert ProcessSpec.from_config(spec.to_config()) == spec
    cfg = dict(spec.to_config(), seed="5")
    assert ProcessSpec.from_config(cfg) == spec


def test_config_errors_name_the_key():
    with pytest.raises(InvalidSpecError, match="bogus"):
        ProcessSpec.from_config({"kind": "arma11", "bogus": "1"})
    with pytest.raises(InvalidSpecError, match="phi"):
        ProcessSpec.from_config({"kind": "arma11", "phi": "abc"})
    with pytest.raises(InvalidSpecError, match="kind"):
        ProcessSpec.from_config({"phi": "0.1"})


def test_series_window_indexing():
    s = SeriesWindow(np.array([1.0, 2.0, 3.0, 4.0]))
    assert s.x(1) == 1.0 and s.x(4) == 4.0
    np.testing.assert_array_equal(s.regressor(3, 2), [3.0, 2.0])
    with pytest.raises(IndexError):
        s.x(0)
    with pytest.raises(IndexError):
        s.regressor(1, 2)
