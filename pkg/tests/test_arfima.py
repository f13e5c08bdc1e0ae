import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gammaln

from longmem.arfima import (
    ArfimaSpec,
    SimConfig,
    _psi_recursion,
    frac_coeffs,
    simulate,
    simulate_gaussian,
)
from longmem.errors import ConfigError


def lag1_autocorr(x):
    d = x - x.mean()
    return float(d[1:] @ d[:-1] / (d @ d))


def psi_gamma_oracle(d, M):
    """psi_j = Gamma(j + d) / (Gamma(d) Gamma(j + 1)), valid for d > 0."""
    j = np.arange(M + 1)
    return np.exp(gammaln(j + d) - gammaln(d) - gammaln(j + 1))


# ---------------------------------------------------------------- weights


def test_frac_coeffs_zero_d():
    psi = frac_coeffs(0.0, 50)
    assert psi[0] == 1.0
    assert np.all(psi[1:] == 0.0)


def test_recursion_hand_values_at_half():
    psi = _psi_recursion(0.5, 2)
    np.testing.assert_allclose(psi, [1.0, 0.5, 0.375], rtol=0, atol=1e-15)


def test_first_weight_is_d():
    assert frac_coeffs(0.12, 1)[1] == pytest.approx(0.12, abs=1e-15)


@pytest.mark.parametrize("d", [0.04, 0.12, 0.3, 0.45])
def test_weights_match_gamma_function_oracle(d):
    np.testing.assert_allclose(frac_coeffs(d, 2000), psi_gamma_oracle(d, 2000), rtol=1e-10)


@pytest.mark.parametrize("d", [0.5, -0.5, 0.7])
def test_nonstationary_d_rejected(d):
    with pytest.raises(ConfigError):
        frac_coeffs(d, 10)


@given(st.floats(0.001, 0.49))
def test_positive_d_gives_positive_decreasing_weights(d):
    psi = frac_coeffs(d, 300)[1:]
    assert np.all(psi > 0)
    assert np.all(np.diff(psi) < 0)


# ---------------------------------------------------------------- model validation


@pytest.mark.parametrize(
    "coeffs, d",
    [({1: 1.0}, 0.0), ({1: -1.2}, 0.0), ({11: 0.1}, 0.0), ({0: 0.1}, 0.0), ({}, 0.5), ({1: 0.6, 2: 0.5}, 0.0)],
)
def test_invalid_specs(coeffs, d):
    with pytest.raises(ConfigError):
        ArfimaSpec(coeffs, d)


def test_short_series_rejected():
    with pytest.raises(ConfigError):
        SimConfig(T=15, seed=0)


# ---------------------------------------------------------------- simulation


def test_white_noise_lag1_autocorrelation():
    T = 4000
    x = simulate(ArfimaSpec(), SimConfig(T, 123)).values
    assert abs(lag1_autocorr(x)) < 3 / np.sqrt(T)


def test_ar1_lag1_autocorrelation():
    T = 20000
    x = simulate(ArfimaSpec({1: 0.2}), SimConfig(T, 5)).values
    se = np.sqrt((1 - 0.2**2) / T)  # Bartlett variance of r1 for an AR(1)
    assert abs(lag1_autocorr(x) - 0.2) < 3 * se


def test_fractional_noise_lag1_autocorrelation():
    # ARFIMA(0, d, 0): rho_1 = d / (1 - d)
    d, T, reps = 0.2, 4000, 40
    r1 = [lag1_autocorr(simulate(ArfimaSpec({}, d), SimConfig(T, s)).values) for s in range(reps)]
    target = d / (1 - d)
    se = np.std(r1, ddof=1) / np.sqrt(reps)
    # sample autocorrelations are biased down under long memory; allow the bias of O(1/T^(1-2d))
    assert abs(np.mean(r1) - target) < 3 * se + 0.01


def test_sparse_lag4_structure():
    x = simulate(ArfimaSpec({4: 0.3}), SimConfig(20000, 8)).values
    d = x - x.mean()
    acf = [float(d[k:] @ d[:-k] / (d @ d)) for k in (1, 2, 3, 4)]
    assert max(abs(a) for a in acf[:3]) < 3 / np.sqrt(20000)
    assert abs(acf[3] - 0.3) < 0.03


def test_deterministic_and_finite():
    spec = ArfimaSpec({1: 0.1, 3: -0.05}, 0.12)
    a = simulate(spec, SimConfig(1500, 99)).values
    b = simulate(spec, SimConfig(1500, 99)).values
    assert len(a) == 1500
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))
    assert not np.array_equal(a, simulate(spec, SimConfig(1500, 100)).values)


def test_gaussian_equals_plain_simulate():
    np.testing.assert_array_equal(
        simulate_gaussian(500, 4).values, simulate(ArfimaSpec({}, 0.0, 1.0), SimConfig(500, 4)).values
    )


def test_gaussian_mean_bound():
    T = 2000
    x = simulate_gaussian(T, 17).values
    assert abs(x.mean()) < 4 / np.sqrt(T)


def test_innovation_scale():
    a = simulate(ArfimaSpec({}, 0.1, 1.0), SimConfig(300, 2)).values
    b = simulate(ArfimaSpec({}, 0.1, 2.5), SimConfig(300, 2)).values
    np.testing.assert_allclose(b, 2.5 * a, rtol=1e-12, atol=1e-12)


def test_burn_in_override():
    x = simulate(ArfimaSpec({1: 0.5}), SimConfig(100, 1, burn_in=0)).values
    assert len(x) == 100
