import math

import numpy as np
import pytest
from scipy import stats

from probit_design.errors import DegenerateCorrelationError, InvalidInputError
from probit_design.special_functions import (
    bvn_cdf,
    bvn_cdf_dx,
    h_third_derivative,
    h_third_derivative_identity,
    intensity_lambda2,
    inverse_intensity_h,
    lemma1_bounds,
    std_normal_cdf,
    std_normal_pdf,
)


def test_univariate_kernels_at_zero():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    assert intensity_lambda2(0.0) == pytest.approx(2 / math.pi, rel=1e-14)
    assert inverse_intensity_h(0.0) == pytest.approx(math.pi / 2, rel=1e-14)


def test_intensity_is_even_and_finite_in_the_tails():
    z = np.array([0.3, 1.7, 6.0, 30.0])
    assert np.array_equal(intensity_lambda2(z), intensity_lambda2(-z))
    tail = intensity_lambda2(30.0)
    assert 0.0 < tail < 1e-150
    # lambda_2(z) ~ z phi(z) for large z
    assert tail == pytest.approx(30.0 * std_normal_pdf(30.0), rel=1e-2)


def test_kernels_reject_non_finite_input():
    with pytest.raises(InvalidInputError):
        std_normal_cdf(float('nan'))
    with pytest.raises(InvalidInputError):
        intensity_lambda2(np.array([0.0, np.inf]))


def test_h_third_derivative_positive_and_odd():
    grid = np.linspace(0.01, 10.0, 1000)
    values = h_third_derivative(grid)
    assert np.all(values > 0)
    assert np.allclose(h_third_derivative(-grid), -values, rtol=1e-14)
    assert h_third_derivative(0.0) == 0.0


@pytest.mark.parametrize('z', [1.0, 1.5, 2.0, 4.0, 8.0, 10.0])
def test_h_third_derivative_identity_matches_closed_form(z):
    assert h_third_derivative_identity(z) == pytest.approx(h_third_derivative(z), rel=1e-8)


def test_h_third_derivative_identity_needs_positive_z():
    with pytest.raises(InvalidInputError):
        h_third_derivative_identity(0.0)


def test_lemma1_bounds_hold_on_their_ranges():
    upper = np.linspace(1.0, 10.0, 500)
    a, _ = lemma1_bounds(upper)
    assert np.all(a <= std_normal_cdf(-upper))

    lower = np.linspace(0.0, 1.0, 500)
    _, b = lemma1_bounds(lower)
    assert np.all(std_normal_cdf(lower) - 0.5 <= b + 1e-15)

    a0, b0 = lemma1_bounds(0.0)
    assert a0 == math.inf and b0 == 0.0
    with pytest.raises(InvalidInputError):
        lemma1_bounds(-0.5)


@pytest.mark.parametrize('rho', [-0.999, -0.95, -0.5, 0.0, 0.3, 0.93, 0.999])
def test_bvn_cdf_orthant_probability(rho):
    assert bvn_cdf(0.0, 0.0, rho) == pytest.approx(0.25 + math.asin(rho) / (2 * math.pi), abs=1e-10)


@pytest.mark.parametrize('x, y, rho', [
    (0.5, -0.3, 0.4),
    (-1.2, 0.7, -0.6),
    (1.5, 1.1, 0.95),
    (0.2, -0.9, -0.97),
    (-2.0, -1.0, 0.7071),
])
def test_bvn_cdf_against_scipy(x, y, rho):
    reference = stats.multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]]).cdf([x, y])
    assert bvn_cdf(x, y, rho) == pytest.approx(reference, abs=1e-4)


def test_bvn_cdf_perfect_correlation_and_infinite_limits():
    assert bvn_cdf(0.4, 1.3, 1.0) == pytest.approx(std_normal_cdf(0.4), abs=1e-15)
    assert bvn_cdf(0.5, 0.5, -1.0) == pytest.approx(2 * std_normal_cdf(0.5) - 1, abs=1e-14)
    assert bvn_cdf(-1.0, -1.0, -1.0) == 0.0
    assert bvn_cdf(math.inf, 0.3, 0.5) == pytest.approx(std_normal_cdf(0.3), abs=1e-15)
    assert bvn_cdf(-math.inf, 0.3, 0.5) == 0.0


def test_bvn_cdf_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        bvn_cdf(0.0, 0.0, 1.01)
    with pytest.raises(InvalidInputError):
        bvn_cdf(float('nan'), 0.0, 0.2)


@pytest.mark.parametrize('x, y, rho', [(0.3, -0.4, 0.5), (-1.0, 0.8, -0.7), (0.9, 1.2, 0.96)])
def test_bvn_cdf_dx_matches_finite_differences(x, y, rho):
    step = 1e-5
    numeric = (bvn_cdf(x + step, y, rho) - bvn_cdf(x - step, y, rho)) / (2 * step)
    assert bvn_cdf_dx(x, y, rho) == pytest.approx(numeric, abs=1e-8)


def test_bvn_cdf_dx_degenerate_correlation():
    with pytest.raises(DegenerateCorrelationError):
        bvn_cdf_dx(0.1, 0.2, 1.0)
    assert bvn_cdf_dx(-math.inf, 0.2, 0.3) == 0.0
