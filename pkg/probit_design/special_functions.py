"""
Standard-normal kernels used throughout the package.

Covers the univariate density and distribution function, the bivariate
normal distribution function with its partial derivative, the probit
intensity lambda_2 with its reciprocal h, and the auxiliary bounds used to
certify the paired-comparison optimum.

Every function is pure. Scalar inputs give a float back; the univariate
kernels also accept numpy arrays and map elementwise.
"""

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from .errors import DegenerateCorrelationError, InvalidInputError

TWO_PI = 2.0 * math.pi
LOG_TWO_PI = math.log(TWO_PI)
SQRT_TWO_PI = math.sqrt(TWO_PI)

# 20-point Gauss-Legendre rule on [-1, 1]; shifted to (0, 2) below, as in Genz's bvnu.
_GL_NODES, _GL_WEIGHTS = leggauss(20)
_GL_SHIFTED = 1.0 + _GL_NODES

# Above this |rho| the arcsine substitution loses accuracy and the
# Drezner-Wesolowsky expansion around rho = +-1 is used instead.
_HIGH_CORRELATION = 0.925


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def _finite(z, name='z'):
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite, got {z!r}")
    return arr


# --- Univariate kernels ---

def std_normal_pdf(z):
    """Density phi_0 of the standard normal distribution."""
    arr = _finite(z)
    return _out(np.exp(-0.5 * arr * arr) / SQRT_TWO_PI)


def std_normal_cdf(z):
    """Distribution function Phi_0 of the standard normal distribution."""
    arr = _finite(z)
    return _out(special.ndtr(arr))


def _log_phi_sq(arr):
    # log(phi_0(z)^2)
    return -arr * arr - LOG_TWO_PI


def _log_bernoulli_variance(arr):
    # log(Phi_0(z) * (1 - Phi_0(z))), tails evaluated directly, never as 1 - Phi_0
    return special.log_ndtr(arr) + special.log_ndtr(-arr)


def intensity_lambda2(z):
    """
    Marginal probit intensity lambda_2(z) = phi_0(z)^2 / (Phi_0(z) (1 - Phi_0(z))).
    Evaluated in log space, so it is exactly even and does not cancel in the tails.
    """
    arr = _finite(z)
    return _out(np.exp(_log_phi_sq(arr) - _log_bernoulli_variance(arr)))


def inverse_intensity_h(z):
    """Inverse intensity h(z) = 1 / lambda_2(z)."""
    arr = _finite(z)
    with np.errstate(over='ignore'):
        return _out(np.exp(_log_bernoulli_variance(arr) - _log_phi_sq(arr)))


def _mills_ratio(arr):
    # (1 - Phi_0(z)) / phi_0(z)
    with np.errstate(over='ignore'):
        return np.exp(special.log_ndtr(-arr) + 0.5 * arr * arr + 0.5 * LOG_TWO_PI)


def h_third_derivative(z):
    """
    Third derivative of the inverse intensity:
        h'''(z) = (8z^3 + 12z) Phi(1-Phi)/phi^2 - (14z^2 + 10)(Phi - 1/2)/phi - 6z.
    h''' is odd, so it is evaluated at |z| and the sign restored.
    """
    arr = _finite(z)
    x = np.abs(arr)
    cdf = special.ndtr(x)
    pdf = np.exp(-0.5 * x * x) / SQRT_TWO_PI
    with np.errstate(over='ignore', divide='ignore', invalid='ignore'):
        value = ((8 * x**3 + 12 * x) * cdf * _mills_ratio(x)
                 - (14 * x**2 + 10) * (cdf - 0.5)) / pdf - 6 * x
    return _out(np.sign(arr) * value)


def h_third_derivative_identity(z):
    """
    h'''(z) for z > 0 through the tail-bound identity

        phi^2 h''' / (2z^3 + 3z) = 1 - (1 - 2 delta)^2 + ((z^2-1)^2 + 24) / ((4z^2+6)^2 z^2) phi^2,

    delta = (1 - Phi(z)) - a(z), a the lower tail bound of lemma1_bounds.
    1 - (1 - 2 delta)^2 is carried as 4 delta (1 - delta) and delta / phi as a
    difference of Mills ratios, so nothing cancels.
    """
    arr = _finite(z)
    if np.any(arr <= 0):
        raise InvalidInputError(f"identity form needs z > 0, got {z!r}")
    pdf = np.exp(-0.5 * arr * arr) / SQRT_TWO_PI
    tail_bound_ratio = (1.0 - (arr**2 + 7) / (8 * arr**2 + 12)) / arr
    delta_over_pdf = _mills_ratio(arr) - tail_bound_ratio
    delta = delta_over_pdf * pdf
    correction = ((arr**2 - 1) ** 2 + 24) / ((4 * arr**2 + 6) ** 2 * arr**2)
    with np.errstate(over='ignore', divide='ignore'):
        value = (2 * arr**3 + 3 * arr) * (4 * delta_over_pdf * (1.0 - delta) / pdf + correction)
    return _out(value)


def lemma1_bounds(z):
    """
    Returns (a, b) for z >= 0:
      a = (1 - (z^2 + 7) / (8z^2 + 12)) phi_0(z) / z, a lower bound of 1 - Phi_0(z) for z >= 1;
      b = (z - z^3/6 + z^5/40) / sqrt(2 pi), an upper bound of Phi_0(z) - 1/2 for 0 <= z <= 1.
    a is infinite at z = 0.
    """
    arr = _finite(z)
    if np.any(arr < 0):
        raise InvalidInputError(f"bounds are defined for z >= 0, got {z!r}")
    pdf = np.exp(-0.5 * arr * arr) / SQRT_TWO_PI
    with np.errstate(divide='ignore', invalid='ignore'):
        a = np.where(arr > 0, (1.0 - (arr**2 + 7) / (8 * arr**2 + 12)) * pdf / np.where(arr > 0, arr, 1.0), np.inf)
    b = (arr - arr**3 / 6 + arr**5 / 40) / SQRT_TWO_PI
    return _out(a), _out(b)


# --- Bivariate kernels ---

def _check_correlation(rho):
    if math.isnan(rho) or abs(rho) > 1.0:
        raise InvalidInputError(f"correlation must lie in [-1, 1], got {rho!r}")
    return rho


def _bvn_upper(h: float, k: float, r: float) -> float:
    """P(X > h, Y > k) for a standard bivariate normal pair with correlation r (Genz's bvnu)."""
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return 1.0 if k == -math.inf else float(special.ndtr(-k))
    if k == -math.inf:
        return float(special.ndtr(-h))
    if r == 0.0:
        return float(special.ndtr(-h) * special.ndtr(-k))

    hk = h * k
    if abs(r) < _HIGH_CORRELATION:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        sn = np.sin(asr * _GL_SHIFTED)
        bvn = float(np.dot(_GL_WEIGHTS, np.exp((sn * hk - hs) / (1.0 - sn * sn))))
        bvn = bvn * asr / TWO_PI + float(special.ndtr(-h) * special.ndtr(-k))
    else:
        if r < 0:
            k = -k
            hk = -hk
        bvn = 0.0
        if abs(r) < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            asr = -0.5 * (bs / as_ + hk)
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            if asr > -100:
                bvn = a * math.exp(asr) * (1 - c * (bs - as_) * (1 - d * bs) / 3 + c * d * as_ * as_)
            if hk > -100:
                b = math.sqrt(bs)
                sp = SQRT_TWO_PI * float(special.ndtr(-b / a))
                bvn -= math.exp(-0.5 * hk) * sp * b * (1 - c * bs * (1 - d * bs) / 3)
            a *= 0.5
            xs = (a * _GL_SHIFTED) ** 2
            asr_nodes = -0.5 * (bs / xs + hk)
            keep = asr_nodes > -100
            xs = xs[keep]
            sp_nodes = 1 + c * xs * (1 + 5 * d * xs)
            rs = np.sqrt(1 - xs)
            ep = np.exp(-0.5 * hk * xs / (1 + rs) ** 2) / rs
            bvn = (a * float(np.dot(np.exp(asr_nodes[keep]) * (sp_nodes - ep), _GL_WEIGHTS[keep])) - bvn) / TWO_PI
        if r > 0:
            bvn += float(special.ndtr(-max(h, k)))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0:
                span = float(special.ndtr(k) - special.ndtr(h))
            else:
                span = float(special.ndtr(-h) - special.ndtr(-k))
            bvn = span - bvn
    return min(1.0, max(0.0, bvn))


def bvn_cdf(x: float, y: float, rho: float) -> float:
    """
    P(X <= x, Y <= y) for a standard bivariate normal pair with correlation rho.

    Drezner-Wesolowsky / Genz Gauss-Legendre quadrature; absolute error
    below 1e-12 on the whole domain, rho = +-1 included. x and y may be +-inf.
    """
    x, y, rho = float(x), float(y), float(rho)
    if math.isnan(x) or math.isnan(y):
        raise InvalidInputError(f"bvn_cdf limits must not be NaN, got ({x}, {y})")
    _check_correlation(rho)
    return _bvn_upper(-x, -y, rho)


def bvn_cdf_dx(x: float, y: float, rho: float) -> float:
    """Partial derivative d/dx Phi_rho(x, y) = phi_0(x) Phi_0((y - rho x) / sqrt(1 - rho^2))."""
    x, y, rho = float(x), float(y), float(rho)
    if math.isnan(x) or math.isnan(y):
        raise InvalidInputError(f"bvn_cdf_dx arguments must not be NaN, got ({x}, {y})")
    _check_correlation(rho)
    one_minus_rho_sq = (1.0 - rho) * (1.0 + rho)
    if one_minus_rho_sq <= 0.0:
        raise DegenerateCorrelationError(f"correlation {rho} has no bivariate density")
    if math.isinf(x):
        return 0.0
    pdf = math.exp(-0.5 * x * x) / SQRT_TWO_PI
    return pdf * float(special.ndtr((y - rho * x) / math.sqrt(one_minus_rho_sq)))
