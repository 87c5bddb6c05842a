"""
Log-scale special functions: log-Gamma, Kummer 1F1 and Whittaker M

Every function here is pure. Parameters are restricted to a > 0, b > 0,
z >= 0, where all terms of the Kummer series are positive.
"""
import logging
import math
from typing import Tuple

from scipy.special import gammaln

from hestonopt.core.config import settings
from hestonopt.core.errors import DomainError, EvaluationError

logger = logging.getLogger(__name__)

# Partial sums are rescaled by this power of ten to stay inside double range
_RESCALE_EXP10 = 250
_RESCALE = 10.0 ** _RESCALE_EXP10
_LOG_RESCALE = _RESCALE_EXP10 * math.log(10.0)


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value}")


def log_gamma(x: float) -> float:
    """
    ln Gamma(x) for x > 0.

    Args:
        x: Positive argument

    Returns:
        Natural log of the Gamma function
    """
    _require_finite(x=x)
    if x <= 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(gammaln(x))


def _check_kummer_args(a: float, b: float, z: float) -> None:
    _require_finite(a=a, b=b, z=z)
    if a <= 0:
        raise DomainError(f"Kummer parameter a must be positive, got {a}")
    if b <= 0:
        raise DomainError(f"Kummer parameter b must be positive, got {b}")
    if z < 0:
        raise DomainError(f"Kummer argument z must be non-negative, got {z}")


def _log_kummer_series(a: float, b: float, z: float) -> float:
    """Direct series with scaled accumulation; all terms are positive."""
    tol = settings.KUMMER_SERIES_TOL
    max_terms = settings.KUMMER_MAX_TERMS
    term = 1.0
    lead = 1.0
    # terms after the leading 1, kept apart so small z keeps full precision
    tail = 0.0
    log_scale = 0.0
    for n in range(max_terms):
        term *= (a + n) * z / ((b + n) * (n + 1))
        tail += term
        if tail > _RESCALE:
            tail /= _RESCALE
            term /= _RESCALE
            lead /= _RESCALE
            log_scale += _LOG_RESCALE
        # every later term ratio is at most r_bound
        r_bound = z * max(1.0, (a + n + 1) / (b + n + 1)) / (n + 2)
        if r_bound < 1.0 and term * r_bound / (1.0 - r_bound) <= tol * tail:
            logger.debug("Kummer series (%g, %g, %g) converged after %d terms", a, b, z, n + 1)
            if log_scale == 0.0:
                return math.log1p(tail)
            return log_scale + math.log(lead + tail)
    raise EvaluationError(f"Kummer series for a={a}, b={b}, z={z} did not converge", max_terms)


def kummer_asymptotic_series(a: float, b: float, z: float) -> Tuple[float, bool]:
    """
    Large-z correction series sum_n (b-a)_n (1-a)_n / (n! z^n).

    The series diverges; it is cut before the first term whose magnitude
    grows. The flag reports whether the smallest retained term reached
    working precision.

    Returns:
        (ln of the truncated sum, converged flag)
    """
    _check_kummer_args(a, b, z)
    if z == 0:
        return 0.0, False
    tol = settings.KUMMER_ASYMPTOTIC_TOL
    term = 1.0
    total = 1.0
    for n in range(settings.KUMMER_MAX_TERMS):
        nxt = term * (b - a + n) * (1.0 - a + n) / ((n + 1) * z)
        if nxt == 0.0:
            return (math.log(total), True) if total > 0 else (0.0, False)
        if abs(nxt) >= abs(term):
            break
        total += nxt
        term = nxt
        if abs(term) < tol * abs(total):
            return (math.log(total), True) if total > 0 else (0.0, False)
    if total <= 0:
        return 0.0, False
    return math.log(total), False


def _asymptotic_branch(a: float, b: float, z: float) -> Tuple[float, bool]:
    if z < settings.KUMMER_ASYMPTOTIC_THRESHOLD:
        return 0.0, False
    log_s, converged = kummer_asymptotic_series(a, b, z)
    if not converged:
        logger.debug("Asymptotic series not accurate at (%g, %g, %g); using direct series", a, b, z)
    return log_s, converged


def log_kummer_m(a: float, b: float, z: float) -> float:
    """
    ln 1F1(a; b; z) for a > 0, b > 0, z >= 0.

    Args:
        a: First parameter
        b: Second parameter
        z: Argument

    Returns:
        Natural log of the confluent hypergeometric function
    """
    _check_kummer_args(a, b, z)
    if z == 0:
        return 0.0
    log_s, converged = _asymptotic_branch(a, b, z)
    if converged:
        return z + (a - b) * math.log(z) + log_gamma(b) - log_gamma(a) + log_s
    return _log_kummer_series(a, b, z)


def log_kummer_scaled(a: float, b: float, z: float) -> float:
    """
    ln[Gamma(a)/Gamma(b) * z^(b-a) * exp(-z) * 1F1(a; b; z)].

    Tends to 0 as z grows; the asymptotic branch returns the correction
    series directly so the exp(z) and Gamma factors never appear.
    """
    _check_kummer_args(a, b, z)
    if z == 0:
        raise DomainError("log_kummer_scaled requires z > 0")
    log_s, converged = _asymptotic_branch(a, b, z)
    if converged:
        return log_s
    return log_gamma(a) - log_gamma(b) + (b - a) * math.log(z) - z + _log_kummer_series(a, b, z)


def log_whittaker_m(lam: float, eta: float, z: float) -> float:
    """
    ln M_{lam,eta}(z) = -z/2 + (eta + 1/2) ln z + ln 1F1(eta - lam + 1/2; 1 + 2 eta; z).
    """
    _require_finite(lam=lam, eta=eta, z=z)
    if eta <= 0:
        raise DomainError(f"Whittaker index eta must be positive, got {eta}")
    if z <= 0:
        raise DomainError(f"Whittaker argument must be positive, got {z}")
    a = eta - lam + 0.5
    if a <= 0:
        raise DomainError(f"eta - lambda + 1/2 must be positive, got {a}")
    return -0.5 * z + (eta + 0.5) * math.log(z) + log_kummer_m(a, 1.0 + 2.0 * eta, z)


def kummer_ratio_shifted(a: float, b: float, z: float) -> float:
    """
    1F1(a-1; b; z) / 1F1(a; b; z), which is M_{1+lam,eta}/M_{lam,eta} at a = eta - lam + 1/2.

    Args:
        a: First parameter, a - 1 >= 0
        b: Second parameter
        z: Argument

    Returns:
        Ratio in (0, 1]
    """
    _require_finite(a=a, b=b, z=z)
    if a - 1.0 < 0:
        raise DomainError(f"kummer_ratio_shifted requires a - 1 >= 0, got a={a}")
    if b <= 0:
        raise DomainError(f"Kummer parameter b must be positive, got {b}")
    if z < 0:
        raise DomainError(f"Kummer argument z must be non-negative, got {z}")
    if z == 0:
        return 1.0
    if a - 1.0 == 0:
        return math.exp(-log_kummer_m(a, b, z))

    log_lo, lo_ok = _asymptotic_branch(a - 1.0, b, z)
    log_hi, hi_ok = _asymptotic_branch(a, b, z)
    if lo_ok and hi_ok:
        ratio = (a - 1.0) / z * math.exp(log_lo - log_hi)
    else:
        ratio = math.exp(_log_kummer_series(a - 1.0, b, z) - _log_kummer_series(a, b, z))
    return min(ratio, 1.0)
