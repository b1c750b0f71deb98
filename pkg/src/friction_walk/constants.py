"""Limit constants of the jump process, their quadrature oracles, and the
Cramer rate function of the per-jump log-contraction.

All sphere averages reduce to one dimension: for a unit vector ``y`` and
``U`` uniform on the sphere, ``t = y . U`` is uniform on [-1, 1] and

    |a y + (1-a) U|^2 = s(t) = a^2 + (1-a)^2 + 2 a (1-a) t,

which ranges over [(1-2a)^2, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OutOfRange
from .kernel import PhysParams
from .quadrature import gauss_legendre

# below this |1-2a| (or |xi+2|) the removable singularities take their limits
SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class Constants:
    a: float
    b: float
    log_theta: float
    theta: float
    sigma2: float


def _check_a(a):
    if not (0.0 < a < 1.0):
        raise DomainError(f"mass ratio a must lie in (0, 1), got {a!r}")


def _is_half(a):
    return abs(1.0 - 2.0 * a) < SINGULAR_TOL


def b_closed(a: float) -> float:
    """Mean directional persistence E(Y_{n+1} . Y_n).

    The textbook expression
    (c(2a^2 + a - 1) - 3a + 1) / (6 (a-1) a^2) with c = |1-2a|
    reduces to a rational function on each side of a = 1/2; those forms are
    used here because the textbook one cancels catastrophically as a -> 0.
    """
    _check_a(a)
    if a <= 0.5:
        return 2.0 * a / (3.0 * (1.0 - a))
    return (2.0 * a * a + 2.0 * a - 1.0) / (3.0 * a * a)


def b_textbook(a: float) -> float:
    """The unsimplified closed form, kept as an independent cross-check."""
    _check_a(a)
    c = abs(1.0 - 2.0 * a)
    return 0.5 * (c * (2 * a * a + a - 1) - 3 * a + 1) / (3 * (a - 1) * a * a)


def _log_c(a):
    """log|1-2a| without losing digits when a is near 0 or 1."""
    return math.log1p(-2.0 * a) if a < 0.5 else math.log1p(2.0 * a - 2.0)


def log_theta_closed(a: float) -> float:
    """Mean log-contraction E log|a y + (1-a) U|."""
    _check_a(a)
    c = abs(1.0 - 2.0 * a)
    sing = 0.0 if c < SINGULAR_TOL else c * c * _log_c(a)
    return 0.5 * (sing / (2 * (a - 1) * a) - 1.0)


# Taylor coefficients of the second moment in e = 2a (a -> 0) and in
# f = 2(1-a) (a -> 1), where the closed form below loses all its digits.
_C2_SMALL_A = (1 / 3, 0.0, 1 / 30, 1 / 30, 11 / 420, 2 / 105, 17 / 1260, 1 / 105,
               47 / 6930, 17 / 3465, 163 / 45045, 491 / 180180, 151 / 72072,
               74 / 45045, 1607 / 1225224, 163 / 153153)
_C2_LARGE_A = (1.0, 0.0, -1 / 6, -1 / 6, -7 / 60, -1 / 15, -13 / 420, -1 / 105,
               1 / 630, 2 / 315, 53 / 6930, 101 / 13860, 2263 / 360360,
               463 / 90090, 295 / 72072, 29 / 9009)
_C2_SERIES_CUT = 0.05


def persistence_second_moment(a: float) -> float:
    """E((Y_{n+1} . Y_n)^2), needed for the conditional covariance of Y_{n+1}.

    With d = 2a - 1 the integral of (a+(1-a)t)^2 / s(t) is elementary:
    ((1 - d^4)/2 + 2d(1 - d^2) - 2 d^2 log|d|) / (16 a^3 (1-a)).
    Within 0.05 of either end a truncated Taylor series is used instead.
    """
    _check_a(a)
    if a < _C2_SERIES_CUT:
        return float(np.polynomial.polynomial.polyval(2.0 * a, _C2_SMALL_A))
    if a > 1.0 - _C2_SERIES_CUT:
        return float(np.polynomial.polynomial.polyval(2.0 * (1.0 - a), _C2_LARGE_A))
    d = 2.0 * a - 1.0
    sing = 0.0 if abs(d) < SINGULAR_TOL else 2.0 * d * d * _log_c(a)
    return (0.5 * (1 - d**4) + 2 * d * (1 - d * d) - sing) / (16 * a**3 * (1 - a))


def closed_form_constants(p: PhysParams) -> Constants:
    if not isinstance(p, PhysParams):
        raise DomainError("closed_form_constants expects PhysParams")
    a = p.a
    b = b_closed(a)
    lt = log_theta_closed(a)
    m, M = p.m, p.M
    sigma2 = (2.0 / (3.0 * (1.0 - b))) * (m + M) ** 4 / (16 * math.pi**2 * m**4 * M**4)
    return Constants(a=a, b=b, log_theta=lt, theta=math.exp(lt), sigma2=sigma2)


def _shell_sq_u(a, u):
    """s(t) at t = 2u - 1, written so that s(0) = (1-2a)^2 without cancellation."""
    return (1.0 - 2.0 * a) ** 2 + 4.0 * a * (1.0 - a) * u


def _sphere_average(g, a, tol):
    """(1/2) int_{-1}^{1} g(t, s(t)) dt.

    Integrated over u = (1+t)/2 with the grading u = v^4, which makes the
    a = 1/2 endpoint singularities (sqrt, log, negative powers of s) smooth
    enough for Gauss-Legendre.
    """

    def f(v):
        u = v**4
        return g(2.0 * u - 1.0, _shell_sq_u(a, u)) * 4.0 * v**3

    return gauss_legendre(f, 0.0, 1.0, tol=tol)[0]


def b_by_quadrature(a: float, tol: float = 1e-10) -> float:
    """(1/2) int_{-1}^{1} (a + (1-a)t) / sqrt(s(t)) dt."""
    _check_a(a)
    return _sphere_average(lambda t, s: (a + (1 - a) * t) / np.sqrt(s), a, tol)


def logtheta_by_quadrature(a: float, tol: float = 1e-10) -> float:
    """(1/4) int_{-1}^{1} log s(t) dt."""
    _check_a(a)
    return _sphere_average(lambda t, s: 0.5 * np.log(s), a, tol)


def second_moment_by_quadrature(a: float, tol: float = 1e-10) -> float:
    _check_a(a)
    return _sphere_average(lambda t, s: (a + (1 - a) * t) ** 2 / s, a, tol)


# -- log-moment generating function of D = log|a y + (1-a) U| ---------------
#
# E exp(xi D) = E s^{xi/2} = (1 - c^u) / (2 a (1-a) u),  c = |1-2a|, u = xi + 2.


def _check_xi(a, xi):
    _check_a(a)
    if not math.isfinite(xi):
        raise DomainError(f"xi must be finite, got {xi!r}")
    if _is_half(a) and xi <= -1.0:
        raise DomainError(f"at a = 1/2 the supported domain is xi > -1, got {xi!r}")


def _log_ratio(a, u):
    """log((1 - c^u)/u), continuous through u = 0."""
    if _is_half(a):
        if u <= 0:
            return math.inf
        return -math.log(u)
    L = _log_c(a)
    if abs(u) < SINGULAR_TOL:
        return math.log(-L) + 0.5 * u * L
    if u > 0:
        return math.log(-math.expm1(u * L)) - math.log(u)
    return u * L + math.log(-math.expm1(-u * L)) - math.log(-u)


def _dlog_ratio(a, u):
    if _is_half(a):
        return -1.0 / u
    L = _log_c(a)
    x = -u * L
    if abs(x) < 1e-3:
        # (x/(e^x - 1) - 1)/u expanded in x
        return 0.5 * L + u * L * L / 12.0 - u**3 * L**4 / 720.0
    em = math.expm1(x)
    if math.isinf(em):
        return -1.0 / u
    return -L / em - 1.0 / u


def _lam(a, xi):
    return _log_ratio(a, xi + 2.0) - math.log(2.0 * a * (1.0 - a))


def lambda_mgf(a: float, xi: float) -> float:
    """Lambda(xi) = log E exp(xi D)."""
    _check_xi(a, xi)
    if xi == 0.0:
        return 0.0
    return _lam(a, xi)


def lambda_prime(a: float, xi: float) -> float:
    _check_xi(a, xi)
    return _dlog_ratio(a, xi + 2.0)


def lambda_by_quadrature(a: float, xi: float, tol: float = 1e-13) -> float:
    """log of (1/2) int_{-1}^{1} s(t)^{xi/2} dt."""
    _check_xi(a, xi)
    return math.log(_sphere_average(lambda t, s: s ** (0.5 * xi), a, tol))


def slope_range(a: float) -> tuple[float, float]:
    """Closure of the range of Lambda' over the supported xi domain."""
    _check_a(a)
    if _is_half(a):
        return -1.0, 0.0
    return _log_c(a), 0.0


def legendre_point(a: float, x: float, *, max_iter: int = 200, xtol: float = 1e-12) -> float:
    """xi* with Lambda'(xi*) = x, by bisection on the increasing Lambda'."""
    lo_x, hi_x = slope_range(a)
    if not (lo_x < x < hi_x) and not (_is_half(a) and x == lo_x):
        raise OutOfRange(f"x = {x!r} is not an attained slope of Lambda (range {lo_x}, {hi_x})")
    if _is_half(a):
        # Lambda'(xi) = -1/(xi+2) on xi >= -1 (closed at the boundary point)
        lo = -1.0
        if x == lo_x:
            return lo
    else:
        lo = -1.0
        while _dlog_ratio(a, lo + 2.0) > x:
            lo = 2.0 * lo - 2.0
    hi = 1.0
    while _dlog_ratio(a, hi + 2.0) < x:
        hi = 2.0 * hi + 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if _dlog_ratio(a, mid + 2.0) < x:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol:
            break
    return 0.5 * (lo + hi)


def rate_function(a: float, x: float) -> float:
    """Cramer rate I(x) = sup_xi (x xi - Lambda(xi)).

    Raises :class:`OutOfRange` outside the closure of the slope range; at the
    closure points that are not attained the supremum is infinite and
    ``math.inf`` is returned.
    """
    _check_a(a)
    if not math.isfinite(x):
        raise OutOfRange(f"x must be finite, got {x!r}")
    lo_x, hi_x = slope_range(a)
    if x < lo_x or x > hi_x:
        raise OutOfRange(f"x = {x!r} outside [{lo_x}, {hi_x}]; I(x) = +inf")
    if x == hi_x or (x == lo_x and not _is_half(a)):
        return math.inf
    xi = legendre_point(a, x)
    return max(x * xi - _lam(a, xi), 0.0) if xi != 0.0 else 0.0


@dataclass(frozen=True)
class RateFunction:
    """Lambda, Lambda' and the Legendre transform I for one mass ratio."""

    a: float

    def __post_init__(self):
        _check_a(self.a)

    @property
    def xi_min(self) -> float:
        return -1.0 if _is_half(self.a) else -math.inf

    def lam(self, xi: float) -> float:
        return lambda_mgf(self.a, xi)

    def dlam(self, xi: float) -> float:
        return lambda_prime(self.a, xi)

    def legendre_point(self, x: float) -> float:
        return legendre_point(self.a, x)

    def __call__(self, x: float) -> float:
        try:
            return rate_function(self.a, x)
        except OutOfRange:
            return OutOfRange.sentinel
