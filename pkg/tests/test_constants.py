import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from friction_walk.constants import (
    RateFunction,
    b_by_quadrature,
    b_closed,
    b_textbook,
    closed_form_constants,
    lambda_by_quadrature,
    lambda_mgf,
    lambda_prime,
    legendre_point,
    log_theta_closed,
    logtheta_by_quadrature,
    persistence_second_moment,
    rate_function,
    second_moment_by_quadrature,
    slope_range,
)
from friction_walk.errors import DomainError, OutOfRange
from friction_walk.kernel import PhysParams

GRID = [0.1 * i for i in range(1, 10)]
ratios = st.floats(1e-4, 1 - 1e-4)


def test_equal_masses():
    p = PhysParams()
    c = closed_form_constants(p)
    assert c.a == 0.5
    assert c.log_theta == -0.5
    assert c.theta == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert c.b == pytest.approx(2 / 3, abs=1e-15)
    assert c.sigma2 == pytest.approx(2 / math.pi**2, rel=1e-14)
    assert p.eta == pytest.approx(math.pi / 2, rel=1e-15)


def test_quadrature_at_half():
    assert b_by_quadrature(0.5) == pytest.approx(2 / 3, abs=1e-10)
    assert logtheta_by_quadrature(0.5) == pytest.approx(-0.5, abs=1e-10)


@pytest.mark.parametrize("a", GRID)
def test_closed_forms_match_quadrature(a):
    assert abs(b_by_quadrature(a) - b_closed(a)) <= 1e-8
    assert abs(logtheta_by_quadrature(a) - log_theta_closed(a)) <= 1e-8
    assert abs(second_moment_by_quadrature(a) - persistence_second_moment(a)) <= 1e-10


@pytest.mark.parametrize("a", GRID)
def test_simplified_b_equals_textbook_form(a):
    assert b_closed(a) == pytest.approx(b_textbook(a), abs=1e-13)


@pytest.mark.parametrize("a", [1e-6, 1e-3, 0.049, 0.051, 0.949, 0.951, 0.999, 1 - 1e-6])
def test_extreme_mass_ratios(a):
    tol = 1e-12
    assert abs(b_by_quadrature(a, 1e-13) - b_closed(a)) <= tol
    assert abs(logtheta_by_quadrature(a, 1e-13) - log_theta_closed(a)) <= tol
    assert abs(second_moment_by_quadrature(a, 1e-13) - persistence_second_moment(a)) <= tol


def test_light_atom_limit():
    # a -> 0: the tracer barely loses momentum per jump
    assert log_theta_closed(1e-9) == pytest.approx(-1e-9, rel=1e-6)
    assert log_theta_closed(1e-3) < log_theta_closed(1e-6) < 0


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_constant_invariants(m, M):
    p = PhysParams(m, M)
    c = closed_form_constants(p)
    assert c.theta == pytest.approx(math.exp(c.log_theta), rel=1e-15)
    assert 0 < c.b < 1 and 0 < c.theta < 1 and c.sigma2 > 0
    expect = 2 / (3 * (1 - c.b)) * (m + M) ** 4 / (16 * math.pi**2 * m**4 * M**4)
    assert c.sigma2 == pytest.approx(expect, rel=1e-14)


def test_constants_reject_bad_input():
    with pytest.raises(DomainError):
        closed_form_constants("not params")
    for f in (b_closed, log_theta_closed, b_by_quadrature, logtheta_by_quadrature):
        with pytest.raises(DomainError):
            f(1.0)


# -- Lambda and the rate function --------------------------------------------


@pytest.mark.parametrize("a", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_lambda_zero_exact(a):
    assert lambda_mgf(a, 0.0) == 0.0


def test_lambda_at_half():
    assert lambda_mgf(0.5, 2.0) == pytest.approx(math.log(0.5), abs=1e-15)
    h = 1e-5
    assert (lambda_mgf(0.5, h) - lambda_mgf(0.5, -h)) / (2 * h) == pytest.approx(-0.5, abs=1e-8)


@pytest.mark.parametrize("a", [0.1, 0.3, 0.5, 0.7, 0.9])
@pytest.mark.parametrize("xi", [-0.9, -0.5, 0.7, 2.0, 6.0])
def test_lambda_matches_quadrature(a, xi):
    assert lambda_mgf(a, xi) == pytest.approx(lambda_by_quadrature(a, xi), abs=1e-10)


@pytest.mark.parametrize("a", [0.2, 0.8])
@pytest.mark.parametrize("xi", [-5.0, -2.0 - 1e-9, -2.0, -2.0 + 1e-9, -1.5])
def test_lambda_below_minus_one_off_half(a, xi):
    # the xi = -2 singularity of the closed form is removable
    assert lambda_mgf(a, xi) == pytest.approx(lambda_by_quadrature(a, xi), abs=1e-10)


def test_domain_at_half():
    for xi in (-1.0, -1.5, -3.0):
        with pytest.raises(DomainError):
            lambda_mgf(0.5, xi)
    with pytest.raises(DomainError):
        lambda_mgf(0.3, math.nan)
    assert RateFunction(0.5).xi_min == -1.0
    assert RateFunction(0.3).xi_min == -math.inf


@pytest.mark.parametrize("a", [0.15, 0.5, 0.85])
def test_lambda_convex_and_consistent(a):
    lo = -0.95 if a == 0.5 else -6.0
    xs = np.linspace(lo, 8.0, 301)
    lam = np.array([lambda_mgf(a, x) for x in xs])
    assert np.all(np.diff(lam, 2) >= -1e-9)
    h = 1e-6
    for x in xs[1:-1:25]:
        fd = (lambda_mgf(a, x + h) - lambda_mgf(a, x - h)) / (2 * h)
        assert lambda_prime(a, x) == pytest.approx(fd, abs=1e-7)
    assert lambda_prime(a, 0.0) == pytest.approx(log_theta_closed(a), abs=1e-8)


def test_rate_function_at_half():
    assert rate_function(0.5, -1.0) == pytest.approx(1 - math.log(2), abs=1e-8)
    assert rate_function(0.5, -0.5) <= 1e-8
    for x in (-0.95, -0.8, -0.3, -0.1, -0.01):
        assert rate_function(0.5, x) == pytest.approx(-2 * x - 1 - math.log(-2 * x), abs=1e-8)


@pytest.mark.parametrize("a", [0.2, 0.5, 0.7])
def test_rate_function_against_grid_search(a):
    lo = -1.0 + 1e-9 if a == 0.5 else -40.0
    xi = np.linspace(lo, 40.0, 200001)
    lam = np.array([lambda_mgf(a, v) for v in xi[::50]])
    xi = xi[::50]
    lt = log_theta_closed(a)
    for x in (lt - 0.3, lt - 0.1, lt + 0.1, lt + 0.3):
        if not slope_range(a)[0] < x < 0:
            continue
        brute = np.max(x * xi - lam)
        assert rate_function(a, x) == pytest.approx(brute, abs=1e-4)
        assert rate_function(a, x) >= brute - 1e-12


@pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
def test_rate_function_shape(a):
    lt = log_theta_closed(a)
    assert rate_function(a, lt) <= 1e-8
    for x in (lt - 0.2, lt + 0.2):
        assert rate_function(a, x) > 0
    # not symmetric about log theta
    assert rate_function(a, lt - 0.2) != pytest.approx(rate_function(a, lt + 0.2), rel=1e-3)


@pytest.mark.parametrize("a", [0.2, 0.5, 0.8])
def test_legendre_duality(a):
    lt = log_theta_closed(a)
    h = 1e-6
    for x in (lt - 0.25, lt - 0.05, lt + 0.05, lt + 0.2):
        xs = legendre_point(a, x)
        fd = (lambda_mgf(a, xs + h) - lambda_mgf(a, xs - h)) / (2 * h)
        assert fd == pytest.approx(x, abs=1e-8)
        assert rate_function(a, x) == pytest.approx(x * xs - lambda_mgf(a, xs), abs=1e-12)


def test_rate_function_out_of_range():
    with pytest.raises(OutOfRange):
        rate_function(0.5, 0.1)
    with pytest.raises(OutOfRange):
        rate_function(0.5, -1.01)
    with pytest.raises(OutOfRange):
        rate_function(0.3, math.log(0.4) - 0.01)
    assert rate_function(0.3, 0.0) == math.inf
    assert rate_function(0.3, math.log(0.4)) == math.inf
    assert RateFunction(0.5)(3.0) == math.inf


@given(ratios, st.floats(0.001, 0.999))
def test_rate_function_nonnegative(a, frac):
    lo, hi = slope_range(a)
    x = lo + frac * (hi - lo)
    assert rate_function(a, x) >= 0
