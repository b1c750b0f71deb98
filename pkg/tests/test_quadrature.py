import math

import numpy as np
import pytest

from friction_walk.quadrature import gauss_legendre


def test_polynomial_exact():
    v, err = gauss_legendre(lambda x: 3 * x**5 - x**2 + 1, -1.0, 2.0)
    assert v == pytest.approx(31.5, abs=1e-13)
    assert err < 1e-12


def test_endpoint_singularities():
    assert gauss_legendre(np.sqrt, 0.0, 1.0, tol=1e-12)[0] == pytest.approx(2 / 3, abs=1e-11)
    assert gauss_legendre(np.log, 0.0, 1.0, tol=1e-12)[0] == pytest.approx(-1.0, abs=1e-11)
    assert gauss_legendre(lambda x: x**-0.5, 0.0, 1.0, tol=1e-10)[0] == pytest.approx(2.0, abs=1e-8)


def test_oscillatory():
    v, _ = gauss_legendre(lambda x: np.sin(20 * x), 0.0, math.pi / 2)
    assert v == pytest.approx((1 - math.cos(10 * math.pi)) / 20, abs=1e-12)


def test_degenerate_and_bad_limits():
    assert gauss_legendre(np.exp, 1.0, 1.0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        gauss_legendre(np.exp, 0.0, math.inf)
