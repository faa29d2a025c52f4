import math

import numpy as np
import pytest

from critnls.grid import GridSpec
from critnls.oracles import (
    check_integral_identity,
    gaussian_free_solution,
    gaussian_l2_norm,
    gaussian_sup_norm,
    ode_closed_form,
    ode_limit,
)


def test_ode_example():
    z = ode_closed_form(1 - math.exp(-1), 1.0, -1j, 1.0, 2.0)
    assert abs(z) == pytest.approx(3 ** -0.5, rel=1e-14)
    assert abs(np.angle(z)) < 1e-15


def test_ode_conservative_modulus():
    for t in (0.1, 0.5, 0.99):
        assert abs(ode_closed_form(t, 0.3 + 0.4j, 2.0, 1.0, 1.0)) == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("lam", [-1j, 1 - 1j, 3.0, -2 - 0.5j])
def test_ode_residual(lam):
    b, alpha, z0 = 2.0, 2.0, 0.8 + 0.2j
    for t in (0.05, 0.2, 0.4):
        h = 1e-6
        dz = (ode_closed_form(t + h, z0, lam, b, alpha) - ode_closed_form(t - h, z0, lam, b, alpha)) / (2 * h)
        z = ode_closed_form(t, z0, lam, b, alpha)
        res = abs(1j * dz - lam / (1 - b * t) * abs(z) ** alpha * z)
        assert res <= 1e-8


def test_ode_limit_independent_of_start():
    eps = 1e-12
    t = (1 - eps) / 1.0
    vals = [(-math.log(eps)) ** 0.5 * abs(ode_closed_form(t, z0, -1j, 1.0, 2.0)) for z0 in (0.5, 2, 10)]
    assert max(vals) - min(vals) < 0.1
    assert ode_limit(-1j, 1.0, 2.0) == pytest.approx(0.5**0.5)


def test_ode_rejections():
    with pytest.raises(ValueError):
        ode_closed_form(1.0, 1.0, -1j, 1.0, 2.0)
    with pytest.raises(ValueError):
        ode_closed_form(0.1, 0.0, -1j, 1.0, 2.0)


def test_gaussian_examples():
    g = GridSpec(1, 40.0, 1024)
    assert np.abs(gaussian_free_solution(0.0, g).values - np.exp(-g.radius_squared())).max() <= 1e-15
    assert np.abs(gaussian_free_solution(0.5, g).values).max() == pytest.approx(5 ** -0.25, abs=1e-12)
    norms = [gaussian_free_solution(t, g).l2_norm() for t in (0.0, 0.5, 2.0)]
    assert max(norms) - min(norms) < 1e-14
    assert norms[0] == pytest.approx(gaussian_l2_norm(0.0, 1), rel=1e-12)
    assert gaussian_sup_norm(0.5, 1) == pytest.approx(5 ** -0.25)
    with pytest.raises(ValueError):
        gaussian_free_solution(0.0, g, a=0.0)


def test_integral_identity_examples():
    lhs, rhs = check_integral_identity(1.0, 2.0, 0.25)
    assert rhs == 0.5 and abs(lhs - rhs) <= 1e-10
    assert check_integral_identity(2.0, 1.0, 0.0) == (0.0, 0.0)
    lhs, rhs = check_integral_identity(0.5, 1.0, 0.99)
    assert rhs == pytest.approx(18.0, rel=1e-14)
    assert abs(lhs - rhs) <= 1e-8 * rhs
    with pytest.raises(ValueError):
        check_integral_identity(1.0, 1.0, 1.0)
