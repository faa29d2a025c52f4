import numpy as np
import pytest

from critnls.dynamics import PhysParams
from critnls.grid import Field, Frame, GridSpec, free_propagate, relative_l2
from critnls.oracles import gaussian_free_solution
from critnls.pseudoconformal import (
    DilationWarning,
    Direction,
    comoving_grid,
    map_time,
    physical_grid_for,
    quadratic_phase,
    scattering_state_u_plus,
    u_from_v,
    v_from_u,
)

P = PhysParams(1, -1j, 20.0)


def test_map_time_examples():
    assert map_time(0.0, Direction.TO_V, 1.0) == 0.0
    assert map_time(1.0, "to_v", 1.0) == 0.5
    assert map_time(0.75, "to_u", 1.0) == 3.0
    for t in (0.1, 1.0, 10.0):
        back = map_time(map_time(t, "to_v", 1.0), "to_u", 1.0)
        assert abs(back - t) <= 1e-14 * t
    for tau in np.linspace(0.0, 0.999999, 50):
        back = map_time(map_time(tau, "to_u", 1.0), "to_v", 1.0)
        assert abs(back - tau) <= 1e-14 * max(tau, 1e-300)
    with pytest.raises(ValueError):
        map_time(1.0, "to_u", 1.0)
    with pytest.raises(ValueError):
        map_time(-1.0, "to_v", 1.0)


def test_large_time_roundtrip_limited_by_tau_resolution():
    # tau is stored with one rounding, which t = tau / (1 - b tau) amplifies
    # by (1 + b t).
    for b in (1.0, 20.0):
        t = 1000.0
        back = map_time(map_time(t, "to_v", b), "to_u", b)
        assert abs(back - t) / t <= 2.0 ** -52 * (1.0 + b * t)


def test_map_time_monotone_onto():
    ts = np.linspace(0, 1e6, 1001)
    taus = [map_time(t, "to_v", 2.0) for t in ts]
    assert all(b > a for a, b in zip(taus, taus[1:]))
    assert taus[-1] < 0.5


def test_u_from_v_at_zero_is_chirp(phi0):
    u = u_from_v(phi0, P)
    assert u.frame is Frame.U and u.time == 0.0
    assert np.allclose(u.values, np.exp(1j * 20 * phi0.grid.radius_squared() / 4) * phi0.values)
    back = v_from_u(u, P)
    assert np.allclose(back.values, phi0.values)


@pytest.mark.parametrize("tau", [0.0, 0.01, 0.049])
def test_roundtrip_and_isometry(phi0, tau):
    v = phi0.with_values(phi0.values * (1 + 0.2j), time=tau)
    u = u_from_v(v, P)
    assert u.grid == comoving_grid(v.grid, 1 / (1 - 20 * tau))
    assert relative_l2(v_from_u(u, P).values, v.values) <= 1e-10
    assert abs(u.l2_norm() - v.l2_norm()) <= 1e-10 * v.l2_norm()


def test_zero_field_maps_to_zero(grid1):
    z = Field(grid1, np.zeros(grid1.shape, complex), Frame.U, 0.3)
    assert not np.any(v_from_u(z, P).values)


def test_explicit_grid_interpolates_and_warns(phi0):
    v = phi0.with_values(phi0.values, time=0.025)
    s = 2.0
    target = GridSpec(1, 40.0 * s, 4096)
    u = u_from_v(v, P, grid=target)
    ref = u_from_v(v, P)
    assert u.grid == target
    # every fourth target sample is a comoving sample
    assert np.allclose(u.values[::4], ref.values, atol=1e-12)
    with pytest.warns(DilationWarning):
        u_from_v(v, P, grid=GridSpec(1, 20.0, 1024))


def test_frame_checks(phi0):
    with pytest.raises(ValueError):
        v_from_u(phi0, P)
    with pytest.raises(ValueError):
        u_from_v(phi0.with_values(phi0.values, frame=Frame.U), P)


def test_scattering_state(grid1):
    w0 = gaussian_free_solution(0.0, grid1).with_values(gaussian_free_solution(0.0, grid1).values, frame=Frame.V)
    up = scattering_state_u_plus(w0, P)
    assert abs(up.l2_norm() - w0.l2_norm()) <= 1e-12 * w0.l2_norm()
    expected = quadratic_phase(grid1, 1 / 20) * gaussian_free_solution(-1 / 20, grid1).values
    assert relative_l2(up.values, expected) < 1e-10
    zero = scattering_state_u_plus(w0.with_values(np.zeros(grid1.shape, complex)), P)
    assert not np.any(zero.values)


def test_physical_grid_contains_dilated_samples(grid1):
    g, q = physical_grid_for(grid1, 20.0, 1.0)
    assert q == 12
    assert g.points % 2 == 0
    assert g.half_width >= 21 * grid1.half_width
    pos = (21 * grid1.axis + g.half_width) / g.spacing
    assert np.allclose(pos, np.rint(pos), atol=1e-6)
