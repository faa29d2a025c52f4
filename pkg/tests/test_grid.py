import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critnls.grid import (
    DerivativeOrderError,
    Field,
    FieldError,
    Frame,
    GridSpec,
    bracket_power,
    fd_derivative,
    fourier_l2_norm,
    free_propagate,
    laplacian,
    multi_indices,
    relative_l2,
    resample,
    smooth_taper,
    spectral_derivative,
    weight_field,
)
from critnls.oracles import gaussian_free_solution


def test_grid_geometry(grid1):
    assert grid1.spacing * grid1.points == pytest.approx(2 * grid1.half_width, rel=1e-15)
    k = grid1.wavenumbers
    assert k.size == grid1.points
    assert np.allclose(k[1 : grid1.points // 2], -k[:grid1.points // 2 : -1])
    assert k[1] == pytest.approx(np.pi / grid1.half_width)


@pytest.mark.parametrize("kw", [dict(dimension=4, half_width=1.0, points=8), dict(dimension=1, half_width=-1.0, points=8), dict(dimension=1, half_width=1.0, points=7)])
def test_grid_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def test_field_validation_names_index():
    g = GridSpec(1, 1.0, 8)
    vals = np.zeros(8, complex)
    vals[3] = np.nan
    with pytest.raises(FieldError, match=r"\(3,\)"):
        Field(g, vals)
    with pytest.raises(FieldError):
        Field(g, np.zeros(7))


def test_field_is_immutable_copy():
    g = GridSpec(1, 1.0, 8)
    src = np.ones(8, complex)
    f = Field(g, src)
    src[0] = 5
    assert f.values[0] == 1
    with pytest.raises(ValueError):
        f.values[0] = 2


def test_free_propagate_trivial_cases(grid1):
    f = gaussian_free_solution(0.0, grid1)
    same = free_propagate(f, 0.0)
    assert np.array_equal(same.values, f.values)
    zero = free_propagate(f.with_values(np.zeros(grid1.shape, complex)), 0.3)
    assert not np.any(zero.values)
    assert free_propagate(f, 0.3).time == pytest.approx(0.3)


def test_free_propagate_gaussian(grid1):
    out = free_propagate(gaussian_free_solution(0.0, grid1), 0.5)
    assert relative_l2(out.values, gaussian_free_solution(0.5, grid1).values) < 1e-8
    assert np.abs(out.values).max() == pytest.approx(5 ** -0.25, abs=1e-8)


def test_free_propagate_rejects_nonfinite(grid1):
    f = gaussian_free_solution(0.0, grid1)
    object.__setattr__(f, "values", np.full(grid1.shape, np.inf))
    with pytest.raises(FieldError, match="index"):
        free_propagate(f, 0.1)


@settings(max_examples=25, deadline=None)
@given(s=st.floats(-2, 2), t=st.floats(-2, 2), seed=st.integers(0, 2**16))
def test_group_law_and_unitarity(s, t, seed):
    g = GridSpec(1, 10.0, 128)
    rng = np.random.default_rng(seed)
    f = Field(g, np.exp(-g.radius_squared()) * (rng.normal(size=128) + 1j * rng.normal(size=128)))
    two = free_propagate(free_propagate(f, s), t)
    one = free_propagate(f, s + t)
    assert relative_l2(two.values, one.values) < 1e-10
    assert abs(one.l2_norm() - f.l2_norm()) <= 1e-12 * f.l2_norm()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), dim=st.integers(1, 3))
def test_parseval(seed, dim):
    g = GridSpec(dim, 5.0, 16)
    rng = np.random.default_rng(seed)
    f = Field(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    assert fourier_l2_norm(f) == pytest.approx(f.l2_norm(), rel=1e-12)


def test_spectral_derivative_examples(grid1):
    k1 = grid1.wavenumbers[7]
    x = grid1.axis
    f = Field(grid1, np.sin(k1 * x))
    d2 = spectral_derivative(f, (2,))
    assert np.allclose(d2.values, -k1**2 * np.sin(k1 * x), atol=1e-10)
    const = Field(grid1, np.full(grid1.shape, 3.0))
    for order in (1, 2, 3, 4):
        assert np.abs(spectral_derivative(const, (order,)).values).max() < 1e-12
    gauss = Field(grid1, np.exp(-x**2))
    d1 = spectral_derivative(gauss, (1,))
    assert np.abs(d1.values - (-2 * x * np.exp(-x**2))).max() < 1e-12


def test_derivative_order_cap(grid1):
    f = Field(grid1, np.exp(-grid1.axis**2))
    with pytest.raises(DerivativeOrderError):
        spectral_derivative(f, (5,))
    assert spectral_derivative(f, (5,), max_order=9).values.shape == grid1.shape


def test_laplacian_is_trace_of_second_derivatives():
    g = GridSpec(2, 6.0, 64)
    f = Field(g, np.exp(-g.radius_squared()) + 0j)
    trace = spectral_derivative(f, (2, 0)).values + spectral_derivative(f, (0, 2)).values
    assert np.allclose(laplacian(f).values, trace, atol=1e-12)


def test_derivative_commutes_with_propagation(grid1):
    f = Field(grid1, np.exp(-grid1.axis**2) * (1 + 0.5j * grid1.axis))
    a = spectral_derivative(free_propagate(f, 0.7), (3,))
    b = free_propagate(spectral_derivative(f, (3,)), 0.7)
    assert relative_l2(a.values, b.values) < 1e-10


def test_fd_matches_spectral_on_smooth_data():
    g = GridSpec(1, 10.0, 1024)
    f = Field(g, np.exp(-g.axis**2))
    for order in (1, 2, 3, 4):
        sp = spectral_derivative(f, (order,)).values
        fd = fd_derivative(f, (order,)).values
        assert np.abs(sp - fd).max() < 1e-6 * np.abs(sp).max()


def test_multi_indices_counts():
    assert len(multi_indices(2, 3)) == 4
    assert len(multi_indices(3, 2)) == 6
    assert all(sum(b) == 2 for b in multi_indices(3, 2))


def test_weight_field_examples():
    g = GridSpec(3, 4.0, 8)
    w = weight_field(g, 2.0)
    r2 = g.radius_squared()
    assert np.allclose(w.values, 1 + r2)
    origin = tuple(i for i in np.argwhere(r2 == 0)[0])
    assert w.values[origin] == 1.0
    one = int(np.argmin(np.abs(g.axis - 1.0)))
    assert r2[one, one, one] == 3.0
    assert w.values[one, one, one] == pytest.approx(4.0)
    assert np.all(weight_field(g, -2).values > 0)


def test_taper_shape(grid1):
    t = smooth_taper(grid1, 0.1)
    inner = grid1.window(0.9)
    assert np.all(t[inner] == 1.0)
    assert t.min() >= 0.0 and t.max() <= 1.0
    assert t[0] == 0.0


def test_resample_paths_agree(grid1):
    f = np.exp(-grid1.axis**2 / 4) * np.exp(0.5j * grid1.axis)
    exact = lambda x: np.exp(-x**2 / 4) * np.exp(0.5j * x)
    aligned = grid1.axis[::2]
    assert np.array_equal(resample(f, grid1, aligned), f[::2])
    half = np.arange(-20.0, 20.0, grid1.spacing / 3)
    assert np.abs(resample(f, grid1, half) - exact(half)).max() < 1e-10
    odd = np.array([0.123, -3.7, 11.1])
    assert np.abs(resample(f, grid1, odd) - exact(odd)).max() < 1e-10
    outside = resample(f, grid1, np.array([50.0, -60.0]))
    assert not np.any(outside)


def test_bracket_power_matches_weight_field(grid1):
    assert np.allclose(bracket_power(grid1, -3), weight_field(grid1, -3, Frame.U).values)
