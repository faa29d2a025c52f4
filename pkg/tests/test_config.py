import numpy as np
import pytest

from critnls.config import (
    DEFAULTS,
    ConfigError,
    InitialFamily,
    build_initial,
    load_config,
    parse_bool,
    parse_complex,
)
from critnls.grid import Field, Frame, GridSpec
from critnls.norms import inf_weighted
from critnls.snapshots import save_field


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize(
    "text,value",
    [("-1j", -1j), ("1-1j", 1 - 1j), ("1-i", 1 - 1j), ("-i", -1j), ("i", 1j), ("0.5 - 2i", 0.5 - 2j), ("1", 1)],
)
def test_parse_complex(text, value):
    assert parse_complex(text) == value


def test_parse_complex_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_complex("one")


def test_parse_bool():
    assert parse_bool("Yes") and not parse_bool("off")
    with pytest.raises(ConfigError):
        parse_bool("maybe")


def test_defaults_resolve_for_each_dimension(tmp_path):
    for N, M, k, m, n in ((1, 1024, 1, 2, 2), (2, 256, 2, 3, 3), (3, 64, 2, 3, 3)):
        cfg = load_config(write(tmp_path, f"physics.dimension = {N}\n"))
        assert cfg.grid.points == M
        assert (cfg.indices.k, cfg.indices.m, cfg.indices.n) == (k, m, n)
        assert cfg.decay == n
        assert cfg.params.alpha == pytest.approx(2.0 / N)


def test_file_values_override_and_comments(tmp_path):
    cfg = load_config(write(tmp_path, "physics.lambda = 1 - i   # mixed\nphysics.b = 7\ngrid.points = 512\n"))
    assert cfg.params.lam == 1 - 1j
    assert cfg.params.b == 7.0
    assert cfg.grid.points == 512
    res = cfg.resolved()
    assert res["physics.b"] == "7.0" and res["grid.points"] == "512"
    assert set(res) == set(DEFAULTS)


def test_unknown_key_is_an_error(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write(tmp_path, "physics.bb = 3\n"))


@pytest.mark.parametrize(
    "line",
    ["physics.lambda = 1j", "schedule.eps_end = 0", "norms.K = -1", "norms.method = magic", "initial.family = NOPE"],
)
def test_invalid_values(tmp_path, line):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, line + "\n"))


def test_with_b_changes_only_b(default_config):
    other = default_config.with_b(5)
    assert other.params.b == 5.0
    assert other.grid == default_config.grid
    assert default_config.params.b == 20.0


def test_default_initial_is_tapered_tail(default_config):
    phi0 = build_initial(default_config)
    x = phi0.grid.axis
    centre = np.abs(x) < 30
    np.testing.assert_allclose(phi0.values[centre], 1.0 / (1.0 + x[centre] ** 2), rtol=1e-14)
    assert np.abs(phi0.values[-1]) < 1e-12
    assert inf_weighted(phi0, 2, 0.9) == pytest.approx(1.0, rel=1e-12)


def test_gaussian_perturbation(tmp_path):
    cfg = load_config(write(tmp_path, "initial.family = ALG_TAIL_PLUS_GAUSSIAN\ninitial.eps = 0.5\n"))
    phi0 = build_initial(cfg)
    assert phi0.values[512] == pytest.approx(1.25)
    big = load_config(write(tmp_path, "initial.family = ALG_TAIL_PLUS_GAUSSIAN\ninitial.gaussian_amplitude = 0.9\n"))
    with pytest.raises(ConfigError, match="perturbation too large"):
        build_initial(big)


def test_custom_file_roundtrip_and_grid_mismatch(tmp_path, default_config):
    phi0 = build_initial(default_config)
    save_field(phi0, tmp_path / "phi")
    cfg = load_config(write(tmp_path, f"initial.family = CUSTOM_FILE\ninitial.file = {tmp_path / 'phi'}\n"))
    assert cfg.family is InitialFamily.CUSTOM_FILE
    np.testing.assert_array_equal(build_initial(cfg).values, phi0.values)
    small = GridSpec(1, 40.0, 256)
    save_field(Field(small, np.ones(small.shape, complex), Frame.V, 0.0), tmp_path / "other")
    bad = load_config(write(tmp_path, f"initial.family = CUSTOM_FILE\ninitial.file = {tmp_path / 'other'}\n"))
    with pytest.raises(ConfigError, match="does not match"):
        build_initial(bad)


def test_vanishing_datum_is_rejected(tmp_path):
    cfg = load_config(write(tmp_path, "initial.c = 0\n"))
    with pytest.raises(ConfigError, match="weighted minimum"):
        build_initial(cfg)
