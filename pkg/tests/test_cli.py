import json

import pytest

from critnls.cli import main
from critnls.config import load_config
from critnls.runner import run_simulation, sweep_b, worker_count

FAST = "grid.points = 256\nschedule.eps_end = 1e-4\nschedule.per_decade = 20\nasymptotics.fit_lo = 1e-4\n"


@pytest.fixture
def cfg_file(tmp_path):
    def make(text=""):
        p = tmp_path / "run.cfg"
        p.write_text(text)
        return p

    return make


def test_verify_passes_on_defaults(cfg_file, capsys):
    assert main(["verify", "--config", str(cfg_file())]) == 0
    out = capsys.readouterr().out.splitlines()
    assert {line.split()[1] for line in out} == {
        "linear_oracle",
        "transform_roundtrip",
        "ode_oracle",
        "integral_identity",
        "cascade",
    }


def test_run_default_passes_and_is_reproducible(cfg_file, tmp_path, capsys):
    path = cfg_file()
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert json.loads(capsys.readouterr().out) == {"pass": True, "failed": []}
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "b")]) == 0
    for name in ("verdict.json", "norms.csv", "residuals.csv", "fits.json", "profile_w0.bin", "profile_f0.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_resumed_run_matches(tmp_path):
    cfg = load_config(None)
    whole = run_simulation(cfg, tmp_path / "whole")
    ck = tmp_path / "ck"
    import critnls.runner as runner

    original = runner.CHECKPOINT_EVERY
    runner.CHECKPOINT_EVERY = 50
    try:
        first = run_simulation(cfg, tmp_path / "first", checkpoint=ck)
        second = run_simulation(cfg, tmp_path / "second", checkpoint=ck)
    finally:
        runner.CHECKPOINT_EVERY = original
    assert first["checks"] == whole["checks"] == second["checks"]
    assert (tmp_path / "whole" / "verdict.json").read_bytes() == (tmp_path / "second" / "verdict.json").read_bytes()


def test_linear_run_checks(cfg_file, tmp_path):
    path = cfg_file("physics.lambda = 0\n" + FAST)
    verdict = run_simulation(load_config(path), tmp_path)
    assert set(verdict["checks"]) == {"mass_conservation", "free_flow_consistency"}
    assert verdict["pass"]


def test_failing_run_exits_one(cfg_file, tmp_path, capsys):
    # A weak coupling constant is far below threshold.
    path = cfg_file("physics.b = 0.5\n" + FAST)
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "FAILED" in capsys.readouterr().err
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert not verdict["pass"] and verdict["failed"]


def test_bad_config_exits_two(cfg_file, capsys):
    assert main(["run", "--config", str(cfg_file("physics.nonsense = 1\n"))]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_bad_b_list_is_a_usage_error(cfg_file):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--config", str(cfg_file()), "--b", "1,x"])
    assert exc.value.code == 2


def test_sweep_table(cfg_file, tmp_path):
    cfg = load_config(cfg_file(FAST))
    table = sweep_b(cfg, [0.5, 20.0], tmp_path)
    assert [r["b"] for r in table["rows"]] == [0.5, 20.0]
    assert not table["rows"][0]["f0_pass"]
    assert table["b1_hat"] == 20.0 and table["status"] == "threshold found"
    assert (tmp_path / "sweep.csv").read_text().startswith("b,psi_max")
    assert (tmp_path / "b_20.0" / "verdict.json").exists()
    with pytest.raises(ValueError, match="sorted"):
        sweep_b(cfg, [2.0, 1.0])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CRITNLS_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("CRITNLS_WORKERS", "many")
    with pytest.raises(ValueError):
        worker_count()
