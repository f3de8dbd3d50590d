import json
import math

import pytest

from ksstokes import cli
from ksstokes.config import RunConfig, config_from_mapping, dump_config, load_config
from ksstokes.diagnostics import read_records_csv
from ksstokes.errors import InvalidArgument
from ksstokes.galerkin import read_tensors
from ksstokes.geometry import read_field
from ksstokes.harness import (EXPERIMENTS, RunResult, config_from_result, experiment_path,
                              find_gstar, find_mass_threshold, load_result, resolve_config, run,
                              sweep_g, verdicts_monotone)

TINY = dict(nx=15, ny=15, t_end=0.02, snapshot_dt=2e-3, dt_target=1e-3)


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_configs_load():
    for name in EXPERIMENTS:
        cfg = resolve_config(name)
        assert cfg.name == name and cfg.Lx == pytest.approx(math.pi)
    with pytest.raises(InvalidArgument):
        experiment_path("E-9")


def test_config_parse_errors(tmp_path):
    with pytest.raises(InvalidArgument, match="unknown keys"):
        load_config(write(tmp_path, "gee = 3\n"))
    with pytest.raises(InvalidArgument, match="'nx'"):
        load_config(write(tmp_path, 'nx = "many"\n'))
    with pytest.raises(InvalidArgument, match="line"):
        load_config(write(tmp_path, "g = = 3\n"))
    with pytest.raises(InvalidArgument, match="tables"):
        load_config(write(tmp_path, "[grid]\nnx = 3\n"))
    with pytest.raises(InvalidArgument, match="no such"):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(InvalidArgument):
        load_config(write(tmp_path, "g = -1.0\n"))
    with pytest.raises(InvalidArgument):
        load_config(write(tmp_path, 'backend = "spectral"\n'))


def test_config_overrides_and_dump(tmp_path):
    p = write(tmp_path, 'Lx = "pi"\ng = 2.0\nnx = 31\n')
    cfg = load_config(p, {"g": 5.0, "mass": None})
    assert cfg.Lx == math.pi and cfg.g == 5.0 and cfg.nx == 31 and cfg.mass == 1.0
    again = load_config(write(tmp_path, dump_config(cfg), "d.toml"))
    assert again == cfg
    assert RunConfig().eps == pytest.approx(0.005)
    assert RunConfig(eps_quench=0.1).eps == 0.1


def test_zero_data_quenches_trivially(tmp_path):
    r = run(RunConfig(density="zero", out=str(tmp_path / "z"), **TINY))
    assert r.verdict == "quenched" and r.quench.rate == math.inf
    assert r.final.l2_rho == 0.0


def test_run_outputs_and_json_round_trip(tmp_path):
    cfg = RunConfig(mass=2.0, g=5.0, dump_fields=True, out=str(tmp_path / "r"), **TINY)
    r = run(cfg)
    recs = read_records_csv(r.csv_path)
    assert recs[-1] == r.final and recs[0].t == 0.0
    f, t, name = read_field(tmp_path / "r" / "fields" / "rho.dump")
    assert t == pytest.approx(r.t_final) and name == "rho"
    back = load_result(tmp_path / "r" / "summary.json")
    assert back == RunResult.from_json(r.to_json())
    assert back.final == r.final and back.verdict == r.verdict
    assert config_from_result(back) == cfg


def test_galerkin_run_writes_tensors(tmp_path):
    cfg = RunConfig(backend="galerkin", n_modes=4, m_modes=3, mass=2.0, g=5.0,
                    out=str(tmp_path / "gal"), **TINY)
    run(cfg)
    T, meta = read_tensors(tmp_path / "gal" / "tensors.galten")
    assert T.C.shape == (4, 3, 4) and meta[:2] == (15, 15)


def test_numerical_abort_becomes_verdict(tmp_path):
    r = run(RunConfig(mass=50.0, ceiling=10.0, out=str(tmp_path / "b"), **TINY))
    assert r.verdict == "blowup-suspected" and r.message


def test_sweep_single_zero_reproduces_run(tmp_path):
    base = RunConfig(mass=2.0, out=str(tmp_path / "s"), **TINY)
    s = sweep_g(base, [0.0])
    direct = run(base.replace(out=str(tmp_path / "d")))
    assert (tmp_path / "s" / "g_0" / "diag.csv").read_bytes() == (tmp_path / "d" / "diag.csv").read_bytes()
    assert s.results[0].final == direct.final
    assert json.loads((tmp_path / "s" / "sweep.json").read_text())["g"] == [0.0]
    with pytest.raises(InvalidArgument):
        sweep_g(base, [])


def test_verdicts_monotone():
    assert verdicts_monotone(["blowup-suspected", "inconclusive", "quenched", "quenched"])
    assert not verdicts_monotone(["quenched", "blowup-suspected"])


def test_bisection_bracket_checks(tmp_path):
    sub = RunConfig(mass=0.5, out=str(tmp_path / "x"), **TINY)
    # subcritical data never blows up: the high end fails the precondition
    with pytest.raises(InvalidArgument, match="high end"):
        find_mass_threshold(sub, 0.1, 0.5, 2)
    with pytest.raises(InvalidArgument):
        find_mass_threshold(sub, 1.0, 0.5, 2)
    quench = RunConfig(density="zero", out=str(tmp_path / "y"), **TINY)
    # zero data quenches at every g, so the low end already shows the high-side verdict
    with pytest.raises(InvalidArgument, match="low end"):
        find_gstar(quench, 0.0, 10.0, 1)


def test_bisection_iters_zero_returns_input(tmp_path):
    base = RunConfig(mass=0.5, ceiling=5.0, out=str(tmp_path / "m"), **TINY)
    # with a tight ceiling larger masses trip the blow-up verdict right away
    assert find_mass_threshold(base, 0.01, 50.0, 0) == (0.01, 50.0)
    lo, hi = find_mass_threshold(base, 0.01, 50.0, 3)
    assert 0.01 <= lo < hi <= 50.0 and hi / lo == pytest.approx((50.0 / 0.01) ** (1 / 8))


def test_cli_run_and_errors(tmp_path, capsys):
    cfg = write(tmp_path, 'name = "t"\nmass = 2.0\ng = 5.0\n')
    out = tmp_path / "cli"
    code = cli.main(["run", str(cfg), "--grid", "16", "--t-end", "0.01", "--snapshot-dt", "0.002",
                     "--out", str(out)])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["csv"] == str(out / "diag.csv")
    assert load_result(out / "summary.json").config["nx"] == 15
    assert cli.main(["run", str(tmp_path / "nope.toml")]) == 2
    assert "no such config" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["run", str(cfg), "--grid", "3"])


def test_cli_moser(capsys):
    assert cli.main(["moser", "--n", "1", "--d", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["product"] == 1.5


def test_cli_find_gstar_invalid_bracket(tmp_path, capsys):
    cfg = write(tmp_path, 'density = "zero"\n')
    code = cli.main(["find-gstar", str(cfg), "--grid", "16", "--t-end", "0.01", "--snapshot-dt", "0.002",
                     "--lo", "0", "--hi", "10", "--iters", "1"])
    assert code == 2 and "bracket invalid" in capsys.readouterr().err
