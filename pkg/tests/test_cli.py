import pytest

from vodsim import cli, experiment
from vodsim.experiment import ScenarioError, expand, parse_scenario, parse_seeds, run_experiment
from vodsim.metrics import parse_csv
from vodsim.simcore import InvariantViolation, RunConfig

SMALL = """\
# tiny scenario for fast tests
[topology]
j_lpsgs = 2
ps_per_lpsg = 2
clients_per_ps = 5
[workload]
max_arrivals = 40
duration_min = 200
"""


@pytest.fixture
def small(tmp_path):
    f = tmp_path / "small.cfg"
    f.write_text(SMALL)
    return f


def test_empty_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    sc = parse_scenario(f)
    c = sc.config
    assert (c.j_lpsgs, c.ps_per_lpsg, c.clients_per_ps, c.rate_per_hour) == (6, 6, 25, 44)
    assert c.c_mms_min * 0.4 == c.tr_capacity_min and c.c_mms_min * 0.2 == c.ps_capacity_min
    assert sc.config == RunConfig()


def test_chaining_off():
    sc = parse_scenario(["[chaining]", "chaining = off"])
    assert sc.config.chaining is False


def test_sweep_expansion_shares_seed():
    sc = parse_scenario(["[sweep]", "sweep = x_scale: 0.5,0.1,0.3,0.2,0.4"])
    runs = expand(sc)
    assert len(runs) == 5
    assert {r.seed for r in runs} == {7}
    assert [r.config.x_scale for r in runs] == [0.1, 0.2, 0.3, 0.4, 0.5]


def test_cache_ratio_and_capacity_keys():
    sc = parse_scenario(["cache_ratio = 10:5:1", "cap_mms_tr = 7", "delay_tr_tr = 250"])
    assert sc.config.tr_ratio == 0.5 and sc.config.ps_ratio == 0.1
    assert sc.config.capacities["MMS-TR"] == 7
    assert sc.config.delays_ms["TR-TR"] == 250


@pytest.mark.parametrize("lines,where", [
    (["seed = 1", "bogus = 3"], "line 2"),
    (["[workload]", "rate_per_hour = fast"], "line 2"),
    (["[topology]", "seed = 3"], "line 2"),
    (["[nope]"], "line 1"),
    (["just words"], "line 1"),
    (["lac_d = 2.5"], "line 1"),
])
def test_errors_name_the_line(lines, where):
    with pytest.raises(ScenarioError, match=where):
        parse_scenario(lines)


def test_constraint_violation_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario(["x_min = 0"])
    with pytest.raises(ScenarioError):
        parse_scenario(["sweep = lac_d: 1,0"])


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4,9") == [4, 9]
    with pytest.raises(ValueError):
        parse_seeds("5..2")


def test_overrides_beat_file(small):
    sc = parse_scenario(small, {"j_lpsgs": 3, "seeds": [1, 2]})
    assert sc.config.j_lpsgs == 3 and sc.seed_list() == [1, 2]


def test_cli_success_and_outputs(small, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["--scenario", str(small), "--seeds", "1..2", "--ab-chaining",
                     "--baseline", "no-proxy", "--trace", "--out", str(out)])
    assert code == 0
    rows = parse_csv((out / "results.csv").read_text())
    assert [k for k, _, _ in rows] == ["default;chaining=on"] * 2 + ["default;chaining=off"] * 2
    assert all(r.server_load_reduction is not None for _, _, r in rows)
    assert "PC+Chaining" in (out / "summary.txt").read_text()
    assert len(list(out.glob("trace_*.csv"))) == 4
    assert "Served from own LPSG" in capsys.readouterr().out


def test_cli_seed_twice_identical(small, tmp_path):
    for d in ("a", "b"):
        assert cli.main(["--scenario", str(small), "--seed", "7", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/results.csv").read_bytes() == (tmp_path / "b/results.csv").read_bytes()


def test_cli_flag_overrides_file(small, tmp_path):
    small.write_text(SMALL + "[chaining]\nchaining = on\n")
    cli.main(["--scenario", str(small), "--chaining", "off", "--out", str(tmp_path)])
    (_, _, rep), = parse_csv((tmp_path / "results.csv").read_text())
    assert rep.source_breakdown["join_chain"] == 0


def test_env_out_dir(small, tmp_path, monkeypatch):
    monkeypatch.setenv("VODSIM_OUT", str(tmp_path / "env"))
    assert cli.main(["--scenario", str(small)]) == 0
    assert (tmp_path / "env" / "results.csv").exists()


def test_cli_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("speed = 3\n")
    assert cli.main(["--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert "line 1" in capsys.readouterr().err
    assert cli.main(["--scenario", str(tmp_path / "missing.cfg")]) == 1


def test_invariant_violation_exit_and_no_partial_files(small, tmp_path, monkeypatch):
    real = experiment.run
    calls = []

    def flaky(cfg):
        calls.append(cfg)
        if len(calls) == 2:
            raise InvariantViolation("boom")
        return real(cfg)

    monkeypatch.setattr(experiment, "run", flaky)
    out = tmp_path / "out"
    assert cli.main(["--scenario", str(small), "--seeds", "0..2", "--out", str(out)]) == 2
    assert not (out / "results.csv").exists() and not list(out.glob("*"))


def test_api_matches_cli(small, tmp_path):
    cli.main(["--scenario", str(small), "--seed", "4", "--out", str(tmp_path / "cli")])
    sc = parse_scenario(small, {"seeds": [4], "seed": 4})
    run_experiment(sc, tmp_path / "api")
    assert (tmp_path / "cli/results.csv").read_text() == (tmp_path / "api/results.csv").read_text()


def test_parallel_jobs_same_output(small, tmp_path):
    sc = parse_scenario(small, {"seeds": [0, 1, 2]})
    run_experiment(sc, tmp_path / "one", jobs=1)
    run_experiment(sc, tmp_path / "two", jobs=2)
    assert (tmp_path / "one/results.csv").read_text() == (tmp_path / "two/results.csv").read_text()


@pytest.mark.parametrize("name", ["default.cfg", "prefix_sweep.cfg"])
def test_shipped_scenarios_parse(name):
    from pathlib import Path
    sc = parse_scenario(Path(__file__).parent.parent / "scenarios" / name)
    assert sc.seed_list() and sc.ab_chaining
