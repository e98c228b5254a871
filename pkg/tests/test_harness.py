"""Experiment driver and command line front end."""

import json

import pytest

from vnfplace import cli
from vnfplace.exact import ExactLimitError
from vnfplace.harness import (CSV_HEADER, ExperimentConfig, HarnessError,
                              emit_csv, load_topology, run_experiment)


def _small_config(**kw):
    base = dict(algorithms=["bi-lbi"], demand_counts=[5], seeds=2)
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_collects_cells():
    report = run_experiment(_small_config(algorithms=["bi-lbi", "bc"],
                                          demand_counts=[5, 10]))
    assert [(r.algorithm, r.demand_count) for r in report.rows] == \
        [("bi-lbi", 5), ("bi-lbi", 10), ("bc", 5), ("bc", 10)]
    assert len(report.runs) == 8
    for run in report.runs:
        assert run.seed in (0, 1)
        assert run.total_power_w == pytest.approx(run.network_power_w
                                                  + run.pm_power_w)
        assert 0.0 <= run.acceptance <= 1.0
        assert run.runtime_s >= 0.0
    for row in report.rows:
        assert row.seeds == 2
        for metric in ("total_power", "network_power", "pm_power",
                       "mean_delay", "acceptance", "runtime"):
            assert metric + "_mean" in row.stats
            assert metric + "_std" in row.stats
        assert 0.0 <= row.stats["acceptance_mean"] <= 100.0


def test_results_repeat_except_runtime():
    one = run_experiment(_small_config())
    two = run_experiment(_small_config())
    for a, b in zip(one.runs, two.runs):
        assert (a.algorithm, a.demand_count, a.seed) == \
            (b.algorithm, b.demand_count, b.seed)
        assert a.total_power_w == b.total_power_w
        assert a.network_power_w == b.network_power_w
        assert a.pm_power_w == b.pm_power_w
        assert a.mean_delay_ms == b.mean_delay_ms
        assert a.acceptance == b.acceptance


def test_csv_is_stable_except_runtime_columns(tmp_path):
    paths = []
    for i in range(2):
        report = run_experiment(_small_config(demand_counts=[5, 10]))
        path = tmp_path / ("out%d.csv" % i)
        emit_csv(report, str(path))
        paths.append(path)
    texts = [p.read_text().splitlines() for p in paths]
    assert texts[0][0] == CSV_HEADER
    assert len(texts[0]) == 3
    for lines in texts:
        for line in lines[1:]:
            assert len(line.split(",")) == 15
    for left, right in zip(texts[0][1:], texts[1][1:]):
        assert left.split(",")[:13] == right.split(",")[:13]


def test_lp_export_writes_model_files(tmp_path):
    out = tmp_path / "models"
    report = run_experiment(_small_config(algorithms=["lp-export"],
                                          demand_counts=[3],
                                          out=str(out)))
    assert report.rows == []
    want = [str(out / "model_c3_s0.lp"), str(out / "model_c3_s1.lp")]
    assert report.lp_files == want
    for path in want:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        assert text.startswith("Minimize")
        assert text.endswith("End\n")


def test_exact_small_refuses_long_default_chains():
    # bundled service chains are longer than the enumerator's limit, so
    # the harness hands the user to the LP export instead of grinding
    with pytest.raises(ExactLimitError, match="use export_lp"):
        run_experiment(_small_config(algorithms=["exact-small"],
                                     demand_counts=[1], seeds=1))


def test_config_validation():
    with pytest.raises(ValueError, match="unknown algorithm"):
        run_experiment(_small_config(algorithms=["magic"]))
    with pytest.raises(ValueError, match="at least one seed"):
        run_experiment(_small_config(seeds=0))
    with pytest.raises(ValueError, match="negative demand count"):
        run_experiment(_small_config(demand_counts=[-3]))


def test_load_topology_sources(tmp_path):
    assert load_topology("nobel-germany").num_nodes == 17
    text = "node 0 16\nnode 1 16\nlink 0 1 100 2ms\n"
    path = tmp_path / "tiny.txt"
    path.write_text(text)
    graph = load_topology(str(path))
    assert graph.num_nodes == 2
    assert graph.link(0, 1).delay == 2.0
    with pytest.raises(OSError):
        load_topology(str(tmp_path / "missing.txt"))


def test_gate_rejects_tampered_results(monkeypatch):
    from vnfplace import harness as mod

    real = mod.place_all

    def crooked(*args, **kw):
        sol = real(*args, **kw)
        sol.total_power_w += 7.0
        return sol

    monkeypatch.setattr(mod, "place_all", crooked)
    with pytest.raises(HarnessError, match="reported power"):
        run_experiment(_small_config(seeds=1))


# -- command line ---------------------------------------------------------


def test_cli_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "report.csv"
    rc = cli.main(["run", "--algo", "bi-lbi", "--demands", "5",
                   "--seeds", "1", "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "bi-lbi" in captured
    assert "wrote %s" % out in captured
    assert out.read_text().splitlines()[0] == CSV_HEADER


def test_cli_lp_export(tmp_path, capsys):
    out = tmp_path / "models"
    rc = cli.main(["run", "--algo", "lp-export", "--demands", "2",
                   "--seeds", "1", "--out", str(out)])
    assert rc == 0
    assert "model_c2_s0.lp" in capsys.readouterr().out
    assert (out / "model_c2_s0.lp").exists()


def test_cli_bad_inputs_exit_two(tmp_path, capsys):
    assert cli.main(["run", "--algo", "magic", "--seeds", "1"]) == 2
    assert cli.main(["run", "--topology", str(tmp_path / "nope.txt"),
                     "--seeds", "1"]) == 2
    assert cli.main(["run", "--demands", "abc", "--seeds", "1"]) == 2
    assert cli.main(["run", "--algo", "exact-small", "--demands", "1",
                     "--seeds", "1"]) == 2
    assert cli.main(["run", "--seeds", "0"]) == 2
    capsys.readouterr()


def test_cli_config_file_supplies_defaults(tmp_path, capsys):
    conf = tmp_path / "exp.json"
    conf.write_text(json.dumps({"algo": "bc", "demands": "4", "seeds": 1}))
    assert cli.main(["run", "--config", str(conf)]) == 0
    assert "bc" in capsys.readouterr().out
    # explicit flags beat the config file
    assert cli.main(["run", "--config", str(conf),
                     "--algo", "bi-lbi"]) == 0
    out = capsys.readouterr().out
    assert "bi-lbi" in out

    conf.write_text(json.dumps({"algo": "bc", "surprise": 1}))
    assert cli.main(["run", "--config", str(conf)]) == 2
    assert "unknown config keys: surprise" in capsys.readouterr().err

    conf.write_text("{not json")
    assert cli.main(["run", "--config", str(conf)]) == 2
    assert "bad config file" in capsys.readouterr().err

    assert cli.main(["run", "--config", str(tmp_path / "ghost.json")]) == 2
    capsys.readouterr()


def test_cli_maps_harness_error_to_one(monkeypatch, capsys):
    def explode(config):
        raise HarnessError("synthetic")

    monkeypatch.setattr(cli, "run_experiment", explode)
    assert cli.main(["run", "--seeds", "1"]) == 1
    assert "run failed: synthetic" in capsys.readouterr().err


def test_cli_power_flags_reach_the_model(tmp_path, capsys):
    out = tmp_path / "a.csv"
    rc = cli.main(["run", "--algo", "bi-lbi", "--demands", "5", "--seeds", "1",
                   "--switch-power", "260", "--out", str(out)])
    assert rc == 0
    doubled = out.read_text().splitlines()[1].split(",")
    rc = cli.main(["run", "--algo", "bi-lbi", "--demands", "5", "--seeds", "1",
                   "--out", str(tmp_path / "b.csv")])
    assert rc == 0
    base = (tmp_path / "b.csv").read_text().splitlines()[1].split(",")
    capsys.readouterr()
    # same placements, each lit switch now costs 130 W more
    switches = (float(doubled[5]) - float(base[5])) / 130.0
    assert switches == pytest.approx(round(switches))
    assert switches > 0
