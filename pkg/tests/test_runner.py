import json
from dataclasses import replace

import numpy as np
import pytest

from fedthreat.runner import (
    METRIC_COLUMNS,
    ConfigError,
    ExperimentConfig,
    compare_models,
    prepare,
    run,
    run_centralized,
    sweep_dataset_size,
    sweep_nodes,
)
from fedthreat.runner.cli import main

SMALL = {
    "num_clients": 3,
    "rounds": 3,
    "batch_size": 16,
    "data": {"m": 3, "dim_f": 4, "n_samples": 600},
}


def small(**changes):
    return replace(ExperimentConfig.from_dict(SMALL), **changes)


def csv_bytes(path):
    return {name: (path / name).read_bytes() for name in ("metrics.csv", "summary.csv")}


def write_config(path, raw):
    path.write_text(json.dumps(raw))
    return str(path)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.loads("{}")
        assert (cfg.num_clients, cfg.rounds, cfg.data.train_fraction) == (10, 50, 0.7)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key.*colour"):
            ExperimentConfig.loads('{"colour": 1}')
        with pytest.raises(ConfigError, match="dp: unknown key.*eps"):
            ExperimentConfig.loads('{"dp": {"eps": 1}}')

    def test_json_syntax_reports_line(self):
        with pytest.raises(ConfigError, match="line 3 column"):
            ExperimentConfig.loads('{\n  "rounds": 2,\n  "seed": ,\n}')

    def test_type_errors_name_field(self):
        with pytest.raises(ConfigError, match=r"config\.rounds: expected int"):
            ExperimentConfig.loads('{"rounds": "ten"}')
        with pytest.raises(ConfigError, match=r"config\.num_clients"):
            ExperimentConfig.loads('{"num_clients": true}')

    def test_value_errors_name_field(self):
        with pytest.raises(ConfigError, match="threshold"):
            ExperimentConfig.loads('{"threshold": 1.0}')
        with pytest.raises(ConfigError, match="transport"):
            ExperimentConfig.loads('{"transport": "socket", "mode": "async"}')
        with pytest.raises(ConfigError, match="fusion_weights"):
            ExperimentConfig.loads('{"fusion_weights": [1, 2]}')
        with pytest.raises(ConfigError, match="dp"):
            ExperimentConfig.loads('{"dp": {"sigma": -1}}')

    def test_round_trip(self):
        cfg = small(dp=replace(small().dp, sigma=0.5, enabled=True), lr_alpha0=(0.1, 0.2, 0.3))
        again = ExperimentConfig.loads(cfg.dumps())
        assert again == cfg
        resolved = cfg.resolved()
        assert ExperimentConfig.loads(resolved.dumps()) == resolved
        assert resolved.model_dim == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "nope.json")


class TestRun:
    def test_zero_rounds(self, tmp_path):
        rep = run(small(rounds=0), tmp_path)
        assert [r.round for r in rep.rows] == [0]
        np.testing.assert_array_equal(rep.theta, np.zeros(5))
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == ",".join(METRIC_COLUMNS)
        assert len(lines) == 2

    def test_row_per_round(self, tmp_path):
        rep = run(small(), tmp_path)
        assert [r.round for r in rep.rows] == [0, 1, 2, 3]
        cum = [r.train_seconds_cumulative for r in rep.rows]
        assert cum == sorted(cum)
        assert rep.n_train == 420 and rep.n_test == 180

    def test_byte_identical_replay(self, tmp_path):
        run(small(), tmp_path / "a")
        run(small(), tmp_path / "b")
        assert csv_bytes(tmp_path / "a") == csv_bytes(tmp_path / "b")

    def test_workers_and_socket_match_serial(self, tmp_path):
        run(small(), tmp_path / "serial")
        run(small(workers=3), tmp_path / "pool")
        run(small(transport="socket"), tmp_path / "socket")
        ref = csv_bytes(tmp_path / "serial")
        assert csv_bytes(tmp_path / "pool") == ref
        summary = lambda p: (p / "summary.csv").read_text().splitlines()[1].split(",")
        assert summary(tmp_path / "socket")[3:] == summary(tmp_path / "serial")[3:]
        assert (tmp_path / "socket" / "metrics.csv").read_bytes() == ref["metrics.csv"]

    def test_resolved_config_reproduces(self, tmp_path):
        run(small(seed=4), tmp_path / "first")
        again = ExperimentConfig.load(tmp_path / "first" / "resolved_config.json")
        run(again, tmp_path / "second")
        assert csv_bytes(tmp_path / "first") == csv_bytes(tmp_path / "second")

    def test_dp_columns(self, tmp_path):
        cfg = small(dp=replace(small().dp, sigma=2.0, enabled=True))
        rep = run(cfg, write=False)
        assert rep.rows[0].epsilon == 0.0
        assert rep.final.epsilon_total == pytest.approx(3 * rep.final.epsilon)
        assert rep.final.epsilon == pytest.approx(np.sqrt(2 * np.log(1.25e5)) / 2.0)

    def test_dp_off_epsilon_inf(self, tmp_path):
        run(small(), tmp_path)
        row = (tmp_path / "metrics.csv").read_text().splitlines()[-1].split(",")
        assert row[METRIC_COLUMNS.index("epsilon")] == "inf"

    def test_federation_of_one_equals_centralized(self):
        cfg = small(num_clients=1)
        fed = run(cfg, write=False)
        cen = run_centralized(cfg)
        np.testing.assert_allclose(fed.theta, cen.theta, rtol=0, atol=1e-9)
        assert fed.final.accuracy == cen.accuracy

    def test_async_mode_runs(self):
        rep = run(small(mode="async", rounds=6), write=False)
        assert sum(r.updates_applied for r in rep.rows) > 0
        assert rep.final.accuracy > 0.6


class TestSweeps:
    def test_size_validation(self):
        with pytest.raises(ValueError, match="duplicate"):
            sweep_dataset_size(small(), [600, 600], write=False)
        with pytest.raises(ValueError, match="ascending"):
            sweep_dataset_size(small(), [900, 600], write=False)

    def test_single_size_equals_run(self, tmp_path):
        sweep_dataset_size(small(), [600], out_dir=tmp_path / "sweep")
        run(small(), tmp_path / "plain")
        assert csv_bytes(tmp_path / "sweep" / "size_600" / "seed_0") == csv_bytes(tmp_path / "plain")
        lines = (tmp_path / "sweep" / "trend_size.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_nodes_share_test_set(self, tmp_path):
        reports, trend = sweep_nodes(small(), [1, 2, 3], out_dir=tmp_path)
        assert {row["n_test"] for row in trend} == {180}
        plain = run(small(num_clients=1), write=False)
        assert reports[0][0].summary() == plain.summary()
        X = [prepare(small(num_clients=n)).X_test for n in (1, 3)]
        np.testing.assert_array_equal(X[0], X[1])

    def test_compare_rows(self, tmp_path):
        rows, results = compare_models(small(), seeds=[0, 1], out_dir=tmp_path)
        assert [r["model"] for r in rows] == [
            "centralized_unimodal", "federated_unimodal", "federated_fused", "centralized_fused"]
        by = {r["model"]: r["accuracy"] for r in rows}
        assert by["federated_fused"] >= by["federated_unimodal"]
        assert (tmp_path / "compare.csv").exists()
        assert len((tmp_path / "compare_by_seed.csv").read_text().splitlines()) == 9


class TestCli:
    def test_run_ok(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", SMALL)
        assert main(["run", cfg, "--out-dir", str(tmp_path / "out"), "--seed", "2"]) == 0
        assert (tmp_path / "out" / "metrics.csv").exists()
        assert "final accuracy" in capsys.readouterr().out

    def test_socket_mode_flag(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", SMALL)
        assert main(["run", cfg, "--out-dir", str(tmp_path / "s"), "--mode", "socket"]) == 0
        resolved = json.loads((tmp_path / "s" / "resolved_config.json").read_text())
        assert resolved["transport"] == "socket"

    def test_config_error_exit_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", {**SMALL, "bogus": 1})
        assert main(["run", cfg]) == 2
        assert "bogus" in capsys.readouterr().err
        (tmp_path / "bad.json").write_text('{\n"rounds": 1,,\n}')
        assert main(["run", str(tmp_path / "bad.json")]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_argument_error_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["sweep-size", "x.json"])
        assert exc.value.code == 2

    def test_sweep_validation_exit_2(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", SMALL)
        assert main(["sweep-size", cfg, "--sizes", "600", "600", "--out-dir", str(tmp_path)]) == 2

    def test_runtime_error_exit_3(self, tmp_path, capsys):
        raw = {**SMALL, "num_clients": 60, "data": {**SMALL["data"], "dirichlet_beta": 1e-4}}
        cfg = write_config(tmp_path / "c.json", raw)
        assert main(["run", cfg, "--out-dir", str(tmp_path / "o")]) == 3
        assert "runtime error" in capsys.readouterr().err

    def test_sweeps_and_compare(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", SMALL)
        out = str(tmp_path / "o")
        assert main(["sweep-size", cfg, "--sizes", "300", "600", "--out-dir", out]) == 0
        assert main(["sweep-nodes", cfg, "--nodes", "1", "2", "--out-dir", out]) == 0
        assert main(["compare", cfg, "--out-dir", out, "--seeds", "0"]) == 0
        text = capsys.readouterr().out
        assert "n=600" in text and "N=2" in text and "federated_fused" in text
