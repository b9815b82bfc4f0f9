import csv

import pytest
import yaml

from airlink.experiments import (
    RESULT_COLUMNS,
    ConfigError,
    SchemaError,
    config_from_dict,
    emit_plot_data,
    load_config,
    read_results,
    run_sweep,
)

GOLDEN_HEADER = (
    "scheme,snr_db,bandwidth_real_dims,seed,trial_count,mean_accuracy,std_accuracy,wall_ms\n"
)


def tiny(**over):
    raw = {
        "config_version": 1,
        "task": {"n_samples": 120, "arch": [2, 8, 3]},
        "training": {"epochs": 20, "finetune_epochs": 3},
        "schemes": ["airnet"],
        "snr_db": [5.0],
        "bandwidth": [51],
        "seeds": [0],
        "trials": 3,
    }
    raw.update(over)
    return raw


@pytest.fixture(autouse=True)
def _no_ambient_cache(monkeypatch):
    monkeypatch.delenv("AIRLINK_CACHE_DIR", raising=False)


def strip_timing(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    col = rows[0].index("wall_ms")
    return [r[:col] + r[col + 1 :] for r in rows]


class TestConfig:
    def test_defaults_fill_in(self):
        cfg = config_from_dict({"config_version": 1})
        assert cfg.schemes == ["airnet"] and cfg.trials == 20

    @pytest.mark.parametrize(
        "bad",
        [
            {},
            {"config_version": 2},
            {"config_version": 1, "snr": [1]},
            {"config_version": 1, "schemes": []},
            {"config_version": 1, "schemes": ["fm_radio"]},
            {"config_version": 1, "task": {"color": 1}},
            {"config_version": 1, "trials": 0},
            {"config_version": 1, "channel": {"kind": "rician"}},
            {"config_version": 1, "task": {"dataset": "missing.csv"}},
            {"config_version": 1, "schemes": ["airnet+interp"], "snr_db": [5.0]},
        ],
    )
    def test_rejected(self, bad):
        with pytest.raises(ConfigError):
            config_from_dict(bad)

    def test_yaml_errors(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("config_version: [1,\n")
        with pytest.raises(ConfigError):
            load_config(path)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")


class TestSweep:
    def test_single_cell(self, tmp_path):
        out = tmp_path / "r.csv"
        res = run_sweep(config_from_dict(tiny()), str(out))
        assert len(res.rows) == 1 and res.computed == 1 and not res.failed
        assert out.read_text().startswith(GOLDEN_HEADER)
        assert len(read_results(out)) == 1

    def test_twelve_rows_cache_and_plot_data(self, tmp_path):
        cfg = config_from_dict(tiny(schemes=["airnet", "digital"], snr_db=[0.0, 5.0, 10.0],
                                    seeds=[0, 1]))
        out = tmp_path / "r.csv"
        first = run_sweep(cfg, str(out))
        assert len(first.rows) == 12 and first.computed == 12
        rows = read_results(out)
        assert all(all(str(r[c]) != "" for c in RESULT_COLUMNS) for r in rows)
        assert all(0.0 <= r["mean_accuracy"] <= 1.0 for r in rows)

        again = run_sweep(cfg, str(out))
        assert again.computed == 0 and again.cached == 12

        files = emit_plot_data(out, "snr", tmp_path / "plots")
        assert len(files) == 2
        for path in files:
            lines = open(path).read().splitlines()
            assert lines[0] == "x,mean,std" and len(lines) == 4
            xs = [float(line.split(",")[0]) for line in lines[1:]]
            assert xs == sorted(xs)

    def test_fresh_cache_is_byte_identical(self, tmp_path, monkeypatch):
        cfg = tiny(schemes=["airnet", "airnet+sk+uep", "digital"], snr_db=[0.0, 10.0],
                   bandwidth=[102])
        outs = []
        for run in ("a", "b"):
            monkeypatch.setenv("AIRLINK_CACHE_DIR", str(tmp_path / f"cache-{run}"))
            out = tmp_path / f"{run}.csv"
            res = run_sweep(config_from_dict(cfg), str(out))
            assert not res.failed, res.failed
            outs.append(strip_timing(out))
        assert outs[0] == outs[1]

    def test_cache_dir_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AIRLINK_CACHE_DIR", str(tmp_path / "elsewhere"))
        run_sweep(config_from_dict(tiny()), str(tmp_path / "out" / "r.csv"))
        assert any((tmp_path / "elsewhere" / "cells").iterdir())
        assert not (tmp_path / "out" / ".airlink-cache").exists()

    def test_workers_match_serial(self, tmp_path):
        cfg = config_from_dict(tiny(snr_db=[0.0, 10.0], seeds=[0, 1]))
        run_sweep(cfg, str(tmp_path / "a" / "r.csv"), workers=1)
        run_sweep(cfg, str(tmp_path / "b" / "r.csv"), workers=2)
        assert strip_timing(tmp_path / "a" / "r.csv") == strip_timing(tmp_path / "b" / "r.csv")

    def test_partial_failure_keeps_rows(self, tmp_path):
        # a 2-8-3 net bottoms out at 9 params, so bandwidth 5 is unreachable for
        # airnet; digital still reports (zero accuracy, nothing fits)
        cfg = config_from_dict(tiny(schemes=["airnet", "digital"], bandwidth=[5]))
        out = tmp_path / "r.csv"
        res = run_sweep(cfg, str(out))
        assert len(res.failed) == 1 and res.failed[0][0][0] == "airnet"
        assert [r["scheme"] for r in read_results(out)] == ["digital"]

    def test_interp_and_fading(self, tmp_path):
        cfg = config_from_dict(tiny(schemes=["airnet+interp", "digital_csit"], snr_db=[0.0, 10.0],
                                    channel={"kind": "rayleigh_block"},
                                    digital={"fades": 50}))
        res = run_sweep(cfg, str(tmp_path / "r.csv"))
        assert not res.failed, res.failed
        assert len(res.rows) == 4


class TestResults:
    def write(self, path, header, row):
        path.write_text(",".join(header) + "\n" + ",".join(row) + "\n")

    def test_single_row_single_point(self, tmp_path):
        path = tmp_path / "r.csv"
        self.write(path, RESULT_COLUMNS, ["airnet", "5.0", "100", "0", "3", "0.9", "0.01", "7"])
        files = emit_plot_data(path, "bandwidth", tmp_path / "p")
        assert len(files) == 1
        assert open(files[0]).read().splitlines()[1:] == ["100,0.9,0.0"]

    def test_seed_aggregation(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text(GOLDEN_HEADER + "airnet,5.0,100,0,3,0.8,0.0,1\nairnet,5.0,100,1,3,0.6,0.0,1\n")
        files = emit_plot_data(path, "snr", tmp_path / "p")
        x, mean, std = open(files[0]).read().splitlines()[1].split(",")
        assert float(mean) == pytest.approx(0.7) and float(std) == pytest.approx(0.1)

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "r.csv"
        cols = [c for c in RESULT_COLUMNS if c != "seed"]
        self.write(path, cols, ["airnet", "5.0", "100", "3", "0.9", "0.01", "7"])
        with pytest.raises(SchemaError, match="seed"):
            read_results(path)

    def test_bad_value_named(self, tmp_path):
        path = tmp_path / "r.csv"
        self.write(path, RESULT_COLUMNS, ["airnet", "loud", "100", "0", "3", "0.9", "0.01", "7"])
        with pytest.raises(SchemaError, match="snr_db"):
            read_results(path)

    def test_accuracy_range(self, tmp_path):
        path = tmp_path / "r.csv"
        self.write(path, RESULT_COLUMNS, ["airnet", "5.0", "100", "0", "3", "1.5", "0.01", "7"])
        with pytest.raises(SchemaError, match="mean_accuracy"):
            read_results(path)


def test_shipped_config_loads():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1]
    cfg = load_config(root / "configs" / "desk_sweep.yaml")
    assert yaml.safe_load((root / "configs" / "desk_sweep.yaml").read_text())["config_version"] == 1
    assert set(cfg.schemes) <= {"airnet", "airnet+sk+uep", "airnet+interp", "digital", "digital_csit"}
