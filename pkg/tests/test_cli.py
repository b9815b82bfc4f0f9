import csv
import json
import subprocess
import sys

import pytest

from airlink.cli import main
from airlink.experiments import RESULT_COLUMNS
from airlink.formats import load_model, load_stream


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A small blob model trained once through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    model = root / "m.airn"
    code = main(["train", "--arch", "2,8,8,3", "--snr", "5", "--epochs", "20",
                 "--out", str(model), "--log", str(root / "log.csv")])
    assert code == 0
    return root, model


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_train_outputs(trained):
    root, model = trained
    net = load_model(model)
    assert net.sizes == [2, 8, 8, 3]
    log = rows(root / "log.csv")
    assert [int(r["epoch"]) for r in log] == list(range(20))
    assert set(log[0]) == {"epoch", "loss", "clean_acc", "noisy_acc"}


def test_global_flags_after_subcommand(tmp_path):
    out = tmp_path / "m.airn"
    assert main(["--seed", "3", "train", "--arch", "2,4,3", "--epochs", "2", "--out", str(out)]) == 0
    a = load_model(out).flat()
    assert main(["train", "--arch", "2,4,3", "--epochs", "2", "--seed", "3", "--out", str(out)]) == 0
    assert (load_model(out).flat() == a).all()


def test_variable_snr_training(tmp_path):
    out = tmp_path / "m.airn"
    assert main(["train", "--arch", "2,4,3", "--epochs", "3", "--variable-snr", "-3", "10",
                 "--out", str(out)]) == 0


def test_prune(trained, tmp_path):
    _, model = trained
    out = tmp_path / "p.airn"
    assert main(["prune", "--model", str(model), "--target", "60", "--epochs", "2",
                 "--out", str(out)]) == 0
    assert load_model(out).param_count <= 60


def test_prune_unreachable_is_runtime_error(trained, tmp_path):
    _, model = trained
    assert main(["prune", "--model", str(model), "--target", "3", "--epochs", "1",
                 "--out", str(tmp_path / "p.airn")]) == 2


def test_sensitivity_csv(trained, tmp_path):
    _, model = trained
    out = tmp_path / "s.csv"
    assert main(["sensitivity", "--model", str(model), "--trials", "2", "--out", str(out)]) == 0
    table = rows(out)
    assert [int(r["layer_index"]) for r in table] == [0, 1, 2]
    assert [int(r["d_i"]) for r in table] == [24, 72, 27]
    assert all(float(r["lambda"]) >= 0 for r in table)


def test_allocate_then_transmit_and_evaluate(trained, tmp_path, capsys):
    _, model = trained
    plan = tmp_path / "plan.json"
    assert main(["allocate", "--model", str(model), "--budget", "250", "--out", str(plan)]) == 0
    raw = json.loads(plan.read_text())
    assert raw["mode"] == "repeat" and len(raw["factors"]) == 3
    assert raw["bandwidth_real_dims"] <= 250

    dec, stream = tmp_path / "d.airn", tmp_path / "s.airs"
    assert main(["transmit", "--model", str(model), "--plan", str(plan), "--snr", "10",
                 "--stream-out", str(stream), "--out", str(dec)]) == 0
    assert load_model(dec).arch_id == load_model(model).arch_id
    assert len(load_stream(stream)) == raw["bandwidth_real_dims"]

    capsys.readouterr()
    assert main(["evaluate", "--model", str(model), "--plan", str(plan), "--trials", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert lines[1].split(",")[0] == "airnet+repeat"


def test_transmit_noiseless_is_lossless(trained, tmp_path):
    _, model = trained
    dec = tmp_path / "d.airn"
    assert main(["transmit", "--model", str(model), "--snr", "inf", "--out", str(dec)]) == 0
    diff = load_model(dec).flat() - load_model(model).flat()
    assert abs(diff).max() <= 1e-6


def test_fading_evaluate_to_file(trained, tmp_path):
    _, model = trained
    out = tmp_path / "e.csv"
    assert main(["evaluate", "--model", str(model), "--channel", "rayleigh_block",
                 "--block-len", "20", "--trials", "3", "--out", str(out)]) == 0
    (row,) = rows(out)
    assert row["scheme"] == "airnet" and int(row["trial_count"]) == 3


def test_interp_train_and_pair_evaluate(trained, tmp_path, capsys):
    _, model = trained
    prefix = str(tmp_path / "pair")
    assert main(["interp-train", "--model", str(model), "--snr-range", "-3", "10",
                 "--epochs", "2", "--out", prefix]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--pair", prefix + "_min.airn", prefix + "_max.airn",
                 "--snr", "4", "--trials", "2"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("airnet+interp,")


def test_sweep_and_plot_data(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("AIRLINK_CACHE_DIR", raising=False)
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "config_version: 1\n"
        "task: {n_samples: 120, arch: [2, 8, 3]}\n"
        "training: {epochs: 10, finetune_epochs: 2}\n"
        "schemes: [airnet, digital]\n"
        "snr_db: [0, 10]\n"
        "bandwidth: [51]\n"
        "trials: 2\n"
    )
    out = tmp_path / "r.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    assert {r["seed"] for r in rows(out)} == {"4"}
    assert main(["plot-data", "--csv", str(out), "--out", str(tmp_path / "plots")]) == 0
    printed = capsys.readouterr().out
    assert "airnet__b=51.csv" in printed and "digital__b=51.csv" in printed


def test_sweep_partial_failure_exit_2(tmp_path, monkeypatch):
    monkeypatch.delenv("AIRLINK_CACHE_DIR", raising=False)
    cfg = tmp_path / "c.yaml"
    cfg.write_text("config_version: 1\ntask: {n_samples: 60, arch: [2, 8, 3]}\n"
                   "training: {epochs: 2, finetune_epochs: 1}\nbandwidth: [5]\ntrials: 1\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "r.csv")]) == 2


@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["prune", "--target", "10"],
    ["train", "--epochs", "many"],
    ["allocate", "--model", "x.airn", "--budget", "10", "--mode", "fountain"],
])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["sweep"],
    ["sweep", "--config", "/nonexistent/c.yaml"],
    ["evaluate"],
    ["train", "--arch", "2,4,3", "--epochs", "1"],
    ["transmit", "--model", "/nonexistent.airn", "--out", "x"],
])
def test_config_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err.startswith("airlink: error:")


def test_bad_config_file_exit_1(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("config_version: 1\nschemes: [smoke_signals]\n")
    assert main(["sweep", "--config", str(cfg)]) == 1


def test_corrupt_model_exit_1(tmp_path):
    bad = tmp_path / "bad.airn"
    bad.write_bytes(b"AIRN\x01garbage")
    assert main(["evaluate", "--model", str(bad)]) == 1


def test_plan_layer_mismatch_exit_1(trained, tmp_path):
    _, model = trained
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"mode": "repeat", "factors": [1, 2]}))
    assert main(["evaluate", "--model", str(model), "--plan", str(plan)]) == 1


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "airlink.cli", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for name in ("train", "prune", "sensitivity", "allocate", "transmit", "evaluate", "sweep",
                 "interp-train", "plot-data"):
        assert name in proc.stdout
