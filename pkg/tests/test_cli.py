# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Test the command line surface end to end on tiny runs."""

import csv

import numpy as np
import pytest

from dabridge.approximator import MlpApproximator
from dabridge.approximator import load_checkpoint
from dabridge.cli import main
from dabridge.cli import run_cells
from dabridge.config import mlp_config_for
from dabridge.config import validate_mlp_options
from dabridge.const import CSV_HEADER
from dabridge.const import ENV_THREADS
from dabridge.const import SUMMARY_HEADER
from dabridge.datasets import PairedDataset
from dabridge.datasets import gen_gaussian_pairs
from dabridge.datasets import load_dataset
from dabridge.datasets import save_dataset
from dabridge.util import file_digest
from dabridge.util import read_manifest


def _rows(path):
    with path.open() as handle:
        return list(csv.reader(handle))


def _single_pair(tmp_path, dim=3):
    path = tmp_path / "pair.dabt"
    rng = np.random.default_rng(0)
    x0 = rng.uniform(size=(1, dim))
    save_dataset(path, PairedDataset(x0, x0 + 0.5, "pair"))
    return path


def test_run_cells_keeps_order(monkeypatch):
    monkeypatch.setenv(ENV_THREADS, "4")
    assert run_cells([lambda i=i: i * i for i in range(10)]) == [i * i for i in range(10)]


def test_gen_data_blur(tmp_path):
    out = tmp_path / "out"
    argv = ["gen-data", "--out", str(out), "--task", "blur", "--n", "512", "--side", "8"]
    assert main(argv + ["--seed", "7"]) == 0
    data = load_dataset(out / "data" / "blur.dabt")
    assert len(data) == 512 and data.dim == 64
    manifest = read_manifest(out / "data" / "run.txt")
    assert manifest["seed"] == "7"
    assert manifest["train_sha256"] == file_digest(out / "data" / "blur.dabt")


def test_gen_data_is_reproducible(tmp_path):
    for name in ("a", "b"):
        argv = ["gen-data", "--out", str(tmp_path / name), "--task", "twomoons", "--n", "64"]
        assert main(argv + ["--seed", "3", "--csv"]) == 0
    for file in ("twomoons.dabt", "twomoons_heldout.dabt", "twomoons.csv"):
        assert file_digest(tmp_path / "a" / "data" / file) == file_digest(
            tmp_path / "b" / "data" / file
        )


def test_gen_data_unknown_task(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path), "--task", "mnist"]) == 2
    assert "gaussian, twomoons, blur" in capsys.readouterr().err


def test_bad_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["train", "--which", "sideways"])
    assert err.value.code == 2


def test_train_missing_dataset(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--data", str(tmp_path / "none.dabt")]) == 1


def _gaussian_file(tmp_path, dim=1, name="gauss.dabt"):
    path = tmp_path / name
    save_dataset(path, gen_gaussian_pairs(64, dim, 0.0, 1.0, 2.0, seed=0))
    return path


def _train(out, data, *extra):
    argv = ["train", "--out", str(out), "--data", str(data), "--T", "10"]
    argv += ["--batch-size", "8", "--seed", "2", *extra]
    return main(argv)


def test_train_forward(tmp_path):
    data = _gaussian_file(tmp_path)
    assert _train(tmp_path / "out", data, "--which", "forward", "--steps", "5") == 0
    ckpt = tmp_path / "out" / "ckpt"
    assert load_checkpoint(ckpt / "forward.dabr").T == 10
    assert not (ckpt / "reverse.dabr").exists()
    assert [r[0] for r in _rows(ckpt / "forward_loss.csv")] == ["step", "1", "5"]
    assert read_manifest(ckpt / "run.txt")["train_steps"] == "5"


def test_train_zero_steps_is_initialization(tmp_path):
    data = _gaussian_file(tmp_path)
    assert _train(tmp_path / "out", data, "--which", "forward", "--steps", "0") == 0
    restored = load_checkpoint(tmp_path / "out" / "ckpt" / "forward.dabr")
    fresh = MlpApproximator(mlp_config_for(1, validate_mlp_options({}), 2), 10)
    np.testing.assert_array_equal(restored.params, fresh.params)


def test_train_both_is_order_insensitive(tmp_path):
    data = _gaussian_file(tmp_path)
    assert _train(tmp_path / "both", data, "--which", "both", "--steps", "4") == 0
    assert _train(tmp_path / "rev", data, "--which", "reverse", "--steps", "4") == 0
    assert file_digest(tmp_path / "both" / "ckpt" / "reverse.dabr") == file_digest(
        tmp_path / "rev" / "ckpt" / "reverse.dabr"
    )


def test_train_config_file(tmp_path):
    data = _gaussian_file(tmp_path)
    cfg = tmp_path / "train.cfg"
    cfg.write_text("steps=3\nhidden=5\n")
    assert _train(tmp_path / "out", data, "--which", "forward", "--config", str(cfg)) == 0
    restored = load_checkpoint(tmp_path / "out" / "ckpt" / "forward.dabr")
    assert restored.config.layer_widths == [2, 5, 1]

    cfg.write_text("steps=3\nwidth=5\n")
    assert _train(tmp_path / "bad", data, "--config", str(cfg)) == 2


def _sample(tmp_path, heldout, *extra):
    argv = ["sample", "--out", str(tmp_path / "out"), "--heldout-file", str(heldout)]
    return main(argv + list(extra))


def test_sample_dual_oracle_is_exact(tmp_path):
    heldout = _single_pair(tmp_path)
    assert _sample(tmp_path, heldout, "--sampler", "dual", "--oracle", "--T", "3") == 0
    run_dir = tmp_path / "out" / "runs" / "sample-dual"
    rows = _rows(run_dir / "metrics.csv")
    assert rows[0] == CSV_HEADER
    assert float(rows[1][3]) == 99.0
    assert read_manifest(run_dir / "run.txt")["T"] == "3"


def test_sample_trials_std(tmp_path):
    heldout = _single_pair(tmp_path)
    assert _sample(tmp_path, heldout, "--sampler", "pf-ode", "--oracle", "--trials", "5") == 0
    rows = _rows(tmp_path / "out" / "runs" / "sample-pf-ode" / "metrics.csv")
    assert len(rows) == 6
    assert all(float(r[5]) == 0.0 for r in rows[1:])


def test_sample_dump_trajectory(tmp_path):
    heldout = _single_pair(tmp_path)
    argv = ["--sampler", "sde", "--oracle", "--T", "6", "--trials", "2", "--dump-trajectory"]
    assert _sample(tmp_path, heldout, *argv) == 0
    run_dir = tmp_path / "out" / "runs" / "sample-sde"
    for trial in (0, 1):
        assert (run_dir / f"trial-{trial}" / "trajectory.dabt").exists()


def test_sample_dimension_mismatch(tmp_path, caplog):
    data = _gaussian_file(tmp_path)
    assert _train(tmp_path / "out", data, "--which", "forward", "--steps", "1") == 0
    heldout = _gaussian_file(tmp_path, dim=2, name="wide.dabt")
    assert _sample(tmp_path, heldout, "--sampler", "pf-ode", "--T", "10") == 1
    assert "dim 1" in caplog.text and "dim 2" in caplog.text


def test_sample_posterior_needs_reverse(tmp_path):
    heldout = _gaussian_file(tmp_path)
    assert _sample(tmp_path, heldout, "--sampler", "dual", "--posterior") == 2
    assert _sample(tmp_path, heldout, "--sampler", "sde", "--posterior", "--T", "20") == 0


def test_eval_rescores_sample_run(tmp_path):
    heldout = _single_pair(tmp_path)
    assert _sample(tmp_path, heldout, "--sampler", "dual", "--oracle", "--trials", "2") == 0
    run_dir = tmp_path / "out" / "runs" / "sample-dual"
    before = (run_dir / "metrics.csv").read_bytes()
    (run_dir / "metrics.csv").unlink()
    argv = ["eval", "--run", str(run_dir), "--heldout-file", str(heldout)]
    assert main(argv) == 0
    assert (run_dir / "metrics.csv").read_bytes() == before


def test_sweep_with_oracles(tmp_path):
    heldout = _single_pair(tmp_path)
    argv = ["sweep", "--out", str(tmp_path / "out"), "--heldout-file", str(heldout)]
    argv += ["--oracle", "--T", "20", "--step-list", "3,10,20", "--early-stop"]
    assert main(argv) == 0
    rows = _rows(tmp_path / "out" / "runs" / "sweep" / "metrics.csv")
    assert [r[1] for r in rows[1:]] == ["3", "10", "20"]

    argv[-3:-1] = ["--step-list", "2,10"]
    assert main(argv) == 2


@pytest.mark.slow
def test_repro_table_is_reproducible(tmp_path):
    argv = ["repro-table", "--task", "blur", "--n", "64", "--heldout", "4", "--side", "4"]
    argv += ["--T", "10", "--trials", "2", "--train-steps", "20", "--seed", "1"]
    argv += ["--step-list", "3,10"]
    for name in ("a", "b"):
        assert main(argv + ["--out", str(tmp_path / name)]) == 0

    tables = tmp_path / "a" / "tables"
    for file in ("table1_steps.csv", "table2_trials.csv", "summary.csv"):
        assert (tables / file).read_bytes() == (tmp_path / "b" / "tables" / file).read_bytes()

    steps = _rows(tables / "table1_steps.csv")
    assert steps[0] == CSV_HEADER
    assert {(r[0], r[1]) for r in steps[1:]} == {
        (sampler, s) for sampler in ("dual", "sde", "pf-ode") for s in ("3", "10")
    }
    assert all(float(r[5]) == 0.0 for r in steps[1:] if r[0] == "pf-ode")
    trials = _rows(tables / "table2_trials.csv")
    assert {r[1] for r in trials[1:]} == {"10"}
    assert _rows(tables / "summary.csv")[0] == SUMMARY_HEADER


def test_repro_table_reads_config(tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("steps=5\nhidden=4\nconditional=forward\nT=10\n")
    argv = ["repro-table", "--out", str(tmp_path / "out"), "--task", "blur", "--n", "16"]
    argv += ["--heldout", "2", "--side", "4", "--trials", "2", "--step-list", "3"]
    assert main(argv + ["--config", str(cfg), "--train-steps", "3"]) == 0
    ckpt = tmp_path / "out" / "ckpt"
    assert load_checkpoint(ckpt / "forward.dabr").config.conditional
    assert not load_checkpoint(ckpt / "reverse.dabr").config.conditional
    manifest = read_manifest(tmp_path / "out" / "tables" / "run.txt")
    assert manifest["T"] == "10"
    assert manifest["train_steps"] == "3"
    assert manifest["mlp_conditional"] == "forward"

    argv[-1] = "11"
    assert main(argv + ["--config", str(cfg)]) == 2
