# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Step and trial tables of the reference blur setup, end to end."""

from collections import defaultdict
import csv
from pathlib import Path

import numpy as np
import pytest

from dabridge.approximator import load_checkpoint
from dabridge.bridge_math import BridgeSchedule
from dabridge.cli import main
from dabridge.datasets import load_dataset
from dabridge.sampling import sample_dual

REFERENCE_SEEDS = (0, 1, 2)
REFERENCE_STEPS = (3, 10, 200)


@pytest.fixture(scope="module")
def reference_runs(tmp_path_factory):
    """repro-table with the committed reference config, once per seed."""
    config = Path(__file__).parent / "fixtures" / "reference_train.cfg"
    runs = {}
    for seed in REFERENCE_SEEDS:
        out = tmp_path_factory.mktemp(f"reference-{seed}")
        argv = ["repro-table", "--out", str(out), "--task", "blur", "--side", "8"]
        argv += ["--config", str(config), "--seed", str(seed)]
        argv += ["--trials", "5", "--step-list", ",".join(map(str, REFERENCE_STEPS)), "-q"]
        assert main(argv) == 0
        runs[seed] = out
    return runs


def _cells(out):
    """(sampler, steps) -> (trial std, mean psnr over trials)."""
    with (out / "tables" / "table1_steps.csv").open() as handle:
        rows = list(csv.DictReader(handle))
    psnrs = defaultdict(list)
    stds = {}
    for row in rows:
        key = (row["sampler"], int(row["steps"]))
        psnrs[key].append(float(row["psnr_db"]))
        stds[key] = float(row["std"])
    return {key: (stds[key], float(np.mean(values))) for key, values in psnrs.items()}


@pytest.mark.slow
def test_reference_pf_ode_has_zero_spread(reference_runs):
    for out in reference_runs.values():
        cells = _cells(out)
        assert all(cells[("pf-ode", s)][0] == 0.0 for s in REFERENCE_STEPS)


@pytest.mark.slow
def test_reference_dual_spread_is_small(reference_runs):
    for out in reference_runs.values():
        cells = _cells(out)
        for s in REFERENCE_STEPS:
            dual_std = cells[("dual", s)][0]
            assert dual_std <= 0.02
            assert dual_std <= 0.1 * cells[("sde", s)][0]


@pytest.mark.slow
def test_reference_dual_psnr_leads(reference_runs):
    """Mean PSNR over seeds and steps: dual >= pf-ode and dual >= sde."""
    totals = defaultdict(list)
    for out in reference_runs.values():
        for (sampler, _steps), (_std, psnr_mean) in _cells(out).items():
            totals[sampler].append(psnr_mean)
    dual = np.mean(totals["dual"])
    assert dual >= np.mean(totals["pf-ode"])
    assert dual >= np.mean(totals["sde"])


@pytest.mark.slow
def test_reference_dual_is_fixed_by_initial_noise(reference_runs):
    out = reference_runs[REFERENCE_SEEDS[0]]
    eps = load_checkpoint(out / "ckpt" / "forward.dabr")
    z = load_checkpoint(out / "ckpt" / "reverse.dabr")
    assert eps.config.conditional and not z.config.conditional
    heldout = load_dataset(out / "data" / "blur_heldout.dabt")
    initial_z = np.random.default_rng(8).standard_normal(heldout.y.shape)
    for steps in (3, 200):
        schedule = BridgeSchedule(200).with_steps(steps)
        a = sample_dual(heldout.y, eps, z, schedule, 0, initial_z=initial_z)
        b = sample_dual(heldout.y, eps, z, schedule, 5, trial=3, initial_z=initial_z)
        np.testing.assert_array_equal(a.x0_hat, b.x0_hat)
