# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Test the dual sampler, its variant and the SDE / PF-ODE baselines."""

import numpy as np
import pytest

from dabridge.approximator import Approximator
from dabridge.approximator import PosteriorOracle
from dabridge.bridge_math import BridgeSchedule
from dabridge.const import CSV_HEADER
from dabridge.const import SAMPLER_DUAL
from dabridge.const import SAMPLER_DUAL_EQ43
from dabridge.const import SAMPLER_PF_ODE
from dabridge.const import SAMPLER_SDE
from dabridge.datasets import gen_gaussian_pairs
from dabridge.exceptions import ConfigError
from dabridge.exceptions import NonFiniteStateError
from dabridge.formats import decode_tensor_block
from dabridge.sampling import TRAJECTORY_FILE
from dabridge.sampling import compare_dual_variants
from dabridge.sampling import dump_trajectory
from dabridge.sampling import eq43_coefficients
from dabridge.sampling import run_sampler
from dabridge.sampling import sample_dual
from dabridge.sampling import sample_dual_eq43
from dabridge.sampling import sample_pf_ode
from dabridge.sampling import sample_sde
from dabridge.sampling import step_count_sweep
from dabridge.util import read_manifest


class Exploding(Approximator):
    """Returns +inf everywhere."""

    kind = "exploding"

    def evaluate(self, x_t, t_index, y=None, T=None):
        return np.full_like(np.asarray(x_t, dtype=np.float64), np.inf)


@pytest.mark.parametrize("T", [3, 100])
def test_dual_recovers_x0_with_oracles(pair, oracles, T):
    eps, z, schedule = oracles(T)
    run = sample_dual(pair.y, eps, z, schedule, rng_seed=0)
    np.testing.assert_allclose(run.x0_hat, pair.x0, atol=1e-8 if T == 3 else 1e-6)
    assert run.steps_used == T
    assert run.sampler_kind == SAMPLER_DUAL


@pytest.mark.parametrize("T", [3, 100])
def test_eq43_recovers_x0_with_oracles(pair, oracles, T):
    eps, z, schedule = oracles(T)
    run = sample_dual_eq43(pair.y, eps, z, schedule, rng_seed=0)
    np.testing.assert_allclose(run.x0_hat, pair.x0, atol=1e-6)


def test_eq43_coefficients():
    assert eq43_coefficients(4) == (0.75, 0.25, -1.0, 1.25)


def test_dual_variants_agree_on_oracles(pair, oracles):
    eps, z, schedule = oracles(50)
    run_a, run_b, gap = compare_dual_variants(pair.y, eps, z, schedule, rng_seed=4)
    assert np.max(np.abs(gap)) < 1e-5
    # both variants read the same initial draw
    np.testing.assert_array_equal(run_a.initial_z, run_b.initial_z)


def test_dual_needs_three_steps(pair, oracles):
    eps, z, schedule = oracles(2)
    with pytest.raises(ConfigError):
        sample_dual(pair.y, eps, z, schedule, rng_seed=0)
    with pytest.raises(ConfigError):
        sample_dual_eq43(pair.y, eps, z, schedule, rng_seed=0)


def test_dual_trajectory(pair, oracles):
    eps, z, schedule = oracles(10)
    run = sample_dual(pair.y, eps, z, schedule, rng_seed=0, keep_trajectory=True)
    assert [s.t_index for s in run.trajectory] == list(range(10, -1, -1))
    np.testing.assert_array_equal(run.trajectory[0].x, pair.y)
    np.testing.assert_array_equal(run.trajectory[-1].x, run.x0_hat)


def test_dual_randomness_is_the_initial_draw(pair, oracles):
    """Fixing the t = T draw makes the output independent of the seed."""
    eps, z, schedule = oracles(20)
    initial = np.array([0.3, -1.2, 0.8])
    a = sample_dual(pair.y, eps, z, schedule, rng_seed=1, initial_z=initial)
    b = sample_dual(pair.y, eps, z, schedule, rng_seed=2, trial=3, initial_z=initial)
    np.testing.assert_array_equal(a.x0_hat, b.x0_hat)

    c = sample_dual(pair.y, eps, z, schedule, rng_seed=1)
    d = sample_dual(pair.y, eps, z, schedule, rng_seed=2)
    assert not np.array_equal(c.initial_z, d.initial_z)


def test_dual_early_stop(pair, oracles):
    eps, z, schedule = oracles(20)
    run = sample_dual(pair.y, eps, z, schedule, rng_seed=0, stop_at=18, keep_trajectory=True)
    assert run.steps_used == 3
    assert [s.t_index for s in run.trajectory] == [20, 19, 18, 0]
    np.testing.assert_allclose(run.x0_hat, pair.x0, atol=1e-8)
    with pytest.raises(ConfigError):
        sample_dual(pair.y, eps, z, schedule, rng_seed=0, stop_at=21)


def test_dual_reports_non_finite_state(pair, oracles):
    _eps, z, schedule = oracles(5)
    with pytest.raises(NonFiniteStateError) as err:
        sample_dual(pair.y, Exploding(3, 5, "forward"), z, schedule, rng_seed=0)
    assert err.value.t_index == 4


def test_pf_ode_is_deterministic_and_exact_with_oracle(pair, oracles):
    eps, _z, schedule = oracles(40)
    a = sample_pf_ode(pair.y, eps, schedule)
    b = sample_pf_ode(pair.y, eps, schedule)
    np.testing.assert_array_equal(a.x0_hat, b.x0_hat)
    np.testing.assert_allclose(a.x0_hat, pair.x0, atol=1e-6)
    assert a.draws == []


def test_pf_ode_terminal_error_shrinks_with_T(pair, oracles):
    """The last state approaches the bridge mean at t = 1/T as T grows."""

    def terminal_error(T):
        eps, _z, schedule = oracles(T)
        run = sample_pf_ode(pair.y, eps, schedule, keep_trajectory=True)
        x1 = run.trajectory[-2]
        assert x1.t_index == 1
        mean = (1 - 1 / T) * pair.x0 + pair.y / T
        return np.linalg.norm(x1.x - mean)

    assert terminal_error(1000) < terminal_error(100)


def test_sde_draws_fresh_noise(pair, oracles):
    eps, _z, schedule = oracles(30)
    a = sample_sde(pair.y, eps, schedule, rng_seed=0)
    b = sample_sde(pair.y, eps, schedule, rng_seed=0, trial=1)
    assert len(a.draws) == 29
    assert not np.array_equal(a.draws[0], b.draws[0])
    np.testing.assert_allclose(a.x0_hat, pair.x0, atol=1e-6)


def test_sde_zero_noise_hook(pair, oracles):
    eps, _z, schedule = oracles(30)
    a = sample_sde(pair.y, eps, schedule, rng_seed=0, zero_noise=True)
    b = sample_sde(pair.y, eps, schedule, rng_seed=9, zero_noise=True)
    np.testing.assert_array_equal(a.x0_hat, b.x0_hat)
    assert all(not d.any() for d in a.draws)


def test_sde_needs_two_steps(pair, oracles):
    eps, _z, _schedule = oracles()
    with pytest.raises(ConfigError):
        sample_sde(pair.y, eps, BridgeSchedule(1), rng_seed=0)


@pytest.mark.slow
def test_sde_matches_x0_distribution():
    """Batched SDE runs with the population-optimal eps match N(0, 1) within 5%."""
    T = 100
    data = gen_gaussian_pairs(10_000, 1, 0.0, 1.0, 2.0, seed=1)
    eps = PosteriorOracle(0.0, 1.0, 2.0, 1, T)
    run = sample_sde(data.y, eps, BridgeSchedule(T), rng_seed=3)
    assert abs(run.x0_hat.mean()) < 0.05
    assert run.x0_hat.var() == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("kind", [SAMPLER_DUAL, SAMPLER_DUAL_EQ43, SAMPLER_SDE, SAMPLER_PF_ODE])
def test_run_sampler_dispatch(pair, oracles, kind):
    eps, z, schedule = oracles(12)
    run = run_sampler(kind, pair.y, eps, z, schedule, rng_seed=5, trial=2)
    assert run.sampler_kind == kind
    assert run.trial == 2
    np.testing.assert_allclose(run.x0_hat, pair.x0, atol=1e-6)


def test_run_sampler_unknown(pair, oracles):
    eps, z, schedule = oracles(12)
    with pytest.raises(ConfigError) as err:
        run_sampler("ddim", pair.y, eps, z, schedule, rng_seed=0)
    assert err.value.errors == {"sampler": "unknown_sampler"}


@pytest.mark.parametrize("early_stop", [False, True])
def test_step_count_sweep(tmp_path, pair, oracles, early_stop):
    eps, z, schedule = oracles(20)
    report = step_count_sweep(
        pair.y[None, :],
        pair.x0[None, :],
        eps,
        z,
        schedule,
        [3, 10, 20],
        rng_seed=0,
        trials=2,
        early_stop=early_stop,
    )
    assert [(r.steps, r.trial) for r in report.sorted_rows()] == [
        (3, 0),
        (3, 1),
        (10, 0),
        (10, 1),
        (20, 0),
        (20, 1),
    ]
    assert all(r.psnr_db == 99.0 for r in report.rows)
    path = report.write_csv(tmp_path / "sweep.csv")
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)


def test_step_count_sweep_rejects_bad_steps(pair, oracles):
    eps, z, schedule = oracles(20)
    with pytest.raises(ConfigError):
        step_count_sweep(pair.y, pair.x0, eps, z, schedule, [2, 10], rng_seed=0)
    with pytest.raises(ConfigError):
        step_count_sweep(pair.y, pair.x0, eps, z, schedule, [21], rng_seed=0)


def test_dump_trajectory(tmp_path, pair, oracles):
    eps, z, schedule = oracles(8)
    run = sample_dual(pair.y, eps, z, schedule, rng_seed=6, keep_trajectory=True)
    path = dump_trajectory(run, tmp_path)
    assert path.name == TRAJECTORY_FILE
    rows = decode_tensor_block(path.read_bytes())
    assert rows.shape == (9, 3)
    manifest = read_manifest(tmp_path / "run.txt")
    assert manifest["sampler"] == SAMPLER_DUAL
    assert manifest["seed"] == "6"
    assert manifest["T"] == "8"


def test_dump_trajectory_needs_trajectory(tmp_path, pair, oracles):
    eps, z, schedule = oracles(8)
    run = sample_dual(pair.y, eps, z, schedule, rng_seed=6)
    with pytest.raises(ConfigError):
        dump_trajectory(run, tmp_path)

