# SPDX-License-Identifier: Apache-2.0
# SPDX-FileCopyrightText: 2024 dabridge contributors
##############################################################################
# COPYRIGHT 2024 dabridge contributors
#
# All rights reserved. This program and the accompanying materials
# are made available under the terms of the Apache 2.0 License
# which accompanies this distribution, and is available at
# https://www.apache.org/licenses/LICENSE-2.0
##############################################################################
"""
Samplers that map a conditioning input y to an estimate of x0.

dual        deterministic dual-approximator sampler; one Gaussian draw at t = T,
            every later noise term is predicted by Z_phi
dual-eq43   the continuous-derivation form of the same update
sde         reverse bridge SDE, a fresh draw every step
pf-ode      probability-flow ODE, no randomness at all

All samplers start at x_T = y and finish with X0_hat = x_1 - eps_theta(x_1, 1).
The noise function g is fixed to 1 here.
"""

from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field
import logging
import math
from pathlib import Path
from typing import Callable
from typing import Iterable
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np

from .approximator import Approximator
from .bridge_math import BridgeSchedule
from .bridge_math import BridgeState
from .bridge_math import clamp_t
from .bridge_math import forward_drift
from .bridge_math import score
from .const import DEFAULT_PEAK
from .const import MANIFEST_FILE
from .const import MIN_DUAL_STEPS
from .const import MIN_SDE_STEPS
from .const import SAMPLER_DUAL
from .const import SAMPLER_DUAL_EQ43
from .const import SAMPLER_PF_ODE
from .const import SAMPLER_SDE
from .const import STREAM_SAMPLE
from .evaluation import MetricsReport
from .evaluation import score_trials
from .exceptions import ConfigError
from .exceptions import NonFiniteStateError
from .formats import encode_tensor_block
from .formats import write_bytes
from .util import as_vector
from .util import stream
from .util import write_manifest

_LOGGER = logging.getLogger(__name__)

# Both dual variants read the same initial draw for a given seed and trial.
_NOISE_TAGS = {SAMPLER_DUAL: 1, SAMPLER_DUAL_EQ43: 1, SAMPLER_SDE: 2}

TRAJECTORY_FILE = "trajectory.dabt"


@dataclass(eq=False)
class SamplerRun:
    """Result of one sampler invocation."""

    sampler_kind: str
    y: np.ndarray
    x0_hat: np.ndarray
    steps_used: int
    rng_seed: Optional[int] = None
    trial: int = 0
    initial_z: Optional[np.ndarray] = None
    draws: List[np.ndarray] = field(default_factory=list)
    trajectory: List[BridgeState] = field(default_factory=list)


def _noise(rng_seed: int, kind: str, trial: int) -> np.random.Generator:
    return stream(rng_seed, STREAM_SAMPLE, _NOISE_TAGS[kind], trial)


def _checked(x: np.ndarray, kind: str, t_index: int) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(kind, t_index)
    return x


def _reconstruct(
    x0_hat: np.ndarray, y: np.ndarray, z_hat: np.ndarray, t_index: int, schedule: BridgeSchedule
) -> np.ndarray:
    """Bridge marginal at t_index rebuilt from x0_hat, y and a noise estimate."""
    t_bar = t_index / schedule.T
    return (1.0 - t_bar) * x0_hat + t_bar * y + schedule.B_table[t_index] * z_hat


def _start(y: np.ndarray) -> np.ndarray:
    return as_vector(y, "y").copy()


def _finish(run: SamplerRun, keep_trajectory: bool) -> SamplerRun:
    """Close the trajectory with X0_hat at t = 0."""
    if keep_trajectory:
        run.trajectory.append(BridgeState(run.x0_hat.copy(), 0))
    return run


def sample_dual(
    y: np.ndarray,
    eps_approx: Approximator,
    z_approx: Approximator,
    schedule: BridgeSchedule,
    rng_seed: int,
    trial: int = 0,
    initial_z: Optional[np.ndarray] = None,
    stop_at: int = 1,
    keep_trajectory: bool = False,
) -> SamplerRun:
    """
    Dual-approximator sampler.

    For t = T..2 the state moves with
    x_{t-1} = (1 - 1/t) x_t + y/(t-1) - x0_hat/(t(t-1)) - U_{t+1} + t/(t-1) U_t
    where U_{t+1} = x_hat_t - y and U_t = x_hat_{t-1} - y are rebuilt from
    x0_hat and the noise estimate. At t = 1 the update is undefined and the
    run returns X0_hat = x_1 - eps_theta(x_1, 1).

    stop_at > 1 ends the run early and reads X0_hat = x_s - eps_theta(x_s, s)
    at s = stop_at. initial_z replaces the single draw at t = T.
    """
    T = schedule.T
    if T < MIN_DUAL_STEPS:
        raise ConfigError({"T": "bad_steps"})
    if not 1 <= stop_at <= T:
        raise ConfigError({"stop_at": "bad_steps"})
    x = _start(y)
    y = x.copy()
    if initial_z is None:
        initial_z = _noise(rng_seed, SAMPLER_DUAL, trial).standard_normal(y.shape)
    initial_z = as_vector(initial_z, "initial_z")
    run = SamplerRun(SAMPLER_DUAL, y, y, T - stop_at + 1, rng_seed, trial, initial_z)
    if keep_trajectory:
        run.trajectory.append(BridgeState(x.copy(), T))

    for t in range(T, stop_at, -1):
        x0_hat = x - eps_approx(x, t, y, T)
        z_hat = initial_z if t == T else z_approx(x, t, y, T)
        u_next = _reconstruct(x0_hat, y, z_hat, t, schedule) - y
        u_now = _reconstruct(x0_hat, y, z_hat, t - 1, schedule) - y
        x = (
            (1.0 - 1.0 / t) * x
            + y / (t - 1)
            - x0_hat / (t * (t - 1))
            - u_next
            + (t / (t - 1)) * u_now
        )
        _checked(x, SAMPLER_DUAL, t - 1)
        if keep_trajectory:
            run.trajectory.append(BridgeState(x.copy(), t - 1))
        _LOGGER.debug("dual t=%d |x|=%.6g", t - 1, float(np.linalg.norm(x)))

    run.x0_hat = _checked(x - eps_approx(x, stop_at, y, T), SAMPLER_DUAL, 0)
    return _finish(run, keep_trajectory)


def eq43_coefficients(t_index: int) -> Tuple[float, float, float, float]:
    """Weights on (x_t, y, U_{t+1}, U_t) with dt/t read as 1/t."""
    c = 1.0 / t_index
    return (1.0 - c, c, -1.0, 1.0 + c)


def sample_dual_eq43(
    y: np.ndarray,
    eps_approx: Approximator,
    z_approx: Approximator,
    schedule: BridgeSchedule,
    rng_seed: int,
    trial: int = 0,
    initial_z: Optional[np.ndarray] = None,
    keep_trajectory: bool = False,
) -> SamplerRun:
    """
    Continuous-derivation variant of the dual sampler.

    x_{T-1} = y - eps_theta(y, T)/T - z/sqrt(T); then for t = T-1..2
    x_{t-1} = (1 - 1/t) x_t + y/t - U_{t+1} + (1 + 1/t) U_t.
    """
    T = schedule.T
    if T < MIN_DUAL_STEPS:
        raise ConfigError({"T": "bad_steps"})
    y = _start(y)
    if initial_z is None:
        initial_z = _noise(rng_seed, SAMPLER_DUAL_EQ43, trial).standard_normal(y.shape)
    initial_z = as_vector(initial_z, "initial_z")
    run = SamplerRun(SAMPLER_DUAL_EQ43, y, y, T, rng_seed, trial, initial_z)

    x = y - eps_approx(y, T, y, T) / T - initial_z / math.sqrt(T)
    _checked(x, SAMPLER_DUAL_EQ43, T - 1)
    if keep_trajectory:
        run.trajectory.append(BridgeState(y.copy(), T))
        run.trajectory.append(BridgeState(x.copy(), T - 1))

    for t in range(T - 1, 1, -1):
        x0_hat = x - eps_approx(x, t, y, T)
        z_hat = z_approx(x, t, y, T)
        u_next = _reconstruct(x0_hat, y, z_hat, t + 1, schedule) - y
        u_now = _reconstruct(x0_hat, y, z_hat, t, schedule) - y
        a, b, c, d = eq43_coefficients(t)
        x = a * x + b * y + c * u_next + d * u_now
        _checked(x, SAMPLER_DUAL_EQ43, t - 1)
        if keep_trajectory:
            run.trajectory.append(BridgeState(x.copy(), t - 1))

    run.x0_hat = _checked(x - eps_approx(x, 1, y, T), SAMPLER_DUAL_EQ43, 0)
    return _finish(run, keep_trajectory)


def _reverse_loop(
    kind: str,
    y: np.ndarray,
    eps_approx: Approximator,
    schedule: BridgeSchedule,
    score_weight: float,
    noise_fn: Optional[Callable[[], np.ndarray]],
    run: SamplerRun,
    keep_trajectory: bool,
) -> np.ndarray:
    """Euler steps of X <- X + ((X - Y)/(1 - t) + w score) dt [- sqrt(dt) z]."""
    T = schedule.T
    unit = BridgeSchedule(1)
    dt = schedule.dt
    sqrt_dt = math.sqrt(dt)
    x = y.copy()
    if keep_trajectory:
        run.trajectory.append(BridgeState(x.copy(), T))
    for t in range(T, 1, -1):
        t_bar = clamp_t(t / T)
        x0_hat = x - eps_approx(x, t, y, T)
        drift = -forward_drift(x, y, t_bar) + score_weight * score(x, x0_hat, y, t_bar, unit)
        x = x + drift * dt
        if noise_fn is not None:
            z = noise_fn()
            run.draws.append(z)
            x = x - sqrt_dt * z
        _checked(x, kind, t - 1)
        if keep_trajectory:
            run.trajectory.append(BridgeState(x.copy(), t - 1))
    return x


def sample_sde(
    y: np.ndarray,
    eps_approx: Approximator,
    schedule: BridgeSchedule,
    rng_seed: int,
    trial: int = 0,
    zero_noise: bool = False,
    keep_trajectory: bool = False,
) -> SamplerRun:
    """
    Stochastic reverse bridge sampler.

    The score uses X0_hat = x_t - eps_theta(x_t, t) and t/T clamped away
    from 1. zero_noise forces z = 0 and leaves a drift-only integrator.
    """
    T = schedule.T
    if T < MIN_SDE_STEPS:
        raise ConfigError({"T": "bad_steps"})
    y = _start(y)
    run = SamplerRun(SAMPLER_SDE, y, y, T, rng_seed, trial)
    noise_fn = None
    if zero_noise:
        noise_fn = lambda: np.zeros_like(y)  # noqa: E731
    else:
        rng = _noise(rng_seed, SAMPLER_SDE, trial)
        noise_fn = lambda: rng.standard_normal(y.shape)  # noqa: E731
    x = _reverse_loop(SAMPLER_SDE, y, eps_approx, schedule, 1.0, noise_fn, run, keep_trajectory)
    run.x0_hat = _checked(x - eps_approx(x, 1, y, T), SAMPLER_SDE, 0)
    return _finish(run, keep_trajectory)


def sample_pf_ode(
    y: np.ndarray,
    eps_approx: Approximator,
    schedule: BridgeSchedule,
    keep_trajectory: bool = False,
) -> SamplerRun:
    """Deterministic Euler integration of the probability-flow ODE (half score, no noise)."""
    T = schedule.T
    if T < MIN_SDE_STEPS:
        raise ConfigError({"T": "bad_steps"})
    y = _start(y)
    run = SamplerRun(SAMPLER_PF_ODE, y, y, T)
    x = _reverse_loop(SAMPLER_PF_ODE, y, eps_approx, schedule, 0.5, None, run, keep_trajectory)
    run.x0_hat = _checked(x - eps_approx(x, 1, y, T), SAMPLER_PF_ODE, 0)
    return _finish(run, keep_trajectory)


def run_sampler(
    kind: str,
    y: np.ndarray,
    eps_approx: Approximator,
    z_approx: Optional[Approximator],
    schedule: BridgeSchedule,
    rng_seed: int,
    trial: int = 0,
    keep_trajectory: bool = False,
) -> SamplerRun:
    """Dispatch to a sampler by name."""
    if kind == SAMPLER_DUAL:
        return sample_dual(
            y, eps_approx, z_approx, schedule, rng_seed, trial, keep_trajectory=keep_trajectory
        )
    if kind == SAMPLER_DUAL_EQ43:
        return sample_dual_eq43(
            y, eps_approx, z_approx, schedule, rng_seed, trial, keep_trajectory=keep_trajectory
        )
    if kind == SAMPLER_SDE:
        return sample_sde(y, eps_approx, schedule, rng_seed, trial, keep_trajectory=keep_trajectory)
    if kind == SAMPLER_PF_ODE:
        run = sample_pf_ode(y, eps_approx, schedule, keep_trajectory=keep_trajectory)
        run.rng_seed = rng_seed
        run.trial = trial
        return run
    raise ConfigError({"sampler": "unknown_sampler"})


def step_count_sweep(
    y_batch: np.ndarray,
    x0_batch: np.ndarray,
    eps_approx: Approximator,
    z_approx: Approximator,
    schedule: BridgeSchedule,
    step_list: Iterable[int],
    rng_seed: int,
    trials: int = 1,
    early_stop: bool = False,
    side: Optional[int] = None,
    peak: float = DEFAULT_PEAK,
) -> MetricsReport:
    """
    Run the dual sampler at several step counts and score every trial.

    By default each step count s re-discretizes the schedule to s steps and
    the approximators see t/s. With early_stop one T-step run is cut after
    s - 1 updates and X0_hat is read at t = T - s + 1.
    """
    steps = [int(s) for s in step_list]
    bad = [s for s in steps if s < MIN_DUAL_STEPS or s > schedule.T]
    if bad:
        raise ConfigError({"step_list": "bad_steps"})
    report = MetricsReport()
    for s in steps:
        outputs = []
        for trial in range(trials):
            if early_stop:
                run = sample_dual(
                    y_batch,
                    eps_approx,
                    z_approx,
                    schedule,
                    rng_seed,
                    trial,
                    stop_at=schedule.T - s + 1,
                )
            else:
                run = sample_dual(
                    y_batch, eps_approx, z_approx, schedule.with_steps(s), rng_seed, trial
                )
            outputs.append(run.x0_hat)
        rows = score_trials(SAMPLER_DUAL, s, outputs, x0_batch, side, peak)
        report.extend(rows)
        _LOGGER.info("sweep s=%d: psnr %.4g dB", s, rows[0].psnr_db)
    return report


def compare_dual_variants(
    y: np.ndarray,
    eps_approx: Approximator,
    z_approx: Approximator,
    schedule: BridgeSchedule,
    rng_seed: int,
) -> Tuple[SamplerRun, SamplerRun, np.ndarray]:
    """Run both dual variants on the same input and draw; return the elementwise gap."""
    run_a = sample_dual(y, eps_approx, z_approx, schedule, rng_seed)
    run_b = sample_dual_eq43(y, eps_approx, z_approx, schedule, rng_seed)
    gap = run_a.x0_hat - run_b.x0_hat
    _LOGGER.info("dual vs dual-eq43 max |gap| = %.6g", float(np.max(np.abs(gap))))
    return run_a, run_b, gap


def dump_trajectory(run: SamplerRun, directory: str | Path) -> Path:
    """
    Write the trajectory as a DABT block, one row per state from x_T down.

    Batched states are flattened per row. The run.txt sidecar records the
    seed, sampler and T.
    """
    if not run.trajectory:
        raise ConfigError({"trajectory": "no_trajectory"})
    directory = Path(directory)
    rows = np.stack([state.x.ravel() for state in run.trajectory])
    path = write_bytes(directory / TRAJECTORY_FILE, encode_tensor_block(rows))
    write_manifest(
        directory / MANIFEST_FILE,
        {
            "sampler": run.sampler_kind,
            "seed": "" if run.rng_seed is None else run.rng_seed,
            "trial": run.trial,
            "T": run.trajectory[0].t_index,
            "steps_used": run.steps_used,
            "states": rows.shape[0],
            "dim": rows.shape[1],
        },
    )
    return path
