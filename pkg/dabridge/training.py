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
Training loops for the forward (eps_theta) and reverse (Z_phi) approximators.

Both objectives draw t and a unit Gaussian per sample, build
x_t = (1 - t/T) x0 + (t/T) y + B(t) e and regress a residual:
x_t - x0 - eps_theta(x_t, t) for the forward net, e - Z_phi(x_t, t) for the
reverse net. The forward net draws t from 1..T, the reverse net from
1..T-1 so that B(t) > 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from dataclasses import field
import logging
from pathlib import Path
import time
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np
from tqdm import tqdm

from .approximator import Approximator
from .approximator import MlpApproximator
from .bridge_math import BridgeSchedule
from .bridge_math import sample_marginal
from .const import ADAM_BETA1
from .const import ADAM_BETA2
from .const import ADAM_EPS
from .const import CONF_BATCH_SIZE
from .const import CONF_LEARNING_RATE
from .const import CONF_LOSS_NORM
from .const import CONF_OPTIMIZER
from .const import CONF_SEED
from .const import CONF_STEPS
from .const import CONF_T
from .const import DEFAULT_BATCH_SIZE
from .const import DEFAULT_LEARNING_RATE
from .const import DEFAULT_LOSS_NORM
from .const import DEFAULT_OPTIMIZER
from .const import DEFAULT_SEED
from .const import DEFAULT_STEPS
from .const import DEFAULT_T
from .const import LOG_EVERY
from .const import LOSS_CURVE_HEADER
from .const import LOSS_L1
from .const import LOSS_NORMS
from .const import MAX_LOSS
from .const import OPTIMIZER_ADAM
from .const import OPTIMIZERS
from .const import ROLE_FORWARD
from .const import ROLE_REVERSE
from .const import ROLE_TAGS
from .const import STREAM_TRAIN
from .datasets import PairedDataset
from .exceptions import ConfigError
from .exceptions import DivergenceError
from .util import stream

_LOGGER = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimizer and objective settings of one training run."""

    batch_size: int = DEFAULT_BATCH_SIZE
    steps: int = DEFAULT_STEPS
    learning_rate: float = DEFAULT_LEARNING_RATE
    optimizer: str = DEFAULT_OPTIMIZER
    loss_norm: str = DEFAULT_LOSS_NORM
    seed: int = DEFAULT_SEED
    T: int = DEFAULT_T

    def validate(self) -> None:
        """Collect every bad field before raising."""
        errors: Dict[str, str] = {}
        if self.batch_size < 1:
            errors[CONF_BATCH_SIZE] = "bad_minimum"
        if self.steps < 0:
            errors[CONF_STEPS] = "bad_steps"
        if not self.learning_rate > 0:
            errors[CONF_LEARNING_RATE] = "bad_learning_rate"
        if self.optimizer not in OPTIMIZERS:
            errors[CONF_OPTIMIZER] = "unknown_optimizer"
        if self.loss_norm not in LOSS_NORMS:
            errors[CONF_LOSS_NORM] = "unknown_loss_norm"
        if self.seed < 0:
            errors[CONF_SEED] = "bad_seed"
        if self.T < 2:
            errors[CONF_T] = "bad_T"
        if errors:
            raise ConfigError(errors)


@dataclass
class OptimizerState:
    """Step counter and Adam moments."""

    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None


@dataclass
class LossPoint:
    """One row of the loss curve."""

    step: int
    loss: float
    wall_ms: float


@dataclass
class TrainResult:
    """The trained approximator and its loss curve."""

    approx: Approximator
    curve: List[LossPoint] = field(default_factory=list)
    state: OptimizerState = field(default_factory=OptimizerState)


def _residual_loss(residual: np.ndarray, loss_norm: str) -> Tuple[float, np.ndarray]:
    """Return the batch loss and its gradient with respect to the residual."""
    n = residual.shape[0]
    if loss_norm == LOSS_L1:
        loss = float(np.sum(np.abs(residual)) / n)
        return loss, np.sign(residual) / n
    loss = float(np.sum(residual * residual) / n)
    return loss, 2.0 * residual / n


def _bridge_batch(
    x0: np.ndarray,
    y: np.ndarray,
    t_index: np.ndarray,
    noise: np.ndarray,
    schedule: BridgeSchedule,
) -> np.ndarray:
    """Build x_t so that the noise scale equals B(t) per row."""
    t_bar = t_index / schedule.T
    if not schedule.is_unit:
        G = schedule.G_table[t_index]
        B = schedule.B_table[t_index]
        scale = np.where(G > 0, B / np.sqrt(np.where(G > 0, G, 1.0)), 1.0)
        noise = noise * scale[:, None]
    return sample_marginal(x0, y, t_bar, noise, schedule)


def _objective(
    batch: PairedDataset,
    approx: Approximator,
    schedule: BridgeSchedule,
    rng_stream: np.random.Generator,
    which: str,
    loss_norm: str,
    step: int,
) -> Tuple[float, np.ndarray]:
    n = len(batch)
    high = schedule.T + 1 if which == ROLE_FORWARD else schedule.T
    t_index = rng_stream.integers(1, high, size=n)
    noise = rng_stream.standard_normal(batch.x0.shape)
    x_t = _bridge_batch(batch.x0, batch.y, t_index, noise, schedule)
    out = approx.evaluate(x_t, t_index, batch.y, schedule.T)
    if which == ROLE_FORWARD:
        residual = x_t - batch.x0 - out
    else:
        residual = noise - out
    loss, d_residual = _residual_loss(residual, loss_norm)

    # d loss / d out = -d loss / d residual
    upstream = -d_residual
    if isinstance(approx, MlpApproximator):
        grads = approx.gradient(x_t, t_index, batch.y, upstream, schedule.T)
    else:
        grads = np.zeros(0, dtype=np.float64)

    if not np.isfinite(loss) or loss > MAX_LOSS or not np.all(np.isfinite(grads)):
        worst = int(np.argmax(np.sum(residual * residual, axis=1)))
        raise DivergenceError(
            step,
            loss,
            int(t_index[worst]),
            {
                "param_norm": float(np.linalg.norm(approx.params)),
                "grad_norm": float(np.linalg.norm(grads)),
                "residual_norm": float(np.linalg.norm(residual)),
            },
        )
    return loss, grads


def forward_loss(
    batch: PairedDataset,
    eps_approx: Approximator,
    schedule: BridgeSchedule,
    rng_stream: np.random.Generator,
    loss_norm: str = LOSS_NORMS[0],
    step: int = 0,
) -> Tuple[float, np.ndarray]:
    """
    Forward objective on one minibatch.

    Returns the loss and the parameter gradient (empty for oracles).
    """
    return _objective(batch, eps_approx, schedule, rng_stream, ROLE_FORWARD, loss_norm, step)


def reverse_loss(
    batch: PairedDataset,
    z_approx: Approximator,
    schedule: BridgeSchedule,
    rng_stream: np.random.Generator,
    loss_norm: str = LOSS_NORMS[0],
    step: int = 0,
) -> Tuple[float, np.ndarray]:
    """Reverse objective on one minibatch; t is drawn from 1..T-1."""
    return _objective(batch, z_approx, schedule, rng_stream, ROLE_REVERSE, loss_norm, step)


def optimizer_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: OptimizerState,
    config: TrainConfig,
) -> Tuple[np.ndarray, OptimizerState]:
    """Apply one SGD or bias-corrected Adam update and return new params and state."""
    lr = config.learning_rate
    step = state.step + 1
    if config.optimizer != OPTIMIZER_ADAM:
        return params - lr * grads, OptimizerState(step, state.m, state.v)

    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = m / (1.0 - ADAM_BETA1**step)
    v_hat = v / (1.0 - ADAM_BETA2**step)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return new_params, OptimizerState(step, m, v)


def train(
    dataset: PairedDataset,
    approx: MlpApproximator,
    config: TrainConfig,
    which: str,
    progress: bool = False,
) -> TrainResult:
    """
    Run config.steps optimizer steps on minibatches drawn with replacement.

    Each role has its own train substream, so forward and reverse runs do
    not depend on one another or on the order they are run in.
    """
    config.validate()
    if which not in (ROLE_FORWARD, ROLE_REVERSE):
        raise ConfigError({"which": "unknown_role"})
    if approx.role != which:
        raise ConfigError({"which": "role_mismatch"})
    if len(dataset) < 1:
        raise ConfigError({"dataset": "empty_dataset"})
    if dataset.dim != approx.dim:
        raise ConfigError({"dataset": "dim_mismatch"})

    schedule = BridgeSchedule(config.T)
    objective = forward_loss if which == ROLE_FORWARD else reverse_loss
    rng = stream(config.seed, STREAM_TRAIN, ROLE_TAGS[which])
    result = TrainResult(approx)
    start = time.perf_counter()

    _LOGGER.info(
        "Training %s approximator: %d steps, batch %d, %s lr=%g",
        which,
        config.steps,
        config.batch_size,
        config.optimizer,
        config.learning_rate,
    )
    for step in tqdm(range(1, config.steps + 1), desc=which, disable=not progress):
        idx = rng.integers(0, len(dataset), size=config.batch_size)
        loss, grads = objective(
            dataset.subset(idx), approx, schedule, rng, config.loss_norm, step
        )
        approx.params, result.state = optimizer_step(
            approx.params, grads, result.state, config
        )
        if step == 1 or step % LOG_EVERY == 0 or step == config.steps:
            wall_ms = (time.perf_counter() - start) * 1000.0
            result.curve.append(LossPoint(step, loss, wall_ms))
            _LOGGER.info("%s step %d: loss %.6g", which, step, loss)
    return result


def write_loss_curve(path: str | Path, curve: List[LossPoint]) -> Path:
    """Write step, loss and wall_ms rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(LOSS_CURVE_HEADER)
        for point in curve:
            writer.writerow([point.step, f"{point.loss:.6g}", f"{point.wall_ms:.6g}"])
    _LOGGER.debug("Wrote loss curve %s", path)
    return path


def per_t_loss_histogram(
    dataset: PairedDataset,
    approx: Approximator,
    schedule: BridgeSchedule,
    which: str,
    seed: int,
    loss_norm: str = LOSS_NORMS[0],
) -> np.ndarray:
    """
    Mean per-sample loss at each t over the whole dataset.

    Entry t holds the loss at time index t; indices the objective never
    draws are NaN.
    """
    losses = np.full(schedule.T + 1, np.nan)
    high = schedule.T if which == ROLE_FORWARD else schedule.T - 1
    for t in range(1, high + 1):
        rng = stream(seed, STREAM_TRAIN, ROLE_TAGS[which], schedule.T, t)
        t_index = np.full(len(dataset), t, dtype=np.int64)
        noise = rng.standard_normal(dataset.x0.shape)
        x_t = _bridge_batch(dataset.x0, dataset.y, t_index, noise, schedule)
        out = approx.evaluate(x_t, t_index, dataset.y, schedule.T)
        residual = x_t - dataset.x0 - out if which == ROLE_FORWARD else noise - out
        losses[t], _grad = _residual_loss(residual, loss_norm)
    return losses
