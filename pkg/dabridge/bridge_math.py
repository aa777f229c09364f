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
Brownian bridge mathematics.

The forward process is dX = -(X - Y)/(1 - t) dt + g(t) dW on t in (0, 1),
pinned to X(0) = X0 and X(1) = Y. Its marginal is Gaussian with mean
(1 - t) X0 + t Y and variance G(t) = (1 - t)^2 int_0^t g(s)^2/(1 - s)^2 ds.
Discrete time uses t_index in [0, T] and continuous time t = t_index / T.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable
from typing import Iterable
from typing import List
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .const import EPS_T
from .const import QUADRATURE_PANELS
from .const import STREAM_SAMPLE
from .exceptions import DomainError
from .exceptions import SingularityError
from .util import as_vector
from .util import check_same_shape
from .util import stream

_LOGGER = logging.getLogger(__name__)

NoiseFn = Callable[[np.ndarray], np.ndarray]


def _unit_g(s: np.ndarray) -> np.ndarray:
    """Constant unit noise."""
    return np.ones_like(s)


class BridgeSchedule:
    """Time discretization T and the noise function g with its G and B tables."""

    def __init__(self, T: int, g: Optional[NoiseFn] = None) -> None:
        """Build the schedule and precompute G(t/T) and B(t) for t = 0..T."""
        if int(T) != T or T < 1:
            raise DomainError(f"T must be a positive integer, got {T}")
        self._T: int = int(T)
        self._g: NoiseFn = g if g is not None else _unit_g
        self._unit: bool = g is None
        grid = np.arange(self._T + 1, dtype=np.float64) / self._T
        self._G_table: np.ndarray = np.array(
            [variance_G(float(t), self) for t in grid], dtype=np.float64
        )
        self._B_table: np.ndarray = np.array(
            [discrete_B(k, self) for k in range(self._T + 1)], dtype=np.float64
        )
        self._G_table.setflags(write=False)
        self._B_table.setflags(write=False)

    def __repr__(self) -> str:
        """Return a short description."""
        kind = "unit" if self._unit else "custom"
        return f"BridgeSchedule(T={self._T}, g={kind})"

    @property
    def T(self) -> int:
        """Return the number of time steps."""
        return self._T

    @property
    def dt(self) -> float:
        """Return the continuous step 1/T."""
        return 1.0 / self._T

    @property
    def g(self) -> NoiseFn:
        """Return the noise std function."""
        return self._g

    @property
    def is_unit(self) -> bool:
        """Return True when g is the constant 1."""
        return self._unit

    @property
    def G_table(self) -> np.ndarray:
        """Return G(t/T) for t = 0..T."""
        return self._G_table

    @property
    def B_table(self) -> np.ndarray:
        """Return B(t) for t = 0..T."""
        return self._B_table

    def t_bar(self, t_index: int) -> float:
        """Return the continuous time t_index / T."""
        return t_index / self._T

    def with_steps(self, T: int) -> "BridgeSchedule":
        """Return the same noise function re-discretized to T steps."""
        return BridgeSchedule(T, None if self._unit else self._g)


@dataclass(frozen=True, eq=False)
class BridgeState:
    """A point x of the process at integer time t_index."""

    x: np.ndarray
    t_index: int

    def __post_init__(self) -> None:
        """Refuse non-finite states."""
        if not np.all(np.isfinite(self.x)):
            raise DomainError(f"state at t={self.t_index} is not finite")


def _check_unit_interval(t: float, name: str = "t") -> None:
    """Raise DomainError unless 0 <= t <= 1."""
    if not (0.0 <= t <= 1.0) or math.isnan(t):
        raise DomainError(f"{name} must lie in [0, 1], got {t}")


def _check_open_interval(t: float) -> None:
    """Raise for t outside [EPS_T, 1 - EPS_T]."""
    _check_unit_interval(t)
    if t < EPS_T or t > 1.0 - EPS_T:
        raise SingularityError(f"t={t} is within {EPS_T} of a pinned endpoint")


def clamp_t(t: float) -> float:
    """Clamp t into [EPS_T, 1 - EPS_T]."""
    return min(max(t, EPS_T), 1.0 - EPS_T)


def variance_G(t: float, schedule: BridgeSchedule) -> float:
    """
    Return G(t) = (1 - t)^2 int_0^t g(s)^2 / (1 - s)^2 ds.

    g == 1 gives t(1 - t) exactly. Any other g is integrated with the
    composite trapezoid rule on QUADRATURE_PANELS fixed panels.
    """
    t = float(t)
    _check_unit_interval(t)
    if schedule.is_unit:
        return t * (1.0 - t)
    if t == 0.0 or t == 1.0:
        return 0.0
    s = np.linspace(0.0, t, QUADRATURE_PANELS + 1)
    gs = np.asarray(schedule.g(s), dtype=np.float64) * np.ones_like(s)
    integral = float(trapezoid(gs**2 / (1.0 - s) ** 2, s))
    return (1.0 - t) ** 2 * integral


def discrete_B_numerator(t_index: int, T: int) -> int:
    """Return t(T - t), the exact integer under the square root of B(t)."""
    return int(t_index) * (int(T) - int(t_index))


def discrete_B(t_index: int, schedule: BridgeSchedule) -> float:
    """Return B(t) = (1/T) sqrt(t (T - t))."""
    if int(t_index) != t_index or not 0 <= t_index <= schedule.T:
        raise DomainError(f"t_index must lie in [0, {schedule.T}], got {t_index}")
    return math.sqrt(discrete_B_numerator(t_index, schedule.T)) / schedule.T


def _column(t: float | np.ndarray, like: np.ndarray) -> float | np.ndarray:
    """Broadcast per-row times against (n, d) arrays."""
    if np.ndim(t) == 0:
        return float(t)
    t = np.asarray(t, dtype=np.float64)
    return t.reshape(t.shape + (1,) * (like.ndim - t.ndim))


def sample_marginal(
    x0: np.ndarray,
    y: np.ndarray,
    t: float | np.ndarray,
    noise: np.ndarray,
    schedule: BridgeSchedule,
) -> np.ndarray:
    """
    Return (1 - t) x0 + t y + sqrt(G(t)) noise.

    t may be a scalar or one time per row of a batch. The endpoints are
    well defined: t = 0 gives x0 and t = 1 gives y exactly.
    """
    x0 = as_vector(x0, "x0")
    y = as_vector(y, "y")
    noise = as_vector(noise, "noise")
    check_same_shape(x0=x0, y=y, noise=noise)
    if np.ndim(t) == 0:
        G = variance_G(float(t), schedule)
    elif schedule.is_unit:
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0.0) or np.any(t > 1.0) or np.any(np.isnan(t)):
            raise DomainError("t must lie in [0, 1]")
        G = t * (1.0 - t)
    else:
        G = np.array([variance_G(float(s), schedule) for s in np.ravel(t)])
        G = G.reshape(np.shape(t))
    tc = _column(t, x0)
    Gc = _column(G, x0)
    return (1.0 - tc) * x0 + tc * y + np.sqrt(Gc) * noise


def score(
    x_t: np.ndarray,
    x0: np.ndarray,
    y: np.ndarray,
    t: float,
    schedule: BridgeSchedule,
) -> np.ndarray:
    """Return grad log p(x_t, t) = -(x_t - (1 - t) x0 - t y) / G(t)."""
    t = float(t)
    _check_open_interval(t)
    x_t = as_vector(x_t, "x_t")
    x0 = as_vector(x0, "x0")
    y = as_vector(y, "y")
    check_same_shape(x_t=x_t, x0=x0, y=y)
    return -(x_t - (1.0 - t) * x0 - t * y) / variance_G(t, schedule)


def forward_drift(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    """
    Return the forward drift -(x - y) / (1 - t).

    Defined on the closed interval [0, 1 - EPS_T]. The endpoint 1 - EPS_T,
    which clamp_t returns for t = 1, is accepted and yields a finite drift
    of magnitude |x - y| / EPS_T. Any t above it raises SingularityError.
    """
    t = float(t)
    _check_unit_interval(t)
    if t > 1.0 - EPS_T:
        raise SingularityError(f"forward drift is singular at t={t}")
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    check_same_shape(x=x, y=y)
    return -(x - y) / (1.0 - t)


def simulate_forward_sde(
    x0: np.ndarray,
    y: np.ndarray,
    schedule: BridgeSchedule,
    rng_seed: int,
    n_paths: Optional[int] = None,
    keep: Optional[Iterable[int]] = None,
) -> List[BridgeState]:
    """
    Simulate the forward SDE with Euler-Maruyama.

    x_{k+1} = x_k + drift(x_k, y, k/T)/T + g(k/T) sqrt(1/T) xi_k. The last step
    is taken at t = (T - 1)/T and x_T is then pinned to y. With n_paths set,
    every state is an (n_paths, d) batch of independent paths. keep limits
    the returned states to the listed time indices.
    """
    T = schedule.T
    if T < 2:
        raise DomainError(f"simulate_forward_sde needs T >= 2, got {T}")
    x0 = as_vector(x0, "x0")
    y = as_vector(y, "y")
    check_same_shape(x0=x0, y=y)
    keep_set = set(range(T + 1)) if keep is None else set(keep)
    rng = stream(rng_seed, STREAM_SAMPLE, 0)

    shape = x0.shape if n_paths is None else (int(n_paths),) + x0.shape
    x = np.broadcast_to(x0, shape).astype(np.float64, copy=True)
    h = schedule.dt
    sqrt_h = math.sqrt(h)

    states: List[BridgeState] = []
    if 0 in keep_set:
        states.append(BridgeState(x.copy(), 0))
    for k in range(T):
        t = k * h
        g = float(np.asarray(schedule.g(np.array([t])))[0])
        xi = rng.standard_normal(shape)
        x = x + forward_drift(x, y, t) * h + g * sqrt_h * xi
        if k + 1 == T:
            x = np.broadcast_to(y, shape).astype(np.float64, copy=True)
        if k + 1 in keep_set:
            states.append(BridgeState(x.copy(), k + 1))

    _LOGGER.debug("Simulated %s forward path(s) over T=%d", n_paths or 1, T)
    return states
