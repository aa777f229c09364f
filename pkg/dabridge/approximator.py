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
Noise approximators.

eps_theta predicts X_t - X_0 so that X0_hat = X_t - eps_theta(X_t, t);
Z_phi predicts the unit Gaussian z that generated X_t from the bridge
marginal. Both sit behind the Approximator interface so samplers can run
on small dense networks or on closed-form oracles.
"""

from __future__ import annotations

from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
import logging
import math
from pathlib import Path
import struct
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np

from .bridge_math import BridgeSchedule
from .const import ACTIVATION_RELU
from .const import ACTIVATION_TAGS
from .const import ACTIVATION_TANH
from .const import CHECKPOINT_MAGIC
from .const import CHECKPOINT_VERSION
from .const import DEFAULT_ACTIVATION
from .const import DEFAULT_FREQUENCIES
from .const import DEFAULT_TIME_EMBEDDING
from .const import EMBEDDING_SCALAR
from .const import EMBEDDING_SINUSOIDAL
from .const import EMBEDDING_TAGS
from .const import KIND_ANALYTIC_FORWARD
from .const import KIND_ANALYTIC_POSTERIOR
from .const import KIND_ANALYTIC_REVERSE
from .const import KIND_MLP
from .const import KIND_TAGS
from .const import ROLE_FORWARD
from .const import ROLE_REVERSE
from .const import ROLE_TAGS
from .const import STREAM_INIT
from .exceptions import ConfigError
from .exceptions import DomainError
from .exceptions import FormatError
from .exceptions import ShapeError
from .exceptions import SingularityError
from .formats import ByteReader
from .formats import pack_floats
from .formats import pack_u32
from .formats import write_bytes
from .util import as_vector
from .util import stream

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PairedSample:
    """A source-domain ground truth x0 and its conditioning input y."""

    x0: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        """Check finiteness and matching dimensions."""
        x0 = as_vector(self.x0, "x0")
        y = as_vector(self.y, "y")
        if x0.shape != y.shape:
            raise ShapeError(f"x0 has shape {x0.shape} but y has shape {y.shape}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        """Return the data dimension."""
        return int(self.x0.shape[-1])


@dataclass
class MlpConfig:
    """Architecture of a dense approximator."""

    layer_widths: List[int]
    activation: str = DEFAULT_ACTIVATION
    time_embedding: str = DEFAULT_TIME_EMBEDDING
    frequencies: int = DEFAULT_FREQUENCIES
    conditional: bool = False
    init_seed: int = 0
    zero_final: bool = True

    @property
    def embedding_dim(self) -> int:
        """Return the width of the time encoding."""
        if self.time_embedding == EMBEDDING_SCALAR:
            return 1
        return 2 * self.frequencies

    @property
    def data_dim(self) -> int:
        """Return the data dimension (the output width)."""
        return int(self.layer_widths[-1])

    def validate(self) -> None:
        """Raise ConfigError when the widths do not fit the encodings."""
        errors = {}
        if len(self.layer_widths) < 2 or any(w < 1 for w in self.layer_widths):
            errors["layer_widths"] = "bad_widths"
        elif self.activation not in (ACTIVATION_TANH, ACTIVATION_RELU):
            errors["activation"] = "unknown_activation"
        elif self.time_embedding not in (EMBEDDING_SCALAR, EMBEDDING_SINUSOIDAL):
            errors["time_embedding"] = "unknown_embedding"
        elif self.time_embedding == EMBEDDING_SINUSOIDAL and self.frequencies < 1:
            errors["frequencies"] = "bad_minimum"
        else:
            expected = self.data_dim + self.embedding_dim
            if self.conditional:
                expected += self.data_dim
            if self.layer_widths[0] != expected:
                errors["layer_widths"] = "bad_input_width"
        if errors:
            raise ConfigError(errors)

    @classmethod
    def for_data(
        cls,
        dim: int,
        hidden: List[int],
        activation: str = DEFAULT_ACTIVATION,
        time_embedding: str = DEFAULT_TIME_EMBEDDING,
        frequencies: int = DEFAULT_FREQUENCIES,
        conditional: bool = False,
        init_seed: int = 0,
        zero_final: bool = True,
    ) -> "MlpConfig":
        """Build the widths [input, *hidden, dim] for data of dimension dim."""
        emb = 1 if time_embedding == EMBEDDING_SCALAR else 2 * frequencies
        first = dim + emb + (dim if conditional else 0)
        return cls(
            layer_widths=[first, *hidden, dim],
            activation=activation,
            time_embedding=time_embedding,
            frequencies=frequencies,
            conditional=conditional,
            init_seed=init_seed,
            zero_final=zero_final,
        )


class DenseNetwork:
    """
    Fully connected network with a linear output layer.

    Parameters live in one flat vector, laid out per layer as the weight
    matrix (fan_in x fan_out, row-major) followed by the bias.
    """

    def __init__(self, widths: List[int], activation: str = ACTIVATION_TANH) -> None:
        """Record the layer shapes."""
        self.widths: List[int] = [int(w) for w in widths]
        self.activation: str = activation
        self._shapes: List[Tuple[int, int]] = list(zip(self.widths[:-1], self.widths[1:]))

    @property
    def n_params(self) -> int:
        """Return the number of weights and biases."""
        return sum(i * o + o for i, o in self._shapes)

    def unpack(self, params: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Split a flat vector into (W, b) views."""
        if params.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {params.shape}")
        layers = []
        offset = 0
        for fan_in, fan_out in self._shapes:
            W = params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = params[offset : offset + fan_out]
            offset += fan_out
            layers.append((W, b))
        return layers

    def init_params(self, seed: int, zero_final: bool) -> np.ndarray:
        """Uniform fan-in scaled weights, zero biases."""
        rng = stream(seed, STREAM_INIT, *self.widths)
        params = np.zeros(self.n_params, dtype=np.float64)
        last = len(self._shapes) - 1
        for i, (W, _b) in enumerate(self.unpack(params)):
            if i == last and zero_final:
                continue
            limit = math.sqrt(6.0 / W.shape[0])
            W[...] = rng.uniform(-limit, limit, size=W.shape)
        return params

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == ACTIVATION_RELU:
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def _act_grad(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        if self.activation == ACTIVATION_RELU:
            return (z > 0.0).astype(np.float64)
        return 1.0 - a * a

    def forward(
        self, params: np.ndarray, inputs: np.ndarray
    ) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray, np.ndarray]]]:
        """Run the network on an (n, fan_in) batch and keep the backward cache."""
        if inputs.shape[-1] != self.widths[0]:
            raise ShapeError(
                f"network expects inputs of width {self.widths[0]}, got {inputs.shape[-1]}"
            )
        cache = []
        a = inputs
        layers = self.unpack(params)
        for i, (W, b) in enumerate(layers):
            z = a @ W + b
            if i < len(layers) - 1:
                out = self._act(z)
            else:
                out = z
            cache.append((a, z, out))
            a = out
        return a, cache

    def backward(
        self,
        params: np.ndarray,
        cache: List[Tuple[np.ndarray, np.ndarray, np.ndarray]],
        upstream: np.ndarray,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return (d<out, upstream>/dparams, d<out, upstream>/dinputs)."""
        grads = np.zeros_like(params)
        grad_layers = self.unpack(grads)
        layers = self.unpack(params)
        delta = upstream
        for i in range(len(layers) - 1, -1, -1):
            a_in, z, out = cache[i]
            if i < len(layers) - 1:
                delta = delta * self._act_grad(z, out)
            gW, gb = grad_layers[i]
            gW[...] = a_in.T @ delta
            gb[...] = delta.sum(axis=0)
            delta = delta @ layers[i][0].T
        return grads, delta


class Approximator(ABC):
    """Map (x_t, t_index[, y]) to a vector of the same dimension as x_t."""

    kind: str = ""

    def __init__(self, dim: int, T: int, role: str) -> None:
        """Set the common fields."""
        self.dim: int = int(dim)
        self.T: int = int(T)
        self.role: str = role

    @property
    def params(self) -> np.ndarray:
        """Return the flat parameter vector (empty for oracles)."""
        return np.zeros(0, dtype=np.float64)

    @property
    def conditional(self) -> bool:
        """Return True when evaluate consumes y."""
        return False

    def _prepare(
        self, x_t: np.ndarray, t_index: int | np.ndarray, T: Optional[int]
    ) -> Tuple[np.ndarray, np.ndarray, int, bool]:
        """Return a 2-D batch, per-row t indices, the time grid and a squeeze flag."""
        x = np.asarray(x_t, dtype=np.float64)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"{self.kind} expects dimension {self.dim}, got {x.shape[-1]}")
        steps = self.T if T is None else int(T)
        t = np.broadcast_to(np.asarray(t_index, dtype=np.int64), (x.shape[0],))
        if np.any(t < 0) or np.any(t > steps):
            raise DomainError(f"t_index must lie in [0, {steps}]")
        return x, t, steps, squeeze

    @abstractmethod
    def evaluate(
        self,
        x_t: np.ndarray,
        t_index: int | np.ndarray,
        y: Optional[np.ndarray] = None,
        T: Optional[int] = None,
    ) -> np.ndarray:
        """Evaluate at x_t; T overrides the time grid for re-discretized runs."""

    def __call__(self, x_t, t_index, y=None, T=None) -> np.ndarray:
        """Alias for evaluate."""
        return self.evaluate(x_t, t_index, y, T)


class MlpApproximator(Approximator):
    """Dense network approximator trained by gradient descent."""

    kind = KIND_MLP

    def __init__(
        self,
        config: MlpConfig,
        T: int,
        role: str = ROLE_FORWARD,
        params: Optional[np.ndarray] = None,
    ) -> None:
        """Build the network and draw (or adopt) its parameters."""
        config.validate()
        super().__init__(config.data_dim, T, role)
        self.config: MlpConfig = config
        self.network = DenseNetwork(config.layer_widths, config.activation)
        if params is None:
            params = self.network.init_params(config.init_seed, config.zero_final)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.network.n_params,):
            raise ShapeError(
                f"expected {self.network.n_params} parameters, got {params.shape[0]}"
            )
        self._params: np.ndarray = params.copy()

    @property
    def params(self) -> np.ndarray:
        """Return the flat parameter vector."""
        return self._params

    @params.setter
    def params(self, value: np.ndarray) -> None:
        """Replace the parameters (single writer)."""
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._params.shape:
            raise ShapeError(f"expected {self._params.shape}, got {value.shape}")
        self._params = value.copy()

    @property
    def conditional(self) -> bool:
        """Return True when y is concatenated to the input."""
        return self.config.conditional

    def encode_time(self, t_bar: np.ndarray) -> np.ndarray:
        """Encode continuous time per row."""
        t_bar = t_bar.reshape(-1, 1)
        if self.config.time_embedding == EMBEDDING_SCALAR:
            return t_bar
        freqs = math.pi * 2.0 ** np.arange(self.config.frequencies, dtype=np.float64)
        angles = t_bar * freqs
        return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)

    def encode(
        self,
        x_t: np.ndarray,
        t_index: int | np.ndarray,
        y: Optional[np.ndarray] = None,
        T: Optional[int] = None,
    ) -> Tuple[np.ndarray, bool]:
        """Build the network input [x_t, time(, y)]."""
        x, t, steps, squeeze = self._prepare(x_t, t_index, T)
        parts = [x, self.encode_time(t / steps)]
        if self.conditional:
            if y is None:
                raise ShapeError("conditional approximator needs y")
            yb = np.broadcast_to(np.atleast_2d(np.asarray(y, dtype=np.float64)), x.shape)
            parts.append(yb)
        return np.concatenate(parts, axis=1), squeeze

    def evaluate(self, x_t, t_index, y=None, T=None) -> np.ndarray:
        """Run the dense forward pass."""
        inputs, squeeze = self.encode(x_t, t_index, y, T)
        out, _cache = self.network.forward(self._params, inputs)
        return out[0] if squeeze else out

    def gradient(
        self,
        x_t: np.ndarray,
        t_index: int | np.ndarray,
        y: Optional[np.ndarray],
        upstream: np.ndarray,
        T: Optional[int] = None,
    ) -> np.ndarray:
        """Return the parameter gradient of sum(<output, upstream>) over the batch."""
        inputs, _squeeze = self.encode(x_t, t_index, y, T)
        upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if upstream.shape != (inputs.shape[0], self.dim):
            raise ShapeError(
                f"upstream has shape {upstream.shape}, expected {(inputs.shape[0], self.dim)}"
            )
        _out, cache = self.network.forward(self._params, inputs)
        grads, _dx = self.network.backward(self._params, cache, upstream)
        return grads


class ForwardOracle(Approximator):
    """Exact eps for one known pair: x_t - x0."""

    kind = KIND_ANALYTIC_FORWARD

    def __init__(self, pair: PairedSample, T: int = 0) -> None:
        """Fix the pair at construction; the output does not depend on t."""
        super().__init__(pair.dim, T, ROLE_FORWARD)
        self.pair = pair

    def evaluate(self, x_t, t_index, y=None, T=None) -> np.ndarray:
        """Return x_t - x0."""
        x = np.asarray(x_t, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ShapeError(f"{self.kind} expects dimension {self.dim}, got {x.shape[-1]}")
        return x - self.pair.x0


class ReverseOracle(Approximator):
    """Exact z for one known pair: (x_t - (1 - t) x0 - t y) / B(t)."""

    kind = KIND_ANALYTIC_REVERSE

    def __init__(self, pair: PairedSample, schedule: BridgeSchedule) -> None:
        """Fix the pair and the time grid at construction."""
        super().__init__(pair.dim, schedule.T, ROLE_REVERSE)
        self.pair = pair

    def evaluate(self, x_t, t_index, y=None, T=None) -> np.ndarray:
        """Invert the bridge marginal for the generating noise."""
        x, t, steps, squeeze = self._prepare(x_t, t_index, T)
        if np.any(t == 0) or np.any(t == steps):
            raise SingularityError("reverse oracle is singular at t=0 and t=T (B=0)")
        t_bar = (t / steps).reshape(-1, 1)
        B = (np.sqrt(t * (steps - t)) / steps).reshape(-1, 1)
        out = (x - (1.0 - t_bar) * self.pair.x0 - t_bar * self.pair.y) / B
        return out[0] if squeeze else out


class PosteriorOracle(Approximator):
    """
    Population-optimal eps for Gaussian pairs x0 ~ N(mu, sigma^2 I), y = x0 + offset.

    x_t = x0 + t offset + sqrt(G(t)) e, so E[x0 | x_t] is the usual
    conjugate-Gaussian shrinkage towards mu.
    """

    kind = KIND_ANALYTIC_POSTERIOR

    def __init__(self, mu, sigma, offset, dim: int, T: int) -> None:
        """Store the prior and the pairing offset."""
        super().__init__(dim, T, ROLE_FORWARD)
        self.mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), (dim,))
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (dim,))
        self.offset = np.broadcast_to(np.asarray(offset, dtype=np.float64), (dim,))
        if np.any(self.sigma <= 0):
            raise DomainError("sigma must be positive")

    def posterior_mean(self, x_t, t_index, T=None) -> np.ndarray:
        """Return E[x0 | x_t] at t_index."""
        x, t, steps, squeeze = self._prepare(x_t, t_index, T)
        t_bar = (t / steps).reshape(-1, 1)
        G = t_bar * (1.0 - t_bar)
        s2 = self.sigma**2
        out = self.mu + s2 / (s2 + G) * (x - t_bar * self.offset - self.mu)
        return out[0] if squeeze else out

    def evaluate(self, x_t, t_index, y=None, T=None) -> np.ndarray:
        """Return x_t - E[x0 | x_t]."""
        return np.asarray(x_t, dtype=np.float64) - self.posterior_mean(x_t, t_index, T)


def mlp_evaluate(
    approx: Approximator,
    x_t: np.ndarray,
    t_index: int | np.ndarray,
    y: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Dense forward pass of an MLP approximator."""
    if not isinstance(approx, MlpApproximator):
        raise ConfigError({"kind": "not_mlp"})
    return approx.evaluate(x_t, t_index, y)


def mlp_gradient(
    approx: Approximator,
    x_t: np.ndarray,
    t_index: int | np.ndarray,
    y: Optional[np.ndarray],
    upstream: np.ndarray,
) -> np.ndarray:
    """Reverse-mode parameter gradient of <output, upstream>."""
    if not isinstance(approx, MlpApproximator):
        raise ConfigError({"kind": "not_mlp"})
    return approx.gradient(x_t, t_index, y, upstream)


def analytic_forward_oracle(pair: PairedSample, T: int = 0) -> ForwardOracle:
    """Return the exact forward approximator for a single known pair."""
    return ForwardOracle(pair, T)


def analytic_reverse_oracle(pair: PairedSample, schedule: BridgeSchedule) -> ReverseOracle:
    """Return the exact reverse approximator for a single known pair."""
    return ReverseOracle(pair, schedule)


def _invert(tags: dict, value: int, what: str, offset: int) -> str:
    """Map a stored tag back to its name."""
    for name, tag in tags.items():
        if tag == value:
            return name
    raise FormatError(f"unknown {what} tag {value}", offset)


def encode_checkpoint(approx: MlpApproximator) -> bytes:
    """
    Encode an MLP approximator.

    Layout: b"DABR", u32 version, u32 kind tag, then the config block
    (u32 role, u32 T, u32 n_widths, u32 widths..., u32 activation,
    u32 embedding, u32 frequencies, u32 conditional, u32 zero_final,
    i64 init_seed, u64 n_params) and the float64 parameters.
    """
    if not isinstance(approx, MlpApproximator):
        raise ConfigError({"kind": "not_mlp"})
    cfg = approx.config
    block = pack_u32(ROLE_TAGS[approx.role], approx.T, len(cfg.layer_widths))
    block += pack_u32(*cfg.layer_widths)
    block += pack_u32(
        ACTIVATION_TAGS[cfg.activation],
        EMBEDDING_TAGS[cfg.time_embedding],
        cfg.frequencies,
        int(cfg.conditional),
        int(cfg.zero_final),
    )
    block += struct.pack("<qQ", cfg.init_seed, approx.params.size)
    return (
        CHECKPOINT_MAGIC
        + pack_u32(CHECKPOINT_VERSION, KIND_TAGS[approx.kind])
        + block
        + pack_floats(approx.params)
    )


def decode_checkpoint(data: bytes) -> MlpApproximator:
    """Decode bytes written by encode_checkpoint."""
    reader = ByteReader(data)
    reader.expect_magic(CHECKPOINT_MAGIC)
    reader.expect_version(CHECKPOINT_VERSION)
    at = reader.offset
    kind = _invert(KIND_TAGS, reader.u32("kind"), "kind", at)
    if kind != KIND_MLP:
        raise FormatError(f"only {KIND_MLP} checkpoints carry parameters", at)
    at = reader.offset
    role = _invert(ROLE_TAGS, reader.u32("role"), "role", at)
    T = reader.u32("T")
    n_widths = reader.u32("n_widths")
    widths = list(reader.unpack("I" * n_widths, "layer widths"))
    at = reader.offset
    activation = _invert(ACTIVATION_TAGS, reader.u32("activation"), "activation", at)
    at = reader.offset
    embedding = _invert(EMBEDDING_TAGS, reader.u32("embedding"), "embedding", at)
    frequencies = reader.u32("frequencies")
    conditional = bool(reader.u32("conditional"))
    zero_final = bool(reader.u32("zero_final"))
    init_seed, n_params = reader.unpack("qQ", "init_seed/n_params")
    params = reader.floats(int(n_params), "parameters")
    reader.expect_end()
    config = MlpConfig(
        layer_widths=widths,
        activation=activation,
        time_embedding=embedding,
        frequencies=frequencies,
        conditional=conditional,
        init_seed=int(init_seed),
        zero_final=zero_final,
    )
    return MlpApproximator(config, T, role, params)


def save_checkpoint(path: str | Path, approx: MlpApproximator) -> Path:
    """Write a DABR checkpoint."""
    _LOGGER.info("Saving %s checkpoint to %s", approx.role, path)
    return write_bytes(path, encode_checkpoint(approx))


def load_checkpoint(path: str | Path) -> MlpApproximator:
    """Read a DABR checkpoint."""
    return decode_checkpoint(Path(path).read_bytes())
