# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""dabridge exceptions."""

from __future__ import annotations

from typing import Dict


class DABridgeError(Exception):
    """Base class for dabridge errors."""


class DomainError(DABridgeError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(DABridgeError, ValueError):
    """Vector dimensions do not agree."""


class SingularityError(DABridgeError, ZeroDivisionError):
    """Operation evaluated at a point where it blows up."""


class ConfigError(DABridgeError):
    """
    Invalid configuration.

    errors maps a config field to an error code from strings.json, the same
    way a config flow reports errors per field.
    """

    def __init__(self, errors: Dict[str, str], message: str | None = None) -> None:
        """Store the per-field error codes."""
        self.errors: Dict[str, str] = dict(errors)
        if message is None:
            message = ", ".join(f"{k}: {v}" for k, v in sorted(self.errors.items()))
        super().__init__(message)


class FormatError(DABridgeError):
    """Binary file has bad magic, bad version or is truncated."""

    def __init__(self, message: str, offset: int) -> None:
        """Record the byte offset where decoding failed."""
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class DivergenceError(DABridgeError):
    """Training loss became non-finite or exploded."""

    def __init__(
        self, step: int, loss: float, t_index: int | None, norms: Dict[str, float]
    ) -> None:
        """Keep the diagnostics of the failing step."""
        self.step = step
        self.loss = loss
        self.t_index = t_index
        self.norms = dict(norms)
        details = ", ".join(f"{k}={v:.6g}" for k, v in sorted(self.norms.items()))
        super().__init__(
            f"training diverged at step {step}: loss={loss!r}, t={t_index}, {details}"
        )


class NonFiniteStateError(DABridgeError):
    """A sampler produced NaN or Inf."""

    def __init__(self, sampler: str, t_index: int) -> None:
        """Keep the step index of the failing update."""
        self.sampler = sampler
        self.t_index = t_index
        super().__init__(f"{sampler} sampler produced a non-finite state at t={t_index}")
