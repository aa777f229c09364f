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
"""Config schemas and the flat key=value training file."""

from __future__ import annotations

from functools import lru_cache
import json
import logging
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Tuple

import voluptuous as vol

from .approximator import MlpConfig
from .const import ACTIVATIONS
from .const import COMMANDS
from .const import CONF_ACTIVATION
from .const import CONF_BATCH_SIZE
from .const import CONF_BLUR_RADIUS
from .const import CONF_COMMAND
from .const import CONF_CONDITIONAL
from .const import CONF_DIM
from .const import CONF_FREQUENCIES
from .const import CONF_HELDOUT
from .const import CONF_HIDDEN
from .const import CONF_INIT_SEED
from .const import CONF_LEARNING_RATE
from .const import CONF_LOSS_NORM
from .const import CONF_N
from .const import CONF_NOISE_STD
from .const import CONF_OPTIMIZER
from .const import CONF_OUT
from .const import CONF_PADDING
from .const import CONF_SAMPLER
from .const import CONF_SEED
from .const import CONF_SIDE
from .const import CONF_STEP_LIST
from .const import CONF_STEPS
from .const import CONF_T
from .const import CONF_TASK
from .const import CONF_TIME_EMBEDDING
from .const import CONF_TRIALS
from .const import CONF_ZERO_FINAL
from .const import DEFAULT_ACTIVATION
from .const import DEFAULT_BATCH_SIZE
from .const import DEFAULT_CONDITIONAL
from .const import DEFAULT_FREQUENCIES
from .const import DEFAULT_HIDDEN
from .const import DEFAULT_LEARNING_RATE
from .const import DEFAULT_LOSS_NORM
from .const import DEFAULT_OPTIMIZER
from .const import DEFAULT_SEED
from .const import DEFAULT_STEPS
from .const import DEFAULT_T
from .const import DEFAULT_TIME_EMBEDDING
from .const import EMBEDDINGS
from .const import LOSS_NORMS
from .const import MAX_SIDE
from .const import MIN_DUAL_STEPS
from .const import MIN_SIDE
from .const import OPTIMIZERS
from .const import PADDINGS
from .const import ROLE_FORWARD
from .const import ROLES
from .const import SAMPLER_KINDS
from .const import TASKS
from .exceptions import ConfigError
from .training import TrainConfig

_LOGGER = logging.getLogger(__name__)

STRINGS_FILE = Path(__file__).parent / "strings.json"


def int_list(value: Any) -> List[int]:
    """Coerce "64,64" or a sequence into a list of ints."""
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
    else:
        parts = list(value)
    try:
        return [int(p) for p in parts]
    except (TypeError, ValueError) as err:
        raise vol.Invalid(f"expected comma separated integers, got {value!r}") from err


def boolean(value: Any) -> bool:
    """Coerce true/false/1/0/yes/no."""
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise vol.Invalid(f"invalid boolean value {value!r}")


TRAIN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_BATCH_SIZE, default=DEFAULT_BATCH_SIZE): vol.Coerce(int),
        vol.Optional(CONF_STEPS, default=DEFAULT_STEPS): vol.Coerce(int),
        vol.Optional(CONF_LEARNING_RATE, default=DEFAULT_LEARNING_RATE): vol.Coerce(float),
        vol.Optional(CONF_OPTIMIZER, default=DEFAULT_OPTIMIZER): vol.In(OPTIMIZERS),
        vol.Optional(CONF_LOSS_NORM, default=DEFAULT_LOSS_NORM): vol.In(LOSS_NORMS),
        vol.Optional(CONF_SEED, default=DEFAULT_SEED): vol.Coerce(int),
        vol.Optional(CONF_T, default=DEFAULT_T): vol.Coerce(int),
    }
)

MLP_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional(CONF_HIDDEN, default=DEFAULT_HIDDEN): int_list,
        vol.Optional(CONF_ACTIVATION, default=DEFAULT_ACTIVATION): vol.In(ACTIVATIONS),
        vol.Optional(CONF_TIME_EMBEDDING, default=DEFAULT_TIME_EMBEDDING): vol.In(EMBEDDINGS),
        vol.Optional(CONF_FREQUENCIES, default=DEFAULT_FREQUENCIES): vol.Coerce(int),
        vol.Optional(CONF_CONDITIONAL, default=DEFAULT_CONDITIONAL): vol.Any(
            boolean, vol.In(ROLES)
        ),
        vol.Optional(CONF_ZERO_FINAL, default=True): boolean,
        vol.Optional(CONF_INIT_SEED): vol.Coerce(int),
    }
)

RUN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_COMMAND): vol.In(COMMANDS),
        vol.Optional(CONF_OUT): str,
        vol.Optional(CONF_SEED): vol.Coerce(int),
        vol.Optional(CONF_TASK): str,
        vol.Optional(CONF_SAMPLER): str,
        vol.Optional(CONF_T): vol.Coerce(int),
        vol.Optional(CONF_TRIALS): vol.Coerce(int),
        vol.Optional(CONF_STEP_LIST): int_list,
        vol.Optional(CONF_N): vol.Coerce(int),
        vol.Optional(CONF_HELDOUT): vol.Coerce(int),
        vol.Optional(CONF_DIM): vol.Coerce(int),
        vol.Optional(CONF_SIDE): vol.Coerce(int),
        vol.Optional(CONF_BLUR_RADIUS): vol.Coerce(int),
        vol.Optional(CONF_PADDING): vol.In(PADDINGS),
        vol.Optional(CONF_NOISE_STD): vol.Coerce(float),
    },
    extra=vol.ALLOW_EXTRA,
)


def _apply_schema(schema: vol.Schema, data: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, str]]:
    """Validate with a schema; return (data, errors) instead of raising."""
    try:
        return schema(data), {}
    except vol.MultipleInvalid as err:
        errors: Dict[str, str] = {}
        for error in err.errors:
            key = str(error.path[0]) if error.path else "base"
            if isinstance(error, vol.error.ExtraKeysInvalid):
                errors[key] = "unknown_key"
            else:
                _LOGGER.debug("%s: %s", key, error.msg)
                errors[key] = "invalid_value"
        return {}, errors


def parse_key_value_text(text: str) -> Dict[str, str]:
    """
    Parse flat key=value lines.

    Blank lines and lines starting with # are skipped. A line without "="
    or a repeated key is an error.
    """
    items: Dict[str, str] = {}
    errors: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            errors[f"line {number}"] = "bad_line"
            continue
        if key in items:
            errors[key] = "duplicate_key"
        items[key] = value.strip()
    if errors:
        raise ConfigError(errors)
    return items


def validate_train_config(data: Dict[str, Any]) -> TrainConfig:
    """Build a TrainConfig, collecting every error before raising."""
    values, errors = _apply_schema(TRAIN_CONFIG_SCHEMA, data)
    if errors:
        raise ConfigError(errors)
    config = TrainConfig(**values)
    config.validate()
    return config


def validate_mlp_options(data: Dict[str, Any]) -> Dict[str, Any]:
    """Validate the architecture keys of a training file."""
    values, errors = _apply_schema(MLP_CONFIG_SCHEMA, data)
    if not errors:
        if any(w < 1 for w in values[CONF_HIDDEN]):
            errors[CONF_HIDDEN] = "bad_widths"
        if values[CONF_FREQUENCIES] < 1:
            errors[CONF_FREQUENCIES] = "bad_minimum"
    if errors:
        raise ConfigError(errors)
    return values


def is_conditional(options: Dict[str, Any], role: str) -> bool:
    """conditional is true, false or the one role that also sees y."""
    return options[CONF_CONDITIONAL] is True or options[CONF_CONDITIONAL] == role


def mlp_config_for(
    dim: int, options: Dict[str, Any], init_seed: int, role: str = ROLE_FORWARD
) -> MlpConfig:
    """Turn validated architecture options into the MlpConfig of one role."""
    return MlpConfig.for_data(
        dim,
        options[CONF_HIDDEN],
        activation=options[CONF_ACTIVATION],
        time_embedding=options[CONF_TIME_EMBEDDING],
        frequencies=options[CONF_FREQUENCIES],
        conditional=is_conditional(options, role),
        init_seed=options.get(CONF_INIT_SEED, init_seed),
        zero_final=options[CONF_ZERO_FINAL],
    )


def split_train_items(items: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """Split raw items into training and architecture keys; unknown keys are errors."""
    train_keys = {str(k) for k in TRAIN_CONFIG_SCHEMA.schema}
    mlp_keys = {str(k) for k in MLP_CONFIG_SCHEMA.schema}
    unknown = sorted(k for k in items if k not in train_keys | mlp_keys)
    if unknown:
        raise ConfigError({k: "unknown_key" for k in unknown})
    train = {k: v for k, v in items.items() if k in train_keys}
    mlp = {k: v for k, v in items.items() if k in mlp_keys}
    return train, mlp


def load_train_config(path: str | Path) -> Tuple[TrainConfig, Dict[str, Any]]:
    """Read a training file and return its TrainConfig and architecture options."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError({"config": "missing_file"}, f"cannot read {path}: {err}") from err
    train, mlp = split_train_items(parse_key_value_text(text))
    errors: Dict[str, str] = {}
    config = options = None
    try:
        config = validate_train_config(train)
    except ConfigError as err:
        errors.update(err.errors)
    try:
        options = validate_mlp_options(mlp)
    except ConfigError as err:
        errors.update(err.errors)
    if errors:
        raise ConfigError(errors)
    _LOGGER.debug("Loaded training config from %s", path)
    return config, options


def validate_run_config(data: Dict[str, Any]) -> Dict[str, Any]:
    """Check resolved CLI values the way a config flow checks user input."""
    values, errors = _apply_schema(RUN_CONFIG_SCHEMA, data)
    if errors:
        raise ConfigError(errors)

    if values.get(CONF_TASK) is not None and values[CONF_TASK] not in TASKS:
        errors[CONF_TASK] = "unknown_task"
    if values.get(CONF_SAMPLER) is not None and values[CONF_SAMPLER] not in SAMPLER_KINDS:
        errors[CONF_SAMPLER] = "unknown_sampler"
    if values.get(CONF_SEED, 0) < 0:
        errors[CONF_SEED] = "bad_seed"
    if values.get(CONF_T) is not None and values[CONF_T] < 2:
        errors[CONF_T] = "bad_T"
    if values.get(CONF_TRIALS, 1) < 1:
        errors[CONF_TRIALS] = "bad_minimum"
    for key in (CONF_N, CONF_DIM, CONF_HELDOUT):
        if values.get(key, 1) < 1:
            errors[key] = "bad_minimum"
    side = values.get(CONF_SIDE)
    if side is not None and not MIN_SIDE <= side <= MAX_SIDE:
        errors[CONF_SIDE] = "bad_side"
    if values.get(CONF_BLUR_RADIUS, 0) < 0:
        errors[CONF_BLUR_RADIUS] = "bad_radius"
    if values.get(CONF_NOISE_STD, 0.0) < 0:
        errors[CONF_NOISE_STD] = "bad_noise"
    steps = values.get(CONF_STEP_LIST)
    if steps is not None:
        T = values.get(CONF_T, DEFAULT_T)
        if not steps or any(s < MIN_DUAL_STEPS or s > T for s in steps):
            errors[CONF_STEP_LIST] = "bad_steps"

    if errors:
        raise ConfigError(errors)
    return values


@lru_cache(maxsize=1)
def _strings() -> Dict[str, str]:
    with STRINGS_FILE.open(encoding="utf-8") as handle:
        return json.load(handle)["config"]["error"]


def error_message(code: str) -> str:
    """Return the user-facing text of an error code."""
    return _strings().get(code, _strings()["unknown"])


def describe_errors(errors: Dict[str, str]) -> str:
    """Render an errors dict as one line per field."""
    return "\n".join(f"{field}: {error_message(code)}" for field, code in sorted(errors.items()))
