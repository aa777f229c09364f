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
Command line entry point.

Every command writes under --out with the fixed layout data/, ckpt/, runs/
and tables/, and leaves a run.txt manifest next to its outputs. All
randomness flows from --seed through the named data/init/train/sample
substreams.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ThreadPoolExecutor
import dataclasses
from functools import partial
import logging
import math
from pathlib import Path
import sys
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import TypeVar

import numpy as np

from .approximator import Approximator
from .approximator import MlpApproximator
from .approximator import PairedSample
from .approximator import PosteriorOracle
from .approximator import analytic_forward_oracle
from .approximator import analytic_reverse_oracle
from .approximator import load_checkpoint
from .approximator import save_checkpoint
from .bridge_math import BridgeSchedule
from .config import describe_errors
from .config import load_train_config
from .config import mlp_config_for
from .config import validate_mlp_options
from .config import validate_run_config
from .config import validate_train_config
from .const import COMMAND_EVAL
from .const import COMMAND_GEN_DATA
from .const import COMMAND_REPRO_TABLE
from .const import COMMAND_SAMPLE
from .const import COMMAND_SWEEP
from .const import COMMAND_TRAIN
from .const import CONF_SEED
from .const import CONF_STEP_LIST
from .const import CONF_T
from .const import CONF_TRIALS
from .const import DEFAULT_BLUR_RADIUS
from .const import DEFAULT_DIM
from .const import DEFAULT_HELDOUT
from .const import DEFAULT_MU0
from .const import DEFAULT_N
from .const import DEFAULT_NOISE_STD
from .const import DEFAULT_OFFSET
from .const import DEFAULT_SEED
from .const import DEFAULT_SIDE
from .const import DEFAULT_SIGMA0
from .const import DEFAULT_STEP_LIST
from .const import DEFAULT_STEPS
from .const import DEFAULT_T
from .const import DEFAULT_TRIALS
from .const import DIR_CKPT
from .const import DIR_DATA
from .const import DIR_RUNS
from .const import DIR_TABLES
from .const import DOMAIN
from .const import MANIFEST_FILE
from .const import MIN_DUAL_STEPS
from .const import PADDING_WRAP
from .const import PADDINGS
from .const import ROLE_BOTH
from .const import ROLE_FORWARD
from .const import ROLE_REVERSE
from .const import ROLES
from .const import SAMPLER_DUAL
from .const import SAMPLER_DUAL_EQ43
from .const import SAMPLER_KINDS
from .const import SAMPLER_PF_ODE
from .const import SAMPLER_SDE
from .const import STARTUP_MESSAGE
from .const import TASK_BLUR
from .const import TASK_GAUSSIAN
from .const import TASK_TWOMOONS
from .const import VERSION
from .datasets import PairedDataset
from .datasets import export_csv
from .datasets import gen_blur_pairs
from .datasets import gen_gaussian_pairs
from .datasets import gen_twomoons_pairs
from .datasets import load_dataset
from .datasets import save_dataset
from .evaluation import MetricsReport
from .evaluation import MetricsRow
from .evaluation import score_trials
from .evaluation import summarize_trials
from .evaluation import write_summary_csv
from .exceptions import ConfigError
from .exceptions import DABridgeError
from .exceptions import ShapeError
from .formats import decode_tensor_block
from .formats import encode_tensor_block
from .formats import write_bytes
from .sampling import SamplerRun
from .sampling import dump_trajectory
from .sampling import run_sampler
from .sampling import step_count_sweep
from .training import TrainConfig
from .training import train
from .training import write_loss_curve
from .util import ensure_dirs
from .util import file_digest
from .util import gen_run_id
from .util import read_manifest
from .util import thread_count
from .util import write_manifest

_LOGGER = logging.getLogger(__name__)

_T = TypeVar("_T")

OUTPUTS_FILE = "outputs.dabt"
METRICS_FILE = "metrics.csv"
TABLE_STEPS_FILE = "table1_steps.csv"
TABLE_TRIALS_FILE = "table2_trials.csv"
SUMMARY_FILE = "summary.csv"
REPRO_SAMPLERS = [SAMPLER_DUAL, SAMPLER_SDE, SAMPLER_PF_ODE]
DUAL_KINDS = (SAMPLER_DUAL, SAMPLER_DUAL_EQ43)


def run_cells(cells: Sequence[Callable[[], _T]]) -> List[_T]:
    """Run independent cells on a pool capped by DABRIDGE_THREADS, keeping submission order."""
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return list(pool.map(lambda cell: cell(), cells))


def setup_logging(verbose: bool, quiet: bool) -> None:
    """Configure the root logger once."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger(DOMAIN).setLevel(level)


def _resolved(args: argparse.Namespace) -> Dict[str, Any]:
    """Return the parsed arguments that were actually set."""
    return {k: v for k, v in vars(args).items() if k != "func" and v is not None}


def _data_paths(out: Path, task: str) -> Tuple[Path, Path]:
    base = out / DIR_DATA
    return base / f"{task}.dabt", base / f"{task}_heldout.dabt"


def _image_side(dim: int) -> Optional[int]:
    """Return the square side of image data, or None for vector data."""
    side = int(math.isqrt(dim))
    return side if side * side == dim and side >= 4 else None


def _manifest(path: Path, args: argparse.Namespace, **extra: Any) -> Path:
    items = _resolved(args)
    items.update(extra)
    items["version"] = VERSION
    items["run_id"] = gen_run_id(*(f"{k}={items[k]}" for k in sorted(items)))
    return write_manifest(path, items)


def _generate(args: argparse.Namespace, seed: int, n: int, part: int) -> PairedDataset:
    """Dispatch to the dataset generator of args.task."""
    if args.task == TASK_GAUSSIAN:
        return gen_gaussian_pairs(
            n, args.dim, args.mu0, args.sigma0, args.offset, seed, part=part
        )
    if args.task == TASK_TWOMOONS:
        return gen_twomoons_pairs(n, args.noise_std, seed, part=part)
    return gen_blur_pairs(n, args.side, args.blur_radius, seed, args.padding, part=part)


def cmd_gen_data(args: argparse.Namespace) -> int:
    """Generate the training and held-out files of one task."""
    values = validate_run_config(_resolved(args))
    seed = values.get(CONF_SEED, DEFAULT_SEED)
    ensure_dirs(args.out, [DIR_DATA])
    train_path, heldout_path = _data_paths(Path(args.out), args.task)
    dataset = _generate(args, seed, args.n, 0)
    heldout = _generate(args, seed, args.heldout, 1)
    save_dataset(train_path, dataset)
    save_dataset(heldout_path, heldout)
    if args.csv:
        export_csv(train_path.with_suffix(".csv"), dataset)
    _manifest(
        train_path.parent / MANIFEST_FILE,
        args,
        seed=seed,
        dim=dataset.dim,
        train_sha256=file_digest(train_path),
        heldout_sha256=file_digest(heldout_path),
    )
    return 0


def _train_config(args: argparse.Namespace) -> Tuple[TrainConfig, Dict[str, Any]]:
    """Merge defaults, the optional key=value file and command line overrides."""
    if args.config:
        config, options = load_train_config(args.config)
    else:
        config, options = validate_train_config({}), validate_mlp_options({})
    overrides = {
        "steps": args.steps,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "T": args.T,
        "seed": args.seed,
    }
    config = dataclasses.replace(config, **{k: v for k, v in overrides.items() if v is not None})
    config.validate()
    return config, options


def _train_role(
    dataset: PairedDataset,
    config: TrainConfig,
    options: Dict[str, Any],
    role: str,
    ckpt_dir: Path,
    progress: bool,
) -> MlpApproximator:
    mlp_config = mlp_config_for(dataset.dim, options, config.seed, role)
    approx = MlpApproximator(mlp_config, config.T, role)
    result = train(dataset, approx, config, role, progress=progress)
    save_checkpoint(ckpt_dir / f"{role}.dabr", approx)
    write_loss_curve(ckpt_dir / f"{role}_loss.csv", result.curve)
    return approx


def cmd_train(args: argparse.Namespace) -> int:
    """Train the forward and/or reverse approximator."""
    validate_run_config(_resolved(args))
    config, options = _train_config(args)
    data_path = Path(args.data) if args.data else _data_paths(Path(args.out), args.task)[0]
    dataset = load_dataset(data_path)
    dirs = ensure_dirs(args.out, [DIR_CKPT])
    roles = ROLES if args.which == ROLE_BOTH else [args.which]
    for role in roles:
        _train_role(dataset, config, options, role, dirs[DIR_CKPT], not args.quiet)
    _manifest(
        dirs[DIR_CKPT] / MANIFEST_FILE,
        args,
        **{f"train_{k}": v for k, v in dataclasses.asdict(config).items()},
        **{f"mlp_{k}": v for k, v in options.items()},
        data_sha256=file_digest(data_path),
    )
    return 0


def _approximators(
    args: argparse.Namespace, heldout: PairedDataset, T: int, needs_reverse: bool
) -> Tuple[Approximator, Optional[Approximator]]:
    """Closed-form oracles or trained checkpoints, checked against the data dim."""
    if args.oracle:
        pair = PairedSample(heldout.x0, heldout.y)
        return analytic_forward_oracle(pair, T), analytic_reverse_oracle(pair, BridgeSchedule(T))
    if args.posterior:
        if needs_reverse:
            raise ConfigError({"sampler": "no_reverse"})
        return PosteriorOracle(args.mu0, args.sigma0, args.offset, heldout.dim, T), None
    ckpt_dir = Path(args.ckpt) if args.ckpt else Path(args.out) / DIR_CKPT
    eps = load_checkpoint(ckpt_dir / f"{ROLE_FORWARD}.dabr")
    z = load_checkpoint(ckpt_dir / f"{ROLE_REVERSE}.dabr") if needs_reverse else None
    for approx in (eps, z):
        if approx is not None and approx.dim != heldout.dim:
            raise ShapeError(
                f"{approx.role} checkpoint dim {approx.dim} does not match data dim {heldout.dim}"
            )
    return eps, z


def _heldout(args: argparse.Namespace) -> Tuple[Path, PairedDataset]:
    if args.heldout_file:
        path = Path(args.heldout_file)
    else:
        path = _data_paths(Path(args.out), args.task)[1]
    return path, load_dataset(path)


def _sample_trials(
    sampler: str,
    heldout: PairedDataset,
    eps: Approximator,
    z: Optional[Approximator],
    schedule: BridgeSchedule,
    seed: int,
    trials: int,
    keep_trajectory: bool = False,
) -> List[SamplerRun]:
    cells = [
        partial(
            run_sampler, sampler, heldout.y, eps, z, schedule, seed, trial, keep_trajectory
        )
        for trial in range(trials)
    ]
    return run_cells(cells)


def cmd_sample(args: argparse.Namespace) -> int:
    """Run one sampler over the held-out inputs and score it."""
    values = validate_run_config(_resolved(args))
    T = values.get(CONF_T, DEFAULT_T)
    seed = values.get(CONF_SEED, DEFAULT_SEED)
    trials = values.get(CONF_TRIALS, 1)
    heldout_path, heldout = _heldout(args)
    eps, z = _approximators(args, heldout, T, args.sampler in DUAL_KINDS)
    runs = _sample_trials(
        args.sampler, heldout, eps, z, BridgeSchedule(T), seed, trials, args.dump_trajectory
    )
    outputs = [run.x0_hat for run in runs]

    run_dir = Path(args.out) / DIR_RUNS / f"{COMMAND_SAMPLE}-{args.sampler}"
    write_bytes(run_dir / OUTPUTS_FILE, encode_tensor_block(np.concatenate(outputs, axis=0)))
    rows = score_trials(args.sampler, T, outputs, heldout.x0, _image_side(heldout.dim))
    report = MetricsReport(rows)
    report.write_csv(run_dir / METRICS_FILE)
    if args.dump_trajectory:
        for run in runs:
            dump_trajectory(run, run_dir / f"trial-{run.trial}")
    _manifest(
        run_dir / MANIFEST_FILE,
        args,
        seed=seed,
        T=T,
        trials=trials,
        count=len(heldout),
        heldout_sha256=file_digest(heldout_path),
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Re-score the outputs of a sample run against the held-out ground truth."""
    validate_run_config(_resolved(args))
    run_dir = Path(args.run)
    manifest = read_manifest(run_dir / MANIFEST_FILE)
    _heldout_path, heldout = _heldout(args)
    trials = int(manifest["trials"])
    rows = decode_tensor_block((run_dir / OUTPUTS_FILE).read_bytes())
    if rows.shape != (trials * len(heldout), heldout.dim):
        raise ShapeError(
            f"outputs have shape {rows.shape}, expected {(trials * len(heldout), heldout.dim)}"
        )
    outputs = np.split(rows, trials)
    report = MetricsReport(
        score_trials(
            manifest["sampler"], int(manifest["T"]), outputs, heldout.x0, _image_side(heldout.dim)
        )
    )
    report.write_csv(run_dir / METRICS_FILE)
    return 0


def _step_list(values: Dict[str, Any], T: int) -> List[int]:
    steps = values.get(CONF_STEP_LIST)
    if steps is None:
        steps = [s for s in DEFAULT_STEP_LIST + [T] if MIN_DUAL_STEPS <= s <= T]
    return sorted(set(steps))


def cmd_sweep(args: argparse.Namespace) -> int:
    """Dual sampler at several step counts (re-discretized or early stopped)."""
    values = validate_run_config(_resolved(args))
    T = values.get(CONF_T, DEFAULT_T)
    seed = values.get(CONF_SEED, DEFAULT_SEED)
    trials = values.get(CONF_TRIALS, 1)
    steps = _step_list(values, T)
    heldout_path, heldout = _heldout(args)
    eps, z = _approximators(args, heldout, T, True)
    schedule = BridgeSchedule(T)
    side = _image_side(heldout.dim)
    cells = [
        partial(
            step_count_sweep,
            heldout.y,
            heldout.x0,
            eps,
            z,
            schedule,
            [s],
            seed,
            trials,
            args.early_stop,
            side,
        )
        for s in steps
    ]
    report = MetricsReport()
    for part in run_cells(cells):
        report.extend(part.rows)
    run_dir = Path(args.out) / DIR_RUNS / COMMAND_SWEEP
    report.write_csv(run_dir / METRICS_FILE)
    _manifest(
        run_dir / MANIFEST_FILE,
        args,
        seed=seed,
        T=T,
        trials=trials,
        step_list=steps,
        heldout_sha256=file_digest(heldout_path),
    )
    return 0


def _repro_cell(
    sampler: str,
    steps: int,
    heldout: PairedDataset,
    eps: Approximator,
    z: Approximator,
    schedule: BridgeSchedule,
    seed: int,
    trials: int,
    side: Optional[int],
) -> List[MetricsRow]:
    """All trials of one (sampler, steps) cell."""
    cell_schedule = schedule.with_steps(steps)
    outputs = [
        run_sampler(sampler, heldout.y, eps, z, cell_schedule, seed, trial).x0_hat
        for trial in range(trials)
    ]
    return score_trials(sampler, steps, outputs, heldout.x0, side)


def cmd_repro_table(args: argparse.Namespace) -> int:
    """Generate data, train both approximators and write the step and trial tables."""
    values = validate_run_config(_resolved(args))
    if args.config:
        config, options = load_train_config(args.config)
    else:
        config, options = validate_train_config({}), validate_mlp_options({})
    T = values.get(CONF_T, config.T)
    seed = values.get(CONF_SEED, config.seed)
    trials = values.get(CONF_TRIALS, DEFAULT_TRIALS)
    steps = _step_list(values, T)
    if steps[-1] > T:
        raise ConfigError({CONF_STEP_LIST: "bad_steps"})
    steps_override = {} if args.train_steps is None else {"steps": args.train_steps}
    config = dataclasses.replace(config, seed=seed, T=T, **steps_override)
    config.validate()
    dirs = ensure_dirs(args.out, [DIR_DATA, DIR_CKPT, DIR_TABLES])

    train_path, heldout_path = _data_paths(Path(args.out), args.task)
    dataset = _generate(args, seed, args.n, 0)
    heldout = _generate(args, seed, args.heldout, 1)
    save_dataset(train_path, dataset)
    save_dataset(heldout_path, heldout)

    eps, z = run_cells(
        [
            partial(_train_role, dataset, config, options, role, dirs[DIR_CKPT], False)
            for role in ROLES
        ]
    )

    schedule = BridgeSchedule(T)
    side = _image_side(heldout.dim)
    cells = [
        partial(_repro_cell, sampler, s, heldout, eps, z, schedule, seed, trials, side)
        for sampler in REPRO_SAMPLERS
        for s in steps
    ]
    report = MetricsReport()
    for rows in run_cells(cells):
        report.extend(rows)
    report.write_csv(dirs[DIR_TABLES] / TABLE_STEPS_FILE)
    MetricsReport([r for r in report.rows if r.steps == T]).write_csv(
        dirs[DIR_TABLES] / TABLE_TRIALS_FILE
    )
    write_summary_csv(dirs[DIR_TABLES] / SUMMARY_FILE, summarize_trials(report.rows))
    _manifest(
        dirs[DIR_TABLES] / MANIFEST_FILE,
        args,
        seed=seed,
        T=T,
        trials=trials,
        step_list=steps,
        **{f"train_{k}": v for k, v in dataclasses.asdict(config).items()},
        **{f"mlp_{k}": v for k, v in options.items()},
    )
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help=f"master seed (default: {DEFAULT_SEED})")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--task", default=TASK_BLUR, help="gaussian, twomoons or blur")
    parser.add_argument("--n", type=int, default=DEFAULT_N, help="training pairs")
    parser.add_argument("--heldout", type=int, default=DEFAULT_HELDOUT, help="held-out pairs")
    parser.add_argument("--dim", type=int, default=DEFAULT_DIM, help="gaussian dimension")
    parser.add_argument("--mu0", type=float, default=DEFAULT_MU0)
    parser.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA0)
    parser.add_argument("--offset", type=float, default=DEFAULT_OFFSET)
    parser.add_argument("--noise-std", type=float, default=DEFAULT_NOISE_STD)
    parser.add_argument("--side", type=int, default=DEFAULT_SIDE)
    parser.add_argument("--blur-radius", type=int, default=DEFAULT_BLUR_RADIUS)
    parser.add_argument("--padding", default=PADDING_WRAP, choices=PADDINGS)


def _add_sampling(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--task", default=TASK_BLUR, help="task whose held-out file to use")
    parser.add_argument(
        "--heldout-file", help="held-out DABT file (default: data/<task>_heldout.dabt)"
    )
    parser.add_argument("--ckpt", help="checkpoint directory (default: <out>/ckpt)")
    parser.add_argument("--T", type=int, help=f"sampling steps (default: {DEFAULT_T})")
    parser.add_argument("--trials", type=int, help="sampling trials per input")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--oracle", action="store_true", help="closed-form approximators")
    source.add_argument(
        "--posterior", action="store_true", help="population-optimal gaussian eps"
    )
    parser.add_argument("--mu0", type=float, default=DEFAULT_MU0)
    parser.add_argument("--sigma0", type=float, default=DEFAULT_SIGMA0)
    parser.add_argument("--offset", type=float, default=DEFAULT_OFFSET)


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subcommand per experiment step."""
    parser = argparse.ArgumentParser(prog=DOMAIN, description="Dual-approx bridge experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(COMMAND_GEN_DATA, help="generate a paired dataset")
    _add_common(p)
    _add_data(p)
    p.add_argument("--csv", action="store_true", help="also export a CSV scatter file")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser(COMMAND_TRAIN, help="train approximators")
    _add_common(p)
    p.add_argument("--task", default=TASK_BLUR)
    p.add_argument("--data", help="training DABT file (default: data/<task>.dabt)")
    p.add_argument("--which", default=ROLE_BOTH, choices=[*ROLES, ROLE_BOTH])
    p.add_argument("--config", help="key=value training file")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--T", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(COMMAND_SAMPLE, help="sample held-out inputs")
    _add_common(p)
    _add_sampling(p)
    p.add_argument("--sampler", default=SAMPLER_DUAL, help=", ".join(SAMPLER_KINDS))
    p.add_argument("--dump-trajectory", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser(COMMAND_EVAL, help="score the outputs of a sample run")
    _add_common(p)
    p.add_argument("--run", required=True, help="sample run directory")
    p.add_argument("--task", default=TASK_BLUR)
    p.add_argument("--heldout-file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(COMMAND_SWEEP, help="dual sampler step-count sweep")
    _add_common(p)
    _add_sampling(p)
    p.add_argument("--step-list", help="comma separated step counts")
    p.add_argument("--early-stop", action="store_true", help="truncate one T-step run")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(COMMAND_REPRO_TABLE, help="step and trial tables end to end")
    _add_common(p)
    _add_data(p)
    p.add_argument("--T", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--step-list", help="comma separated step counts")
    p.add_argument("--config", help="key=value training file shared by both roles")
    p.add_argument("--train-steps", type=int, help=f"optimizer steps (default: {DEFAULT_STEPS})")
    p.set_defaults(func=cmd_repro_table)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run the command and map failures to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    _LOGGER.info(STARTUP_MESSAGE)
    try:
        return args.func(args)
    except ConfigError as err:
        _LOGGER.error("Invalid configuration:\n%s", describe_errors(err.errors))
        print(describe_errors(err.errors), file=sys.stderr)
        return 2
    except (DABridgeError, OSError) as err:
        _LOGGER.error("%s failed: %s", args.command, err)
        return 1


if __name__ == "__main__":
    sys.exit(main())
