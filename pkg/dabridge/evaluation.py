# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Faithfulness and consistency metrics and their CSV tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from dataclasses import field
import logging
import math
from pathlib import Path
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .const import CSV_HEADER
from .const import DEFAULT_PEAK
from .const import PSNR_CAP
from .const import SSIM_K1
from .const import SSIM_K2
from .const import SSIM_MIN_SIDE
from .const import SSIM_SIGMA
from .const import SSIM_WINDOW
from .const import SUMMARY_HEADER
from .exceptions import ConfigError
from .exceptions import DomainError
from .exceptions import ShapeError
from .util import as_vector
from .util import check_same_shape

_LOGGER = logging.getLogger(__name__)


def psnr(
    a: np.ndarray, b: np.ndarray, peak: float = DEFAULT_PEAK, cap: Optional[float] = PSNR_CAP
) -> float:
    """
    Return 10 log10(peak^2 / MSE) in dB.

    Zero MSE is +inf; with cap set (the default) the result is clipped to
    cap so that CSV rows stay finite.
    """
    if not peak > 0:
        raise DomainError(f"peak must be positive, got {peak}")
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    value = math.inf if mse == 0.0 else 10.0 * math.log10(peak * peak / mse)
    if cap is not None:
        value = min(value, cap)
    return value


def _gaussian_window(size: int) -> np.ndarray:
    """Normalized 2-D Gaussian of the given side."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def _as_image(x: np.ndarray, side: int, name: str) -> np.ndarray:
    x = as_vector(x, name)
    if x.size != side * side:
        raise DomainError(f"{name} has {x.size} values, expected {side}x{side}")
    return x.reshape(side, side)


def ssim(a: np.ndarray, b: np.ndarray, side: int, peak: float = DEFAULT_PEAK) -> float:
    """
    Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    The window is clipped to the image for side < 11 and only fully inside
    windows are scored. Terms are formed symmetrically in a and b, so
    ssim(a, b) == ssim(b, a) and ssim(x, x) == 1 hold exactly.
    """
    if side < SSIM_MIN_SIDE:
        raise ConfigError({"side": "bad_side"})
    A = _as_image(a, side, "a")
    B = _as_image(b, side, "b")
    size = min(SSIM_WINDOW, side)
    w = _gaussian_window(size)
    pa = sliding_window_view(A, (size, size))
    pb = sliding_window_view(B, (size, size))

    def wmean(p: np.ndarray) -> np.ndarray:
        return np.sum(p * w, axis=(-2, -1))

    mu_a = wmean(pa)
    mu_b = wmean(pb)
    var_a = wmean(pa * pa) - mu_a * mu_a
    var_b = wmean(pb * pb) - mu_b * mu_b
    cov = wmean(pa * pb) - mu_a * mu_b
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def trial_std(outputs: Sequence[np.ndarray]) -> float:
    """Bessel-corrected elementwise std across trials, averaged over elements."""
    if len(outputs) < 2:
        raise DomainError(f"trial_std needs at least 2 outputs, got {len(outputs)}")
    stacked = np.stack([np.asarray(o, dtype=np.float64) for o in outputs])
    # shifting by the first trial makes identical outputs score exactly 0
    return float(np.mean(np.std(stacked - stacked[0], axis=0, ddof=1)))


def moment_distance(samples_a: np.ndarray, samples_b: np.ndarray) -> Tuple[float, float]:
    """Return the L2 gap of the means and the Frobenius gap of the covariances."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise DomainError("moment_distance needs non-empty sample sets")
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    check_same_shape(a=a, b=b)

    def cov(x: np.ndarray) -> np.ndarray:
        if x.shape[0] < 2:
            return np.zeros((x.shape[1], x.shape[1]))
        return np.atleast_2d(np.cov(x, rowvar=False, ddof=1))

    mean_gap = float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))
    cov_gap = float(np.linalg.norm(cov(a) - cov(b), ord="fro"))
    return mean_gap, cov_gap


@dataclass
class MetricsRow:
    """One (sampler, steps, trial) result."""

    sampler: str
    steps: int
    trial: int
    psnr_db: float
    ssim: float
    std: float
    mean_gap: float
    cov_gap: float
    extra: Dict[str, float] = field(default_factory=dict)

    @property
    def key(self) -> Tuple[str, int, int]:
        """Return the sort key."""
        return (self.sampler, self.steps, self.trial)

    def as_csv(self) -> List[str]:
        """Format the CSV fields."""
        return [
            self.sampler,
            str(self.steps),
            str(self.trial),
            *(_fmt(v) for v in (self.psnr_db, self.ssim, self.std, self.mean_gap, self.cov_gap)),
        ]


def _fmt(value: float) -> str:
    return f"{value:.6g}"


@dataclass
class MetricsReport:
    """Rows behind the step-sweep and trial-std tables."""

    rows: List[MetricsRow] = field(default_factory=list)

    def extend(self, rows: Iterable[MetricsRow]) -> None:
        """Append rows."""
        self.rows.extend(rows)

    def sorted_rows(self) -> List[MetricsRow]:
        """Return the rows in (sampler, steps, trial) order."""
        return sorted(self.rows, key=lambda r: r.key)

    def write_csv(self, path: str | Path) -> Path:
        """Write the rows with the fixed header."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in self.sorted_rows():
                writer.writerow(row.as_csv())
        _LOGGER.info("Wrote %d metric rows to %s", len(self.rows), path)
        return path


def score_trials(
    sampler: str,
    steps: int,
    outputs: Sequence[np.ndarray],
    targets: np.ndarray,
    side: Optional[int] = None,
    peak: float = DEFAULT_PEAK,
) -> List[MetricsRow]:
    """
    Score each trial's (n, d) outputs against the (n, d) ground truth.

    psnr and ssim are means over inputs; std is the trial std per input,
    averaged over inputs, and is shared by every trial row.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    batches = [np.atleast_2d(np.asarray(o, dtype=np.float64)) for o in outputs]
    std = math.nan
    if len(batches) >= 2:
        std = float(
            np.mean([trial_std([b[i] for b in batches]) for i in range(targets.shape[0])])
        )
    rows = []
    for trial, batch in enumerate(batches):
        psnrs = [psnr(o, t, peak) for o, t in zip(batch, targets)]
        if side is not None:
            ssim_value = float(np.mean([ssim(o, t, side, peak) for o, t in zip(batch, targets)]))
        else:
            ssim_value = math.nan
        mean_gap, cov_gap = moment_distance(batch, targets)
        rows.append(
            MetricsRow(
                sampler, steps, trial, float(np.mean(psnrs)), ssim_value, std, mean_gap, cov_gap
            )
        )
    return rows


@dataclass
class SummaryRow:
    """Mean and spread over the trials of one (sampler, steps) cell."""

    sampler: str
    steps: int
    trials: int
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    std: float


def summarize_trials(rows: Iterable[MetricsRow]) -> List[SummaryRow]:
    """Group per-trial rows by (sampler, steps)."""
    groups: Dict[Tuple[str, int], List[MetricsRow]] = {}
    for row in rows:
        groups.setdefault((row.sampler, row.steps), []).append(row)
    summary = []
    for (sampler, steps), group in sorted(groups.items()):
        psnrs = np.array([r.psnr_db for r in group])
        ssims = np.array([r.ssim for r in group])
        ddof = 1 if len(group) > 1 else 0
        summary.append(
            SummaryRow(
                sampler,
                steps,
                len(group),
                float(psnrs.mean()),
                float(psnrs.std(ddof=ddof)),
                float(ssims.mean()),
                float(ssims.std(ddof=ddof)),
                float(group[0].std),
            )
        )
    return summary


def write_summary_csv(path: str | Path, summary: Iterable[SummaryRow]) -> Path:
    """Write the summary table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for s in summary:
            writer.writerow(
                [
                    s.sampler,
                    s.steps,
                    s.trials,
                    *(_fmt(v) for v in (s.psnr_mean, s.psnr_std, s.ssim_mean, s.ssim_std, s.std)),
                ]
            )
    return path
