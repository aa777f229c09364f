# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Test PSNR, SSIM, trial std and the metrics tables."""

import csv
import math

import numpy as np
import pytest

from dabridge.const import CSV_HEADER
from dabridge.const import SUMMARY_HEADER
from dabridge.evaluation import MetricsReport
from dabridge.evaluation import MetricsRow
from dabridge.evaluation import moment_distance
from dabridge.evaluation import psnr
from dabridge.evaluation import score_trials
from dabridge.evaluation import ssim
from dabridge.evaluation import summarize_trials
from dabridge.evaluation import trial_std
from dabridge.evaluation import write_summary_csv
from dabridge.exceptions import ConfigError
from dabridge.exceptions import DomainError
from dabridge.exceptions import ShapeError


def test_psnr_values():
    a = np.zeros(16)
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a) == 99.0
    assert psnr(a, a, cap=None) == math.inf
    assert psnr(a, a + 0.5, peak=2.0) == pytest.approx(10 * math.log10(16.0))


def test_psnr_errors():
    with pytest.raises(ShapeError):
        psnr(np.zeros(4), np.zeros(5))
    with pytest.raises(DomainError):
        psnr(np.zeros(4), np.zeros(4), peak=0.0)


def test_ssim_identity_and_symmetry():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(size=(2, 64))
    assert ssim(a, a, 8) == 1.0
    assert ssim(a, b, 8) == ssim(b, a, 8)
    assert ssim(a, b, 8) < 1.0


def test_ssim_of_inverted_image():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=16 * 16)
    assert -1.0 <= ssim(a, 1.0 - a, 16) < 1.0


def test_ssim_window_clipped_to_small_image():
    rng = np.random.default_rng(4)
    a, b = rng.uniform(size=(2, 6 * 6))
    assert ssim(a, a, 6) == 1.0
    assert ssim(a, b, 6) == ssim(b, a, 6)


def test_ssim_binary_checkerboard():
    # every window has mean 1/2 and variance 1/4 so each term is (c2 - 1/2) / (c2 + 1/2)
    board = (np.indices((16, 16)).sum(axis=0) % 2).astype(np.float64).ravel()
    assert ssim(board, 1.0 - board, 16) == pytest.approx(-0.99641, abs=1e-3)
    half = np.zeros((16, 16))
    half[:, 8:] = 1.0
    assert ssim(half.ravel(), 1.0 - half.ravel(), 16) < 0.0


def test_ssim_errors():
    with pytest.raises(ConfigError):
        ssim(np.zeros(9), np.zeros(9), 3)
    with pytest.raises(DomainError):
        ssim(np.zeros(16), np.zeros(25), 4)


def test_trial_std():
    assert trial_std([np.zeros(3), np.full(3, 2.0)]) == pytest.approx(math.sqrt(2.0))
    assert trial_std([np.ones(3)] * 5) == 0.0
    x = np.random.default_rng(0).uniform(size=64)
    assert trial_std([x] * 5) == 0.0
    assert trial_std([x + 1e6] * 3) == 0.0
    with pytest.raises(DomainError):
        trial_std([np.zeros(3)])


def test_moment_distance():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((200, 2))
    assert moment_distance(a, a) == (0.0, 0.0)
    mean_gap, _cov_gap = moment_distance(a, a + np.array([3.0, 4.0]))
    assert mean_gap == pytest.approx(5.0)
    with pytest.raises(DomainError):
        moment_distance(np.zeros((0, 2)), a)


def test_score_trials():
    targets = np.zeros((2, 16))
    outputs = [np.full((2, 16), 0.1), np.full((2, 16), 0.3)]
    rows = score_trials("sde", 10, outputs, targets, side=4)
    assert [r.trial for r in rows] == [0, 1]
    assert rows[0].psnr_db == pytest.approx(20.0)
    assert rows[0].std == rows[1].std == pytest.approx(0.2 * math.sqrt(0.5))
    assert not math.isnan(rows[0].ssim)

    single = score_trials("pf-ode", 10, outputs[:1], targets)
    assert math.isnan(single[0].std)
    assert math.isnan(single[0].ssim)


def test_report_csv_is_sorted(tmp_path):
    report = MetricsReport()
    report.extend(
        [
            MetricsRow("sde", 10, 1, 20.0, 0.5, 0.1, 0.0, 0.0),
            MetricsRow("dual", 10, 0, 21.0, 0.6, 0.01, 0.0, 0.0),
            MetricsRow("dual", 3, 0, 22.0, 0.7, 0.01, 0.0, 0.0),
        ]
    )
    path = report.write_csv(tmp_path / "runs" / "metrics.csv")
    with path.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == CSV_HEADER
    assert [(r[0], r[1]) for r in rows[1:]] == [("dual", "3"), ("dual", "10"), ("sde", "10")]
    assert rows[1][3] == "22"


def test_summarize_trials(tmp_path):
    rows = [
        MetricsRow("dual", 3, 0, 20.0, 0.5, 0.01, 0.0, 0.0),
        MetricsRow("dual", 3, 1, 22.0, 0.7, 0.01, 0.0, 0.0),
        MetricsRow("sde", 3, 0, 15.0, 0.2, 0.3, 0.0, 0.0),
    ]
    summary = summarize_trials(rows)
    assert [(s.sampler, s.trials) for s in summary] == [("dual", 2), ("sde", 1)]
    assert summary[0].psnr_mean == 21.0
    assert summary[0].psnr_std == pytest.approx(math.sqrt(2.0))
    assert summary[1].psnr_std == 0.0
    path = write_summary_csv(tmp_path / "summary.csv", summary)
    assert path.read_text().splitlines()[0] == ",".join(SUMMARY_HEADER)
