"""Brier score, climatology reference, skill score and reliability curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from courtvalue.tracking import N_CLASSES, TerminalAction

N_BINS = 20
BIN_EDGES = np.arange(N_BINS + 1) / N_BINS  # exact k/20, unlike linspace


def _check_inputs(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if f.ndim != 2 or f.shape[1] != N_CLASSES:
        raise ValueError(f"predictions must be (N, {N_CLASSES}), got {f.shape}")
    if y.shape != (f.shape[0],):
        raise ValueError(f"length mismatch: {f.shape[0]} predictions, {y.size} labels")
    if f.shape[0] == 0:
        raise ValueError("need at least one prediction")
    if np.any(f < 0) or np.any(f > 1) or np.any(np.abs(f.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("every prediction must be a probability vector")
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise ValueError("labels must be terminal-action indices")
    return f, y


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    return np.eye(n_classes)[np.asarray(labels, dtype=np.int64)]


def brier_score(predictions, labels) -> float:
    """Mean over samples of the squared distance to the one-hot truth."""
    f, y = _check_inputs(predictions, labels)
    per_sample = np.sum((f - one_hot(y)) ** 2, axis=1)
    # correctly rounded sum, so the result does not depend on summation order
    return math.fsum(per_sample) / per_sample.size


def climatology(train_labels) -> np.ndarray:
    """Empirical class frequencies of the training labels."""
    y = np.asarray(train_labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("climatology needs at least one label")
    return np.bincount(y, minlength=N_CLASSES) / y.size


def climatology_brier(train_labels, test_labels) -> float:
    freq = climatology(train_labels)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    return brier_score(np.tile(freq, (test_labels.size, 1)), test_labels)


def brier_skill_score(bs: float, bs_ref: float) -> float:
    if bs_ref <= 0:
        raise ZeroDivisionError("skill score undefined for a perfect reference (BS_ref = 0)")
    return 1.0 - bs / bs_ref


def bin_index(p: np.ndarray) -> np.ndarray:
    """Bins are ``[k/20, (k+1)/20)`` with the last one closed at 1."""
    idx = np.searchsorted(BIN_EDGES, p, side="right") - 1
    return np.clip(idx, 0, N_BINS - 1)


@dataclass(frozen=True)
class ReliabilityCurve:
    """Per class and bin: count, mean predicted probability, observed fraction.

    Arrays are (5, 20); empty bins hold NaN in ``mean_pred`` and ``frac``.
    """

    counts: np.ndarray
    mean_pred: np.ndarray
    frac: np.ndarray

    @property
    def populated(self) -> np.ndarray:
        return self.counts > 0

    def rows(self):
        for c in range(N_CLASSES):
            for k in range(N_BINS):
                yield c, BIN_EDGES[k], BIN_EDGES[k + 1], int(self.counts[c, k]), self.mean_pred[c, k], self.frac[c, k]

    def write(self, stream: TextIO) -> None:
        stream.write("class\tbin_low\tbin_high\tcount\tmean_pred\tfrac\n")
        for c, lo, hi, n, m, fr in self.rows():
            m_s = "nan" if n == 0 else repr(float(m))
            f_s = "nan" if n == 0 else repr(float(fr))
            stream.write(f"{TerminalAction(c).tag}\t{lo!r}\t{hi!r}\t{n}\t{m_s}\t{f_s}\n")


def reliability_curve(predictions, labels) -> ReliabilityCurve:
    f, y = _check_inputs(predictions, labels)
    o = one_hot(y)
    counts = np.zeros((N_CLASSES, N_BINS), dtype=np.int64)
    sum_pred = np.zeros((N_CLASSES, N_BINS))
    sum_obs = np.zeros((N_CLASSES, N_BINS))
    for c in range(N_CLASSES):
        idx = bin_index(f[:, c])
        counts[c] = np.bincount(idx, minlength=N_BINS)
        sum_pred[c] = np.bincount(idx, weights=f[:, c], minlength=N_BINS)
        sum_obs[c] = np.bincount(idx, weights=o[:, c], minlength=N_BINS)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(counts > 0, sum_pred / counts, np.nan)
        frac = np.where(counts > 0, sum_obs / counts, np.nan)
    return ReliabilityCurve(counts, mean_pred, frac)


def calibration_violations(curve: ReliabilityCurve, min_count: int = 50, n_sigma: float = 3.0) -> list[tuple]:
    """Bins with at least ``min_count`` samples whose observed fraction is
    more than ``n_sigma`` binomial standard errors from the mean prediction."""
    bad = []
    for c in range(N_CLASSES):
        for k in range(N_BINS):
            n = curve.counts[c, k]
            if n < min_count:
                continue
            p = curve.mean_pred[c, k]
            tol = n_sigma * np.sqrt(p * (1.0 - p) / n)
            if abs(curve.frac[c, k] - p) > tol:
                bad.append((c, k, int(n), float(p), float(curve.frac[c, k]), float(tol)))
    return bad


@dataclass(frozen=True)
class CalibrationReport:
    bs: float
    bs_ref: float
    bss: float
    n: int


def evaluate_predictions(predictions, labels, train_labels: Sequence[int]) -> CalibrationReport:
    bs = brier_score(predictions, labels)
    bs_ref = climatology_brier(train_labels, labels)
    return CalibrationReport(bs, bs_ref, brier_skill_score(bs, bs_ref), len(labels))
