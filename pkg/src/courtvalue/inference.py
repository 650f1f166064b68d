"""Window gathering and predictors shared by training, evaluation and valuation.

A predictor is any callable ``predict(possession, taus) -> (len(taus), 5)``
returning outcome distributions for the windows at reference times ``taus``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from courtvalue.preprocess import WindowConfig, check_window_bounds, sample_positions, valid_positions, window_label
from courtvalue.synthgen import oracle_window_probs
from courtvalue.tensornet import ModelParams, predict
from courtvalue.tracking import Possession


def stack_windows(possession: Possession, taus: Sequence[int], cfg: WindowConfig) -> np.ndarray:
    """(len(taus), T, 24) frames, after checking every window's bounds."""
    taus = [int(t) for t in taus]
    for t in taus:
        check_window_bounds(possession, t, cfg)
    if not taus:
        return np.empty((0, cfg.T, possession.moments.shape[1]))
    offsets = np.arange(-cfg.span, -cfg.r)
    return possession.moments[np.asarray(taus)[:, None] + offsets[None, :]]


class ModelPredictor:
    """Inference-mode network predictions on polar possessions."""

    def __init__(self, params: ModelParams, cfg: WindowConfig, batch_size: int = 256):
        if params.config.window != cfg.T:
            raise ValueError(f"model expects T={params.config.window}, window config has T={cfg.T}")
        self.params = params
        self.cfg = cfg
        self.batch_size = batch_size

    def __call__(self, possession: Possession, taus: Sequence[int]) -> np.ndarray:
        if not possession.is_polar:
            raise ValueError(f"possession {possession.id} must be polar before inference")
        taus = list(taus)
        out = np.empty((len(taus), self.params.config.n_classes))
        for s in range(0, len(taus), self.batch_size):
            chunk = taus[s : s + self.batch_size]
            frames = stack_windows(possession, chunk, self.cfg)
            lineups = np.tile(possession.lineup.ids, (len(chunk), 1))
            out[s : s + len(chunk)] = predict(frames, lineups, self.params, self.batch_size)
        return out


class OraclePredictor:
    """Ground-truth distributions recorded by the synthetic generator."""

    def __init__(self, oracles: dict[str, np.ndarray], cfg: WindowConfig):
        self.oracles = oracles
        self.cfg = cfg

    def __call__(self, possession: Possession, taus: Sequence[int]) -> np.ndarray:
        for t in taus:
            check_window_bounds(possession, int(t), self.cfg)
        return oracle_window_probs(self.oracles[possession.id], taus)


class ConstantPredictor:
    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=np.float64)

    def __call__(self, possession: Possession, taus: Sequence[int]) -> np.ndarray:
        return np.tile(self.probs, (len(taus), 1))


def evaluation_positions(
    possessions: Sequence[Possession], cfg: WindowConfig, seed: int, stream: str, mode: str = "sampled"
) -> list[tuple[Possession, list[int]]]:
    """Reference times to score for each possession.

    ``"sampled"`` gives the terminal window plus K nulls drawn once from a
    fixed stream; ``"all"`` gives every valid sliding position.
    """
    out = []
    for p in possessions:
        if mode == "sampled":
            taus, _ = sample_positions(p, cfg, seed, epoch=0, stream=stream)
        elif mode == "all":
            taus = list(valid_positions(len(p), cfg))
        else:
            raise ValueError(f"unknown evaluation mode {mode!r}")
        out.append((p, taus))
    return out


def predict_positions(predictor, positions) -> tuple[np.ndarray, np.ndarray]:
    """Stacked predictions and labels for ``evaluation_positions`` output."""
    probs, labels = [], []
    for p, taus in positions:
        if not taus:
            continue
        probs.append(predictor(p, taus))
        labels.extend(int(window_label(p, t)) for t in taus)
    if not probs:
        return np.empty((0, 5)), np.empty(0, dtype=np.int64)
    return np.concatenate(probs), np.asarray(labels, dtype=np.int64)


def position_labels(positions) -> np.ndarray:
    return np.asarray([int(window_label(p, t)) for p, taus in positions for t in taus], dtype=np.int64)
