"""Mini-batch NLL training with per-epoch null downsampling and early stopping."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from courtvalue.calibration import brier_score
from courtvalue.inference import ModelPredictor, evaluation_positions, predict_positions
from courtvalue.preprocess import WindowConfig, sample_positions
from courtvalue.seeding import substream
from courtvalue.tensornet import (
    ArchConfig,
    ModelParams,
    backward,
    forward,
    init_params,
    nll,
    sample_dropout_masks,
)
from courtvalue.tracking import Possession

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    """Raised when a batch produces a non-finite loss or gradient."""

    def __init__(self, message: str, epoch: int, batch: int, possession_ids, snapshot: ModelParams):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.possession_ids = list(possession_ids)
        self.snapshot = snapshot


@dataclass(frozen=True)
class TrainConfig:
    K: int = 2
    T: int = 128
    r: int = 16
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    max_epochs: int = 50
    patience: int = 5
    min_delta: float = 0.01
    seed: int = 0
    hidden: int = 32
    layers: int = 3
    embed_dim: int = 8
    dense: int = 128
    dense_dropout: float = 0.3
    input_dropout: float = 0.2
    recurrent_dropout: float = 0.2
    forget_bias: float = 1.0
    standardize: bool = True
    resample_nulls: bool = True
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {sorted(OPTIMIZERS)}, got {self.optimizer!r}")

    @property
    def window(self) -> WindowConfig:
        return WindowConfig(self.T, self.r, self.K)

    def arch(self, roster_size: int) -> ArchConfig:
        return ArchConfig(
            roster_size=roster_size,
            hidden=self.hidden,
            layers=self.layers,
            embed_dim=self.embed_dim,
            dense=self.dense,
            window=self.T,
            dense_dropout=self.dense_dropout,
            input_dropout=self.input_dropout,
            recurrent_dropout=self.recurrent_dropout,
            forget_bias=self.forget_bias,
        )


# --------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, learning_rate: float, weight_decay: float = 0.0):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if self.weight_decay:
                g = g + self.weight_decay * params.tensors[name]
            params.tensors[name] -= self.learning_rate * g


class Adam:
    def __init__(self, learning_rate: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-7, weight_decay: float = 0.0):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.learning_rate * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for name, g in grads.items():
            if self.weight_decay:
                g = g + self.weight_decay * params.tensors[name]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params.tensors[name] -= lr_t * m / (np.sqrt(v) + self.eps)


OPTIMIZERS = {"adam": Adam, "sgd": SGD}


def make_optimizer(cfg: TrainConfig):
    return OPTIMIZERS[cfg.optimizer](learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay)


# --------------------------------------------------------------------------
# batches


def downsampled_batch(possessions: Sequence[Possession], cfg: TrainConfig, epoch: int):
    """Frames, lineups and labels for the K+1 windows of every possession."""
    wcfg = cfg.window
    frames, lineups, labels = [], [], []
    shortfalls = 0
    offsets = np.arange(-wcfg.span, -wcfg.r)
    for p in possessions:
        taus, short = sample_positions(p, wcfg, cfg.seed, epoch if cfg.resample_nulls else 0)
        shortfalls += short
        idx = np.asarray(taus)[:, None] + offsets[None, :]
        frames.append(p.moments[idx])
        lineups.append(np.tile(p.lineup.ids, (len(taus), 1)))
        labels.extend(int(p.terminal_action) if t == p.terminal_index else 4 for t in taus)
    return np.concatenate(frames), np.concatenate(lineups), np.asarray(labels, dtype=np.int64), shortfalls


def batch_loss(
    possessions: Sequence[Possession],
    params: ModelParams,
    cfg: TrainConfig,
    epoch: int,
    mask_rng: np.random.Generator | None = None,
):
    """Mean NLL over the N(K+1) downsampled windows and its exact gradient.

    ``mask_rng=None`` disables dropout.
    """
    if len(possessions) == 0:
        raise ValueError("empty batch")
    frames, lineups, labels, _ = downsampled_batch(possessions, cfg, epoch)
    masks = sample_dropout_masks(params.config, frames.shape[0], mask_rng, training=mask_rng is not None)
    probs, cache = forward(frames, lineups, params, masks)
    loss = nll(probs, labels)
    return loss, backward(cache, labels, params)


def input_statistics(possessions: Sequence[Possession]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and standard deviation over every training moment."""
    stacked = np.concatenate([p.moments for p in possessions])
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return mean, np.where(std > 1e-6, std, 1.0)


def train_epoch(
    possessions: Sequence[Possession],
    params: ModelParams,
    optimizer,
    cfg: TrainConfig,
    epoch: int,
    dropout: bool = True,
) -> float:
    """One pass over shuffled possessions; updates ``params`` in place.

    Returns the mean training loss over batches.
    """
    order = substream(cfg.seed, "shuffle", epoch).permutation(len(possessions))
    losses = []
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        batch = [possessions[i] for i in order[start : start + cfg.batch_size]]
        mask_rng = substream(cfg.seed, "dropout", epoch, b) if dropout else None
        loss, grads = batch_loss(batch, params, cfg, epoch, mask_rng)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDivergedError(
                f"non-finite loss {loss} at epoch {epoch}, batch {b}",
                epoch,
                b,
                [p.id for p in batch],
                params.copy(),
            )
        optimizer.step(params, grads)
        losses.append(loss)
    return float(np.mean(losses))


# --------------------------------------------------------------------------
# early stopping and fit


class EarlyStopping:
    """Stop when ``patience`` epochs pass without a ``min_delta`` improvement.

    An improvement is measured against the reference value set at the last
    improving epoch; a drop of exactly ``min_delta`` counts. Independently,
    the epoch with the lowest monitored value is remembered as the best.
    """

    def __init__(self, patience: int = 5, min_delta: float = 0.01):
        self.patience = patience
        self.min_delta = min_delta
        self.reference: float | None = None
        self.wait = 0
        self.epoch = 0
        self.best_value = np.inf
        self.best_epoch = 0
        self.stopped = False

    def update(self, value: float) -> bool:
        """Record one epoch's value; True means training should stop."""
        self.epoch += 1
        if value < self.best_value:
            self.best_value, self.best_epoch = value, self.epoch
        if self.reference is None or self.reference - value >= self.min_delta - 1e-12:
            self.reference = value
            self.wait = 0
        else:
            self.wait += 1
        self.stopped = self.wait >= self.patience
        return self.stopped

    @property
    def improved_last(self) -> bool:
        return self.best_epoch == self.epoch


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_brier: float
    seconds: float


@dataclass
class FitResult:
    params: ModelParams
    best_epoch: int
    best_brier: float
    history: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    def write_log(self, stream, header: dict) -> None:
        stream.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for rec in self.history:
            stream.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
        stream.write(
            json.dumps({"best_epoch": self.best_epoch, "best_val_brier": self.best_brier,
                        "stopped_early": self.stopped_early}, sort_keys=True) + "\n"
        )


def validation_brier(params: ModelParams, possessions: Sequence[Possession], cfg: TrainConfig) -> float:
    positions = evaluation_positions(possessions, cfg.window, cfg.seed, stream="validation")
    probs, labels = predict_positions(ModelPredictor(params, cfg.window), positions)
    return brier_score(probs, labels)


def fit(
    train: Sequence[Possession],
    validation: Sequence[Possession],
    cfg: TrainConfig,
    roster_size: int,
    params: ModelParams | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> FitResult:
    """Train until early stopping; return the lowest-validation-Brier weights.

    Possessions must be polar and eligible for the window config.
    """
    if not train or not validation:
        raise ValueError("fit needs non-empty training and validation sets")
    if params is None:
        params = init_params(cfg.arch(roster_size), substream(cfg.seed, "init"))
        if cfg.standardize:
            params.input_mean, params.input_std = input_statistics(train)
    optimizer = make_optimizer(cfg)
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    best = params.copy()
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        loss = train_epoch(train, params, optimizer, cfg, epoch)
        seconds = time.perf_counter() - t0
        brier = validation_brier(params, validation, cfg)
        rec = EpochRecord(epoch, loss, brier, seconds)
        history.append(rec)
        log.info("epoch %d loss %.4f val_brier %.4f (%.1fs)", epoch, loss, brier, seconds)
        if on_epoch:
            on_epoch(rec)
        stop = stopper.update(brier)
        if stopper.improved_last:
            best = params.copy()
        if stop:
            break
    return FitResult(best, stopper.best_epoch, stopper.best_value, history, stopper.stopped)
