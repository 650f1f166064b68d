"""Polar transform, window extraction, null downsampling and dataset splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from courtvalue.seeding import substream
from courtvalue.tracking import (
    BALL_A,
    BALL_B,
    LEFT,
    POLAR,
    CourtGeometry,
    Possession,
    TerminalAction,
    ValidationError,
    Window,
)

log = logging.getLogger(__name__)

# (x, y) column pairs for the ten players and the ball.
_XY_PAIRS = [(2 * j, 2 * j + 1) for j in range(10)] + [(BALL_A, BALL_B)]
_X_COLS = np.array([p[0] for p in _XY_PAIRS])
_Y_COLS = np.array([p[1] for p in _XY_PAIRS])


class WindowBoundsError(IndexError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    """Window length ``T``, blind spot ``r`` and nulls per possession ``K``."""

    T: int = 128
    r: int = 16
    K: int = 2

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("window_length", f"T must be >= 1, got {self.T}")
        if self.r < 0:
            raise ValidationError("blind_spot", f"r must be >= 0, got {self.r}")
        if self.K < 0:
            raise ValidationError("null_samples", f"K must be >= 0, got {self.K}")

    @property
    def span(self) -> int:
        return self.T + self.r


def polar_moments(moments: np.ndarray, attack_direction: str, geometry: CourtGeometry) -> np.ndarray:
    """Convert every (x, y) pair of a Cartesian moment array to (radius, angle).

    Angles are measured from the axis pointing from the basket toward
    midcourt, so a possession and its reflection about midcourt map to the
    same polar values. A point exactly at the rim gets angle 0.
    """
    bx, by = geometry.basket(attack_direction)
    inward = 1.0 if attack_direction == LEFT else -1.0
    out = np.array(moments, dtype=np.float64, copy=True)
    u = (out[:, _X_COLS] - bx) * inward
    v = out[:, _Y_COLS] - by
    radius = np.hypot(u, v)
    angle = np.where(radius == 0.0, 0.0, np.arctan2(v, u))
    out[:, _X_COLS] = radius
    out[:, _Y_COLS] = angle
    return out


def to_polar(possession: Possession, geometry: CourtGeometry | None = None) -> Possession:
    if possession.is_polar:
        raise ValueError(f"possession {possession.id} is already in polar coordinates")
    geometry = geometry or CourtGeometry()
    moments = polar_moments(possession.moments, possession.attack_direction, geometry)
    return possession.replace(moments=moments, coords=POLAR)


def valid_positions(n_moments: int, cfg: WindowConfig) -> range:
    """Reference times admitting a full window: ``T + r <= tau <= n``."""
    return range(cfg.span, n_moments + 1)


def window_label(possession: Possession, tau: int) -> TerminalAction:
    return possession.terminal_action if tau == possession.terminal_index else TerminalAction.NULL


def check_window_bounds(possession: Possession, tau: int, cfg: WindowConfig) -> None:
    n = len(possession)
    if tau - cfg.span < 0:
        raise WindowBoundsError(
            f"possession {possession.id}: tau={tau} leaves no room for T+r={cfg.span} moments"
        )
    if tau > n:
        raise WindowBoundsError(f"possession {possession.id}: tau={tau} beyond possession length {n}")


def window_frames(possession: Possession, tau: int, cfg: WindowConfig) -> np.ndarray:
    check_window_bounds(possession, tau, cfg)
    return possession.moments[tau - cfg.span : tau - cfg.r]


def extract_window(possession: Possession, tau: int, cfg: WindowConfig) -> Window:
    """Frames ``[tau - (T + r), tau - r)`` labelled by what happens at ``tau``."""
    return Window(
        frames=window_frames(possession, tau, cfg),
        lineup=possession.lineup,
        label=window_label(possession, tau),
        possession_id=possession.id,
        reference_time=tau,
    )


def is_eligible(possession: Possession, cfg: WindowConfig) -> bool:
    """True when the terminal window itself can be extracted."""
    return possession.terminal_index >= cfg.span


def filter_eligible(possessions: Iterable[Possession], cfg: WindowConfig) -> list[Possession]:
    kept, dropped = [], 0
    for p in possessions:
        if is_eligible(p, cfg):
            kept.append(p)
        else:
            dropped += 1
    if dropped:
        log.info("dropped %d possessions too short for T+r=%d", dropped, cfg.span)
    return kept


def null_positions(possession: Possession, cfg: WindowConfig) -> np.ndarray:
    taus = np.arange(cfg.span, len(possession) + 1)
    return taus[taus != possession.terminal_index]


def sample_positions(
    possession: Possession, cfg: WindowConfig, seed: int, epoch: int = 0, stream: str = "downsample"
) -> tuple[list[int], bool]:
    """Reference times for one downsampled draw: terminal first, then K nulls.

    The draw depends only on ``(seed, epoch, possession id)``, so it is
    independent of batch order and changes when the epoch changes.
    Validation and test draws use their own ``stream`` with a fixed epoch.
    Returns the positions and a shortfall flag set when fewer than K nulls
    exist.
    """
    if not is_eligible(possession, cfg):
        raise WindowBoundsError(
            f"possession {possession.id}: terminal_index {possession.terminal_index} < T+r={cfg.span}"
        )
    candidates = null_positions(possession, cfg)
    shortfall = len(candidates) < cfg.K
    if cfg.K == 0:
        picked = []
    elif shortfall:
        picked = candidates.tolist()
    else:
        rng = substream(seed, stream, epoch, possession.id)
        picked = np.sort(rng.choice(candidates, size=cfg.K, replace=False)).tolist()
    return [possession.terminal_index, *picked], shortfall


def downsample_possession(
    possession: Possession, cfg: WindowConfig, seed: int, epoch: int = 0
) -> tuple[list[Window], bool]:
    """Terminal window plus K uniformly drawn Null windows (without replacement).

    Possessions with fewer than K null positions return every one they have
    and set the shortfall flag rather than oversampling.
    """
    taus, shortfall = sample_positions(possession, cfg, seed, epoch)
    if shortfall:
        log.debug("possession %s: only %d null positions for K=%d", possession.id, len(taus) - 1, cfg.K)
    return [extract_window(possession, t, cfg) for t in taus], shortfall


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ValidationError("split_disjoint", "a possession id appears in more than one split")


def split_dataset(
    possessions: Sequence[Possession] | Sequence[str],
    fractions: Sequence[float] = (0.75, 0.10, 0.15),
    seed: int = 0,
) -> DatasetSplit:
    """Seeded partition at possession granularity."""
    if len(possessions) == 0:
        raise ValueError("cannot split an empty dataset")
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
    ids = [p if isinstance(p, str) else p.id for p in possessions]
    if len(set(ids)) != len(ids):
        raise ValueError("possession ids must be unique")
    order = substream(seed, "split").permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    cut1 = int(round(fractions[0] * n))
    cut2 = int(round((fractions[0] + fractions[1]) * n))
    return DatasetSplit(tuple(shuffled[:cut1]), tuple(shuffled[cut1:cut2]), tuple(shuffled[cut2:]))
