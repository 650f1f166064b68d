"""
Domain types for tracking moments, possessions, lineups and windows.

A moment is a flat 24-vector laid out as

    [p1_a, p1_b, ..., p10_a, p10_b, ball_a, ball_b, ball_z, shot_clock]

where ``(a, b)`` is ``(x, y)`` in feet for Cartesian possessions and
``(radius, angle)`` w.r.t. the offensive basket after the polar transform.
Player slots 1-5 are the offense and 6-10 the defense, in lineup order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MOMENT_DIM = 24
N_PLAYERS = 10
MOMENT_SECONDS = 0.04
SHOT_CLOCK_MAX = 24.0

PLAYER_COLS = slice(0, 2 * N_PLAYERS)
BALL_A = 20
BALL_B = 21
BALL_Z = 22
SHOT_CLOCK = 23

CARTESIAN = "cartesian"
POLAR = "polar"
LEFT = "left"
RIGHT = "right"


class ValidationError(ValueError):
    """Raised when a constructor invariant is violated.

    ``invariant`` names the violated rule so callers can branch on it.
    """

    def __init__(self, invariant: str, message: str):
        super().__init__(f"[{invariant}] {message}")
        self.invariant = invariant


class TerminalAction(enum.IntEnum):
    FIELD_GOAL_ATTEMPT = 0
    SHOOTING_FOUL = 1
    NON_SHOOTING_FOUL = 2
    TURNOVER = 3
    NULL = 4

    @property
    def tag(self) -> str:
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag: str) -> "TerminalAction":
        try:
            return _FROM_TAG[tag]
        except KeyError:
            raise ValueError(f"unknown terminal action tag {tag!r}") from None


_TAGS = {
    TerminalAction.FIELD_GOAL_ATTEMPT: "FieldGoalAttempt",
    TerminalAction.SHOOTING_FOUL: "ShootingFoul",
    TerminalAction.NON_SHOOTING_FOUL: "NonShootingFoul",
    TerminalAction.TURNOVER: "Turnover",
    TerminalAction.NULL: "Null",
}
_FROM_TAG = {v: k for k, v in _TAGS.items()}

N_CLASSES = len(TerminalAction)


@dataclass(frozen=True)
class CourtGeometry:
    """Court dimensions in feet. Baskets are the rim centres."""

    length: float = 94.0
    width: float = 50.0
    left_basket: tuple[float, float] = (5.25, 25.0)
    right_basket: tuple[float, float] = (88.75, 25.0)
    three_point_radius: float = 23.75

    def basket(self, attack_direction: str) -> tuple[float, float]:
        if attack_direction == LEFT:
            return self.left_basket
        if attack_direction == RIGHT:
            return self.right_basket
        raise ValueError(f"attack_direction must be 'left' or 'right', got {attack_direction!r}")


@dataclass(frozen=True)
class Lineup:
    """Five offensive and five defensive player identifiers."""

    offense: tuple[int, ...]
    defense: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "offense", tuple(int(p) for p in self.offense))
        object.__setattr__(self, "defense", tuple(int(p) for p in self.defense))
        if len(self.offense) != 5 or len(self.defense) != 5:
            raise ValidationError("lineup_size", "lineup needs exactly 5 offensive and 5 defensive players")
        ids = self.ids
        if len(set(ids)) != N_PLAYERS:
            raise ValidationError("lineup_distinct", f"player identifiers must be distinct: {ids}")
        if min(ids) < 0:
            raise ValidationError("lineup_range", f"player identifiers must be non-negative: {ids}")

    @property
    def ids(self) -> tuple[int, ...]:
        return self.offense + self.defense

    def check_roster(self, roster_size: int) -> None:
        if max(self.ids) >= roster_size:
            raise ValidationError(
                "lineup_range", f"player identifier {max(self.ids)} outside roster of size {roster_size}"
            )

    @classmethod
    def from_ids(cls, ids: Sequence[int]) -> "Lineup":
        ids = list(ids)
        if len(ids) != N_PLAYERS:
            raise ValidationError("lineup_size", f"expected 10 identifiers, got {len(ids)}")
        return cls(tuple(ids[:5]), tuple(ids[5:]))


@dataclass(frozen=True)
class Moment:
    """One 25 Hz snapshot. A view onto a row of ``Possession.moments``."""

    player_coords: np.ndarray  # (10, 2)
    ball: np.ndarray  # (3,)
    shot_clock: float
    polar: bool = False

    def __post_init__(self):
        pc = np.asarray(self.player_coords, dtype=np.float64).reshape(N_PLAYERS, 2)
        ball = np.asarray(self.ball, dtype=np.float64).reshape(3)
        object.__setattr__(self, "player_coords", pc)
        object.__setattr__(self, "ball", ball)
        object.__setattr__(self, "shot_clock", float(self.shot_clock))
        _check_moments(self.to_vector()[None, :], polar=self.polar)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.player_coords.ravel(), self.ball, [self.shot_clock]])

    @classmethod
    def from_vector(cls, vec: Sequence[float], polar: bool = False) -> "Moment":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (MOMENT_DIM,):
            raise ValidationError("moment_dim", f"moment must have 24 components, got shape {vec.shape}")
        return cls(vec[PLAYER_COLS].reshape(N_PLAYERS, 2), vec[BALL_A:SHOT_CLOCK], vec[SHOT_CLOCK], polar)


def _check_moments(moments: np.ndarray, polar: bool) -> None:
    if moments.ndim != 2 or moments.shape[1] != MOMENT_DIM:
        raise ValidationError("moment_dim", f"moments must be (n, 24), got shape {moments.shape}")
    if not np.all(np.isfinite(moments)):
        raise ValidationError("finite", "moment values must be finite")
    clock = moments[:, SHOT_CLOCK]
    if np.any(clock < 0.0) or np.any(clock > SHOT_CLOCK_MAX):
        raise ValidationError("shot_clock_range", "shot clock must lie in [0, 24]")
    if np.any(moments[:, BALL_Z] < 0.0):
        raise ValidationError("ball_height", "ball height must be non-negative")
    if polar:
        radii = np.concatenate([moments[:, 0:20:2], moments[:, [BALL_A]]], axis=1)
        if np.any(radii < 0.0):
            raise ValidationError("polar_radius", "polar radii must be non-negative")


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Possession:
    """An ordered run of moments ending in a terminal action.

    ``events`` holds free-form ``(moment index, tag)`` annotations such as
    ``"pass"`` or ``"assist"``.
    """

    id: str
    moments: np.ndarray
    lineup: Lineup
    terminal_action: TerminalAction
    terminal_index: int
    attack_direction: str
    coords: str = CARTESIAN
    events: tuple[tuple[int, str], ...] = field(default=())

    def __post_init__(self):
        moments = _frozen_array(self.moments)
        object.__setattr__(self, "moments", moments)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "terminal_action", TerminalAction(self.terminal_action))
        object.__setattr__(self, "terminal_index", int(self.terminal_index))
        object.__setattr__(self, "events", tuple((int(i), str(tag)) for i, tag in self.events))
        if self.coords not in (CARTESIAN, POLAR):
            raise ValidationError("coords", f"coords must be 'cartesian' or 'polar', got {self.coords!r}")
        if self.attack_direction not in (LEFT, RIGHT):
            raise ValidationError("attack_direction", f"got {self.attack_direction!r}")
        _check_moments(moments, polar=self.coords == POLAR)
        n = moments.shape[0]
        if n < 1:
            raise ValidationError("non_empty", "a possession needs at least one moment")
        if self.terminal_action == TerminalAction.NULL:
            raise ValidationError("terminal_not_null", "terminal action cannot be Null")
        if not 0 <= self.terminal_index < n:
            raise ValidationError("terminal_index_range", f"terminal_index {self.terminal_index} not in [0, {n})")
        for idx, tag in self.events:
            if not 0 <= idx < n:
                raise ValidationError("event_index_range", f"event {tag!r} at {idx} outside [0, {n})")

    def __len__(self) -> int:
        return self.moments.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Possession):
            return NotImplemented
        return (
            self.id == other.id
            and self.lineup == other.lineup
            and self.terminal_action == other.terminal_action
            and self.terminal_index == other.terminal_index
            and self.attack_direction == other.attack_direction
            and self.coords == other.coords
            and self.events == other.events
            and self.moments.shape == other.moments.shape
            and np.array_equal(self.moments, other.moments)
        )

    __hash__ = None

    @property
    def is_polar(self) -> bool:
        return self.coords == POLAR

    def moment(self, index: int) -> Moment:
        return Moment.from_vector(self.moments[index], polar=self.is_polar)

    def event_indices(self, tag: str) -> list[int]:
        return [i for i, t in self.events if t == tag]

    def replace(self, **changes) -> "Possession":
        fields = dict(
            id=self.id,
            moments=self.moments,
            lineup=self.lineup,
            terminal_action=self.terminal_action,
            terminal_index=self.terminal_index,
            attack_direction=self.attack_direction,
            coords=self.coords,
            events=self.events,
        )
        fields.update(changes)
        return Possession(**fields)


@dataclass(frozen=True, eq=False)
class Window:
    """Fixed-length run of frames ending a blind spot before ``reference_time``."""

    frames: np.ndarray
    lineup: Lineup
    label: TerminalAction
    possession_id: str
    reference_time: int

    def __post_init__(self):
        frames = _frozen_array(self.frames)
        if frames.ndim != 2 or frames.shape[1] != MOMENT_DIM or frames.shape[0] < 1:
            raise ValidationError("window_shape", f"frames must be (T, 24) with T >= 1, got {frames.shape}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "label", TerminalAction(self.label))

    def __len__(self) -> int:
        return self.frames.shape[0]


def lineup_array(lineups: Iterable[Lineup]) -> np.ndarray:
    return np.array([lu.ids for lu in lineups], dtype=np.int64).reshape(-1, N_PLAYERS)
