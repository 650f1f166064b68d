"""
Synthetic possessions with a known terminal-action process.

Every possession is simulated in the attack-right frame and mirrored when
it attacks left. Players follow mean-reverting walks toward role anchors,
the ball moves between offensive players with arced passes, and at each
live moment a terminal action fires with per-class probabilities that
depend on the ball's distance to the basket, the shot clock, whether the
ball is in flight, and the lineup's skill offsets. Those per-moment
probabilities are returned alongside the possession and serve as the exact
calibration oracle.

The trajectory never depends on whether an action fired, so it is drawn for
the longest possible possession and truncated at the first firing moment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.signal import lfilter

from courtvalue.preprocess import polar_moments
from courtvalue.seeding import substream
from courtvalue.tracking import (
    BALL_A,
    BALL_Z,
    MOMENT_SECONDS,
    N_CLASSES,
    RIGHT,
    LEFT,
    SHOT_CLOCK,
    SHOT_CLOCK_MAX,
    CourtGeometry,
    Lineup,
    Possession,
    TerminalAction,
    ValidationError,
)

log = logging.getLogger(__name__)

FG, SF, NSF, TO, NULL = (int(a) for a in TerminalAction)
N_HAZARDS = 4
LIVE_MOMENTS = int(round(SHOT_CLOCK_MAX / MOMENT_SECONDS)) + 1  # clock 24.00 .. 0.00

TEAM_SIZE = 12

# Offensive role anchors as (distance from basket toward midcourt, lateral offset) in feet.
_OFFENSE_ROLES = np.array(
    [
        [25.0, 0.0],  # top of the key
        [20.0, 16.0],  # wing
        [20.0, -16.0],  # wing
        [2.0, 22.0],  # corner
        [8.0, -6.0],  # post
    ]
)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic process.

    ``base_hazards`` are per-moment probabilities for (FG attempt, shooting
    foul, non-shooting foul, turnover) at the reference state: ball 10 ft
    from the basket, full shot clock, average lineup. Null is the
    complement. ``skills`` optionally fixes an (m, 4) matrix of per-player
    log-hazard offsets; otherwise it is drawn from ``skill_sd``.
    """

    roster_size: int = 60
    n_possessions: int = 2000
    seed: int = 0
    noise_scale: float = 0.35
    base_hazards: tuple[float, float, float, float] = (0.0037, 0.00088, 0.00022, 0.00025)
    skill_sd: float = 0.08
    skills: np.ndarray | None = field(default=None, compare=False)
    modulate: bool = True
    distance_coef: tuple[float, float, float, float] = (1.1, 1.4, 0.2, 0.0)
    clock_coef: tuple[float, float, float, float] = (2.0, 0.5, 0.0, 0.5)
    flight_turnover_factor: float = 3.0
    dead_ball_seconds: tuple[float, float] = (8.5, 24.5)
    advance_seconds: float = 5.0
    mean_hold_seconds: float = 2.0
    flight_moments: tuple[int, int] = (8, 20)
    drive_fraction: float = 0.55
    drive_seconds: float = 3.0
    buzzer_fg_prob: float = 0.6
    make_intercept: float = 0.755
    make_slope: float = 0.011
    make_bounds: tuple[float, float] = (0.30, 0.74)
    ft_pct: float = 0.77
    penalty_fraction: float = 0.35
    max_total_hazard: float = 0.5
    geometry: CourtGeometry = CourtGeometry()

    def __post_init__(self):
        if self.roster_size < 2 * TEAM_SIZE:
            raise ValidationError("roster_size", f"roster needs at least {2 * TEAM_SIZE} players")
        if self.n_possessions < 0:
            raise ValidationError("n_possessions", "possession count must be non-negative")
        if len(self.base_hazards) != N_HAZARDS or min(self.base_hazards) < 0:
            raise ValidationError("hazard_nonnegative", f"base hazards must be 4 values >= 0: {self.base_hazards}")
        if not 0 < self.max_total_hazard <= 1:
            raise ValidationError("hazard_cap", "max_total_hazard must lie in (0, 1]")
        if self.skills is not None and np.shape(self.skills) != (self.roster_size, N_HAZARDS):
            raise ValidationError("skills_shape", f"skills must be ({self.roster_size}, 4)")
        lo, hi = self.dead_ball_seconds
        if not 0 <= lo <= hi:
            raise ValidationError("dead_ball_seconds", "dead ball range must satisfy 0 <= low <= high")
        if not 0 <= self.buzzer_fg_prob <= 1:
            raise ValidationError("buzzer_fg_prob", "must be a probability")

    def player_skills(self) -> np.ndarray:
        if self.skills is not None:
            return np.asarray(self.skills, dtype=np.float64)
        return substream(self.seed, "skills").normal(0.0, self.skill_sd, size=(self.roster_size, N_HAZARDS))


@dataclass(frozen=True, eq=False)
class GeneratedPossession:
    possession: Possession
    oracle: np.ndarray  # (n, 5) per-moment outcome distribution
    points: int


def _ar1_noise(rng: np.random.Generator, n: int, dim: int, rho: float) -> np.ndarray:
    w = rng.standard_normal((n, dim)) * np.sqrt(1.0 - rho * rho)
    zi = rng.standard_normal((1, dim)) * rho
    out, _ = lfilter([1.0], [1.0, -rho], w, axis=0, zi=zi)
    return out


def _ou_track(anchor: np.ndarray, start: np.ndarray, kappa: float, noise: np.ndarray) -> np.ndarray:
    """Mean-reverting walk ``p[t] = p[t-1] + kappa * (a[t] - p[t-1]) + noise[t]``."""
    drive = kappa * anchor + noise
    zi = ((1.0 - kappa) * start)[None, :]
    out, _ = lfilter([1.0], [1.0, -(1.0 - kappa)], drive, axis=0, zi=zi)
    return out


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _hold_schedule(rng, cfg: GeneratorConfig, live_start: int, total: int):
    """Ball-holder timeline: list of (holder, catch_moment, release_moment, flight_end)."""
    p_release = MOMENT_SECONDS / cfg.mean_hold_seconds
    holds = []
    holder, catch = 0, 0
    # The inbounder keeps the ball through the dead-ball phase.
    t = live_start + int(rng.geometric(p_release))
    while t < total:
        lo, hi = cfg.flight_moments
        flight = int(rng.integers(lo, hi + 1))
        receiver = int(rng.choice([k for k in range(5) if k != holder]))
        holds.append((holder, catch, t, t + flight, receiver))
        holder, catch = receiver, t + flight
        t = catch + int(rng.geometric(p_release))
    holds.append((holder, catch, total, total, -1))
    return holds


def hazard_matrix(
    ball_radius: np.ndarray,
    shot_clock: np.ndarray,
    in_flight: np.ndarray,
    live: np.ndarray,
    skill_offset: np.ndarray,
    cfg: GeneratorConfig,
) -> np.ndarray:
    """Per-moment (n, 5) outcome distribution implied by the state.

    The final live moment (shot clock at zero) forces a terminal action.
    """
    n = ball_radius.shape[0]
    base = np.asarray(cfg.base_hazards, dtype=np.float64)
    if cfg.modulate:
        dist = np.asarray(cfg.distance_coef)
        clock = np.asarray(cfg.clock_coef)
        r = np.clip(ball_radius, 0.0, 60.0)[:, None]
        urgency = (1.0 - shot_clock / SHOT_CLOCK_MAX)[:, None] ** 2
        log_h = np.log(np.maximum(base, 1e-300)) - dist * (r - 10.0) / 10.0 + clock * urgency + skill_offset
        h = np.where(base > 0, np.exp(log_h), 0.0)
        h[in_flight, FG] = 0.0
        h[in_flight, SF] = 0.0
        h[in_flight, TO] *= cfg.flight_turnover_factor
    else:
        h = np.tile(base, (n, 1))
    h[~live] = 0.0
    total = h.sum(axis=1, keepdims=True)
    scale = np.where(total > cfg.max_total_hazard, cfg.max_total_hazard / np.maximum(total, 1e-300), 1.0)
    h = h * scale
    out = np.zeros((n, N_CLASSES))
    out[:, :N_HAZARDS] = h
    buzzer = live & (shot_clock <= 0.0)
    if np.any(buzzer):
        # a heave at the buzzer when shots are possible at all, else a violation
        fg_prob = cfg.buzzer_fg_prob if base[FG] > 0 else 0.0
        fg = np.where(in_flight[buzzer], 0.0, fg_prob)
        out[buzzer] = 0.0
        out[buzzer, FG] = fg
        out[buzzer, TO] = 1.0 - fg
    out[:, NULL] = 1.0 - out[:, :N_HAZARDS].sum(axis=1)
    return out


def make_probability(radius: float, cfg: GeneratorConfig) -> float:
    lo, hi = cfg.make_bounds
    return float(np.clip(cfg.make_intercept - cfg.make_slope * radius, lo, hi))


def _simulate(index: int, cfg: GeneratorConfig, skills: np.ndarray) -> GeneratedPossession:
    rng = substream(cfg.seed, "generator", index)
    geo = cfg.geometry
    bx, by = geo.right_basket

    # Lineup: offense and defense from two different teams, slots sorted by id.
    n_teams = cfg.roster_size // TEAM_SIZE
    team_off, team_def = rng.choice(n_teams, size=2, replace=False)
    offense = np.sort(team_off * TEAM_SIZE + rng.choice(TEAM_SIZE, size=5, replace=False))
    defense = np.sort(team_def * TEAM_SIZE + rng.choice(TEAM_SIZE, size=5, replace=False))
    lineup = Lineup(tuple(offense.tolist()), tuple(defense.tolist()))
    skill_offset = skills[list(lineup.ids)].sum(axis=0)

    lo, hi = cfg.dead_ball_seconds
    dead = int(round(rng.uniform(lo, hi) / MOMENT_SECONDS))
    total = dead + LIVE_MOMENTS
    t = np.arange(total)
    live = t >= dead
    clock = np.where(live, np.round(SHOT_CLOCK_MAX - (t - dead) * MOMENT_SECONDS, 2), SHOT_CLOCK_MAX)
    clock = np.maximum(clock, 0.0)

    # Offensive anchors: backcourt start -> frontcourt role spots.
    roles = _OFFENSE_ROLES[rng.permutation(5)] + rng.uniform(-3.0, 3.0, size=(5, 2))
    roles[0] = _OFFENSE_ROLES[0] + rng.uniform(-3.0, 3.0, size=2)  # inbounder brings the ball up
    front = np.column_stack([bx - roles[:, 0], by + roles[:, 1]])
    back = np.column_stack([rng.uniform(14.0, 40.0, 5), rng.uniform(8.0, 42.0, 5)])
    back[0] = [rng.uniform(0.5, 3.0), rng.uniform(15.0, 35.0)]
    progress = _smoothstep((t - dead) / (cfg.advance_seconds / MOMENT_SECONDS))[:, None, None]
    anchors = back[None] + (front - back)[None] * progress  # (total, 5, 2)

    holds = _hold_schedule(rng, cfg, dead, total)
    drive_len = cfg.drive_seconds / MOMENT_SECONDS
    basket = np.array([bx, by])
    for holder, catch, release, _, _ in holds:
        start = max(catch, dead)
        if release <= start:
            continue
        span = np.arange(start, release)
        frac = cfg.drive_fraction * _smoothstep((span - start) / drive_len)[:, None]
        anchors[span, holder] += frac * (basket - anchors[span, holder])

    noise = _ar1_noise(rng, total, 10, rho=0.9) * cfg.noise_scale
    offense_xy = _ou_track(anchors.reshape(total, 10), back.ravel(), 0.06, noise)
    offense_xy = offense_xy.reshape(total, 5, 2)
    mark = basket + 0.7 * (offense_xy - basket)
    def_start = basket + 0.7 * (back - basket)
    noise = _ar1_noise(rng, total, 10, rho=0.9) * cfg.noise_scale
    defense_xy = _ou_track(mark.reshape(total, 10), def_start.ravel(), 0.12, noise).reshape(total, 5, 2)

    ball = np.empty((total, 3))
    in_flight = np.zeros(total, dtype=bool)
    dribble = 2.5 + np.abs(np.sin(2.0 * np.pi * t / 12.0))
    passes = []
    for holder, catch, release, landed, receiver in holds:
        ball[catch:release, :2] = offense_xy[catch:release, holder] + [0.5, 0.0]
        ball[catch:release, 2] = dribble[catch:release]
        if receiver < 0:
            continue
        end = min(landed, total)
        if end > release:
            s = (np.arange(release, end) - release + 1) / (landed - release + 1)
            p0 = offense_xy[release - 1, holder]
            p1 = offense_xy[min(landed, total - 1), receiver]
            ball[release:end, :2] = p0 + (p1 - p0) * s[:, None]
            ball[release:end, 2] = 5.0 + 8.0 * s * (1.0 - s)
            in_flight[release:end] = True
        passes.append((release, landed, holder, receiver))

    moments = np.empty((total, 24))
    moments[:, 0:10] = offense_xy.reshape(total, 10)
    moments[:, 10:20] = defense_xy.reshape(total, 10)
    moments[:, BALL_A : BALL_Z + 1] = ball
    moments[:, :20:2] = np.clip(moments[:, :20:2], -2.0, geo.length + 2.0)
    moments[:, 1:20:2] = np.clip(moments[:, 1:20:2], -2.0, geo.width + 2.0)
    moments[:, BALL_A] = np.clip(moments[:, BALL_A], -2.0, geo.length + 2.0)
    moments[:, BALL_A + 1] = np.clip(moments[:, BALL_A + 1], -2.0, geo.width + 2.0)
    moments[:, :SHOT_CLOCK] = np.round(moments[:, :SHOT_CLOCK], 2)
    moments[:, BALL_Z] = np.maximum(moments[:, BALL_Z], 0.0)
    moments[:, SHOT_CLOCK] = clock

    ball_radius = polar_moments(moments, RIGHT, geo)[:, BALL_A]
    oracle = hazard_matrix(ball_radius, clock, in_flight, live, skill_offset, cfg)

    # First firing moment and its class.
    u = rng.random(total)
    fire_prob = 1.0 - oracle[:, NULL]
    fired = np.flatnonzero(u < fire_prob)
    stop = int(fired[0]) if fired.size else total - 1
    cum = np.cumsum(oracle[stop, :N_HAZARDS]) / max(fire_prob[stop], 1e-300)
    action = TerminalAction(int(np.searchsorted(cum, rng.random(), side="right").clip(0, N_HAZARDS - 1)))

    radius = float(ball_radius[stop])
    three = radius >= geo.three_point_radius
    if action == TerminalAction.FIELD_GOAL_ATTEMPT:
        made = rng.random() < make_probability(radius, cfg)
        points = (3 if three else 2) if made else 0
    elif action == TerminalAction.SHOOTING_FOUL:
        made = False
        points = int(rng.binomial(3 if three else 2, cfg.ft_pct))
    elif action == TerminalAction.NON_SHOOTING_FOUL:
        made = False
        points = int(rng.binomial(2, cfg.ft_pct)) if rng.random() < cfg.penalty_fraction else 0
    else:
        made = False
        points = 0

    n = stop + 1
    moments = moments[:n]
    events = [(release, "pass") for release, _, _, _ in passes if release < n]
    if made:
        shooter_passes = [p for p in passes if p[1] <= stop]
        if shooter_passes:
            events.append((shooter_passes[-1][0], "assist"))
    events.append((stop, f"points:{points}"))
    events.sort()

    attack = RIGHT if rng.random() < 0.5 else LEFT
    if attack == LEFT:
        moments[:, :20:2] = np.round(geo.length - moments[:, :20:2], 2)
        moments[:, BALL_A] = np.round(geo.length - moments[:, BALL_A], 2)

    possession = Possession(
        id=f"p{index:06d}",
        moments=moments,
        lineup=lineup,
        terminal_action=action,
        terminal_index=stop,
        attack_direction=attack,
        events=tuple(events),
    )
    return GeneratedPossession(possession, oracle[:n], points)


def generate_possession(cfg: GeneratorConfig, index: int, skills: np.ndarray | None = None) -> GeneratedPossession:
    """Simulate possession ``index`` of the corpus defined by ``cfg``.

    Each index draws from its own seeded substream, so possessions can be
    generated independently and in any order.
    """
    if skills is None:
        skills = cfg.player_skills()
    return _simulate(index, cfg, skills)


def iter_possessions(cfg: GeneratorConfig, start: int = 0, stop: int | None = None) -> Iterator[GeneratedPossession]:
    skills = cfg.player_skills()
    stop = cfg.n_possessions if stop is None else stop
    for i in range(start, stop):
        yield _simulate(i, cfg, skills)


def generate_corpus(cfg: GeneratorConfig) -> list[GeneratedPossession]:
    return list(iter_possessions(cfg))


def possession_points(possession: Possession) -> int:
    """Points recorded by the generator's ``points:k`` annotation."""
    for _, tag in possession.events:
        if tag.startswith("points:"):
            return int(tag.split(":", 1)[1])
    raise KeyError(f"possession {possession.id} carries no points annotation")


def oracle_window_probs(oracle: np.ndarray, taus) -> np.ndarray:
    """Ground-truth distribution for windows at ``taus``.

    ``tau == n`` lies one past the terminal moment where nothing can fire,
    so it gets all its mass on Null.
    """
    taus = np.asarray(taus, dtype=np.int64)
    n = oracle.shape[0]
    out = np.zeros((taus.size, N_CLASSES))
    inside = taus < n
    out[inside] = oracle[taus[inside]]
    out[~inside, NULL] = 1.0
    return out


def generate_dataset(cfg: GeneratorConfig, corpus_path, oracle_path=None, header=()) -> int:
    """Write the corpus (and optionally the oracle file) for ``cfg``.

    Output is a pure function of the config, so equal seeds give
    byte-identical files. Returns the number of possessions written.
    """
    from courtvalue import records

    oracles = []

    def possessions():
        for g in iter_possessions(cfg):
            if oracle_path is not None:
                oracles.append((g.possession.id, g.oracle))
            yield g.possession

    count = records.write_possessions(corpus_path, possessions(), header)
    if oracle_path is not None:
        records.write_oracles(oracle_path, oracles, header)
    return count
