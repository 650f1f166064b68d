"""Expected points, expected points added, and the pass-vs-assist analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from courtvalue.preprocess import WindowBoundsError, WindowConfig, check_window_bounds, valid_positions
from courtvalue.seeding import substream
from courtvalue.synthgen import possession_points
from courtvalue.tracking import N_CLASSES, Possession, TerminalAction

FG, SF, NSF, TO, NULL = (int(a) for a in TerminalAction)


@dataclass(frozen=True)
class ValueMap:
    """Baseline points per possession and points above it for each action.

    The foul defaults come from Monte-Carlo runs of the default synthetic
    generator (mean points after the action minus the baseline); the field
    goal value is the league figure of 1.25 points per shot minus 1.02.
    """

    beta: float = 1.02
    field_goal: float = 0.23
    shooting_foul: float = 0.58
    non_shooting_foul: float = -0.50

    @property
    def nu(self) -> np.ndarray:
        out = np.zeros(N_CLASSES)
        out[FG] = self.field_goal
        out[SF] = self.shooting_foul
        out[NSF] = self.non_shooting_foul
        out[TO] = -self.beta
        out[NULL] = 0.0
        return out

    def value(self, action: TerminalAction) -> float:
        return float(self.nu[int(action)])


def _check_distribution(dist: np.ndarray) -> np.ndarray:
    d = np.asarray(dist, dtype=np.float64)
    if d.shape[-1] != N_CLASSES:
        raise ValueError(f"distribution must have {N_CLASSES} entries, got shape {d.shape}")
    if np.any(d < 0) or np.any(d > 1) or np.any(np.abs(d.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("not a probability vector")
    return d


def expected_points(dist, vmap: ValueMap = ValueMap()) -> float | np.ndarray:
    """``beta + sum_y P(y) nu(y)`` for one distribution or a stack of them."""
    d = _check_distribution(dist)
    ep = vmap.beta + d @ vmap.nu
    return float(ep) if np.ndim(ep) == 0 else ep


def points_added(later, earlier, vmap: ValueMap = ValueMap()):
    return expected_points(later, vmap) - expected_points(earlier, vmap)


@dataclass(frozen=True)
class MicroAction:
    possession_id: str
    tau: int
    kind: str
    epsilon: int = 21

    def check(self, cfg: WindowConfig) -> None:
        if self.epsilon <= cfg.r:
            raise ValueError(f"epsilon={self.epsilon} must exceed the blind spot r={cfg.r}")


def epa_bounds_ok(possession: Possession, tau: int, epsilon: int, cfg: WindowConfig) -> bool:
    return tau - epsilon >= cfg.span and tau + epsilon <= len(possession)


def expected_points_added(predictor, possession: Possession, action: MicroAction, vmap: ValueMap, cfg: WindowConfig) -> float:
    """EP of the window at ``tau + epsilon`` minus EP at ``tau - epsilon``.

    With ``epsilon > r`` the later window contains the action itself.
    """
    action.check(cfg)
    later, earlier = action.tau + action.epsilon, action.tau - action.epsilon
    for side, t in (("later", later), ("earlier", earlier)):
        try:
            check_window_bounds(possession, t, cfg)
        except WindowBoundsError as exc:
            raise WindowBoundsError(f"{side} window (tau={t}) not extractable: {exc}") from None
    probs = predictor(possession, [later, earlier])
    return float(points_added(probs[0], probs[1], vmap))


def sample_micro_actions(
    corpus: Sequence[Possession],
    kind: str,
    count: int,
    seed: int,
    epsilon: int = 21,
    cfg: WindowConfig | None = None,
) -> tuple[list[MicroAction], bool]:
    """Uniform sample without replacement of annotated events of ``kind``.

    With ``cfg`` given, only events whose two EPA windows fit inside the
    possession are candidates. Returns the sample and a shortfall flag.
    """
    candidates = []
    seen_kind = False
    for p in corpus:
        for tau in p.event_indices(kind):
            seen_kind = True
            if cfg is None or epa_bounds_ok(p, tau, epsilon, cfg):
                candidates.append(MicroAction(p.id, tau, kind, epsilon))
    if not seen_kind:
        raise KeyError(f"no {kind!r} events in corpus")
    if count <= 0:
        return [], False
    if count >= len(candidates):
        return candidates, count > len(candidates)
    rng = substream(seed, "micro_actions", kind)
    picked = np.sort(rng.choice(len(candidates), size=count, replace=False))
    return [candidates[i] for i in picked], False


# --------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """Survival function of the Kolmogorov distribution,
    ``2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)``, truncated at ``terms``."""
    if lam <= 0:
        return 1.0
    if lam < 0.2:
        return 1.0  # series converges too slowly to be useful; true value > 1 - 1e-12
    total = 0.0
    for k in range(1, terms + 1):
        total += (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
    return float(min(max(2.0 * total, 0.0), 1.0))


def ks_two_sample(sample_a, sample_b) -> KSResult:
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    n_eff = a.size * b.size / (a.size + b.size)
    return KSResult(d, kolmogorov_sf(math.sqrt(n_eff) * d))


def quartiles(values) -> tuple[float, float, float]:
    """Linear-interpolation quartiles on the sorted sample (inclusive method)."""
    x = sorted(float(v) for v in values)
    if len(x) < 2:
        raise ValueError("need at least two values")
    m = len(x) - 1
    out = []
    for i in (1, 2, 3):
        j, delta = divmod(i * m, 4)
        upper = x[j + 1] if j + 1 < len(x) else x[j]
        out.append((x[j] * (4 - delta) + upper * delta) / 4)
    return tuple(out)


# --------------------------------------------------------------------------
# reports


@dataclass
class KindSummary:
    kind: str
    values: np.ndarray
    shortfall: bool = False

    @property
    def quartiles(self):
        return quartiles(self.values) if self.values.size >= 2 else (math.nan,) * 3

    @property
    def fraction_positive(self) -> float:
        return float(np.mean(self.values > 0)) if self.values.size else math.nan


@dataclass
class EPAReport:
    summaries: dict[str, KindSummary]
    ks: KSResult | None
    alpha: float
    pair: tuple[str, str] = ("pass", "assist")
    actions: dict[str, list[MicroAction]] = field(default_factory=dict)

    @property
    def rejects(self) -> bool | None:
        return None if self.ks is None else self.ks.pvalue < self.alpha

    def write(self, stream: TextIO) -> None:
        stream.write("kind\tn\tq1\tmedian\tq3\tfrac_positive\tshortfall\n")
        for s in self.summaries.values():
            q1, q2, q3 = s.quartiles
            stream.write(f"{s.kind}\t{s.values.size}\t{q1!r}\t{q2!r}\t{q3!r}\t{s.fraction_positive!r}\t{int(s.shortfall)}\n")
        if self.ks is not None:
            a, b = self.pair
            stream.write(f"# ks {a} vs {b}: D={self.ks.statistic!r} p={self.ks.pvalue!r} "
                         f"alpha={self.alpha!r} reject={int(self.rejects)}\n")

    def write_samples(self, stream: TextIO) -> None:
        stream.write("kind\tpossession_id\ttau\tepa\n")
        for kind, acts in self.actions.items():
            for act, v in zip(acts, self.summaries[kind].values):
                stream.write(f"{kind}\t{act.possession_id}\t{act.tau}\t{float(v)!r}\n")


def epa_distribution_report(
    corpus: Sequence[Possession],
    predictor,
    vmap: ValueMap,
    cfg: WindowConfig,
    kinds: Iterable[str] = ("pass", "assist"),
    count: int = 512,
    epsilon: int = 21,
    seed: int = 0,
    alpha: float = 0.001,
) -> EPAReport:
    by_id = {p.id: p for p in corpus}
    summaries, actions = {}, {}
    for kind in kinds:
        acts, short = sample_micro_actions(corpus, kind, count, seed, epsilon, cfg)
        vals = np.array([expected_points_added(predictor, by_id[a.possession_id], a, vmap, cfg) for a in acts])
        summaries[kind] = KindSummary(kind, vals, short)
        actions[kind] = acts
    kinds = list(summaries)
    ks = None
    if len(kinds) >= 2 and all(summaries[k].values.size for k in kinds[:2]):
        ks = ks_two_sample(summaries[kinds[0]].values, summaries[kinds[1]].values)
    return EPAReport(summaries, ks, alpha, tuple(kinds[:2]), actions)


def ep_time_series(predictor, possession: Possession, vmap: ValueMap, cfg: WindowConfig):
    """``(tau, EP, probs)`` for every valid window position of a possession."""
    taus = list(valid_positions(len(possession), cfg))
    if not taus:
        return [], np.empty(0), np.empty((0, N_CLASSES))
    probs = predictor(possession, taus)
    return taus, expected_points(probs, vmap), probs


def estimate_value_map(possessions: Sequence[Possession], beta: float | None = None) -> ValueMap:
    """Fit ``nu`` from the generator's per-possession point annotations.

    ``beta`` defaults to the corpus mean points per possession.
    """
    points = np.array([possession_points(p) for p in possessions], dtype=np.float64)
    actions = np.array([int(p.terminal_action) for p in possessions])
    beta = float(points.mean()) if beta is None else beta

    def nu(a):
        sel = actions == a
        return float(points[sel].mean() - beta) if sel.any() else 0.0

    return ValueMap(beta=beta, field_goal=nu(FG), shooting_foul=nu(SF), non_shooting_foul=nu(NSF))
