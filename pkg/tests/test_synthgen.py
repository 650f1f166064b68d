import numpy as np
import pytest

from courtvalue.preprocess import WindowConfig, to_polar
from courtvalue.synthgen import (
    GeneratorConfig,
    generate_corpus,
    generate_dataset,
    generate_possession,
    iter_possessions,
    make_probability,
    possession_points,
)
from courtvalue.tracking import TerminalAction, ValidationError
from courtvalue.valuation import ValueMap


def test_turnover_only_process():
    cfg = GeneratorConfig(n_possessions=300, seed=1, base_hazards=(0.0, 0.0, 0.0, 0.002))
    corpus = generate_corpus(cfg)
    assert all(g.possession.terminal_action == TerminalAction.TURNOVER for g in corpus)
    assert all(g.points == 0 for g in corpus)
    # some of these ran the clock out, which must still be a turnover
    assert any(g.possession.moments[-1, 23] == 0.0 for g in corpus)


def test_stationary_hazard_frequencies():
    base = np.array([0.01, 0.003, 0.002, 0.005])
    cfg = GeneratorConfig(n_possessions=10_000, seed=2, base_hazards=tuple(base), modulate=False)
    actions = np.array([int(g.possession.terminal_action) for g in iter_possessions(cfg)])
    counts = np.bincount(actions, minlength=5)[:4]
    n = actions.size
    expected = base / base.sum()
    sigma = np.sqrt(n * expected * (1 - expected))
    assert np.all(np.abs(counts - n * expected) <= 3 * sigma), (counts, n * expected, sigma)


def test_oracle_rows_are_distributions(small_corpus):
    for g in small_corpus:
        o = g.oracle
        assert o.shape == (len(g.possession), 5)
        assert np.all(o >= 0)
        assert np.all(np.abs(o.sum(axis=1) - 1.0) <= 1e-12)


def test_possessions_valid_and_annotated(small_corpus):
    for g in small_corpus:
        p = g.possession
        assert p.terminal_index == len(p) - 1
        assert p.terminal_action != TerminalAction.NULL
        assert possession_points(p) == g.points
        passes = set(p.event_indices("pass"))
        assert set(p.event_indices("assist")) <= passes
        if p.event_indices("assist"):
            assert p.terminal_action == TerminalAction.FIELD_GOAL_ATTEMPT and g.points > 0
        to_polar(p)  # polar radii valid


def test_dead_ball_phase_has_no_hazard(small_corpus):
    for g in small_corpus[:10]:
        # the clock reads 24.00 through the dead ball and the first live moment
        dead = np.flatnonzero(g.possession.moments[:, 23] == 24.0)[:-1]
        assert dead.size > 100
        assert np.all(g.oracle[dead, 4] == 1.0)


def test_make_probability_decreases():
    cfg = GeneratorConfig()
    values = [make_probability(r, cfg) for r in (0, 5, 15, 25, 50)]
    assert values == sorted(values, reverse=True)
    assert values[0] == cfg.make_bounds[1] and values[-1] == cfg.make_bounds[0]


def test_generation_is_independent_of_order():
    cfg = GeneratorConfig(n_possessions=5, seed=7)
    forward = [g.possession for g in iter_possessions(cfg)]
    assert generate_possession(cfg, 3).possession == forward[3]


def test_dataset_deterministic_and_count(tmp_path):
    cfg = GeneratorConfig(n_possessions=25, seed=4)
    paths = [(tmp_path / f"c{i}.jsonl", tmp_path / f"o{i}.jsonl") for i in range(2)]
    for c, o in paths:
        assert generate_dataset(cfg, c, o) == 25
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()
    other = GeneratorConfig(n_possessions=25, seed=5)
    generate_dataset(other, tmp_path / "x.jsonl")
    assert (tmp_path / "x.jsonl").read_bytes() != paths[0][0].read_bytes()


def test_config_validation():
    with pytest.raises(ValidationError):
        GeneratorConfig(base_hazards=(0.1, -0.1, 0.0, 0.0))
    with pytest.raises(ValidationError):
        GeneratorConfig(roster_size=10)


def test_null_imbalance_near_600_to_1():
    cfg = GeneratorConfig(n_possessions=2000, seed=0)
    span = WindowConfig().span
    lengths = np.array([len(g.possession) for g in iter_possessions(cfg)])
    eligible = lengths[lengths > span]
    ratio = (eligible - span).sum() / eligible.size
    assert 550 <= ratio <= 650, ratio


@pytest.fixture(scope="module")
def large_run():
    cfg = GeneratorConfig(n_possessions=50_000, seed=123)
    pts, acts = [], []
    for g in iter_possessions(cfg):
        pts.append(g.points)
        acts.append(int(g.possession.terminal_action))
    return np.array(pts, dtype=float), np.array(acts)


def test_points_per_possession_matches_baseline(large_run):
    pts, _ = large_run
    assert abs(pts.mean() - 1.02) <= 0.02


def test_default_value_map_matches_monte_carlo(large_run):
    pts, acts = large_run
    vmap = ValueMap()
    for a, nu in [(0, vmap.field_goal), (1, vmap.shooting_foul), (2, vmap.non_shooting_foul)]:
        sel = pts[acts == a]
        se = sel.std() / np.sqrt(sel.size)
        assert abs(sel.mean() - vmap.beta - nu) <= max(4 * se, 0.02), (a, sel.mean() - vmap.beta, nu)
