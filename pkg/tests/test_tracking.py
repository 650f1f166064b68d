import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_possession
from courtvalue.records import possession_from_record, possession_to_record
from courtvalue.tracking import (
    Lineup,
    Moment,
    Possession,
    TerminalAction,
    ValidationError,
    Window,
)


def test_five_classes_with_round_trip_tags():
    assert len(TerminalAction) == 5
    for a in TerminalAction:
        assert TerminalAction.from_tag(a.tag) is a
    with pytest.raises(ValueError):
        TerminalAction.from_tag("Dunk")


@pytest.mark.parametrize(
    "offense, defense, invariant",
    [
        ((0, 1, 2, 3), (5, 6, 7, 8, 9), "lineup_size"),
        ((0, 1, 2, 3, 4), (4, 6, 7, 8, 9), "lineup_distinct"),
        ((0, 1, 2, 3, -1), (5, 6, 7, 8, 9), "lineup_range"),
    ],
)
def test_lineup_invariants(offense, defense, invariant):
    with pytest.raises(ValidationError) as exc:
        Lineup(offense, defense)
    assert exc.value.invariant == invariant


def test_lineup_roster_check():
    lu = Lineup((0, 1, 2, 3, 4), (5, 6, 7, 8, 11))
    lu.check_roster(12)
    with pytest.raises(ValidationError):
        lu.check_roster(11)


def test_moment_vector_round_trip():
    vec = np.arange(24, dtype=float) * 0.5
    vec[23] = 12.0
    m = Moment.from_vector(vec)
    np.testing.assert_array_equal(m.to_vector(), vec)
    assert m.player_coords.shape == (10, 2)


@pytest.mark.parametrize(
    "col, value, invariant",
    [(23, 24.5, "shot_clock_range"), (23, -0.1, "shot_clock_range"), (22, -1.0, "ball_height"), (3, np.nan, "finite")],
)
def test_moment_invariants(col, value, invariant):
    vec = np.ones(24)
    vec[col] = value
    with pytest.raises(ValidationError) as exc:
        Moment.from_vector(vec)
    assert exc.value.invariant == invariant


def test_negative_polar_radius_rejected():
    vec = np.ones(24)
    vec[4] = -2.0
    Moment.from_vector(vec)  # fine as a Cartesian coordinate
    with pytest.raises(ValidationError) as exc:
        Moment.from_vector(vec, polar=True)
    assert exc.value.invariant == "polar_radius"


def test_possession_invariants():
    p = make_possession(50)
    assert len(p) == 50
    with pytest.raises(ValidationError) as exc:
        p.replace(terminal_index=50)
    assert exc.value.invariant == "terminal_index_range"
    with pytest.raises(ValidationError) as exc:
        p.replace(terminal_action=TerminalAction.NULL)
    assert exc.value.invariant == "terminal_not_null"
    with pytest.raises(ValidationError) as exc:
        p.replace(moments=np.ones((50, 23)))
    assert exc.value.invariant == "moment_dim"
    with pytest.raises(ValidationError) as exc:
        p.replace(attack_direction="up")
    assert exc.value.invariant == "attack_direction"
    with pytest.raises(ValidationError) as exc:
        p.replace(events=((50, "pass"),))
    assert exc.value.invariant == "event_index_range"


def test_possession_is_immutable():
    p = make_possession(20)
    with pytest.raises(ValueError):
        p.moments[0, 0] = 1.0
    with pytest.raises(AttributeError):
        p.terminal_index = 3


def test_window_shape():
    with pytest.raises(ValidationError):
        Window(np.ones((4, 23)), Lineup((0, 1, 2, 3, 4), (5, 6, 7, 8, 9)), 4, "a", 10)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 40),
    seed=st.integers(0, 2**31),
    direction=st.sampled_from(["left", "right"]),
    action=st.sampled_from([0, 1, 2, 3]),
    data=st.data(),
)
def test_record_round_trip(n, seed, direction, action, data):
    k = data.draw(st.integers(0, n - 1))
    events = tuple(sorted(data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.sampled_from(["pass", "assist"])), max_size=4))))
    p = make_possession(n, k, action, direction, seed, pid=f"id-{seed}", events=events)
    # unrounded doubles exercise the shortest round-trip float repr
    q = possession_from_record(possession_to_record(p))
    assert q == p
    assert isinstance(q, Possession)
