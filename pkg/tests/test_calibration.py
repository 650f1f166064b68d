import io
import math

import numpy as np
import pytest

import oracles
from courtvalue.calibration import (
    N_BINS,
    bin_index,
    brier_score,
    brier_skill_score,
    calibration_violations,
    climatology,
    climatology_brier,
    reliability_curve,
)


def random_case(rng, n):
    probs = rng.dirichlet(np.full(5, rng.uniform(0.1, 2.0)), size=n)
    labels = rng.integers(0, 5, size=n)
    return probs, labels


def test_uniform_prediction_scores_point_eight():
    probs = np.full((7, 5), 0.2)
    assert brier_score(probs, [0, 1, 2, 3, 4, 4, 4]) == pytest.approx(0.8, abs=1e-15)


def test_perfect_and_worst_predictions():
    labels = np.array([0, 3, 4])
    assert brier_score(np.eye(5)[labels], labels) == 0.0
    assert brier_score(np.eye(5)[(labels + 1) % 5], labels) == 2.0


def test_skill_score_examples():
    assert brier_skill_score(0.3598, 0.4920) == pytest.approx(0.2686, abs=5e-4)
    assert brier_skill_score(0.0, 0.4) == 1.0
    assert brier_skill_score(0.4, 0.4) == 0.0
    assert brier_skill_score(0.6, 0.4) < 0
    with pytest.raises(ZeroDivisionError):
        brier_skill_score(0.1, 0.0)


def test_climatology_frequencies_and_reference():
    train = [4, 4, 4, 0]
    np.testing.assert_array_equal(climatology(train), [0.25, 0, 0, 0, 0.75])
    # test labels all Null: each sample scores 0.25^2 + 0.25^2
    assert climatology_brier(train, [4, 4]) == pytest.approx(0.125, abs=1e-15)


def test_climatology_is_optimal_constant_on_its_own_labels():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 5, 500)
    ref = climatology_brier(labels, labels)
    for _ in range(20):
        other = rng.dirichlet(np.ones(5))
        assert brier_score(np.tile(other, (500, 1)), labels) >= ref - 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_brier_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    probs, labels = random_case(rng, int(rng.integers(1, 1001)))
    assert brier_score(probs, labels) == oracles.brier(probs.tolist(), labels.tolist())


@pytest.mark.parametrize("seed", range(10))
def test_reliability_matches_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    probs, labels = random_case(rng, int(rng.integers(1, 401)))
    if seed % 2:
        # push some values onto bin edges
        probs[:, 0] = rng.integers(0, 21, size=len(probs)) / 20
        probs[:, 1:] = (1 - probs[:, :1]) * rng.dirichlet(np.ones(4), size=len(probs))
    curve = reliability_curve(probs, labels)
    ref = oracles.reliability(probs.tolist(), labels.tolist())
    for (c, k), (count, mp, fr) in ref.items():
        assert curve.counts[c, k] == count
        if count:
            assert curve.mean_pred[c, k] == mp and curve.frac[c, k] == fr
        else:
            assert math.isnan(curve.mean_pred[c, k]) and math.isnan(curve.frac[c, k])


def test_bin_edges():
    assert list(bin_index(np.array([0.0, 0.05, 0.0999, 0.15, 0.95, 1.0]))) == [0, 1, 1, 3, 19, 19]


def test_reliability_counts_per_class():
    rng = np.random.default_rng(3)
    probs, labels = random_case(rng, 333)
    curve = reliability_curve(probs, labels)
    assert curve.counts.shape == (5, N_BINS)
    assert np.all(curve.counts.sum(axis=1) == 333)


def test_calibrated_predictions_pass_and_biased_fail():
    rng = np.random.default_rng(5)
    n = 20000
    probs = rng.dirichlet(np.ones(5), size=n)
    labels = np.array([rng.choice(5, p=p) for p in probs])
    assert calibration_violations(reliability_curve(probs, labels)) == []
    skewed = np.roll(probs, 1, axis=1)
    assert calibration_violations(reliability_curve(skewed, labels))


def test_reliability_export():
    probs = np.full((4, 5), 0.2)
    buf = io.StringIO()
    reliability_curve(probs, [0, 1, 2, 4]).write(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split("\t") == ["class", "bin_low", "bin_high", "count", "mean_pred", "frac"]
    populated = [ln for ln in lines[1:] if ln.split("\t")[3] != "0"]
    assert len(populated) == 5


@pytest.mark.parametrize(
    "probs, labels",
    [
        (np.full((3, 4), 0.25), [0, 1, 2]),
        (np.full((3, 5), 0.2), [0, 1]),
        (np.full((2, 5), 0.3), [0, 1]),
        (np.full((2, 5), 0.2), [0, 5]),
        (np.empty((0, 5)), []),
    ],
)
def test_invalid_inputs(probs, labels):
    with pytest.raises(ValueError):
        brier_score(probs, labels)
