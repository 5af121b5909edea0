import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doublesampling.core import (
    ENV_STREAM,
    POLICY_STREAM,
    BernoulliBandit,
    History,
    LinearGaussianBandit,
    RngStream,
    draw_reward,
    expected_reward,
    generate_context,
    history_from_sequences,
    optimal_arm,
    record,
)


@pytest.fixture
def gaussian():
    return LinearGaussianBandit([[0.4, 0.4], [0.8, 0.8]], 0.2)


def test_expected_reward_bernoulli():
    assert expected_reward(BernoulliBandit([0.4, 0.8]), 1) == 0.8


def test_expected_reward_gaussian(gaussian):
    assert expected_reward(gaussian, 1, [0.5, 0.5]) == pytest.approx(0.8, abs=1e-15)
    zero = LinearGaussianBandit(np.zeros((2, 2)), 1.0)
    assert expected_reward(zero, 0, [0.3, 0.9]) == 0.0


def test_expected_reward_errors(gaussian):
    with pytest.raises(ValueError):
        expected_reward(gaussian, 0)
    with pytest.raises(ValueError):
        expected_reward(gaussian, 0, [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        expected_reward(BernoulliBandit([0.1, 0.2]), 0, [0.5])
    with pytest.raises(IndexError):
        expected_reward(BernoulliBandit([0.1, 0.2]), 2)


def test_optimal_arm_examples(gaussian):
    assert optimal_arm(BernoulliBandit([0.4, 0.7, 0.8])) == 2
    assert optimal_arm(BernoulliBandit([0.5, 0.5])) == 0
    assert optimal_arm(gaussian, [0.5, 0.5]) == 1


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6))
def test_optimal_arm_beats_every_arm(theta):
    inst = BernoulliBandit(theta)
    best = optimal_arm(inst)
    assert all(expected_reward(inst, best) >= expected_reward(inst, a) for a in range(len(theta)))
    assert all(expected_reward(inst, a) < expected_reward(inst, best) for a in range(best))


def test_instance_validation():
    with pytest.raises(ValueError):
        BernoulliBandit([0.4, 1.2])
    with pytest.raises(ValueError):
        BernoulliBandit([0.4])
    with pytest.raises(ValueError):
        LinearGaussianBandit([[0.1, 0.2], [0.3, 0.4]], [0.2, 0.0])
    with pytest.raises(ValueError):
        LinearGaussianBandit([[0.1, 0.2]], 1.0)


def test_draw_reward_degenerate_bernoulli():
    rng = np.random.default_rng(0)
    inst = BernoulliBandit([0.0, 1.0])
    assert {draw_reward(inst, 1, None, rng) for _ in range(200)} == {1.0}
    assert {draw_reward(inst, 0, None, rng) for _ in range(200)} == {0.0}


def test_draw_reward_bernoulli_moments():
    rng = np.random.default_rng(1)
    inst = BernoulliBandit([0.2, 0.8])
    n = 100_000
    y = np.array([draw_reward(inst, 1, None, rng) for _ in range(n)])
    assert set(np.unique(y)) <= {0.0, 1.0}
    assert abs(y.mean() - 0.8) <= 3 * np.sqrt(0.16 / n)


def test_draw_reward_gaussian_moments(gaussian):
    rng = np.random.default_rng(2)
    x = np.array([0.3, 0.6])
    n = 100_000
    y = np.array([draw_reward(gaussian, 0, x, rng) for _ in range(n)])
    assert abs(y.std() - 0.2) <= 0.01 * 0.2
    assert abs(y.mean() - 0.36) <= 3 * 0.2 / np.sqrt(n)


def test_generate_context_moments():
    rng = np.random.default_rng(3)
    xs = np.stack([generate_context(3, rng) for _ in range(100_000)])
    assert xs.shape == (100_000, 3)
    assert xs.min() >= 0.0 and xs.max() <= 1.0
    assert np.all(np.abs(xs.mean(axis=0) - 0.5) <= 0.005)
    assert np.all(np.abs(xs.var(axis=0) / (1 / 12) - 1) <= 0.05)
    with pytest.raises(ValueError):
        generate_context(0, rng)


def test_record_appends():
    h = record(History(), 0, None, 1.0)
    assert len(h) == 1
    record(h, 1, None, 0.0)
    assert h.arms == [0, 1] and h.rewards == [1.0, 0.0]


def test_arm_times():
    h = history_from_sequences([0, 1, 0], [1, 0, 1])
    assert h.arm_times(0) == {1, 3}
    assert h.arm_times(1) == {2}


@given(st.lists(st.integers(0, 3), max_size=50))
def test_arm_times_partition(arms):
    h = history_from_sequences(arms, [0.0] * len(arms))
    sets = [h.arm_times(a) for a in range(4)]
    assert set().union(*sets) == set(range(1, len(arms) + 1))
    assert sum(len(s) for s in sets) == len(arms)


def test_record_checks_context_dimension():
    h = record(History(), 0, [0.1, 0.2], 0.5)
    with pytest.raises(ValueError):
        record(h, 1, [0.1, 0.2, 0.3], 0.5)
    X, y = h.arm_data(0)
    assert X.shape == (1, 2) and y.tolist() == [0.5]


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(42, 7).generator(ENV_STREAM).random(5)
    b = RngStream(42, 7).generator(ENV_STREAM).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, RngStream(42, 8).generator(ENV_STREAM).random(5))
    assert not np.array_equal(a, RngStream(42, 7).generator(POLICY_STREAM).random(5))
    assert not np.array_equal(a, RngStream(43, 7).generator(ENV_STREAM).random(5))


def test_rng_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    with pytest.raises(ValueError):
        RngStream(0, 2**64)
