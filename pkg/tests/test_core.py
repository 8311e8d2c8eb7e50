import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnl_bandits.core import (
    choice_distribution, choice_probs, choice_sq_distance, expected_reward, format_assortment, kl_divergence,
    log_loss, parse_assortment, rewards_of, sample_purchase,
)
from mnl_bandits.errors import DomainError, ValidationError


def probs(S, v):
    return choice_distribution(S, v).as_dict()


def test_choice_examples():
    assert probs((1,), [1.0]) == pytest.approx({0: 0.5, 1: 0.5})
    assert probs((1, 2), [0.0, 0.0, 0.3]) == pytest.approx({0: 1.0, 1: 0.0, 2: 0.0})
    assert probs((1, 2), [0.5, 0.25]) == pytest.approx({0: 4 / 7, 1: 2 / 7, 2: 1 / 7}, abs=1e-15)


@pytest.mark.parametrize("S", [(), (0,), (3,), (1, 1)])
def test_invalid_assortment(S):
    with pytest.raises(ValidationError):
        choice_distribution(S, [0.5, 0.5])


def test_invalid_values():
    with pytest.raises(ValidationError):
        choice_distribution((1,), [1.5])
    with pytest.raises(ValidationError):
        choice_distribution((1,), [float("nan")])


def test_expected_reward_examples():
    assert expected_reward((1,), [1.0], [1.0]) == pytest.approx(0.5)
    assert expected_reward((1, 3), [0.2, 0.9, 0.4], [0, 0, 0]) == 0.0
    assert expected_reward((1, 2), [1, 1], [1, 0]) == pytest.approx(1 / 3)


def test_sample_purchase():
    rng = np.random.default_rng(0)
    assert {sample_purchase((1,), [0.0], rng) for _ in range(200)} == {0}
    draws = np.array([sample_purchase((1,), [1.0], rng) for _ in range(10**6)])
    assert abs(draws.mean() - 0.5) < 0.002
    a = [sample_purchase((1, 2), [0.4, 0.7], np.random.default_rng(5)) for _ in range(3)]
    b = [sample_purchase((1, 2), [0.4, 0.7], np.random.default_rng(5)) for _ in range(3)]
    assert a == b


def test_log_loss_examples():
    assert log_loss(choice_distribution((1,), [1.0]), 0) == pytest.approx(math.log(2))
    mu = choice_distribution((1, 2), [0.5, 0.25])
    assert log_loss(mu, 2) == pytest.approx(-math.log(1 / 7))
    assert log_loss(choice_distribution((1,), [0.0]), 0) == 0.0
    with pytest.raises(DomainError):
        log_loss(choice_distribution((1,), [0.0]), 1)


def test_kl_examples():
    a = choice_distribution((1, 2), [0.4, 0.9])
    assert kl_divergence(a, choice_distribution((1, 2), [0.4, 0.9])) == 0.0
    c = choice_distribution((1,), [1.0])
    d = type(c)((0, 1), np.array([0.25, 0.75]))
    assert kl_divergence(c, d) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-12)
    with pytest.raises(DomainError):
        kl_divergence(c, choice_distribution((1, 2), [0.3, 0.3]))
    with pytest.raises(DomainError):
        kl_divergence(c, choice_distribution((1,), [0.0]))


def test_sq_distance_example():
    assert choice_sq_distance((1,), [1.0], [0.0]) == pytest.approx(0.5)
    assert choice_sq_distance((1, 2), [0.3, 0.8], [0.3, 0.8]) == 0.0


def test_format_roundtrip():
    assert format_assortment((2, 5, 7)) == "2+5+7"
    assert parse_assortment("2+5+7") == (2, 5, 7)


unit = st.floats(0, 1, allow_nan=False)


@st.composite
def instances(draw):
    N = draw(st.integers(1, 8))
    v = draw(st.lists(unit, min_size=N, max_size=N))
    r = draw(st.lists(unit, min_size=N, max_size=N))
    S = tuple(sorted(draw(st.sets(st.integers(1, N), min_size=1, max_size=N))))
    return S, np.array(v), np.array(r)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_normalization_and_vector_form(inst):
    S, v, r = inst
    mu = choice_distribution(S, v)
    assert abs(mu.probs.sum() - 1) < 1e-12
    mask = np.zeros(v.size, bool)
    mask[np.asarray(S) - 1] = True
    dense = choice_probs(v, mask)
    assert np.allclose(dense[[0, *S]], mu.probs, atol=1e-15)
    assert rewards_of(v, r, mask) == pytest.approx(expected_reward(S, v, r), abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(instances(), st.lists(unit, min_size=8, max_size=8))
def test_pinsker_and_sandwich(inst, other):
    S, v, _ = inst
    w = np.array(other[: v.size])
    a, b = choice_distribution(S, v), choice_distribution(S, w)
    if np.all(b.probs > 0):
        assert kl_divergence(a, b) >= 0.5 * np.abs(a.probs - b.probs).sum() ** 2 - 1e-12
    K = len(S)
    diff = ((v - w)[np.asarray(S) - 1] ** 2).sum()
    assert choice_sq_distance(S, v, w) >= diff / (2 * (K + 1) ** 4) - 1e-12
