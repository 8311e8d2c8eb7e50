import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnl_bandits.assortment import (
    all_assortments, best_assortment_bruteforce, best_assortment_fast, incidence, reward_table,
)
from mnl_bandits.core import expected_reward
from mnl_bandits.errors import CapacityError


def test_enumeration_order():
    assert all_assortments(3, 2) == ((1,), (1, 2), (1, 3), (2,), (2, 3), (3,))
    assert len(all_assortments(5, 2)) == 5 + 10
    a = incidence(4, 2)
    assert a.shape == (10, 4) and a.sum(axis=1).max() == 2


def test_bruteforce_examples():
    s = best_assortment_bruteforce([1, 1, 1], [0.9, 0.5, 0.1], 1)
    assert s.assortment == (1,) and s.value == pytest.approx(0.45)
    s = best_assortment_bruteforce([0.3, 0.6, 0.2], [0, 0, 0], 2)
    assert s.assortment == (1,) and s.value == 0.0
    s = best_assortment_bruteforce([1, 0.5, 0.25], [0.2, 1.0, 1.0], 2)
    assert s.assortment == (2, 3) and s.value == pytest.approx(0.75 / 1.75)


def test_fast_examples():
    assert best_assortment_fast([0.4], [0.7], 1).assortment == (1,)
    assert best_assortment_fast([0.0], [0.0], 1).assortment == (1,)
    s = best_assortment_fast([1, 1, 1], [1, 1, 1], 3)
    assert s.assortment == (1, 2, 3) and s.value == pytest.approx(0.75)


def test_guard():
    with pytest.raises(CapacityError):
        best_assortment_bruteforce(np.full(21, 0.5), np.full(21, 0.5), 2)


def test_reward_table_matches_scalar(rng):
    v, r = rng.random(5), rng.random(5)
    tab = reward_table(v, r, 3)
    for j, S in enumerate(all_assortments(5, 3)):
        assert tab[j] == pytest.approx(expected_reward(S, v, r), abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 9), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_fast_matches_bruteforce(N, K, seed):
    rng = np.random.default_rng(seed)
    v, r = rng.random(N), rng.random(N)
    if seed % 3 == 0:  # coarse grids give many ties
        v, r = np.round(v, 1), np.round(r, 1)
    fast = best_assortment_fast(v, r, K)
    brute = best_assortment_bruteforce(v, r, K)
    assert abs(fast.value - brute.value) <= 1e-9
    assert fast.value == pytest.approx(expected_reward(fast.assortment, v, r), abs=1e-12)
    assert len(fast.assortment) <= K


def test_optimality_certificate(rng):
    for _ in range(50):
        N, K = int(rng.integers(2, 12)), int(rng.integers(1, 5))
        v, r = rng.random(N), rng.random(N)
        best = best_assortment_fast(v, r, K).value
        for _ in range(100):
            S = tuple(sorted(rng.choice(np.arange(1, N + 1), size=int(rng.integers(1, min(K, N) + 1)),
                                        replace=False)))
            assert best >= expected_reward(S, v, r) - 1e-9


def test_bruteforce_is_exhaustive(rng):
    v, r = rng.random(6), rng.random(6)
    vals = [expected_reward(S, v, r) for k in (1, 2, 3) for S in itertools.combinations(range(1, 7), k)]
    assert best_assortment_bruteforce(v, r, 3).value == pytest.approx(max(vals))
