"""Exact expected-reward maximisation over assortments of size at most K."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .core import Assortment, expected_reward, reward_vector, value_vector
from .errors import CapacityError, ValidationError

BRUTE_FORCE_MAX_ITEMS = 20
TIE_TOL = 1e-12


@dataclass(frozen=True)
class AssortmentSolution:
    assortment: Assortment
    value: float


@lru_cache(maxsize=64)
def all_assortments(n_items: int, capacity: int) -> tuple:
    """Every assortment with 1..capacity items, in lexicographic order."""
    if n_items < 1 or capacity < 1:
        raise ValidationError(f"need N >= 1 and K >= 1, got N={n_items}, K={capacity}")
    k_max = min(capacity, n_items)
    sets = [c for k in range(1, k_max + 1) for c in combinations(range(1, n_items + 1), k)]
    return tuple(sorted(sets))


@lru_cache(maxsize=64)
def incidence(n_items: int, capacity: int) -> np.ndarray:
    """Boolean (|S|, N) matrix whose row j marks the items of ``all_assortments()[j]``."""
    sets = all_assortments(n_items, capacity)
    a = np.zeros((len(sets), n_items), dtype=bool)
    for j, s in enumerate(sets):
        a[j, np.asarray(s) - 1] = True
    a.setflags(write=False)
    return a


def assortment_index(n_items: int, capacity: int) -> dict:
    return {s: j for j, s in enumerate(all_assortments(n_items, capacity))}


def reward_table(v: np.ndarray, r: np.ndarray, capacity: int) -> np.ndarray:
    """Expected reward of every assortment; ``v`` and ``r`` may carry leading batch axes."""
    v = np.asarray(v, dtype=float)
    r = np.asarray(r, dtype=float)
    a = incidence(v.shape[-1], capacity).astype(float)
    num = (v * r) @ a.T
    den = 1.0 + v @ a.T
    return num / den


def _first_max(values: np.ndarray) -> int:
    best = values.max()
    return int(np.flatnonzero(values >= best - TIE_TOL)[0])


def best_assortment_bruteforce(v, r, capacity: int) -> AssortmentSolution:
    """Enumerate every assortment; ties go to the lexicographically smallest item list."""
    v = value_vector(v)
    r = reward_vector(r)
    if v.size > BRUTE_FORCE_MAX_ITEMS:
        raise CapacityError(f"brute force limited to N <= {BRUTE_FORCE_MAX_ITEMS}, got N={v.size}")
    if r.size != v.size:
        raise ValidationError("rewards and values differ in length")
    vals = reward_table(v, r, capacity)
    j = _first_max(vals)
    s = all_assortments(v.size, capacity)[j]
    return AssortmentSolution(s, expected_reward(s, v, r))


def _top_positive(v: np.ndarray, r: np.ndarray, lam: float, capacity: int) -> np.ndarray:
    score = (r - lam) * v
    order = np.lexsort((np.arange(v.size), -score))  # descending score, then lower label
    top = order[:capacity]
    return np.sort(top[score[top] > 0])


def _slack(v: np.ndarray, r: np.ndarray, lam: float, capacity: int) -> float:
    top = _top_positive(v, r, lam, capacity)
    return float(((r[top] - lam) * v[top]).sum() - lam)


def best_assortment_fast(v, r, capacity: int) -> AssortmentSolution:
    """Maximise R(S, v, r) by searching the revenue threshold.

    R(S) >= lam  iff  sum_{i in S} (r_i - lam) v_i >= lam, so the optimum
    is the largest lam for which the best top-K set still clears the
    threshold.  The slack is strictly decreasing in lam; bisection runs to
    machine precision and the set kept from the feasible end is optimal.
    """
    v = value_vector(v)
    r = reward_vector(r)
    if r.size != v.size:
        raise ValidationError("rewards and values differ in length")
    lo, hi = 0.0, float(r.max()) if r.size else 0.0
    if _slack(v, r, hi, capacity) >= 0:
        lo = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _slack(v, r, mid, capacity) >= 0:
                lo = mid
            else:
                hi = mid
    top = _top_positive(v, r, lo, capacity)
    if top.size == 0:
        # every item has zero revenue rate; any singleton is optimal
        scores = r * v
        top = np.array([int(np.argmax(scores))])
    s = tuple(int(i) + 1 for i in top)
    return AssortmentSolution(s, expected_reward(s, v, r))
