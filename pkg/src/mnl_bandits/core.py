"""MNL choice model primitives.

Items are labelled 1..N and the no-purchase option is 0.  A value vector
``v`` is stored as a length-N float array with ``v[i - 1]`` the valuation of
item ``i``; the no-purchase valuation is the implicit constant 1.  Rewards
follow the same layout with an implicit no-purchase reward of 0.

All functions are pure; randomness comes in through an explicit
``numpy.random.Generator``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ValidationError

Assortment = tuple  # strictly increasing tuple of 1-based item labels

_UNIT_TOL = 1e-12


def value_vector(values, name: str = "values") -> np.ndarray:
    """Validate and copy a vector of item valuations in [0, 1]."""
    v = np.array(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValidationError("empty vector", field=name)
    if not np.all(np.isfinite(v)):
        raise ValidationError("non-finite entry", field=name)
    if v.min() < -_UNIT_TOL or v.max() > 1 + _UNIT_TOL:
        raise ValidationError(f"entries must lie in [0, 1], got range [{v.min()}, {v.max()}]", field=name)
    return np.clip(v, 0.0, 1.0)


def reward_vector(rewards) -> np.ndarray:
    return value_vector(rewards, name="rewards")


def assortment(items: Iterable[int], n_items: int, capacity: int | None = None) -> Assortment:
    """Return ``items`` as a validated, sorted tuple of item labels."""
    try:
        raw = [int(i) for i in items]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"assortment items must be integers: {exc}") from None
    s = tuple(sorted(raw))
    if not s:
        raise ValidationError("assortment is empty")
    if len(set(s)) != len(s):
        raise ValidationError(f"duplicate items in assortment {s}")
    if s[0] < 1 or s[-1] > n_items:
        raise ValidationError(f"assortment {s} has items outside 1..{n_items}")
    if capacity is not None and len(s) > capacity:
        raise ValidationError(f"assortment {s} exceeds capacity {capacity}")
    return s


def format_assortment(s: Sequence[int]) -> str:
    return "+".join(str(i) for i in s)


def parse_assortment(text: str) -> Assortment:
    return tuple(int(tok) for tok in text.split("+"))


@dataclass(frozen=True)
class ChoiceDistribution:
    """Purchase probabilities over ``support = (0, *S)``."""

    support: tuple
    probs: np.ndarray

    def prob(self, i: int) -> float:
        try:
            return float(self.probs[self.support.index(i)])
        except ValueError:
            raise DomainError(f"outcome {i} not in support {self.support}") from None

    def as_dict(self) -> dict:
        return {i: float(p) for i, p in zip(self.support, self.probs)}


def choice_distribution(s: Sequence[int], v) -> ChoiceDistribution:
    v = value_vector(v)
    s = assortment(s, v.size)
    vs = v[np.asarray(s) - 1]
    denom = 1.0 + vs.sum()
    probs = np.concatenate(([1.0], vs)) / denom
    return ChoiceDistribution(support=(0,) + s, probs=probs)


def expected_reward(s: Sequence[int], v, r) -> float:
    """Expected reward sum_{i in S} r_i v_i / (1 + sum_{i in S} v_i)."""
    v = value_vector(v)
    r = reward_vector(r)
    if r.size != v.size:
        raise ValidationError(f"rewards have length {r.size}, values {v.size}")
    idx = np.asarray(assortment(s, v.size)) - 1
    return float(np.dot(r[idx], v[idx]) / (1.0 + v[idx].sum()))


def sample_purchase(s: Sequence[int], v, rng: np.random.Generator) -> int:
    """Draw a purchase from the MNL model by inverting the CDF of one uniform."""
    mu = choice_distribution(s, v)
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(mu.probs), u, side="right"))
    return mu.support[min(k, len(mu.support) - 1)]


def log_loss(mu: ChoiceDistribution, i: int) -> float:
    p = mu.prob(i)
    if p <= 0.0:
        raise DomainError(f"log loss undefined: outcome {i} has probability 0")
    return float(-np.log(p))


def kl_divergence(mu_star: ChoiceDistribution, mu: ChoiceDistribution) -> float:
    """KL(mu_star || mu) over a shared support."""
    if tuple(mu_star.support) != tuple(mu.support):
        raise DomainError(f"support mismatch: {mu_star.support} vs {mu.support}")
    p, q = mu_star.probs, mu.probs
    pos = p > 0
    if np.any(q[pos] <= 0):
        raise DomainError("reference distribution has zero mass where mu_star is positive")
    return float(max(0.0, np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos])))))


def choice_sq_distance(s: Sequence[int], v, v_star) -> float:
    """Squared Euclidean distance between mu(S, v) and mu(S, v_star) on S and 0."""
    a = choice_distribution(s, v)
    b = choice_distribution(s, v_star)
    return float(np.sum((a.probs - b.probs) ** 2))


# ---------------------------------------------------------------------------
# Vectorised forms.  ``mask`` is a boolean (..., N) array marking the offered
# items; results carry the no-purchase option in column 0.


def choice_probs(v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    vm = np.where(mask, v, 0.0)
    denom = 1.0 + vm.sum(axis=-1, keepdims=True)
    return np.concatenate((np.ones_like(denom), vm), axis=-1) / denom


def rewards_of(v: np.ndarray, r: np.ndarray, mask: np.ndarray) -> np.ndarray:
    vm = np.where(mask, v, 0.0)
    return (vm * r).sum(axis=-1) / (1.0 + vm.sum(axis=-1))
