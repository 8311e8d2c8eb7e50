"""Stochastic and scripted (adversarial) context/reward environments."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .classes import ContextUniverse, gen_random_instance, truth_values
from .errors import SequenceError, ValidationError

FIXTURE_SEED = 12345
FIXTURE = {"N": 6, "K": 2, "members": 20, "beta": 0.05, "contexts": 8}


def _check_rewards(rewards: np.ndarray) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 2:
        raise ValidationError("rewards must be a 2-d array")
    if rewards.min() < 0 or rewards.max() > 1:
        raise ValidationError("rewards must lie in [0, 1]")
    return rewards


@dataclass(frozen=True)
class StochasticEnv:
    """Finite mixture of (context id, reward vector) atoms.

    ``truth`` holds f*(x) for every context id of the universe.
    """

    contexts: np.ndarray
    rewards: np.ndarray
    probs: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rewards", _check_rewards(self.rewards))
        p = np.asarray(self.probs, dtype=float)
        if p.min() < 0 or abs(p.sum() - 1) > 1e-12:
            raise ValidationError("atom probabilities must be nonnegative and sum to 1")
        if not (len(self.contexts) == len(self.rewards) == len(p)):
            raise ValidationError("atom arrays differ in length")
        object.__setattr__(self, "probs", p)

    kind = "stochastic"

    @property
    def n_items(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_atoms(self) -> int:
        return len(self.probs)

    def atom_values(self) -> np.ndarray:
        return self.truth[self.contexts]

    def draw_atoms(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        idx = np.searchsorted(np.cumsum(self.probs), u, side="right")
        return np.minimum(idx, self.n_atoms - 1)


@dataclass(frozen=True)
class AdversarialEnv:
    """A fixed script of (context id, reward vector) pairs, one per round."""

    contexts: np.ndarray
    rewards: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rewards", _check_rewards(self.rewards))
        object.__setattr__(self, "contexts", np.asarray(self.contexts, dtype=int))
        if len(self.contexts) != len(self.rewards):
            raise ValidationError("script contexts and rewards differ in length")

    kind = "adversarial"

    @property
    def n_items(self) -> int:
        return self.rewards.shape[1]

    def __len__(self):
        return len(self.contexts)


def env_step(env, t: int, rng: np.random.Generator):
    """Context id and reward vector for round ``t`` (1-based)."""
    if env.kind == "stochastic":
        a = int(env.draw_atoms(1, rng)[0])
        return int(env.contexts[a]), env.rewards[a]
    if t < 1 or t > len(env):
        raise SequenceError(f"script has {len(env)} rounds, round {t} requested")
    return int(env.contexts[t - 1]), env.rewards[t - 1]


# ---------------------------------------------------------------------------
# Scripts


def replay_script(env: StochasticEnv, horizon: int, rng: np.random.Generator) -> AdversarialEnv:
    """Record ``horizon`` draws of a stochastic environment as a script."""
    atoms = env.draw_atoms(horizon, rng)
    return AdversarialEnv(env.contexts[atoms], env.rewards[atoms], env.truth)


def drifting_script(truth: np.ndarray, horizon: int, period: float = 2000.0, seed: int = 0) -> AdversarialEnv:
    """Rewards rotate sinusoidally with per-item phases; contexts cycle."""
    n_ctx, n_items = truth.shape
    phase = np.random.default_rng(seed).random(n_items) * 2 * math.pi
    t = np.arange(horizon)[:, None]
    rewards = 0.5 + 0.5 * np.sin(2 * math.pi * t / period + phase[None, :])
    return AdversarialEnv(np.arange(horizon) % n_ctx, rewards, truth)


def switching_script(truth: np.ndarray, horizon: int, block: int = 500) -> AdversarialEnv:
    """Alternate blocks in which a single item carries all the reward.

    A learner that locks onto the last block's winner pays for every switch.
    """
    n_ctx, n_items = truth.shape
    t = np.arange(horizon)
    hot = (t // block) % n_items
    rewards = np.full((horizon, n_items), 0.05)
    rewards[t, hot] = 1.0
    return AdversarialEnv(t % n_ctx, rewards, truth)


GENERATORS = {"drifting": drifting_script, "switching": switching_script}


def load_script(path, truth: np.ndarray) -> AdversarialEnv:
    """Read ``{"contexts": [...], "rewards": [[...], ...]}`` from JSON."""
    with open(path) as fh:
        data = json.load(fh)
    return AdversarialEnv(np.asarray(data["contexts"], dtype=int), np.asarray(data["rewards"], dtype=float), truth)


def save_script(env: AdversarialEnv, path) -> None:
    with open(path, "w") as fh:
        json.dump({"contexts": env.contexts.tolist(), "rewards": env.rewards.tolist()}, fh)


# ---------------------------------------------------------------------------
# Fixtures


def stochastic_env(cls, universe: ContextUniverse, rng: np.random.Generator, probs=None) -> StochasticEnv:
    """One atom per context with i.i.d. uniform rewards."""
    n_ctx = universe.n_contexts
    truth = truth_values(cls, universe)
    rewards = rng.random((n_ctx, truth.shape[1]))
    probs = np.full(n_ctx, 1.0 / n_ctx) if probs is None else np.asarray(probs, dtype=float)
    return StochasticEnv(np.arange(n_ctx), rewards, probs, truth)


def standard_fixture(seed: int = FIXTURE_SEED):
    """Finite class (N=6, K=2, 20 members, beta=0.05) over 8 equiprobable atoms.

    The non-truth members sit at geometrically spaced distances from the
    truth (member 0), so estimation error shrinks smoothly with data.
    Returns ``(cls, universe, env, K)``.
    """
    rng = np.random.default_rng(seed)
    sizes = {"members": FIXTURE["members"], "contexts": FIXTURE["contexts"], "beta": FIXTURE["beta"],
             "structure": "shells"}
    cls, universe = gen_random_instance("finite", FIXTURE["N"], FIXTURE["K"], sizes, rng)
    env = stochastic_env(cls, universe, rng)
    return cls, universe, env, FIXTURE["K"]
