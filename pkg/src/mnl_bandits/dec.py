"""Numerical lower bounds on the decision-estimation coefficient of an assortment distribution."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .assortment import all_assortments, incidence, reward_table
from .core import choice_probs, reward_vector, value_vector
from .errors import ValidationError

DEFAULT_SEARCH = {
    "mode": "auto",  # grid when N <= 4, random otherwise, or "candidates"
    "grid_step": 0.05,
    "samples": 1_000_000,
    "seed": 0,
    "polish_sweeps": 20,
    "polish_start": 0.05,
    "polish_end": 1e-4,
    "chunk": 50_000,
    "candidates": None,
}


@dataclass(frozen=True)
class DecEstimate:
    value: float
    witness_S: tuple
    witness_v: np.ndarray
    budget_used: int


class _Objective:
    """R(S*, v*) - E_q R(S, v*) - gamma E_q ||mu(S, v) - mu(S, v*)||^2, maximised over S*."""

    def __init__(self, q, v, r, gamma, capacity):
        self.N = v.size
        self.capacity = capacity
        self.r = r
        self.gamma = gamma
        index = {s: j for j, s in enumerate(all_assortments(self.N, capacity))}
        self.q_sets = np.array([index[s] for s in q.support])
        self.q_probs = q.probs
        self.q_mask = incidence(self.N, capacity)[self.q_sets]  # (|supp|, N)
        self.mu_v = choice_probs(v, self.q_mask)  # (|supp|, N+1)

    def table(self, cands: np.ndarray):
        """Objective for every candidate and every S*: shape (M, |S|)."""
        R = reward_table(cands, self.r, self.capacity)  # (M, |S|)
        played = R[:, self.q_sets] @ self.q_probs
        mu = choice_probs(cands[:, None, :], self.q_mask[None])  # (M, |supp|, N+1)
        pen = ((mu - self.mu_v[None]) ** 2).sum(axis=2) @ self.q_probs
        return R - (played + self.gamma * pen)[:, None]

    def best(self, cands: np.ndarray):
        tab = self.table(cands)
        j = np.argmax(tab, axis=1)
        return tab[np.arange(len(cands)), j], j


def _grid(n_items: int, step: float) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    return np.array(list(itertools.product(axis, repeat=n_items)))


def dec_objective(q, v, r, gamma: float, capacity: int, S_star, v_star) -> float:
    """Inner objective at a single (S*, v*)."""
    v = value_vector(v)
    obj = _Objective(q, v, reward_vector(r), gamma, capacity)
    tab = obj.table(value_vector(v_star, "v_star")[None, :])[0]
    return float(tab[all_assortments(v.size, capacity).index(tuple(S_star))])


def dec_estimate(q, v, r, gamma: float, capacity: int, search_cfg: dict | None = None) -> DecEstimate:
    """Best objective found over the candidate v* and all S*: a lower bound on the true value.

    Candidates come from a uniform grid (N <= 4), uniform random sampling, or
    an explicit list; the best one is refined by coordinate ascent with a
    geometrically shrinking step.
    """
    cfg = {**DEFAULT_SEARCH, **(search_cfg or {})}
    v = value_vector(v)
    r = reward_vector(r)
    if gamma < 0:
        raise ValidationError("gamma must be nonnegative", field="gamma")
    N = v.size
    obj = _Objective(q, v, r, gamma, capacity)
    mode = cfg["mode"]
    if mode == "auto":
        mode = "grid" if N <= 4 else "random"

    if mode == "grid":
        if N > 4:
            raise ValidationError(f"grid search limited to N <= 4, got N={N}", field="search.mode")
        chunks = [_grid(N, cfg["grid_step"])]
    elif mode == "random":
        rng = np.random.default_rng(cfg["seed"])
        total = int(cfg["samples"])
        chunks = (rng.random((min(cfg["chunk"], total - k), N)) for k in range(0, total, cfg["chunk"]))
    elif mode == "candidates":
        chunks = [np.atleast_2d(np.asarray(cfg["candidates"], dtype=float))]
    else:
        raise ValidationError(f"unknown search mode {mode!r}", field="search.mode")

    best_val, best_v, used = -np.inf, None, 0
    for cands in chunks:
        for lo in range(0, len(cands), cfg["chunk"]):
            block = cands[lo:lo + cfg["chunk"]]
            vals, _ = obj.best(block)
            k = int(np.argmax(vals))
            used += len(block)
            if vals[k] > best_val:
                best_val, best_v = float(vals[k]), block[k].copy()

    if mode != "candidates" and cfg["polish_sweeps"] > 0:
        sweeps = cfg["polish_sweeps"]
        ratio = (cfg["polish_end"] / cfg["polish_start"]) ** (1.0 / max(sweeps - 1, 1))
        step = cfg["polish_start"]
        for _ in range(sweeps):
            for i in range(N):
                trial = np.repeat(best_v[None, :], 2, axis=0)
                trial[0, i] = min(1.0, best_v[i] + step)
                trial[1, i] = max(0.0, best_v[i] - step)
                vals, _ = obj.best(trial)
                used += 2
                k = int(np.argmax(vals))
                if vals[k] > best_val:
                    best_val, best_v = float(vals[k]), trial[k]
            step *= ratio

    vals, j = obj.best(best_v[None, :])
    witness_S = all_assortments(N, capacity)[int(j[0])]
    return DecEstimate(float(vals[0]), witness_S, best_v, used)


def dec_bounds(kind: str, n_items: int, capacity: int, gamma: float, eps: float | None = None) -> float:
    """Closed-form upper bounds for the epsilon-greedy and log-barrier distributions."""
    if gamma <= 0 or n_items < 1 or capacity < 1:
        raise ValidationError("need gamma > 0, N >= 1, K >= 1")
    if kind == "epsgreedy":
        if eps is None or eps <= 0:
            raise ValidationError("epsilon-greedy bound needs eps > 0", field="eps")
        return 16 * n_items * capacity / (gamma * eps) + 2 * capacity / gamma + eps
    if kind == "logbarrier":
        if eps is not None:
            raise ValidationError("log-barrier bound takes no eps", field="eps")
        return 3 * n_items * (capacity + 1) ** 4 / gamma
    raise ValidationError(f"unknown kind {kind!r}", field="kind")
