"""Offline (ERM) and online (Hedge, OGD) log-loss regression oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classes import ContextUniverse, FiniteClass, LinearClass
from .errors import ValidationError


@dataclass(frozen=True)
class RegressionSample:
    x: int  # context id into the universe
    S: tuple
    i: int

    def __post_init__(self):
        if self.i != 0 and self.i not in self.S:
            raise ValidationError(f"purchase {self.i} not in {self.S} or 0")


@dataclass
class SampleBatch:
    """Column layout of a dataset: contexts (n,), masks (n, N) bool, purchases (n,)."""

    contexts: np.ndarray
    masks: np.ndarray
    purchases: np.ndarray

    def __len__(self):
        return len(self.contexts)

    @classmethod
    def from_samples(cls, samples, n_items: int) -> "SampleBatch":
        n = len(samples)
        masks = np.zeros((n, n_items), dtype=bool)
        for k, smp in enumerate(samples):
            masks[k, np.asarray(smp.S) - 1] = True
        return cls(
            np.array([smp.x for smp in samples], dtype=int),
            masks,
            np.array([smp.i for smp in samples], dtype=int),
        )


def _as_batch(data, n_items) -> SampleBatch:
    if isinstance(data, SampleBatch):
        return data
    return SampleBatch.from_samples(list(data), n_items)


def _log1(x: float) -> float:
    return max(1.0, math.log(x))


@dataclass(frozen=True)
class ErrModel:
    """Generalisation-error and online-regret curves used to tune schedules.

    The hidden big-O constants are exposed as ``constant`` (offline) and
    ``online_constant``; logarithms are floored at 1 so degenerate inputs
    (K = 1, B = 1, |F| = 1) do not zero out a curve.
    """

    kind: str
    n_items: int
    capacity: int
    beta: float = 0.05
    n_members: int = 1
    dim: int = 1
    bound: float = 1.0
    constant: float = 1.0
    online_constant: float = 1.0

    def err(self, n: float, delta: float) -> float:
        n = max(float(n), 1.0)
        if self.kind == "finite":
            core = math.log(self.capacity / self.beta) * math.log(self.n_members / delta)
        else:
            core = self.dim * self.bound * _log1(self.capacity) * _log1(self.bound) * math.log(1.0 / delta)
        return self.constant * core / n

    def reg_log(self, horizon: float) -> float:
        horizon = max(float(horizon), 1.0)
        if self.kind == "finite":
            core = math.sqrt(horizon * _log1(self.n_members)) * math.log(self.capacity / self.beta)
        else:
            core = self.bound * math.sqrt(horizon)
        return self.online_constant * core

    @classmethod
    def for_class(cls, fclass, n_items: int, capacity: int, **kw) -> "ErrModel":
        if fclass.kind == "finite":
            return cls("finite", n_items, capacity, beta=fclass.beta, n_members=fclass.n_members, **kw)
        return cls("linear", n_items, capacity, dim=fclass.dim, bound=fclass.bound, **kw)


# ---------------------------------------------------------------------------
# Log loss on tabulated values


def batch_log_loss(values: np.ndarray, batch: SampleBatch) -> np.ndarray:
    """Per-sample log loss for value arrays of shape (..., n, N) aligned with ``batch``."""
    vm = np.where(batch.masks, values, 0.0)
    den = 1.0 + vm.sum(axis=-1)
    idx = np.clip(batch.purchases - 1, 0, None)
    num = np.take_along_axis(values, np.broadcast_to(idx[:, None], values.shape[:-1] + (1,)), axis=-1)[..., 0]
    num = np.where(batch.purchases == 0, 1.0, num)
    return np.log(den) - np.log(num)


def finite_losses(cls: FiniteClass, batch: SampleBatch) -> np.ndarray:
    """Total log loss of every member on ``batch``."""
    if len(batch) == 0:
        return np.zeros(cls.n_members)
    vals = cls.tables[:, batch.contexts, :]
    return batch_log_loss(vals, batch).sum(axis=1)


# ---------------------------------------------------------------------------
# Linear class


def linear_logloss(theta, x, S, i, bound: float) -> float:
    x = np.asarray(x, dtype=float)
    idx = np.asarray(S) - 1
    z = theta @ x[:, idx] - bound
    val = math.log1p(np.exp(z).sum())
    if i != 0:
        val -= float(theta @ x[:, i - 1]) - bound
    return val


def linear_logloss_gradient(theta, x, S, i, bound: float) -> np.ndarray:
    """Gradient of -log mu_i(S, f_theta(x)) in theta; its norm never exceeds 2."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    xs = x[:, np.asarray(S) - 1]
    e = np.exp(theta @ xs - bound)
    g = xs @ e / (1.0 + e.sum())
    if i != 0:
        g = g - x[:, i - 1]
    return g


def _linear_batch_loss_grad(theta, mats, batch: SampleBatch, bound):
    """Mean loss and gradient over a batch; mats is (n, d, N)."""
    z = np.einsum("d,ndk->nk", theta, mats) - bound
    e = np.where(batch.masks, np.exp(z), 0.0)
    den = 1.0 + e.sum(axis=1)
    loss = np.log(den)
    g = np.einsum("ndk,nk->nd", mats, e) / den[:, None]
    bought = batch.purchases > 0
    if bought.any():
        rows = np.flatnonzero(bought)
        cols = batch.purchases[rows] - 1
        loss[rows] -= z[rows, cols]
        g[rows] -= mats[rows, :, cols]
    return loss.mean(), g.mean(axis=0)


def project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    nrm = np.linalg.norm(theta)
    return theta if nrm <= radius else theta * (radius / nrm)


def linear_erm(cls: LinearClass, universe: ContextUniverse, batch: SampleBatch,
               tol: float = 1e-6, max_iter: int = 5000, lipschitz: float = 2.0) -> np.ndarray:
    """Projected gradient descent on the mean log loss with step 1/(L sqrt(k))."""
    theta = np.zeros(cls.dim)
    if len(batch) == 0:
        return theta
    mats = universe.matrices[batch.contexts]
    for k in range(1, max_iter + 1):
        _, g = _linear_batch_loss_grad(theta, mats, batch, cls.bound)
        step = 1.0 / (lipschitz * math.sqrt(k))
        new = project_ball(theta - step * g, cls.bound)
        mapping = np.linalg.norm(theta - new) / step
        theta = new
        if mapping <= tol:
            break
    return theta


def erm_fit(cls, universe: ContextUniverse, data):
    """Empirical log-loss minimiser: a member index (finite) or parameter (linear).

    An empty dataset yields member 0 or theta = 0.
    """
    n_items = cls.n_items if cls.kind == "finite" else universe.matrices.shape[2]
    batch = _as_batch(data, n_items)
    if cls.kind == "finite":
        return int(np.argmin(finite_losses(cls, batch)))  # argmin keeps the lowest index on ties
    return linear_erm(cls, universe, batch)


# ---------------------------------------------------------------------------
# Online oracles


def default_hedge_lr(n_members: int, horizon: int, capacity: int, beta: float) -> float:
    return math.sqrt(8 * math.log(max(n_members, 2)) / horizon) / math.log((capacity + 1) / beta)


@dataclass
class HedgeState:
    log_weights: np.ndarray

    @classmethod
    def uniform(cls, n_members: int) -> "HedgeState":
        return cls(np.full(n_members, -math.log(n_members)))

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()


def draw_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    k = int(np.searchsorted(np.cumsum(weights), rng.random() * weights.sum(), side="right"))
    return min(k, len(weights) - 1)


def hedge_update(state: HedgeState, losses: np.ndarray, lr: float) -> HedgeState:
    """Multiply each weight by exp(-lr * loss) and renormalise (in log space)."""
    lw = state.log_weights - lr * np.asarray(losses, dtype=float)
    lw -= lw.max()
    return HedgeState(lw - math.log(np.exp(lw).sum()))


def sample_losses(cls: FiniteClass, sample: RegressionSample) -> np.ndarray:
    batch = SampleBatch.from_samples([sample], cls.n_items)
    return batch_log_loss(cls.tables[:, batch.contexts, :], batch)[:, 0]


def hedge_step(state: HedgeState, sample: RegressionSample, lr: float, cls: FiniteClass,
               rng: np.random.Generator):
    """Draw a prediction from the current weights, then update on ``sample``."""
    prediction = draw_index(state.weights, rng)
    return prediction, hedge_update(state, sample_losses(cls, sample), lr)


def ogd_update(theta: np.ndarray, grad: np.ndarray, lr: float, bound: float) -> np.ndarray:
    return project_ball(np.asarray(theta, dtype=float) - lr * np.asarray(grad, dtype=float), bound)


def ogd_step(theta: np.ndarray, sample: RegressionSample, lr: float, cls: LinearClass,
             universe: ContextUniverse):
    """Return the pre-update prediction and the projected gradient step on ``sample``."""
    theta = np.asarray(theta, dtype=float)
    grad = linear_logloss_gradient(theta, universe.matrices[sample.x], sample.S, sample.i, cls.bound)
    return theta, ogd_update(theta, grad, lr, cls.bound)


class HedgeOracle:
    """Hedge over the members of a tabulated finite class with randomised predictions."""

    def __init__(self, tables: np.ndarray, lr: float, rng: np.random.Generator):
        self.tables = tables
        self.lr = lr
        self.rng = rng
        self.state = HedgeState.uniform(tables.shape[0])
        self.cum_loss = 0.0
        self.member_cum_loss = np.zeros(tables.shape[0])
        self._pred = None

    def predict(self) -> int:
        self._pred = draw_index(self.state.weights, self.rng)
        return self._pred

    def values(self, x: int) -> np.ndarray:
        return self.tables[self._pred, x]

    def update(self, x: int, mask: np.ndarray, i: int) -> None:
        batch = SampleBatch(np.array([x]), mask[None, :], np.array([i]))
        losses = batch_log_loss(self.tables[:, [x], :], batch)[:, 0]
        self.cum_loss += losses[self._pred]
        self.member_cum_loss += losses
        self.state = hedge_update(self.state, losses, self.lr)


class OGDOracle:
    """Projected online gradient descent on the log-linear class, step B/(2 sqrt(t))."""

    def __init__(self, cls: LinearClass, universe: ContextUniverse):
        self.cls = cls
        self.universe = universe
        self.theta = np.zeros(cls.dim)
        self.t = 0
        self.cum_loss = 0.0

    def predict(self) -> np.ndarray:
        return self.theta

    def values(self, x: int) -> np.ndarray:
        return np.exp(np.minimum(self.theta @ self.universe.matrices[x] - self.cls.bound, 0.0))

    def update(self, x: int, mask: np.ndarray, i: int) -> None:
        self.t += 1
        mat = self.universe.matrices[x]
        S = tuple(int(j) + 1 for j in np.flatnonzero(mask))
        self.cum_loss += linear_logloss(self.theta, mat, S, i, self.cls.bound)
        g = linear_logloss_gradient(self.theta, mat, S, i, self.cls.bound)
        lr = self.cls.bound / (2.0 * math.sqrt(self.t))
        self.theta = ogd_update(self.theta, g, lr, self.cls.bound)
