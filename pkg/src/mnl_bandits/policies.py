"""Assortment distributions and the three bandit algorithms.

* ``run_alg1``: epoch-based play with an offline (ERM) oracle, stochastic contexts.
* ``run_alg2``: per-round play with an online oracle (Hedge or OGD), any script.
* ``run_fgts``: feel-good Thompson sampling over a finite member set.

Assortment distributions are handled internally as dense vectors indexed
by ``all_assortments(N, K)``; ``AssortmentDistribution`` is the sparse
public form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assortment import all_assortments, assortment_index, best_assortment_fast, incidence, reward_table
from .classes import linear_values, theta_grid
from .core import choice_probs, value_vector
from .errors import CapacityError, SolverError, ValidationError
from .oracles import (
    ErrModel, HedgeOracle, OGDOracle, SampleBatch, default_hedge_lr, draw_index, linear_erm, linear_logloss,
)
from .trace import Trace

PROB_TOL = 1e-10


@dataclass(frozen=True)
class AssortmentDistribution:
    support: tuple
    probs: np.ndarray
    converged: bool = True
    residual: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "support", tuple(tuple(s) for s in self.support))
        if len(p) != len(self.support):
            raise ValidationError("support and probabilities differ in length")
        if p.size == 0 or p.min() < 0 or abs(p.sum() - 1) > PROB_TOL:
            raise ValidationError("probabilities must be nonnegative and sum to 1")
        if len(set(self.support)) != len(self.support):
            raise ValidationError("support has repeated assortments")

    @classmethod
    def from_dense(cls, n_items: int, capacity: int, rho: np.ndarray, **kw) -> "AssortmentDistribution":
        sets = all_assortments(n_items, capacity)
        keep = np.flatnonzero(rho > 0)
        return cls(tuple(sets[j] for j in keep), rho[keep] / rho[keep].sum(), **kw)

    def dense(self, n_items: int, capacity: int) -> np.ndarray:
        index = assortment_index(n_items, capacity)
        rho = np.zeros(len(index))
        for s, p in zip(self.support, self.probs):
            rho[index[s]] += p
        return rho

    def as_dict(self) -> dict:
        return {s: float(p) for s, p in zip(self.support, self.probs)}

    def sample(self, rng: np.random.Generator) -> tuple:
        return self.support[draw_index(self.probs, rng)]


def item_marginals(q: AssortmentDistribution, n_items: int) -> np.ndarray:
    """w_i(q): probability that item i is offered."""
    w = np.zeros(n_items)
    for s, p in zip(q.support, q.probs):
        w[np.asarray(s) - 1] += p
    return np.clip(w, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Epoch schedule


@dataclass(frozen=True)
class EpochPlan:
    m: int
    fit_range: tuple  # inclusive; empty when start > end
    play_range: tuple
    param: float


def _tau(m: int) -> int:
    return 2 ** (m - 1) - 1 if m >= 1 else 0


def schedule_param(m: int, horizon: int, kind: str, err_model: ErrModel) -> float:
    """epsilon_m (kind "eps") or gamma_m (kind "logbarrier"); epoch 1 reuses epoch 2's value."""
    n = 2 ** (max(m, 2) - 2)
    err = err_model.err(n, 1.0 / horizon**2)
    N, K = err_model.n_items, err_model.capacity
    if kind == "eps":
        return float(min(1.0, max(0.0, (N * K * err) ** (1.0 / 3.0))))
    if kind == "logbarrier":
        return float(max(1.0, math.sqrt(N * (K + 1) ** 4 / err)))
    raise ValidationError(f"unknown schedule kind {kind!r}", field="strategy")


def epoch_plan(m: int, horizon: int, kind: str, err_model: ErrModel) -> EpochPlan:
    if m < 1:
        raise ValidationError(f"epoch index must be >= 1, got {m}")
    fit = (_tau(m - 1) + 1, _tau(m))
    play = (_tau(m) + 1, min(_tau(m + 1), horizon))
    return EpochPlan(m, fit, play, schedule_param(m, horizon, kind, err_model))


def epoch_plans(horizon: int, kind: str, err_model: ErrModel) -> list:
    plans = []
    m = 1
    while _tau(m) + 1 <= horizon:
        plans.append(epoch_plan(m, horizon, kind, err_model))
        m += 1
    return plans


# ---------------------------------------------------------------------------
# epsilon-greedy


def eps_greedy_dense(greedy: int, eps: float, n_items: int, capacity: int) -> np.ndarray:
    index = assortment_index(n_items, capacity)
    rho = np.zeros(len(index))
    rho[greedy] += 1.0 - eps
    for i in range(1, n_items + 1):
        rho[index[(i,)]] += eps / n_items
    return rho


def eps_greedy_dist(v_hat, r, eps: float, capacity: int) -> AssortmentDistribution:
    """Greedy assortment with probability 1 - eps, a uniform singleton otherwise."""
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"eps must lie in [0, 1], got {eps}", field="eps")
    v_hat = value_vector(v_hat)
    N = v_hat.size
    greedy = best_assortment_fast(v_hat, r, capacity).assortment
    masses = {}
    if eps < 1.0:
        masses[greedy] = 1.0 - eps
    if eps > 0.0:
        for i in range(1, N + 1):
            masses[(i,)] = masses.get((i,), 0.0) + eps / N
    return AssortmentDistribution(tuple(masses), np.array(list(masses.values())))


# ---------------------------------------------------------------------------
# Log-barrier program


def barrier_weight(gamma: float, capacity: int) -> float:
    return (capacity + 1) ** 4 / gamma


@dataclass
class BarrierSolution:
    rho: np.ndarray
    objective: float
    residual: float  # (max_S g_S - E_rho g) / (c N), an upper bound on the relative suboptimality
    sweeps: int
    converged: bool


DEFAULT_SOLVER = {
    "max_items": 12,
    "max_capacity": 4,
    "improve_tol": 1e-10,
    "kkt_tol": 1e-3,
    "accept_tol": 5e-3,
    "method": "mirror",  # or "interior"
    "max_sweeps": None,  # default max(50 * |S|, 2000)
    "barrier_weight": None,  # number or callable (gamma, K) overriding (K+1)^4 / gamma
}


def barrier_start(n_items: int, capacity: int) -> np.ndarray:
    """Half the mass uniform on singletons, half uniform on every assortment."""
    a = incidence(n_items, capacity)
    sizes = a.sum(axis=1)
    rho = np.full(len(a), 0.5 / len(a))
    rho[sizes == 1] += 0.5 / n_items
    return rho


def solve_log_barrier(R: np.ndarray, a: np.ndarray, c: float, cfg: dict | None = None,
                      init: np.ndarray | None = None) -> BarrierSolution:
    """Maximise rho.R + c sum_i log w_i(rho) over the simplex by entropic mirror ascent.

    The gradient is g_S = R_S + c sum_{i in S} 1/w_i.  At the optimum every
    supported S has g_S equal to E_rho g = E_rho R + cN, so the gap
    max_S g_S - E_rho g (which bounds the suboptimality) is the KKT residual.
    """
    cfg = {**DEFAULT_SOLVER, **(cfg or {})}
    n_sets, N = a.shape
    max_sweeps = cfg["max_sweeps"] or max(50 * n_sets, 2000)
    scale = c * N
    log_rho = np.log(init if init is not None else barrier_start(N, int(a.sum(axis=1).max())))
    log_rho -= log_rho.max()
    log_rho -= math.log(np.exp(log_rho).sum())
    rho = np.exp(log_rho)
    w = rho @ a
    F = float(rho @ R + c * np.log(w).sum())
    step = 1.0 / (2.0 * c)
    residual = math.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        g = R + c * (a @ (1.0 / w))
        residual = float(g.max() - rho @ g) / scale
        if residual <= cfg["kkt_tol"]:
            break
        for _ in range(80):
            cand = log_rho + step * g
            cand -= cand.max()
            cand -= math.log(np.exp(cand).sum())
            new = np.exp(cand)
            wn = new @ a
            if wn.min() > 0:
                Fn = float(new @ R + c * np.log(wn).sum())
                if Fn >= F:
                    break
            step *= 0.5
        else:
            break  # no ascent step found at machine precision
        improvement = Fn - F
        log_rho, rho, w, F = cand, new, wn, Fn
        step *= 1.5
        if improvement < cfg["improve_tol"] and residual <= cfg["accept_tol"]:
            break
    g = R + c * (a @ (1.0 / w))
    residual = float(g.max() - rho @ g) / scale
    return BarrierSolution(rho, F, residual, sweeps, residual <= cfg["accept_tol"])


def _guard(n_items: int, capacity: int, cfg: dict) -> None:
    if n_items > cfg["max_items"] or capacity > cfg["max_capacity"]:
        raise CapacityError(
            f"log-barrier enumeration limited to N <= {cfg['max_items']}, K <= {cfg['max_capacity']}; "
            f"got N={n_items}, K={capacity}"
        )


def solve_log_barrier_interior(R: np.ndarray, a: np.ndarray, c: float, tol: float = 1e-9) -> BarrierSolution:
    """Same program solved through its dual with a log-barrier interior-point method.

    Dual: minimise t - c sum_i log u_i subject to t >= R_S + u(S) for every S.
    The multipliers of the constraints are the primal rho, and w_i = c / u_i.
    Used as an independent cross-check of the mirror-ascent solver.
    """
    n_sets, N = a.shape
    u = np.ones(N)
    t = float((R + a @ u).max()) + 1.0
    tau = 1.0
    newton = 0
    while n_sets / tau > tol:
        for _ in range(100):
            slack = t - R - a @ u
            inv = 1.0 / slack
            # gradient and Hessian of tau*(t - c sum log u) - sum log slack in z = (u, t)
            g_u = -tau * c / u + a.T @ inv
            g_t = tau - inv.sum()
            grad = np.append(g_u, g_t)
            inv2 = inv**2
            h_uu = (a.T * inv2) @ a + np.diag(tau * c / u**2)
            h_ut = -(a.T @ inv2)
            hess = np.empty((N + 1, N + 1))
            hess[:N, :N] = h_uu
            hess[:N, N] = hess[N, :N] = h_ut
            hess[N, N] = inv2.sum()
            step = -np.linalg.solve(hess, grad)
            decrement = float(-grad @ step)
            newton += 1
            if decrement < 1e-9:
                break
            du, dt = step[:N], step[N]
            # largest feasible step, then backtracking on the barrier objective
            alpha = 1.0
            ds = dt - a @ du
            neg = ds < 0
            if neg.any():
                alpha = min(alpha, 0.99 * float((-slack[neg] / ds[neg]).min()))
            if (du < 0).any():
                alpha = min(alpha, 0.99 * float((-u[du < 0] / du[du < 0]).min()))

            def phi(uu, tt):
                return tau * (tt - c * np.log(uu).sum()) - np.log(tt - R - a @ uu).sum()

            base = phi(u, t)
            slop = 1e-13 * abs(base)  # phi carries a tau * t term, so compare up to rounding
            while alpha > 1e-16 and phi(u + alpha * du, t + alpha * dt) > base - 0.25 * alpha * decrement + slop:
                alpha *= 0.5
            u, t = u + alpha * du, t + alpha * dt
        tau *= 8.0
    slack = t - R - a @ u
    rho = 1.0 / (tau / 8.0 * slack)
    rho /= rho.sum()
    w = rho @ a
    F = float(rho @ R + c * np.log(w).sum())
    g = R + c * (a @ (1.0 / w))
    residual = float(g.max() - rho @ g) / (c * N)
    return BarrierSolution(rho, F, residual, newton, residual <= DEFAULT_SOLVER["accept_tol"])


def log_barrier_solve(R_hat: np.ndarray, n_items: int, capacity: int, gamma: float,
                      solver_cfg: dict | None = None, init=None) -> BarrierSolution:
    """Solve the program for a precomputed reward table over ``all_assortments``."""
    if gamma <= 0:
        raise ValidationError(f"gamma must be positive, got {gamma}", field="gamma")
    cfg = {**DEFAULT_SOLVER, **(solver_cfg or {})}
    _guard(n_items, capacity, cfg)
    bw = cfg["barrier_weight"]
    if bw is None:
        c = barrier_weight(gamma, capacity)
    else:
        c = float(bw(gamma, capacity)) if callable(bw) else float(bw)
    a = incidence(n_items, capacity).astype(float)
    if cfg["method"] == "interior":
        return solve_log_barrier_interior(np.asarray(R_hat, dtype=float), a, c)
    if cfg["method"] != "mirror":
        raise ValidationError(f"unknown solver method {cfg['method']!r}", field="solver.method")
    return solve_log_barrier(np.asarray(R_hat, dtype=float), a, c, cfg,
                             init if init is not None else barrier_start(n_items, capacity))


def log_barrier_dist(v_hat, r, gamma: float, n_items: int, capacity: int,
                     solver_cfg: dict | None = None) -> AssortmentDistribution:
    """Regularised reward maximiser with log-barrier weight (K+1)^4 / gamma.

    A solve that stops at the sweep cap is returned with ``converged=False``
    and its KKT residual; callers decide whether to proceed.
    """
    v_hat = value_vector(v_hat)
    if v_hat.size != n_items:
        raise ValidationError(f"expected {n_items} values, got {v_hat.size}")
    R_hat = reward_table(v_hat, value_vector(r, "rewards"), capacity)
    sol = log_barrier_solve(R_hat, n_items, capacity, gamma, solver_cfg)
    return AssortmentDistribution.from_dense(n_items, capacity, sol.rho, converged=sol.converged,
                                             residual=sol.residual)


# ---------------------------------------------------------------------------
# Feel-good Thompson sampling


def fgts_loss(mu_on_S, S, i_t: int, max_reward: float, eta: float, capacity: int) -> float:
    """Squared prediction error on S (no-purchase excluded) over 8 eta K, minus the best reward under f."""
    if not 0 < eta <= 1:
        raise ValidationError(f"eta must lie in (0, 1], got {eta}", field="eta")
    mu = np.asarray(mu_on_S, dtype=float)
    target = np.array([1.0 if j == i_t else 0.0 for j in S])
    return float(((mu - target) ** 2).sum() / (8.0 * eta * capacity) - max_reward)


@dataclass(frozen=True)
class FgtsPosterior:
    log_weights: np.ndarray
    eta: float

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValidationError(f"eta must lie in (0, 1], got {self.eta}", field="eta")

    @classmethod
    def uniform(cls, n_members: int, eta: float) -> "FgtsPosterior":
        return cls(np.full(n_members, -math.log(n_members)), eta)

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()


def fgts_update(p: FgtsPosterior, losses) -> FgtsPosterior:
    lw = p.log_weights - p.eta * np.asarray(losses, dtype=float)
    lw = lw - lw.max()
    return FgtsPosterior(lw - math.log(np.exp(lw).sum()), p.eta)


def default_fgts_eta(n_items: int, capacity: int, n_members: int, horizon: int) -> float:
    return min(1.0, capacity ** -2.5 * math.sqrt(n_items * math.log(max(n_members, 2)) / horizon))


# ---------------------------------------------------------------------------
# Shared run machinery


def rng_streams(seed: int) -> dict:
    """Independent generators for contexts, policy draws, purchases and the oracle."""
    names = ("env", "policy", "customer", "oracle")
    kids = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.Generator(np.random.PCG64(k)) for n, k in zip(names, kids)}


def _inverse_cdf(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse CDF: cum is (n, k) with rows ending at ~1, u is (n,)."""
    idx = (u[:, None] * cum[:, -1:] >= cum).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


class _Truth:
    """Per-context true choice probabilities and optimal rewards, memoised by (context, rewards)."""

    def __init__(self, truth: np.ndarray, capacity: int):
        self.truth = truth
        self.capacity = capacity
        self.mask = incidence(truth.shape[1], capacity)
        self._cache = {}

    def tables(self, ctx: int, r: np.ndarray):
        key = (ctx, r.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            v = self.truth[ctx]
            R = reward_table(v, r, self.capacity)
            cum = np.cumsum(choice_probs(v, self.mask), axis=1)
            hit = (R, float(R.max()), cum)
            if len(self._cache) < 100_000:
                self._cache[key] = hit
        return hit


def _check_sizes(env, n_items: int, capacity: int) -> None:
    if env.n_items != n_items:
        raise ValidationError(f"environment has {env.n_items} items, class has {n_items}")
    if capacity < 1:
        raise ValidationError("capacity must be >= 1", field="K")


def _class_items(fclass, universe) -> int:
    return fclass.n_items if fclass.kind == "finite" else universe.matrices.shape[2]


# ---------------------------------------------------------------------------
# Algorithm with an offline oracle


def run_alg1(env, fclass, universe, capacity: int, strategy: str, horizon: int, seed: int,
             err_model: ErrModel | None = None, eps_override: float | None = None,
             gamma_override: float | None = None, solver_cfg: dict | None = None,
             strict: bool = True) -> Trace:
    """Epoch loop: fit ERM on the previous epoch, then play q_m built from the fit.

    ``eps_override`` / ``gamma_override`` replace the scheduled parameter in
    every epoch.  With ``strict`` a non-converged barrier solve raises
    ``SolverError``.
    """
    if env.kind != "stochastic":
        raise ValidationError("the offline-oracle algorithm needs a stochastic environment")
    if strategy not in ("eps", "logbarrier"):
        raise ValidationError(f"unknown strategy {strategy!r}", field="strategy")
    N = _class_items(fclass, universe)
    _check_sizes(env, N, capacity)
    err_model = err_model or ErrModel.for_class(fclass, N, capacity)
    streams = rng_streams(seed)
    sets = all_assortments(N, capacity)
    mask = incidence(N, capacity)
    n_sets = len(sets)
    singles = np.array([assortment_index(N, capacity)[(i,)] for i in range(1, N + 1)])

    truth_atoms = env.atom_values()
    R_true = reward_table(truth_atoms, env.rewards, capacity)  # (A, |S|)
    opt = R_true.max(axis=1)
    cum_true = np.cumsum(choice_probs(truth_atoms[:, None, :], mask[None]), axis=2)  # (A, |S|, N+1)

    if fclass.kind == "finite":
        with np.errstate(divide="ignore"):
            probs = choice_probs(fclass.tables[:, :, None, :], mask[None, None])
            loss_table = -np.log(probs)  # (F, C, |S|, N+1); inf only off the support

    atoms = np.empty(horizon, dtype=int)
    s_idx = np.empty(horizon, dtype=int)
    purchase = np.empty(horizon, dtype=int)
    epoch = np.empty(horizon, dtype=int)
    params = []
    warm = {}
    unconverged = 0
    worst_residual = 0.0

    for plan in epoch_plans(horizon, strategy, err_model):
        lo, hi = plan.fit_range
        if hi < lo:
            member = 0 if fclass.kind == "finite" else np.zeros(fclass.dim)
        else:
            sl = slice(lo - 1, hi)
            ctx = env.contexts[atoms[sl]]
            if fclass.kind == "finite":
                totals = loss_table[:, ctx, s_idx[sl], purchase[sl]].sum(axis=1)
                member = int(np.argmin(totals))
            else:
                batch = SampleBatch(ctx, mask[s_idx[sl]], purchase[sl])
                member = linear_erm(fclass, universe, batch)
        if fclass.kind == "finite":
            v_hat = fclass.tables[member, env.contexts]
        else:
            v_hat = linear_values(member, universe.matrices[env.contexts], fclass.bound)[0]
        R_hat = reward_table(v_hat, env.rewards, capacity)

        Q = np.zeros((env.n_atoms, n_sets))
        if strategy == "eps":
            eps = plan.param if eps_override is None else float(eps_override)
            params.append(eps)
            greedy = np.array([int(np.flatnonzero(row >= row.max() - 1e-12)[0]) for row in R_hat])
            Q[np.arange(env.n_atoms), greedy] += 1.0 - eps
            Q[:, singles] += eps / N
        else:
            gamma = plan.param if gamma_override is None else float(gamma_override)
            params.append(gamma)
            for a in range(env.n_atoms):
                sol = log_barrier_solve(R_hat[a], N, capacity, gamma, solver_cfg, warm.get(a))
                worst_residual = max(worst_residual, sol.residual)
                if not sol.converged:
                    unconverged += 1
                    if strict:
                        raise SolverError(f"log-barrier solve did not converge in epoch {plan.m}",
                                          residual=sol.residual)
                Q[a] = sol.rho
                warm[a] = 0.9 * sol.rho + 0.1 * barrier_start(N, capacity)

        p0, p1 = plan.play_range
        n = p1 - p0 + 1
        sl = slice(p0 - 1, p1)
        at = env.draw_atoms(n, streams["env"])
        cumQ = np.cumsum(Q, axis=1)
        s = _inverse_cdf(cumQ[at], streams["policy"].random(n))
        i = _inverse_cdf(cum_true[at, s], streams["customer"].random(n))
        atoms[sl], s_idx[sl], purchase[sl], epoch[sl] = at, s, i, plan.m

    played = R_true[atoms, s_idx]
    realized = np.where(purchase > 0, env.rewards[atoms, np.maximum(purchase - 1, 0)], 0.0)
    diag = {"schedule": params, "unconverged_solves": unconverged, "worst_residual": worst_residual}
    return Trace(env.contexts[atoms], [sets[j] for j in s_idx], purchase, opt[atoms], played, epoch,
                 realized_reward=realized, seed=seed, diagnostics=diag)


# ---------------------------------------------------------------------------
# Algorithm with an online oracle


def alg2_params(err_model: ErrModel, horizon: int) -> dict:
    """gamma for the barrier strategy and (eps, gamma) for epsilon-greedy, tuned to the regret curve."""
    N, K = err_model.n_items, err_model.capacity
    L = err_model.reg_log(horizon)
    eps = min(1.0, (N * K * L / horizon) ** (1.0 / 3.0))
    return {
        "logbarrier_gamma": K**2 * math.sqrt(N * horizon / L),
        "eps": eps,
        "eps_gamma": math.sqrt(N * K * horizon / (eps * L)),
    }


def run_alg2(env, fclass, universe, capacity: int, strategy: str, horizon: int, seed: int,
             gamma: float | None = None, eps: float | None = None, err_model: ErrModel | None = None,
             hedge_lr: float | None = None, solver_cfg: dict | None = None, strict: bool = True) -> Trace:
    """Per round: the online oracle predicts f_t, q_t is built from f_t(x_t), the sample is fed back.

    Finite classes use Hedge (randomised predictions), the linear class uses
    projected OGD.  ``diagnostics["reg_log"]`` is the oracle's cumulative log
    loss minus that of the best fixed member (finite) or of theta* (linear).
    """
    if strategy not in ("eps", "logbarrier"):
        raise ValidationError(f"unknown strategy {strategy!r}", field="strategy")
    N = _class_items(fclass, universe)
    _check_sizes(env, N, capacity)
    if env.kind == "adversarial" and len(env) < horizon:
        raise ValidationError(f"script has {len(env)} rounds, horizon is {horizon}", field="T")
    err_model = err_model or ErrModel.for_class(fclass, N, capacity)
    tuned = alg2_params(err_model, horizon)
    if strategy == "eps":
        eps = tuned["eps"] if eps is None else float(eps)
    else:
        gamma = tuned["logbarrier_gamma"] if gamma is None else float(gamma)

    streams = rng_streams(seed)
    sets = all_assortments(N, capacity)
    mask = incidence(N, capacity)
    singles = np.array([assortment_index(N, capacity)[(i,)] for i in range(1, N + 1)])
    truth = _Truth(env.truth, capacity)
    if fclass.kind == "finite":
        lr = hedge_lr or default_hedge_lr(fclass.n_members, horizon, capacity, fclass.beta)
        oracle = HedgeOracle(fclass.tables, lr, streams["oracle"])
    else:
        oracle = OGDOracle(fclass, universe)
        star_loss = 0.0

    ctx_col = np.empty(horizon, dtype=int)
    s_col = np.empty(horizon, dtype=int)
    i_col = np.empty(horizon, dtype=int)
    opt_col = np.empty(horizon)
    played_col = np.empty(horizon)
    realized_col = np.empty(horizon)
    q_cache = {}
    warm = None
    unconverged = 0
    worst_residual = 0.0

    for t in range(1, horizon + 1):
        if env.kind == "stochastic":
            a = int(env.draw_atoms(1, streams["env"])[0])
            x, r = int(env.contexts[a]), env.rewards[a]
        else:
            x, r = int(env.contexts[t - 1]), env.rewards[t - 1]
        pred = oracle.predict()
        key = (pred, x, r.tobytes()) if fclass.kind == "finite" else None
        cumq = q_cache.get(key) if key is not None else None
        if cumq is None:
            v_hat = oracle.values(x)
            R_hat = reward_table(v_hat, r, capacity)
            if strategy == "eps":
                rho = np.zeros(len(sets))
                rho[int(np.flatnonzero(R_hat >= R_hat.max() - 1e-12)[0])] += 1.0 - eps
                rho[singles] += eps / N
            else:
                sol = log_barrier_solve(R_hat, N, capacity, gamma, solver_cfg, warm)
                worst_residual = max(worst_residual, sol.residual)
                if not sol.converged:
                    unconverged += 1
                    if strict:
                        raise SolverError(f"log-barrier solve did not converge at round {t}", residual=sol.residual)
                rho = sol.rho
                if fclass.kind == "linear":
                    warm = 0.9 * rho + 0.1 * barrier_start(N, capacity)
            cumq = np.cumsum(rho)
            if key is not None:
                q_cache[key] = cumq
        s = int(_inverse_cdf(cumq[None, :], np.array([streams["policy"].random()]))[0])
        R_true, best, cum_mu = truth.tables(x, r)
        i = int(_inverse_cdf(cum_mu[s][None, :], np.array([streams["customer"].random()]))[0])
        if fclass.kind == "linear":
            star_loss += linear_logloss(fclass.theta_star, universe.matrices[x], sets[s], i, fclass.bound)
        oracle.update(x, mask[s], i)
        ctx_col[t - 1], s_col[t - 1], i_col[t - 1] = x, s, i
        opt_col[t - 1], played_col[t - 1] = best, R_true[s]
        realized_col[t - 1] = r[i - 1] if i > 0 else 0.0

    if fclass.kind == "finite":
        comparator = float(oracle.member_cum_loss.min())
    else:
        comparator = star_loss
    diag = {
        "reg_log": oracle.cum_loss - comparator,
        "oracle_cum_loss": oracle.cum_loss,
        "param": eps if strategy == "eps" else gamma,
        "unconverged_solves": unconverged,
        "worst_residual": worst_residual,
    }
    return Trace(ctx_col, [sets[j] for j in s_col], i_col, opt_col, played_col, np.zeros(horizon, dtype=int),
                 realized_reward=realized_col, seed=seed, diagnostics=diag)


# ---------------------------------------------------------------------------
# Feel-good Thompson sampling


def fgts_members(fclass, universe, per_axis: int = 9) -> np.ndarray:
    """Value tables (members, contexts, N): the finite class itself or a theta grid."""
    if fclass.kind == "finite":
        return fclass.tables
    return linear_values(theta_grid(fclass, per_axis), universe.matrices, fclass.bound)


class _MemberTables:
    """Per-(context, rewards) tables for every member: best reward, greedy set, probabilities."""

    def __init__(self, values: np.ndarray, capacity: int):
        self.values = values
        self.capacity = capacity
        self.mask = incidence(values.shape[2], capacity)
        self._cache = {}

    def get(self, x: int, r: np.ndarray):
        key = (x, r.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            v = self.values[:, x, :]  # (F, N)
            R = reward_table(v, r, self.capacity)  # (F, |S|)
            best_val = R.max(axis=1)
            best = np.argmax(R >= best_val[:, None] - 1e-12, axis=1)
            mu = choice_probs(v[:, None, :], self.mask[None])  # (F, |S|, N+1)
            sumsq = (mu[:, :, 1:] ** 2).sum(axis=2)  # (F, |S|)
            hit = (best_val, best, mu, sumsq)
            if len(self._cache) < 20_000:
                self._cache[key] = hit
        return hit


def run_fgts(env, fclass, universe, capacity: int, horizon: int, seed: int, eta: float | None = None,
             grid_per_axis: int = 9) -> Trace:
    """Sample f_t from the posterior, play its greedy assortment, reweight every member."""
    N = _class_items(fclass, universe)
    _check_sizes(env, N, capacity)
    if env.kind == "adversarial" and len(env) < horizon:
        raise ValidationError(f"script has {len(env)} rounds, horizon is {horizon}", field="T")
    values = fgts_members(fclass, universe, grid_per_axis)
    n_members = values.shape[0]
    eta = default_fgts_eta(N, capacity, n_members, horizon) if eta is None else float(eta)
    post = FgtsPosterior.uniform(n_members, eta)
    scale = 1.0 / (8.0 * eta * capacity)
    streams = rng_streams(seed)
    sets = all_assortments(N, capacity)
    truth = _Truth(env.truth, capacity)
    members = _MemberTables(values, capacity)

    ctx_col = np.empty(horizon, dtype=int)
    s_col = np.empty(horizon, dtype=int)
    i_col = np.empty(horizon, dtype=int)
    opt_col = np.empty(horizon)
    played_col = np.empty(horizon)
    realized_col = np.empty(horizon)
    lw = post.log_weights.copy()

    for t in range(1, horizon + 1):
        if env.kind == "stochastic":
            a = int(env.draw_atoms(1, streams["env"])[0])
            x, r = int(env.contexts[a]), env.rewards[a]
        else:
            x, r = int(env.contexts[t - 1]), env.rewards[t - 1]
        w = np.exp(lw - lw.max())
        f = draw_index(w / w.sum(), streams["policy"])
        best_val, best, mu, sumsq = members.get(x, r)
        s = int(best[f])
        R_true, opt, cum_mu = truth.tables(x, r)
        i = int(_inverse_cdf(cum_mu[s][None, :], np.array([streams["customer"].random()]))[0])
        # sum_{j in S} (mu_j - 1[j = i])^2
        sq = sumsq[:, s] + ((1.0 - 2.0 * mu[:, s, i]) if i > 0 else 0.0)
        lw -= eta * (scale * sq - best_val)
        lw -= lw.max()
        ctx_col[t - 1], s_col[t - 1], i_col[t - 1] = x, s, i
        opt_col[t - 1], played_col[t - 1] = opt, R_true[s]
        realized_col[t - 1] = r[i - 1] if i > 0 else 0.0

    w = np.exp(lw - lw.max())
    diag = {"eta": eta, "n_members": n_members, "final_weights": w / w.sum()}
    return Trace(ctx_col, [sets[j] for j in s_col], i_col, opt_col, played_col, np.zeros(horizon, dtype=int),
                 realized_reward=realized_col, seed=seed, diagnostics=diag)
