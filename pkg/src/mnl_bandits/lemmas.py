"""Randomised property suites for the model's structural inequalities.

Each suite draws its own instances from a seeded generator and reports the
worst slack observed; slack is ``bound - quantity`` so a negative value is a
violation (beyond the stated tolerance).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assortment import best_assortment_bruteforce, best_assortment_fast, incidence, reward_table
from .core import choice_probs, rewards_of
from .dec import dec_bounds, dec_estimate
from .oracles import SampleBatch, _linear_batch_loss_grad
from .policies import eps_greedy_dist, item_marginals, log_barrier_dist, log_barrier_solve


@dataclass
class SuiteResult:
    name: str
    anchor: str
    passed: bool
    worst_slack: float
    checks: int
    seconds: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<28} worst_slack={self.worst_slack:+.3e} checks={self.checks} "
                f"time={self.seconds:.1f}s  [{self.anchor}]")


def _random_masks(rng, n, n_max, k_max):
    """n random assortments: N in 1..n_max, K in 1..k_max, |S| in 1..min(N, K)."""
    N = rng.integers(1, n_max + 1, n)
    K = rng.integers(1, k_max + 1, n)
    size = rng.integers(1, np.minimum(N, K) + 1)
    keys = rng.random((n, n_max))
    keys[np.arange(n_max)[None, :] >= N[:, None]] = np.inf
    rank = np.argsort(np.argsort(keys, axis=1), axis=1)
    return rank < size[:, None], K


def reward_lipschitz(rng, n=100_000, tol=1e-9, **_):
    mask, _ = _random_masks(rng, n, 10, 5)
    v, v2, r = rng.random((3, n, 10))
    lhs = np.abs(rewards_of(v, r, mask) - rewards_of(v2, r, mask))
    rhs = np.where(mask, np.abs(v - v2), 0.0).sum(axis=1)
    slack = rhs - lhs
    return slack.min() >= -tol, float(slack.min()), n, {}


def choice_sandwich(rng, n=100_000, tol=1e-9, **_):
    mask, K = _random_masks(rng, n, 10, 5)
    v, vs = rng.random((2, n, 10))
    mu, mus = choice_probs(v, mask), choice_probs(vs, mask)
    sq = ((mu - mus) ** 2).sum(axis=1)
    support = np.concatenate((np.ones((n, 1), dtype=bool), mask), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(support & (mus > 0), mus * np.log(mus / mu), 0.0).sum(axis=1)
    lower = np.where(mask, (v - vs) ** 2, 0.0).sum(axis=1) / (2.0 * (K + 1.0) ** 4)
    s_low = sq - lower
    s_up = 2.0 * kl - sq
    worst = float(min(s_low.min(), s_up.min()))
    return worst >= -tol, worst, n, {"lower_worst": float(s_low.min()), "upper_worst": float(s_up.min())}


def jacobian_bound(rng, n=100_000, tol=1e-9, **_):
    d = rng.integers(1, 9, n)
    live = np.arange(8)[None, :] < d[:, None]
    a = np.where(live, rng.random((n, 8)), 0.0)
    b = np.where(live, rng.random((n, 8)), 0.0)
    h = lambda x: x / (1.0 + x.sum(axis=1, keepdims=True))
    lhs = ((h(a) - h(b)) ** 2).sum(axis=1)
    rhs = ((a - b) ** 2).sum(axis=1) / (2.0 * (d + 1.0) ** 4)
    slack = lhs - rhs
    return slack.min() >= -tol, float(slack.min()), n, {}


def strong_central(rng, n=10_000, tol=1e-10, **_):
    """E_{i ~ mu*}[exp(loss(mu*, i) - loss(mu, i))] = sum_{i in S+0} mu_i = 1."""
    mask, _ = _random_masks(rng, n, 10, 5)
    beta = 0.05
    f, fs = beta + (1 - beta) * rng.random((2, n, 10))
    mu, mus = choice_probs(f, mask), choice_probs(fs, mask)
    support = np.concatenate((np.ones((n, 1), dtype=bool), mask), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(support, mus * np.exp(-np.log(mus) + np.log(mu)), 0.0)
    err = np.abs(terms.sum(axis=1) - 1.0)
    return err.max() <= tol, float(tol - err.max()), n, {"max_abs_error": float(err.max())}


def logloss_gradient(rng, n=100_000, n_fd=1_000, tol=1e-9, fd_tol=1e-6, **_):
    d, N, bound = 4, 6, 1.0
    cols = rng.standard_normal((n, d, N))
    cols /= np.maximum(np.linalg.norm(cols, axis=1, keepdims=True), 1.0) * (1.0 + rng.random((n, 1, N)))
    mask, _ = _random_masks(rng, n, N, 5)
    purchase = np.array([rng.choice(np.concatenate(([0], np.flatnonzero(m) + 1))) for m in mask])
    theta = rng.standard_normal((n, d))
    theta *= (bound * rng.random(n) ** (1 / d) / np.linalg.norm(theta, axis=1))[:, None]
    z = np.einsum("nd,ndk->nk", theta, cols) - bound
    e = np.where(mask, np.exp(z), 0.0)
    grad = np.einsum("ndk,nk->nd", cols, e) / (1.0 + e.sum(axis=1))[:, None]
    bought = purchase > 0
    grad[bought] -= cols[bought, :, purchase[bought] - 1]
    norms = np.linalg.norm(grad, axis=1)
    worst = 2.0 - norms.max()

    fd_err = 0.0
    h = 1e-5
    for k in range(n_fd):
        batch = SampleBatch(np.array([0]), mask[k:k + 1], purchase[k:k + 1])
        mats = cols[k:k + 1]
        _, g = _linear_batch_loss_grad(theta[k], mats, batch, bound)
        num = np.empty(d)
        for j in range(d):
            step = np.zeros(d)
            step[j] = h
            lp, _ = _linear_batch_loss_grad(theta[k] + step, mats, batch, bound)
            lm, _ = _linear_batch_loss_grad(theta[k] - step, mats, batch, bound)
            num[j] = (lp - lm) / (2 * h)
        fd_err = max(fd_err, float(np.abs(num - g).max()), float(np.abs(num - grad[k]).max()))
    ok = worst >= -tol and fd_err <= fd_tol
    return ok, float(min(worst, fd_tol - fd_err)), n + n_fd, {"max_norm": float(norms.max()), "fd_error": fd_err}


def barrier_guarantees(rng, n=200, gammas=(10.0, 100.0, 1000.0), rel_slack=0.01, solver_cfg=None, **_):
    """Low regret and high dispersion of the solved log-barrier distribution."""
    worst = math.inf
    checks = 0
    unconverged = 0
    for _ in range(n):
        N = int(rng.integers(2, 9))
        K = int(rng.integers(1, 4))
        v, r = rng.random(N), rng.random(N)
        R = reward_table(v, r, K)
        a = incidence(N, K)
        for gamma in gammas:
            sol = log_barrier_solve(R, N, K, gamma, solver_cfg)
            unconverged += not sol.converged
            w = sol.rho @ a
            scale = (K + 1) ** 4 / gamma  # the proven weight, independent of any override
            regret = R.max() - sol.rho @ R
            bound_a = N * scale
            worst = min(worst, (bound_a * (1 + rel_slack) - regret) / bound_a)
            disp = a.astype(float) @ (1.0 / w)
            bound_b = N + (R.max() - R) / scale
            worst = min(worst, float(((bound_b * (1 + rel_slack) - disp) / bound_b).min()))
            checks += 1 + len(R)
    return worst >= 0, float(worst), checks, {"unconverged": unconverged}


def eps_marginals(rng, n=10_000, **_):
    worst = math.inf
    for _ in range(n):
        N = int(rng.integers(1, 9))
        K = int(rng.integers(1, 4))
        eps = float(rng.random())
        q = eps_greedy_dist(rng.random(N), rng.random(N), eps, K)
        worst = min(worst, float((item_marginals(q, N) - eps / N).min()))
    return worst >= -1e-15, worst, n, {}


def solver_equivalence(rng, n=10_000, tol=1e-9, **_):
    worst = math.inf
    for _ in range(n):
        N = int(rng.integers(1, 13))
        K = int(rng.integers(1, 6))
        v, r = rng.random(N), rng.random(N)
        gap = best_assortment_bruteforce(v, r, K).value - best_assortment_fast(v, r, K).value
        worst = min(worst, tol - abs(gap))
    return worst >= 0, float(worst), n, {}


def dec_soundness(rng, n=50, margin=-1e-6, search_cfg=None, solver_cfg=None, **_):
    worst = math.inf
    rows = []
    for fid in range(n):
        N = int(rng.integers(2, 5))
        K = int(rng.integers(1, 3))
        gamma = float(rng.choice([100.0, 1000.0, 10000.0]))
        eps = float(rng.choice([0.1, 0.3, 0.5]))
        v, r = rng.random(N), rng.random(N)
        qb = log_barrier_dist(v, r, gamma, N, K, solver_cfg)
        qe = eps_greedy_dist(v, r, eps, K)
        for kind, q, bound in (("logbarrier", qb, dec_bounds("logbarrier", N, K, gamma)),
                               ("epsgreedy", qe, dec_bounds("epsgreedy", N, K, gamma, eps))):
            est = dec_estimate(q, v, r, gamma, K, search_cfg)
            rows.append((fid, kind, gamma, eps if kind == "epsgreedy" else "", est.value, bound, bound - est.value))
            worst = min(worst, bound - est.value)
    return worst >= margin, float(worst), 2 * n, {"rows": rows}


SUITES = {
    "reward-lipschitz": (reward_lipschitz, "expected reward is 1-Lipschitz in the offered valuations (l1)"),
    "choice-sandwich": (choice_sandwich, "valuation gap <= choice distance <= 2 KL, constant 1/(2(K+1)^4)"),
    "jacobian-bound": (jacobian_bound, "a -> a/(1+sum a) contracts by at most 1/(2(d+1)^4)"),
    "strong-central": (strong_central, "likelihood ratio of any member has unit mean under the truth"),
    "logloss-gradient": (logloss_gradient, "log-linear log-loss gradient has norm <= 2 and matches finite differences"),
    "low-regret-high-dispersion": (barrier_guarantees, "log-barrier distribution: regret <= N(K+1)^4/gamma, dispersion bound"),
    "eps-marginals": (eps_marginals, "epsilon-greedy offers every item with probability >= eps/N"),
    "solver-equivalence": (solver_equivalence, "threshold assortment solver matches brute force"),
    "dec-soundness": (dec_soundness, "estimated DEC stays below the closed-form bounds"),
}

FAULTS = {
    # drop the (K+1)^4 factor from the barrier weight
    "drop-barrier-factor": lambda gamma, K: 1.0 / gamma,
}


def run_suite(name: str, seed: int = 0, scale: float = 1.0, fault: str | None = None, **kw) -> SuiteResult:
    """Run one suite; ``scale`` multiplies every sample count (1.0 = the stated counts)."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    fn, anchor = SUITES[name]
    rng = np.random.default_rng(np.random.SeedSequence([seed, sorted(SUITES).index(name)]))
    counts = {
        "reward-lipschitz": {"n": 100_000},
        "choice-sandwich": {"n": 100_000},
        "jacobian-bound": {"n": 100_000},
        "strong-central": {"n": 10_000},
        "logloss-gradient": {"n": 100_000, "n_fd": 1_000},
        "low-regret-high-dispersion": {"n": 200},
        "eps-marginals": {"n": 10_000},
        "solver-equivalence": {"n": 10_000},
        "dec-soundness": {"n": 50},
    }[name]
    args = {k: max(1, int(round(c * scale))) for k, c in counts.items()}
    args.update(kw)
    if fault is not None:
        if fault not in FAULTS:
            raise KeyError(f"unknown fault {fault!r}")
        args["solver_cfg"] = {"barrier_weight": FAULTS[fault]}
    t0 = time.perf_counter()
    ok, worst, checks, detail = fn(rng, **args)
    return SuiteResult(name, anchor, bool(ok), worst, checks, time.perf_counter() - t0, detail)


def verify_lemmas(config: dict | None = None) -> list:
    """Run the requested suites (default: all) and return their results."""
    config = dict(config or {})
    names = config.get("suites") or list(SUITES)
    return [run_suite(n, seed=config.get("seed", 0), scale=config.get("scale", 1.0), fault=config.get("fault"))
            for n in names]
