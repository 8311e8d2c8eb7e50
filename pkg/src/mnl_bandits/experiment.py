"""Experiment configuration, seeded runs, summaries and plots."""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from .assortment import incidence
from .classes import gen_random_instance, load_instance, truth_values
from .core import choice_probs
from .envs import (
    FIXTURE_SEED, GENERATORS, StochasticEnv, load_script, replay_script, standard_fixture, stochastic_env,
)
from .errors import ValidationError
from .oracles import (
    ErrModel, HedgeOracle, OGDOracle, SampleBatch, batch_log_loss, default_hedge_lr, linear_logloss,
)
from .policies import run_alg1, run_alg2, run_fgts

log = logging.getLogger(__name__)

ALGORITHMS = ("alg1-eps", "alg1-logbarrier", "alg2-eps", "alg2-logbarrier", "fgts")

DEFAULT_CONFIG = {
    "algorithms": ["alg1-eps", "alg1-logbarrier"],
    "T": 1000,
    "seeds": [0],
    "workers": 1,
    "output_dir": "results",
    "instance": {
        "kind": "fixture",  # fixture | finite | linear | file
        "seed": FIXTURE_SEED,
        "N": 6,
        "K": 2,
        "members": 20,
        "contexts": 8,
        "beta": 0.05,
        "structure": "iid",
        "dim": 3,
        "B": 1.0,
        "path": None,
    },
    "env": {
        "kind": "stochastic",  # stochastic | drifting | switching | replay | file
        "seed": 1,
        "path": None,
        "period": 2000.0,
        "block": 500,
    },
    "oracle": {
        "err_constant": 1.0,
        "online_constant": 1.0,
        "hedge_lr": None,
    },
    "params": {
        "eps": None,
        "gamma": None,
        "eta": None,
        "grid_per_axis": 9,
    },
    "solver": {
        "kkt_tol": 1e-3,
        "accept_tol": 5e-3,
        "improve_tol": 1e-10,
        "max_sweeps": None,
        "method": "mirror",
    },
}

_TYPES = {
    "algorithms": list,
    "T": int,
    "seeds": list,
    "workers": int,
    "output_dir": str,
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ValidationError(f"unknown key (allowed: {', '.join(sorted(base))})", field=where)
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ValidationError("expected a mapping", field=where)
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def resolve_config(raw: dict | None) -> dict:
    """Fill defaults and validate; errors name the offending field path."""
    cfg = _merge(DEFAULT_CONFIG, raw or {})
    for key, typ in _TYPES.items():
        if not isinstance(cfg[key], typ) or isinstance(cfg[key], bool):
            raise ValidationError(f"expected {typ.__name__}, got {cfg[key]!r}", field=key)
    if isinstance(cfg["algorithms"], str):
        cfg["algorithms"] = [cfg["algorithms"]]
    for k, name in enumerate(cfg["algorithms"]):
        if name not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {name!r} (choose from {', '.join(ALGORITHMS)})",
                                  field=f"algorithms[{k}]")
    if cfg["T"] < 1:
        raise ValidationError("must be >= 1", field="T")
    if not cfg["seeds"] or not all(isinstance(s, int) and not isinstance(s, bool) for s in cfg["seeds"]):
        raise ValidationError("must be a nonempty list of integers", field="seeds")
    inst = cfg["instance"]
    if inst["kind"] not in ("fixture", "finite", "linear", "file"):
        raise ValidationError(f"unknown kind {inst['kind']!r}", field="instance.kind")
    if inst["kind"] == "file" and not inst["path"]:
        raise ValidationError("file instances need a path", field="instance.path")
    if inst["kind"] in ("finite", "linear"):
        for key in ("N", "K", "contexts"):
            if not isinstance(inst[key], int) or inst[key] < 1:
                raise ValidationError("must be a positive integer", field=f"instance.{key}")
    if not 0 < float(inst["beta"]) < 1:
        raise ValidationError("must lie in (0, 1)", field="instance.beta")
    env = cfg["env"]
    if env["kind"] not in ("stochastic", "drifting", "switching", "replay", "file"):
        raise ValidationError(f"unknown kind {env['kind']!r}", field="env.kind")
    if env["kind"] == "file" and not env["path"]:
        raise ValidationError("script files need a path", field="env.path")
    if env["kind"] != "stochastic":
        bad = [a for a in cfg["algorithms"] if a.startswith("alg1")]
        if bad:
            raise ValidationError(f"{bad[0]} needs a stochastic environment", field="env.kind")
    if cfg["workers"] < 1:
        raise ValidationError("must be >= 1", field="workers")
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a mapping")
    return resolve_config(raw)


# keys that change where or how fast results are produced, never their content
_UNHASHED = ("output_dir", "workers")


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON of the result-determining part of ``cfg``."""
    cfg = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def default_config_text() -> str:
    return yaml.safe_dump(DEFAULT_CONFIG, sort_keys=False)


# ---------------------------------------------------------------------------
# Building instances


def build_instance(cfg: dict):
    """Return ``(class, universe, stochastic_env, K)`` for the configured instance."""
    inst = cfg["instance"]
    if inst["kind"] == "fixture":
        return standard_fixture(inst["seed"])
    rng = np.random.default_rng(inst["seed"])
    if inst["kind"] == "file":
        cls, universe = load_instance(inst["path"])
    elif inst["kind"] == "finite":
        sizes = {k: inst[k] for k in ("members", "contexts", "beta", "structure")}
        cls, universe = gen_random_instance("finite", inst["N"], inst["K"], sizes, rng)
    else:
        sizes = {"dim": inst["dim"], "contexts": inst["contexts"], "B": inst["B"]}
        cls, universe = gen_random_instance("linear", inst["N"], inst["K"], sizes, rng)
    return cls, universe, stochastic_env(cls, universe, rng), inst["K"]


def build_env(cfg: dict, base: StochasticEnv):
    env_cfg = cfg["env"]
    kind = env_cfg["kind"]
    if kind == "stochastic":
        return base
    T = cfg["T"]
    if kind == "replay":
        return replay_script(base, T, np.random.default_rng(env_cfg["seed"]))
    if kind == "file":
        return load_script(env_cfg["path"], base.truth)
    if kind == "drifting":
        return GENERATORS[kind](base.truth, T, period=env_cfg["period"], seed=env_cfg["seed"])
    return GENERATORS[kind](base.truth, T, block=env_cfg["block"])


def run_one(cfg: dict, algorithm: str, seed: int):
    cls, universe, base, K = build_instance(cfg)
    env = build_env(cfg, base)
    N = cls.n_items if cls.kind == "finite" else universe.matrices.shape[2]
    oc = cfg["oracle"]
    err = ErrModel.for_class(cls, N, K, constant=oc["err_constant"], online_constant=oc["online_constant"])
    p = cfg["params"]
    solver = {k: v for k, v in cfg["solver"].items() if v is not None}
    T = cfg["T"]
    if algorithm.startswith("alg1"):
        trace = run_alg1(env, cls, universe, K, algorithm.split("-")[1], T, seed, err_model=err,
                         eps_override=p["eps"], gamma_override=p["gamma"], solver_cfg=solver)
    elif algorithm.startswith("alg2"):
        trace = run_alg2(env, cls, universe, K, algorithm.split("-")[1], T, seed, gamma=p["gamma"], eps=p["eps"],
                         err_model=err, hedge_lr=oc["hedge_lr"], solver_cfg=solver)
    else:
        trace = run_fgts(env, cls, universe, K, T, seed, eta=p["eta"], grid_per_axis=p["grid_per_axis"])
    trace.config_hash = config_hash(cfg)
    return trace


def _run_job(args):
    cfg, algorithm, seed = args
    try:
        return algorithm, seed, run_one(cfg, algorithm, seed), None
    except Exception as exc:  # recorded and excluded from the summary
        return algorithm, seed, None, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# Summaries


def checkpoints(T: int) -> np.ndarray:
    return np.unique(np.maximum(np.array([T // 8, T // 4, T // 2, T]), 1))


def loglog_slope(cum_regret: np.ndarray, T: int | None = None) -> float:
    """Least-squares slope of log Reg(t) against log t over t = T/8, T/4, T/2, T."""
    T = T or len(cum_regret)
    pts = checkpoints(T)
    y = cum_regret[pts - 1]
    if len(pts) < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(pts), np.log(y), 1)[0])


def summarize(results: dict, T: int) -> list:
    """Rows of (algorithm, seed, final_regret, slope); a mean and stderr row per algorithm."""
    rows = []
    for algorithm, per_seed in results.items():
        finals = []
        curves = []
        for seed in sorted(per_seed):
            tr = per_seed[seed]
            finals.append(tr.final_regret)
            curves.append(tr.cum_regret)
            rows.append([algorithm, str(seed), f"{tr.final_regret:.10g}", f"{loglog_slope(tr.cum_regret, T):.6g}"])
        if finals:
            finals = np.array(finals)
            mean_curve = np.mean(curves, axis=0)
            stderr = finals.std(ddof=1) / math.sqrt(len(finals)) if len(finals) > 1 else 0.0
            rows.append([algorithm, "mean", f"{finals.mean():.10g}", f"{loglog_slope(mean_curve, T):.6g}"])
            rows.append([algorithm, "stderr", f"{stderr:.10g}", ""])
    return rows


def write_summary(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "seed", "final_regret", "loglog_slope"])
        w.writerows(rows)


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def regret_svg(results: dict, T: int, width: int = 640, height: int = 400, points: int = 200) -> str:
    """Mean cumulative regret with a +-1 stderr band per algorithm, as a standalone SVG."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 20, 50
    grid = np.unique(np.linspace(1, T, min(points, T)).astype(int))
    series = {}
    for algorithm, per_seed in results.items():
        if not per_seed:
            continue
        curves = np.array([per_seed[s].cum_regret[grid - 1] for s in sorted(per_seed)])
        mean = curves.mean(axis=0)
        se = curves.std(axis=0, ddof=1) / math.sqrt(len(curves)) if len(curves) > 1 else np.zeros_like(mean)
        series[algorithm] = (mean, se)
    top = max([float((m + s).max()) for m, s in series.values()] + [1e-12])
    sx = lambda t: pad_l + (width - pad_l - pad_r) * (t - 1) / max(T - 1, 1)
    sy = lambda y: height - pad_b - (height - pad_t - pad_b) * y / top
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{pad_l}" y1="{height - pad_b}" x2="{width - pad_r}" y2="{height - pad_b}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{height - pad_b}" stroke="black"/>',
           f'<text x="{(width + pad_l) / 2:.0f}" y="{height - 12}" text-anchor="middle">round t</text>',
           f'<text x="16" y="{(height - pad_b + pad_t) / 2:.0f}" text-anchor="middle" '
           f'transform="rotate(-90 16 {(height - pad_b + pad_t) / 2:.0f})">cumulative regret</text>']
    for frac in (0.0, 0.5, 1.0):
        y = top * frac
        out.append(f'<text x="{pad_l - 6}" y="{sy(y) + 4:.1f}" text-anchor="end">{y:.4g}</text>')
        t = 1 + (T - 1) * frac
        out.append(f'<text x="{sx(t):.1f}" y="{height - pad_b + 16}" text-anchor="middle">{t:.0f}</text>')
    for k, (algorithm, (mean, se)) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        upper = " ".join(f"{sx(t):.1f},{sy(y):.1f}" for t, y in zip(grid, mean + se))
        lower = " ".join(f"{sx(t):.1f},{sy(y):.1f}" for t, y in zip(grid[::-1], (mean - se)[::-1]))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{sx(t):.1f},{sy(y):.1f}" for t, y in zip(grid, mean))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{pad_l + 10}" y="{pad_t + 14 * (k + 1)}" fill="{color}">{algorithm}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def run_experiment(cfg: dict, write: bool = True) -> dict:
    """Run every (algorithm, seed) pair; write traces, ``summary.csv`` and ``regret.svg``.

    Returns ``{"traces": {alg: {seed: Trace}}, "summary": rows, "failures": [...]}``.
    """
    cfg = resolve_config(cfg)
    jobs = [(cfg, a, s) for a in cfg["algorithms"] for s in cfg["seeds"]]
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            done = list(pool.map(_run_job, jobs))
    else:
        done = [_run_job(j) for j in jobs]
    traces = {a: {} for a in cfg["algorithms"]}
    failures = []
    for algorithm, seed, trace, error in done:
        if error is not None:
            log.warning("%s seed %s failed and is excluded from the summary: %s", algorithm, seed, error)
            failures.append((algorithm, seed, error))
        else:
            traces[algorithm][seed] = trace
    rows = summarize(traces, cfg["T"])
    if write:
        out = cfg["output_dir"]
        for algorithm, per_seed in traces.items():
            os.makedirs(os.path.join(out, algorithm), exist_ok=True)
            for seed, tr in per_seed.items():
                tr.write_csv(os.path.join(out, algorithm, f"seed{seed}.csv"))
        write_summary(rows, os.path.join(out, "summary.csv"))
        with open(os.path.join(out, "regret.svg"), "w") as fh:
            fh.write(regret_svg(traces, cfg["T"]))
    return {"traces": traces, "summary": rows, "failures": failures, "config": cfg}


# ---------------------------------------------------------------------------
# Offline ERM excess risk


def erm_excess_curve(cls, capacity: int, sizes, seed: int, mc_samples: int = 100_000) -> np.ndarray:
    """Population excess log loss of the finite-class ERM at each sample size.

    Data are uniform contexts and assortments with purchases from the truth;
    one nested stream is used so larger fits extend smaller ones. The excess
    is a Monte-Carlo average over ``mc_samples`` fresh (x, S) pairs of the
    exact conditional KL(mu* || mu_f).
    """
    rng = np.random.default_rng(seed)
    truth = cls.tables[cls.truth_index]
    sizes = np.asarray(sizes, dtype=int)
    ctx, masks, purchase = oracle_stream(truth, capacity, int(sizes.max()), rng)
    losses = batch_log_loss(cls.tables[:, ctx, :], SampleBatch(ctx, masks, purchase))
    cum = np.cumsum(losses, axis=1)
    fitted = np.argmin(cum[:, sizes - 1], axis=0)  # lowest index on ties, as in erm_fit

    n_ctx = truth.shape[0]
    a = incidence(truth.shape[1], capacity)
    x = rng.integers(0, n_ctx, mc_samples)
    m = a[rng.integers(0, len(a), mc_samples)]
    p_star = choice_probs(truth[x], m)
    excess = np.empty(len(sizes))
    cache = {}
    for k, f in enumerate(fitted):
        if f not in cache:
            p = choice_probs(cls.tables[f][x], m)
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(p_star > 0, p_star * (np.log(p_star) - np.log(p)), 0.0)
            cache[f] = float(terms.sum(axis=1).mean())
        excess[k] = cache[f]
    return excess


# ---------------------------------------------------------------------------
# Online oracle benchmark


def oracle_stream(truth: np.ndarray, capacity: int, T: int, rng: np.random.Generator):
    """Uniform contexts, uniform assortments, purchases from the truth."""
    n_ctx, N = truth.shape
    a = incidence(N, capacity)
    ctx = rng.integers(0, n_ctx, T)
    sets = rng.integers(0, len(a), T)
    cum = np.cumsum(choice_probs(truth[ctx], a[sets]), axis=1)
    purchase = np.minimum((rng.random(T)[:, None] >= cum).sum(axis=1), N)
    return ctx, a[sets], purchase


def hedge_regret(cls, capacity: int, T: int, seed: int, lr: float | None = None) -> float:
    """Measured log-loss regret of randomised Hedge against the best member in hindsight."""
    rng = np.random.default_rng(seed)
    truth = cls.tables[cls.truth_index]
    ctx, masks, purchase = oracle_stream(truth, capacity, T, rng)
    oracle = HedgeOracle(cls.tables, lr or default_hedge_lr(cls.n_members, T, capacity, cls.beta), rng)
    for t in range(T):
        oracle.predict()
        oracle.update(int(ctx[t]), masks[t], int(purchase[t]))
    return float(oracle.cum_loss - oracle.member_cum_loss.min())


def ogd_regret(cls, universe, capacity: int, T: int, seed: int) -> float:
    """Measured log-loss regret of projected OGD against theta*."""
    rng = np.random.default_rng(seed)
    truth = truth_values(cls, universe)
    ctx, masks, purchase = oracle_stream(truth, capacity, T, rng)
    oracle = OGDOracle(cls, universe)
    star = 0.0
    for t in range(T):
        S = tuple(int(j) + 1 for j in np.flatnonzero(masks[t]))
        star += linear_logloss(cls.theta_star, universe.matrices[ctx[t]], S, int(purchase[t]), cls.bound)
        oracle.update(int(ctx[t]), masks[t], int(purchase[t]))
    return float(oracle.cum_loss - star)


def hedge_bound(n_members: int, T: int, capacity: int, beta: float) -> float:
    return 2.0 * math.sqrt(T * math.log(n_members)) * math.log((capacity + 1) / beta)


def ogd_bound(bound: float, T: int) -> float:
    return 3.0 * bound * math.sqrt(T)


BENCH_DEFAULTS = {"T": 10_000, "seeds": list(range(20)), "linear": {"N": 6, "K": 2, "dim": 3, "contexts": 8,
                                                                      "B": 1.0, "seed": 5}}


def oracle_bench(cfg: dict | None = None) -> list:
    """Rows of (oracle, seed, measured regret, bound) on the fixture (Hedge) and a linear instance (OGD)."""
    cfg = {**BENCH_DEFAULTS, **(cfg or {})}
    lin = {**BENCH_DEFAULTS["linear"], **cfg.get("linear", {})}
    T = int(cfg["T"])
    fcls, _, _, K = standard_fixture()
    lcls, lu = gen_random_instance("linear", lin["N"], lin["K"], {"dim": lin["dim"], "contexts": lin["contexts"],
                                                                   "B": lin["B"]}, np.random.default_rng(lin["seed"]))
    rows = []
    hb = hedge_bound(fcls.n_members, T, K, fcls.beta)
    ob = ogd_bound(lcls.bound, T)
    for seed in cfg["seeds"]:
        rows.append(("hedge", seed, hedge_regret(fcls, K, T, seed), hb))
    for seed in cfg["seeds"]:
        rows.append(("ogd", seed, ogd_regret(lcls, lu, lin["K"], T, seed), ob))
    return rows

