"""Realizable value-function classes: finite tables and the log-linear class."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_BETA = 0.05
DEFAULT_B = 1.0


@dataclass(frozen=True)
class ContextUniverse:
    """A finite list of contexts.

    ``kind == "finite"``: contexts are opaque ids ``0..n-1`` and ``matrices`` is None.
    ``kind == "linear"``: ``matrices`` has shape (n, d, N); column i of each
    matrix is the feature vector of item i and has norm at most 1.
    """

    kind: str
    n_contexts: int
    matrices: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "linear":
            if self.matrices is None or self.matrices.ndim != 3:
                raise ValidationError("linear contexts need an (n, d, N) array")
            norms = np.linalg.norm(self.matrices, axis=1)
            if norms.max() > 1 + 1e-9:
                raise ValidationError(f"context column norm {norms.max():.6g} exceeds 1")

    def __len__(self):
        return self.n_contexts


@dataclass(frozen=True)
class FiniteClass:
    """|F| value tables; ``tables[f, x]`` is member f's valuation vector at context x."""

    tables: np.ndarray
    beta: float
    truth_index: int = 0

    def __post_init__(self):
        t = self.tables
        if t.ndim != 3:
            raise ValidationError("tables must have shape (members, contexts, items)")
        if not 0 < self.beta < 1:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}", field="beta")
        if t.min() < self.beta - 1e-12 or t.max() > 1 + 1e-12:
            raise ValidationError(f"table entries must lie in [{self.beta}, 1]")
        if not 0 <= self.truth_index < t.shape[0]:
            raise ValidationError(f"truth_index {self.truth_index} out of range", field="truth_index")

    kind = "finite"

    @property
    def n_members(self) -> int:
        return self.tables.shape[0]

    @property
    def n_items(self) -> int:
        return self.tables.shape[2]


@dataclass(frozen=True)
class LinearClass:
    """f_theta,i(x) = exp(theta . x_i - B) over the ball ||theta|| <= B."""

    dim: int
    bound: float = DEFAULT_B
    theta_star: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.bound <= 0:
            raise ValidationError("norm bound must be positive", field="B")
        if self.theta_star is None:
            object.__setattr__(self, "theta_star", np.zeros(self.dim))
        check_theta(self, self.theta_star)

    kind = "linear"


def check_theta(cls: LinearClass, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != cls.dim:
        raise ValidationError(f"theta has dimension {theta.size}, expected {cls.dim}")
    if np.linalg.norm(theta) > cls.bound + 1e-9:
        raise ValidationError(f"||theta|| = {np.linalg.norm(theta):.6g} exceeds B = {cls.bound}")
    return theta


def eval_finite(cls: FiniteClass, member: int, x: int) -> np.ndarray:
    if not 0 <= member < cls.n_members:
        raise KeyError(f"unknown member {member}")
    if not 0 <= x < cls.tables.shape[1]:
        raise KeyError(f"unknown context id {x}")
    return cls.tables[member, x].copy()


def eval_linear(cls: LinearClass, theta, x) -> np.ndarray:
    theta = check_theta(cls, theta)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != cls.dim:
        raise ValidationError(f"context must be a ({cls.dim}, N) matrix")
    if np.linalg.norm(x, axis=0).max() > 1 + 1e-9:
        raise ValidationError("context column norm exceeds 1")
    # theta . x_i <= B by Cauchy-Schwarz, so the exponent is <= 0
    return np.exp(np.minimum(theta @ x - cls.bound, 0.0))


def linear_values(thetas: np.ndarray, contexts: np.ndarray, bound: float) -> np.ndarray:
    """Values of many parameters at many contexts: shape (members, contexts, N)."""
    thetas = np.atleast_2d(thetas)
    z = np.einsum("fd,cdn->fcn", thetas, contexts) - bound
    return np.exp(np.minimum(z, 0.0))


def theta_grid(cls: LinearClass, per_axis: int = 9) -> np.ndarray:
    """Uniform grid on [-B, B]^d restricted to the B-ball."""
    if cls.dim > 3:
        raise ValidationError(f"theta grid limited to d <= 3, got d={cls.dim}")
    axis = np.linspace(-cls.bound, cls.bound, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * cls.dim), indexing="ij"), axis=-1).reshape(-1, cls.dim)
    return mesh[np.linalg.norm(mesh, axis=1) <= cls.bound + 1e-12]


def value_tables(cls, universe: ContextUniverse, members=None) -> np.ndarray:
    """Tabulate members over the whole universe as a (members, contexts, N) array.

    For a finite class ``members`` defaults to every member; for the linear
    class it is an array of parameters (default: just theta_star).
    """
    if cls.kind == "finite":
        return cls.tables if members is None else cls.tables[np.asarray(members)]
    thetas = cls.theta_star[None, :] if members is None else np.atleast_2d(members)
    return linear_values(thetas, universe.matrices, cls.bound)


def truth_values(cls, universe: ContextUniverse) -> np.ndarray:
    """f*(x) for every context: shape (contexts, N)."""
    if cls.kind == "finite":
        return cls.tables[cls.truth_index]
    return linear_values(cls.theta_star, universe.matrices, cls.bound)[0]


def _ball(rng, n, d, radius):
    z = rng.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * (radius * rng.random(n) ** (1.0 / d))[:, None]


def gen_random_instance(kind: str, n_items: int, capacity: int, sizes: dict | None, rng: np.random.Generator):
    """Draw a realizable (class, universe) pair.

    ``sizes`` keys -- finite: ``members`` (20), ``contexts`` (8), ``beta``,
    ``structure`` ("iid" or "shells"); linear: ``dim`` (3), ``contexts`` (8), ``B``.

    With ``structure="shells"`` the non-truth members are perturbations of
    the truth at geometrically shrinking scales (``shell_max`` down to
    ``shell_min``), which gives ERM a smooth 1/n excess-risk curve instead
    of the all-or-nothing behaviour of well-separated i.i.d. tables.
    """
    sizes = dict(sizes or {})
    if n_items < 1 or capacity < 1:
        raise ValidationError("need N >= 1 and K >= 1")
    n_ctx = int(sizes.get("contexts", 8))
    if kind == "finite":
        n_members = int(sizes.get("members", 20))
        beta = float(sizes.get("beta", DEFAULT_BETA))
        structure = sizes.get("structure", "iid")
        if structure == "iid":
            tables = beta + (1 - beta) * rng.random((n_members, n_ctx, n_items))
        elif structure == "shells":
            truth = beta + (1 - beta) * rng.random((n_ctx, n_items))
            hi = float(sizes.get("shell_max", 0.5))
            lo = float(sizes.get("shell_min", 0.002))
            n_other = n_members - 1
            scales = hi * (lo / hi) ** (np.arange(n_other) / max(n_other - 1, 1))
            noise = rng.standard_normal((n_other, n_ctx, n_items))
            noise /= np.sqrt((noise**2).mean(axis=(1, 2), keepdims=True))
            others = np.clip(truth + scales[:, None, None] * noise, beta, 1.0)
            tables = np.concatenate((truth[None], others))
        else:
            raise ValidationError(f"unknown structure {structure!r}", field="structure")
        return FiniteClass(tables=tables, beta=beta, truth_index=0), ContextUniverse("finite", n_ctx)
    if kind == "linear":
        d = int(sizes.get("dim", 3))
        bound = float(sizes.get("B", DEFAULT_B))
        theta = _ball(rng, 1, d, bound)[0]
        cols = _ball(rng, n_ctx * n_items, d, 1.0).reshape(n_ctx, n_items, d).transpose(0, 2, 1)
        return LinearClass(dim=d, bound=bound, theta_star=theta), ContextUniverse("linear", n_ctx, cols)
    raise ValidationError(f"unknown class kind {kind!r}", field="kind")


# ---------------------------------------------------------------------------
# JSON fixtures


def instance_to_dict(cls, universe: ContextUniverse) -> dict:
    if cls.kind == "finite":
        return {
            "kind": "finite",
            "beta": cls.beta,
            "truth_index": cls.truth_index,
            "n_contexts": universe.n_contexts,
            "tables": cls.tables.tolist(),
        }
    return {
        "kind": "linear",
        "dim": cls.dim,
        "B": cls.bound,
        "theta_star": cls.theta_star.tolist(),
        "n_contexts": universe.n_contexts,
        "contexts": universe.matrices.tolist(),
    }


def instance_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "finite":
        cls = FiniteClass(np.asarray(data["tables"], dtype=float), float(data["beta"]), int(data["truth_index"]))
        return cls, ContextUniverse("finite", int(data["n_contexts"]))
    if kind == "linear":
        cls = LinearClass(int(data["dim"]), float(data["B"]), np.asarray(data["theta_star"], dtype=float))
        mats = np.asarray(data["contexts"], dtype=float)
        return cls, ContextUniverse("linear", int(data["n_contexts"]), mats)
    raise ValidationError(f"unknown class kind {kind!r}", field="kind")


def dump_instance(cls, universe: ContextUniverse, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(cls, universe), fh, indent=1)


def load_instance(path):
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
