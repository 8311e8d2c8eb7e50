"""Per-round run records and their CSV form."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .core import format_assortment, parse_assortment

CSV_COLUMNS = ("t", "context_id", "assortment", "purchase", "opt_reward", "played_reward", "cum_regret", "epoch")


@dataclass
class Trace:
    """Columns of a bandit run, one entry per round.

    ``played_reward`` is the exact expected reward of the played assortment
    under the true valuations; ``realized_reward`` is the reward of the
    sampled purchase and is kept in memory only.
    """

    context_id: np.ndarray
    assortments: list
    purchase: np.ndarray
    opt_reward: np.ndarray
    played_reward: np.ndarray
    epoch: np.ndarray
    realized_reward: np.ndarray | None = None
    seed: int | None = None
    config_hash: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cum_regret = np.cumsum(self.regret)

    def __len__(self):
        return len(self.context_id)

    @property
    def regret(self) -> np.ndarray:
        return np.maximum(self.opt_reward - self.played_reward, 0.0)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if len(self) else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.seed} config_sha256={self.config_hash}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for k in range(len(self)):
            buf.write(
                f"{k + 1},{int(self.context_id[k])},{format_assortment(self.assortments[k])},"
                f"{int(self.purchase[k])},{self.opt_reward[k]:.17g},{self.played_reward[k]:.17g},"
                f"{self.cum_regret[k]:.17g},{int(self.epoch[k])}\n"
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def read_csv(path) -> dict:
    """Load a trace CSV into column arrays (assortments as tuples)."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    meta[key] = val
                continue
            rows.append(line.rstrip("\n").split(","))
    header, body = rows[0], rows[1:]
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    cols = list(zip(*body)) if body else [()] * len(CSV_COLUMNS)
    out = {
        "t": np.array(cols[0], dtype=int),
        "context_id": np.array(cols[1], dtype=int),
        "assortment": [parse_assortment(s) for s in cols[2]],
        "purchase": np.array(cols[3], dtype=int),
        "opt_reward": np.array(cols[4], dtype=float),
        "played_reward": np.array(cols[5], dtype=float),
        "cum_regret": np.array(cols[6], dtype=float),
        "epoch": np.array(cols[7], dtype=int),
    }
    out["meta"] = meta
    return out
