"""Per-epoch measurements and cross-seed aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

Z_95 = 1.959963984540054


def efficiency(env_rewards) -> float:
    """Sum of undiscounted environment returns over all agents and steps."""
    return float(np.sum(env_rewards))


def own_coins_rate(episodes) -> float | None:
    """Own coins collected over total coins collected; None when no coin was
    collected. ``episodes`` are rollouts or ``(own, total)`` pairs."""
    own = total = 0
    for ep in episodes:
        if isinstance(ep, tuple):
            o, t = ep
        else:
            o, t = ep.stats.get("own_coins", 0), ep.stats.get("total_coins", 0)
        own += o
        total += t
    if total == 0:
        return None
    return own / total


@dataclass
class MetricsRecord:
    epoch: int
    seed: int
    efficiency: float
    own_coins_rate: float | None
    returns: np.ndarray
    shaped_returns: np.ndarray
    protocol: dict[str, np.ndarray] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)
    has_coins: bool = False

    def rows(self) -> list[tuple]:
        """Long-format rows ``(epoch, seed, metric, agent, value)``; agent is
        None for system-level metrics and value None for missing values."""
        out = [(self.epoch, self.seed, "efficiency", None, self.efficiency)]
        if self.has_coins:
            out.append((self.epoch, self.seed, "own_coins_rate", None, self.own_coins_rate))
        for name, value in sorted(self.extra.items()):
            out.append((self.epoch, self.seed, name, None, value))
        for i, r in enumerate(self.returns):
            out.append((self.epoch, self.seed, "return", i, float(r)))
        for i, r in enumerate(self.shaped_returns):
            out.append((self.epoch, self.seed, "shaped_return", i, float(r)))
        for name in sorted(self.protocol):
            for i, v in enumerate(self.protocol[name]):
                out.append((self.epoch, self.seed, name, i, float(v)))
        return out


def epoch_record(epoch: int, seed: int, rollouts, protocol_metrics=None) -> MetricsRecord:
    env_returns = np.mean([r.env_rewards.sum(axis=1) for r in rollouts], axis=0)
    shaped = np.mean([r.shaped_rewards.sum(axis=1) for r in rollouts], axis=0)
    has_coins = "total_coins" in rollouts[0].stats
    extra = {}
    if "apples_harvested" in rollouts[0].stats:
        extra["apples_harvested"] = float(np.mean([r.stats["apples_harvested"] for r in rollouts]))
        extra["tags"] = float(np.mean([r.stats["tags"] for r in rollouts]))
    return MetricsRecord(
        epoch=epoch,
        seed=seed,
        efficiency=float(np.mean([efficiency(r.env_rewards) for r in rollouts])),
        own_coins_rate=own_coins_rate(rollouts) if has_coins else None,
        returns=env_returns,
        shaped_returns=shaped,
        protocol=dict(protocol_metrics or {}),
        extra=extra,
        has_coins=has_coins,
    )


def mean_ci(values: Sequence[float]) -> tuple[float, float | None]:
    """Mean and normal-approximation 95% half-width (None for fewer than two
    values)."""
    arr = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return math.nan, None
    if arr.size < 2:
        return float(arr.mean()), None
    return float(arr.mean()), float(Z_95 * arr.std(ddof=1) / math.sqrt(arr.size))


def _group_keys(df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    df["agent"] = pd.to_numeric(df["agent"]).fillna(-1).astype(int)
    return df


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """Per metric, agent and epoch: mean over seeds with a 95% CI."""
    df = _group_keys(df).dropna(subset=["value"])
    grouped = df.groupby(["metric", "agent", "epoch"])["value"]
    out = grouped.agg(mean="mean", std="std", n="count").reset_index()
    out["ci95"] = np.where(out["n"] >= 2, Z_95 * out["std"] / np.sqrt(out["n"]), np.nan)
    out["agent"] = out["agent"].replace(-1, pd.NA)
    return out[["metric", "agent", "epoch", "n", "mean", "ci95"]]


def final_summary(df: pd.DataFrame, window: int = 100) -> pd.DataFrame:
    """Final-performance table: last-epoch and trailing-window means per seed,
    then mean and 95% CI across seeds."""
    df = _group_keys(df).dropna(subset=["value"])
    last_epoch = df["epoch"].max()
    rows = []
    for (metric, agent), g in df.groupby(["metric", "agent"]):
        last = g[g["epoch"] == last_epoch].groupby("seed")["value"].mean()
        trailing = g[g["epoch"] > last_epoch - window].groupby("seed")["value"].mean()
        lm, lci = mean_ci(last.tolist())
        tm, tci = mean_ci(trailing.tolist())
        rows.append({
            "metric": metric,
            "agent": pd.NA if agent == -1 else agent,
            "seeds": len(last),
            "last_mean": lm,
            "last_ci95": lci,
            "trailing_mean": tm,
            "trailing_ci95": tci,
            "window": window,
        })
    return pd.DataFrame(rows)
