"""Average consensus over additive secret shares with multi-hop
dissemination of ID-tagged partial sums."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

# Public masking half-width for distributed shares. It must not depend on
# the secret, otherwise the shares leak its magnitude.
DEFAULT_MASK_SCALE = 10.0


@dataclass(frozen=True)
class ShareBundle:
    """Shares of one agent's token: ``shares[:-1]`` go to neighbors in
    neighborhood order, ``shares[-1]`` is kept back."""

    origin_id: int
    shares: np.ndarray

    @property
    def distributed(self) -> np.ndarray:
        return self.shares[:-1]

    @property
    def reserved(self) -> float:
        return float(self.shares[-1])


@dataclass(frozen=True)
class ConsensusResult:
    token: float
    contributing_ids: frozenset[int]


def make_shares(token: float, n: int, rng: np.random.Generator, origin_id: int = -1,
                scale: float = DEFAULT_MASK_SCALE) -> ShareBundle:
    """Split ``token`` into ``n`` uniform masks in ``[-scale, scale]`` plus a
    reserved share that restores the sum."""
    if n < 0:
        raise ValueError("neighbor count must be non-negative")
    masks = rng.uniform(-scale, scale, size=n)
    reserved = token - masks.sum()
    return ShareBundle(origin_id, np.append(masks, reserved))


class ConsensusTrace:
    """Line-delimited JSON log of consensus messages."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "a")
        self.context: dict = {}

    def log(self, kind: str, origin: int, payload, iteration: int, **extra) -> None:
        rec = {**self.context, "type": kind, "origin": origin, "payload": payload, "iteration": iteration, **extra}
        self._fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        self._fh.close()


def consensus_round(
    bundles: Sequence[ShareBundle],
    topology: Sequence[Sequence[int]],
    iterations: int,
    trace: ConsensusTrace | None = None,
) -> list[ConsensusResult]:
    """Run one share exchange and ``iterations`` forwarding rounds.

    Each agent adds the shares it receives to its reserved share, tags the
    partial sum with its own id and floods it to neighbors; duplicates are
    dropped by id. Every agent divides the partial sums it holds by N.
    """
    n = len(bundles)
    if len(topology) != n:
        raise ValueError("topology must list one neighborhood per agent")
    partial = [b.reserved for b in bundles]
    for i, bundle in enumerate(bundles):
        nbrs = topology[i]
        if len(bundle.distributed) != len(nbrs):
            raise ValueError(f"agent {i} has {len(bundle.distributed)} shares for {len(nbrs)} neighbors")
        for j, share in zip(nbrs, bundle.distributed):
            partial[j] += float(share)
            if trace is not None:
                trace.log("share", i, float(share), 0, to=int(j))

    known = [{i: partial[i]} for i in range(n)]
    for it in range(1, iterations + 1):
        snapshot = [dict(k) for k in known]
        for i in range(n):
            for j in topology[i]:
                for origin, value in snapshot[i].items():
                    if origin not in known[j]:
                        known[j][origin] = value
                        if trace is not None:
                            trace.log("partial", origin, value, it, sender=i, to=int(j))

    results = []
    for held in known:
        total = 0.0
        for origin in sorted(held):
            total += held[origin]
        results.append(ConsensusResult(total / n, frozenset(held)))
    return results
