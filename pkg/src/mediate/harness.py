"""Experiment driver: configuration, seeding, CSV/manifest output, sweeps."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .consensus import DEFAULT_MASK_SCALE, ConsensusTrace
from .core import RunStreams, run_epoch
from .derivation import MediateProtocol
from .envs import ENV_NAMES, make_env
from .errors import ConfigurationError
from .learner import ActorCritic, LearnerConfig
from .metrics import MetricsRecord, epoch_record
from .protocols import GiftingProtocol, MateProtocol, Protocol

PROTOCOLS = ("naive", "mate", "mate-decentralized", "automate", "mediate-i", "mediate-s", "gift-zerosum", "gift-budget")
CSV_HEADER = ("epoch", "seed", "metric", "agent", "value")


@dataclass
class RunConfig:
    env: str = "coin"
    n_agents: int | None = None
    reward_scale: float | None = None
    time_limit: int | None = None
    gamma: float | None = None
    protocol: str = "naive"
    token: float = 1.0
    tokens: list[float] | None = None
    epochs: int = 5000
    episodes_per_epoch: int = 10
    seed: int = 0
    output: str | None = None
    # learner
    learning_rate: float = 1e-3
    clip_norm: float = 1.0
    entropy_coef: float = 0.0
    hidden: tuple[int, ...] = (64, 64, 64)
    shared_trunk: bool = False
    # token derivation and consensus
    alpha: float = 0.1
    initial_token: float = 0.1
    consensus_iterations: int | None = None
    mask_scale: float = DEFAULT_MASK_SCALE
    trace: bool = False
    # gifting
    gift_value: float = 1.0
    gift_budget: float = 15.0
    # harvest
    regrowth: tuple[float, float, float] | None = None
    trailing_window: int = 100

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.regrowth is not None:
            self.regrowth = tuple(float(p) for p in self.regrowth)
        if self.tokens is not None:
            self.tokens = [float(t) for t in self.tokens]

    def validate(self) -> "RunConfig":
        if self.env not in ENV_NAMES:
            raise ConfigurationError(f"unknown env {self.env!r}; expected one of {ENV_NAMES}")
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.epochs < 1 or self.episodes_per_epoch < 1:
            raise ConfigurationError("epochs and episodes_per_epoch must be >= 1")
        if self.protocol == "mate-decentralized" and self.tokens is None:
            raise ConfigurationError("mate-decentralized needs per-agent tokens")
        if self.protocol == "mate" and self.token < 0:
            raise ConfigurationError("token must be non-negative")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        if self.regrowth is not None:
            d["regrowth"] = list(self.regrowth)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def make_protocol(config: RunConfig, trace: ConsensusTrace | None = None) -> Protocol:
    p = config.protocol
    if p == "naive":
        return Protocol()
    if p == "mate":
        return MateProtocol(config.token)
    if p == "mate-decentralized":
        return MateProtocol(list(config.tokens))
    if p in ("automate", "mediate-i", "mediate-s"):
        variant = {"automate": "automate", "mediate-i": "isolated", "mediate-s": "synchronized"}[p]
        return MediateProtocol(
            variant,
            alpha=config.alpha,
            initial_token=config.initial_token,
            iterations=config.consensus_iterations,
            mask_scale=config.mask_scale,
            trace=trace,
        )
    if p == "gift-zerosum":
        return GiftingProtocol("zero_sum", config.gift_value, config.gift_budget)
    return GiftingProtocol("fixed_budget", config.gift_value, config.gift_budget)


def env_kwargs(config: RunConfig) -> dict:
    kw = {}
    if config.time_limit is not None:
        kw["time_limit"] = config.time_limit
    if config.gamma is not None:
        kw["gamma"] = config.gamma
    if config.reward_scale is not None:
        if config.env not in ("coin", "coin-rescaled"):
            raise ConfigurationError("reward_scale applies to the Coin Game only")
        kw["reward_scale"] = config.reward_scale
    if config.regrowth is not None:
        if config.env != "harvest":
            raise ConfigurationError("regrowth applies to Harvest only")
        kw["regrowth"] = config.regrowth
    return kw


@dataclass
class Run:
    config: RunConfig
    env: object
    agents: list[ActorCritic]
    protocol: Protocol
    streams: RunStreams
    trace: ConsensusTrace | None = None


def build_run(config: RunConfig, trace_path: str | Path | None = None) -> Run:
    config.validate()
    probe = make_env(config.env, n_agents=config.n_agents, **env_kwargs(config))
    n = probe.n_agents
    streams = RunStreams.from_seed(config.seed, n)
    env = make_env(config.env, n_agents=n, rng=streams.env, **env_kwargs(config))
    trace = ConsensusTrace(trace_path) if trace_path is not None else None
    protocol = make_protocol(config, trace)
    protocol.bind(env)
    learner_cfg = LearnerConfig(
        learning_rate=config.learning_rate,
        clip_norm=config.clip_norm,
        gamma=env.gamma,
        hidden=config.hidden,
        shared_trunk=config.shared_trunk,
        entropy_coef=config.entropy_coef,
    )
    n_actions = env.n_actions + protocol.extra_actions(n)
    agents = [ActorCritic(env.obs_dim, n_actions, learner_cfg, rng=streams.init[i]) for i in range(n)]
    return Run(config, env, agents, protocol, streams, trace)


def iter_run(config: RunConfig, trace_path=None) -> Iterator[MetricsRecord]:
    """Execute one seed of ``config``, yielding one record per epoch."""
    run = build_run(config, trace_path)
    try:
        for epoch in range(config.epochs):
            rollouts = run_epoch(run.env, run.agents, run.protocol, config.episodes_per_epoch, run.streams)
            yield epoch_record(epoch, config.seed, rollouts, run.protocol.metrics())
    finally:
        if run.trace is not None:
            run.trace.close()


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    """Incremental long-format CSV writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(CSV_HEADER)

    def write(self, record: MetricsRecord) -> None:
        for row in record.rows():
            self._csv.writerow([_format(v) for v in row])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _prepare_output(out: str | Path) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {out} is not writable: {exc}") from exc
    return out


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def final_metrics(records: Sequence[MetricsRecord], window: int) -> dict:
    last = records[-1]
    tail = records[-window:]
    out = {"last_epoch": last.epoch, "efficiency": last.efficiency,
           "efficiency_trailing": float(np.mean([r.efficiency for r in tail]))}
    if last.has_coins:
        rates = [r.own_coins_rate for r in tail if r.own_coins_rate is not None]
        out["own_coins_rate"] = last.own_coins_rate
        out["own_coins_rate_trailing"] = float(np.mean(rates)) if rates else None
    for name, values in last.protocol.items():
        out[name] = [float(v) for v in values]
    return out


def _collect(config: RunConfig) -> list[MetricsRecord]:
    return list(iter_run(config))


def run_experiment(config: RunConfig, seeds: Sequence[int] | None = None, workers: int = 1) -> Iterator[MetricsRecord]:
    """Run ``config`` for each seed, streaming records.

    With ``config.output`` set, ``metrics.csv`` is written incrementally and
    ``manifest.json`` on completion. The output directory is checked before
    any simulation starts.
    """
    seeds = [config.seed] if seeds is None else list(seeds)
    config.validate()
    out = _prepare_output(config.output) if config.output else None
    writer = MetricsWriter(out / "metrics.csv") if out else None
    finals = {}
    try:
        if workers > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                batches = pool.map(_collect, [config.replace(seed=s, output=None) for s in seeds])
                for seed, records in zip(seeds, batches):
                    for rec in records:
                        if writer:
                            writer.write(rec)
                        yield rec
                    finals[seed] = final_metrics(records, config.trailing_window)
        else:
            for seed in seeds:
                trace_path = out / "consensus_trace.jsonl" if (out and config.trace) else None
                records = []
                for rec in iter_run(config.replace(seed=seed), trace_path):
                    if writer:
                        writer.write(rec)
                    records.append(rec)
                    yield rec
                finals[seed] = final_metrics(records, config.trailing_window)
    finally:
        if writer:
            writer.close()
    if out:
        write_manifest(out / "manifest.json", config, seeds, finals)


def write_manifest(path: Path, config: RunConfig, seeds, finals) -> None:
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "code_version": code_version(),
        "seeds": list(seeds),
        "final_metrics": {str(k): v for k, v in finals.items()},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def parse_grid(spec: str) -> list[float | tuple[float, ...]]:
    """``"0,1,8"`` -> scalars; ``"1:1,1:2"`` -> per-agent token vectors."""
    points = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            points.append(tuple(float(x) for x in item.split(":")))
        else:
            points.append(float(item))
    if not points:
        raise ConfigurationError("empty token grid")
    return points


def sweep_config(base: RunConfig, point) -> RunConfig:
    if base.protocol not in ("mate", "mate-decentralized"):
        raise ConfigurationError("token sweeps need protocol mate or mate-decentralized")
    if np.ndim(point) == 0:
        if base.protocol != "mate":
            raise ConfigurationError(f"scalar grid point {point} needs the centralized mate protocol")
        return base.replace(token=float(point), tokens=None)
    if base.protocol != "mate-decentralized":
        raise ConfigurationError(f"vector grid point {point} needs mate-decentralized")
    n = build_n_agents(base)
    if len(point) != n:
        raise ConfigurationError(f"grid point {point} has {len(point)} tokens for {n} agents")
    return base.replace(tokens=[float(t) for t in point])


def build_n_agents(config: RunConfig) -> int:
    return make_env(config.env, n_agents=config.n_agents, **env_kwargs(config)).n_agents


def token_sweep(base: RunConfig, grid, seeds: Sequence[int]) -> list[dict]:
    """One run per (grid point, seed); returns final-performance rows."""
    configs = [sweep_config(base, p) for p in grid]
    rows = []
    for point, cfg in zip(grid, configs):
        for seed in seeds:
            records = list(iter_run(cfg.replace(seed=seed, output=None)))
            fin = final_metrics(records, cfg.trailing_window)
            row = {
                "point": ":".join(repr(float(t)) for t in np.atleast_1d(point)),
                "protocol": cfg.protocol,
                "seed": seed,
                "efficiency": fin["efficiency"],
                "efficiency_trailing": fin["efficiency_trailing"],
            }
            if "own_coins_rate" in fin:
                row["own_coins_rate"] = fin["own_coins_rate"]
                row["own_coins_rate_trailing"] = fin["own_coins_rate_trailing"]
            rows.append(row)
    return rows


def write_rows(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _format(v) for k, v in row.items()})
