"""Command line entry point: ``mediate run | sweep | summarize``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError
from .harness import PROTOCOLS, RunConfig, parse_grid, run_experiment, token_sweep, write_rows

log = logging.getLogger("mediate")


def _load_config(path: str | None) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    for name in ("env", "protocol", "epochs", "episodes_per_epoch", "n_agents", "time_limit"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "token", None) is not None:
        changes["token"] = args.token
    if getattr(args, "tokens", None) is not None:
        changes["tokens"] = [float(t) for t in args.tokens.split(",")]
    if getattr(args, "out", None) is not None:
        changes["output"] = args.out
    return cfg.replace(**changes)


def _seeds(args, cfg: RunConfig) -> list[int]:
    if args.seed_list:
        return [int(s) for s in args.seed_list.split(",")]
    if args.seeds is not None:
        return list(range(args.seeds))
    return [cfg.seed]


def cmd_run(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    seeds = _seeds(args, cfg)
    for rec in run_experiment(cfg, seeds, workers=args.workers):
        if args.verbose and (rec.epoch + 1) % args.log_every == 0:
            msg = f"seed {rec.seed} epoch {rec.epoch + 1}: efficiency {rec.efficiency:.3f}"
            if rec.own_coins_rate is not None:
                msg += f", own coins {rec.own_coins_rate:.3f}"
            log.info(msg)
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    grid = parse_grid(args.grid)
    if any(isinstance(p, tuple) for p in grid) and cfg.protocol == "mate":
        cfg = cfg.replace(protocol="mate-decentralized")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = token_sweep(cfg.replace(output=None), grid, _seeds(args, cfg))
    write_rows(out / "sweep.csv", rows)
    (out / "manifest.json").write_text(
        json.dumps({"config": cfg.to_dict(), "grid": args.grid, "seeds": _seeds(args, cfg)}, indent=2) + "\n"
    )
    return 0


def cmd_summarize(args) -> int:
    import pandas as pd

    from .metrics import final_summary, summarize

    src = Path(args.inp)
    csv_path = src / "metrics.csv" if src.is_dir() else src
    df = pd.read_csv(csv_path, dtype={"agent": "Int64"})
    per_epoch = summarize(df)
    per_epoch.to_csv(args.out, index=False)
    final = final_summary(df, args.window)
    final_path = Path(args.out).with_name(Path(args.out).stem + "_final.csv")
    final.to_csv(final_path, index=False)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mediate", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--env")
        sp.add_argument("--protocol", choices=PROTOCOLS)
        sp.add_argument("--n-agents", type=int, dest="n_agents")
        sp.add_argument("--time-limit", type=int, dest="time_limit")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--episodes-per-epoch", type=int, dest="episodes_per_epoch")
        sp.add_argument("--seeds", type=int, help="run seeds 0..N-1")
        sp.add_argument("--seed-list", dest="seed_list", help="explicit comma-separated seeds")
        sp.add_argument("--out", required=True)

    run = sub.add_parser("run", help="train one configuration over seeds")
    common(run)
    tok = run.add_mutually_exclusive_group()
    tok.add_argument("--token", type=float)
    tok.add_argument("--tokens", help="comma-separated per-agent tokens")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--log-every", type=int, default=100, dest="log_every")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="token sweep over a grid")
    common(sweep)
    sweep.add_argument("--grid", required=True, help='e.g. "0,1,8" or "1:1,1:2"')
    sweep.set_defaults(func=cmd_sweep)

    summ = sub.add_parser("summarize", help="mean and 95%% CI across seeds")
    summ.add_argument("--in", dest="inp", required=True, help="run directory or metrics.csv")
    summ.add_argument("--out", required=True)
    summ.add_argument("--window", type=int, default=100)
    summ.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
