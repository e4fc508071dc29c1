"""Command-line front end: run experiment grids, calibrate priors, summarise.

Outputs of ``run`` (all UTF-8, deterministic for a fixed seed):

    trace.csv      algo, replication, day, arm, revenue, cum_regret
    switches.csv   algo, replication, switches
    summary.json   mean / median / 0.75 / 0.90 quantile per algo and day
    meta.json      the fully resolved configuration for reproduction
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .glm import logistic_spec
from .harness import ExperimentConfig, read_traces, run_grid, write_outputs
from .market import calibrate, load_calibration_file


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arcbandit",
        description="Correlated GLM bandit simulations for dynamic pricing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a policy x replication grid")
    run.add_argument("--config", type=Path, help="JSON config file (flat keys)")
    run.add_argument("--algos", help="comma-separated policy identifiers")
    run.add_argument("--days", type=int, help="horizon in days")
    run.add_argument("--sims", type=int, help="number of replications")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    run.add_argument("--rho", type=float, help="ARC randomisation scale")
    run.add_argument("--beta", type=float, help="ARC discount factor")
    run.add_argument("--threads", type=int, default=1, help="worker processes")
    run.add_argument(
        "--no-trace", action="store_true", help="write summary/meta only (large grids)"
    )

    cal = sub.add_parser("calibrate", help="fit a market prior from a counts file")
    cal.add_argument("input", type=Path, help="text file: price, trials, successes")
    cal.add_argument("--out", type=Path, required=True, help="output prior JSON")

    summ = sub.add_parser("summarize", help="recompute summary.json from traces")
    summ.add_argument("--out", type=Path, required=True, help="directory with trace.csv")

    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    payload: dict = {}
    if args.config is not None:
        payload = json.loads(args.config.read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
    overrides = {
        "algos": args.algos,
        "days": args.days,
        "replications": args.sims,
        "master_seed": args.seed,
        "rho": args.rho,
        "beta": args.beta,
    }
    payload.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(payload)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    traces = run_grid(cfg, threads=max(1, args.threads))
    write_outputs(args.out, cfg, traces, write_traces=not args.no_trace)
    print(f"wrote {len(traces)} traces to {args.out}")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    prior = calibrate(load_calibration_file(args.input), logistic_spec())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(
        json.dumps(prior.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote prior to {args.out}")
    return 0


def _cmd_summarize(args: argparse.Namespace) -> int:
    traces = read_traces(args.out)
    from .harness import _write_json, aggregate

    _write_json(args.out / "summary.json", aggregate(traces))
    print(f"rewrote {args.out / 'summary.json'}")
    return 0


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage errors
        return int(exc.code or 0)
    handlers = {"run": _cmd_run, "calibrate": _cmd_calibrate, "summarize": _cmd_summarize}
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
