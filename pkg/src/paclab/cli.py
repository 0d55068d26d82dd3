"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 bad usage or configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .envs import make_mdp
from .harness import (DiagnosticUnavailable, RunConfig, aggregate, iter_sweep, run,
                      scaling_slope)
from .mdp import InvalidArgument, TabularMdp, greedy_policy, optimal_values
from .schedule import ScheduleOverflow, ScheduleParams, build_schedule

log = logging.getLogger("paclab")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# flag dest -> RunConfig field
_RUN_FLAGS = {
    "env": "env", "agent": "agent", "gamma": "gamma", "epsilon": "epsilon", "p": "p",
    "steps": "steps", "seed": "seed", "bonus_scale": "bonus_scale", "c1": "c1", "c10": "c10",
    "cap_n0": "cap_n0", "cap_n1": "cap_n1", "last_term": "last_term",
    "oracle_tol": "oracle_tol", "window": "window",
}


class UsageError(Exception):
    pass


def _cap(text: str) -> int | None:
    if text.lower() in ("none", "off", "0"):
        return None
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError("cap must be a positive integer or 'none'")
    return value


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat JSON config; flags override its values")
    p.add_argument("--env", help='e.g. "riverswim:n=6", "random:S=5,A=2,b=3,seed=7"')
    p.add_argument("--agent", choices=["multistage", "advantage", "model_based", "vanilla_q"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bonus-scale", dest="bonus_scale", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--c10", type=float)
    p.add_argument("--cap-n0", dest="cap_n0", type=_cap)
    p.add_argument("--cap-n1", dest="cap_n1", type=_cap)
    p.add_argument("--last-term", dest="last_term", type=float)
    p.add_argument("--oracle-tol", dest="oracle_tol", type=float)
    p.add_argument("--window", type=int)


def effective_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config is not None:
        try:
            values = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise UsageError("config file must hold a flat JSON object")
    for dest, name in _RUN_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[name] = value
    if "seed" not in values and os.environ.get("PACLAB_SEED"):
        try:
            values["seed"] = int(os.environ["PACLAB_SEED"])
        except ValueError:
            raise UsageError("PACLAB_SEED must be an integer") from None
    if "env" not in values:
        raise UsageError("--env is required (or an 'env' key in --config)")
    try:
        config = RunConfig.from_dict(values)
        make_mdp(config.env, config.gamma)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc
    except (InvalidArgument, OSError) as exc:
        raise UsageError(str(exc)) from exc
    return config


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        path.write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    config = effective_config(args)
    result = run(config, trace=args.trace)
    _write(args.out, result.to_json())
    if args.csv is not None:
        args.csv.write_text(result.trace_csv(), encoding="utf-8")
    if args.dump_config is not None:
        args.dump_config.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True),
                                    encoding="utf-8")
    log.info("sample complexity %d over %d steps", result.sample_complexity, result.steps)
    return EXIT_OK


def _parse_list(text: str, kind=float) -> list:
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _parse_seeds(text: str) -> list[int]:
    if "-" in text and "," not in text:
        lo, hi = text.split("-", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise UsageError(f"cannot parse seed range {text!r}") from None
    return _parse_list(text, int)


def cmd_sweep(args) -> int:
    base = effective_config(args)
    epsilons = _parse_list(args.epsilons)
    seeds = _parse_seeds(args.seeds)
    if not epsilons or not seeds:
        raise UsageError("need at least one epsilon and one seed")
    try:
        for e in epsilons:
            dataclasses.replace(base, epsilon=e, oracle_tol=min(base.oracle_tol, e / 100))
    except InvalidArgument as exc:
        raise UsageError(str(exc)) from exc
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["epsilon", "seed", "sample_complexity"])
    rows = []
    for (e, s), result in iter_sweep(base, epsilons, seeds, args.jobs):
        (out_dir / f"run_eps{e}_seed{s}.json").write_text(result.to_json(), encoding="utf-8")
        writer.writerow([e, s, result.sample_complexity])
        sys.stdout.flush()
        rows.append((e, s, result.sample_complexity))
    summary = {"schema": "v1", "config": base.to_dict(), "aggregate": aggregate(rows)}
    try:
        summary["slope"] = scaling_slope(summary["aggregate"])
    except DiagnosticUnavailable as exc:
        summary["slope"] = None
        summary["slope_note"] = str(exc)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True),
                                          encoding="utf-8")
    return EXIT_OK


def cmd_schedule(args) -> int:
    try:
        params = ScheduleParams(args.gamma, args.epsilon, args.p, args.S, args.A,
                                args.variant, args.c1, args.c10, args.cap_n0, args.cap_n1)
        sched = build_schedule(params)
    except (InvalidArgument, ScheduleOverflow) as exc:
        raise UsageError(str(exc)) from exc
    _write(args.out, json.dumps(sched.dump(args.count), indent=2))
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        if args.mdp is not None:
            mdp = TabularMdp.load(args.mdp)
            if args.gamma is not None:
                mdp = mdp.with_discount(args.gamma)
        elif args.env is not None:
            if args.gamma is None:
                raise UsageError("--gamma is required with --env")
            mdp = make_mdp(args.env, args.gamma)
        else:
            raise UsageError("give --env or --mdp")
        if not args.tol > 0:
            raise UsageError("--tol must be positive")
    except (InvalidArgument, OSError) as exc:
        raise UsageError(str(exc)) from exc
    v, q = optimal_values(mdp, args.tol)
    doc = {"schema": "v1", "discount": mdp.discount, "V": v.tolist(), "Q": q.tolist(),
           "policy": greedy_policy(q).tolist()}
    _write(args.out, json.dumps(doc, indent=2))
    return EXIT_OK


def plot_rows(input_dir: Path) -> list[list]:
    """Tidy (epsilon, seed, sample_complexity) rows plus a slope row when computable."""
    files = sorted(p for p in input_dir.glob("*.json") if p.name != "summary.json")
    if not files:
        raise UsageError(f"no run summaries in {input_dir}")
    rows = []
    for path in files:
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            rows.append((doc["config"]["epsilon"], doc["config"]["seed"],
                         doc["sample_complexity"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"{path} is not a run summary: {exc}") from exc
    rows.sort()
    out = [["epsilon", "seed", "sample_complexity"]] + [list(r) for r in rows]
    try:
        out.append(["slope", "", scaling_slope(aggregate(rows))])
    except DiagnosticUnavailable:
        pass
    return out


def cmd_plot_data(args) -> int:
    if not args.input.is_dir():
        raise UsageError(f"{args.input} is not a directory")
    rows = plot_rows(args.input)
    if args.out is None:
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    else:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paclab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one agent-environment run")
    _run_options(p)
    p.add_argument("--out", type=Path, help="summary JSON path (default stdout)")
    p.add_argument("--csv", type=Path, help="CSV record: one row per window, per step with --trace")
    p.add_argument("--trace", action="store_true")
    p.add_argument("--dump-config", dest="dump_config", type=Path,
                   help="write the effective config as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="runs over epsilon x seeds")
    _run_options(p)
    p.add_argument("--epsilons", required=True, help="comma-separated, e.g. 0.4,0.2,0.1")
    p.add_argument("--seeds", required=True, help="comma list or inclusive range like 0-9")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", dest="out_dir", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("schedule", help="dump stage-schedule constants as JSON")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--S", type=int, required=True)
    p.add_argument("--A", type=int, required=True)
    p.add_argument("--variant", choices=["multistage", "advantage"], default="multistage")
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c10", type=float, default=1.0)
    p.add_argument("--cap-n0", dest="cap_n0", type=_cap, default=10**6)
    p.add_argument("--cap-n1", dest="cap_n1", type=_cap, default=10**4)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("oracle", help="optimal values, Q-function and policy as JSON")
    p.add_argument("--env")
    p.add_argument("--mdp", type=Path, help="MDP JSON document")
    p.add_argument("--gamma", type=float)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("plot-data", help="tidy CSV from a directory of run summaries")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"paclab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        log.debug("failure", exc_info=True)
        print(f"paclab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
