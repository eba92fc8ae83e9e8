"""Command-line front end: run experiments, validate configs, drive scenarios.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2
configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .config import RunConfig, apply_overrides, build_run_config, load_sections
from .engine import RunResult, run
from .errors import ConfigError, GraphEvolveError, UnknownScenario
from .rng import derive_seed
from .scenarios import SCENARIO_NAMES, run_scenario
from .simenv import generate_estate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _load_run_config(args) -> RunConfig:
    sections = load_sections(args.config) if args.config else {}
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"engine.seed={args.seed}")
    if getattr(args, "out", None):
        overrides.append(f"output.dir={json.dumps(args.out)}")
    sections = apply_overrides(sections, overrides)
    return build_run_config(sections)


def _write_outputs(out_dir: Path, config: RunConfig, result: RunResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)

    (out_dir / "effective-config.json").write_text(
        json.dumps(config.as_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    with (out_dir / "events.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for record in result.records:
            fh.write(json.dumps(record.as_dict(), sort_keys=True) + "\n")

    (out_dir / "archive.json").write_text(
        json.dumps(result.archive.dump(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["gen", "best_utility", "mean_utility", "w_U", "w_P", "w_S", "w_B", "w_D", "w_C",
         "gate_passed", "rolled_out", "archive_size", "discounted_return"]
    )
    for r in result.records:
        writer.writerow(
            [r.generation, repr(r.best_utility), repr(r.mean_utility)]
            + [repr(w) for w in r.weights]
            + [str(r.gate_report.passed).lower(), str(r.rolled_out).lower(),
               r.archive_size, repr(r.discounted_return)]
        )
    (out_dir / "metrics.csv").write_text(buffer.getvalue(), encoding="utf-8")


def _interactive_approver(generation: int) -> bool:
    answer = input(f"approve rollout at generation {generation}? [y/N] ")
    return answer.strip().lower().startswith("y")


def cmd_run(args) -> int:
    try:
        config = _load_run_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    estate_seed = (
        config.estate_seed
        if config.estate_seed is not None
        else derive_seed(config.engine.seed, "estate")
    )
    approver = _interactive_approver if args.approve else None
    try:
        genesis, env = generate_estate(config.estate, estate_seed)
        result = run(config.engine, env, genesis, approver=approver)
        _write_outputs(Path(config.out_dir), config, result)
    except GraphEvolveError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    rolled = sum(1 for r in result.records if r.rolled_out)
    print(
        f"completed {config.engine.T} generations; {rolled} rollouts;"
        f" final best utility {result.records[-1].best_utility:.4f};"
        f" outputs in {config.out_dir}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        config = _load_run_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(config.as_dict(), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_scenario(args) -> int:
    if args.name not in SCENARIO_NAMES:
        print(
            f"unknown scenario {args.name!r}; known: {', '.join(SCENARIO_NAMES)}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    try:
        result = run_scenario(args.name, base_seed=args.seed or 0)
    except UnknownScenario as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except GraphEvolveError as exc:
        print(f"scenario failed to run: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for line in result.lines:
        print(f"  {line}")
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphevolve",
        description="Evolve typed artefact graphs against a synthetic legacy estate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="execute a configured evolution run")
    run_parser.add_argument("--config", help="config file (sectioned key=value or JSON)")
    run_parser.add_argument("--seed", type=int, help="override engine.seed")
    run_parser.add_argument("--out", help="output directory (overrides output.dir)")
    run_parser.add_argument(
        "--override", action="append", metavar="SECTION.KEY=VALUE",
        help="override one config value; repeatable",
    )
    run_parser.add_argument(
        "--approve", action="store_true",
        help="prompt interactively for rollouts when the policy requires approval",
    )
    run_parser.set_defaults(fn=cmd_run)

    val_parser = sub.add_parser("validate", help="parse and validate a config, print it normalized")
    val_parser.add_argument("--config", required=True)
    val_parser.add_argument("--seed", type=int)
    val_parser.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
    val_parser.set_defaults(fn=cmd_validate)

    scen_parser = sub.add_parser("scenario", help="run a canned behavioral scenario")
    scen_parser.add_argument("name", help=f"one of: {', '.join(SCENARIO_NAMES)}")
    scen_parser.add_argument("--seed", type=int, default=0)
    scen_parser.set_defaults(fn=cmd_scenario)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
