"""Command-line front end: ``trade run``, ``trade explore`` and ``trade audit``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audit import audit_files
from .config import TradeConfig
from .errors import ScriptParseError, ScriptReferenceError, StateSpaceBudgetExceeded, TradeError
from .explorer import WORKFLOWS, ExploreConfig, build, explore
from .scenario import run_scenario

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
BUNDLED = Path(__file__).parent / "scenarios"


def _resolve_script(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = BUNDLED / (name if name.endswith(".trade") else name + ".trade")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(name)


def cmd_run(args) -> int:
    try:
        config = TradeConfig.load(args.config) if args.config else None
        result = run_scenario(_resolve_script(args.script), config, args.dump_dir)
    except (ScriptParseError, ScriptReferenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(result.report)
    for failure in result.failures:
        print(f"error: line {failure.line}: expected {failure.expected}, got {failure.result}",
              file=sys.stderr)
    return result.exit_code


def cmd_explore(args) -> int:
    workflows = sorted(WORKFLOWS) if args.workflow == "all" else [args.workflow]
    config = ExploreConfig(args.orgs, args.registrars, args.servers, args.consumers, args.pool,
                           args.failure, args.inject_failures)
    status = EXIT_OK
    for name in workflows:
        try:
            report = explore(build(name, config), args.max_states)
        except StateSpaceBudgetExceeded as exc:
            print(f"error: {name}: {exc}", file=sys.stderr)
            return EXIT_FAILED
        print(report.line())
        print(report.summary())
        if not report.passed:
            status = EXIT_FAILED
    return status


def cmd_audit(args) -> int:
    try:
        verdicts = audit_files(args.identity_dump, args.activity_dump, args.mappings, args.voters)
    except (OSError, TradeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for verdict in verdicts:
        print(verdict.render())
    return EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trade", description="CTI sharing ledger simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario script")
    run.add_argument("script", help="path, or the name of a bundled scenario")
    run.add_argument("--config", help="INI file with config overrides")
    run.add_argument("--dump-dir", help="write ledger dumps and reports here")
    run.set_defaults(func=cmd_run)

    exp = sub.add_parser("explore", help="exhaustively explore a workflow model")
    exp.add_argument("--workflow", default="all", choices=sorted(WORKFLOWS) + ["all"])
    exp.add_argument("--orgs", type=int, default=1)
    exp.add_argument("--registrars", type=int, default=1)
    exp.add_argument("--servers", type=int, default=1)
    exp.add_argument("--consumers", type=int, default=1)
    exp.add_argument("--pool", type=int, default=1, help="queued requests per actor")
    exp.add_argument("--failure", action="store_true", help="use inputs the checks reject")
    exp.add_argument("--inject-failures", action="store_true",
                     help="explore both outcomes of every off-chain check")
    exp.add_argument("--max-states", type=int, default=10 ** 6)
    exp.set_defaults(func=cmd_explore)

    aud = sub.add_parser("audit", help="check anonymity and accountability on dumps")
    aud.add_argument("--identity-dump", required=True)
    aud.add_argument("--activity-dump", required=True)
    aud.add_argument("--mappings", required=True)
    aud.add_argument("--voters", type=int, help="registrars voting in the replay")
    aud.set_defaults(func=cmd_audit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
