"""Command-line entry point: ``persistent-agent --scenario paper-36h --seed 7``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from typing import Optional, Sequence

from .backend import BackendUnavailable
from .harness import run_scenario
from .journal import JournalError
from .kernel import InvariantViolation
from .sandbox import BUILTIN_SCENARIOS, ScenarioError

EXIT_INVARIANT = 2
EXIT_BACKEND = 3
EXIT_USAGE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse would exit 2, which is reserved for invariant violations
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="persistent-agent",
        description="Run a scenario through the persistent agent and write its growth journal.",
    )
    p.add_argument("--scenario", default="paper-36h",
                   help=f"scenario JSON path or builtin name ({', '.join(BUILTIN_SCENARIOS)})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=int, default=None, help="virtual minutes (default: scenario duration)")
    p.add_argument("--backend", choices=("scripted", "remote"), default="scripted")
    p.add_argument("--out", default="growth-journal", help="journal directory (must be empty or absent)")
    p.add_argument("--no-intrinsic", action="store_true", help="disable self-generated goals (reactive baseline)")
    p.add_argument("--metrics-csv", default=None, help="write metrics CSV files to this path")
    p.add_argument("--resume-from", default=None, help="restore self-model and memories from an earlier journal")
    p.add_argument("--workers", type=int, default=1, help="parallel guardian calls during thought search")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    started = time.perf_counter()
    try:
        result = run_scenario(
            args.scenario,
            seed=args.seed,
            out=args.out,
            duration=args.duration,
            intrinsic=not args.no_intrinsic,
            backend=args.backend,
            resume_from=args.resume_from,
            metrics_csv=args.metrics_csv,
            workers=args.workers,
        )
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except BackendUnavailable as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ScenarioError, JournalError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    m = result.metrics
    print(f"journal: {result.journal_dir}")
    print(f"tasks: {m.total_tasks} over {m.total_runtime} virtual minutes "
          f"({time.perf_counter() - started:.2f}s wall)")
    print("segment_start extrinsic intrinsic")
    for start, ext, intr in m.segments:
        print(f"{start:>13} {ext:>9} {intr:>9}")
    for task, steps in m.recurring_steps:
        print(f"steps[{task}]: {' '.join(map(str, steps))}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
