"""Command-line interface.

    promptevo run --config cfg.toml [--override section.key=value ...]
    promptevo resume --checkpoint runs/<dir>/checkpoint.json
    promptevo report --log runs/<dir>/log.jsonl [--log ...] [--out out.svg]

Exit codes: 0 success, 2 configuration, 3 data, 4 provider, 5 checkpoint,
1 anything unexpected. Failures print one machine-readable JSON object to
stderr with the error class, category, and message.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys

from .errors import PromptEvoError
from .runner import load_run_config, report_runs, resume_run, start_run

EXIT_BY_CATEGORY = {
    "config": 2,
    "data": 3,
    "provider": 4,
    "checkpoint": 5,
}


def _exit_code(exc: Exception) -> int:
    return EXIT_BY_CATEGORY.get(getattr(exc, "category", ""), 1)


def _emit_error(exc: Exception) -> int:
    code = _exit_code(exc)
    payload = {
        "error": type(exc).__name__,
        "category": getattr(exc, "category", "internal"),
        "message": str(exc),
        "exit_code": code,
    }
    print(json.dumps(payload), file=sys.stderr)
    return code


class _StopFlag:
    """SIGINT/SIGTERM request a stop; the engine finishes the current round,
    a final checkpoint is written, and the process exits cleanly."""

    def __init__(self):
        self.stopped = False
        self._previous = {}

    def __enter__(self):
        for signum in (signal.SIGINT, signal.SIGTERM):
            self._previous[signum] = signal.signal(signum, self._handle)
        return self

    def _handle(self, signum, frame):
        self.stopped = True

    def __call__(self) -> bool:
        return self.stopped

    def __exit__(self, *exc_info):
        for signum, handler in self._previous.items():
            signal.signal(signum, handler)


def _print_result(result) -> None:
    print(f"run_dir: {result.run_dir}")
    print(f"final_best_fitness: {result.best.fitness:.4f}")
    print(f"final_best_prompt: {result.best.prompt_text}")


def _cmd_run(args) -> int:
    config = load_run_config(args.config, args.override)
    with _StopFlag() as stop:
        result = start_run(config, stop=stop)
    _print_result(result)
    if stop.stopped:
        print("stopped early by signal; resume from the checkpoint to continue")
    return 0


def _cmd_resume(args) -> int:
    with _StopFlag() as stop:
        result = resume_run(args.checkpoint, stop=stop)
    _print_result(result)
    return 0


def _cmd_report(args) -> int:
    output = report_runs(args.log, args.out)
    print(output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptevo",
        description="Evolve classification prompts against a fixed target model.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug-level logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="start a run from a config file")
    run_parser.add_argument("--config", required=True, help="TOML or JSON config path")
    run_parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )
    run_parser.set_defaults(handler=_cmd_run)

    resume_parser = sub.add_parser("resume", help="continue a run from its checkpoint")
    resume_parser.add_argument("--checkpoint", required=True, help="checkpoint.json path")
    resume_parser.set_defaults(handler=_cmd_resume)

    report_parser = sub.add_parser("report", help="tabulate or plot run logs")
    report_parser.add_argument(
        "--log", action="append", required=True, help="run log path (repeatable)"
    )
    report_parser.add_argument(
        "--out", default=None, help="output path: .csv for a table, else SVG plot"
    )
    report_parser.set_defaults(handler=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.handler(args)
    except PromptEvoError as exc:
        return _emit_error(exc)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports everything
        return _emit_error(exc)


if __name__ == "__main__":
    sys.exit(main())
