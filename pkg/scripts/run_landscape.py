#!/usr/bin/env python3
"""Run the bundled synthetic-landscape benchmark end to end.

Reproduces the committed reference trajectory
(tests/data/reference_landscape_t50_seed42.jsonl) when run with the
defaults; any two invocations with the same config produce byte-identical
logs.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from promptevo.runner import (
    LOG_FILENAME,
    apply_overrides,
    load_config_mapping,
    parse_runner_config,
    report_runs,
    start_run,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG = REPO_ROOT / "configs" / "landscape.toml"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--config", default=str(DEFAULT_CONFIG), help="config file to run"
    )
    parser.add_argument(
        "--out-dir", default=None, help="override [run].out_dir from the config"
    )
    args = parser.parse_args()

    mapping = load_config_mapping(args.config)
    if args.out_dir:
        mapping = apply_overrides(mapping, [f"run.out_dir={args.out_dir}"])
    result = start_run(parse_runner_config(mapping))

    print(f"run_dir: {result.run_dir}")
    print(f"final_best_fitness: {result.best.fitness:.4f}")
    print(f"final_best_prompt: {result.best.prompt_text}")
    print()
    print(report_runs([result.run_dir / LOG_FILENAME]))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
