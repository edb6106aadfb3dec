#!/usr/bin/env python3
"""Run the landscape benchmark for several seeds and plot the overlay.

Writes one run directory per seed plus a single SVG with one
best-fitness-per-round curve per seed.
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
        "--config", default=str(DEFAULT_CONFIG), help="config file to sweep"
    )
    parser.add_argument(
        "--seeds", type=int, nargs="+", default=[41, 42, 43], help="seeds to run"
    )
    parser.add_argument(
        "--out", default="seed_sweep.svg", help="overlay plot output path"
    )
    args = parser.parse_args()

    base = load_config_mapping(args.config)
    logs = []
    for seed in args.seeds:
        mapping = apply_overrides(base, [f"evolution.seed={seed}"])
        result = start_run(parse_runner_config(mapping))
        logs.append(result.run_dir / LOG_FILENAME)
        print(
            f"seed {seed}: best {result.best.fitness:.4f} "
            f"({result.run_dir})"
        )
    print(report_runs(logs, args.out))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
