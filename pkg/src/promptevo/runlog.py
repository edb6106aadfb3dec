"""Run logging and reporting.

One JSONL record per completed round, written append-only and flushed per
line so an interrupted process leaves at most one partial trailing line.
The reader tolerates exactly that kind of damage (a final line without a
newline, or one that does not parse) and reports the clean byte length so
resume can truncate back to the last intact record.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Iterable

from .errors import DataError, EmptyLog

# Serialized field order is part of the log format.
RECORD_FIELDS = (
    "round",
    "best_train_fitness",
    "mean_train_fitness",
    "best_prompt_text",
    "generation_calls",
    "extraction_failures",
    "cache_hits",
    "wall_time_ms",
    "best_test_fitness",
)


@dataclass(frozen=True)
class RunRecord:
    round: int
    best_train_fitness: float
    mean_train_fitness: float
    best_prompt_text: str
    generation_calls: int
    extraction_failures: int
    cache_hits: int
    wall_time_ms: int
    best_test_fitness: float | None = None


def record_to_json_line(record: RunRecord) -> str:
    data = asdict(record)
    ordered = {name: data[name] for name in RECORD_FIELDS}
    if ordered["best_test_fitness"] is None:
        del ordered["best_test_fitness"]
    return json.dumps(ordered, ensure_ascii=False)


def record_from_mapping(data: dict) -> RunRecord:
    try:
        return RunRecord(
            round=int(data["round"]),
            best_train_fitness=float(data["best_train_fitness"]),
            mean_train_fitness=float(data["mean_train_fitness"]),
            best_prompt_text=str(data["best_prompt_text"]),
            generation_calls=int(data["generation_calls"]),
            extraction_failures=int(data["extraction_failures"]),
            cache_hits=int(data["cache_hits"]),
            wall_time_ms=int(data["wall_time_ms"]),
            best_test_fitness=(
                float(data["best_test_fitness"])
                if data.get("best_test_fitness") is not None
                else None
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed run record: {exc!r}") from exc


class JsonlSink:
    """Append-only JSONL writer; flushes after every record."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self._handle: IO[str] = open(self.path, "a" if append else "w", encoding="utf-8")

    def __call__(self, record: RunRecord):
        self._handle.write(record_to_json_line(record) + "\n")
        self._handle.flush()

    def close(self):
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def read_records(path: str | Path) -> list[RunRecord]:
    records, _ = read_records_with_clean_length(path)
    return records


def read_records_with_clean_length(path: str | Path) -> tuple[list[RunRecord], int]:
    """Parse a run log, dropping a damaged trailing line.

    Returns the records plus the byte offset just past the last intact
    line. Damage anywhere but the final line raises DataError.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read run log {path}: {exc}") from exc
    records: list[RunRecord] = []
    clean = 0
    offset = 0
    while offset < len(raw):
        newline = raw.find(b"\n", offset)
        if newline < 0:
            break  # partial trailing line: interrupted write
        line = raw[offset:newline].decode("utf-8", errors="replace").strip()
        offset = newline + 1
        if not line:
            clean = offset
            continue
        try:
            records.append(record_from_mapping(json.loads(line)))
        except (json.JSONDecodeError, DataError) as exc:
            if offset < len(raw):
                raise DataError(f"corrupt run log line before end of file: {exc}") from exc
            break  # damaged final line: discard
        clean = offset
    return records, clean


def truncate_records(path: str | Path, max_round: int) -> list[RunRecord]:
    """Rewrite the log keeping only rounds <= max_round; returns what was kept."""
    records, _ = read_records_with_clean_length(path)
    kept = [r for r in records if r.round <= max_round]
    with open(path, "w", encoding="utf-8") as handle:
        for record in kept:
            handle.write(record_to_json_line(record) + "\n")
    return kept


# ---------------------------------------------------------------------------
# Reporting


def records_to_rows(records: Iterable[RunRecord]) -> list[list]:
    rows = [list(RECORD_FIELDS)]
    for record in records:
        data = asdict(record)
        rows.append([data[name] for name in RECORD_FIELDS])
    return rows


def write_csv(records: Iterable[RunRecord], path: str | Path):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        csv.writer(handle).writerows(records_to_rows(records))


def render_table(records: Iterable[RunRecord]) -> str:
    """Small fixed-width text table of the fitness trajectory."""
    lines = [f"{'round':>6}  {'best_train':>10}  {'mean_train':>10}  {'best_test':>9}"]
    for record in records:
        test = f"{record.best_test_fitness:.4f}" if record.best_test_fitness is not None else "-"
        lines.append(
            f"{record.round:>6}  {record.best_train_fitness:>10.4f}  "
            f"{record.mean_train_fitness:>10.4f}  {test:>9}"
        )
    return "\n".join(lines)


def plot_curves(curves: dict[str, list[RunRecord]], path: str | Path):
    """Best-fitness-per-round curves for one or more runs, written as SVG."""
    if not curves or all(not records for records in curves.values()):
        raise EmptyLog("nothing to plot: no records")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figure, axes = plt.subplots(figsize=(8, 5))
    for label, records in sorted(curves.items()):
        if not records:
            continue
        rounds = [r.round for r in records]
        best = [r.best_train_fitness for r in records]
        (line,) = axes.plot(rounds, best, label=label)
        tested = [r for r in records if r.best_test_fitness is not None]
        if tested:
            axes.plot(
                [r.round for r in tested],
                [r.best_test_fitness for r in tested],
                linestyle="--",
                color=line.get_color(),
                label=f"{label} (test)",
            )
    axes.set_xlabel("round")
    axes.set_ylabel("best fitness")
    axes.legend()
    axes.grid(True, alpha=0.3)
    figure.savefig(path, format="svg")
    plt.close(figure)
