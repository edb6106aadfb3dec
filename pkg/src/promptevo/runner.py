"""Run orchestration: configuration, checkpoints, resume, and reports.

A config file (TOML, or JSON with a .json suffix) has sections
[evolution], [task], [data], [generator], [evaluator] and optionally
[run]; every omitted key takes a documented default. Each run gets its
own directory under run.out_dir, named by timestamp plus a hash of the
effective config, holding the effective config, the JSONL log, and the
checkpoint.

Checkpoints are written every run.checkpoint_every rounds and on clean
shutdown; resuming from one reproduces the exact continuation an
uninterrupted run would have produced when the generator and evaluator
are deterministic. With the all-deterministic stack (mock generator +
synthetic oracle) the wall clock is replaced by a zero clock so logs are
byte-identical across runs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from .data import FewShotDataset, load_examples, sample_k_shot
from .engine import (
    EngineState,
    EvolutionConfig,
    Individual,
    Population,
    best_individual,
    evolve,
)
from .errors import (
    ConfigError,
    CorruptCheckpoint,
    DataError,
    EmptyLog,
    FingerprintMismatch,
)
from .evaluation import Evaluator, FitnessCache, RemoteScorer
from .generation import MockGenerator, RemoteGenerator
from .landscape import (
    KeywordLandscapeOracle,
    MUTATION_POOL,
    make_landscape_dataset,
)
from .metaprompt import TaskSpec
from .runlog import (
    JsonlSink,
    RunRecord,
    plot_curves,
    read_records,
    render_table,
    truncate_records,
)
from .tasks import SEGMENT_FIELDS, TASKS

CHECKPOINT_FILENAME = "checkpoint.json"
LOG_FILENAME = "log.jsonl"
CONFIG_FILENAME = "config.json"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Configuration schema


@dataclass(frozen=True)
class TaskSettings:
    name: str = ""
    # Optional overrides / custom-task fields; empty means "not set".
    i_task: str = ""
    initial_prompt: str = ""
    labels: tuple[tuple[int, str], ...] = ()
    head: str = ""
    interval: str = ""


@dataclass(frozen=True)
class DataSettings:
    source: str = "file"  # "file" or "landscape"
    train_path: str = ""
    test_path: str = ""
    k: int = 16
    sample_seed: int = 42
    label_field: str = "label"
    segment_fields: tuple[str, ...] = ()
    format: str = ""  # "", "jsonl", or "csv"


@dataclass(frozen=True)
class GeneratorSettings:
    kind: str = "mock"  # "mock" or "remote"
    temperature: float = 1.0
    max_tokens: int = 512
    # mock
    vocabulary: tuple[str, ...] = ()
    mock_seed: int = 0
    # remote
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "PROMPTEVO_API_KEY"
    max_retries: int = 3
    backoff_base: float = 0.5
    max_in_flight: int = 4
    requests_per_minute: int = 60


@dataclass(frozen=True)
class EvaluatorSettings:
    kind: str = "oracle"  # "oracle" or "remote"
    endpoint: str = ""
    api_key_env: str = "PROMPTEVO_SCORER_API_KEY"
    max_retries: int = 3
    backoff_base: float = 0.5
    requests_per_minute: int = 0


@dataclass(frozen=True)
class RunSettings:
    out_dir: str = "runs"
    checkpoint_every: int = 25
    test_eval_every: int = 10


@dataclass(frozen=True)
class RunnerConfig:
    evolution: EvolutionConfig
    task: TaskSettings
    data: DataSettings
    generator: GeneratorSettings
    evaluator: EvaluatorSettings
    run: RunSettings


_SECTION_TYPES = {
    "evolution": EvolutionConfig,
    "task": TaskSettings,
    "data": DataSettings,
    "generator": GeneratorSettings,
    "evaluator": EvaluatorSettings,
    "run": RunSettings,
}

_TUPLE_FIELDS = {"segment_fields", "vocabulary"}


def load_config_mapping(path: str | Path) -> dict:
    """Read a TOML (default) or JSON (.json suffix) config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if path.suffix.lower() == ".json":
        try:
            mapping = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid JSON config {path}: {exc}") from exc
    else:
        try:
            mapping = tomllib.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"invalid TOML config {path}: {exc}") from exc
    if not isinstance(mapping, dict):
        raise ConfigError(f"config root must be a table/object, got {type(mapping)}")
    return mapping


def apply_overrides(mapping: dict, overrides: Sequence[str]) -> dict:
    """Apply repeatable --override section.key=value pairs onto a raw mapping.

    Values parse as JSON when possible (numbers, booleans, lists), else as
    bare strings.
    """
    mapping = json.loads(json.dumps(mapping))  # deep copy, JSON-normalized
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw_value = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or not all(parts):
            raise ConfigError(
                f"override key {key!r} must be of the form section.field"
            )
        section, field_name = parts
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        mapping.setdefault(section, {})
        if not isinstance(mapping[section], dict):
            raise ConfigError(f"config section {section!r} is not a table")
        mapping[section][field_name] = value
    return mapping


def _coerce_plan(value: object) -> tuple[tuple[int, int], ...]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError("reproduction_plan must be a list")
    plan = []
    for entry in value:
        if isinstance(entry, dict):
            extra = set(entry) - {"n_p", "count"}
            if extra or set(entry) != {"n_p", "count"}:
                raise ConfigError(
                    f"reproduction_plan entries need exactly n_p and count, got {entry!r}"
                )
            plan.append((int(entry["n_p"]), int(entry["count"])))
        elif isinstance(entry, (list, tuple)) and len(entry) == 2:
            plan.append((int(entry[0]), int(entry[1])))
        else:
            raise ConfigError(f"bad reproduction_plan entry {entry!r}")
    return tuple(plan)


def _build_section(section: str, mapping: dict):
    cls = _SECTION_TYPES[section]
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    prepared = dict(mapping)
    if section == "evolution" and "reproduction_plan" in prepared:
        prepared["reproduction_plan"] = _coerce_plan(prepared["reproduction_plan"])
    if section == "task" and "labels" in prepared:
        try:
            prepared["labels"] = tuple(
                (int(i), str(w)) for i, w in prepared["labels"]
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad [task].labels: {exc}") from exc
    for name in _TUPLE_FIELDS & set(prepared):
        if not isinstance(prepared[name], (list, tuple)):
            raise ConfigError(f"[{section}].{name} must be a list")
        prepared[name] = tuple(str(v) for v in prepared[name])
    try:
        return cls(**prepared)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def parse_runner_config(mapping: dict) -> RunnerConfig:
    unknown = sorted(set(mapping) - set(_SECTION_TYPES))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    sections = {
        name: _build_section(name, mapping.get(name, {})) for name in _SECTION_TYPES
    }
    config = RunnerConfig(**sections)
    _validate_config(config)
    return config


def _validate_config(config: RunnerConfig):
    if not config.task.name:
        raise ConfigError("[task].name is required")
    if config.task.name not in TASKS:
        needed = [
            n for n in ("i_task", "initial_prompt")
            if not getattr(config.task, n)
        ]
        if needed or not config.task.labels:
            raise ConfigError(
                f"task {config.task.name!r} is not bundled; a custom task needs "
                "i_task, labels, and initial_prompt"
            )
    if config.data.source not in ("file", "landscape"):
        raise ConfigError(f"[data].source must be file or landscape, got {config.data.source!r}")
    if config.data.source == "landscape" and config.task.name != "keyword-landscape":
        raise ConfigError(
            "[data].source=landscape requires [task].name=keyword-landscape "
            "(its oracle reads the synthetic example markers)"
        )
    if config.data.source == "file" and not config.data.train_path:
        raise ConfigError("[data].train_path is required when source=file")
    if config.data.format not in ("", "jsonl", "csv"):
        raise ConfigError(f"[data].format must be jsonl or csv, got {config.data.format!r}")
    if config.data.k < 1:
        raise ConfigError("[data].k must be >= 1")
    if config.generator.kind not in ("mock", "remote"):
        raise ConfigError(f"[generator].kind must be mock or remote, got {config.generator.kind!r}")
    if config.generator.kind == "remote":
        if not config.generator.endpoint or not config.generator.model:
            raise ConfigError("[generator] remote kind needs endpoint and model")
    if config.evaluator.kind not in ("oracle", "remote"):
        raise ConfigError(f"[evaluator].kind must be oracle or remote, got {config.evaluator.kind!r}")
    if config.evaluator.kind == "remote" and not config.evaluator.endpoint:
        raise ConfigError("[evaluator] remote kind needs an endpoint")
    if config.run.checkpoint_every < 0 or config.run.test_eval_every < 0:
        raise ConfigError("[run] cadences must be non-negative")


def config_to_mapping(config: RunnerConfig) -> dict:
    """The effective config as a JSON-normalized mapping (defaults applied)."""
    mapping = {
        name: dataclasses.asdict(getattr(config, name)) for name in _SECTION_TYPES
    }
    return json.loads(json.dumps(mapping))


def config_hash(config: RunnerConfig) -> str:
    canonical = json.dumps(config_to_mapping(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:8]


# ---------------------------------------------------------------------------
# Component assembly


def build_task(config: RunnerConfig) -> TaskSpec:
    settings = config.task
    overrides = {
        name: getattr(settings, name)
        for name in ("i_task", "initial_prompt", "labels", "head", "interval")
        if getattr(settings, name)
    }
    if settings.name in TASKS:
        base = TASKS[settings.name]
        return dataclasses.replace(base, **overrides) if overrides else base
    try:
        return TaskSpec(name=settings.name, **overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid custom task: {exc}") from exc


def build_dataset(config: RunnerConfig, task: TaskSpec) -> FewShotDataset:
    settings = config.data
    if settings.source == "landscape":
        return make_landscape_dataset()
    segment_fields = settings.segment_fields or SEGMENT_FIELDS.get(task.name)
    if not segment_fields:
        raise ConfigError(
            f"task {task.name!r} has no default columns; set [data].segment_fields"
        )
    fmt = settings.format or None
    try:
        train_pool = load_examples(
            settings.train_path, task, segment_fields, settings.label_field, fmt
        )
    except OSError as exc:
        raise DataError(f"cannot read {settings.train_path}: {exc}") from exc
    dataset = sample_k_shot(
        train_pool, settings.k, settings.sample_seed, n_labels=len(task.labels)
    )
    if settings.test_path:
        try:
            test = load_examples(
                settings.test_path, task, segment_fields, settings.label_field, fmt
            )
        except OSError as exc:
            raise DataError(f"cannot read {settings.test_path}: {exc}") from exc
        dataset = FewShotDataset.build(dataset.train, test, settings.k)
    return dataset


def build_generator(config: RunnerConfig):
    settings = config.generator
    if settings.kind == "mock":
        return MockGenerator(
            vocabulary=settings.vocabulary or MUTATION_POOL,
            seed=settings.mock_seed,
            temperature=settings.temperature,
            max_tokens=settings.max_tokens,
        )
    return RemoteGenerator(
        endpoint=settings.endpoint,
        model=settings.model,
        api_key=os.environ.get(settings.api_key_env, ""),
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        max_retries=settings.max_retries,
        backoff_base=settings.backoff_base,
        max_in_flight=settings.max_in_flight,
        requests_per_minute=settings.requests_per_minute,
    )


def build_evaluator(
    config: RunnerConfig, task: TaskSpec, cache: FitnessCache | None = None
) -> Evaluator:
    settings = config.evaluator
    if settings.kind == "oracle":
        target = KeywordLandscapeOracle(task)
    else:
        target = RemoteScorer(
            endpoint=settings.endpoint,
            api_key=os.environ.get(settings.api_key_env, ""),
            max_retries=settings.max_retries,
            backoff_base=settings.backoff_base,
            requests_per_minute=settings.requests_per_minute,
        )
    return Evaluator(task, target, kind=config.evolution.fitness_kind, cache=cache)


def is_deterministic_stack(config: RunnerConfig) -> bool:
    return config.generator.kind == "mock" and config.evaluator.kind == "oracle"


@dataclass
class Components:
    task: TaskSpec
    dataset: FewShotDataset
    generator: object
    evaluator: Evaluator
    # With no remote parts, wall time is zeroed so logs are byte-identical
    # across runs of the same config.
    clock: Callable[[], float]


def build_components(
    config: RunnerConfig, cache: FitnessCache | None = None
) -> Components:
    task = build_task(config)
    return Components(
        task=task,
        dataset=build_dataset(config, task),
        generator=build_generator(config),
        evaluator=build_evaluator(config, task, cache),
        clock=(lambda: 0.0) if is_deterministic_stack(config) else time.monotonic,
    )


# ---------------------------------------------------------------------------
# Checkpoints


def _rng_state_to_json(state: tuple) -> list:
    version, internal, gauss = state
    return [version, list(internal), gauss]


def _rng_state_from_json(data: object) -> tuple:
    if not isinstance(data, list) or len(data) != 3 or not isinstance(data[1], list):
        raise CorruptCheckpoint("malformed rng_state")
    return (data[0], tuple(data[1]), data[2])


def _member_to_json(ind: Individual) -> dict:
    return {
        "id": ind.id,
        "prompt_text": ind.prompt_text,
        "fitness": ind.fitness,
        "born_round": ind.born_round,
        "parent_ids": list(ind.parent_ids),
    }


def _member_from_json(data: dict) -> Individual:
    try:
        return Individual(
            id=int(data["id"]),
            prompt_text=str(data["prompt_text"]),
            fitness=float(data["fitness"]),
            born_round=int(data["born_round"]),
            parent_ids=[int(i) for i in data["parent_ids"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed population member: {exc!r}") from exc


def checkpoint_payload(
    state: EngineState, config_map: dict, fingerprint: str, cache: FitnessCache
) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "round_index": state.round_index,
        "next_id": state.next_id,
        "rng_state": _rng_state_to_json(state.rng_state),
        "population": {
            "generation": state.population.generation,
            "members": [_member_to_json(m) for m in state.population.members],
        },
        "cache": cache.dump(),
        "dataset_fingerprint": fingerprint,
        "config": config_map,
    }


def save_checkpoint(path: str | Path, payload: dict):
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"checkpoint {path} is not valid JSON: {exc}") from exc
    required = {
        "version", "round_index", "next_id", "rng_state",
        "population", "cache", "dataset_fingerprint", "config",
    }
    if not isinstance(payload, dict) or not required.issubset(payload):
        missing = required - set(payload) if isinstance(payload, dict) else required
        raise CorruptCheckpoint(f"checkpoint missing field(s): {', '.join(sorted(missing))}")
    if payload["version"] != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {payload['version']!r}")
    return payload


def _state_from_payload(payload: dict) -> EngineState:
    pop = payload["population"]
    try:
        members = [_member_from_json(m) for m in pop["members"]]
        generation = int(pop["generation"])
        next_id = int(payload["next_id"])
        round_index = int(payload["round_index"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint: {exc!r}") from exc
    return EngineState(
        population=Population(generation=generation, members=members),
        rng_state=_rng_state_from_json(payload["rng_state"]),
        next_id=next_id,
        round_index=round_index,
    )


class CheckpointWriter:
    """Persists the latest engine state on the configured cadence.

    The engine hands over a state after every round; this writes it every
    `every` rounds, and `write()` flushes the latest state on shutdown.
    """

    def __init__(
        self,
        path: str | Path,
        config_map: dict,
        fingerprint: str,
        cache: FitnessCache,
        every: int,
    ):
        self.path = Path(path)
        self.config_map = config_map
        self.fingerprint = fingerprint
        self.cache = cache
        self.every = every
        self.latest: EngineState | None = None

    def __call__(self, state: EngineState):
        self.latest = state
        if self.every > 0 and state.round_index % self.every == 0:
            self.write()

    def write(self):
        if self.latest is None:
            return
        save_checkpoint(
            self.path,
            checkpoint_payload(self.latest, self.config_map, self.fingerprint, self.cache),
        )


# ---------------------------------------------------------------------------
# Run / resume / report


@dataclass
class RunResult:
    run_dir: Path
    population: Population
    best: Individual


def make_run_dir(config: RunnerConfig) -> Path:
    parent = Path(config.run.out_dir)
    parent.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%S")
    base = f"{stamp}-{config_hash(config)}"
    candidate = parent / base
    suffix = 0
    while candidate.exists():
        suffix += 1
        candidate = parent / f"{base}-{suffix}"
    candidate.mkdir()
    return candidate


def start_run(
    config: RunnerConfig,
    *,
    stop: Callable[[], bool] | None = None,
    run_dir: Path | None = None,
) -> RunResult:
    components = build_components(config)
    if run_dir is None:
        run_dir = make_run_dir(config)
    else:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
    config_map = config_to_mapping(config)
    (run_dir / CONFIG_FILENAME).write_text(
        json.dumps(config_map, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    writer = CheckpointWriter(
        run_dir / CHECKPOINT_FILENAME,
        config_map,
        components.dataset.fingerprint,
        components.evaluator.cache,
        config.run.checkpoint_every,
    )
    with JsonlSink(run_dir / LOG_FILENAME) as sink:
        population = evolve(
            config.evolution,
            components.task,
            components.dataset,
            components.generator,
            components.evaluator,
            sink,
            clock=components.clock,
            test_eval_every=config.run.test_eval_every,
            checkpoint_cb=writer,
            stop=stop,
        )
    writer.write()
    best = best_individual(population.members, config.evolution.fitness_kind)
    return RunResult(run_dir=run_dir, population=population, best=best)


def resume_run(
    checkpoint_path: str | Path, *, stop: Callable[[], bool] | None = None
) -> RunResult:
    checkpoint_path = Path(checkpoint_path)
    payload = load_checkpoint(checkpoint_path)
    try:
        config = parse_runner_config(payload["config"])
    except ConfigError as exc:
        raise CorruptCheckpoint(f"checkpoint config snapshot invalid: {exc}") from exc
    cache = FitnessCache.restore(payload["cache"])
    components = build_components(config, cache=cache)
    if components.dataset.fingerprint != payload["dataset_fingerprint"]:
        raise FingerprintMismatch(
            "dataset changed since checkpoint: "
            f"{components.dataset.fingerprint} != {payload['dataset_fingerprint']}"
        )
    state = _state_from_payload(payload)
    run_dir = checkpoint_path.parent
    log_path = run_dir / LOG_FILENAME
    if log_path.exists():
        # Drop any records from rounds after the checkpoint (and any
        # partial trailing line from an interrupted write).
        truncate_records(log_path, state.round_index)
    writer = CheckpointWriter(
        checkpoint_path,
        payload["config"],
        payload["dataset_fingerprint"],
        cache,
        config.run.checkpoint_every,
    )
    writer.latest = state
    with JsonlSink(log_path, append=True) as sink:
        population = evolve(
            config.evolution,
            components.task,
            components.dataset,
            components.generator,
            components.evaluator,
            sink,
            clock=components.clock,
            test_eval_every=config.run.test_eval_every,
            checkpoint_cb=writer,
            stop=stop,
            state=state,
        )
    writer.write()
    best = best_individual(population.members, config.evolution.fitness_kind)
    return RunResult(run_dir=run_dir, population=population, best=best)


def load_run_config(path: str | Path, overrides: Sequence[str] = ()) -> RunnerConfig:
    mapping = load_config_mapping(path)
    if overrides:
        mapping = apply_overrides(mapping, overrides)
    return parse_runner_config(mapping)


def report_runs(log_paths: Sequence[str | Path], out: str | Path | None = None) -> str:
    """Render run logs as a text table, CSV, or SVG overlay plot.

    With no output path, returns the text table. A .csv path writes one
    row per record (with a leading run column when several logs are
    given); any other path gets the best-fitness-vs-round SVG, one series
    per log.
    """
    curves: dict[str, list[RunRecord]] = {}
    for path in log_paths:
        path = Path(path)
        try:
            records = read_records(path)
        except OSError as exc:
            raise DataError(f"cannot read log {path}: {exc}") from exc
        if not records:
            raise EmptyLog(f"log {path} has no records")
        label = path.stem if path.stem != "log" else path.parent.name
        while label in curves:
            label += "+"
        curves[label] = records
    if out is None:
        blocks = []
        for label, records in curves.items():
            header = f"== {label} ==\n" if len(curves) > 1 else ""
            blocks.append(header + render_table(records))
        return "\n\n".join(blocks)
    out = Path(out)
    if out.suffix.lower() == ".csv":
        import csv as _csv

        from .runlog import RECORD_FIELDS, records_to_rows

        with open(out, "w", encoding="utf-8", newline="") as handle:
            writer = _csv.writer(handle)
            if len(curves) == 1:
                writer.writerows(records_to_rows(next(iter(curves.values()))))
            else:
                writer.writerow(("run",) + RECORD_FIELDS)
                for label, records in curves.items():
                    for row in records_to_rows(records)[1:]:
                        writer.writerow([label] + row)
    else:
        plot_curves(curves, out)
    return f"wrote {out}"


__all__ = [
    "CHECKPOINT_FILENAME",
    "CONFIG_FILENAME",
    "LOG_FILENAME",
    "Components",
    "CheckpointWriter",
    "DataSettings",
    "EvaluatorSettings",
    "GeneratorSettings",
    "RunResult",
    "RunSettings",
    "RunnerConfig",
    "TaskSettings",
    "apply_overrides",
    "build_components",
    "build_dataset",
    "build_evaluator",
    "build_generator",
    "build_task",
    "checkpoint_payload",
    "config_hash",
    "config_to_mapping",
    "is_deterministic_stack",
    "load_checkpoint",
    "load_config_mapping",
    "load_run_config",
    "make_run_dir",
    "parse_runner_config",
    "report_runs",
    "resume_run",
    "save_checkpoint",
    "start_run",
]
