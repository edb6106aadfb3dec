"""Population state and the evolution round loop.

The engine owns the single random stream. Per round it (1) draws all
parents in plan order, (2) asks the generator for one child per slot with
bounded extraction retries, (3) evaluates the offspring, (4) runs elitist
softmax-roulette survivor selection, and (5) emits one run record.

Determinism contract: with a fixed seed and deterministic generator and
evaluator, the record stream and final population are identical across
runs and across hosts. Child-level generation randomness is keyed by a
hash of (seed, round, child slot) rather than the shared stream, so the
schedule of generator calls can never reorder it.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Protocol, Sequence

from .errors import (
    ConfigError,
    EmptyCandidateSet,
    ExtractionFailure,
    NotEnoughCandidates,
    UnevaluatedIndividual,
)
from .generation import GenerationRequest
from .metaprompt import MetaPromptTemplate, TaskSpec, build_meta_prompt, extract_prompt
from .runlog import RunRecord

logger = logging.getLogger(__name__)


class FitnessKind(str, Enum):
    ACCURACY = "accuracy"
    LOSS = "loss"


def strip_braces(text: str) -> str:
    """Prompts must never contain the extraction delimiters."""
    return text.replace("{", "").replace("}", "").strip()


@dataclass
class Individual:
    """One candidate prompt with its score and lineage."""

    id: int
    prompt_text: str
    fitness: float | None = None
    born_round: int = 0
    parent_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.prompt_text = strip_braces(self.prompt_text)
        if not self.prompt_text:
            raise ValueError("prompt_text is empty after stripping braces")


@dataclass
class Population:
    """The generation-indexed set of individuals."""

    generation: int
    members: list[Individual]


@dataclass(frozen=True)
class EvolutionConfig:
    n_pop: int = 20
    n_s: int = 20
    rounds: int = 500
    reproduction_plan: tuple[tuple[int, int], ...] = ((1, 5), (2, 5))
    elite_preservation: bool = True
    seed: int = 42
    fitness_kind: FitnessKind = FitnessKind.ACCURACY
    extraction_retries: int = 3

    def __post_init__(self):
        object.__setattr__(
            self,
            "reproduction_plan",
            tuple((int(n_p), int(count)) for n_p, count in self.reproduction_plan),
        )
        object.__setattr__(self, "fitness_kind", FitnessKind(self.fitness_kind))
        if self.n_pop < 1:
            raise ConfigError("n_pop must be positive")
        if self.n_s < 1:
            raise ConfigError("n_s must be positive")
        if self.n_s != self.n_pop:
            # Survivor count must keep the population size invariant.
            raise ConfigError("n_s must equal n_pop")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if self.extraction_retries < 0:
            raise ConfigError("extraction_retries must be non-negative")
        if not self.reproduction_plan:
            raise ConfigError("reproduction_plan must not be empty")
        total = 0
        for n_p, count in self.reproduction_plan:
            if n_p < 1 or count < 1:
                raise ConfigError("reproduction_plan entries must be positive")
            if n_p > self.n_pop:
                raise ConfigError(f"n_p={n_p} exceeds n_pop={self.n_pop}")
            total += count
        if total < 1:
            raise ConfigError("reproduction_plan must produce at least one child")


def _selection_values(
    candidates: Sequence[Individual], fitness_kind: FitnessKind
) -> list[float]:
    if not candidates:
        raise EmptyCandidateSet("no candidates to select from")
    values = []
    for ind in candidates:
        if ind.fitness is None:
            raise UnevaluatedIndividual(f"individual {ind.id} has no fitness")
        # Lower loss must mean higher selection probability.
        values.append(-ind.fitness if fitness_kind is FitnessKind.LOSS else ind.fitness)
    return values


def selection_probabilities(
    candidates: Sequence[Individual],
    fitness_kind: FitnessKind = FitnessKind.ACCURACY,
) -> list[float]:
    """Softmax of fitness over the candidate set: e^f_i / sum_j e^f_j."""
    values = _selection_values(candidates, fitness_kind)
    peak = max(values)
    weights = [math.exp(v - peak) for v in values]
    total = sum(weights)
    return [w / total for w in weights]


def roulette_sample(
    candidates: Sequence[Individual],
    n: int,
    rng: random.Random,
    *,
    replace: bool = True,
    fitness_kind: FitnessKind = FitnessKind.ACCURACY,
) -> list[Individual]:
    """Draw n individuals with probability proportional to e^fitness.

    With replacement: independent draws. Without replacement: sequential
    draws, renormalizing the remaining weights after each removal.
    """
    values = _selection_values(candidates, fitness_kind)
    if not replace and n > len(candidates):
        raise NotEnoughCandidates(f"need {n} of {len(candidates)} without replacement")
    peak = max(values)
    weights = [math.exp(v - peak) for v in values]
    picked: list[Individual] = []
    if replace:
        total = sum(weights)
        for _ in range(n):
            picked.append(candidates[_weighted_index(weights, total, rng)])
    else:
        pool = list(candidates)
        pool_weights = list(weights)
        for _ in range(n):
            total = sum(pool_weights)
            idx = _weighted_index(pool_weights, total, rng)
            picked.append(pool.pop(idx))
            pool_weights.pop(idx)
    return picked


def _weighted_index(weights: Sequence[float], total: float, rng: random.Random) -> int:
    r = rng.random() * total
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if r < acc:
            return i
    return len(weights) - 1  # guard against accumulated rounding


def select_parents(
    population: Population,
    n_p: int,
    rng: random.Random,
    fitness_kind: FitnessKind = FitnessKind.ACCURACY,
) -> list[Individual]:
    """Roulette draw of n_p parents, with replacement (duplicates allowed)."""
    return roulette_sample(
        population.members, n_p, rng, replace=True, fitness_kind=fitness_kind
    )


def _better(kind: FitnessKind) -> Callable[[Individual], tuple]:
    # Sort key: best individual first; ties broken by lowest id (creation order).
    if kind is FitnessKind.LOSS:
        return lambda ind: (ind.fitness, ind.id)
    return lambda ind: (-ind.fitness, ind.id)


def best_individual(
    candidates: Sequence[Individual], fitness_kind: FitnessKind
) -> Individual:
    if not candidates:
        raise EmptyCandidateSet("no candidates")
    for ind in candidates:
        if ind.fitness is None:
            raise UnevaluatedIndividual(f"individual {ind.id} has no fitness")
    return min(candidates, key=_better(fitness_kind))


def survivor_selection(
    candidates: Sequence[Individual],
    config: EvolutionConfig,
    rng: random.Random,
    generation: int,
) -> Population:
    """Pick the next population of exactly n_s members from parents + offspring.

    With elite preservation the best candidate is guaranteed the first slot;
    the rest are filled by roulette without replacement.
    """
    if len(candidates) < config.n_s:
        raise NotEnoughCandidates(
            f"{len(candidates)} candidates for {config.n_s} survivor slots"
        )
    kind = config.fitness_kind
    if config.elite_preservation:
        elite = best_individual(candidates, kind)
        rest = [ind for ind in candidates if ind is not elite]
        members = [elite] + roulette_sample(
            rest, config.n_s - 1, rng, replace=False, fitness_kind=kind
        )
    else:
        members = roulette_sample(
            candidates, config.n_s, rng, replace=False, fitness_kind=kind
        )
    return Population(generation=generation + 1, members=members)


def population_performance(
    population: Population, fitness_kind: FitnessKind = FitnessKind.ACCURACY
) -> float:
    """The population's reported performance: its best member's fitness."""
    return best_individual(population.members, fitness_kind).fitness


def child_entropy(seed: int, round_index: int, child_index: int) -> int:
    """Stable 64-bit value keying one child slot's generation randomness."""
    digest = hashlib.blake2b(
        f"{seed}:{round_index}:{child_index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


class GeneratorLike(Protocol):
    temperature: float
    max_tokens: int

    def generate(self, request: GenerationRequest): ...


class EvaluatorLike(Protocol):
    def fitness(self, prompt_text: str, examples: Sequence) -> float: ...

    @property
    def cache_hits(self) -> int: ...


@dataclass
class EngineState:
    """Everything needed to continue a run exactly where it stopped."""

    population: Population
    rng_state: tuple
    next_id: int
    round_index: int


@dataclass
class FewShotDatasetView:
    """The slices of the dataset the engine needs (train always, test optional)."""

    train: Sequence
    test: Sequence = ()


def evolve(
    config: EvolutionConfig,
    task: TaskSpec,
    dataset,
    generator: GeneratorLike,
    evaluator: EvaluatorLike,
    sink: Callable[[RunRecord], None],
    *,
    template: MetaPromptTemplate | None = None,
    clock: Callable[[], float] = time.monotonic,
    test_eval_every: int = 0,
    checkpoint_cb: Callable[[EngineState], None] | None = None,
    stop: Callable[[], bool] | None = None,
    state: EngineState | None = None,
) -> Population:
    """Run the reproduction/selection loop for config.rounds rounds.

    dataset needs .train (and .test when test_eval_every > 0). Emits one
    record per completed round, round 0 being the evaluated initial
    population. When `state` is given, continues from it instead of
    initializing (records for earlier rounds are not re-emitted).
    """
    template = template or MetaPromptTemplate()
    rng = random.Random()
    if state is None:
        rng.seed(config.seed)
        next_id = 0
        members = []
        for _ in range(config.n_pop):
            members.append(Individual(id=next_id, prompt_text=task.initial_prompt))
            next_id += 1
        population = Population(generation=0, members=members)
        start_round = 0
    else:
        rng.setstate(state.rng_state)
        next_id = state.next_id
        population = state.population
        start_round = state.round_index + 1

    def emit_round(round_index: int, t0: float, calls: int, failures: int, hits0: int):
        best = best_individual(population.members, config.fitness_kind)
        mean = sum(ind.fitness for ind in population.members) / len(population.members)
        record = RunRecord(
            round=round_index,
            best_train_fitness=best.fitness,
            mean_train_fitness=mean,
            best_prompt_text=best.prompt_text,
            generation_calls=calls,
            extraction_failures=failures,
            cache_hits=evaluator.cache_hits - hits0,
            wall_time_ms=int((clock() - t0) * 1000),
        )
        if test_eval_every > 0 and round_index % test_eval_every == 0:
            record = replace(
                record,
                best_test_fitness=evaluator.fitness(best.prompt_text, dataset.test),
                cache_hits=evaluator.cache_hits - hits0,
            )
        sink(record)
        if checkpoint_cb is not None:
            checkpoint_cb(
                EngineState(
                    population=population,
                    rng_state=rng.getstate(),
                    next_id=next_id,
                    round_index=round_index,
                )
            )

    if state is None:
        t0 = clock()
        hits0 = evaluator.cache_hits
        for ind in population.members:
            if ind.fitness is None:
                ind.fitness = evaluator.fitness(ind.prompt_text, dataset.train)
        emit_round(0, t0, calls=0, failures=0, hits0=hits0)
        if stop is not None and stop():
            return population

    for round_index in range(start_round if start_round > 0 else 1, config.rounds + 1):
        t0 = clock()
        hits0 = evaluator.cache_hits
        calls = 0
        failures = 0

        # All parent draws happen up front, in plan order, so generation
        # scheduling cannot influence the shared stream.
        parent_draws: list[list[Individual]] = []
        for n_p, count in config.reproduction_plan:
            for _ in range(count):
                parent_draws.append(
                    select_parents(population, n_p, rng, config.fitness_kind)
                )

        offspring: list[Individual] = []
        for slot, parents in enumerate(parent_draws):
            meta_prompt = build_meta_prompt(
                template, task, [(p.prompt_text, p.fitness) for p in parents]
            )
            entropy = child_entropy(config.seed, round_index, slot)
            child_text = None
            for attempt in range(config.extraction_retries):
                request = GenerationRequest(
                    meta_prompt=meta_prompt,
                    temperature=generator.temperature,
                    max_tokens=generator.max_tokens,
                    attempt=attempt,
                    entropy=entropy,
                )
                outcome = generator.generate(request)
                calls += 1
                try:
                    child_text = extract_prompt(outcome.raw_text)
                except ExtractionFailure as exc:
                    failures += 1
                    logger.debug(
                        "round %d slot %d attempt %d: extraction failed (%s)",
                        round_index, slot, attempt, exc,
                    )
                    continue
                break
            if child_text is None:
                # Keep the per-round offspring count constant.
                child_text = parents[0].prompt_text
            child = Individual(
                id=next_id,
                prompt_text=child_text,
                born_round=round_index,
                parent_ids=[p.id for p in parents],
            )
            next_id += 1
            offspring.append(child)

        for child in offspring:
            if child.fitness is None:
                child.fitness = evaluator.fitness(child.prompt_text, dataset.train)

        population = survivor_selection(
            population.members + offspring, config, rng, population.generation
        )
        emit_round(round_index, t0, calls, failures, hits0)
        if stop is not None and stop():
            break

    return population
