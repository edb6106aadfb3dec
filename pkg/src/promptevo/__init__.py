"""Evolutionary optimization of text prompts for black-box classifiers.

A population of candidate prompts is improved over rounds: parents are
drawn by softmax roulette over fitness, an LLM generator rewrites them via
a fixed meta-prompt, and survivors are selected with elite preservation.
Fitness is few-shot classification accuracy (or cross-entropy loss) of a
fixed target model that only exposes label-word scores.
"""

from .data import (
    FewShotDataset,
    LabeledExample,
    fingerprint_dataset,
    fingerprint_examples,
    load_examples,
    sample_k_shot,
)
from .engine import (
    EngineState,
    EvolutionConfig,
    FitnessKind,
    Individual,
    Population,
    best_individual,
    child_entropy,
    evolve,
    population_performance,
    roulette_sample,
    select_parents,
    selection_probabilities,
    survivor_selection,
)
from .errors import (
    CheckpointError,
    ConfigError,
    CorruptCheckpoint,
    DataError,
    EmptyCandidateSet,
    EmptyLog,
    ExtractionFailure,
    FingerprintMismatch,
    InsufficientClassExamples,
    NoParents,
    NotEnoughCandidates,
    ParseError,
    PromptEvoError,
    ProviderRefusal,
    TargetUnavailable,
    TransportError,
    UnevaluatedIndividual,
    UnevaluatedParent,
    UnknownLabel,
)
from .evaluation import (
    Evaluator,
    FitnessCache,
    RemoteScorer,
    label_loss,
    predict,
    render_input,
)
from .generation import (
    GenerationOutcome,
    GenerationRequest,
    MockGenerator,
    RemoteGenerator,
)
from .landscape import (
    ACCURACY_BY_KEYWORD_COUNT,
    DECOY_WORDS,
    KeywordLandscapeOracle,
    MUTATION_POOL,
    TARGET_KEYWORDS,
    count_target_keywords,
    make_landscape_dataset,
    make_landscape_task,
)
from .metaprompt import (
    MetaPromptTemplate,
    TaskSpec,
    build_meta_prompt,
    extract_prompt,
    format_parent_block,
)
from .runlog import JsonlSink, RunRecord, read_records
from .runner import (
    RunnerConfig,
    load_run_config,
    parse_runner_config,
    report_runs,
    resume_run,
    start_run,
)
from .tasks import SEGMENT_FIELDS, TASKS, get_task

__version__ = "0.1.0"
