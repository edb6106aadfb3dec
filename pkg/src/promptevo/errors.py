"""Exception hierarchy for the prompt evolution engine."""


class PromptEvoError(Exception):
    """Base class for all errors raised by this package."""

    category = "internal"


class ConfigError(PromptEvoError):
    """Invalid or inconsistent configuration."""

    category = "config"


# --- selection / engine ---


class EmptyCandidateSet(PromptEvoError):
    """Selection was asked to operate on an empty candidate list."""

    category = "engine"


class UnevaluatedIndividual(PromptEvoError):
    """An individual without a fitness value reached a fitness-dependent step."""

    category = "engine"


class NotEnoughCandidates(PromptEvoError):
    """Without-replacement sampling requested more individuals than exist."""

    category = "engine"


# --- meta-prompt assembly / extraction ---


class NoParents(PromptEvoError):
    """Meta-prompt assembly requires at least one parent."""

    category = "engine"


class UnevaluatedParent(PromptEvoError):
    """A parent without a fitness value was passed to meta-prompt assembly."""

    category = "engine"


class ExtractionFailure(PromptEvoError):
    """No usable prompt could be extracted from a generator completion.

    Signals the engine to retry the generation call.
    """

    category = "generation"


# --- generation adapters ---


class TransportError(PromptEvoError):
    """Network or provider failure that survived the retry/backoff budget."""

    category = "provider"


class ProviderRefusal(PromptEvoError):
    """The provider returned an empty or policy-blocked completion."""

    category = "provider"


# --- evaluation ---


class TargetUnavailable(PromptEvoError):
    """The target scoring model could not produce a usable score vector."""

    category = "provider"


# --- data ingestion ---


class DataError(PromptEvoError):
    category = "data"


class ParseError(DataError):
    """A malformed row in an input file. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownLabel(DataError):
    """A row whose label is not declared by the task. Carries the 1-based line number."""

    def __init__(self, line: int, label: object):
        super().__init__(f"line {line}: unknown label {label!r}")
        self.line = line
        self.label = label


class InsufficientClassExamples(DataError):
    """A class has fewer examples than the requested k."""

    def __init__(self, label_id: int, have: int, need: int):
        super().__init__(f"class {label_id}: have {have} examples, need {need}")
        self.label_id = label_id
        self.have = have
        self.need = need


# --- checkpoint / resume ---


class CheckpointError(PromptEvoError):
    category = "checkpoint"


class FingerprintMismatch(CheckpointError):
    """The dataset on disk no longer matches the checkpointed fingerprint."""


class CorruptCheckpoint(CheckpointError):
    """The checkpoint file is unreadable or structurally invalid."""


class EmptyLog(PromptEvoError):
    """A report was requested over a log with no records."""

    category = "data"
