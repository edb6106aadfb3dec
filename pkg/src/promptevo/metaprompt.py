"""Meta-prompt assembly and extraction of newborn prompts from completions.

The reproduction meta-prompt shown to the generator LLM has three blocks
joined by single newlines:

    <pre>   task description + what a prompt is + generation request
    <exs>   one line per parent: "<prompt text> (score: <value>)"
    <post>  final request + output-format instruction

Everything here is a pure function of its inputs, byte-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ExtractionFailure, NoParents, UnevaluatedParent

DEFAULT_I_PROMPT = (
    "A prompt is to guide a language model to better solve the task. "
    "Each prompt is attached with a score. The better the prompt is, the "
    "higher the score is."
)
DEFAULT_I_REP = (
    "I want you to generate only one new and better prompt for this task. "
    "For example, you can try word replacements, active/positive voice "
    "conversions, adding words or delete words."
)
DEFAULT_I_FINAL = (
    "Now, generate only one new and better prompt based on all the "
    "information above, especially the given prompts. For example, you can "
    "try word replacements, active/positive voice conversions, adding words "
    "or delete words."
)
DEFAULT_I_ADDITIONAL = (
    "Let's think step by step briefly. In the end, output one generated "
    "prompt inside curly brackets {}, such as {Please help me to classify.}."
)

# Extracted prompts longer than this are treated as malformed generations:
# they would blow up the target model's context.
MAX_PROMPT_CHARS = 1000


@dataclass(frozen=True)
class MetaPromptTemplate:
    """The four fixed instruction parts of the reproduction meta-prompt."""

    i_prompt: str = DEFAULT_I_PROMPT
    i_rep: str = DEFAULT_I_REP
    i_final: str = DEFAULT_I_FINAL
    i_additional: str = DEFAULT_I_ADDITIONAL

    def __post_init__(self):
        for name in ("i_prompt", "i_rep", "i_final", "i_additional"):
            if not getattr(self, name):
                raise ValueError(f"template part {name} must be non-empty")
        if "curly brackets" not in self.i_additional:
            raise ValueError(
                "i_additional must state the curly-bracket output convention"
            )


@dataclass(frozen=True)
class TaskSpec:
    """Natural-language building blocks of one classification task.

    labels is an ordered list of (label_id, label_word) pairs; example
    labels index into this list positionally, and label_id is the raw id
    used in data files.
    """

    name: str
    i_task: str
    labels: tuple[tuple[int, str], ...]
    initial_prompt: str
    head: str = "class:"
    interval: str = "\n"

    def __post_init__(self):
        labels = tuple((int(i), str(w)) for i, w in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a task needs at least 2 labels")
        words = [w for _, w in labels]
        if len(set(words)) != len(words) or any(not w for w in words):
            raise ValueError("label words must be pairwise distinct and non-empty")
        ids = [i for i, _ in labels]
        if len(set(ids)) != len(ids):
            raise ValueError("label ids must be distinct")
        if not self.initial_prompt:
            raise ValueError("initial_prompt must be non-empty")

    @property
    def label_words(self) -> list[str]:
        return [w for _, w in self.labels]

    def position_of_label_id(self, label_id: int) -> int:
        for pos, (lid, _) in enumerate(self.labels):
            if lid == label_id:
                return pos
        raise KeyError(label_id)


def format_parent_block(prompt_text: str, fitness: float) -> str:
    """One <exs> line: the parent prompt followed by its score to 4 decimals."""
    return f"{prompt_text} (score: {fitness:.4f})"


def build_meta_prompt(
    template: MetaPromptTemplate,
    task: TaskSpec,
    parents: list[tuple[str, float | None]],
) -> str:
    """Assemble the full reproduction meta-prompt for the given scored parents.

    parents are (prompt_text, fitness) pairs in draw order; their order is
    preserved in the <exs> block, so the output is injective in parent order.
    """
    if not parents:
        raise NoParents("at least one parent is required")
    for text, fitness in parents:
        if fitness is None:
            raise UnevaluatedParent(f"parent {text!r} has no fitness")
    pre = " ".join([task.i_task, template.i_prompt, template.i_rep])
    exs = "\n".join(format_parent_block(text, fitness) for text, fitness in parents)
    post = f"{template.i_final} {template.i_additional}"
    return f"{pre}\n{exs}\n{post}"


def extract_prompt(raw: str) -> str:
    """Pull the newborn prompt out of a raw completion.

    Takes the contents of the last closed {...} pair, trimmed. Fails if no
    pair closed, the pair is empty after trimming, the pair contains a
    nested opening brace, or the contents exceed MAX_PROMPT_CHARS.
    """
    last_span: tuple[int, int] | None = None
    last_nested = False
    open_at: int | None = None
    nested = False
    for idx, ch in enumerate(raw):
        if ch == "{":
            if open_at is None:
                open_at = idx
                nested = False
            else:
                nested = True
        elif ch == "}":
            if open_at is not None:
                last_span = (open_at, idx)
                last_nested = nested
                open_at = None
    if last_span is None:
        raise ExtractionFailure("no balanced {...} pair in completion")
    if last_nested:
        raise ExtractionFailure("nested braces in extracted prompt")
    content = raw[last_span[0] + 1 : last_span[1]].strip()
    if not content:
        raise ExtractionFailure("extracted prompt is empty")
    if len(content) > MAX_PROMPT_CHARS:
        raise ExtractionFailure(
            f"extracted prompt has {len(content)} chars (max {MAX_PROMPT_CHARS})"
        )
    return content
