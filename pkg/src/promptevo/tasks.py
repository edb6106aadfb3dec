"""Bundled classification task definitions.

Each task fixes the label vocabulary, the instruction line used in
meta-prompts, the seed prompt that fills the initial population, and the
dataset columns holding its text segments.
"""

from __future__ import annotations

from .landscape import make_landscape_task
from .metaprompt import TaskSpec

SST2_TASK = TaskSpec(
    name="sst2",
    i_task=(
        "The task is to classify the sentiment of a sentence from movie "
        "reviews. Here are 2 classes ({negative}/{positive})."
    ),
    labels=((0, "negative"), (1, "positive")),
    initial_prompt="Classify the following sentence.",
)

RTE_TASK = TaskSpec(
    name="rte",
    i_task=(
        "The task is to classify the relationship between sentence1 and "
        "sentence2. Here are 2 classes ({yes}/{no}). {yes} means the "
        "relationship is entailment, the meaning of one sentence is entailed "
        "(can be inferred) from the other sentence, otherwise {no}."
    ),
    labels=((0, "yes"), (1, "no")),
    initial_prompt=(
        "Classify whether the relationship between the following sentence1 "
        "and sentence2 is entailment."
    ),
)

AGNEWS_TASK = TaskSpec(
    name="agnews",
    i_task=(
        "The task is to classify a news article by its topic. Here are 4 "
        "classes ({world}/{sports}/{business}/{technology})."
    ),
    labels=((0, "world"), (1, "sports"), (2, "business"), (3, "technology")),
    initial_prompt="Classify the topic of the following news article.",
)

LANDSCAPE_TASK = make_landscape_task()

TASKS: dict[str, TaskSpec] = {
    task.name: task
    for task in (SST2_TASK, RTE_TASK, AGNEWS_TASK, LANDSCAPE_TASK)
}

# Dataset columns holding each task's text segments, in render order.
SEGMENT_FIELDS: dict[str, tuple[str, ...]] = {
    "sst2": ("sentence",),
    "rte": ("sentence1", "sentence2"),
    "agnews": ("text",),
    "keyword-landscape": ("sentence",),
}


def get_task(name: str) -> TaskSpec:
    try:
        return TASKS[name]
    except KeyError:
        raise KeyError(
            f"unknown task {name!r}; available: {', '.join(sorted(TASKS))}"
        ) from None
