"""Synthetic keyword landscape: a closed-form target for exercising the loop.

The target "model" is a pure function of the rendered input. Each example
encodes its own label word and a difficulty level 0-5 in its text; the
oracle counts how many of the five target keywords appear in the prompt
region of the rendered input and favors the true label word whenever that
count reaches the example's level. With the bundled 20-example train split
(per class: five level-0 examples plus one each of levels 1-5), mean train
accuracy is exactly 0.5 + 0.1 * (distinct target keywords in the prompt):
chance at zero keywords, perfect at all five.
"""

from __future__ import annotations

import math
import re
from typing import Sequence

from .data import FewShotDataset, LabeledExample
from .metaprompt import TaskSpec

# Words that raise accuracy when present in the prompt...
TARGET_KEYWORDS = ("precise", "signal", "anchor", "focus", "detail")
# ...and same-register words that do nothing, so the search has dead ends.
DECOY_WORDS = ("please", "kindly", "maybe", "roughly", "casual")
MUTATION_POOL = TARGET_KEYWORDS + DECOY_WORDS

ACCURACY_BY_KEYWORD_COUNT = {m: 0.5 + 0.1 * m for m in range(6)}

FAVORED_LOGPROB = math.log(0.9)
UNFAVORED_LOGPROB = math.log(0.1)

LANDSCAPE_INITIAL_PROMPT = "Classify the following sentence."

_EXAMPLE_PATTERN = re.compile(r"label (\w+) level (\d+)")

# Per class: half the examples are solvable at chance (level 0), the rest
# need 1..5 distinct keywords.
_DIFFICULTY_LEVELS = (0, 0, 0, 0, 0, 1, 2, 3, 4, 5)


def make_landscape_task() -> TaskSpec:
    return TaskSpec(
        name="keyword-landscape",
        i_task=(
            "The task is to classify a synthetic line as negative or positive. "
            "Here are 2 classes ({negative}/{positive})."
        ),
        labels=((0, "negative"), (1, "positive")),
        initial_prompt=LANDSCAPE_INITIAL_PROMPT,
    )


def make_landscape_examples(split: str, task: TaskSpec) -> list[LabeledExample]:
    examples = []
    for position, (_, word) in enumerate(task.labels):
        for item, level in enumerate(_DIFFICULTY_LEVELS):
            text = f"{split} item {item:02d} label {word} level {level}"
            examples.append(
                LabeledExample(segments=(("sentence", text),), label_id=position)
            )
    return examples


def make_landscape_dataset() -> FewShotDataset:
    task = make_landscape_task()
    return FewShotDataset.build(
        train=make_landscape_examples("train", task),
        test=make_landscape_examples("test", task),
        k=len(_DIFFICULTY_LEVELS),
    )


def count_target_keywords(text: str) -> int:
    tokens = set(re.findall(r"[a-z]+", text.lower()))
    return len(tokens & set(TARGET_KEYWORDS))


class KeywordLandscapeOracle:
    """Deterministic scorer: favors the true label word once the prompt
    holds at least as many distinct target keywords as the example's level.

    Counts calls so cache tests can assert zero target traffic.
    """

    def __init__(self, task: TaskSpec | None = None):
        self.task = task if task is not None else make_landscape_task()
        self.calls = 0

    def score(self, rendered: str, candidate_words: Sequence[str]) -> list[float]:
        self.calls += 1
        lines = rendered.split(self.task.interval)
        if len(lines) < 3:
            raise ValueError(f"rendered input has {len(lines)} lines, expected >= 3")
        match = _EXAMPLE_PATTERN.search(lines[0])
        if match is None:
            raise ValueError(f"example text lacks label/level marker: {lines[0]!r}")
        true_word, level = match.group(1), int(match.group(2))
        if true_word not in candidate_words:
            raise ValueError(f"unknown label word {true_word!r} in example text")
        prompt_region = " ".join(lines[1:-1])
        if count_target_keywords(prompt_region) >= level:
            favored = true_word
        else:
            favored = next(w for w in candidate_words if w != true_word)
        return [
            FAVORED_LOGPROB if word == favored else UNFAVORED_LOGPROB
            for word in candidate_words
        ]
