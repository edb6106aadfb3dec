"""Datasets: labeled text examples, file loading, and k-shot sampling.

Examples carry one or more named text segments (single-sentence tasks use
one segment; pair tasks use two) and a label position index into the task's
declared label list. The k-shot sampler draws per-class without replacement
from a class-keyed deterministic stream, so adding examples of one class
never disturbs another class's draw.
"""

from __future__ import annotations

import csv
import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DataError,
    InsufficientClassExamples,
    ParseError,
    UnknownLabel,
)
from .metaprompt import TaskSpec


@dataclass(frozen=True)
class LabeledExample:
    # ((segment name, text), ...); single-segment examples render bare,
    # multi-segment ones render as "name: text" lines.
    segments: tuple[tuple[str, str], ...]
    label_id: int

    def __post_init__(self):
        if not self.segments:
            raise ValueError("example needs at least one segment")
        for name, text in self.segments:
            if not name:
                raise ValueError("segment name must be non-empty")
            if not text:
                raise ValueError(f"segment {name!r} has empty text")
        if self.label_id < 0:
            raise ValueError("label_id must be non-negative")

    def content_key(self) -> tuple:
        return (self.segments, self.label_id)


def canonical_example(example: LabeledExample) -> str:
    return json.dumps(
        {
            "label_id": example.label_id,
            "segments": [[name, text] for name, text in example.segments],
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )


def fingerprint_examples(examples: Sequence[LabeledExample]) -> str:
    payload = "\n".join(canonical_example(e) for e in examples)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def fingerprint_dataset(
    train: Sequence[LabeledExample], test: Sequence[LabeledExample], k: int
) -> str:
    payload = "\n".join(
        [f"k={k}", "[train]"]
        + [canonical_example(e) for e in train]
        + ["[test]"]
        + [canonical_example(e) for e in test]
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class FewShotDataset:
    train: tuple[LabeledExample, ...]
    test: tuple[LabeledExample, ...]
    k: int
    fingerprint: str

    @classmethod
    def build(
        cls,
        train: Iterable[LabeledExample],
        test: Iterable[LabeledExample],
        k: int,
    ) -> "FewShotDataset":
        train = tuple(train)
        test = tuple(test)
        if not train:
            raise DataError("train split is empty")
        counts: dict[int, int] = {}
        for example in train:
            counts[example.label_id] = counts.get(example.label_id, 0) + 1
        uneven = {label: n for label, n in counts.items() if n != k}
        if uneven:
            raise DataError(f"train split is not {k}-per-class: {uneven}")
        overlap = {e.content_key() for e in train} & {e.content_key() for e in test}
        if overlap:
            raise DataError(f"train and test share {len(overlap)} example(s)")
        return cls(
            train=train,
            test=test,
            k=k,
            fingerprint=fingerprint_dataset(train, test, k),
        )


def _resolve_label(value: object, task: TaskSpec, line: int) -> int:
    """Map a raw label cell to a position index; accepts ids or label words."""
    text = str(value).strip()
    try:
        return task.position_of_label_id(int(text))
    except (ValueError, KeyError):
        pass
    words = task.label_words
    if text in words:
        return words.index(text)
    raise UnknownLabel(line, text)


def _example_from_mapping(
    data: dict, segment_fields: Sequence[str], label_field: str, task: TaskSpec, line: int
) -> LabeledExample:
    segments = []
    for name in segment_fields:
        if name not in data or data[name] is None:
            raise ParseError(line, f"missing field {name!r}")
        text = str(data[name]).strip()
        if not text:
            raise ParseError(line, f"empty text in field {name!r}")
        segments.append((name, text))
    if label_field not in data or data[label_field] is None:
        raise ParseError(line, f"missing field {label_field!r}")
    label_id = _resolve_label(data[label_field], task, line)
    return LabeledExample(segments=tuple(segments), label_id=label_id)


def load_examples(
    path: str | Path,
    task: TaskSpec,
    segment_fields: Sequence[str],
    label_field: str = "label",
    fmt: str | None = None,
) -> list[LabeledExample]:
    """Load a JSONL or CSV file of labeled examples.

    Format is inferred from the suffix unless given; parse and label errors
    carry 1-based line numbers.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if fmt not in ("jsonl", "csv"):
        raise DataError(f"unknown dataset format {fmt!r}")
    examples: list[LabeledExample] = []
    with open(path, encoding="utf-8") as handle:
        if fmt == "csv":
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                raise ParseError(1, "missing CSV header")
            for row in reader:
                line = reader.line_num
                if None in row.values():
                    raise ParseError(line, "row has fewer cells than the header")
                examples.append(
                    _example_from_mapping(row, segment_fields, label_field, task, line)
                )
        else:
            for line, text in enumerate(handle, 1):
                text = text.strip()
                if not text:
                    continue
                try:
                    data = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise ParseError(line, f"invalid JSON: {exc.msg}") from exc
                if not isinstance(data, dict):
                    raise ParseError(line, "record is not a JSON object")
                examples.append(
                    _example_from_mapping(data, segment_fields, label_field, task, line)
                )
    return examples


def _class_stream(seed: int, label_id: int) -> random.Random:
    digest = hashlib.blake2b(f"{seed}:{label_id}".encode(), digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


def sample_k_shot(
    examples: Sequence[LabeledExample], k: int, seed: int, n_labels: int | None = None
) -> FewShotDataset:
    """Draw k examples per class without replacement; the rest become test.

    Each class draws from its own seeded stream, so the selection within
    one class is independent of how many examples other classes have.
    Train keeps file order within each class, classes in ascending label
    order; test keeps overall file order. When n_labels is given, a class
    with no examples at all is reported, not silently skipped.
    """
    if k < 1:
        raise DataError("k must be >= 1")
    by_class: dict[int, list[int]] = {}
    for index, example in enumerate(examples):
        by_class.setdefault(example.label_id, []).append(index)
    if n_labels is not None:
        for label_id in range(n_labels):
            if label_id not in by_class:
                raise InsufficientClassExamples(label_id, 0, k)
    chosen: set[int] = set()
    for label_id in sorted(by_class):
        indices = by_class[label_id]
        if len(indices) < k:
            raise InsufficientClassExamples(label_id, len(indices), k)
        stream = _class_stream(seed, label_id)
        chosen.update(stream.sample(indices, k))
    train = [
        examples[i]
        for label_id in sorted(by_class)
        for i in by_class[label_id]
        if i in chosen
    ]
    test = [examples[i] for i in range(len(examples)) if i not in chosen]
    return FewShotDataset.build(train, test, k)
