"""Dataset loading, validation, k-shot sampling, and fingerprints."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from promptevo.data import (
    FewShotDataset,
    LabeledExample,
    fingerprint_dataset,
    fingerprint_examples,
    load_examples,
    sample_k_shot,
)
from promptevo.errors import (
    DataError,
    InsufficientClassExamples,
    ParseError,
    UnknownLabel,
)
from promptevo.tasks import SEGMENT_FIELDS, SST2_TASK

FIELDS = SEGMENT_FIELDS["sst2"]


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(row) + "\n" for row in rows))
    return path


def make_rows(n, prefix="sentence"):
    return [
        {"sentence": f"{prefix} number {i:02d}", "label": i % 2} for i in range(n)
    ]


class TestLabeledExample:
    def test_rejects_empty_segments(self):
        with pytest.raises(ValueError):
            LabeledExample(segments=(), label_id=0)

    def test_rejects_empty_text(self):
        with pytest.raises(ValueError):
            LabeledExample(segments=(("sentence", ""),), label_id=0)

    def test_rejects_negative_label(self):
        with pytest.raises(ValueError):
            LabeledExample(segments=(("sentence", "fine"),), label_id=-1)


class TestLoadJsonl:
    def test_rows_load_in_file_order(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(3))
        examples = load_examples(path, SST2_TASK, FIELDS)
        assert [ex.segments[0][1] for ex in examples] == [
            "sentence number 00",
            "sentence number 01",
            "sentence number 02",
        ]
        assert [ex.label_id for ex in examples] == [0, 1, 0]

    def test_labels_accepted_by_word(self, tmp_path):
        rows = [
            {"sentence": "awful plot", "label": "negative"},
            {"sentence": "lovely cast", "label": "positive"},
        ]
        path = write_jsonl(tmp_path / "train.jsonl", rows)
        examples = load_examples(path, SST2_TASK, FIELDS)
        assert [ex.label_id for ex in examples] == [0, 1]

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_examples(path, SST2_TASK, FIELDS) == []

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "train.jsonl"
        path.write_text(
            '{"sentence": "one", "label": 0}\n\n  \n{"sentence": "two", "label": 1}\n'
        )
        assert len(load_examples(path, SST2_TASK, FIELDS)) == 2

    def test_invalid_json_reports_one_based_line(self, tmp_path):
        path = tmp_path / "train.jsonl"
        path.write_text('{"sentence": "ok", "label": 0}\n{not json}\n')
        with pytest.raises(ParseError) as err:
            load_examples(path, SST2_TASK, FIELDS)
        assert err.value.line == 2

    def test_non_object_row_is_parse_error(self, tmp_path):
        path = tmp_path / "train.jsonl"
        path.write_text('["list", "row"]\n')
        with pytest.raises(ParseError) as err:
            load_examples(path, SST2_TASK, FIELDS)
        assert err.value.line == 1

    def test_missing_field_is_parse_error(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", [{"label": 1}])
        with pytest.raises(ParseError) as err:
            load_examples(path, SST2_TASK, FIELDS)
        assert err.value.line == 1
        assert "sentence" in str(err.value)

    def test_empty_field_is_parse_error(self, tmp_path):
        path = write_jsonl(
            tmp_path / "train.jsonl", [{"sentence": "  ", "label": 1}]
        )
        with pytest.raises(ParseError):
            load_examples(path, SST2_TASK, FIELDS)

    def test_unknown_label_carries_line_and_text(self, tmp_path):
        rows = [
            {"sentence": "fine", "label": 0},
            {"sentence": "odd", "label": "neutral"},
        ]
        path = write_jsonl(tmp_path / "train.jsonl", rows)
        with pytest.raises(UnknownLabel) as err:
            load_examples(path, SST2_TASK, FIELDS)
        assert err.value.line == 2
        assert "neutral" in str(err.value)

    def test_out_of_range_label_id_is_unknown(self, tmp_path):
        path = write_jsonl(
            tmp_path / "train.jsonl", [{"sentence": "fine", "label": 7}]
        )
        with pytest.raises(UnknownLabel):
            load_examples(path, SST2_TASK, FIELDS)


class TestLoadCsv:
    def test_rows_load_in_file_order(self, tmp_path):
        path = tmp_path / "train.csv"
        path.write_text(
            "sentence,label\na dull film,0\na fine film,1\nanother dud,negative\n"
        )
        examples = load_examples(path, SST2_TASK, FIELDS)
        assert [ex.label_id for ex in examples] == [0, 1, 0]
        assert examples[2].segments == (("sentence", "another dud"),)

    def test_short_row_is_parse_error_with_line(self, tmp_path):
        path = tmp_path / "train.csv"
        path.write_text("sentence,label\ngood film,1\nonly-one-cell\n")
        with pytest.raises(ParseError) as err:
            load_examples(path, SST2_TASK, FIELDS)
        assert err.value.line == 3

    def test_missing_column_is_parse_error(self, tmp_path):
        path = tmp_path / "train.csv"
        path.write_text("text,label\ngood film,1\n")
        with pytest.raises(ParseError):
            load_examples(path, SST2_TASK, FIELDS)

    def test_format_override_beats_suffix(self, tmp_path):
        path = tmp_path / "data.txt"
        path.write_text('{"sentence": "fine", "label": 1}\n')
        examples = load_examples(path, SST2_TASK, FIELDS, fmt="jsonl")
        assert len(examples) == 1


class TestSampleKShot:
    def test_sixteen_per_class_no_duplicates(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(100))
        examples = load_examples(path, SST2_TASK, FIELDS)
        dataset = sample_k_shot(examples, k=16, seed=42)
        assert len(dataset.train) == 32
        for label in (0, 1):
            assert sum(ex.label_id == label for ex in dataset.train) == 16
        keys = [ex.content_key() for ex in dataset.train]
        assert len(set(keys)) == 32
        assert len(dataset.test) == 68
        assert dataset.k == 16

    def test_test_split_is_exact_remainder_in_file_order(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(40))
        examples = load_examples(path, SST2_TASK, FIELDS)
        dataset = sample_k_shot(examples, k=4, seed=42)
        train_keys = {ex.content_key() for ex in dataset.train}
        expected_test = [
            ex for ex in examples if ex.content_key() not in train_keys
        ]
        assert dataset.test == tuple(expected_test)

    def test_train_is_class_ordered_then_file_ordered(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(40))
        examples = load_examples(path, SST2_TASK, FIELDS)
        dataset = sample_k_shot(examples, k=4, seed=42)
        labels = [ex.label_id for ex in dataset.train]
        assert labels == sorted(labels)
        by_file_position = {ex.content_key(): i for i, ex in enumerate(examples)}
        for label in (0, 1):
            positions = [
                by_file_position[ex.content_key()]
                for ex in dataset.train
                if ex.label_id == label
            ]
            assert positions == sorted(positions)

    def test_same_seed_same_sample(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(60))
        examples = load_examples(path, SST2_TASK, FIELDS)
        a = sample_k_shot(examples, k=8, seed=42)
        b = sample_k_shot(examples, k=8, seed=42)
        assert a.train == b.train
        assert a.fingerprint == b.fingerprint

    def test_different_seed_different_sample(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(200))
        examples = load_examples(path, SST2_TASK, FIELDS)
        a = sample_k_shot(examples, k=16, seed=42)
        b = sample_k_shot(examples, k=16, seed=43)
        assert a.train != b.train

    def test_per_class_streams_are_independent(self, tmp_path):
        base = make_rows(30)
        extra_positives = [
            {"sentence": f"extra positive {i:02d}", "label": 1} for i in range(10)
        ]
        path_a = write_jsonl(tmp_path / "a.jsonl", base)
        path_b = write_jsonl(tmp_path / "b.jsonl", base + extra_positives)
        picks_a = sample_k_shot(load_examples(path_a, SST2_TASK, FIELDS), 5, 42)
        picks_b = sample_k_shot(load_examples(path_b, SST2_TASK, FIELDS), 5, 42)
        negatives_a = [ex for ex in picks_a.train if ex.label_id == 0]
        negatives_b = [ex for ex in picks_b.train if ex.label_id == 0]
        assert negatives_a == negatives_b

    def test_k_equal_to_class_size_takes_whole_class(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(10))
        examples = load_examples(path, SST2_TASK, FIELDS)
        dataset = sample_k_shot(examples, k=5, seed=42)
        assert len(dataset.train) == 10
        assert dataset.test == ()

    def test_k_above_class_size_raises_with_counts(self, tmp_path):
        rows = make_rows(9)  # 5 negatives, 4 positives
        path = write_jsonl(tmp_path / "train.jsonl", rows)
        examples = load_examples(path, SST2_TASK, FIELDS)
        with pytest.raises(InsufficientClassExamples) as err:
            sample_k_shot(examples, k=5, seed=42)
        assert err.value.label_id == 1
        assert err.value.have == 4
        assert err.value.need == 5

    def test_missing_class_raises_when_label_count_known(self, tmp_path):
        rows = [{"sentence": f"all negative {i}", "label": 0} for i in range(8)]
        path = write_jsonl(tmp_path / "train.jsonl", rows)
        examples = load_examples(path, SST2_TASK, FIELDS)
        with pytest.raises(InsufficientClassExamples) as err:
            sample_k_shot(examples, k=2, seed=42, n_labels=2)
        assert err.value.label_id == 1
        assert err.value.have == 0
        assert err.value.need == 2


class TestFewShotDatasetBuild:
    def test_uneven_class_counts_rejected(self):
        train = [
            LabeledExample(segments=(("sentence", f"t{i}"),), label_id=0)
            for i in range(3)
        ] + [LabeledExample(segments=(("sentence", "p"),), label_id=1)]
        with pytest.raises(DataError):
            FewShotDataset.build(train=train, test=[], k=2)

    def test_train_test_overlap_rejected(self):
        shared = LabeledExample(segments=(("sentence", "dup"),), label_id=0)
        other = LabeledExample(segments=(("sentence", "pos"),), label_id=1)
        with pytest.raises(DataError):
            FewShotDataset.build(train=[shared, other], test=[shared], k=1)

    def test_empty_train_rejected(self):
        with pytest.raises(DataError):
            FewShotDataset.build(train=[], test=[], k=1)


class TestFingerprints:
    def test_fingerprint_is_hex_sha256(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(20))
        dataset = sample_k_shot(load_examples(path, SST2_TASK, FIELDS), 4, 42)
        assert len(dataset.fingerprint) == 64
        int(dataset.fingerprint, 16)

    def test_fingerprint_depends_on_text_label_and_k(self, tmp_path):
        rows = make_rows(20)
        base = sample_k_shot(
            load_examples(write_jsonl(tmp_path / "a.jsonl", rows), SST2_TASK, FIELDS),
            4,
            42,
        )
        edited_rows = json.loads(json.dumps(rows))
        edited_rows[0]["sentence"] = "sentence number 00 edited"
        text_changed = sample_k_shot(
            load_examples(
                write_jsonl(tmp_path / "b.jsonl", edited_rows), SST2_TASK, FIELDS
            ),
            4,
            42,
        )
        assert base.fingerprint != text_changed.fingerprint

    def test_fingerprint_stable_across_interpreter_processes(self, tmp_path):
        """The same file and seed produce one fingerprint on any host."""
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(50))
        dataset = sample_k_shot(load_examples(path, SST2_TASK, FIELDS), 8, 42)
        script = (
            "from promptevo.data import load_examples, sample_k_shot\n"
            "from promptevo.tasks import SST2_TASK\n"
            f"examples = load_examples({str(path)!r}, SST2_TASK, ('sentence',))\n"
            "print(sample_k_shot(examples, 8, 42).fingerprint)\n"
        )
        result = subprocess.run(
            [sys.executable, "-c", script],
            capture_output=True,
            text=True,
            check=True,
            env={"PATH": "/usr/bin:/bin", "PYTHONHASHSEED": "999"},
        )
        assert result.stdout.strip() == dataset.fingerprint

    def test_examples_fingerprint_matches_dataset_sections(self, tmp_path):
        path = write_jsonl(tmp_path / "train.jsonl", make_rows(12))
        dataset = sample_k_shot(load_examples(path, SST2_TASK, FIELDS), 3, 42)
        recomputed = fingerprint_dataset(dataset.train, dataset.test, dataset.k)
        assert recomputed == dataset.fingerprint

    def test_label_change_alters_examples_fingerprint(self):
        a = [LabeledExample(segments=(("sentence", "same text"),), label_id=0)]
        b = [LabeledExample(segments=(("sentence", "same text"),), label_id=1)]
        assert fingerprint_examples(a) != fingerprint_examples(b)
