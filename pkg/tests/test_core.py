import json
import random
from itertools import combinations

import pytest
from hypothesis import given, strategies as st

from distractor_forge.core import (
    DatasetSplit,
    Distractor,
    GroundTruthPair,
    Origin,
    Polarity,
    derive_ground_truth_pairs,
    guess_polarity,
    load_dataset,
    sample_pairs,
    write_dataset,
)
from distractor_forge.errors import DatasetError

from conftest import make_item


def record(item_id, split="train", **over):
    rec = {
        "id": item_id, "subject": "DB", "kind": "statement", "polarity": "asking-correct",
        "question": "Which join keeps unmatched rows?", "answer": "LEFT JOIN",
        "distractors": [{"text": "INNER JOIN", "origin": "human", "selection_rate": 0.4},
                        {"text": "CROSS JOIN", "origin": "human", "selection_rate": 0.1}],
        "split": split,
    }
    rec.update(over)
    rec["split"] = rec.pop("split")  # schema order keeps split last
    return rec


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_load_two_train_one_test(tmp_path):
    path = write_lines(tmp_path / "d.jsonl", [record("a"), record("b"), record("c", "test")])
    split = load_dataset(path)
    assert (len(split.train), len(split.test)) == (2, 1)
    assert [i.id for i in split.train] == ["a", "b"] and split.test[0].id == "c"


def test_missing_answer_names_line(tmp_path):
    bad = record("b")
    del bad["answer"]
    path = write_lines(tmp_path / "d.jsonl", [record("a"), bad])
    with pytest.raises(DatasetError, match=r"line 2: missing field 'answer'"):
        load_dataset(path)


def test_distractor_equal_to_answer_rejected(tmp_path):
    bad = record("a", distractors=[{"text": " LEFT JOIN ", "origin": "human", "selection_rate": 0.2}])
    with pytest.raises(DatasetError, match="equals the answer"):
        load_dataset(write_lines(tmp_path / "d.jsonl", [bad]))


@pytest.mark.parametrize("mutate, message", [
    (lambda r: r.update(kind="essay"), "kind"),
    (lambda r: r.update(extra=1), "unknown field"),
    (lambda r: r["distractors"][0].pop("selection_rate"), "selection_rate"),
    (lambda r: r.update(split="dev"), "split"),
])
def test_schema_violations(tmp_path, mutate, message):
    rec = record("a")
    mutate(rec)
    with pytest.raises(DatasetError, match=message):
        load_dataset(write_lines(tmp_path / "d.jsonl", [rec]))


def test_duplicate_id_and_malformed_json(tmp_path):
    with pytest.raises(DatasetError, match="duplicate id"):
        load_dataset(write_lines(tmp_path / "d.jsonl", [record("a"), record("a", "test")]))
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(record("a")) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(path)


def test_round_trip_is_byte_identical(tmp_path):
    recs = [record("a"), record("t", "test", correctness_rate=0.5, num_students=40), record("b")]
    src = write_lines(tmp_path / "d.jsonl", recs)
    split = load_dataset(src)
    out = tmp_path / "again.jsonl"
    write_dataset(split, out, order=[r["id"] for r in recs])
    assert out.read_bytes() == src.read_bytes()


def test_pairs_three_rates():
    item = make_item(rates=(0.3, 0.1, 0.05))
    pairs = derive_ground_truth_pairs(item)
    names = [(p.d_high.text, p.d_low.text) for p in pairs]
    t = [d.text for d in item.distractors]
    assert names == [(t[0], t[1]), (t[0], t[2]), (t[1], t[2])]


def test_pairs_orientation_follows_rate_not_position():
    item = make_item(rates=(0.05, 0.3))
    (pair,) = derive_ground_truth_pairs(item)
    assert pair.d_high.selection_rate == 0.3


@pytest.mark.parametrize("rates", [(0.2, 0.2), (0.4,)])
def test_pairs_ties_and_single(rates):
    assert derive_ground_truth_pairs(make_item(rates=rates)) == []


def test_synthetic_distractors_not_paired():
    item = make_item(rates=(0.3, 0.1), extra=["made up"])
    assert len(derive_ground_truth_pairs(item)) == 1


@given(st.lists(st.integers(0, 1000), min_size=0, max_size=8, unique=True))
def test_pair_count_without_ties(raw):
    rates = [r / 1000 for r in raw]
    if not rates:
        return
    pairs = derive_ground_truth_pairs(make_item(rates=rates))
    k = len(rates)
    assert len(pairs) == k * (k - 1) // 2
    assert all(p.d_high.selection_rate > p.d_low.selection_rate for p in pairs)


@given(st.lists(st.sampled_from([0.0, 0.1, 0.2, 0.5]), min_size=1, max_size=7))
def test_pairs_match_brute_force_with_ties(rates):
    item = make_item(rates=rates)
    expected = []
    for i, j in combinations(range(len(rates)), 2):
        if rates[i] != rates[j]:
            hi, lo = (i, j) if rates[i] > rates[j] else (j, i)
            expected.append((hi, lo))
    expected.sort()
    got = [(item.distractors.index(p.d_high), item.distractors.index(p.d_low))
           for p in derive_ground_truth_pairs(item)]
    assert got == expected


def test_type_invariants():
    with pytest.raises(DatasetError):
        Distractor("   ")
    with pytest.raises(DatasetError):
        Distractor("x", selection_rate=1.5)
    with pytest.raises(DatasetError):
        make_item(texts=["same", "same"], rates=(0.2, 0.1))
    with pytest.raises(ValueError):
        GroundTruthPair("q", Distractor("a", selection_rate=0.1), Distractor("b", selection_rate=0.1))
    with pytest.raises(ValueError):
        DatasetSplit([make_item("x")], [make_item("x")])


def test_model_origin_round_trip():
    d = Distractor("x", Origin.MODEL, source="ours")
    assert d.to_record()["origin"] == "model:ours"
    assert Distractor.from_record(d.to_record()) == d


def test_sample_pairs_subset_keeps_order():
    pairs = derive_ground_truth_pairs(make_item(rates=(0.5, 0.4, 0.3, 0.2)))
    picked = sample_pairs(pairs, 3, random.Random(1))
    assert len(picked) == 3 and picked == [p for p in pairs if p in picked]
    assert sample_pairs(pairs, None, random.Random(1)) == pairs


def test_polarity_heuristic():
    assert guess_polarity("Which statement is NOT correct?") is Polarity.ASKING_INCORRECT
    assert guess_polarity("What is printed?") is Polarity.ASKING_CORRECT
