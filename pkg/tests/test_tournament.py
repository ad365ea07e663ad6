import random

import pytest

from distractor_forge import mock
from distractor_forge.core import Distractor, Origin
from distractor_forge.generation import GeneratorSource
from distractor_forge.ranker import ProtocolConfig
from distractor_forge.tournament import (
    Setting,
    Tally,
    TournamentSettings,
    plausibility_tournament,
    report_from_questions,
    score_question,
    tournament_from_outputs,
)

from conftest import make_item, preferring, scripted

CFG = ProtocolConfig(rng_seed=3, fan_out=4)


def model(texts, source):
    return [Distractor(t, Origin.MODEL, source=source) for t in texts]


def favour(prefix):
    return preferring(lambda t: 1 if t.startswith(prefix) else 0)


def test_worked_example(item):
    xs = model(["a", "xb", "xc"], "X")
    ys = model(["a", "yd", "ye"], "Y")
    client = scripted(favour("x"))
    q = score_question(item, xs, ys, Setting.A, "reasoning", client, CFG)
    assert q.excluded == ["a"] and q.x == ["xb", "xc"] and q.y == ["yd", "ye"]
    assert q.comparisons == 4 and len(q.judgments) == 4
    t = q.tally()
    assert t.per_distractor == {"wins_x": 4, "loses_x": 0, "wins_y": 0, "loses_y": 4}
    assert q.outcome == "x" and t.per_question == {"win_x": 1, "tie": 0, "win_y": 0}


def test_identical_sets_tie_without_calls(item):
    client = scripted(lambda p, t: pytest.fail("no comparison expected"))
    q = score_question(item, model(["a", "b"], "X"), model(["b", "a"], "Y"), Setting.A, "reasoning", client, CFG)
    assert q.comparisons == 0 and q.outcome == "tie"


def test_two_two_split_is_tie(item):
    xs, ys = model(["x1", "x2"], "X"), model(["y1", "y2"], "Y")
    # x1 beats both y, both y beat x2
    score = {"x1": 3, "y1": 2, "y2": 1, "x2": 0}
    q = score_question(item, xs, ys, Setting.A, "reasoning", scripted(preferring(score.__getitem__)), CFG)
    assert (q.points_x, q.points_y, q.outcome) == (2, 2, "tie")


def random_side(rng, prefix, shared):
    own = [f"{prefix}{i}" for i in range(rng.randint(0, 4))]
    picks = rng.sample(shared, rng.randint(0, len(shared)))
    texts = own + picks
    rng.shuffle(texts)
    return texts


def test_antisymmetry_on_fifty_fixtures():
    rng = random.Random(8)
    for n in range(50):
        items = [make_item(f"t{n}-{k}", subject=rng.choice(["DB", "ML"])) for k in range(3)]
        shared = ["s1", "s2", "s3"]
        out_x = {it.id: model(random_side(rng, "x", shared), "X") for it in items}
        out_y = {it.id: model(random_side(rng, "y", shared), "Y") for it in items}
        ranker = mock.ranker(biased_fraction=0.3, salt=str(n))
        setting = rng.choice([Setting.A, Setting.B])
        qx, skip_x = tournament_from_outputs("X", "Y", out_x, out_y, items, setting, "reasoning",
                                             scripted(ranker), CFG, keep_b=2)
        qy, skip_y = tournament_from_outputs("Y", "X", out_y, out_x, items, setting, "reasoning",
                                             scripted(ranker), CFG, keep_b=2)
        rx = report_from_questions("X", "Y", setting, qx, skip_x)
        ry = report_from_questions("Y", "X", setting, qy, skip_y)
        assert ry.total == rx.total.transposed()
        assert {s: t.transposed() for s, t in rx.per_subject.items()} == ry.per_subject
        assert [s["item_id"] for s in skip_x] == [s["item_id"] for s in skip_y]
        for q in qx:
            xs = {d.text for d in out_x[q.item_id]}
            ys = {d.text for d in out_y[q.item_id]}
            p, r = len(xs - ys), len(ys - xs)
            assert (len(q.x), len(q.y)) == ((p, r) if setting is Setting.A else (min(p, 2), min(r, 2)))
            assert len(q.judgments) == _round_robin_calls(p, setting) + _round_robin_calls(r, setting) + \
                len(q.x) * len(q.y)


def _round_robin_calls(size, setting, keep=2):
    # Setting B trims a side larger than ``keep`` with an all-pairs round robin
    return size * (size - 1) // 2 if setting is Setting.B and size > keep else 0


def test_comparison_count_law(item):
    rng = random.Random(1)
    for _ in range(30):
        p, qn = rng.randint(0, 4), rng.randint(0, 4)
        client = scripted(mock.ranker())
        q = score_question(item, model([f"x{i}" for i in range(p)], "X"), model([f"y{i}" for i in range(qn)], "Y"),
                           Setting.A, "reasoning", client, CFG)
        assert len(q.judgments) == p * qn
        assert q.points_x + q.points_y == p * qn


def test_setting_b_keeps_top_three(item):
    xs = model(["x1", "x2", "x3", "x4", "x5"], "X")
    ys = model(["y1", "y2"], "Y")
    score = {"x5": 9, "x4": 8, "x3": 7, "x2": 1, "x1": 0, "y1": 5, "y2": 4}
    q = score_question(item, xs, ys, Setting.B, "reasoning", scripted(preferring(score.__getitem__)), CFG)
    assert q.x == ["x5", "x4", "x3"] and q.y == ["y1", "y2"]
    assert len(q.judgments) == 10 + 6


def test_skipped_questions_counted():
    items = [make_item("a"), make_item("b")]
    questions, skipped = tournament_from_outputs(
        "X", "Y", {"a": model(["x"], "X"), "b": []}, {"a": model(["y"], "Y"), "b": model(["y"], "Y")},
        items, "A", "reasoning", scripted(mock.ranker()), CFG)
    assert [q.item_id for q in questions] == ["a"]
    assert skipped == [{"item_id": "b", "reason": "no distractors from X"}]


def tournament_sources():
    x = GeneratorSource("ours", scripted(mock.generator("ours")))
    y = GeneratorSource("base", scripted(mock.generator("base")))
    return x, y


def test_full_tournament_settings_and_repetitions():
    split = mock.demo_dataset(n_train=0, n_test=4)
    x, y = tournament_sources()
    validity = scripted(mock.validity(0.0))
    a = plausibility_tournament(x, y, split.test, "A", "reasoning", scripted(mock.ranker()), CFG,
                                validity=validity)
    qa = a.questions[0]
    assert all(len(q.x) + len(q.excluded) == 3 for q in qa)
    per_q = a.per_question
    assert per_q["win_x"] + per_q["tie"] + per_q["win_y"] == len(qa)
    assert a.per_distractor["wins_x"] == a.per_distractor["loses_y"]

    b = plausibility_tournament(x, y, split.test, "B", "reasoning", scripted(mock.ranker()), CFG,
                                validity=validity, settings=TournamentSettings(), repetitions=2)
    assert b.repetitions == 2 and len(b.questions) == 2
    assert all(len(q.x) <= 3 and len(q.y) <= 3 for rep in b.questions for q in rep)
    gen_temps = {e.temperature for e in x.client.audit if e.temperature is not None}
    assert 1.0 in gen_temps
    assert sum(b.per_question.values()) == pytest.approx(len(split.test))
    with pytest.raises(ValueError):
        plausibility_tournament(x, GeneratorSource("ours", y.client), split.test, "A", "reasoning",
                                scripted(mock.ranker()), CFG, validity=None)


def test_tally_helpers():
    t = Tally(3, 1, 1, 0, 0)
    t.add(Tally(1, 1, 0, 1, 0))
    assert t == Tally(4, 2, 1, 1, 0)
    assert t.scaled(0.5) == Tally(2, 1, 0.5, 0.5, 0)
    assert t.transposed().transposed() == t
