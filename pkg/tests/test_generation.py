import json

import pytest

from distractor_forge import mock
from distractor_forge.core import Kind, Origin, Polarity
from distractor_forge.errors import TransportError
from distractor_forge.generation import GeneratorSource, PromptKind, generate_distractors, validity_rate
from distractor_forge.prompts import render_generator_prompt
from distractor_forge.ranker import ProtocolConfig

from conftest import make_item, scripted

CFG = ProtocolConfig()


def gen_reply(*texts):
    return "### Type: Incorrect knowledge\n" + "\n".join(f"### Distractor {i}: {t}" for i, t in enumerate(texts, 1))


def judge(bad=()):
    def respond(prompt, temperature):
        option = mock.prompt_fields(prompt)["Option"]
        return json.dumps({"type": "asking correct option", "analysis": "",
                           "validity": "valid" if option in bad else "invalid"})
    return respond


def source_from(replies, name="src"):
    queue = iter(replies)
    return GeneratorSource(name, scripted(lambda p, t: next(queue)))


def test_clean_path(item):
    src = source_from([gen_reply("a", "b", "c")])
    result = generate_distractors(src, item, 3, validity=scripted(judge()), cfg=CFG)
    assert result.texts == ["a", "b", "c"] and not result.shortfall and result.rounds == 1
    assert all(d.origin is Origin.MODEL and d.source == "src" for d in result.distractors)


def test_regeneration_fills_gap(item):
    src = source_from([gen_reply("a", "bad", "c"), gen_reply("a", "d", "e")])
    result = generate_distractors(src, item, 3, validity=scripted(judge({"bad"})), cfg=CFG)
    assert result.texts == ["a", "c", "d"] and result.rounds == 2 and result.rejected == ["bad"]


def test_round_cap_leaves_shortfall(item):
    src = source_from([gen_reply("a", "x", "y"), gen_reply("b", "x", "y")])
    result = generate_distractors(src, item, 3, validity=scripted(judge({"x", "y"})), cfg=CFG, max_rounds=2)
    assert result.texts == ["a", "b"] and result.shortfall


def test_all_invalid_gives_empty(item):
    src = source_from([gen_reply("x")] * 3)
    result = generate_distractors(src, item, 1, validity=scripted(judge({"x"})), cfg=CFG)
    assert result.texts == [] and result.shortfall and result.rounds == 3


def test_answer_never_kept_and_garbage_uses_round(item):
    src = source_from(["???", gen_reply(item.answer, "z")])
    result = generate_distractors(src, item, 1, validity=None, cfg=CFG)
    assert result.texts == ["z"] and result.rounds == 2


def test_same_prompt_each_round_and_temperature(item):
    client = scripted(lambda p, t: gen_reply("k"))
    src = GeneratorSource("s", client)
    generate_distractors(src, item, 2, validity=None, cfg=CFG, temperature=1.0, max_rounds=3)
    prompts = {e.request_text for e in client.audit}
    assert prompts == {render_generator_prompt(item.question, item.answer, 2)}
    assert {e.temperature for e in client.audit} == {1.0}


def test_transport_errors_propagate(item):
    src = GeneratorSource("s", scripted(lambda p, t: {"error": 500}, max_attempts_per_call=1))
    with pytest.raises(TransportError):
        generate_distractors(src, item, 1, validity=None, cfg=CFG)
    with pytest.raises(ValueError):
        generate_distractors(src, item, 0, validity=None, cfg=CFG)


def test_knn_source_uses_neighbours():
    pool = [make_item(f"p{i}", question=f"pool {i}", rates=(0.3, 0.2, 0.1)) for i in range(4)]
    pool.append(make_item("short", rates=(0.2, 0.1)))
    target = make_item("t")
    client = scripted(mock.generator("knn"))
    src = GeneratorSource("knn", client, PromptKind.KNN_BASELINE, knn_pool=pool,
                          embedder=scripted(embedder=mock.embedder()))
    assert "short" not in [p.id for p in src.knn_pool]
    result = generate_distractors(src, target, 3, validity=None, cfg=CFG)
    assert len(result.texts) == 3
    prompt = client.audit.entries()[0].request_text
    assert prompt.count("Question:") == 4 and "Referencing the above samples" in prompt
    with pytest.raises(ValueError):
        GeneratorSource("knn", client, "knn-baseline", knn_pool=pool)


def test_validity_rate_cells():
    items = {
        "c1": make_item("c1", polarity=Polarity.ASKING_CORRECT, kind=Kind.CODE),
        "s1": make_item("s1", polarity=Polarity.ASKING_INCORRECT, kind=Kind.STATEMENT),
    }
    outputs = {"gen": {"c1": ["good", "bad"], "s1": ["good2"]}, "all": {"c1": ["x", "y"]}}
    report = validity_rate(outputs, items, scripted(judge({"bad"})), CFG)
    assert report["gen"]["asking-correct"]["code"].rate == 0.5
    assert report["gen"]["asking-incorrect"]["statement"].rate == 1.0
    assert report["all"]["asking-correct"]["code"].rate == 1.0
    assert "asking-incorrect" not in report["all"]
    assert "statement" not in report["gen"]["asking-correct"]
