import json

import pytest
from hypothesis import given, strategies as st

from distractor_forge.core import Polarity
from distractor_forge.errors import ParseError
from distractor_forge.prompts import (
    DistractorType,
    KnnExample,
    RankerVariant,
    Verdict,
    format_generator_completion,
    format_ranker_completion,
    load_template,
    parse_augment_output,
    parse_generator_output,
    parse_knn_output,
    parse_ranker_output,
    parse_validity_output,
    render_augment_prompt,
    render_generator_prompt,
    render_knn_prompt,
    render_ranker_prompt,
    render_teacher_prompt,
    render_validity_prompt,
    template_hashes,
)

Q, A = "What does len('abc') return?", "3"


@pytest.mark.parametrize("variant", list(RankerVariant))
def test_ranker_slots_in_order(variant):
    text = render_ranker_prompt(variant, Q, A, "dA-text", "dB-text")
    assert text.index("[Distractor A] dA-text") < text.index("[Distractor B] dB-text")
    assert "{" not in text.replace("{{", "")


def test_reasoning_prompt_format_block():
    text = render_ranker_prompt("reasoning", Q, A, "x", "y")
    assert text.startswith("[INST] You are a teacher analyzing which distractor")
    assert text.endswith("Generate in the following format:\n### Review:\n### Choice: [/INST]")
    assert "Describe a realistic process of solving the problem" in text


def test_rubric_and_geval_markers():
    rubric = render_ranker_prompt("rubric", Q, A, "x", "y")
    for header in ("Conceptual Misunderstandings", "Similarity to Correct Answer", "Intuitive Appeal"):
        assert header in rubric
    geval = render_ranker_prompt("geval", Q, A, "x", "y")
    assert "read and understand these instructions carefully" in geval
    assert geval.endswith("- Choice:")


def test_swapped_slots_differ_only_there():
    ab = render_ranker_prompt("reasoning", Q, A, "first", "second")
    ba = render_ranker_prompt("reasoning", Q, A, "second", "first")
    assert ab.replace("first", "@").replace("second", "first").replace("@", "second") == ba


def test_render_rejects_empty_and_is_pure():
    with pytest.raises(ValueError):
        render_ranker_prompt("reasoning", Q, A, "", "y")
    with pytest.raises(ValueError):
        render_ranker_prompt("discussion", Q, A, "x", "y")
    assert render_ranker_prompt("rubric", Q, A, "x", "y") == render_ranker_prompt("rubric", Q, A, "x", "y")


def test_slot_values_with_braces_are_literal():
    text = render_ranker_prompt("reasoning", "print(f'{x}')", "{answer}", "{distractor_b}", "d")
    assert "[Question] print(f'{x}')" in text and "[Distractor A] {distractor_b}" in text


@pytest.mark.parametrize("text, choice", [
    ("### Review: because\n### Choice: B", "B"),
    ("### Review: r\n### Choice: A.", "A"),
    ("### Choice:   **A**  ", "A"),
    ("[1]: a\n[Summary]: s\n[Choice]: B", "B"),
    ("Evaluation Form:\n- Choice: A", "A"),
    ("### Review: A looks right. Choice: B is tempting\n### Choice: A", "A"),
])
def test_parse_choice(text, choice):
    assert parse_ranker_output(text).choice == choice


@pytest.mark.parametrize("text", ["### Choice: C", "no marker at all", "### Choice: A or B", "### Choice:", ""])
def test_parse_choice_failures(text):
    with pytest.raises(ParseError):
        parse_ranker_output(text)


def test_reasoning_between_markers():
    parsed = parse_ranker_output("preamble\n### Review: students confuse these.\n### Choice: B")
    assert parsed.reasoning == "students confuse these."
    assert parse_ranker_output(format_ranker_completion("r text", "A")) == parse_ranker_output(
        "### Review: r text\n### Choice: A")


@given(st.text(alphabet=st.characters(blacklist_characters="#[]:", blacklist_categories=("Cs",)), max_size=300),
       st.sampled_from("AB"))
def test_choice_parses_for_any_reasoning(reasoning, token):
    text = f"### Review: {reasoning}\n### Choice: {token}"
    if "choice" in reasoning.lower():
        return
    assert parse_ranker_output(text).choice == token


def test_teacher_prompt_winner_slot():
    a = render_teacher_prompt(Q, A, "x", "y", "A")
    b = render_teacher_prompt(Q, A, "x", "y", "B")
    assert "Distractor chosen more frequently by actual students:A" in a
    assert [i for i, (p, q) in enumerate(zip(a, b)) if p != q] == [a.index("students:A") + len("students:")]
    assert "must not mention this information" in a
    with pytest.raises(ValueError):
        render_teacher_prompt(Q, A, "x", "y", "C")


def test_generator_prompt_n():
    three = render_generator_prompt(Q, A, 3)
    assert "Generate 3 distractor(s) in the following format:\n### Type:\n### Distractor n: [/INST]" in three
    one = render_generator_prompt(Q, A, 1)
    assert "Generate 1 distractor(s)" in one and "### Type:" in one
    with pytest.raises(ValueError):
        render_generator_prompt(Q, A, 0)


def test_parse_generator_well_formed():
    out = parse_generator_output("### Type: Correct knowledge\n### Distractor 1: x\n### Distractor 2: y", 2)
    assert out.distractor_type is DistractorType.CORRECT_KNOWLEDGE
    assert out.distractors == ("x", "y") and not out.shortfall


def test_parse_generator_duplicate_and_missing_type():
    out = parse_generator_output("### Type: Incorrect knowledge\n### Distractor 1: x\n### Distractor 2: x ", 2)
    assert out.distractors == ("x",) and out.duplicates == ("x",) and out.shortfall
    with pytest.raises(ParseError):
        parse_generator_output("### Distractor 1: x", 1)
    with pytest.raises(ParseError):
        parse_generator_output("### Type: Incorrect knowledge\n", 1)


def test_parse_generator_multiline_and_echoed_tag():
    text = "### Type: Incorrect knowledge\n### Distractor 1: for i in x:\n    print(i)\n### Distractor 2: z [/INST]"
    assert parse_generator_output(text).distractors == ("for i in x:\n    print(i)", "z")


def test_parse_generator_json_form():
    text = 'Sure: {"type": "Incorrect knowledge", "distractor_2": "b", "distractor_1": "a"}'
    assert parse_generator_output(text, 2).distractors == ("a", "b")


safe_text = st.text(alphabet="abcdefghij xyz=()+.,0123456789", min_size=1, max_size=30).map(str.strip).filter(bool)


@given(st.sampled_from(list(DistractorType)), st.lists(safe_text, min_size=1, max_size=6, unique=True))
def test_generator_format_parse_round_trip(dtype, texts):
    parsed = parse_generator_output(format_generator_completion(dtype, texts), len(texts))
    assert parsed.distractor_type is dtype and list(parsed.distractors) == texts


def test_type_follows_polarity():
    assert DistractorType.for_polarity(Polarity.ASKING_CORRECT).label == "Incorrect knowledge"
    assert DistractorType.for_polarity(Polarity.ASKING_INCORRECT).label == "Correct knowledge"


def test_validity_prompt_and_parse():
    text = render_validity_prompt(Q, "4")
    assert "[Option] 4" in text and '"validity": "valid" or "invalid"' in text
    ok = parse_validity_output(json.dumps({"type": "asking correct option", "analysis": "no", "validity": "invalid"}))
    assert ok.verdict is Verdict.INVALID and ok.polarity_judged is Polarity.ASKING_CORRECT
    assert ok.usable_as_distractor
    bad = parse_validity_output('```json\n{"type":"asking incorrect option","analysis":"","validity":"valid"}\n```')
    assert bad.verdict is Verdict.VALID and bad.polarity_judged is Polarity.ASKING_INCORRECT
    assert not bad.usable_as_distractor
    for broken in ('{"type": "asking correct option", "analysis": "x"}', "valid", '{"validity": "maybe"}'):
        with pytest.raises(ParseError):
            parse_validity_output(broken)


def test_augment_prompt():
    text = render_augment_prompt(Q, A, ["2", "abc", "None"])
    assert "[Original Distractors] - 2\n- abc\n- None" in text
    assert "Generate 3 new distractor(s) in the following JSON format" in text
    assert "[Original Distractors] - only" in render_augment_prompt(Q, A, ["only"])
    with pytest.raises(ValueError):
        render_augment_prompt(Q, A, [])


def test_augment_output_json_and_fallback():
    js = json.dumps({"type": "Incorrect knowledge", "distractor_1": "a", "distractor_2": "b", "distractor_3": "c"})
    assert parse_augment_output(js).distractors == ("a", "b", "c")
    lines = "### Type: Incorrect knowledge\n### Distractor 1: a\n### Distractor 2: b"
    out = parse_augment_output(lines)
    assert out.distractors == ("a", "b") and out.shortfall


def example(i):
    return KnnExample(f"q{i}", f"a{i}", (f"d{i}1", f"d{i}2", f"d{i}3"))


def test_knn_prompt_blocks():
    text = render_knn_prompt([example(1), example(2), example(3)], Q, A)
    head, tail = text.split("Referencing the above samples, generate 3 distractors.")
    assert head.count("Question:") == 3 and head.count("Distractor3:") == 3
    assert tail.endswith("Distractor1:\nDistractor2:\nDistractor3:")
    with pytest.raises(ValueError):
        render_knn_prompt([example(1), example(2)], Q, A)
    # examples identical to the target are the caller's business
    render_knn_prompt([KnnExample(Q, A, ("x", "y", "z")), example(2), example(3)], Q, A)


def test_knn_output_parse():
    assert parse_knn_output("Distractor1: a\nDistractor2: b\nDistractor3: c").distractors == ("a", "b", "c")


def test_templates_hashed():
    hashes = template_hashes()
    assert set(hashes) >= {"ranker_reasoning", "validity", "augment"}
    assert all(len(h) == 64 for h in hashes.values())
    assert not load_template("validity").endswith("\n")
