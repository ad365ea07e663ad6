import json

import pytest

from distractor_forge import mock
from distractor_forge.cli import main
from distractor_forge.client import BackendConfig, Client, ScriptedTransport
from distractor_forge.core import Distractor, Kind, McqItem, Origin, Polarity, write_dataset
from distractor_forge.mock import prompt_fields

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def scripted(responder=None, chat=None, embedder=None, embeddings=None, audit=None, **config) -> Client:
    transport = ScriptedTransport(chat=chat, embeddings=embeddings, responder=responder, embedder=embedder)
    return Client(BackendConfig(**config), transport, audit=audit, sleep=lambda s: None)


def make_item(item_id="q1", rates=(0.3, 0.1, 0.05), texts=None, subject="Python",
              polarity=Polarity.ASKING_CORRECT, kind=Kind.CODE, question=None, answer="the answer",
              extra=()) -> McqItem:
    texts = texts or [f"{item_id} option {i}" for i in range(len(rates))]
    ds = [Distractor(t, Origin.HUMAN, r) for t, r in zip(texts, rates)]
    ds += [Distractor(t, Origin.SYNTHETIC) for t in extra]
    return McqItem(item_id, subject, kind, polarity, question or f"What does snippet {item_id} print?", answer,
                   tuple(ds))


def choice(text: str) -> str:
    return f"### Review: thinking about it.\n### Choice: {text}"


def preferring(score):
    """Order-invariant ranker: picks the slot whose text has the larger ``score``."""

    def respond(prompt, temperature):
        f = prompt_fields(prompt)
        return choice("A" if score(f["Distractor A"]) > score(f["Distractor B"]) else "B")

    return respond


@pytest.fixture
def item():
    return make_item()


FIXTURE_CONFIG = """\
seed: 7
dataset: data.jsonl
protocol: {temperature: 0.5, attempt_cap: 10, fan_out: 4, repetitions: 1}
backends:
  teacher: {kind: scripted, responder: "distractor_forge.mock:teacher"}
  validity: {kind: scripted, responder: {factory: "distractor_forge.mock:validity", options: {reject_fraction: 0.2}}}
  ranker: {kind: scripted, responder: {factory: "distractor_forge.mock:ranker", options: {biased_fraction: 0.3}}}
  sft_ranker: {kind: scripted, responder: {factory: "distractor_forge.mock:ranker", options: {salt: sft}}}
  embeddings: {kind: scripted, embedder: "distractor_forge.mock:embedder"}
generators:
  ours: {backend: {kind: scripted, responder: {factory: "distractor_forge.mock:generator", options: {style: ours}}}}
  knn:
    backend: {kind: scripted, responder: {factory: "distractor_forge.mock:generator", options: {style: knn}}}
    prompt_kind: knn-baseline
emit: {dpo_scheme: top-bottom}
eval: {source_x: ours, source_y: knn, setting: B, responses: responses.json}
"""

PIPELINE = [
    ["augment"], ["build-scd"], ["emit-sft"], ["emit-dpo"],
    ["eval", "rank-acc"], ["eval", "consistency"], ["eval", "plausibility"], ["eval", "di"],
    ["eval", "similarity"], ["eval", "validity"],
]


def write_fixture(directory, config=FIXTURE_CONFIG, n_train=3, n_test=3):
    """Three training questions plus held-out test questions, mock backends, student responses."""
    directory.mkdir(parents=True, exist_ok=True)
    split = mock.demo_dataset(n_train=n_train, n_test=n_test)
    write_dataset(split, directory / "data.jsonl", order=[i.id for i in split.train + split.test])
    students = [f"s{i:02d}" for i in range(20)]
    items = [{"question_id": f"q{k}", "distractor_id": f"d{k}{s}", "source": s} for k in range(3)
             for s in ("ours", "knn")]
    selected = [[(7 * i + 3 * j) % 5 < (1 + i // 7) for j in range(len(items))] for i in range(len(students))]
    (directory / "responses.json").write_text(json.dumps({"students": students, "items": items,
                                                           "selected": selected}), encoding="utf-8")
    path = directory / "run.yaml"
    path.write_text(config, encoding="utf-8")
    return path


def run_pipeline(config_path, out, seed=None):
    extra = [] if seed is None else ["--seed", str(seed)]
    for cmd in PIPELINE:
        code = main(cmd + ["--config", str(config_path), "--out", str(out)] + extra)
        assert code == 0, f"{' '.join(cmd)} exited {code}"


def output_digests(out):
    """Digest of every output file named in the manifests (logs excluded)."""
    digests = {}
    for manifest in sorted((out / "manifests").glob("*.json")):
        digests.update(json.loads(manifest.read_text())["outputs"])
    return digests
