"""How the AB/BA protocol handles a judge with positional bias.

    python walkthroughs/order_swap.py

Three scripted judges rank the same pair: one that reads the texts, one
that always answers "A", and one that only settles down on its third try.
"""

from itertools import count

from distractor_forge import ProtocolConfig, judge_pair
from distractor_forge.client import BackendConfig, Client, ScriptedTransport
from distractor_forge.core import Distractor, Kind, McqItem, Polarity


def client(responder):
    return Client(BackendConfig(), ScriptedTransport(responder=responder))


def choice(token):
    return f"### Review: weighing both options.\n### Choice: {token}"


item = McqItem(
    "demo", "Python", Kind.CODE, Polarity.ASKING_CORRECT,
    "What does len([1, [2, 3]]) return?", "2",
    (Distractor("3", selection_rate=0.41), Distractor("1", selection_rate=0.07)),
)
high, low = item.distractors


def content_judge(prompt, temperature):
    # prefers whichever slot holds "3"
    return choice("A" if "[Distractor A] 3" in prompt else "B")


def slow_judge():
    calls = count()
    return lambda prompt, temperature: choice("A") if next(calls) < 4 else content_judge(prompt, temperature)


for label, responder in (("content", content_judge), ("always-A", lambda p, t: choice("A")),
                         ("settles late", slow_judge())):
    j = judge_pair(item, high, low, "reasoning", client(responder), ProtocolConfig(rng_seed=1))
    print(f"{label:>12}: winner={j.winner.text!r} attempts={j.attempts} resolved_by={j.resolved_by.value}")

print("\nthe always-A judge's winner depends only on the seed:")
for seed in range(5):
    j = judge_pair(item, high, low, "reasoning", client(lambda p, t: choice("A")), ProtocolConfig(rng_seed=seed))
    print(f"  seed {seed}: {j.winner.text!r}")
