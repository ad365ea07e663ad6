"""Run every ``forge`` command against the bundled mock backends.

    python walkthroughs/offline_pipeline.py [output-dir]

Writes a demo dataset, a config and student responses next to the
outputs, then runs augment -> build-scd -> emit-sft -> emit-dpo and all
six eval reports. Nothing leaves the machine.
"""

import json
import sys
import tempfile
from pathlib import Path

from distractor_forge import mock
from distractor_forge.cli import main
from distractor_forge.core import write_dataset

CONFIG = Path(__file__).with_name("mock_run.yaml")

STEPS = [
    ["augment"], ["build-scd"], ["emit-sft"], ["emit-dpo"],
    ["eval", "rank-acc"], ["eval", "consistency"], ["eval", "plausibility"],
    ["eval", "di"], ["eval", "similarity"], ["eval", "validity"],
]


def prepare(work: Path) -> Path:
    split = mock.demo_dataset(n_train=6, n_test=6)
    write_dataset(split, work / "data.jsonl", order=[i.id for i in split.train + split.test])

    # 30 simulated students answering six generated distractors
    students = [f"stu{i:02d}" for i in range(30)]
    items = [{"question_id": f"q{k}", "distractor_id": f"{s}-{k}", "source": s}
             for k in range(3) for s in ("ours", "knn")]
    ability = [i / 29 for i in range(30)]
    selected = [[mock.unit_hash(st, it["distractor_id"]) > 0.35 + 0.5 * a for it in items]
                for st, a in zip(students, ability)]
    (work / "responses.json").write_text(json.dumps({"students": students, "items": items, "selected": selected}))

    config = work / "run.yaml"
    config.write_text(CONFIG.read_text())
    return config


def run(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    config = prepare(out)
    for step in STEPS:
        print(f"\n$ forge {' '.join(step)} --config {config.name} --out .")
        code = main(step + ["--config", str(config), "--out", str(out)])
        if code:
            sys.exit(code)
    print(f"\nartifacts and manifests are under {out}")


if __name__ == "__main__":
    run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="forge-demo-")))
