"""``forge``: run pipeline stages from a YAML config.

    forge augment    --config run.yaml --out runs/a
    forge build-scd  --config run.yaml --out runs/a
    forge emit-sft   --config run.yaml --out runs/a
    forge emit-dpo   --config run.yaml --out runs/a
    forge eval rank-acc|consistency|plausibility|di|similarity|validity --config run.yaml --out runs/a

Every command writes its outputs atomically under ``--out`` plus a
manifest in ``<out>/manifests/``. Model call logs and replay scripts go to
``<out>/logs/<command>/``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from statistics import fmean, pvariance
from typing import Callable, Iterable

from . import jsonl
from .bleu import sentence_bleu_smoothed
from .client import AuditLog, Client, ScriptedTransport, fan_out
from .config import ConfigError, RunConfig, load_config
from .core import DatasetSplit, derive_ground_truth_pairs, items_by_id, load_dataset, sample_pairs
from .discrimination import StudentResponseMatrix, discrimination_index, group_selection_counts
from .errors import ForgeError, ProtocolError, TransportError
from .generation import generate_distractors, validity_rate
from .manifest import RunManifest, atomic_write, check_upstream, file_digest, manifest_path, now
from .preference import (
    SftRecord,
    emit_generator_dpo,
    emit_generator_sft,
    emit_ranker_dpo,
    emit_ranker_sft,
)
from .prompts import template_hashes
from .ranker import consistency_metric, rank_accuracy
from .scd import AugmentationResult, RankedDistractorList, augment_distractors, build_ranked_list, excluded_list
from .scd import top3_synthetic_share
from .seeding import derive_rng
from .similarity import embedding_similarity_report
from .tournament import plausibility_tournament

logger = logging.getLogger("distractor_forge")

AUGMENTATION = "augmentation.jsonl"
SCD = "scd.jsonl"
SCD_JUDGMENTS = "scd_judgments.jsonl"
RANKER_SFT = "ranker_sft.jsonl"
GENERATOR_SFT = "generator_sft.jsonl"
RANKER_DPO = "ranker_dpo.jsonl"
GENERATOR_DPO = "generator_dpo.jsonl"

EVAL_KINDS = ("rank-acc", "consistency", "plausibility", "di", "similarity", "validity")


def _jsonl_text(records: Iterable[dict]) -> str:
    return "".join(jsonl.dumps(r) + "\n" for r in records)


def _json_text(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


class Run:
    """One command invocation: clients, inputs read, outputs staged in memory."""

    def __init__(self, cfg: RunConfig, command: str, out: Path) -> None:
        self.cfg = cfg
        self.command = command
        self.out = out.resolve()
        self.audits: dict[str, AuditLog] = {}
        self.models: dict[str, str] = {}
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.started = now()
        self._dataset: DatasetSplit | None = None

    def audit(self, role: str) -> AuditLog:
        return self.audits.setdefault(role, AuditLog())

    def client(self, role: str) -> Client:
        spec = self.cfg.backend(role)
        self.models[role] = spec.config.model_name
        return spec.build(self.audit(role))

    def sources(self, names):
        pool = self.dataset().train
        result = {}
        for name in names:
            built = self.cfg.build_sources(self.audit(f"generator-{name}"), pool, [name])[name]
            self.models[f"generator-{name}"] = self.cfg.generators[name].backend.config.model_name
            if built.embedder is not None:
                self.models["embeddings"] = self.cfg.backend("embeddings").config.model_name
            result[name] = built
        return result

    def dataset(self) -> DatasetSplit:
        if self._dataset is None:
            self._dataset = load_dataset(self.cfg.dataset)
            self.inputs["dataset"] = file_digest(self.cfg.dataset)
        return self._dataset

    def upstream(self, rel: str, command: str) -> list[dict]:
        path = self.out / rel
        if not path.is_file():
            raise ConfigError(f"{path} not found; run 'forge {command}' first")
        self.dataset()
        check_upstream(self.out, command, rel, self.inputs["dataset"])
        self.inputs[rel] = file_digest(path)
        return jsonl.read_jsonl(path)

    def put(self, rel: str, text: str) -> None:
        target = (self.out / rel).resolve()
        if self.out not in target.parents:
            raise ForgeError(f"refusing to write outside the output directory: {rel}")
        self.outputs[rel] = text

    def commit(self) -> RunManifest:
        manifest = RunManifest(
            command=self.command,
            config_sha256=self.cfg.sha256,
            template_sha256=template_hashes(),
            rng_seed=self.cfg.seed,
            models=dict(sorted(self.models.items())),
            inputs=dict(self.inputs),
            started_at=self.started,
        )
        for rel, text in self.outputs.items():
            atomic_write(self.out / rel, text)
            manifest.outputs[rel] = file_digest(self.out / rel)
        log_dir = Path("logs") / self.command.replace(" ", "_")
        for role, audit in sorted(self.audits.items()):
            if not len(audit):
                continue
            entries = audit.entries()
            for rel, text in (
                (log_dir / f"{role}.calls.jsonl", _jsonl_text(e.to_record() for e in entries)),
                (log_dir / f"{role}.replay.json", _json_text(ScriptedTransport.record(entries))),
            ):
                atomic_write(self.out / rel, text)
                manifest.logs[str(rel)] = file_digest(self.out / rel)
        manifest.finished_at = now()
        atomic_write(manifest_path(self.out, self.command), _json_text(manifest.to_record()))
        return manifest


# --------------------------------------------------------------------------
# commands


def cmd_augment(run: Run) -> None:
    cfg = run.cfg
    train = run.dataset().train
    teacher = run.client("teacher")
    validity = run.client("validity") if "validity" in cfg.backends else teacher
    results = fan_out(lambda item: augment_distractors(item, teacher, validity, cfg.protocol), train,
                      cfg.protocol.fan_out)
    run.put(AUGMENTATION, _jsonl_text(r.to_record() for r in results))
    kept = sum(len(r.accepted) for r in results)
    excluded = sum(r.excluded for r in results)
    print(f"augmented {len(results)} items: {kept} synthetic distractors kept, {excluded} items excluded")


def cmd_build_scd(run: Run) -> None:
    cfg = run.cfg
    train = run.dataset().train
    augmented = {r["item_id"]: AugmentationResult.from_record(r) for r in run.upstream(AUGMENTATION, "augment")}
    ranker = run.client("ranker")

    def one(item) -> RankedDistractorList:
        aug = augmented.get(item.id)
        if aug is None:
            return excluded_list(item.id, "not-augmented")
        if aug.excluded:
            return excluded_list(item.id, aug.exclusion_reason or "excluded")
        return build_ranked_list(item, aug.accepted, cfg.variant, ranker, cfg.protocol)

    lists = fan_out(one, train, cfg.protocol.fan_out)
    run.put(SCD, _jsonl_text(lst.to_record() for lst in lists))
    run.put(SCD_JUDGMENTS, _jsonl_text(j.to_record() for lst in lists for j in lst.judgments))
    usable = [lst for lst in lists if not lst.excluded]
    share = top3_synthetic_share(usable) if usable else float("nan")
    print(f"ranked {len(usable)} items ({len(lists) - len(usable)} excluded); "
          f"mean synthetic entries in top 3: {share:.2f}")


def _scd_lists(run: Run) -> list[RankedDistractorList]:
    return [RankedDistractorList.from_record(r) for r in run.upstream(SCD, "build-scd")]


def cmd_emit_sft(run: Run) -> None:
    cfg = run.cfg
    split = run.dataset()
    lists = _scd_lists(run)
    teacher = run.client("teacher")
    pairs = [p for item in split.train for p in derive_ground_truth_pairs(item)]
    pairs = sample_pairs(pairs, cfg.emit.sft_pair_limit, derive_rng(cfg.seed, "sft-pairs"))
    ranker_records = emit_ranker_sft(split.train, teacher, cfg.protocol, pairs)
    generator_records = emit_generator_sft(lists, items_by_id(split.train))
    run.put(RANKER_SFT, _jsonl_text(r.to_record() for r in ranker_records))
    run.put(GENERATOR_SFT, _jsonl_text(r.to_record() for r in generator_records))
    print(f"ranker SFT: {len(ranker_records)} records from {len(pairs)} pairs; "
          f"generator SFT: {len(generator_records)} records")


def cmd_emit_dpo(run: Run) -> None:
    cfg = run.cfg
    split = run.dataset()
    sft = [SftRecord.from_record(r) for r in run.upstream(RANKER_SFT, "emit-sft")]
    lists = _scd_lists(run)
    ranker_records = emit_ranker_dpo(sft, run.client("sft_ranker"), cfg.protocol)
    generator_records = emit_generator_dpo(lists, items_by_id(split.train), cfg.emit.dpo_scheme, cfg.emit.window_n)
    run.put(RANKER_DPO, _jsonl_text(r.to_record() for r in ranker_records))
    run.put(GENERATOR_DPO, _jsonl_text(r.to_record() for r in generator_records))
    print(f"ranker DPO: {len(ranker_records)} records; generator DPO ({cfg.emit.dpo_scheme.value}): "
          f"{len(generator_records)} records")


def _table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[f"{c:.3f}" if isinstance(c, float) else str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _test_pairs(run: Run):
    cfg = run.cfg
    test = run.dataset().test
    pairs = [p for item in test for p in derive_ground_truth_pairs(item)]
    return sample_pairs(pairs, cfg.eval.pair_limit, derive_rng(cfg.seed, "eval-pairs")), items_by_id(test)


def eval_rank_acc(run: Run) -> None:
    cfg = run.cfg
    pairs, items = _test_pairs(run)
    report = rank_accuracy(pairs, items, cfg.variant, run.client("ranker"), cfg.protocol, cfg.repetitions)
    run.put("eval/rank_acc.json", _json_text(report.to_record() | {"variant": cfg.variant.value,
                                                                      "pairs": len(pairs)}))
    run.put("eval/rank_acc_judgments.jsonl",
            _jsonl_text(j.to_record() | {"repetition": r} for r, js in enumerate(report.judgments) for j in js))
    subjects = list(report.per_subject)
    print(_table(["variant"] + subjects + ["Avg", "pooled"],
                 [[cfg.variant.value] + [report.per_subject[s] for s in subjects]
                  + [report.subject_mean, report.overall]]))


def eval_consistency(run: Run) -> None:
    cfg = run.cfg
    pairs, items = _test_pairs(run)
    report = rank_accuracy(pairs, items, cfg.variant, run.client("ranker"), cfg.protocol, 1)
    judgments = report.judgments[0]
    cons = consistency_metric(judgments, items)
    fallbacks = sum(j.resolved_by.value == "random-fallback" for j in judgments)
    run.put("eval/consistency.json", _json_text(cons.to_record() | {"variant": cfg.variant.value,
                                                                      "random_fallbacks": fallbacks}))
    run.put("eval/consistency_judgments.jsonl", _jsonl_text(j.to_record() for j in judgments))
    subjects = list(cons.per_subject)
    print(_table(["variant"] + subjects + ["Avg"],
                 [[cfg.variant.value] + [cons.per_subject[s] for s in subjects] + [cons.subject_mean]]))


def _pair_names(cfg: RunConfig) -> tuple[str, str]:
    if cfg.eval.source_x is None or cfg.eval.source_y is None:
        raise ConfigError("eval.source_x and eval.source_y must name two generators")
    return cfg.eval.source_x, cfg.eval.source_y


def eval_plausibility(run: Run) -> None:
    cfg = run.cfg
    x_name, y_name = _pair_names(cfg)
    test = run.dataset().test
    sources = run.sources([x_name, y_name])
    validity = run.client("validity")
    report = plausibility_tournament(
        sources[x_name], sources[y_name], test, cfg.eval.setting, cfg.variant, run.client("ranker"),
        cfg.protocol, validity=validity, settings=cfg.eval.tournament, repetitions=cfg.repetitions,
    )
    tag = cfg.eval.setting.value
    run.put(f"eval/plausibility_{tag}.json", _json_text(report.to_record()))
    run.put(f"eval/plausibility_{tag}_questions.jsonl",
            _jsonl_text(q.to_record() | {"repetition": r} for r, qs in enumerate(report.questions) for q in qs))
    rows = [[s, t.wins_x, t.wins_y, t.q_win_x, t.q_tie, t.q_win_y] for s, t in report.per_subject.items()]
    rows.append(["total", report.total.wins_x, report.total.wins_y, report.total.q_win_x, report.total.q_tie,
                 report.total.q_win_y])
    print(f"Setting {tag}: {x_name} (x) vs {y_name} (y)")
    print(_table(["subject", "wins x", "wins y", "q win x", "q tie", "q win y"], rows))
    if report.skipped:
        print(f"skipped questions: {len(report.skipped)}")


def eval_di(run: Run) -> None:
    cfg = run.cfg
    path = cfg.eval.responses
    if path is None or not path.is_file():
        raise ConfigError("eval.responses must point to a student response file")
    run.inputs["responses"] = file_digest(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    try:
        matrix = StudentResponseMatrix.from_selections(
            data["students"],
            [(it["question_id"], it["distractor_id"], it["source"]) for it in data["items"]],
            data["selected"],
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: malformed response file ({exc})") from None
    di = discrimination_index(matrix, cfg.eval.cutoff)
    groups = group_selection_counts(matrix, cfg.eval.group_cutoff)
    run.put("eval/di.json", _json_text({"cutoff": cfg.eval.cutoff, "di": di.to_record(),
                                        "group_cutoff": cfg.eval.group_cutoff, "groups": groups.to_record()}))
    rows = [[s, di.per_source[s], groups.per_source[s]["upper"], groups.per_source[s]["lower"]]
            for s in di.per_source]
    print(_table(["source", "DI", "picked (top)", "picked (low)"], rows))


def _generate_outputs(run: Run, validate: bool) -> dict[str, dict[str, list[str]]]:
    cfg = run.cfg
    test = run.dataset().test
    sources = run.sources(list(cfg.generators))
    validity = run.client("validity") if validate else None
    outputs: dict[str, dict[str, list[str]]] = {}
    records = []
    for name, source in sources.items():
        results = fan_out(
            lambda item: generate_distractors(source, item, cfg.eval.tournament.n_a, validity=validity,
                                              cfg=cfg.protocol, max_rounds=cfg.eval.tournament.max_rounds),
            test, cfg.protocol.fan_out,
        )
        outputs[name] = {r.item_id: r.texts for r in results if r.texts}
        records.extend(r.to_record() for r in results)
    run.put(f"eval/generations_{'validated' if validate else 'raw'}.jsonl", _jsonl_text(records))
    return outputs


def eval_similarity(run: Run) -> None:
    cfg = run.cfg
    items = items_by_id(run.dataset().test)
    outputs = _generate_outputs(run, validate=True)
    embedder = run.client("embeddings")
    cos = embedding_similarity_report(outputs, items, embedder)
    bleu: dict[str, dict[str, dict]] = {}
    for source in sorted(outputs):
        by_subject: dict[str, list[float]] = defaultdict(list)
        for item_id, texts in outputs[source].items():
            refs = [d.text for d in items[item_id].human_distractors]
            for text in texts:
                # best match against any human distractor
                by_subject[items[item_id].subject].append(
                    max(sentence_bleu_smoothed(text, ref, cfg.eval.bleu_tokenize) for ref in refs))
        bleu[source] = {s: {"mean": fmean(v), "variance": pvariance(v), "count": len(v)}
                        for s, v in sorted(by_subject.items())}
    record = {
        "cosine_answer_distractor": {s: {subj: mv.to_record() for subj, mv in per.items()} for s, per in cos.items()},
        "sbleu_vs_human": bleu,
        "bleu_tokenize": cfg.eval.bleu_tokenize,
    }
    run.put("eval/similarity.json", _json_text(record))
    rows = []
    for source in sorted(outputs):
        for subj, mv in cos[source].items():
            b = bleu[source][subj]
            rows.append([source, subj, b["mean"], mv.mean, f"({mv.variance:.4f})"])
    print(_table(["source", "subject", "sBLEU", "cosine", "(var)"], rows))


def eval_validity(run: Run) -> None:
    cfg = run.cfg
    items = items_by_id(run.dataset().test)
    outputs = _generate_outputs(run, validate=False)
    report = validity_rate(outputs, items, run.client("validity"), cfg.protocol)
    record = {s: {p: {k: {"rate": c.rate, "valid": c.valid, "total": c.total} for k, c in per_kind.items()}
                  for p, per_kind in cells.items()} for s, cells in report.items()}
    run.put("eval/validity.json", _json_text(record))
    rows = []
    for source, cells in report.items():
        for polarity, per_kind in cells.items():
            for kind, cell in per_kind.items():
                rows.append([source, polarity, kind, cell.rate, f"{cell.valid}/{cell.total}"])
    print(_table(["source", "polarity", "kind", "rate", "count"], rows))


COMMANDS: dict[str, Callable[[Run], None]] = {
    "augment": cmd_augment,
    "build-scd": cmd_build_scd,
    "emit-sft": cmd_emit_sft,
    "emit-dpo": cmd_emit_dpo,
    "eval rank-acc": eval_rank_acc,
    "eval consistency": eval_consistency,
    "eval plausibility": eval_plausibility,
    "eval di": eval_di,
    "eval similarity": eval_similarity,
    "eval validity": eval_validity,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", required=True, type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="forge", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("augment", "build-scd", "emit-sft", "emit-dpo"):
        sub.add_parser(name, parents=[common])
    ev = sub.add_parser("eval", help="evaluation reports")
    kinds = ev.add_subparsers(dest="kind", required=True)
    for kind in EVAL_KINDS:
        kinds.add_parser(kind, parents=[common])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command if args.command != "eval" else f"eval {args.kind}"
    try:
        cfg = load_config(args.config, args.seed)
        run = Run(cfg, command, args.out)
        COMMANDS[command](run)
        run.commit()
    except (TransportError, ProtocolError) as exc:
        print(f"forge {command}: endpoint failure: {exc}", file=sys.stderr)
        return 1
    except (ForgeError, ValueError, KeyError) as exc:
        print(f"forge {command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
