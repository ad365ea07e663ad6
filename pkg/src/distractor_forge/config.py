"""YAML run configuration for the ``forge`` command."""

from __future__ import annotations

import hashlib
import importlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .client import AuditLog, BackendConfig, Client, HttpTransport, ScriptedTransport
from .errors import ConfigError
from .generation import GeneratorSource, PromptKind
from .preference import Scheme
from .prompts import RankerVariant
from .ranker import ProtocolConfig
from .tournament import Setting, TournamentSettings


BACKEND_ROLES = ("teacher", "validity", "ranker", "sft_ranker", "embeddings")

_BACKEND_KEYS = {
    "kind", "base_url", "model", "api_key_env", "temperature", "max_attempts", "timeout",
    "request_seed", "backoff_base", "embedding_dim", "script", "responder", "embedder",
}
_TOP_KEYS = {"seed", "dataset", "protocol", "ranker_variant", "backends", "generators", "emit", "eval"}


def _check_keys(section: Mapping, allowed: set[str], where: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    unknown = sorted(set(section) - allowed)
    if unknown:
        hint = " (put secrets in an environment variable named by api_key_env)" if "api_key" in unknown else ""
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}{hint}")


def _import_ref(ref: str, where: str):
    module, _, attr = ref.partition(":")
    if not module or not attr:
        raise ConfigError(f"{where}: expected 'module:function', got {ref!r}")
    try:
        return getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"{where}: cannot import {ref!r}: {exc}") from None


def _factory(spec: Any, where: str):
    """``"mod:fn"`` or ``{factory: "mod:fn", options: {...}}`` -> ``fn(**options)``."""
    if spec is None:
        return None
    if isinstance(spec, str):
        spec = {"factory": spec}
    _check_keys(spec, {"factory", "options"}, where)
    fn = _import_ref(spec.get("factory", ""), where)
    return fn(**(spec.get("options") or {}))


@dataclass
class BackendSpec:
    name: str
    kind: str
    config: BackendConfig
    script: Path | None = None
    responder: Any = None
    embedder: Any = None

    @classmethod
    def parse(cls, name: str, raw: Mapping, base: Path) -> "BackendSpec":
        where = f"backend {name!r}"
        _check_keys(raw, _BACKEND_KEYS, where)
        kind = raw.get("kind")
        if kind not in ("http", "scripted"):
            raise ConfigError(f"{where}: kind must be 'http' or 'scripted'")
        try:
            config = BackendConfig(
                base_url=raw.get("base_url", ""),
                model_name=raw.get("model", "scripted"),
                api_key_env=raw.get("api_key_env"),
                temperature=float(raw.get("temperature", 0.0)),
                max_attempts_per_call=int(raw.get("max_attempts", 3)),
                timeout=float(raw.get("timeout", 60.0)),
                request_seed=raw.get("request_seed"),
                backoff_base=float(raw.get("backoff_base", 0.5)),
                embedding_dim=raw.get("embedding_dim"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        if kind == "http":
            if not config.base_url:
                raise ConfigError(f"{where}: http backends need base_url")
            extra = {"script", "responder", "embedder"} & set(raw)
            if extra:
                raise ConfigError(f"{where}: {', '.join(sorted(extra))} only apply to scripted backends")
            return cls(name, kind, config)
        script = raw.get("script")
        spec = cls(name, kind, config, script=(base / script) if script else None,
                   responder=_factory(raw.get("responder"), f"{where} responder"),
                   embedder=_factory(raw.get("embedder"), f"{where} embedder"))
        if spec.script is None and spec.responder is None and spec.embedder is None:
            raise ConfigError(f"{where}: scripted backends need a script, responder or embedder")
        return spec

    def build(self, audit: AuditLog) -> Client:
        if self.kind == "http":
            return Client(self.config, HttpTransport(), audit=audit)
        if self.script is not None:
            if not self.script.is_file():
                raise ConfigError(f"backend {self.name!r}: script {self.script} not found")
            transport = ScriptedTransport.from_file(self.script, responder=self.responder, embedder=self.embedder)
        else:
            transport = ScriptedTransport(responder=self.responder, embedder=self.embedder)
        return Client(self.config, transport, audit=audit)


@dataclass
class GeneratorSpec:
    name: str
    backend: BackendSpec
    prompt_kind: PromptKind


@dataclass
class EmitSection:
    dpo_scheme: Scheme = Scheme.TOP_BOTTOM
    window_n: int | None = None
    sft_pair_limit: int | None = None


@dataclass
class EvalSection:
    source_x: str | None = None
    source_y: str | None = None
    setting: Setting = Setting.A
    tournament: TournamentSettings = field(default_factory=TournamentSettings)
    pair_limit: int | None = None
    responses: Path | None = None
    cutoff: float = 0.27
    group_cutoff: float = 0.5
    bleu_tokenize: str = "intl"


@dataclass
class RunConfig:
    path: Path
    raw: dict
    seed: int
    dataset: Path
    protocol: ProtocolConfig
    repetitions: int
    variant: RankerVariant
    backends: dict[str, BackendSpec]
    generators: dict[str, GeneratorSpec]
    emit: EmitSection
    eval: EvalSection

    @property
    def sha256(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, ensure_ascii=False, default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def backend(self, role: str) -> BackendSpec:
        try:
            return self.backends[role]
        except KeyError:
            raise ConfigError(f"this command needs a '{role}' backend in the config") from None

    def build_sources(self, audit: AuditLog, knn_pool, names=None) -> dict[str, GeneratorSource]:
        names = list(self.generators) if names is None else names
        embedder = None
        out = {}
        for name in names:
            if name not in self.generators:
                raise ConfigError(f"unknown generator {name!r}")
            spec = self.generators[name]
            if spec.prompt_kind is PromptKind.KNN_BASELINE and embedder is None:
                embedder = self.backend("embeddings").build(audit)
            out[name] = GeneratorSource(name, spec.backend.build(audit), spec.prompt_kind,
                                        knn_pool=knn_pool if spec.prompt_kind is PromptKind.KNN_BASELINE else (),
                                        embedder=embedder if spec.prompt_kind is PromptKind.KNN_BASELINE else None)
        return out


def _int_or_none(value, where):
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{where}: expected an integer")
    return value


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    _check_keys(raw, _TOP_KEYS, "config")
    base = path.parent
    if "dataset" not in raw:
        raise ConfigError("config: 'dataset' path is required")
    seed = raw.get("seed", 0) if seed_override is None else seed_override
    if not isinstance(seed, int):
        raise ConfigError("config: seed must be an integer")

    proto = raw.get("protocol") or {}
    _check_keys(proto, {"temperature", "attempt_cap", "fan_out", "repetitions"}, "protocol")
    try:
        protocol = ProtocolConfig(
            temperature=float(proto.get("temperature", 0.5)),
            attempt_cap=int(proto.get("attempt_cap", 10)),
            rng_seed=seed,
            fan_out=int(proto.get("fan_out", 8)),
        )
        variant = RankerVariant(raw.get("ranker_variant", "reasoning"))
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from None
    repetitions = int(proto.get("repetitions", 1))
    if repetitions < 1:
        raise ConfigError("protocol.repetitions must be >= 1")

    backends_raw = raw.get("backends") or {}
    _check_keys(backends_raw, set(BACKEND_ROLES), "backends")
    backends = {role: BackendSpec.parse(role, spec, base) for role, spec in backends_raw.items()}

    generators = {}
    gens_raw = raw.get("generators") or {}
    _check_keys(gens_raw, set(gens_raw), "generators")
    for name, spec in gens_raw.items():
        _check_keys(spec, {"backend", "prompt_kind"}, f"generator {name!r}")
        try:
            kind = PromptKind(spec.get("prompt_kind", "standard"))
        except ValueError:
            raise ConfigError(f"generator {name!r}: prompt_kind must be 'standard' or 'knn-baseline'") from None
        generators[name] = GeneratorSpec(name, BackendSpec.parse(f"generator:{name}", spec.get("backend") or {}, base),
                                         kind)

    emit_raw = raw.get("emit") or {}
    _check_keys(emit_raw, {"dpo_scheme", "window_n", "sft_pair_limit"}, "emit")
    try:
        emit = EmitSection(Scheme(emit_raw.get("dpo_scheme", "top-bottom")),
                           _int_or_none(emit_raw.get("window_n"), "emit.window_n"),
                           _int_or_none(emit_raw.get("sft_pair_limit"), "emit.sft_pair_limit"))
    except ValueError as exc:
        raise ConfigError(f"emit: {exc}") from None
    if emit.dpo_scheme is Scheme.SLIDING_WINDOW and not emit.window_n:
        raise ConfigError("emit: sliding-window needs window_n")

    ev = raw.get("eval") or {}
    _check_keys(ev, {"source_x", "source_y", "setting", "tournament", "pair_limit", "responses", "cutoff",
                     "group_cutoff", "bleu_tokenize"}, "eval")
    tourn_raw = ev.get("tournament") or {}
    _check_keys(tourn_raw, {"n_a", "n_b", "keep_b", "temperature_b", "max_rounds"}, "eval.tournament")
    try:
        evaluation = EvalSection(
            source_x=ev.get("source_x"),
            source_y=ev.get("source_y"),
            setting=Setting(str(ev.get("setting", "A"))),
            tournament=TournamentSettings(**tourn_raw),
            pair_limit=_int_or_none(ev.get("pair_limit"), "eval.pair_limit"),
            responses=(base / ev["responses"]) if ev.get("responses") else None,
            cutoff=float(ev.get("cutoff", 0.27)),
            group_cutoff=float(ev.get("group_cutoff", 0.5)),
            bleu_tokenize=str(ev.get("bleu_tokenize", "intl")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"eval: {exc}") from None
    for side in (evaluation.source_x, evaluation.source_y):
        if side is not None and side not in generators:
            raise ConfigError(f"eval: unknown generator {side!r}")

    return RunConfig(path, raw, seed, base / raw["dataset"], protocol, repetitions, variant, backends, generators,
                     emit, evaluation)
