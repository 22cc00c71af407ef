"""Run configuration: one YAML file driving every pipeline stage.

Secrets never live in config; LIVE backends name an environment variable
(defaulting to FISCAL_API_KEY_<ROLE>) that holds the bearer token.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .core import FiscalError, ModuleKind, SYNTHESIS_KINDS, stable_config_hash
from .gateway import BackendKind, BackendSpec, RetryPolicy, load_mock_script
from .assembly import PromptTemplate, SplitPlan
from .synthesis import DEFAULT_EDIT_FRACTION, SynthesisPlan

TEMPLATE_NAMES = (
    "extraction",
    "atomicity",
    "paraphrase",
    "conflict_insertion",
    "fact_exclusion",
    "value_distortion",
    "misattribution",
    "summarization",
    "triplet_judge",
)


class ConfigError(FiscalError):
    """The configuration file is missing something or inconsistent."""


def _default_templates_dir() -> Path:
    return Path(importlib.resources.files("fiscal") / "templates")


@dataclass(frozen=True)
class RunConfig:
    corpus: Path
    out_dir: Path
    templates_dir: Path
    extraction_backend: BackendSpec
    synthesis_backends: Mapping[ModuleKind, BackendSpec]
    judges: tuple[BackendSpec, ...]
    verifier_backend: BackendSpec
    split: SplitPlan
    synthesis_plan: SynthesisPlan
    tau: float = 0.5
    seed: int = 0
    include_original: bool = True
    edit_fraction: float = DEFAULT_EDIT_FRACTION
    balance_tolerance: float = 0.05
    config_hash: str = ""
    raw: Mapping = field(default_factory=dict)

    def template_text(self, name: str) -> str:
        path = self.templates_dir / f"{name}.txt"
        return path.read_text(encoding="utf-8")

    def synthesis_templates(self) -> dict[str, str]:
        return {kind.value: self.template_text(kind.value) for kind in SYNTHESIS_KINDS}

    def verifier_template(self) -> PromptTemplate:
        return PromptTemplate.from_file(self.templates_dir / "verifier.json")

    def template_versions(self) -> dict[str, str]:
        from .core import stable_digest

        versions = {}
        for name in TEMPLATE_NAMES:
            path = self.templates_dir / f"{name}.txt"
            versions[name] = stable_digest(path.read_text(encoding="utf-8"))[:12]
        verifier = self.templates_dir / "verifier.json"
        versions["verifier"] = stable_digest(verifier.read_text(encoding="utf-8"))[:12]
        return versions


def _require(mapping: Mapping, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing {key!r} in {context}")
    return mapping[key]


def _build_backend(role: str, data: Mapping, base_dir: Path) -> BackendSpec:
    kind_tag = str(_require(data, "kind", f"backends.{role}")).lower()
    try:
        kind = BackendKind(kind_tag)
    except ValueError:
        raise ConfigError(
            f"backends.{role}.kind must be 'live' or 'mock', got {kind_tag!r}"
        ) from None
    retry_data = data.get("retry", {})
    retry = RetryPolicy(
        max_attempts=int(retry_data.get("max_attempts", 4)),
        base_backoff=float(retry_data.get("base_backoff", 0.5)),
    )
    common = {
        "model_name": _require(data, "model_name", f"backends.{role}"),
        "max_in_flight": int(data.get("max_in_flight", 4)),
        "retry": retry,
        "timeout": float(data.get("timeout", 60.0)),
    }
    if kind is BackendKind.MOCK:
        script_path = base_dir / _require(data, "script", f"backends.{role}")
        if not script_path.exists():
            raise ConfigError(f"mock script {script_path} does not exist")
        return BackendSpec(
            kind=kind, script=load_mock_script(script_path), **common
        )
    auth_env = data.get("auth") or f"FISCAL_API_KEY_{role.upper()}"
    return BackendSpec(
        kind=kind,
        base_url=_require(data, "base_url", f"backends.{role}"),
        auth_env=auth_env,
        **common,
    )


def load_config(path: str | Path, overrides: Optional[Mapping] = None) -> RunConfig:
    """Parse, override, and validate a run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if overrides:
        data = _apply_overrides(data, overrides)
    base_dir = path.parent

    corpus = base_dir / _require(data, "corpus", "config")
    if not corpus.exists():
        raise ConfigError(f"corpus file {corpus} does not exist")

    templates_value = data.get("templates_dir")
    templates_dir = (
        base_dir / templates_value if templates_value else _default_templates_dir()
    )
    if not templates_dir.is_dir():
        raise ConfigError(f"templates directory {templates_dir} does not exist")

    backends = _require(data, "backends", "config")
    extraction = _build_backend(
        "extraction", _require(backends, "extraction", "backends"), base_dir
    )
    judges_data = _require(backends, "judges", "backends")
    if len(judges_data) < 2:
        raise ConfigError(f"need at least 2 judges, got {len(judges_data)}")
    judges = tuple(
        _build_backend(f"judge_{i}", j, base_dir) for i, j in enumerate(judges_data)
    )
    if len({j.model_name for j in judges}) < 2:
        raise ConfigError("judges must have distinct model names")
    verifier = _build_backend(
        "verifier", _require(backends, "verifier", "backends"), base_dir
    )

    synth_default = _build_backend(
        "synthesis", _require(backends, "synthesis", "backends"), base_dir
    )
    synthesis_backends = {kind: synth_default for kind in SYNTHESIS_KINDS}
    for tag, spec_data in (backends.get("synthesis_per_kind") or {}).items():
        kind = ModuleKind.from_tag(tag)
        synthesis_backends[kind] = _build_backend(
            f"synthesis.{tag}", spec_data, base_dir
        )

    modules = data.get("modules", {})
    enabled = []
    weights = {}
    for kind in SYNTHESIS_KINDS:
        entry = modules.get(kind.value, {})
        if entry.get("enabled", True):
            enabled.append(kind)
        weights[kind] = int(entry.get("weight", 1))
    if not enabled:
        raise ConfigError("all synthesis modules are disabled")

    seed = int(data.get("seed", 0))
    split_data = data.get("split", {})
    split = SplitPlan(
        ratios=(
            float(split_data.get("train", 0.8)),
            float(split_data.get("eval", 0.1)),
            float(split_data.get("test", 0.1)),
        ),
        seed=int(split_data.get("seed", seed)),
        test_docs_unseen=bool(split_data.get("test_docs_unseen", True)),
    )

    out_dir = base_dir / data.get("out_dir", "out")
    # The output location is not part of the dataset's identity.
    hashed = {k: v for k, v in data.items() if k != "out_dir"}
    config_hash = stable_config_hash(hashed)

    return RunConfig(
        corpus=corpus,
        out_dir=out_dir,
        templates_dir=templates_dir,
        extraction_backend=extraction,
        synthesis_backends=synthesis_backends,
        judges=judges,
        verifier_backend=verifier,
        split=split,
        synthesis_plan=SynthesisPlan(
            enabled=tuple(enabled), weights=weights, seed=seed
        ),
        tau=float(data.get("tau", 0.5)),
        seed=seed,
        include_original=bool(data.get("include_original", True)),
        edit_fraction=float(data.get("edit_fraction", DEFAULT_EDIT_FRACTION)),
        balance_tolerance=float(data.get("balance_tolerance", 0.05)),
        config_hash=config_hash,
        raw=data,
    )


def _apply_overrides(data: dict, overrides: Mapping) -> dict:
    """Deep-merge dotted override keys (e.g. 'split.seed') into the config."""
    import copy

    merged = copy.deepcopy(data)
    for dotted, value in overrides.items():
        node = merged
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return merged
