"""Perturbation modules that turn (claim, document) pairs into labeled triplets.

Each module kind edits either the claim or the document and fixes the label
by construction.  Structural checks encode each kind's contract as
machine-checkable necessary conditions; a failed mandatory check rejects
the output before it can become a triplet.  The judge stage downstream
supplies the semantic screen these checks cannot.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from difflib import SequenceMatcher
from typing import Mapping, Optional, Sequence

from .core import (
    Claim,
    Document,
    FiscalError,
    LabeledTriplet,
    ModuleKind,
    NEGATIVE_KINDS,
    POSITIVE_KINDS,
    murmur3_x64_128,
    normalize_text,
)
from .extraction import canonical_numeric_tokens
from .gateway import ChatRequest, Gateway, SYNTHESIS_TEMPERATURE

SYNTHESIS_SYSTEM = (
    "You are an expert financial writer producing dataset variants. "
    "Reply with the requested text only, no preamble."
)

# Documents below this edit fraction count as minimally edited (advisory).
DEFAULT_EDIT_FRACTION = 0.35

_YEAR_RE = re.compile(r"\b(?:19|20)\d\d\b")
_ENTITY_RE = re.compile(r"\b[A-Z][a-z]{2,}\b")


class RejectedOutput(FiscalError):
    """A mandatory structural check failed for a synthesis output."""

    def __init__(self, kind: ModuleKind, check: "CheckResult") -> None:
        super().__init__(f"{kind.value}: mandatory check {check.name!r} failed")
        self.kind = kind
        self.check = check


class EmptyEdit(FiscalError):
    """The model returned the input verbatim for a document-editing kind."""


class NoKindsEnabled(FiscalError):
    """Planning needs at least one positive and one negative kind enabled."""


@dataclass(frozen=True)
class SynthesisTask:
    claim: Claim
    document: Document
    kind: ModuleKind
    seed: int

    def __post_init__(self) -> None:
        if self.kind is ModuleKind.ORIGINAL:
            raise ValueError("ORIGINAL pairs are emitted directly, not synthesized")
        if self.claim.parent_doc_id != self.document.doc_id:
            raise ValueError(
                f"claim {self.claim.claim_id} belongs to {self.claim.parent_doc_id}, "
                f"not {self.document.doc_id}"
            )


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    mandatory: bool
    detail: str = ""


@dataclass(frozen=True)
class SynthesisOutput:
    triplet: LabeledTriplet
    raw_reply: str
    checks: tuple[CheckResult, ...]


def split_sentences(text: str) -> list[str]:
    """Approximate sentence split on newlines and period boundaries."""
    parts = []
    for chunk in text.splitlines():
        parts.extend(re.split(r"(?<=\.)\s+", chunk))
    return [normalize_text(p) for p in parts if normalize_text(p)]


def is_sentence_subsequence(original: str, edited: str) -> bool:
    """True when every original sentence appears in the edited text, in order."""
    orig = split_sentences(original)
    new = split_sentences(edited)
    it = iter(new)
    return all(sentence in it for sentence in orig)


def _doc_edit_fraction(original: str, edited: str) -> float:
    matcher = SequenceMatcher(
        None, normalize_text(original), normalize_text(edited), autojunk=False
    )
    return 1.0 - matcher.ratio()


def structural_checks(
    kind: ModuleKind,
    task: SynthesisTask,
    output_claim: str,
    output_document: str,
    edit_fraction: float = DEFAULT_EDIT_FRACTION,
) -> list[CheckResult]:
    """Necessary conditions for each kind's contract, evaluated offline."""
    in_claim = task.claim.text
    in_doc = task.document.text
    claim_unchanged = normalize_text(output_claim) == normalize_text(in_claim)
    doc_unchanged = normalize_text(output_document) == normalize_text(in_doc)
    claim_tokens = canonical_numeric_tokens(in_claim)
    out_doc_tokens = canonical_numeric_tokens(output_document)

    checks: list[CheckResult] = []

    if kind is ModuleKind.PARAPHRASE:
        checks.append(CheckResult("document-unchanged", doc_unchanged, True))
        checks.append(CheckResult("claim-changed", not claim_unchanged, True))
        missing = claim_tokens - canonical_numeric_tokens(output_claim)
        checks.append(
            CheckResult(
                "claim-numerals-preserved",
                not missing,
                True,
                detail=f"missing {sorted(missing)}" if missing else "",
            )
        )
    elif kind is ModuleKind.SUMMARIZATION:
        shorter = len(normalize_text(output_document)) < len(normalize_text(in_doc))
        checks.append(CheckResult("document-shorter", shorter, True))
        checks.append(CheckResult("claim-unchanged", claim_unchanged, True))
    elif kind is ModuleKind.CONFLICT_INSERTION:
        checks.append(
            CheckResult(
                "insertions-only",
                is_sentence_subsequence(in_doc, output_document),
                True,
            )
        )
    elif kind is ModuleKind.FACT_EXCLUSION:
        leaked = claim_tokens & out_doc_tokens
        checks.append(
            CheckResult(
                "claim-numerals-absent",
                not leaked,
                True,
                detail=f"still present {sorted(leaked)}" if leaked else "",
            )
        )
    elif kind is ModuleKind.VALUE_DISTORTION:
        checks.append(CheckResult("claim-unchanged", claim_unchanged, True))
        altered = canonical_numeric_tokens(in_doc) != out_doc_tokens
        checks.append(CheckResult("evidence-numerals-altered", altered, True))
        fraction = _doc_edit_fraction(in_doc, output_document)
        checks.append(
            CheckResult(
                "edit-fraction-small",
                fraction <= edit_fraction,
                False,
                detail=f"fraction {fraction:.3f}",
            )
        )
    elif kind is ModuleKind.MISATTRIBUTION:
        checks.append(CheckResult("claim-unchanged", claim_unchanged, True))
        values_kept = not (claim_tokens - out_doc_tokens)
        years_changed = set(_YEAR_RE.findall(in_doc)) != set(
            _YEAR_RE.findall(output_document)
        )
        entities_changed = set(_ENTITY_RE.findall(in_doc)) != set(
            _ENTITY_RE.findall(output_document)
        )
        checks.append(
            CheckResult(
                "attribution-reassigned",
                values_kept and (years_changed or entities_changed),
                False,
                detail=f"values_kept={values_kept} years_changed={years_changed} "
                f"entities_changed={entities_changed}",
            )
        )
    else:
        raise ValueError(f"no structural checks defined for {kind}")

    return checks


def apply_module(
    task: SynthesisTask,
    backend: Gateway,
    templates: Mapping[str, str],
    temperature: float = SYNTHESIS_TEMPERATURE,
    edit_fraction: float = DEFAULT_EDIT_FRACTION,
) -> SynthesisOutput:
    """Run one task through its kind-specific prompt and structural checks.

    PARAPHRASE rewrites the claim and leaves the document byte-identical;
    every other kind rewrites the document and leaves the claim untouched.
    """
    template = templates[task.kind.value]
    user = template.replace("{claim}", task.claim.text).replace(
        "{document}", task.document.text
    )
    resp = backend.chat(
        ChatRequest(
            system=SYNTHESIS_SYSTEM,
            user=user,
            temperature=temperature,
            max_tokens=2048,
        )
    )
    reply = resp.text.strip()

    if task.kind is ModuleKind.PARAPHRASE:
        output_claim, output_document = normalize_text(reply), task.document.text
    else:
        output_claim, output_document = task.claim.text, reply
        if normalize_text(reply) == normalize_text(task.document.text):
            raise EmptyEdit(
                f"{task.kind.value} returned the document verbatim for claim "
                f"{task.claim.claim_id}"
            )

    checks = structural_checks(
        task.kind, task, output_claim, output_document, edit_fraction=edit_fraction
    )
    for check in checks:
        if check.mandatory and not check.passed:
            raise RejectedOutput(task.kind, check)

    triplet = LabeledTriplet.build(
        claim=output_claim,
        document=output_document,
        provenance=task.kind,
        parent_doc_id=task.document.doc_id,
        parent_claim_id=task.claim.claim_id,
    )
    return SynthesisOutput(triplet=triplet, raw_reply=resp.text, checks=tuple(checks))


def original_triplet(claim: Claim, document: Document) -> LabeledTriplet:
    """The unperturbed positive pair for a claim (no model call)."""
    return LabeledTriplet.build(
        claim=claim.text,
        document=document.text,
        provenance=ModuleKind.ORIGINAL,
        parent_doc_id=document.doc_id,
        parent_claim_id=claim.claim_id,
    )


@dataclass(frozen=True)
class SynthesisPlan:
    """Which kinds are enabled and how heavily each is used."""

    enabled: tuple[ModuleKind, ...] = POSITIVE_KINDS + NEGATIVE_KINDS
    weights: Optional[Mapping[ModuleKind, int]] = None
    seed: int = 0

    def weight(self, kind: ModuleKind) -> int:
        if self.weights is None:
            return 1
        return int(self.weights.get(kind, 1))


def _task_seed(claim_id: str, kind: ModuleKind) -> int:
    digest = murmur3_x64_128(f"{claim_id}:{kind.value}".encode("utf-8"))
    return int.from_bytes(digest[:4], "little")


def plan_synthesis(
    claims: Sequence[Claim],
    documents: Mapping[str, Document],
    plan: SynthesisPlan,
) -> list[SynthesisTask]:
    """One positive-kind and one negative-kind task per claim.

    Kinds round-robin over the enabled set, each repeated by its weight; the
    seed rotates the starting offset so different runs sample different
    kind-claim pairings while staying fully deterministic.
    """
    pos_cycle = [
        k for k in POSITIVE_KINDS if k in plan.enabled for _ in range(plan.weight(k))
    ]
    neg_cycle = [
        k for k in NEGATIVE_KINDS if k in plan.enabled for _ in range(plan.weight(k))
    ]
    if not pos_cycle or not neg_cycle:
        raise NoKindsEnabled(
            f"need at least one positive and one negative kind enabled, got "
            f"{[k.value for k in plan.enabled]}"
        )

    tasks = []
    ordered = sorted(claims, key=lambda c: c.claim_id)
    for i, claim in enumerate(ordered):
        document = documents[claim.parent_doc_id]
        pos_kind = pos_cycle[(i + plan.seed) % len(pos_cycle)]
        neg_kind = neg_cycle[(i + plan.seed) % len(neg_cycle)]
        for kind in (pos_kind, neg_kind):
            tasks.append(
                SynthesisTask(
                    claim=claim,
                    document=document,
                    kind=kind,
                    seed=_task_seed(claim.claim_id, kind),
                )
            )
    return tasks
