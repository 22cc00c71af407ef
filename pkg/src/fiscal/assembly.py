"""Dataset assembly: dedup, leakage-free splits, ablation variants, emission.

All operations are pure, single-pass functions of (input, seed), so a
dataset is reproducible from its manifest.  Splitting assigns whole
document groups, which is what keeps test documents unseen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .core import (
    FiscalError,
    HASH_ALGORITHM,
    HASH_SEED,
    Label,
    LabeledTriplet,
    ModuleKind,
)

SPLIT_NAMES = ("train", "eval", "test")

DEFAULT_BALANCE_TOLERANCE = 0.05
DEFAULT_GROUP_SLACK = 0.1


class InfeasibleRatios(FiscalError):
    """A document group cannot fit any split within the allowed slack."""


class SlotMissing(FiscalError):
    """A prompt template body lacks a required slot."""


@dataclass(frozen=True)
class SplitPlan:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    test_docs_unseen: bool = True

    def __post_init__(self) -> None:
        if len(self.ratios) != len(SPLIT_NAMES):
            raise ValueError(f"need {len(SPLIT_NAMES)} ratios, got {self.ratios}")
        if any(r < 0 for r in self.ratios):
            raise ValueError(f"ratios must be >= 0, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))


@dataclass(frozen=True)
class PromptTemplate:
    """The fixed verifier prompt: system instruction plus a claim/document
    body, with the single-token answers it trains toward."""

    system_instruction: str
    body_format: str
    target_tokens: tuple[str, str] = ("yes", "no")

    def __post_init__(self) -> None:
        for slot in ("{claim}", "{document}"):
            if self.body_format.count(slot) != 1:
                raise SlotMissing(
                    f"body_format must contain {slot} exactly once, "
                    f"found {self.body_format.count(slot)}"
                )

    def render_body(self, claim: str, document: str) -> str:
        return self.body_format.replace("{claim}", claim).replace(
            "{document}", document
        )

    def render_prompt(self, claim: str, document: str) -> str:
        return f"{self.system_instruction}\n\n{self.render_body(claim, document)}"

    def target_for(self, label: Label) -> str:
        positive, negative = self.target_tokens
        return positive if label is Label.SUPPORTED else negative

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        targets = data.get("target_tokens", {"positive": "yes", "negative": "no"})
        return cls(
            system_instruction=data["system_instruction"],
            body_format=data["body_format"],
            target_tokens=(targets["positive"], targets["negative"]),
        )


def deduplicate(triplets: Sequence[LabeledTriplet]) -> list[LabeledTriplet]:
    """First occurrence per content key wins, in stable triplet_id order."""
    seen: set[str] = set()
    result = []
    for t in sorted(triplets, key=lambda t: t.triplet_id):
        if t.content_key in seen:
            continue
        seen.add(t.content_key)
        result.append(t)
    return result


def assign_splits(
    triplets: Sequence[LabeledTriplet],
    plan: SplitPlan,
    slack: float = DEFAULT_GROUP_SLACK,
) -> dict[str, str]:
    """Map triplet_id -> split name.

    With test_docs_unseen, all triplets sharing a parent document travel
    together: groups are shuffled by seed and greedily assigned to the
    split with the largest remaining deficit, which hits the ratios exactly
    when they divide the counts.
    """
    import random

    total = len(triplets)
    if total == 0:
        return {}

    if plan.test_docs_unseen:
        groups: dict[str, list[LabeledTriplet]] = {}
        for t in triplets:
            groups.setdefault(t.parent_doc_id, []).append(t)
        group_items = sorted(groups.items())
    else:
        group_items = [(t.triplet_id, [t]) for t in triplets]
        group_items.sort()

    targets = [r * total for r in plan.ratios]
    max_target = max(targets)
    allowed = max_target + slack * total
    for key, members in group_items:
        if len(members) > allowed:
            raise InfeasibleRatios(
                f"group {key!r} has {len(members)} triplets, exceeding the "
                f"largest split capacity {max_target:.1f} plus slack "
                f"{slack * total:.1f}"
            )

    rng = random.Random(plan.seed)
    rng.shuffle(group_items)

    deficits = list(targets)
    assignment: dict[str, str] = {}
    for _, members in group_items:
        # Splits with a zero ratio never receive anything.
        best = max(
            (i for i in range(len(SPLIT_NAMES)) if plan.ratios[i] > 0),
            key=lambda i: deficits[i],
        )
        deficits[best] -= len(members)
        for t in members:
            assignment[t.triplet_id] = SPLIT_NAMES[best]
    return assignment


@dataclass(frozen=True)
class SplitBalance:
    supported: int
    unsupported: int
    flags: tuple[str, ...] = ()


def balance_report(
    triplets: Sequence[LabeledTriplet],
    tolerance: float = DEFAULT_BALANCE_TOLERANCE,
) -> dict[str, SplitBalance]:
    """Class counts per split, flagging imbalance beyond tolerance."""
    counts: dict[str, list[int]] = {}
    for t in triplets:
        split = t.split or "unassigned"
        pair = counts.setdefault(split, [0, 0])
        if t.label is Label.SUPPORTED:
            pair[0] += 1
        else:
            pair[1] += 1

    report = {}
    for split, (pos, neg) in sorted(counts.items()):
        flags = []
        total = pos + neg
        if total == 0 or pos == 0 or neg == 0:
            flags.append("degenerate")
        if total > 0 and abs(pos - neg) / total > tolerance:
            flags.append("imbalanced")
        report[split] = SplitBalance(
            supported=pos, unsupported=neg, flags=tuple(flags)
        )
    return report


def build_ablation_variant(
    triplets: Sequence[LabeledTriplet], excluded: ModuleKind
) -> list[LabeledTriplet]:
    """All triplets whose provenance is not the excluded kind."""
    return [t for t in triplets if t.provenance is not excluded]


def emit_training_records(
    triplets: Sequence[LabeledTriplet], template: PromptTemplate
) -> list[dict]:
    """One {prompt, target, triplet_id} record per triplet."""
    records = []
    for t in triplets:
        records.append(
            {
                "prompt": template.render_prompt(t.claim, t.document),
                "target": template.target_for(t.label),
                "triplet_id": t.triplet_id,
            }
        )
    return records


def build_manifest(
    triplets: Sequence[LabeledTriplet],
    config_hash: str,
    kappa_report: Optional[Mapping] = None,
    excluded_module: Optional[ModuleKind] = None,
    balance_tolerance: float = DEFAULT_BALANCE_TOLERANCE,
) -> dict:
    """Self-describing counts for a triplet set, plus provenance of the run."""
    split_counts: dict[str, int] = {}
    kind_counts: dict[str, int] = {k.value: 0 for k in ModuleKind}
    for t in triplets:
        split_counts[t.split or "unassigned"] = (
            split_counts.get(t.split or "unassigned", 0) + 1
        )
        kind_counts[t.provenance.value] += 1

    balance = {
        split: {"supported": b.supported, "unsupported": b.unsupported,
                "flags": list(b.flags)}
        for split, b in balance_report(triplets, tolerance=balance_tolerance).items()
    }
    manifest = {
        "total": len(triplets),
        "counts_per_split": dict(sorted(split_counts.items())),
        "counts_per_module": kind_counts,
        "class_balance": balance,
        "config_hash": config_hash,
        "hash_algorithm": HASH_ALGORITHM,
        "hash_seed": HASH_SEED,
    }
    if kappa_report is not None:
        manifest["kappa"] = dict(kappa_report)
    if excluded_module is not None:
        manifest["excluded_module"] = excluded_module.value
    return manifest
