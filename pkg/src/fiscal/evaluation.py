"""Verifier evaluation: yes-token confidence, thresholding, metrics, sweeps.

The verifier contract is a single scalar per (claim, document) pair: the
renormalized probability of the affirmative token.  Everything downstream
of that scalar (classification, confusion counts, threshold curves,
ablation tables) is pure arithmetic and lives here.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .assembly import PromptTemplate
from .core import (
    EmptyInput,
    FiscalError,
    Label,
    LabeledTriplet,
    ModuleKind,
    SYNTHESIS_KINDS,
    read_jsonl,
    write_jsonl,
)
from .gateway import ChatRequest, Gateway, JUDGE_TEMPERATURE


class MissingVariant(FiscalError):
    """The ablation table needs one report per excluded kind."""


@dataclass(frozen=True)
class EvalExample:
    """A scoreable (claim, document, gold) record, from any source dataset."""

    example_id: str
    claim: str
    document: str
    gold: Label


@dataclass(frozen=True)
class ScoredPair:
    triplet_id: str
    confidence: float
    gold: Label
    predicted: Optional[Label] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    tau: float
    dataset_id: str = ""
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "tau": self.tau,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy": self.accuracy,
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        counts = data["counts"]
        return cls(
            tp=counts["tp"],
            fp=counts["fp"],
            fn=counts["fn"],
            tn=counts["tn"],
            precision=data["precision"],
            recall=data["recall"],
            f1=data["f1"],
            accuracy=data["accuracy"],
            tau=data["tau"],
            dataset_id=data.get("dataset_id", ""),
            degenerate=tuple(data.get("degenerate", ())),
        )


@dataclass(frozen=True)
class ThresholdCurve:
    grid: tuple[float, ...]
    reports: tuple[EvalReport, ...]
    best_tau: float

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("threshold grid must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "best_tau": self.best_tau,
            "reports": [r.to_dict() for r in self.reports],
        }


def support_confidence(
    claim: str, document: str, backend: Gateway, template: PromptTemplate
) -> float:
    """Renormalized yes-probability for a claim-document pair.

    Renders the same prompt content as training emission so scores are
    comparable with what the verifier was tuned on.
    """
    req = ChatRequest(
        system=template.system_instruction,
        user=template.render_body(claim, document),
        temperature=JUDGE_TEMPERATURE,
        max_tokens=1,
        want_logprobs=True,
        top_logprobs=10,
    )
    positive, negative = template.target_tokens
    dist = backend.first_token_distribution(req, [positive, negative])
    return dist[positive.lower()]


def classify(confidence: float, tau: float) -> Label:
    """SUPPORTED iff confidence >= tau (boundary inclusive)."""
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau {tau} outside [0, 1]")
    return Label.SUPPORTED if confidence >= tau else Label.UNSUPPORTED


def compute_metrics(
    scored: Sequence[ScoredPair], tau: float = 0.5, dataset_id: str = ""
) -> EvalReport:
    """Confusion counts and derived metrics, SUPPORTED as positive class.

    Zero-denominator conventions: precision 0 when nothing predicted
    positive, recall 0 when nothing is positive, f1 0 when both are 0; each
    is flagged so degenerate runs stay visible.
    """
    if not scored:
        raise EmptyInput("compute_metrics needs at least one scored pair")
    tp = fp = fn = tn = 0
    for pair in scored:
        if pair.predicted is None:
            raise ValueError(f"pair {pair.triplet_id} has no prediction")
        positive = pair.predicted is Label.SUPPORTED
        correct = pair.predicted is pair.gold
        if positive and correct:
            tp += 1
        elif positive:
            fp += 1
        elif correct:
            tn += 1
        else:
            fn += 1

    degenerate = []
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        degenerate.append("no-predicted-positives")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        degenerate.append("no-gold-positives")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("zero-f1-denominator")
    accuracy = (tp + tn) / len(scored)

    return EvalReport(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        tau=tau,
        dataset_id=dataset_id,
        degenerate=tuple(degenerate),
    )


def sweep_threshold(
    scored: Sequence[ScoredPair], grid: Sequence[float], dataset_id: str = ""
) -> ThresholdCurve:
    """Metrics at every tau on the grid; best_tau maximizes F1, ties going
    to the smallest tau."""
    if not scored:
        raise EmptyInput("sweep_threshold needs at least one scored pair")
    if not grid:
        raise EmptyInput("sweep_threshold needs a non-empty grid")
    grid = tuple(sorted(set(float(g) for g in grid)))
    reports = []
    for tau in grid:
        rethresholded = [
            ScoredPair(
                triplet_id=p.triplet_id,
                confidence=p.confidence,
                gold=p.gold,
                predicted=classify(p.confidence, tau),
            )
            for p in scored
        ]
        reports.append(compute_metrics(rethresholded, tau=tau, dataset_id=dataset_id))
    best = max(range(len(grid)), key=lambda i: (reports[i].f1, -grid[i]))
    return ThresholdCurve(grid=grid, reports=tuple(reports), best_tau=grid[best])


def triplet_to_example(t: LabeledTriplet) -> EvalExample:
    return EvalExample(
        example_id=t.triplet_id, claim=t.claim, document=t.document, gold=t.label
    )


def load_external_examples(path: str | Path, mapping: Mapping) -> list[EvalExample]:
    """Ingest a foreign dataset through a declarative field mapping.

    mapping: claim_field, document_field, label_field, positive_values
    (list of raw label values meaning SUPPORTED), optional id_field.
    """
    claim_field = mapping["claim_field"]
    document_field = mapping["document_field"]
    label_field = mapping["label_field"]
    positive_values = {str(v) for v in mapping["positive_values"]}
    id_field = mapping.get("id_field")

    examples = []
    for i, record in enumerate(read_jsonl(path)):
        gold = (
            Label.SUPPORTED
            if str(record[label_field]) in positive_values
            else Label.UNSUPPORTED
        )
        examples.append(
            EvalExample(
                example_id=str(record[id_field]) if id_field else f"ext-{i:06d}",
                claim=record[claim_field],
                document=record[document_field],
                gold=gold,
            )
        )
    return examples


def score_examples(
    examples: Sequence[EvalExample],
    backend: Gateway,
    template: PromptTemplate,
    tau: float,
) -> list[ScoredPair]:
    """Score and classify every example, concurrently, in stable input order."""

    def score(example: EvalExample) -> ScoredPair:
        confidence = support_confidence(
            example.claim, example.document, backend, template
        )
        return ScoredPair(
            triplet_id=example.example_id,
            confidence=confidence,
            gold=example.gold,
            predicted=classify(confidence, tau),
        )

    with ThreadPoolExecutor(max_workers=backend.spec.max_in_flight) as pool:
        return list(pool.map(score, examples))


def scored_to_record(pair: ScoredPair, tau: float) -> dict:
    return {
        "triplet_id": pair.triplet_id,
        "confidence": pair.confidence,
        "gold": pair.gold.to_int(),
        "predicted": pair.predicted.to_int() if pair.predicted else None,
        "tau": tau,
    }


def scored_from_record(record: Mapping) -> ScoredPair:
    predicted = record.get("predicted")
    return ScoredPair(
        triplet_id=record["triplet_id"],
        confidence=record["confidence"],
        gold=Label.from_int(record["gold"]),
        predicted=Label.from_int(predicted) if predicted is not None else None,
    )


def read_predictions(path: str | Path) -> list[ScoredPair]:
    return [scored_from_record(r) for r in read_jsonl(path)]


def write_predictions(
    path: str | Path,
    scored: Sequence[ScoredPair],
    tau: float,
    header: Optional[str] = None,
) -> None:
    write_jsonl(path, (scored_to_record(p, tau) for p in scored), header=header)


def evaluate_examples(
    examples: Sequence[EvalExample],
    backend: Gateway,
    template: PromptTemplate,
    tau: float,
    predictions_path: Optional[str | Path] = None,
    dataset_id: str = "",
    header: Optional[str] = None,
) -> tuple[EvalReport, list[ScoredPair]]:
    """Score, classify and report; optionally persist the predictions."""
    scored = score_examples(examples, backend, template, tau)
    report = compute_metrics(scored, tau=tau, dataset_id=dataset_id)
    if predictions_path is not None:
        write_predictions(predictions_path, scored, tau, header=header)
    return report, scored


# --- report rendering -------------------------------------------------------


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def render_report_line(name: str, report: EvalReport, width: int = 28) -> str:
    return (
        f"{name:<{width}} {_pct(report.precision):>9} {_pct(report.recall):>9} "
        f"{_pct(report.f1):>9} {_pct(report.accuracy):>9}"
    )


def render_report_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    width = max([28] + [len(name) for name, _ in rows])
    header = (
        f"{'Variant':<{width}} {'Precision':>9} {'Recall':>9} "
        f"{'F1':>9} {'Accuracy':>9}"
    )
    lines = [header, "-" * len(header)]
    lines.extend(render_report_line(name, report, width) for name, report in rows)
    return "\n".join(lines)


def ablation_report(
    variant_reports: Mapping[ModuleKind, EvalReport], full: EvalReport
) -> str:
    """Leave-one-out table: full system first, then one row per excluded
    kind in declaration order."""
    missing = [k.value for k in SYNTHESIS_KINDS if k not in variant_reports]
    if missing:
        raise MissingVariant(f"no report for excluded kind(s): {missing}")
    rows = [("full", full)]
    rows.extend(
        (f"w/o {kind.value}", variant_reports[kind]) for kind in SYNTHESIS_KINDS
    )
    return render_report_table(rows)
