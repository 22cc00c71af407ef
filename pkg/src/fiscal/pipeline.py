"""Stage orchestration: each function runs one pipeline stage end to end,
reading and writing the documented file formats under the output directory
and leaving a manifest behind.

Stages are sequential; inside a stage, backend calls fan out through the
gateway's bounded concurrency and results are re-ordered stably before
anything is written, so identical config and seed reproduce identical bytes.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .assembly import (
    assign_splits,
    build_ablation_variant,
    build_manifest,
    deduplicate,
    emit_training_records,
)
from .config import RunConfig
from .core import (
    Claim,
    Document,
    LabeledTriplet,
    SYNTHESIS_KINDS,
    read_documents,
    read_jsonl,
    read_triplets,
    validate_triplet,
    write_jsonl,
    write_triplets,
)
from .evaluation import (
    EvalReport,
    ablation_report,
    evaluate_examples,
    read_predictions,
    sweep_threshold,
    triplet_to_example,
)
from .extraction import extract_numerical_claims, screen_atomicity
from .gateway import Gateway
from .synthesis import (
    EmptyEdit,
    RejectedOutput,
    apply_module,
    original_triplet,
    plan_synthesis,
)
from .validation import cohens_kappa, judge_triplet, unanimity_filter

logger = logging.getLogger(__name__)

CLAIMS_FILE = "claims.jsonl"
SYNTHESIS_LOG = "synthesis_log.jsonl"
RAW_TRIPLETS = "triplets_raw.jsonl"
VERDICTS_FILE = "verdicts.jsonl"
VALIDATED_TRIPLETS = "triplets_validated.jsonl"
SPLITS_DIR = "splits"
ABLATION_DIR = "ablation"
TRAIN_FILES_DIR = "train_files"
EVAL_DIR = "eval"


def _header(config: RunConfig) -> str:
    return f"# fiscal config_hash={config.config_hash} seed={config.seed}"


def _write_manifest(
    config: RunConfig, stage: str, extra: Optional[Mapping] = None
) -> Path:
    manifest = {
        "stage": stage,
        "config_hash": config.config_hash,
        "seed": config.seed,
        "tau": config.tau,
        "template_versions": config.template_versions(),
    }
    if extra:
        manifest.update(extra)
    path = config.out_dir / f"{stage}_manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


# --- extract ----------------------------------------------------------------


def run_extract(config: RunConfig) -> Path:
    """Corpus -> screened claims file.

    Documents are processed concurrently; per-document results are merged
    in stable doc_id order, so output bytes do not depend on scheduling.
    """
    documents = read_documents(config.corpus)
    extractor = Gateway(config.extraction_backend)
    judges = [Gateway(spec) for spec in config.judges]
    extraction_template = config.template_text("extraction")
    atomicity_template = config.template_text("atomicity")

    def process(doc: Document) -> list[dict]:
        doc_records = []
        for candidate in extract_numerical_claims(doc, extractor, extraction_template):
            kept, verdicts = screen_atomicity(candidate, judges, atomicity_template)
            doc_records.append(
                {
                    "claim_id": candidate.claim.claim_id,
                    "parent_doc_id": candidate.claim.parent_doc_id,
                    "text": candidate.claim.text,
                    "numeric_spans": [list(s) for s in candidate.claim.numeric_spans],
                    "kept": kept,
                    "verdicts": [
                        {
                            "judge_id": v.judge_id,
                            "atomic": v.atomic,
                            "rationale": v.rationale,
                        }
                        for v in verdicts
                    ],
                }
            )
        return doc_records

    ordered_docs = sorted(documents, key=lambda d: d.doc_id)
    with ThreadPoolExecutor(
        max_workers=config.extraction_backend.max_in_flight
    ) as pool:
        per_doc = list(pool.map(process, ordered_docs))
    records = [record for doc_records in per_doc for record in doc_records]
    kept_count = sum(1 for r in records if r["kept"])

    out = config.out_dir / CLAIMS_FILE
    write_jsonl(out, records, header=_header(config))
    _write_manifest(
        config,
        "extract",
        {"documents": len(documents), "candidates": len(records), "kept": kept_count},
    )
    return out


def load_kept_claims(config: RunConfig) -> list[Claim]:
    claims = []
    for record in read_jsonl(config.out_dir / CLAIMS_FILE):
        if not record["kept"]:
            continue
        claims.append(
            Claim(
                claim_id=record["claim_id"],
                text=record["text"],
                parent_doc_id=record["parent_doc_id"],
                numeric_spans=tuple(tuple(s) for s in record["numeric_spans"]),
            )
        )
    return claims


# --- synthesize -------------------------------------------------------------


def run_synthesize(config: RunConfig) -> Path:
    """Screened claims -> raw labeled triplets plus an audit log."""
    documents = {d.doc_id: d for d in read_documents(config.corpus)}
    claims = load_kept_claims(config)
    tasks = plan_synthesis(claims, documents, config.synthesis_plan)
    templates = config.synthesis_templates()
    gateways = {
        kind: Gateway(spec) for kind, spec in config.synthesis_backends.items()
    }

    def run_task(task) -> tuple[dict, Optional[LabeledTriplet]]:
        entry = {
            "claim_id": task.claim.claim_id,
            "kind": task.kind.value,
            "seed": task.seed,
        }
        try:
            output = apply_module(
                task,
                gateways[task.kind],
                templates,
                edit_fraction=config.edit_fraction,
            )
        except (RejectedOutput, EmptyEdit) as exc:
            entry.update({"accepted": False, "reason": str(exc)})
            logger.warning("synthesis rejected: %s", exc)
            return entry, None
        entry.update(
            {
                "accepted": True,
                "triplet_id": output.triplet.triplet_id,
                "raw_reply": output.raw_reply,
                "checks": [
                    {
                        "name": c.name,
                        "passed": c.passed,
                        "mandatory": c.mandatory,
                        "detail": c.detail,
                    }
                    for c in output.checks
                ],
            }
        )
        return entry, output.triplet

    # Tasks run concurrently; outputs are buffered and emitted in stable
    # (claim_id, kind) order.
    ordered_tasks = sorted(tasks, key=lambda t: (t.claim.claim_id, t.kind.value))
    width = max(spec.max_in_flight for spec in config.synthesis_backends.values())
    with ThreadPoolExecutor(max_workers=width) as pool:
        results = list(pool.map(run_task, ordered_tasks))
    log_records = [entry for entry, _ in results]
    triplets: list[LabeledTriplet] = [t for _, t in results if t is not None]

    if config.include_original:
        for claim in sorted(claims, key=lambda c: c.claim_id):
            triplets.append(original_triplet(claim, documents[claim.parent_doc_id]))

    triplets.sort(key=lambda t: t.triplet_id)
    for t in triplets:
        validate_triplet(t)

    write_jsonl(config.out_dir / SYNTHESIS_LOG, log_records, header=_header(config))
    out = config.out_dir / RAW_TRIPLETS
    write_triplets(out, triplets, header=_header(config))
    _write_manifest(
        config,
        "synthesize",
        {
            "tasks": len(tasks),
            "accepted": sum(1 for r in log_records if r.get("accepted")),
            "rejected": sum(1 for r in log_records if not r.get("accepted")),
            "original_pairs_included": config.include_original,
            "triplets": len(triplets),
        },
    )
    return out


# --- judge ------------------------------------------------------------------


def run_judge(config: RunConfig) -> Path:
    """Raw triplets -> unanimously approved triplets plus agreement report."""
    triplets = read_triplets(config.out_dir / RAW_TRIPLETS)
    judges = [Gateway(spec) for spec in config.judges]
    template = config.template_text("triplet_judge")

    def review(t: LabeledTriplet):
        return [judge_triplet(t, judge, template) for judge in judges]

    width = max(spec.max_in_flight for spec in config.judges)
    with ThreadPoolExecutor(max_workers=width) as pool:
        all_verdicts = list(pool.map(review, triplets))

    verdict_records = []
    kept: list[LabeledTriplet] = []
    pairs = []
    for t, verdicts in zip(triplets, all_verdicts):
        verdict_records.extend(
            {
                "triplet_id": v.triplet_id,
                "judge_id": v.judge_id,
                "label_correct": v.label_correct,
                "rationale": v.rationale,
            }
            for v in verdicts
        )
        pairs.append((verdicts[0].label_correct, verdicts[1].label_correct))
        if unanimity_filter(t, verdicts):
            kept.append(t)

    agreement = cohens_kappa(pairs) if pairs else None
    write_jsonl(config.out_dir / VERDICTS_FILE, verdict_records, header=_header(config))
    out = config.out_dir / VALIDATED_TRIPLETS
    write_triplets(out, kept, header=_header(config))
    _write_manifest(
        config,
        "judge",
        {
            "judged": len(triplets),
            "kept": len(kept),
            "kappa": agreement.to_dict() if agreement else None,
        },
    )
    return out


# --- assemble ---------------------------------------------------------------


def run_assemble(config: RunConfig) -> Path:
    """Validated triplets -> deduplicated, split-assigned dataset."""
    triplets = deduplicate(read_triplets(config.out_dir / VALIDATED_TRIPLETS))
    assignment = assign_splits(triplets, config.split)
    assigned = [t.with_split(assignment[t.triplet_id]) for t in triplets]

    splits_dir = config.out_dir / SPLITS_DIR
    for split in ("train", "eval", "test"):
        members = [t for t in assigned if t.split == split]
        write_triplets(splits_dir / f"{split}.jsonl", members, header=_header(config))

    kappa = _read_judge_kappa(config)
    manifest = build_manifest(
        assigned,
        config.config_hash,
        kappa_report=kappa,
        balance_tolerance=config.balance_tolerance,
    )
    manifest["balance_tolerance"] = config.balance_tolerance
    manifest["split_plan"] = {
        "ratios": list(config.split.ratios),
        "seed": config.split.seed,
        "test_docs_unseen": config.split.test_docs_unseen,
    }
    (splits_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    _write_manifest(config, "assemble", {"total": len(assigned)})
    return splits_dir


def _read_judge_kappa(config: RunConfig) -> Optional[dict]:
    manifest_path = config.out_dir / "judge_manifest.json"
    if not manifest_path.exists():
        return None
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    return data.get("kappa")


def load_split(config: RunConfig, split: str) -> list[LabeledTriplet]:
    return read_triplets(config.out_dir / SPLITS_DIR / f"{split}.jsonl")


# --- ablate -----------------------------------------------------------------


def run_ablate(config: RunConfig) -> Path:
    """Assembled splits -> leave-one-module-out training variants.

    Only the train split loses the excluded kind's triplets; eval and test
    are copied unchanged so variant metrics stay comparable.
    """
    ablation_dir = config.out_dir / ABLATION_DIR
    train = load_split(config, "train")
    for kind in SYNTHESIS_KINDS:
        variant_dir = ablation_dir / f"wo_{kind.value}"
        variant_train = build_ablation_variant(train, kind)
        write_triplets(
            variant_dir / "train.jsonl", variant_train, header=_header(config)
        )
        for split in ("eval", "test"):
            write_triplets(
                variant_dir / f"{split}.jsonl",
                load_split(config, split),
                header=_header(config),
            )
        manifest = build_manifest(
            variant_train, config.config_hash, excluded_module=kind
        )
        (variant_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    _write_manifest(config, "ablate", {"variants": len(SYNTHESIS_KINDS)})
    return ablation_dir


# --- emit-train -------------------------------------------------------------


def run_emit_train(config: RunConfig) -> Path:
    """Split triplet files -> single-token training files."""
    template = config.verifier_template()
    out_dir = config.out_dir / TRAIN_FILES_DIR
    counts = {}
    for split in ("train", "eval", "test"):
        triplets = load_split(config, split)
        records = emit_training_records(triplets, template)
        write_jsonl(out_dir / f"{split}.jsonl", records, header=_header(config))
        counts[split] = len(records)
    _write_manifest(config, "emit_train", {"records": counts})
    return out_dir


# --- evaluate ---------------------------------------------------------------


def run_evaluate(
    config: RunConfig,
    triplet_file: Optional[Path] = None,
    tau: Optional[float] = None,
    dataset_id: str = "",
) -> EvalReport:
    """Triplet file + verifier backend -> predictions and a metrics report."""
    tau = config.tau if tau is None else tau
    path = triplet_file or (config.out_dir / SPLITS_DIR / "test.jsonl")
    examples = [triplet_to_example(t) for t in read_triplets(path)]
    backend = Gateway(config.verifier_backend)
    template = config.verifier_template()

    eval_dir = config.out_dir / EVAL_DIR
    report, _ = evaluate_examples(
        examples,
        backend,
        template,
        tau,
        predictions_path=eval_dir / "predictions.jsonl",
        dataset_id=dataset_id or Path(path).stem,
        header=_header(config),
    )
    (eval_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _write_manifest(config, "evaluate", {"report": report.to_dict()})
    return report


# --- sweep ------------------------------------------------------------------


def run_sweep(
    config: RunConfig,
    predictions_file: Optional[Path] = None,
    grid: Optional[Sequence[float]] = None,
) -> Path:
    """Existing predictions -> threshold curve with the F1-best tau."""
    path = predictions_file or (config.out_dir / EVAL_DIR / "predictions.jsonl")
    scored = read_predictions(path)
    if grid is None:
        grid = [i / 100 for i in range(101)]
    curve = sweep_threshold(scored, grid)
    out = config.out_dir / EVAL_DIR / "threshold_curve.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        json.dumps(curve.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _write_manifest(config, "sweep", {"best_tau": curve.best_tau, "grid_points": len(grid)})
    return out


# --- report-ablation --------------------------------------------------------


def run_report_ablation(config: RunConfig, reports_dir: Optional[Path] = None) -> Path:
    """Per-variant report JSONs -> one plain-text comparison table.

    Expects report_full.json plus report_wo_<kind>.json for every kind,
    as produced by evaluate runs over the ablation variants.
    """
    reports_dir = reports_dir or (config.out_dir / EVAL_DIR)
    full_path = reports_dir / "report_full.json"
    if not full_path.exists():
        raise FileNotFoundError(f"missing {full_path}")
    full = EvalReport.from_dict(json.loads(full_path.read_text(encoding="utf-8")))
    variants = {}
    for kind in SYNTHESIS_KINDS:
        variant_path = reports_dir / f"report_wo_{kind.value}.json"
        if variant_path.exists():
            variants[kind] = EvalReport.from_dict(
                json.loads(variant_path.read_text(encoding="utf-8"))
            )
    table = ablation_report(variants, full)
    out = config.out_dir / EVAL_DIR / "ablation_table.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table + "\n", encoding="utf-8")
    _write_manifest(config, "report_ablation", {"rows": 1 + len(variants)})
    return out
