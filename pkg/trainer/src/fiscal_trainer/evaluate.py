"""Adapter evaluation with the same yes/no renormalization contract as the
pipeline gateway, writing predictions in the pipeline's JSON Lines format
so its metrics module can recompute and agree."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .data import encode_batch, read_training_file
from .train import load_adapter


@dataclass
class EvalResult:
    accuracy: float
    n: int
    predictions_path: Path


def score_batch(model, tokenizer, examples, max_len, answer_ids) -> list[float]:
    """Renormalized yes-probability per example."""
    batch = encode_batch(tokenizer, examples, max_len, include_answer=False)
    with torch.no_grad():
        logits = model(batch.input_ids)
    answer_logits = logits[batch.loss_mask]
    probs = torch.softmax(answer_logits, dim=-1)
    p_yes = probs[:, answer_ids["yes"]]
    p_no = probs[:, answer_ids["no"]]
    return (p_yes / (p_yes + p_no)).tolist()


def evaluate_adapter(
    adapter_dir: str | Path,
    eval_file: str | Path,
    predictions_path: str | Path,
    tau: float = 0.5,
    batch_size: int = 32,
) -> EvalResult:
    model, tokenizer, answer_ids = load_adapter(adapter_dir)
    examples, _ = read_training_file(eval_file)
    if not examples:
        raise ValueError(f"no usable records in {eval_file}")

    records = []
    correct = 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        confidences = score_batch(model, tokenizer, chunk, model.max_len, answer_ids)
        for ex, confidence in zip(chunk, confidences):
            gold = 1 if ex.target == "yes" else 0
            predicted = 1 if confidence >= tau else 0
            correct += predicted == gold
            records.append(
                {
                    "triplet_id": ex.triplet_id,
                    "confidence": confidence,
                    "gold": gold,
                    "predicted": predicted,
                    "tau": tau,
                }
            )

    predictions_path = Path(predictions_path)
    predictions_path.parent.mkdir(parents=True, exist_ok=True)
    with predictions_path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

    return EvalResult(
        accuracy=correct / len(examples),
        n=len(examples),
        predictions_path=predictions_path,
    )
