"""Training-file ingestion and batch encoding.

Consumes the pipeline's training records exactly as emitted: JSON Lines of
{prompt, target, triplet_id}, with '#'-prefixed header lines skipped.
Records whose target is not a known single-token answer are skipped with a
warning, never trained on.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch

from .tokenizer import BOS_ID, PAD_ID, WordTokenizer

logger = logging.getLogger(__name__)

ANSWER_TOKENS = ("yes", "no")


class MalformedRecord(ValueError):
    """A training record is missing fields or has an unknown target."""


class TargetNotSingleToken(ValueError):
    """The target does not tokenize to exactly one token."""


@dataclass(frozen=True)
class Example:
    triplet_id: str
    prompt: str
    target: str  # one of ANSWER_TOKENS


@dataclass
class LoadStats:
    kept: int = 0
    skipped_malformed: int = 0
    skipped_multi_token: int = 0


def read_training_file(path: str | Path) -> tuple[list[Example], LoadStats]:
    examples = []
    stats = LoadStats()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            record = json.loads(stripped)
            try:
                examples.append(_validate(record, line_no))
            except TargetNotSingleToken as exc:
                stats.skipped_multi_token += 1
                logger.warning("%s", exc)
            except MalformedRecord as exc:
                stats.skipped_malformed += 1
                logger.warning("%s", exc)
            else:
                stats.kept += 1
    return examples, stats


def _validate(record: dict, line_no: int) -> Example:
    for field in ("prompt", "target", "triplet_id"):
        if field not in record:
            raise MalformedRecord(f"line {line_no}: missing field {field!r}")
    target = record["target"].strip().lower()
    if len(target.split()) != 1:
        raise TargetNotSingleToken(
            f"line {line_no}: target {record['target']!r} is not a single token"
        )
    if target not in ANSWER_TOKENS:
        raise MalformedRecord(
            f"line {line_no}: target {record['target']!r} not in {ANSWER_TOKENS}"
        )
    return Example(
        triplet_id=record["triplet_id"], prompt=record["prompt"], target=target
    )


def encode_prompt(tokenizer: WordTokenizer, prompt: str, max_len: int) -> list[int]:
    """BOS-prefixed prompt ids, left-truncated to leave room for the answer."""
    ids = tokenizer.encode(prompt)
    budget = max_len - 2  # one slot for BOS, one for the answer token
    if len(ids) > budget:
        ids = ids[-budget:]
    return [BOS_ID] + ids


@dataclass
class Batch:
    input_ids: torch.Tensor  # (B, T) padded with PAD_ID
    labels: torch.Tensor  # (B, T) target-token id at loss positions
    loss_mask: torch.Tensor  # (B, T) boolean, true at loss positions only
    triplet_ids: list[str]
    targets: list[str]


def encode_batch(
    tokenizer: WordTokenizer, examples, max_len: int, include_answer: bool = True
) -> Batch:
    """Pack examples into one padded batch.

    With include_answer, the target token is appended and the loss position
    is the logit index that predicts it (one before the answer).  Without,
    the loss position is the last prompt token, where the next-token
    distribution is read off at evaluation time.
    """
    rows = []
    positions = []
    answer_ids = []
    for ex in examples:
        prompt_ids = encode_prompt(tokenizer, ex.prompt, max_len)
        answer = tokenizer.token_id(ex.target)
        if include_answer:
            rows.append(prompt_ids + [answer])
        else:
            rows.append(prompt_ids)
        positions.append(len(prompt_ids) - 1)
        answer_ids.append(answer)

    width = max(len(r) for r in rows)
    input_ids = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    labels = torch.zeros((len(rows), width), dtype=torch.long)
    loss_mask = torch.zeros((len(rows), width), dtype=torch.bool)
    for i, row in enumerate(rows):
        input_ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        labels[i, positions[i]] = answer_ids[i]
        loss_mask[i, positions[i]] = True
    return Batch(
        input_ids=input_ids,
        labels=labels,
        loss_mask=loss_mask,
        triplet_ids=[ex.triplet_id for ex in examples],
        targets=[ex.target for ex in examples],
    )
