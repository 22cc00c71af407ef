"""Adapter training under the single-token causal-LM objective.

The loss is the negative log-likelihood of the answer token alone: logits
are gathered at the masked positions, so labels anywhere else cannot
influence the gradient.  The adapter directory carries everything needed
to rebuild the model: config, LoRA weights, tokenizer vocabulary.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from .data import ANSWER_TOKENS, encode_batch, read_training_file
from .model import (
    DEFAULT_TARGET_MODULES,
    ModelSpec,
    apply_lora,
    build_base_model,
    lora_parameters,
    lora_state_dict,
)
from .tokenizer import WordTokenizer

logger = logging.getLogger(__name__)

ADAPTER_CONFIG = "adapter_config.json"
ADAPTER_WEIGHTS = "adapter_model.pt"
TOKENIZER_FILE = "tokenizer.json"
LOSS_LOG = "loss_log.jsonl"


@dataclass(frozen=True)
class TrainConfig:
    base_model: str = "tiny-2x64"
    rank: int = 8
    alpha: float = 16.0
    target_modules: tuple[str, ...] = DEFAULT_TARGET_MODULES
    learning_rate: float = 1e-2
    max_steps: int = 50
    batch_size: int = 8
    training_file: str = ""
    eval_file: str = ""
    seed: int = 0
    output_dir: str = "adapter"

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


@dataclass
class TrainResult:
    initial_loss: float
    final_loss: float
    steps: int
    skipped_malformed: int
    skipped_multi_token: int
    adapter_dir: Path
    step_losses: list[float] = field(default_factory=list)


def masked_answer_loss(
    logits: torch.Tensor, labels: torch.Tensor, loss_mask: torch.Tensor
) -> torch.Tensor:
    """Cross-entropy at the masked positions only.

    Gathering first makes the invariant literal: label values outside the
    mask are never read.
    """
    if not loss_mask.any():
        raise ValueError("loss mask selects no positions")
    return F.cross_entropy(logits[loss_mask], labels[loss_mask])


def dataset_mean_loss(model, tokenizer, examples, max_len, batch_size=32) -> float:
    """Answer-token NLL averaged over the whole set, no gradients."""
    total = 0.0
    count = 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            batch = encode_batch(tokenizer, chunk, max_len)
            logits = model(batch.input_ids)
            per_item = F.cross_entropy(
                logits[batch.loss_mask], batch.labels[batch.loss_mask],
                reduction="sum",
            )
            total += per_item.item()
            count += len(chunk)
    return total / count


def train(config: TrainConfig) -> TrainResult:
    torch.manual_seed(config.seed)
    examples, stats = read_training_file(config.training_file)
    if not examples:
        raise ValueError(f"no usable records in {config.training_file}")

    tokenizer = WordTokenizer.build(
        (ex.prompt for ex in examples), extra_tokens=ANSWER_TOKENS
    )
    yes_id = tokenizer.token_id("yes")
    no_id = tokenizer.token_id("no")
    if yes_id == no_id:
        raise ValueError("answer tokens collide in the vocabulary")

    spec = ModelSpec(
        preset=config.base_model, vocab_size=len(tokenizer), seed=config.seed
    )
    model = build_base_model(spec)
    model = apply_lora(
        model,
        rank=config.rank,
        alpha=config.alpha,
        target_modules=config.target_modules,
        seed=config.seed,
    )
    max_len = model.max_len

    initial_loss = dataset_mean_loss(model, tokenizer, examples, max_len)

    optimizer = torch.optim.AdamW(lora_parameters(model), lr=config.learning_rate)
    rng = random.Random(config.seed)
    order: list[int] = []
    step_losses = []
    model.train()
    for step in range(1, config.max_steps + 1):
        if len(order) < config.batch_size:
            refill = list(range(len(examples)))
            rng.shuffle(refill)
            order.extend(refill)
        batch_examples = [examples[i] for i in order[: config.batch_size]]
        order = order[config.batch_size :]

        batch = encode_batch(tokenizer, batch_examples, max_len)
        logits = model(batch.input_ids)
        loss = masked_answer_loss(logits, batch.labels, batch.loss_mask)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        step_losses.append(loss.item())

    model.eval()
    final_loss = dataset_mean_loss(model, tokenizer, examples, max_len)

    adapter_dir = Path(config.output_dir)
    adapter_dir.mkdir(parents=True, exist_ok=True)
    tokenizer.save(adapter_dir / TOKENIZER_FILE)
    torch.save(lora_state_dict(model), adapter_dir / ADAPTER_WEIGHTS)
    adapter_config = {
        "base_model": config.base_model,
        "vocab_size": len(tokenizer),
        "rank": config.rank,
        "alpha": config.alpha,
        "target_modules": list(config.target_modules),
        "seed": config.seed,
        "learning_rate": config.learning_rate,
        "max_steps": config.max_steps,
        "batch_size": config.batch_size,
        "answer_ids": {"yes": yes_id, "no": no_id},
        "skipped_malformed": stats.skipped_malformed,
        "skipped_multi_token": stats.skipped_multi_token,
    }
    (adapter_dir / ADAPTER_CONFIG).write_text(
        json.dumps(adapter_config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (adapter_dir / LOSS_LOG).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"step": 0, "loss": initial_loss}) + "\n")
        for i, value in enumerate(step_losses, start=1):
            fh.write(json.dumps({"step": i, "loss": value}) + "\n")
        fh.write(json.dumps({"step": "final", "loss": final_loss}) + "\n")

    if stats.skipped_malformed or stats.skipped_multi_token:
        logger.info(
            "skipped %d malformed and %d multi-token records",
            stats.skipped_malformed,
            stats.skipped_multi_token,
        )
    return TrainResult(
        initial_loss=initial_loss,
        final_loss=final_loss,
        steps=config.max_steps,
        skipped_malformed=stats.skipped_malformed,
        skipped_multi_token=stats.skipped_multi_token,
        adapter_dir=adapter_dir,
        step_losses=step_losses,
    )


def load_adapter(adapter_dir: str | Path):
    """Rebuild (model, tokenizer, answer ids) from an adapter directory."""
    from .model import load_lora_state

    adapter_dir = Path(adapter_dir)
    config = json.loads((adapter_dir / ADAPTER_CONFIG).read_text(encoding="utf-8"))
    tokenizer = WordTokenizer.load(adapter_dir / TOKENIZER_FILE)
    spec = ModelSpec(
        preset=config["base_model"],
        vocab_size=config["vocab_size"],
        seed=config["seed"],
    )
    model = build_base_model(spec)
    model = apply_lora(
        model,
        rank=config["rank"],
        alpha=config["alpha"],
        target_modules=tuple(config["target_modules"]),
        seed=config["seed"],
    )
    state = torch.load(adapter_dir / ADAPTER_WEIGHTS, weights_only=True)
    load_lora_state(model, state)
    model.eval()
    return model, tokenizer, config["answer_ids"]
