"""Tiny causal transformer with low-rank adapters on selected linears.

The base model is small enough to train on CPU in seconds; identical
weights are reproducible from (preset, vocab size, seed), so an adapter
directory only needs the LoRA parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

PRESETS = {
    "tiny-2x64": {"dim": 64, "n_layers": 2, "n_heads": 2, "max_len": 256},
    "mini-4x128": {"dim": 128, "n_layers": 4, "n_heads": 4, "max_len": 512},
}

DEFAULT_TARGET_MODULES = ("q", "v", "lm_head")


@dataclass(frozen=True)
class ModelSpec:
    preset: str
    vocab_size: int
    seed: int

    def config(self) -> dict:
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}, have {sorted(PRESETS)}")
        return PRESETS[self.preset]


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        assert dim % n_heads == 0
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.o = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        shape = (b, t, self.n_heads, self.head_dim)
        q = self.q(x).view(shape).transpose(1, 2)
        k = self.k(x).view(shape).transpose(1, 2)
        v = self.v(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        causal = torch.triu(
            torch.full((t, t), float("-inf"), device=x.device), diagonal=1
        )
        attn = torch.softmax(scores + causal, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.o(out)


class Block(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, n_heads)
        self.ln2 = nn.LayerNorm(dim)
        self.ff1 = nn.Linear(dim, 4 * dim)
        self.ff2 = nn.Linear(4 * dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        x = x + self.ff2(F.gelu(self.ff1(self.ln2(x))))
        return x


class TinyCausalLM(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        cfg = spec.config()
        self.spec = spec
        self.max_len = cfg["max_len"]
        torch.manual_seed(spec.seed)
        self.tok_emb = nn.Embedding(spec.vocab_size, cfg["dim"])
        self.pos_emb = nn.Embedding(cfg["max_len"], cfg["dim"])
        self.blocks = nn.ModuleList(
            Block(cfg["dim"], cfg["n_heads"]) for _ in range(cfg["n_layers"])
        )
        self.ln_f = nn.LayerNorm(cfg["dim"])
        self.lm_head = nn.Linear(cfg["dim"], spec.vocab_size, bias=False)

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        b, t = input_ids.shape
        if t > self.max_len:
            raise ValueError(f"sequence length {t} exceeds max_len {self.max_len}")
        pos = torch.arange(t, device=input_ids.device)
        x = self.tok_emb(input_ids) + self.pos_emb(pos)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.ln_f(x))


class LoRALinear(nn.Module):
    """Frozen base linear plus a trainable low-rank update.

    B starts at zero, so a fresh adapter computes exactly the base output.
    """

    def __init__(self, base: nn.Linear, rank: int, alpha: float,
                 generator: torch.Generator):
        super().__init__()
        if rank < 1:
            raise ValueError("rank must be >= 1")
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        in_features = base.in_features
        out_features = base.out_features
        self.lora_a = nn.Parameter(
            torch.randn(rank, in_features, generator=generator) * 0.02
        )
        self.lora_b = nn.Parameter(torch.zeros(out_features, rank))
        self.scaling = alpha / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * F.linear(F.linear(x, self.lora_a),
                                                      self.lora_b)


def build_base_model(spec: ModelSpec) -> TinyCausalLM:
    model = TinyCausalLM(spec)
    for p in model.parameters():
        p.requires_grad_(False)
    model.eval()
    return model


def apply_lora(
    model: TinyCausalLM,
    rank: int,
    alpha: float,
    target_modules=DEFAULT_TARGET_MODULES,
    seed: int = 0,
) -> TinyCausalLM:
    """Wrap every targeted linear in place and leave only LoRA trainable."""
    generator = torch.Generator().manual_seed(seed)
    targets = set(target_modules)

    def wrap(parent: nn.Module):
        for name, child in list(parent.named_children()):
            if isinstance(child, nn.Linear) and name in targets:
                setattr(parent, name, LoRALinear(child, rank, alpha, generator))
            else:
                wrap(child)

    wrap(model)
    return model


def lora_parameters(model: nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def lora_state_dict(model: nn.Module) -> dict:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def load_lora_state(model: nn.Module, state: dict) -> None:
    missing, unexpected = model.load_state_dict(state, strict=False)
    unexpected = [n for n in unexpected]
    if unexpected:
        raise ValueError(f"unexpected adapter tensors: {unexpected}")
    leftover = [n for n in missing if "lora_" in n]
    if leftover:
        raise ValueError(f"adapter tensors absent from checkpoint: {leftover}")
