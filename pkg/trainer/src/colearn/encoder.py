"""Deterministic text featurizer plus a low-rank-adapted linear encoder.

A full pretrained language model is out of scope at desk scale; the encoder
keeps the same shape as one: a frozen base transformation of a deterministic
text feature vector, with trainable rank-r adapter matrices on top
(z = W0 x + (alpha/r) B A x, B zero-initialized so the adapted and frozen
encoders coincide at step 0).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import torch
from torch import nn

FEATURE_DIM = 256


@dataclass
class TextEncoderConfig:
    backbone: str = "hash-trigram"
    d_out: int = 32               # d_L, text embedding dimension
    rank: int = 8                 # adapter rank r
    alpha_lora: float = 32.0      # adapter scale
    pooling: str = "mean"         # mean | last-token
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1 or self.d_out < 1:
            raise ValueError("rank and d_out must be >= 1")
        if self.pooling not in ("mean", "last-token"):
            raise ValueError(f"unknown pooling {self.pooling!r}")


def _bucket(gram: str, slot: int = 0) -> int:
    digest = hashlib.sha256(gram.encode("utf-8")).digest()
    return int.from_bytes(digest[4 * slot:4 * slot + 4], "big") % FEATURE_DIM


def featurize(text: str, pooling: str = "mean") -> torch.Tensor:
    """Map text to a fixed hashed feature vector, unit-normalized.

    A hashed character-trigram profile keeps similar texts similar; a
    multi-bucket whole-string signature keeps distinct texts separable even
    when they differ by a single character. Deterministic across processes
    (sha256 bucketing, no PYTHONHASHSEED dependence)."""
    if not text.strip():
        raise ValueError("empty description")
    padded = f"^{text.strip().lower()}$"
    grams = [padded[i:i + 3] for i in range(max(1, len(padded) - 2))]
    vec = torch.zeros(FEATURE_DIM, dtype=torch.float32)
    if pooling == "last-token":
        vec[_bucket(grams[-1])] = 1.0
    else:
        for g in grams:
            vec[_bucket(g)] += 1.0
    vec /= torch.linalg.vector_norm(vec)
    whole = torch.zeros(FEATURE_DIM, dtype=torch.float32)
    for slot in range(4):
        whole[_bucket(padded, slot)] += 1.0
    whole /= torch.linalg.vector_norm(whole)
    out = 0.6 * vec + 0.8 * whole
    return out / torch.linalg.vector_norm(out)


class TextEncoder(nn.Module):
    """Frozen seeded base projection with LoRA-style adapters."""

    def __init__(self, cfg: TextEncoderConfig):
        super().__init__()
        self.cfg = cfg
        gen = torch.Generator().manual_seed(cfg.seed)
        base = torch.randn(cfg.d_out, FEATURE_DIM, generator=gen) / FEATURE_DIM ** 0.5
        self.register_buffer("base_weight", base)
        self.lora_a = nn.Parameter(
            torch.randn(cfg.rank, FEATURE_DIM, generator=gen) / FEATURE_DIM ** 0.5)
        self.lora_b = nn.Parameter(torch.zeros(cfg.d_out, cfg.rank))
        self.scale = cfg.alpha_lora / cfg.rank

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """features: (..., FEATURE_DIM) -> (..., d_out)."""
        out = features @ self.base_weight.T
        return out + self.scale * ((features @ self.lora_a.T) @ self.lora_b.T)

    def encode_texts(self, texts: list[str]) -> torch.Tensor:
        feats = torch.stack([featurize(t, self.cfg.pooling) for t in texts])
        return self(feats)
