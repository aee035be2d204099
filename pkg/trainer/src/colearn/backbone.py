"""Sequential backbone over visit embeddings and the multi-label head.

v_t = Z u_t turns each multi-hot visit into a dense vector; the backbone
produces a patient state per timestep; the head emits sigmoid probabilities
over the diagnosis labels, trained with multi-label cross-entropy at every
timestep that has a next visit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn


@dataclass
class BackboneConfig:
    kind: str = "transformer"     # transformer | identity
    d: int = 32
    n_dx: int = 0
    n_layers: int = 1
    n_heads: int = 2
    dropout: float = 0.0
    max_len: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("transformer", "identity"):
            raise ValueError(f"unknown backbone {self.kind!r}")
        if self.n_dx < 1:
            raise ValueError("n_dx must be >= 1")


class SequenceModel(nn.Module):
    """Backbone + sigmoid head. Swapping the backbone kind changes only the
    internals of the per-timestep state computation; Z handling and the head
    are untouched."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        if cfg.kind == "transformer":
            pos = torch.zeros(cfg.max_len, cfg.d)
            t = torch.arange(cfg.max_len, dtype=torch.float32).unsqueeze(1)
            div = torch.exp(torch.arange(0, cfg.d, 2, dtype=torch.float32)
                            * (-math.log(10000.0) / cfg.d))
            pos[:, 0::2] = torch.sin(t * div)
            pos[:, 1::2] = torch.cos(t * div[: (cfg.d + 1) // 2])
            self.register_buffer("positional", pos)
            layer = nn.TransformerEncoderLayer(
                d_model=cfg.d, nhead=cfg.n_heads, dim_feedforward=2 * cfg.d,
                dropout=cfg.dropout, batch_first=True, activation="gelu")
            self.encoder = nn.TransformerEncoder(layer, num_layers=cfg.n_layers)
        self.head = nn.Linear(cfg.d, cfg.n_dx)

    def states(self, visits: torch.Tensor) -> torch.Tensor:
        """visits: (B, T, d) dense visit vectors -> (B, T, d) causal states."""
        if self.cfg.kind == "identity":
            return visits
        t = visits.shape[1]
        if t > self.cfg.max_len:
            raise ValueError(f"sequence length {t} exceeds max_len {self.cfg.max_len}")
        x = visits + self.positional[:t].to(visits.dtype)
        causal = torch.full((t, t), float("-inf"), dtype=visits.dtype).triu(1)
        return self.encoder(x, mask=causal)

    def forward(self, z: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor:
        """z: (d, N); inputs: (B, T, N) multi-hot -> (B, T, n_dx) probabilities."""
        if inputs.shape[1] == 0:
            raise ValueError("sequence of length 0")
        visits = inputs @ z.T                     # v_t = Z u_t, batched
        return torch.sigmoid(self.head(self.states(visits)))


def masked_bce(probs: torch.Tensor, targets: torch.Tensor,
               mask: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Multi-label cross-entropy averaged over unmasked timesteps."""
    probs = probs.clamp(eps, 1 - eps)
    per_label = -(targets * probs.log() + (1 - targets) * (1 - probs).log())
    per_step = per_label.mean(-1)
    return (per_step * mask).sum() / mask.sum().clamp(min=1)
