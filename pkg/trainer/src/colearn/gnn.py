"""Type-specific projections and a relation-aware attention GNN.

Message passing runs over in-neighbors: for each directed edge j -> i the
message conditions on (h_i, h_j, edge features, relation), attention weights
normalize over each target's incoming edges, and the update mixes the node
state with the aggregate. Isolated nodes pass through the update with a zero
aggregate. Reverse edges carry a distinct "inverse-of:<relation>" tag by
default so information also flows tail -> head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

INVERSE_PREFIX = "inverse-of:"


@dataclass
class GNNConfig:
    d: int = 32                   # hidden dimension
    layers: int = 2
    heads: int = 1
    dropout: float = 0.4
    relations: list[str] = field(default_factory=list)
    edge_feature_dim: int = 9
    add_reverse_edges: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.d < 1 or self.heads < 1:
            raise ValueError("layers, d, and heads must be >= 1")

    def relation_index(self) -> dict[str, int]:
        labels = list(self.relations)
        if self.add_reverse_edges:
            labels += [INVERSE_PREFIX + r for r in self.relations]
        return {r: i for i, r in enumerate(labels)}


class TypeProjection(nn.Module):
    """One linear map per node type: h0 = W_type z_text (no bias, so the map
    is exactly linear)."""

    def __init__(self, d_text: int, d: int, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.weights = nn.ParameterDict({
            t: nn.Parameter(torch.randn(d, d_text, generator=gen) / d_text ** 0.5)
            for t in ("dx", "rx", "px")})

    def forward(self, z_text: torch.Tensor, types: list[str]) -> torch.Tensor:
        rows = []
        for z, t in zip(z_text, types):
            if t not in self.weights:
                raise KeyError(f"unknown node type {t!r}")
            rows.append(self.weights[t] @ z)
        return torch.stack(rows)


class EdgeIndex:
    """Edge arrays for a fixed node ordering, with reverse edges materialized
    and a canonical edge sort so the forward pass is independent of input
    edge order."""

    def __init__(self, edges, node_order: list[str], cfg: GNNConfig):
        index = {c: i for i, c in enumerate(node_order)}
        rel_index = cfg.relation_index()
        rows = []
        for e in edges:
            rows.append((index[e.tail], index[e.head], rel_index[e.relation],
                         e.features))
            if cfg.add_reverse_edges:
                rows.append((index[e.head], index[e.tail],
                             rel_index[INVERSE_PREFIX + e.relation], e.features))
        rows.sort(key=lambda r: (r[0], r[1], r[2]))
        self.tgt = torch.tensor([r[0] for r in rows], dtype=torch.long)
        self.src = torch.tensor([r[1] for r in rows], dtype=torch.long)
        self.rel = torch.tensor([r[2] for r in rows], dtype=torch.long)
        feat = torch.tensor([r[3] for r in rows], dtype=torch.float32) \
            if rows else torch.zeros((0, cfg.edge_feature_dim))
        # Per-dimension max-abs scaling: raw evidence features span several
        # orders of magnitude, which would saturate the message nonlinearity.
        if feat.numel():
            feat = feat / feat.abs().amax(dim=0).clamp(min=1.0)
        self.feat = feat
        self.n_nodes = len(node_order)


class GNNLayer(nn.Module):
    def __init__(self, cfg: GNNConfig):
        super().__init__()
        d, de = cfg.d, cfg.edge_feature_dim
        n_rel = len(cfg.relation_index())
        self.q = nn.Linear(d, d, bias=False)
        self.k = nn.Linear(d, d, bias=False)
        self.v = nn.Linear(d, d, bias=False)
        self.edge_proj = nn.Linear(de, d, bias=False)
        self.rel_emb = nn.Embedding(max(n_rel, 1), d)
        self.update = nn.Linear(2 * d, d)
        # Small update init keeps each layer near the identity at start, so
        # message passing refines the projected states instead of erasing them.
        with torch.no_grad():
            self.update.weight.mul_(0.01)
            self.update.bias.zero_()
        self.dropout = nn.Dropout(cfg.dropout)
        self.scale = d ** -0.5

    def forward(self, h: torch.Tensor, ei: EdgeIndex) -> torch.Tensor:
        agg = torch.zeros_like(h)
        if ei.tgt.numel():
            feat = ei.feat.to(h.dtype)
            edge_term = self.edge_proj(feat) + self.rel_emb(ei.rel)
            keys = self.k(h)[ei.src] + edge_term
            msgs = self.v(h)[ei.src] + edge_term
            scores = (self.q(h)[ei.tgt] * keys).sum(-1) * self.scale
            # Numerically stable per-target softmax via scatter ops.
            maxes = torch.full((h.shape[0],), -torch.inf, dtype=h.dtype)
            maxes = maxes.scatter_reduce(0, ei.tgt, scores, reduce="amax")
            exp = torch.exp(scores - maxes[ei.tgt])
            denom = torch.zeros(h.shape[0], dtype=h.dtype).index_add(0, ei.tgt, exp)
            weights = self.dropout(exp / denom[ei.tgt])
            agg = agg.index_add(0, ei.tgt, weights.unsqueeze(-1) * msgs)
        return h + torch.tanh(self.update(torch.cat([h, agg], dim=-1)))


class RelGNN(nn.Module):
    def __init__(self, cfg: GNNConfig):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.layers = nn.ModuleList(GNNLayer(cfg) for _ in range(cfg.layers))

    def forward(self, h0: torch.Tensor, ei: EdgeIndex) -> torch.Tensor:
        h = h0
        for layer in self.layers:
            h = layer(h, ei)
        return h


def build_embedding_matrix(h_final: torch.Tensor, kg_order: list[str],
                           h0_all: torch.Tensor, vocab_codes: list[str]
                           ) -> torch.Tensor:
    """Assemble Z (d x N, column i = embedding of vocab code i). Codes present
    in the KG use their final GNN state; the rest keep their projected h0."""
    kg_pos = {c: i for i, c in enumerate(kg_order)}
    cols = []
    for i, code in enumerate(vocab_codes):
        if code in kg_pos:
            cols.append(h_final[kg_pos[code]])
        else:
            cols.append(h0_all[i])
    return torch.stack(cols, dim=1)
