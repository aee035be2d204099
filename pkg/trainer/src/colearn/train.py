"""Joint training of encoder adapters, projections, GNN, and backbone.

Each iteration the scheduler picks at most K codes whose text embeddings are
recomputed with gradient flow (through the adapters); every other code uses
its cached embedding. K=0 degenerates to frozen-encoder training: the cache
is filled once and the encoder parameters never enter the optimizer.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .backbone import BackboneConfig, SequenceModel, masked_bce
from .data import (KG, Patient, PredictionBatch, Vocab, code_type, make_batch,
                   node_text, train_label_frequencies)
from .encoder import TextEncoder, TextEncoderConfig, featurize
from .gnn import EdgeIndex, GNNConfig, RelGNN, TypeProjection
from .metrics import EvalReport, evaluate
from .scheduler import Scheduler

Z_SCHEMA = "concept-embeddings/1"


class TrainDiverged(RuntimeError):
    """Loss went non-finite; a checkpoint was written before aborting."""


@dataclass
class TrainConfig:
    k: int = 10                   # scheduler budget; 0 freezes the encoder
    m: int = 1
    rho: float = 0.5
    iterations: int = 200
    batch_size: int = 128
    lr: float = 5e-3
    seed: int = 0
    backbone: str = "transformer"
    use_kg: bool = True           # False: frozen random Z, backbone/head only
    encoder: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    gnn: GNNConfig = field(default_factory=GNNConfig)


class CoLearnModel(torch.nn.Module):
    """Everything upstream of the backbone: encoder, projections, GNN, and
    the embedding-matrix assembly over a fixed vocabulary and KG."""

    def __init__(self, vocab: Vocab, kg: KG, cfg: TrainConfig):
        super().__init__()
        self.vocab = vocab
        self.kg = kg
        self.cfg = cfg
        cfg.gnn.relations = kg.relations()
        cfg.gnn.edge_feature_dim = kg.edge_feature_dim or cfg.gnn.edge_feature_dim
        self.encoder = TextEncoder(cfg.encoder)
        self.projection = TypeProjection(cfg.encoder.d_out, cfg.gnn.d,
                                         seed=cfg.seed)
        self.gnn = RelGNN(cfg.gnn)
        self.kg_order = sorted(kg.nodes)
        self.edge_index = EdgeIndex(kg.edges, self.kg_order, cfg.gnn)
        self.types = [code_type(c) for c in vocab.codes()]
        feats = torch.stack([featurize(node_text(c, vocab, kg),
                                       cfg.encoder.pooling)
                             for c in vocab.codes()])
        self.register_buffer("text_features", feats)

    def text_embeddings(self, cache: torch.Tensor,
                        selected: set[str]) -> torch.Tensor:
        """Cached rows everywhere except the selected codes, which are
        re-encoded with gradient flow."""
        if not selected:
            return cache
        idx = torch.tensor([self.vocab.index[c] for c in sorted(selected)
                            if c in self.vocab.index], dtype=torch.long)
        fresh = self.encoder(self.text_features[idx])
        out = cache.clone()
        out[idx] = fresh
        return out

    def embedding_matrix(self, z_text: torch.Tensor) -> torch.Tensor:
        """Z (d x N): projected text states, message-passed for KG nodes."""
        h0 = self.projection(z_text, self.types)
        kg_idx = torch.tensor([self.vocab.index[c] for c in self.kg_order],
                              dtype=torch.long)
        h_final = self.gnn(h0[kg_idx], self.edge_index)
        z = h0.T.clone()
        z[:, kg_idx] = h_final.T
        return z


@dataclass
class TrainResult:
    z: np.ndarray                 # (d, N) float32
    report: EvalReport
    losses: list[float]
    model: CoLearnModel | None
    sequence_model: SequenceModel
    scheduler: Scheduler | None = None


def _split(patients: list[Patient], seed: int,
           test_frac: float = 0.25) -> tuple[list[Patient], list[Patient]]:
    order = list(patients)
    random.Random(seed).shuffle(order)
    n_test = max(1, int(len(order) * test_frac))
    return order[n_test:], order[:n_test]


def _flatten(probs: torch.Tensor, batch: PredictionBatch
             ) -> tuple[np.ndarray, np.ndarray]:
    keep = batch.mask.reshape(-1) > 0
    scores = probs.detach().numpy().reshape(-1, probs.shape[-1])[keep]
    labels = batch.targets.reshape(-1, batch.targets.shape[-1])[keep]
    return scores, labels


def train(patients: list[Patient], vocab: Vocab, kg: KG | None,
          cfg: TrainConfig, checkpoint_path: str | Path | None = None
          ) -> TrainResult:
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    train_pats, test_pats = _split(patients, cfg.seed)
    n_dx = len(vocab.dx_codes())

    seq_cfg = BackboneConfig(kind=cfg.backbone, d=cfg.gnn.d, n_dx=n_dx,
                             seed=cfg.seed)
    seq_model = SequenceModel(seq_cfg)
    params = list(seq_model.parameters())

    if cfg.use_kg:
        if kg is None:
            raise ValueError("use_kg requires a knowledge graph")
        model = CoLearnModel(vocab, kg, cfg)
        scheduler = Scheduler(k=max(cfg.k, 1), m=cfg.m, rho=cfg.rho)
        with torch.no_grad():
            cache = model.encoder(model.text_features)
        params += list(model.projection.parameters())
        params += list(model.gnn.parameters())
        if cfg.k > 0:
            params += list(model.encoder.parameters())
    else:
        model, scheduler = None, None
        gen = torch.Generator().manual_seed(cfg.seed)
        z_fixed = torch.randn(cfg.gnn.d, len(vocab), generator=gen)
        z_fixed /= cfg.gnn.d ** 0.5

    optimizer = torch.optim.Adam(params, lr=cfg.lr)
    losses: list[float] = []
    for _ in range(cfg.iterations):
        sample = rng.sample(train_pats, min(cfg.batch_size, len(train_pats)))
        batch = make_batch(sample, vocab)
        inputs = torch.from_numpy(batch.inputs)
        targets = torch.from_numpy(batch.targets)
        mask = torch.from_numpy(batch.mask)

        if cfg.use_kg:
            selected: set[str] = set()
            if cfg.k > 0:
                batch_codes = [c for p in sample for v in p.visits for c in v]
                scheduler.record_batch(batch_codes)
                selected = scheduler.next_update_set(set(batch_codes))
            z_text = model.text_embeddings(cache, selected)
            z = model.embedding_matrix(z_text)
        else:
            z = z_fixed

        probs = seq_model(z, inputs)
        loss = masked_bce(probs, targets, mask)
        if not torch.isfinite(loss):
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, seq_model, model, losses)
            raise TrainDiverged(f"non-finite loss at iteration {len(losses)}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))

        if cfg.use_kg and selected:
            with torch.no_grad():
                idx = torch.tensor([vocab.index[c] for c in sorted(selected)],
                                   dtype=torch.long)
                cache[idx] = model.encoder(model.text_features[idx])

    seq_model.eval()
    if model is not None:
        model.eval()
    with torch.no_grad():
        if cfg.use_kg:
            z = model.embedding_matrix(model.text_embeddings(cache, set()))
        else:
            z = z_fixed
        test_batch = make_batch(test_pats, vocab)
        probs = seq_model(z, torch.from_numpy(test_batch.inputs))
    scores, labels = _flatten(probs, test_batch)
    freq = train_label_frequencies(train_pats, vocab)
    report = evaluate(scores, labels, train_freq=freq)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, seq_model, model, losses)
    return TrainResult(z=z.numpy().astype(np.float32), report=report,
                       losses=losses, model=model, sequence_model=seq_model,
                       scheduler=scheduler)


def save_checkpoint(path: str | Path, seq_model: SequenceModel,
                    model: CoLearnModel | None, losses: list[float]) -> None:
    payload = {"sequence_model": seq_model.state_dict(),
               "colearn": model.state_dict() if model is not None else None,
               "losses": losses}
    torch.save(payload, path)


def export_z(z: np.ndarray, vocab: Vocab, out_dir: str | Path) -> None:
    """Row-major d x N float32 flat file with a JSON sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    z32 = np.ascontiguousarray(z, dtype=np.float32)
    (out / "Z.f32").write_bytes(z32.tobytes())
    sidecar = {"schema": Z_SCHEMA, "dtype": "float32", "order": "row-major",
               "shape": [int(z32.shape[0]), int(z32.shape[1])],
               "codes": vocab.codes()}
    (out / "Z.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def import_z(out_dir: str | Path) -> tuple[np.ndarray, list[str]]:
    out = Path(out_dir)
    sidecar = json.loads((out / "Z.json").read_text())
    if sidecar.get("schema") != Z_SCHEMA:
        raise ValueError(f"unsupported Z schema {sidecar.get('schema')!r}")
    d, n = sidecar["shape"]
    z = np.frombuffer((out / "Z.f32").read_bytes(), dtype=np.float32)
    return z.reshape(d, n), sidecar["codes"]
