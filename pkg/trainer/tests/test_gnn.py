import random

import pytest
import torch

from colearn.data import KG, KGEdge, Vocab, VocabEntry
from colearn.gnn import (EdgeIndex, GNNConfig, RelGNN, TypeProjection,
                         build_embedding_matrix)

def toy_kg(n_nodes=6, n_edges=8, seed=0) -> KG:
    rng = random.Random(seed)
    types = ["dx", "rx", "px"]
    codes = [f"{types[i % 3]}:N{i}" for i in range(n_nodes)]
    nodes = {c: f"description of {c}" for c in codes}
    relations = ["treats", "causes", "co_occurs_with"]
    edges, seen = [], set()
    while len(edges) < n_edges:
        h, t = rng.sample(codes, 2)
        r = rng.choice(relations)
        if (h, t, r) in seen:
            continue
        seen.add((h, t, r))
        edges.append(KGEdge(head=h, tail=t, relation=r,
                            confidence=rng.uniform(0.5, 1.0),
                            features=[rng.uniform(-2, 2) for _ in range(9)]))
    return KG(nodes=nodes, edges=edges, edge_feature_dim=9)


def make_cfg(**kw) -> GNNConfig:
    base = dict(d=6, layers=2, dropout=0.0, edge_feature_dim=9)
    base.update(kw)
    return GNNConfig(**base)


class TestTypeProjection:
    def test_zero_maps_to_zero(self):
        proj = TypeProjection(d_text=5, d=4)
        out = proj(torch.zeros(2, 5), ["dx", "rx"])
        assert torch.equal(out, torch.zeros(2, 4))

    def test_linearity(self):
        proj = TypeProjection(d_text=5, d=4)
        z = torch.randn(3, 5)
        out = proj(z, ["dx", "rx", "px"])
        doubled = proj(2 * z, ["dx", "rx", "px"])
        assert torch.allclose(doubled, 2 * out)

    def test_types_use_distinct_matrices(self):
        proj = TypeProjection(d_text=5, d=4)
        z = torch.randn(1, 5)
        assert not torch.allclose(proj(z, ["dx"]), proj(z, ["rx"]))

    def test_unknown_type(self):
        proj = TypeProjection(d_text=5, d=4)
        with pytest.raises(KeyError):
            proj(torch.randn(1, 5), ["lab"])


class TestGNNForward:
    def test_zero_edge_graph_is_per_node(self):
        kg = toy_kg(n_edges=0)
        # force an empty edge list
        kg.edges = []
        cfg = make_cfg(relations=[])
        order = sorted(kg.nodes)
        gnn = RelGNN(cfg)
        ei = EdgeIndex([], order, cfg)
        h0 = torch.randn(6, 6)
        out = gnn(h0, ei)
        # Node i's output depends only on its own h0: permuting other rows
        # leaves row i unchanged.
        h0_perm = h0.clone()
        h0_perm[1], h0_perm[2] = h0[2], h0[1]
        out_perm = gnn(h0_perm, ei)
        assert torch.allclose(out[0], out_perm[0])
        assert torch.allclose(out[3:], out_perm[3:])

    def test_edge_permutation_invariance(self):
        kg = toy_kg()
        cfg = make_cfg(relations=kg.relations())
        order = sorted(kg.nodes)
        gnn = RelGNN(cfg)
        h0 = torch.randn(6, 6)
        out_a = gnn(h0, EdgeIndex(kg.edges, order, cfg))
        shuffled = list(kg.edges)
        random.Random(7).shuffle(shuffled)
        out_b = gnn(h0, EdgeIndex(shuffled, order, cfg))
        assert torch.equal(out_a, out_b)

    def test_reverse_edges_feed_source_only_nodes(self):
        # One directed edge a -> b: without reverse edges node a is isolated
        # from b's state; with them, changing b's input changes a's output.
        nodes = {"dx:A": "a", "dx:B": "b"}
        edge = KGEdge("dx:A", "dx:B", "causes", 0.9, [0.0] * 9)
        order = ["dx:A", "dx:B"]
        h0 = torch.randn(2, 6)
        bumped = h0.clone()
        bumped[1] += 1.0

        cfg_rev = make_cfg(relations=["causes"], add_reverse_edges=True)
        gnn = RelGNN(cfg_rev)
        ei = EdgeIndex([edge], order, cfg_rev)
        assert not torch.allclose(gnn(h0, ei)[0], gnn(bumped, ei)[0])

        cfg_flat = make_cfg(relations=["causes"], add_reverse_edges=False)
        gnn2 = RelGNN(cfg_flat)
        ei2 = EdgeIndex([edge], order, cfg_flat)
        assert torch.allclose(gnn2(h0, ei2)[0], gnn2(bumped, ei2)[0])

    def test_unknown_node_rejected(self):
        kg = toy_kg()
        cfg = make_cfg(relations=kg.relations())
        with pytest.raises(KeyError):
            EdgeIndex(kg.edges, ["dx:N0"], cfg)

    def test_output_finite(self):
        kg = toy_kg(n_nodes=12, n_edges=30, seed=3)
        cfg = make_cfg(relations=kg.relations())
        gnn = RelGNN(cfg)
        out = gnn(torch.randn(12, 6), EdgeIndex(kg.edges, sorted(kg.nodes), cfg))
        assert torch.isfinite(out).all()


class TestEmbeddingMatrix:
    def test_shape_and_lookup_round_trip(self):
        kg = toy_kg()
        cfg = make_cfg(relations=kg.relations())
        order = sorted(kg.nodes)
        vocab_codes = order + ["dx:EXTRA"]
        h_final = torch.randn(6, 6)
        h0_all = torch.randn(7, 6)
        z = build_embedding_matrix(h_final, order, h0_all, vocab_codes)
        assert z.shape == (6, 7)
        for i, code in enumerate(vocab_codes):
            if code in kg.nodes:
                assert torch.equal(z[:, i], h_final[order.index(code)])
            else:
                assert torch.equal(z[:, i], h0_all[i])


def full_pipeline_loss(modules, feats, types, ei, kg_idx, head,
                       inputs, targets):
    """Encoder adapters -> projection -> GNN -> Z -> linear head -> BCE."""
    encoder, projection, gnn = modules
    z_text = encoder(feats)
    h0 = projection(z_text, types)
    h_final = gnn(h0[kg_idx], ei)
    z = h0.T.clone()
    z[:, kg_idx] = h_final.T
    logits = (inputs @ z.T) @ head.T
    probs = torch.sigmoid(logits)
    probs = probs.clamp(1e-9, 1 - 1e-9)
    return -(targets * probs.log() + (1 - targets) * (1 - probs).log()).mean()


def test_gradient_check_full_pipeline():
    """Analytic gradients vs central finite differences at float64 on a
    6-node, 8-edge toy graph."""
    from colearn.encoder import TextEncoder, TextEncoderConfig, featurize

    torch.manual_seed(0)
    kg = toy_kg(n_nodes=6, n_edges=8)
    order = sorted(kg.nodes)
    cfg = make_cfg(relations=kg.relations())
    encoder = TextEncoder(TextEncoderConfig(d_out=5)).double()
    with torch.no_grad():  # nonzero adapters so their gradients are exercised
        encoder.lora_b.normal_(0, 0.1)
    projection = TypeProjection(d_text=5, d=6).double()
    gnn = RelGNN(cfg).double()
    with torch.no_grad():  # move update weights off the tiny init
        for layer in gnn.layers:
            layer.update.weight.normal_(0, 0.2)
    head = torch.randn(4, 6, dtype=torch.float64, requires_grad=True)

    feats = torch.stack([featurize(kg.nodes[c]) for c in order]).double()
    types = [c.split(":")[0] for c in order]
    ei = EdgeIndex(kg.edges, order, cfg)
    kg_idx = torch.arange(6)
    inputs = (torch.rand(3, 6) < 0.5).double()
    targets = (torch.rand(3, 4) < 0.3).double()

    params = {"lora_a": encoder.lora_a, "lora_b": encoder.lora_b,
              "W_dx": projection.weights["dx"],
              "q0": gnn.layers[0].q.weight,
              "edge0": gnn.layers[0].edge_proj.weight,
              "rel0": gnn.layers[0].rel_emb.weight,
              "update1": gnn.layers[1].update.weight,
              "head": head}
    modules = (encoder, projection, gnn)

    loss = full_pipeline_loss(modules, feats, types, ei, kg_idx, head,
                              inputs, targets)
    grads = torch.autograd.grad(loss, list(params.values()))

    eps = 1e-6
    rng = random.Random(1)
    worst = 0.0
    for (name, p), g in zip(params.items(), grads):
        flat = p.detach().reshape(-1)
        n = flat.numel()
        picks = range(n) if n <= 30 else rng.sample(range(n), 30)
        for idx in picks:
            orig = flat[idx].item()
            with torch.no_grad():
                flat[idx] = orig + eps
            hi = full_pipeline_loss(modules, feats, types, ei, kg_idx, head,
                                    inputs, targets).item()
            with torch.no_grad():
                flat[idx] = orig - eps
            lo = full_pipeline_loss(modules, feats, types, ei, kg_idx, head,
                                    inputs, targets).item()
            with torch.no_grad():
                flat[idx] = orig
            fd = (hi - lo) / (2 * eps)
            analytic = g.reshape(-1)[idx].item()
            rel = abs(analytic - fd) / max(1.0, abs(analytic), abs(fd))
            worst = max(worst, rel)
            assert rel <= 1e-4, f"{name}[{idx}]: {analytic} vs {fd}"
    assert worst <= 1e-4
