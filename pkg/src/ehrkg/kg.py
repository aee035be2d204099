"""Assembly, reporting, ablation, audit sampling, and serialization of the
text-attributed heterogeneous knowledge graph."""

from __future__ import annotations

import json
import math
import os
import random
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .codes import CodeId, CodeType
from .evidence import CandidatePair, EvidenceRecord
from .gateway import NodeDescription, RelationJudgment
from .relations import TypePair, canonical_type_pair, is_abstention

SCHEMA_VERSION = "kg/1"

PMI_CLIP = 10.0
NEGLOG10_P_CAP = 50.0


class KGError(ValueError):
    """Inconsistent inputs or serialized graph files."""


@dataclass(frozen=True)
class KGNode:
    code: CodeId
    name: str
    parent_category: str
    frequency: int
    description: str

    def to_dict(self) -> dict:
        return {"code": self.code.id, "type": self.code.type.value,
                "name": self.name, "parent": self.parent_category,
                "frequency": self.frequency, "description": self.description}

    @classmethod
    def from_dict(cls, d: dict) -> "KGNode":
        return cls(code=CodeId(id=d["code"], type=CodeType.parse(d["type"])),
                   name=d["name"], parent_category=d["parent"],
                   frequency=d["frequency"], description=d["description"])


def edge_features(evidence: EvidenceRecord, confidence: float) -> list[float]:
    """The 9-dimensional edge feature vector: four bounded transforms of each
    channel's metrics plus the judgment confidence. Always finite."""

    def channel(ev) -> list[float]:
        pmi_val = 0.0 if ev.pmi is None else max(-PMI_CLIP, min(PMI_CLIP, ev.pmi))
        if ev.p <= 0.0:
            neglog_p = NEGLOG10_P_CAP
        else:
            neglog_p = min(NEGLOG10_P_CAP, -math.log10(ev.p))
        return [math.log1p(ev.support), ev.condprob, pmi_val, neglog_p]

    return channel(evidence.cooc) + channel(evidence.trans) + [confidence]


@dataclass(frozen=True)
class KGEdge:
    head: CodeId
    tail: CodeId
    relation: str
    confidence: float
    rationale: str
    features: tuple[float, ...]
    reverse_evidence: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"head": self.head.key(), "tail": self.tail.key(),
                "relation": self.relation, "confidence": self.confidence,
                "rationale": self.rationale, "features": list(self.features),
                "reverse_evidence": self.reverse_evidence}

    @classmethod
    def from_dict(cls, d: dict) -> "KGEdge":
        return cls(head=CodeId.from_key(d["head"]), tail=CodeId.from_key(d["tail"]),
                   relation=d["relation"], confidence=d["confidence"],
                   rationale=d["rationale"], features=tuple(d["features"]),
                   reverse_evidence=d.get("reverse_evidence", {}))


@dataclass
class KnowledgeGraph:
    nodes: dict[CodeId, KGNode] = field(default_factory=dict)
    edges: list[KGEdge] = field(default_factory=list)

    @property
    def relations_realized(self) -> set[str]:
        return {e.relation for e in self.edges}

    def sorted_edges(self) -> list[KGEdge]:
        return sorted(self.edges, key=lambda e: (e.head, e.tail, e.relation))

    def check(self) -> None:
        for e in self.edges:
            if e.head not in self.nodes or e.tail not in self.nodes:
                raise KGError(f"edge {e.head.key()}->{e.tail.key()} has a dangling endpoint")
            if e.head == e.tail:
                raise KGError(f"self-loop on {e.head.key()}")
            if is_abstention(e.relation):
                raise KGError(f"abstention label {e.relation} materialized as an edge")


@dataclass
class AssembleConfig:
    confidence_floor: float = 0.5


def assemble_kg(candidates: list[CandidatePair],
                judgments: list[RelationJudgment],
                descriptions: list[NodeDescription],
                vocab,
                config: AssembleConfig | None = None) -> KnowledgeGraph:
    """Turn judgments over candidate pairs into the final graph.

    Abstentions and judgments below the confidence floor are dropped. Edge
    direction follows the judgment triple; features use the evidence record for
    that direction, with the reverse direction preserved as metadata.
    Duplicate (head, tail, relation) edges keep the max-confidence copy."""
    config = config or AssembleConfig()
    by_pair = {frozenset({cp.code_a, cp.code_b}): cp for cp in candidates}
    desc_by_code = {d.code: d.text for d in descriptions}

    best: dict[tuple[CodeId, CodeId, str], KGEdge] = {}
    for j in judgments:
        if is_abstention(j.relation) or j.confidence < config.confidence_floor:
            continue
        cp = by_pair.get(frozenset({j.code_a, j.code_b}))
        if cp is None:
            raise KGError(f"judgment pair ({j.code_a.key()}, {j.code_b.key()}) "
                          f"is not among the candidates")
        forward = cp.record_for(j.head, j.tail)
        backward = cp.record_for(j.tail, j.head)
        edge = KGEdge(head=j.head, tail=j.tail, relation=j.relation,
                      confidence=j.confidence, rationale=j.reasoning,
                      features=tuple(edge_features(forward, j.confidence)),
                      reverse_evidence=backward.to_dict())
        key = (edge.head, edge.tail, edge.relation)
        if key not in best or edge.confidence > best[key].confidence:
            best[key] = edge

    kg = KnowledgeGraph()
    for edge in best.values():
        for endpoint in (edge.head, edge.tail):
            if endpoint in kg.nodes:
                continue
            if endpoint not in desc_by_code:
                raise KGError(f"no description for retained node {endpoint.key()}")
            entry = vocab[endpoint]
            kg.nodes[endpoint] = KGNode(
                code=endpoint, name=entry.name,
                parent_category=entry.parent_category,
                frequency=entry.frequency,
                description=desc_by_code[endpoint])
        kg.edges.append(edge)
    kg.edges = kg.sorted_edges()
    kg.check()
    return kg


def relation_histogram(kg: KnowledgeGraph) -> dict[str, int]:
    """Edge counts per relation label, sorted descending (ties by label)."""
    counts = Counter(e.relation for e in kg.edges)
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


def ablate_relation_family(kg: KnowledgeGraph,
                           family: TypePair | str) -> tuple[KnowledgeGraph, int]:
    """Drop all edges matching a type-pair family or a single relation label.

    Nodes are untouched; returns the new graph and the removed edge count."""
    if isinstance(family, TypePair):
        def matches(e: KGEdge) -> bool:
            tp, _ = canonical_type_pair(e.head.type, e.tail.type)
            return tp == family
    else:
        def matches(e: KGEdge) -> bool:
            return e.relation == family

    kept = [e for e in kg.edges if not matches(e)]
    removed = len(kg.edges) - len(kept)
    return KnowledgeGraph(nodes=dict(kg.nodes), edges=kept), removed


def audit_sample(kg: KnowledgeGraph, top_n: int = 10, per_relation: int = 5,
                 seed: int = 0) -> tuple[list[KGEdge], dict[str, int]]:
    """Sample per_relation edges from each of the top_n most frequent relation
    labels, deterministically under the seed.

    Returns the sample and a shortfall map for relations with fewer edges than
    requested."""
    hist = relation_histogram(kg)
    top = list(hist)[:top_n]
    rng = random.Random(seed)
    sample: list[KGEdge] = []
    shortfall: dict[str, int] = {}
    for relation in top:
        pool = [e for e in kg.sorted_edges() if e.relation == relation]
        if len(pool) <= per_relation:
            chosen = pool
            if len(pool) < per_relation:
                shortfall[relation] = per_relation - len(pool)
        else:
            chosen = rng.sample(pool, per_relation)
        sample.extend(chosen)
    return sample, shortfall


def write_audit_file(kg: KnowledgeGraph, sample: list[KGEdge], path: str | Path) -> None:
    """CSV for the two-reviewer audit, with blank 1-5 rating columns."""
    import csv

    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["head", "head_name", "tail", "tail_name", "relation",
                         "confidence", "rationale", "rating_reviewer_1",
                         "rating_reviewer_2"])
        for e in sample:
            writer.writerow([e.head.key(), kg.nodes[e.head].name,
                             e.tail.key(), kg.nodes[e.tail].name,
                             e.relation, e.confidence, e.rationale, "", ""])


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_kg(kg: KnowledgeGraph, out_dir: str | Path, config_snapshot: dict | None = None) -> None:
    """Write nodes.jsonl, edges.jsonl, and kg_meta.json with stable ordering."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes_text = "".join(json.dumps(kg.nodes[c].to_dict()) + "\n"
                         for c in sorted(kg.nodes))
    edges_text = "".join(json.dumps(e.to_dict()) + "\n" for e in kg.sorted_edges())
    meta = {"schema_version": SCHEMA_VERSION,
            "n_nodes": len(kg.nodes), "n_edges": len(kg.edges),
            "config": config_snapshot or {}}
    _atomic_write(out / "nodes.jsonl", nodes_text)
    _atomic_write(out / "edges.jsonl", edges_text)
    _atomic_write(out / "kg_meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def import_kg(in_dir: str | Path) -> KnowledgeGraph:
    src = Path(in_dir)
    meta_path = src / "kg_meta.json"
    if not meta_path.exists():
        raise KGError(f"missing kg_meta.json in {src}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise KGError(f"schema version mismatch: {meta.get('schema_version')!r} "
                      f"!= {SCHEMA_VERSION!r}")
    kg = KnowledgeGraph()
    with (src / "nodes.jsonl").open() as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                node = KGNode.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError) as e:
                raise KGError(f"nodes.jsonl line {line_no}: {e}")
            kg.nodes[node.code] = node
    with (src / "edges.jsonl").open() as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                kg.edges.append(KGEdge.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise KGError(f"edges.jsonl line {line_no}: {e}")
    kg.check()
    return kg
