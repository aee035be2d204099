"""Readers for the upstream pipeline's wire formats and batch construction.

Codes are handled as plain "type:id" keys (e.g. "dx:401") throughout this
package; the upstream library is never imported.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KG_SCHEMA = "kg/1"
CODE_TYPES = ("dx", "rx", "px")


class DataError(ValueError):
    """Malformed input artifact."""


def code_type(key: str) -> str:
    t, _, rest = key.partition(":")
    if t not in CODE_TYPES or not rest:
        raise DataError(f"bad code key {key!r}")
    return t


@dataclass
class VocabEntry:
    code: str                     # "type:id" key
    name: str
    parent_category: str
    frequency: int


@dataclass
class Vocab:
    """Vocabulary in file order; the order fixes the Z column layout."""
    entries: list[VocabEntry]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {e.code: i for i, e in enumerate(self.entries)}
        if len(self.index) != len(self.entries):
            raise DataError("duplicate codes in vocabulary")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, code: str) -> bool:
        return code in self.index

    def codes(self) -> list[str]:
        return [e.code for e in self.entries]

    def dx_codes(self) -> list[str]:
        return [e.code for e in self.entries if code_type(e.code) == "dx"]


def load_vocab(path: str | Path) -> Vocab:
    entries = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            entries.append(VocabEntry(
                code=f"{row['type']}:{row['id']}", name=row["name"],
                parent_category=row["parent_category"],
                frequency=int(row["frequency"])))
    if not entries:
        raise DataError(f"empty vocabulary {path}")
    return Vocab(entries)


@dataclass
class KGEdge:
    head: str
    tail: str
    relation: str
    confidence: float
    features: list[float]


@dataclass
class KG:
    nodes: dict[str, str]         # code key -> description text
    edges: list[KGEdge]
    edge_feature_dim: int

    def relations(self) -> list[str]:
        return sorted({e.relation for e in self.edges})


def load_kg(kg_dir: str | Path) -> KG:
    src = Path(kg_dir)
    meta = json.loads((src / "kg_meta.json").read_text())
    if meta.get("schema_version") != KG_SCHEMA:
        raise DataError(f"unsupported KG schema {meta.get('schema_version')!r}")
    nodes: dict[str, str] = {}
    for line in (src / "nodes.jsonl").read_text().splitlines():
        d = json.loads(line)
        nodes[f"{d['type']}:{d['code']}"] = d["description"]
    edges: list[KGEdge] = []
    for line in (src / "edges.jsonl").read_text().splitlines():
        d = json.loads(line)
        for endpoint in (d["head"], d["tail"]):
            if endpoint not in nodes:
                raise DataError(f"edge references unknown node {endpoint}")
        edges.append(KGEdge(head=d["head"], tail=d["tail"],
                            relation=d["relation"],
                            confidence=d["confidence"],
                            features=list(d["features"])))
    dims = {len(e.features) for e in edges}
    if len(dims) > 1:
        raise DataError(f"inconsistent edge feature dims {sorted(dims)}")
    return KG(nodes=nodes, edges=edges,
              edge_feature_dim=dims.pop() if dims else 0)


def node_text(code: str, vocab: Vocab, kg: KG | None) -> str:
    """Description for a code: the KG node text when present, else a fallback
    built from the vocabulary row (codes filtered out upstream still need a
    text representation)."""
    if kg is not None and code in kg.nodes:
        return kg.nodes[code]
    entry = vocab.entries[vocab.index[code]]
    return f"{entry.name} ({entry.parent_category})"


@dataclass
class Patient:
    patient_id: str
    visits: list[list[str]]       # ordered visits of code keys


def load_cohort(path: str | Path) -> list[Patient]:
    patients = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            visits = [[f"{c['type']}:{c['id']}" for c in visit]
                      for visit in d["visits"]]
            patients.append(Patient(patient_id=d["patient_id"], visits=visits))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"{path}:{lineno}: bad cohort record: {e}")
    if not patients:
        raise DataError(f"empty cohort {path}")
    return patients


@dataclass
class PredictionBatch:
    """Padded multi-hot visit tensors plus next-visit diagnosis targets.

    inputs:  (B, T, N)  multi-hot over the full vocabulary, u_1..u_T
    targets: (B, T, N_dx) next-visit diagnosis multi-hot, aligned with inputs
    mask:    (B, T) 1 where a (visit, next-visit) pair exists
    """
    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    patient_ids: list[str]


def make_batch(patients: list[Patient], vocab: Vocab) -> PredictionBatch:
    """Build one padded batch; each patient contributes visits 1..T-1 as
    inputs, each predicting the diagnoses of the following visit."""
    dx_codes = vocab.dx_codes()
    dx_index = {c: i for i, c in enumerate(dx_codes)}
    n, n_dx = len(vocab), len(dx_codes)
    usable = [p for p in patients if len(p.visits) >= 2]
    if not usable:
        raise DataError("no patient has two or more visits")
    t_max = max(len(p.visits) - 1 for p in usable)
    inputs = np.zeros((len(usable), t_max, n), dtype=np.float32)
    targets = np.zeros((len(usable), t_max, n_dx), dtype=np.float32)
    mask = np.zeros((len(usable), t_max), dtype=np.float32)
    for b, p in enumerate(usable):
        for t in range(len(p.visits) - 1):
            for code in p.visits[t]:
                if code in vocab:
                    inputs[b, t, vocab.index[code]] = 1.0
            for code in p.visits[t + 1]:
                if code in dx_index:
                    targets[b, t, dx_index[code]] = 1.0
            mask[b, t] = 1.0
    return PredictionBatch(inputs=inputs, targets=targets, mask=mask,
                           patient_ids=[p.patient_id for p in usable])


def train_label_frequencies(patients: list[Patient], vocab: Vocab) -> np.ndarray:
    """Per-diagnosis-label occurrence counts over all visits (for quartile
    stratification during evaluation)."""
    dx_index = {c: i for i, c in enumerate(vocab.dx_codes())}
    freq = np.zeros(len(dx_index), dtype=np.int64)
    for p in patients:
        for visit in p.visits:
            for code in visit:
                if code in dx_index:
                    freq[dx_index[code]] += 1
    return freq
