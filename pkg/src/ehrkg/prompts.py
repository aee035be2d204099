"""Deterministic rendering of relation-induction and node-description prompts.

Every prompt is a pure function of its structured inputs plus a pinned
template version; the sha256 content hash keys the response cache. Numbers are
always rendered to 4 decimals so prompts are byte-stable and round-trippable.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .codes import CodeType
from .evidence import CandidatePair, ChannelEvidence, EvidenceRecord
from .ingest import VocabEntry
from .relations import RelationPool, canonical_type_pair

TEMPLATE_VERSION = "relation-prompt/1.0"
NODE_TEMPLATE_VERSION = "node-prompt/1.0"

KIND_RELATION = "relation"
KIND_NODE = "node"


@dataclass(frozen=True)
class PromptText:
    text: str
    template_version: str
    kind: str

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RelationPromptInput:
    entry_a: VocabEntry
    entry_b: VocabEntry
    forward: EvidenceRecord            # codeA -> codeB
    backward: EvidenceRecord           # codeB -> codeA
    pool: RelationPool

    def __post_init__(self):
        tp, _ = canonical_type_pair(self.entry_a.code.type, self.entry_b.code.type)
        if tp != self.pool.type_pair:
            raise ValueError(
                f"pool {self.pool.type_pair.value} does not match code types "
                f"({self.entry_a.code.type.value}, {self.entry_b.code.type.value})")
        if {self.forward.src, self.forward.tgt} != {self.entry_a.code, self.entry_b.code}:
            raise ValueError("evidence records do not cover the prompted pair")

    @classmethod
    def from_candidate(cls, cp: CandidatePair, vocab) -> "RelationPromptInput":
        from .relations import pool_for
        return cls(entry_a=vocab[cp.code_a], entry_b=vocab[cp.code_b],
                   forward=cp.forward, backward=cp.backward,
                   pool=pool_for(cp.category))


def metrics_glossary() -> str:
    """Fixed glossary for the 8 directional metrics; embedded in every
    relation prompt verbatim."""
    return (
        "Metrics glossary:\n"
        "- cooc_support: number of visits in which both codes appear together.\n"
        "- cooc_condprob: Laplace-smoothed conditional probability of the target\n"
        "  code appearing in a visit given the source code appears in it.\n"
        "- cooc_pmi: pointwise mutual information (bits) of intra-visit\n"
        "  co-occurrence; 0 means independence, larger means stronger association.\n"
        "- cooc_p: chi-square p-value testing intra-visit dependence.\n"
        "- trans_support: number of adjacent visit pairs where the source code\n"
        "  appears in one visit and the target code in the next visit.\n"
        "- trans_condprob: Laplace-smoothed conditional probability of the target\n"
        "  appearing in the next visit given the source in the current visit.\n"
        "- trans_pmi: pointwise mutual information (bits) of the next-visit\n"
        "  transition.\n"
        "- trans_p: chi-square p-value testing transition dependence.\n"
    )


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def _channel_line(label: str, ev: ChannelEvidence) -> str:
    return (f"  {label}: support={ev.support}, condprob={_fmt(ev.condprob)}, "
            f"pmi={_fmt(ev.pmi)}, p={_fmt(ev.p)}")


def _direction_block(title: str, rec: EvidenceRecord) -> str:
    return (f"Direction {title} ({rec.src.key()} -> {rec.tgt.key()}):\n"
            + _channel_line("cooc", rec.cooc) + "\n"
            + _channel_line("trans", rec.trans))


_CONFIDENCE_BANDS = (
    "Confidence guidelines:\n"
    "- 0.9-1.0: certain; textbook knowledge and strong statistical support.\n"
    "- 0.7-0.9: confident; well-known relation with supportive statistics.\n"
    "- 0.5-0.7: plausible; clinically reasonable, statistics consistent.\n"
    "- 0.2-0.5: uncertain; weak prior or mixed statistical signals.\n"
    "- 0.0-0.2: speculative; prefer an abstention label instead.\n"
)


def build_relation_prompt(inp: RelationPromptInput) -> PromptText:
    """Render the evidence-conditioned relation-induction prompt.

    Fixed section order: code identities, the 8 directional metrics with
    glossary, the allowed relation list with definitions, the decision rubric,
    and the strict-JSON output contract."""
    a, b = inp.entry_a, inp.entry_b
    labels = "\n".join(
        f"- {label}: {inp.pool.definitions[label]}" for label in inp.pool.allowed)
    text = (
        f"[template: {TEMPLATE_VERSION}]\n"
        f"You are a clinical knowledge engineer deciding the relationship between\n"
        f"two medical codes observed in an EHR cohort.\n"
        f"\n"
        f"codeA: {a.code.key()} | name: {a.name} | category: {a.parent_category} "
        f"| visits: {a.frequency}\n"
        f"codeB: {b.code.key()} | name: {b.name} | category: {b.parent_category} "
        f"| visits: {b.frequency}\n"
        f"\n"
        f"Statistical evidence from the cohort:\n"
        f"{_direction_block('A->B', inp.forward)}\n"
        f"{_direction_block('B->A', inp.backward)}\n"
        f"\n"
        f"{metrics_glossary()}"
        f"\n"
        f"Allowed relations for a {inp.pool.type_pair.value} pair "
        f"(choose exactly one):\n"
        f"{labels}\n"
        f"\n"
        f"Decision rubric: judge clinical plausibility first, using the\n"
        f"statistics only as supporting or challenging evidence. If neither\n"
        f"clinical knowledge nor the statistics support a confident assignment,\n"
        f"choose an abstention label.\n"
        f"{_CONFIDENCE_BANDS}"
        f"\n"
        f"Return a strict JSON object with exactly these keys:\n"
        f'{{"relation": <label>, "triple": [<head code>, <label>, <tail code>],\n'
        f' "confidence": <0..1>, "reasoning": <50-60 words explaining the\n'
        f" clinical rationale and how the co-occurrence and transition\n"
        f" statistics support or challenge the decision>}}\n"
        f"The triple's head and tail must be codeA and codeB (either order),\n"
        f"oriented so the relation reads head-to-tail.\n"
    )
    return PromptText(text=text, template_version=TEMPLATE_VERSION, kind=KIND_RELATION)


_NODE_BODIES = {
    CodeType.DX: (
        "Describe this diagnosis for a clinical audience: typical presentation,\n"
        "common causes and risk factors, usual severity and course, and key\n"
        "nuances relevant to inpatient care."),
    CodeType.RX: (
        "Describe this medication for a clinical audience: mechanism of action,\n"
        "principal indications, role in care, and key safety nuances\n"
        "(interactions, contraindications, monitoring)."),
    CodeType.PX: (
        "Describe this procedure for a clinical audience: its purpose, when in\n"
        "the care workflow it is performed, what it involves, and key risks or\n"
        "contraindications."),
}


def build_node_prompt(entry: VocabEntry) -> PromptText:
    """Type-specific prompt asking for a concise clinical description."""
    text = (
        f"[template: {NODE_TEMPLATE_VERSION}]\n"
        f"code: {entry.code.key()} | name: {entry.name} "
        f"| category: {entry.parent_category}\n"
        f"{_NODE_BODIES[entry.code.type]}\n"
        f"Answer in a single plain-text paragraph of at most 120 words.\n"
    )
    return PromptText(text=text, template_version=NODE_TEMPLATE_VERSION, kind=KIND_NODE)


_PAIR_RE = re.compile(r"^codeA: (\S+) .*$\n^codeB: (\S+) ", re.MULTILINE)
_METRIC_RE = re.compile(
    r"Direction (A->B|B->A) \((\S+) -> (\S+)\):\n"
    r"  cooc: support=(\d+), condprob=([\d.]+|n/a), pmi=(-?[\d.]+|n/a), p=([\d.]+|n/a)\n"
    r"  trans: support=(\d+), condprob=([\d.]+|n/a), pmi=(-?[\d.]+|n/a), p=([\d.]+|n/a)")


def extract_pair(prompt_text: str) -> tuple[str, str]:
    """Recover the (codeA, codeB) wire keys from a rendered relation prompt."""
    m = _PAIR_RE.search(prompt_text)
    if m is None:
        raise ValueError("prompt does not contain a codeA/codeB header")
    return m.group(1), m.group(2)


def extract_metrics(prompt_text: str) -> dict[str, dict[str, float | None]]:
    """Parse the 8 metrics per direction back out of a rendered prompt.

    Returns {"A->B": {...}, "B->A": {...}}; the inverse of the renderer at
    4-decimal precision."""

    def num(s: str) -> float | None:
        return None if s == "n/a" else float(s)

    out: dict[str, dict[str, float | None]] = {}
    for m in _METRIC_RE.finditer(prompt_text):
        out[m.group(1)] = {
            "cooc_support": int(m.group(4)), "cooc_condprob": num(m.group(5)),
            "cooc_pmi": num(m.group(6)), "cooc_p": num(m.group(7)),
            "trans_support": int(m.group(8)), "trans_condprob": num(m.group(9)),
            "trans_pmi": num(m.group(10)), "trans_p": num(m.group(11)),
        }
    if set(out) != {"A->B", "B->A"}:
        raise ValueError("prompt does not contain both direction blocks")
    return out
