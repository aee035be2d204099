"""Pairwise statistical evidence over a cohort.

For every directed code pair we compute, in two channels (intra-visit
co-occurrence and next-visit transition): support, Laplace-smoothed
conditional probability, PMI in bits, and a chi-square p-value from the
2x2 contingency table. Pairs passing the configured thresholds become
candidates for relation induction.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .codes import CodeId
from .ingest import Cohort
from .relations import TypePair, canonical_type_pair

CHANNEL_COOCCUR = "cooc"
CHANNEL_TRANSITION = "trans"


@dataclass
class CountTable:
    channel: str
    n: int                                        # visits or adjacent visit pairs
    src_marginal: Counter = field(default_factory=Counter)
    tgt_marginal: Counter = field(default_factory=Counter)
    joint: Counter = field(default_factory=Counter)   # keyed (src, tgt); symmetric for cooc

    def joint_count(self, src: CodeId, tgt: CodeId) -> int:
        if self.channel == CHANNEL_COOCCUR:
            a, b = sorted((src, tgt))
            return self.joint.get((a, b), 0)
        return self.joint.get((src, tgt), 0)

    def merge(self, other: "CountTable") -> "CountTable":
        """Associative, commutative merge of per-shard tables."""
        assert self.channel == other.channel
        out = CountTable(channel=self.channel, n=self.n + other.n)
        out.src_marginal = self.src_marginal + other.src_marginal
        out.tgt_marginal = self.tgt_marginal + other.tgt_marginal
        out.joint = self.joint + other.joint
        return out


def count_cooccurrence(cohort: Cohort) -> CountTable:
    """Visits containing each code and each unordered pair; N = total visits."""
    table = CountTable(channel=CHANNEL_COOCCUR, n=0)
    for visit in cohort.iter_visits():
        table.n += 1
        codes = sorted(visit.codes)
        for code in codes:
            table.src_marginal[code] += 1
        for i, a in enumerate(codes):
            for b in codes[i + 1:]:
                table.joint[(a, b)] += 1
    table.tgt_marginal = table.src_marginal
    return table


def count_transitions(cohort: Cohort) -> CountTable:
    """Adjacent-visit transitions; N = sum over patients of (T_j - 1).

    A (src, tgt) transition is counted once per adjacent visit pair."""
    table = CountTable(channel=CHANNEL_TRANSITION, n=0)
    for patient in cohort.patients:
        for prev, nxt in zip(patient.visits, patient.visits[1:]):
            table.n += 1
            for code in prev.codes:
                table.src_marginal[code] += 1
            for code in nxt.codes:
                table.tgt_marginal[code] += 1
            for a in prev.codes:
                for b in nxt.codes:
                    if a != b:
                        table.joint[(a, b)] += 1
    return table


def smoothed_cond_prob(joint: int, src: int, alpha: float, vocab_size: int) -> float:
    """Laplace-smoothed P(tgt|src) = (joint + alpha) / (src + alpha * vocab_size)."""
    if joint > src:
        raise ValueError(f"joint count {joint} exceeds source count {src}")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    return (joint + alpha) / (src + alpha * vocab_size)


def pmi(joint: int, src: int, tgt: int, n: int) -> float:
    """Pointwise mutual information in bits from raw empirical probabilities."""
    if joint < 1 or src < 1 or tgt < 1 or n < 1:
        raise ValueError("pmi requires positive counts")
    # Single division keeps round ratios (e.g. exactly 1 or 2) exact in floats.
    return math.log2(joint * n / (src * tgt))


def chi_square_p(a: int, b: int, c: int, d: int) -> tuple[float, float]:
    """Pearson chi-square on the 2x2 table [[a, b], [c, d]], 1 dof, no
    continuity correction. Returns (statistic, upper-tail p). Any zero margin
    yields (0, 1)."""
    n = a + b + c + d
    if n < 1:
        raise ValueError("empty contingency table")
    r1, r2, c1, c2 = a + b, c + d, a + c, b + d
    if 0 in (r1, r2, c1, c2):
        return 0.0, 1.0
    stat = n * (a * d - b * c) ** 2 / (r1 * r2 * c1 * c2)
    # Upper tail of chi-square with 1 dof: P(X > x) = erfc(sqrt(x/2)).
    p = math.erfc(math.sqrt(stat / 2.0))
    return stat, p


@dataclass
class ChannelEvidence:
    support: int
    condprob: float
    pmi: float | None           # None when support is zero (sentinel, never a number)
    p: float

    def to_dict(self) -> dict:
        return {"support": self.support, "condprob": self.condprob,
                "pmi": self.pmi, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelEvidence":
        return cls(support=d["support"], condprob=d["condprob"], pmi=d["pmi"], p=d["p"])


@dataclass
class EvidenceRecord:
    src: CodeId
    tgt: CodeId
    cooc: ChannelEvidence
    trans: ChannelEvidence

    def channel(self, name: str) -> ChannelEvidence:
        return self.cooc if name == CHANNEL_COOCCUR else self.trans

    def to_dict(self) -> dict:
        return {"src": self.src.key(), "tgt": self.tgt.key(),
                "cooc": self.cooc.to_dict(), "trans": self.trans.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceRecord":
        return cls(src=CodeId.from_key(d["src"]), tgt=CodeId.from_key(d["tgt"]),
                   cooc=ChannelEvidence.from_dict(d["cooc"]),
                   trans=ChannelEvidence.from_dict(d["trans"]))


@dataclass
class FilterConfig:
    alpha: float = 1.0
    min_support: int = 10
    min_pmi: float = 0.0
    max_p: float = 0.01
    channels_required: str = "either"       # either | both

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 < self.max_p <= 1.0:
            raise ValueError("max_p must be in (0,1]")
        if self.channels_required not in ("either", "both"):
            raise ValueError("channels_required must be 'either' or 'both'")

    @classmethod
    def from_json(cls, path: str | Path) -> "FilterConfig":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class CandidatePair:
    """An unordered retained pair with both directed evidence records."""

    forward: EvidenceRecord            # codeA -> codeB in canonical role order
    backward: EvidenceRecord
    category: TypePair

    @property
    def code_a(self) -> CodeId:
        return self.forward.src

    @property
    def code_b(self) -> CodeId:
        return self.forward.tgt

    def record_for(self, head: CodeId, tail: CodeId) -> EvidenceRecord:
        if (head, tail) == (self.forward.src, self.forward.tgt):
            return self.forward
        if (head, tail) == (self.backward.src, self.backward.tgt):
            return self.backward
        raise KeyError(f"({head.key()}, {tail.key()}) is not this pair")

    def to_dict(self) -> dict:
        return {"category": self.category.value,
                "forward": self.forward.to_dict(),
                "backward": self.backward.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CandidatePair":
        return cls(forward=EvidenceRecord.from_dict(d["forward"]),
                   backward=EvidenceRecord.from_dict(d["backward"]),
                   category=TypePair(d["category"]))


def _channel_evidence(joint: int, src: int, tgt: int, n: int,
                      alpha: float, vocab_size: int) -> ChannelEvidence:
    condprob = smoothed_cond_prob(joint, src, alpha, vocab_size)
    if joint == 0:
        return ChannelEvidence(support=0, condprob=condprob, pmi=None, p=1.0)
    a, b, c = joint, src - joint, tgt - joint
    d = n - a - b - c
    _, p = chi_square_p(a, b, c, max(d, 0))
    return ChannelEvidence(support=joint, condprob=condprob,
                           pmi=pmi(joint, src, tgt, n), p=p)


def build_evidence_table(cohort: Cohort,
                         cfg: FilterConfig | None = None) -> dict[tuple[CodeId, CodeId], EvidenceRecord]:
    """All 8 metrics for every directed pair with support in either channel."""
    cfg = cfg or FilterConfig()
    cooc = count_cooccurrence(cohort)
    trans = count_transitions(cohort)
    vocab_size = len(cohort.all_codes())

    directed: set[tuple[CodeId, CodeId]] = set()
    for (a, b) in cooc.joint:
        directed.add((a, b))
        directed.add((b, a))
    for (a, b) in trans.joint:
        directed.add((a, b))
        directed.add((b, a))

    table: dict[tuple[CodeId, CodeId], EvidenceRecord] = {}
    for (src, tgt) in directed:
        cooc_ev = _channel_evidence(
            cooc.joint_count(src, tgt), cooc.src_marginal.get(src, 0),
            cooc.tgt_marginal.get(tgt, 0), cooc.n, cfg.alpha, vocab_size)
        trans_ev = _channel_evidence(
            trans.joint_count(src, tgt), trans.src_marginal.get(src, 0),
            trans.tgt_marginal.get(tgt, 0), trans.n, cfg.alpha, vocab_size)
        table[(src, tgt)] = EvidenceRecord(src=src, tgt=tgt, cooc=cooc_ev, trans=trans_ev)
    return table


def _passes(ev: ChannelEvidence, cfg: FilterConfig) -> bool:
    return (ev.support >= cfg.min_support
            and ev.pmi is not None and ev.pmi >= cfg.min_pmi
            and ev.p <= cfg.max_p)


def filter_pairs(evidence: dict[tuple[CodeId, CodeId], EvidenceRecord],
                 cfg: FilterConfig | None = None) -> list[CandidatePair]:
    """Retain unordered pairs where some direction satisfies the thresholds in
    the required channel combination. Output is sorted by (codeA, codeB)."""
    cfg = cfg or FilterConfig()
    retained: list[CandidatePair] = []
    seen: set[frozenset] = set()
    for (src, tgt), rec in evidence.items():
        key = frozenset({src, tgt})
        if key in seen:
            continue
        rev = evidence.get((tgt, src))
        if rev is None:
            continue
        keep = False
        for direction in (rec, rev):
            cooc_ok = _passes(direction.cooc, cfg)
            trans_ok = _passes(direction.trans, cfg)
            if cfg.channels_required == "either":
                keep = keep or cooc_ok or trans_ok
            else:
                keep = keep or (cooc_ok and trans_ok)
        if not keep:
            continue
        seen.add(key)
        category, role_a_type = canonical_type_pair(src.type, tgt.type)
        # Canonical codeA: the canonical role type; within-type pairs sort lexically.
        a, b = sorted((src, tgt))
        if a.type != b.type and a.type != role_a_type:
            a, b = b, a
        retained.append(CandidatePair(
            forward=evidence[(a, b)], backward=evidence[(b, a)], category=category))
    retained.sort(key=lambda cp: (cp.code_a, cp.code_b))
    return retained


def category_histogram(pairs: list[CandidatePair]) -> dict[str, int]:
    counts = Counter(cp.category.value for cp in pairs)
    return {tp.value: counts.get(tp.value, 0) for tp in TypePair}


def save_evidence(table: dict[tuple[CodeId, CodeId], EvidenceRecord],
                  path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for key in sorted(table):
            fh.write(json.dumps(table[key].to_dict()) + "\n")


def load_evidence(path: str | Path) -> dict[tuple[CodeId, CodeId], EvidenceRecord]:
    table = {}
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                rec = EvidenceRecord.from_dict(json.loads(line))
                table[(rec.src, rec.tgt)] = rec
    return table


def save_candidates(pairs: list[CandidatePair], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for cp in pairs:
            fh.write(json.dumps(cp.to_dict()) + "\n")


def load_candidates(path: str | Path) -> list[CandidatePair]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(CandidatePair.from_dict(json.loads(line)))
    return out
