"""Synthetic EHR cohorts with planted pairwise dependencies.

The generator is the ground-truth oracle for the rest of the test suite:
planted rules drive both the statistical-recovery checks and the mock LLM.
Background codes are i.i.d. so unplanted pairs behave like independence.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .codes import CodeId, CodeType
from .ingest import Cohort, Patient, Visit, Vocabulary, VocabEntry, save_cohort, save_vocabulary
from .relations import canonical_type_pair, relations_for, is_abstention

CHANNEL_COOCCUR = "cooccur"
CHANNEL_TRANSITION = "transition"

_TYPE_NOUN = {CodeType.DX: "Condition", CodeType.RX: "Drug", CodeType.PX: "Procedure"}


@dataclass(frozen=True)
class PlantedRule:
    src: CodeId
    tgt: CodeId
    channel: str                    # cooccur | transition
    strength: float
    relation: str                   # ground truth for the mock oracle

    def __post_init__(self):
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"rule strength {self.strength} outside [0,1]")
        if self.channel not in (CHANNEL_COOCCUR, CHANNEL_TRANSITION):
            raise ValueError(f"unknown channel {self.channel!r}")
        pool = relations_for(self.src.type, self.tgt.type)
        if self.relation not in pool:
            raise ValueError(
                f"relation {self.relation!r} invalid for pair "
                f"({self.src.type.value}, {self.tgt.type.value})")

    def pair_key(self) -> frozenset:
        return frozenset({self.src, self.tgt})

    def to_dict(self) -> dict:
        return {
            "src": self.src.key(), "tgt": self.tgt.key(),
            "channel": self.channel, "strength": self.strength,
            "relation": self.relation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlantedRule":
        return cls(src=CodeId.from_key(d["src"]), tgt=CodeId.from_key(d["tgt"]),
                   channel=d["channel"], strength=d["strength"], relation=d["relation"])


@dataclass
class SynthConfig:
    n_patients: int = 2000
    min_visits: int = 3
    max_visits: int = 6
    vocab_sizes: dict[CodeType, int] = field(
        default_factory=lambda: {CodeType.DX: 50, CodeType.RX: 40, CodeType.PX: 30})
    background_prob: float = 0.05
    # When set, each visit draws exactly this many codes of each type instead
    # of the Bernoulli background; useful for fixed-length cohorts.
    codes_per_visit: dict[CodeType, int] | None = None
    rules: list[PlantedRule] = field(default_factory=list)
    seed: int = 7

    def __post_init__(self):
        if self.n_patients < 1 or self.min_visits < 1 or self.max_visits < self.min_visits:
            raise ValueError("invalid cohort sizing")
        if not 0.0 <= self.background_prob <= 1.0:
            raise ValueError("background_prob outside [0,1]")
        for t, n in self.vocab_sizes.items():
            if n < 1:
                raise ValueError(f"vocab size for {t} must be >= 1")
        if self.codes_per_visit:
            for t, n in self.codes_per_visit.items():
                if n > self.vocab_sizes.get(t, 0):
                    raise ValueError(f"codes_per_visit[{t}] exceeds vocabulary size")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        d = json.loads(Path(path).read_text())
        vocab_sizes = {CodeType.parse(t): n for t, n in d.get("vocab_sizes", {}).items()} \
            or cls().vocab_sizes
        cpv = d.get("codes_per_visit")
        if cpv is not None:
            cpv = {CodeType.parse(t): n for t, n in cpv.items()}
        rules = [PlantedRule.from_dict(r) for r in d.get("rules", [])]
        return cls(
            n_patients=d.get("n_patients", 2000),
            min_visits=d.get("min_visits", 3),
            max_visits=d.get("max_visits", 6),
            vocab_sizes=vocab_sizes,
            background_prob=d.get("background_prob", 0.05),
            codes_per_visit=cpv,
            rules=rules,
            seed=d.get("seed", 7),
        )


@dataclass
class PlantedTruth:
    rules: list[PlantedRule]
    # per rule index: joint count recountable from the emitted cohort
    # (co-occurring visits for cooccur rules, adjacent-pair hits for transition)
    realized_counts: list[int]

    def rule_for_pair(self, a: CodeId, b: CodeId) -> PlantedRule | None:
        key = frozenset({a, b})
        for rule in self.rules:
            if rule.pair_key() == key:
                return rule
        return None

    def non_abstention_rules(self) -> list[PlantedRule]:
        return [r for r in self.rules if not is_abstention(r.relation)]

    def save(self, path: str | Path) -> None:
        payload = {
            "rules": [r.to_dict() for r in self.rules],
            "realized_counts": self.realized_counts,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PlantedTruth":
        d = json.loads(Path(path).read_text())
        return cls(rules=[PlantedRule.from_dict(r) for r in d["rules"]],
                   realized_counts=d["realized_counts"])


def _build_vocab(cfg: SynthConfig) -> tuple[Vocabulary, dict[CodeType, list[CodeId]]]:
    vocab = Vocabulary()
    per_type: dict[CodeType, list[CodeId]] = {}
    for t in CodeType:
        codes = []
        for i in range(cfg.vocab_sizes.get(t, 0)):
            code = CodeId(id=f"{t.value.upper()}_{i:03d}", type=t)
            codes.append(code)
            vocab.add(VocabEntry(
                code=code,
                name=f"{_TYPE_NOUN[t]} {i}",
                parent_category=f"{t.value}_group_{i % 5}",
            ))
        per_type[t] = codes
    return vocab, per_type


def _background_visit(rng: random.Random, cfg: SynthConfig,
                      per_type: dict[CodeType, list[CodeId]]) -> set[CodeId]:
    codes: set[CodeId] = set()
    if cfg.codes_per_visit is not None:
        for t, n in cfg.codes_per_visit.items():
            codes.update(rng.sample(per_type[t], n))
    else:
        for t in CodeType:
            for code in per_type[t]:
                if rng.random() < cfg.background_prob:
                    codes.add(code)
    return codes


def _apply_cooccur_rules(rng: random.Random, visit: set[CodeId],
                         rules: list[PlantedRule]) -> None:
    """Fire co-occurrence rules to fixpoint; each rule draws at most once per
    visit, so strength-1.0 rules are guaranteed to fire whenever src appears."""
    drawn: set[int] = set()
    changed = True
    while changed:
        changed = False
        for idx, rule in enumerate(rules):
            if idx in drawn or rule.channel != CHANNEL_COOCCUR:
                continue
            if rule.src in visit:
                drawn.add(idx)
                if rng.random() < rule.strength and rule.tgt not in visit:
                    visit.add(rule.tgt)
                    changed = True


def generate(cfg: SynthConfig) -> tuple[Cohort, Vocabulary, PlantedTruth]:
    """Generate a cohort deterministically from the seed.

    Each visit starts from independent background draws; co-occurrence rules
    then add targets alongside present sources, and transition rules add
    targets to the following visit. Rules only ever add codes."""
    rng = random.Random(cfg.seed)
    vocab, per_type = _build_vocab(cfg)
    trans_rules = [r for r in cfg.rules if r.channel == CHANNEL_TRANSITION]

    patients = []
    for p_idx in range(cfg.n_patients):
        n_visits = rng.randint(cfg.min_visits, cfg.max_visits)
        visits: list[set[CodeId]] = []
        pending: set[CodeId] = set()
        for _ in range(n_visits):
            visit = _background_visit(rng, cfg, per_type)
            visit |= pending
            _apply_cooccur_rules(rng, visit, cfg.rules)
            pending = set()
            for rule in trans_rules:
                if rule.src in visit and rng.random() < rule.strength:
                    pending.add(rule.tgt)
            visits.append(visit)
        patients.append(Patient(
            patient_id=f"P{p_idx:05d}",
            visits=tuple(Visit(codes=frozenset(v)) for v in visits),
        ))

    cohort = Cohort(patients=tuple(patients))
    vocab.recompute_frequencies(cohort)
    truth = PlantedTruth(rules=list(cfg.rules),
                         realized_counts=[_recount(cohort, r) for r in cfg.rules])
    return cohort, vocab, truth


def _recount(cohort: Cohort, rule: PlantedRule) -> int:
    """Joint count of the rule's pair in its channel, straight from the data."""
    n = 0
    if rule.channel == CHANNEL_COOCCUR:
        for visit in cohort.iter_visits():
            if rule.src in visit.codes and rule.tgt in visit.codes:
                n += 1
    else:
        for patient in cohort.patients:
            for prev, nxt in zip(patient.visits, patient.visits[1:]):
                if rule.src in prev.codes and rule.tgt in nxt.codes:
                    n += 1
    return n


def default_rules(per_type: dict[CodeType, list[CodeId]], n_rules: int = 20,
                  strength: float = 0.8, seed: int = 7) -> list[PlantedRule]:
    """A mixed bag of planted rules spanning all six pair categories, with
    relations valid for each category and distinct code pairs."""
    rng = random.Random(seed)
    type_combos = [
        (CodeType.DX, CodeType.DX), (CodeType.RX, CodeType.DX),
        (CodeType.PX, CodeType.DX), (CodeType.RX, CodeType.RX),
        (CodeType.PX, CodeType.PX), (CodeType.PX, CodeType.RX),
    ]
    rules: list[PlantedRule] = []
    used_pairs: set[frozenset] = set()
    used_codes: set[CodeId] = set()
    i = 0
    while len(rules) < n_rules:
        ta, tb = type_combos[i % len(type_combos)]
        i += 1
        # Keep rule codes disjoint so planted signals do not interfere.
        avail_a = [c for c in per_type[ta] if c not in used_codes]
        avail_b = [c for c in per_type[tb] if c not in used_codes]
        src = rng.choice(avail_a)
        tgt = rng.choice([c for c in avail_b if c != src])
        if frozenset({src, tgt}) in used_pairs:
            continue
        pool = relations_for(src.type, tgt.type)
        non_abst = [l for l in pool.allowed if not is_abstention(l)]
        relation = rng.choice(non_abst)
        # Orient the rule so src fits the canonical codeA role when types differ.
        _, role_a = canonical_type_pair(src.type, tgt.type)
        if src.type != tgt.type and src.type != role_a:
            src, tgt = tgt, src
        channel = CHANNEL_COOCCUR if len(rules) % 2 == 0 else CHANNEL_TRANSITION
        rules.append(PlantedRule(src=src, tgt=tgt, channel=channel,
                                 strength=strength, relation=relation))
        used_pairs.add(frozenset({src, tgt}))
        used_codes.update({src, tgt})
    return rules


def standard_config(seed: int = 7) -> SynthConfig:
    """The 2,000-patient benchmark configuration used across the test suite."""
    cfg = SynthConfig(seed=seed)
    _, per_type = _build_vocab(cfg)
    cfg.rules = default_rules(per_type, n_rules=20, strength=0.8, seed=seed)
    return cfg


def emit(cfg: SynthConfig, out_dir: str | Path) -> tuple[Path, Path, Path]:
    """Generate and write cohort.jsonl, vocab.csv, and planted_truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cohort, vocab, truth = generate(cfg)
    cohort_path = out / "cohort.jsonl"
    vocab_path = out / "vocab.csv"
    truth_path = out / "planted_truth.json"
    save_cohort(cohort, cohort_path)
    save_vocabulary(vocab, vocab_path)
    truth.save(truth_path)
    return cohort_path, vocab_path, truth_path
