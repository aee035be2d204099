"""Type-constrained inventory of 28 clinical relation labels.

Each code-type combination (dx-dx, rx-dx, px-dx, rx-rx, px-px, px-rx) has its
own pool of allowed labels plus the two abstention labels. Pools and their
one-line definitions are compiled here, with a machine-readable export, so the
prompt text and response validation can never drift apart.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .codes import CodeType


class RelationError(ValueError):
    """A relation label outside the pool for its type pair."""


class TypePair(str, Enum):
    DX_DX = "dx-dx"
    RX_DX = "rx-dx"
    PX_DX = "px-dx"
    RX_RX = "rx-rx"
    PX_PX = "px-px"
    PX_RX = "px-rx"


# Canonical codeA role per type pair: rx-dx has codeA=rx, px-dx and px-rx have
# codeA=px. Keyed by frozenset of the two types.
_CANONICAL: dict[frozenset, tuple[TypePair, CodeType]] = {
    frozenset({CodeType.DX}): (TypePair.DX_DX, CodeType.DX),
    frozenset({CodeType.RX, CodeType.DX}): (TypePair.RX_DX, CodeType.RX),
    frozenset({CodeType.PX, CodeType.DX}): (TypePair.PX_DX, CodeType.PX),
    frozenset({CodeType.RX}): (TypePair.RX_RX, CodeType.RX),
    frozenset({CodeType.PX}): (TypePair.PX_PX, CodeType.PX),
    frozenset({CodeType.PX, CodeType.RX}): (TypePair.PX_RX, CodeType.PX),
}

ABSTENTION_LABELS = ("no_significant_relation", "cannot_decide")

_ABSTENTION_DEFS = {
    "no_significant_relation":
        "Clinical prior and available data indicate no clinically meaningful "
        "association between codeA and codeB.",
    "cannot_decide":
        "Insufficient or conflicting evidence; the model should abstain from "
        "assigning a relation.",
}

# label -> definition, per type pair; order matters (rendered into prompts).
_POOL_DEFS: dict[TypePair, dict[str, str]] = {
    TypePair.DX_DX: {
        "causes":
            "codeA is an etiologic cause of codeB (direct causal or "
            "pathophysiologic link).",
        "risk_factor_for":
            "codeA increases the likelihood of codeB (epidemiologic "
            "association; not necessarily causal).",
        "leads_to":
            "codeA typically precedes codeB as a downstream condition or stage "
            "(temporal progression without requiring strict causality).",
        "complicates":
            "codeA occurs as a complication during the course of codeB "
            "(arises secondary to codeB or its treatment).",
        "co_occurs_with":
            "codeA and codeB are frequently observed together without implied "
            "direction or clear causality (contextual association).",
        **_ABSTENTION_DEFS,
    },
    TypePair.RX_DX: {
        "treats":
            "codeA treats or manages codeB (therapeutic use).",
        "prevents":
            "codeA reduces risk or recurrence of codeB (prophylaxis).",
        "causes_adverse_event":
            "codeA may induce codeB as an adverse reaction.",
        "contraindicated_for":
            "codeA should be avoided when codeB is present.",
        "co_occurs_with":
            "codeA and codeB often co-occur without a clear causal link.",
        **_ABSTENTION_DEFS,
    },
    TypePair.PX_DX: {
        "diagnostic_of":
            "codeA is performed to diagnose, confirm, or rule in/out codeB "
            "(diagnostic evaluation).",
        "treats":
            "codeA is a procedure used to treat, correct, or palliate codeB "
            "(therapeutic intervention).",
        "monitors":
            "codeA is performed to monitor, follow, or assess disease activity "
            "or treatment response for codeB.",
        "contraindicated_for":
            "codeA should be avoided when codeB is present due to safety or "
            "unfavorable risk-benefit considerations.",
        "co_occurs_with":
            "codeA and codeB frequently appear together without a clear "
            "diagnostic, therapeutic, or causal link (contextual association).",
        **_ABSTENTION_DEFS,
    },
    TypePair.RX_RX: {
        "co_prescribed_with":
            "codeA and codeB are intentionally prescribed together in practice.",
        "contraindicated_with":
            "Concomitant use of codeA and codeB is contraindicated due to "
            "serious safety risk.",
        "interacts_with":
            "codeA and codeB have a clinically meaningful drug-drug interaction "
            "(pharmacokinetic and/or pharmacodynamic) that may impact safety or "
            "efficacy.",
        "substitute_for":
            "codeA is commonly used as a therapeutic alternative to codeB for "
            "similar indications (typically not co-prescribed).",
        "combination_therapy_with":
            "codeA and codeB are used together as an established combination "
            "therapy.",
        "co_occurs_with":
            "codeA and codeB frequently appear together in data without a known "
            "therapeutic relationship or interaction.",
        **_ABSTENTION_DEFS,
    },
    TypePair.PX_PX: {
        "sequential_care":
            "codeA is typically followed by codeB as the next procedural step "
            "(ordered workflow; not necessarily causal).",
        "prerequisite_for":
            "codeA is commonly required or preparatory for performing codeB "
            "(e.g., access, imaging guidance, setup).",
        "alternative_to":
            "codeA and codeB are procedural alternatives for a similar clinical "
            "purpose (mutually substitutable options).",
        "performed_same_session":
            "codeA and codeB are commonly performed during the same procedural "
            "session or time block within an episode (intentional bundling).",
        "co_occurs_with":
            "codeA and codeB occur within the same episode without implied "
            "order or intentional bundling (contextual association).",
        **_ABSTENTION_DEFS,
    },
    TypePair.PX_RX: {
        "requires_medication":
            "codeA routinely requires administration of codeB as part of the "
            "procedure (e.g., sedation, anesthesia, anticoagulation).",
        "premedication_for":
            "codeB is typically given before codeA to enable or optimize the "
            "procedure (e.g., anxiolysis, antibiotic prophylaxis).",
        "post_procedure_medication_for":
            "codeB is commonly given after codeA for recovery, prophylaxis, or "
            "symptom control (e.g., analgesia, anticoagulation).",
        "prophylaxis_with":
            "codeB is used to prevent complications associated with codeA "
            "(e.g., peri-procedural antibiotics, DVT prophylaxis).",
        "adjunct_medication_for":
            "codeB is an adjunct given with codeA to improve efficacy, safety, "
            "or tolerability (non-essential but commonly used).",
        "contraindicates_medication":
            "When codeA is planned or present, codeB should be avoided due to "
            "safety or risk-benefit concerns.",
        "co_occurs_with":
            "codeA and codeB are observed together in data without a clear "
            "procedural rationale or causal link (contextual association).",
        **_ABSTENTION_DEFS,
    },
}

ALL_LABELS: tuple[str, ...] = tuple(sorted({l for pool in _POOL_DEFS.values() for l in pool}))


@dataclass(frozen=True)
class RelationPool:
    type_pair: TypePair
    allowed: tuple[str, ...]
    definitions: dict[str, str]

    def __contains__(self, label: str) -> bool:
        return label in self.definitions

    @property
    def abstentions(self) -> tuple[str, ...]:
        return ABSTENTION_LABELS


_POOLS: dict[TypePair, RelationPool] = {
    tp: RelationPool(type_pair=tp, allowed=tuple(defs), definitions=dict(defs))
    for tp, defs in _POOL_DEFS.items()
}


def canonical_type_pair(a: CodeType, b: CodeType) -> tuple[TypePair, CodeType]:
    """Map an unordered pair of code types to its canonical TypePair and the
    code type that takes the codeA role."""
    return _CANONICAL[frozenset({a, b})]


def relations_for(a: CodeType, b: CodeType) -> RelationPool:
    tp, _ = canonical_type_pair(a, b)
    return _POOLS[tp]


def pool_for(tp: TypePair) -> RelationPool:
    return _POOLS[tp]


def validate_relation(tp: TypePair, label: str) -> None:
    """Raise RelationError unless the label belongs to the pool for tp."""
    pool = _POOLS[tp]
    if label not in pool:
        raise RelationError(
            f"label {label!r} not in the {tp.value} pool {list(pool.allowed)}")


def is_abstention(label: str) -> bool:
    return label in ABSTENTION_LABELS


def export_inventory() -> dict:
    """Machine-readable dump of the pools for documentation and other tools."""
    return {
        "labels": list(ALL_LABELS),
        "abstentions": list(ABSTENTION_LABELS),
        "pools": {
            tp.value: [
                {"label": label, "definition": defn}
                for label, defn in pool.definitions.items()
            ]
            for tp, pool in _POOLS.items()
        },
    }
