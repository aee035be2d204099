"""Two-phase coverage-aware code scheduler.

Independent re-implementation of the upstream scheduler contract, operating
on plain "type:id" code keys. It must agree, decision for decision, with the
upstream `schedule` CLI on the twin-run vectors shipped under tests/vectors/.

Phase one selects the K least-updated observed codes (ties: fewer
occurrences, then lexicographic id/type) until every observed code has at least
m updates. Phase two takes ceil(rho*K) least-updated codes plus the most
frequent codes of the current batch (by global occurrence count), topping up
from the least-updated ranking if the batch is small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PHASE_ONE = "one"
PHASE_TWO = "two"


def _lex(code: str) -> tuple[str, str]:
    """Upstream tie-break order: the bare id first, then the type."""
    t, _, i = code.partition(":")
    return (i, t)


@dataclass
class Scheduler:
    k: int = 10
    m: int = 1
    rho: float = 0.5
    occurrences: dict[str, int] = field(default_factory=dict)
    updates: dict[str, int] = field(default_factory=dict)
    phase: str = PHASE_ONE
    iteration: int = 0

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [0,1]")

    def record_batch(self, batch_codes: list[str]) -> None:
        for code in batch_codes:
            self.occurrences[code] = self.occurrences.get(code, 0) + 1
            self.updates.setdefault(code, 0)

    def _least_updated(self, n: int, exclude: frozenset[str] = frozenset()
                       ) -> list[str]:
        ranked = sorted(
            (c for c in self.occurrences if c not in exclude),
            key=lambda c: (self.updates[c], self.occurrences[c], _lex(c)))
        return ranked[:n]

    def next_update_set(self, batch_codes: set[str]) -> set[str]:
        if self.phase == PHASE_ONE:
            selected = set(self._least_updated(self.k))
        else:
            selected = set(self._least_updated(math.ceil(self.rho * self.k)))
            n_freq = self.k - len(selected)
            in_batch = sorted(
                (c for c in batch_codes
                 if c in self.occurrences and c not in selected),
                key=lambda c: (-self.occurrences[c], _lex(c)))
            selected.update(in_batch[:n_freq])
            if len(selected) < self.k:
                selected.update(self._least_updated(
                    self.k - len(selected), exclude=frozenset(selected)))
        for code in selected:
            self.updates[code] += 1
        self.iteration += 1
        if self.phase == PHASE_ONE and self.updates and \
                min(self.updates.values()) >= self.m:
            self.phase = PHASE_TWO
        return selected
