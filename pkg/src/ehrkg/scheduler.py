"""Two-phase, coverage-aware sampling of codes for per-iteration text
representation refreshes.

Phase one walks the observed vocabulary least-updated-first until every
observed code has at least `m` updates; phase two mixes least-updated codes
with the most frequent codes of the current batch.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .codes import CodeId

STATE_SCHEMA = "scheduler-state/1"

PHASE_ONE = "one"
PHASE_TWO = "two"


class SchedulerError(ValueError):
    """Invalid configuration or snapshot."""


@dataclass
class SchedulerConfig:
    k: int = 10                 # codes refreshed per iteration
    m: int = 1                  # min updates per observed code ending phase one
    rho: float = 0.5            # phase-two fraction drawn least-updated-first
    seed: int = 0               # reserved; selection is fully deterministic via tie-breaks

    def __post_init__(self):
        if self.k < 1 or self.m < 1:
            raise SchedulerError("k and m must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise SchedulerError("rho must be in [0,1]")


@dataclass
class SchedulerState:
    config: SchedulerConfig
    occurrences: dict[CodeId, int] = field(default_factory=dict)
    updates: dict[CodeId, int] = field(default_factory=dict)
    phase: str = PHASE_ONE
    iteration: int = 0

    def observed(self) -> set[CodeId]:
        return set(self.occurrences)


def record_batch(state: SchedulerState, batch_codes: list[CodeId]) -> None:
    """Fold a batch's code multiset into the occurrence counters."""
    for code in batch_codes:
        state.occurrences[code] = state.occurrences.get(code, 0) + 1
        state.updates.setdefault(code, 0)


def _least_updated(state: SchedulerState, n: int,
                   exclude: set[CodeId] = frozenset()) -> list[CodeId]:
    # Ties: fewer occurrences first, then lexicographic id.
    ranked = sorted(
        (c for c in state.occurrences if c not in exclude),
        key=lambda c: (state.updates[c], state.occurrences[c], c))
    return ranked[:n]


def next_update_set(state: SchedulerState, batch_codes: set[CodeId]) -> set[CodeId]:
    """Select at most K codes to refresh this iteration and bump their update
    counters. record_batch must already have been applied for this batch."""
    cfg = state.config
    if state.phase == PHASE_ONE:
        selected = set(_least_updated(state, cfg.k))
    else:
        n_least = math.ceil(cfg.rho * cfg.k)
        selected = set(_least_updated(state, n_least))
        n_freq = cfg.k - len(selected)
        in_batch = sorted(
            (c for c in batch_codes if c in state.occurrences and c not in selected),
            key=lambda c: (-state.occurrences[c], c))
        selected.update(in_batch[:n_freq])
        if len(selected) < cfg.k:
            selected.update(_least_updated(state, cfg.k - len(selected), exclude=selected))

    for code in selected:
        state.updates[code] += 1
    state.iteration += 1
    if state.phase == PHASE_ONE and state.updates and \
            min(state.updates.values()) >= cfg.m:
        state.phase = PHASE_TWO
    return selected


def snapshot(state: SchedulerState, path: str | Path) -> None:
    payload = {
        "schema": STATE_SCHEMA,
        "config": {"k": state.config.k, "m": state.config.m,
                   "rho": state.config.rho, "seed": state.config.seed},
        "occurrences": {c.key(): n for c, n in sorted(state.occurrences.items())},
        "updates": {c.key(): n for c, n in sorted(state.updates.items())},
        "phase": state.phase,
        "iteration": state.iteration,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def restore(path: str | Path) -> SchedulerState:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SchedulerError(f"cannot read scheduler state: {e}")
    if payload.get("schema") != STATE_SCHEMA:
        raise SchedulerError(
            f"state schema mismatch: {payload.get('schema')!r} != {STATE_SCHEMA!r}")
    try:
        cfg = SchedulerConfig(**payload["config"])
        state = SchedulerState(
            config=cfg,
            occurrences={CodeId.from_key(k): v for k, v in payload["occurrences"].items()},
            updates={CodeId.from_key(k): v for k, v in payload["updates"].items()},
            phase=payload["phase"],
            iteration=payload["iteration"],
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchedulerError(f"corrupt scheduler state: {e}")
    if state.phase not in (PHASE_ONE, PHASE_TWO):
        raise SchedulerError(f"corrupt scheduler state: bad phase {state.phase!r}")
    return state
