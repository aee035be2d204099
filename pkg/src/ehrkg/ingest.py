"""Loading, validation, and summary statistics for visit-coded EHR cohorts.

Input cohorts are JSONL, one patient per line:
    {"patient_id": str, "visits": [[{"id": str, "type": "dx"|"rx"|"px"}, ...], ...]}
Vocabularies are CSV with header id,type,name,parent_category,frequency.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .codes import CodeId, CodeType


class IngestError(ValueError):
    """Malformed cohort or vocabulary input."""


@dataclass(frozen=True)
class Visit:
    """One clinical encounter: a de-duplicated set of typed codes."""

    codes: frozenset[CodeId]

    def codes_of_type(self, t: CodeType) -> set[CodeId]:
        return {c for c in self.codes if c.type == t}


@dataclass(frozen=True)
class Patient:
    patient_id: str
    visits: tuple[Visit, ...]


@dataclass(frozen=True)
class Cohort:
    patients: tuple[Patient, ...]

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    def all_codes(self) -> set[CodeId]:
        out: set[CodeId] = set()
        for p in self.patients:
            for v in p.visits:
                out |= v.codes
        return out

    def iter_visits(self):
        for p in self.patients:
            yield from p.visits


@dataclass(frozen=True)
class VocabEntry:
    code: CodeId
    name: str
    parent_category: str
    frequency: int = 0

    def __post_init__(self):
        if not self.name:
            raise IngestError(f"vocabulary entry {self.code.key()} has empty name")
        if self.frequency < 0:
            raise IngestError(f"negative frequency for {self.code.key()}")


@dataclass
class Vocabulary:
    entries: dict[CodeId, VocabEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, code: CodeId) -> bool:
        return code in self.entries

    def __getitem__(self, code: CodeId) -> VocabEntry:
        return self.entries[code]

    def add(self, entry: VocabEntry) -> None:
        if entry.code in self.entries:
            raise IngestError(f"duplicate vocabulary entry: {entry.code.key()}")
        self.entries[entry.code] = entry

    def size_per_type(self) -> dict[CodeType, int]:
        counts = Counter(c.type for c in self.entries)
        return {t: counts.get(t, 0) for t in CodeType}

    def recompute_frequencies(self, cohort: Cohort) -> None:
        """Reset each entry's frequency to the number of visits containing it."""
        freq = Counter()
        for visit in cohort.iter_visits():
            freq.update(visit.codes)
        self.entries = {
            c: VocabEntry(c, e.name, e.parent_category, freq.get(c, 0))
            for c, e in self.entries.items()
        }


@dataclass
class CohortStats:
    n_patients: int
    n_visits: int
    mean_codes_per_visit: dict[CodeType, float]
    unique_codes: dict[CodeType, int]


@dataclass
class ValidationReport:
    missing_codes: dict[CodeId, int]          # code -> occurrence count in cohort
    short_patients: list[str]                 # patients with < 2 visits
    coverage: dict[CodeType, float]           # fraction of cohort codes found in vocab

    @property
    def clean(self) -> bool:
        return not self.missing_codes

    def to_dict(self) -> dict:
        return {
            "missing_codes": {c.key(): n for c, n in sorted(self.missing_codes.items())},
            "short_patients": self.short_patients,
            "coverage": {t.value: cov for t, cov in self.coverage.items()},
            "clean": self.clean,
        }


def _parse_visit(raw: list, line_no: int) -> Visit:
    codes = set()
    for item in raw:
        if not isinstance(item, dict) or "id" not in item or "type" not in item:
            raise IngestError(f"line {line_no}: visit entry must have 'id' and 'type'")
        codes.add(CodeId(id=str(item["id"]), type=CodeType.parse(item["type"])))
    return Visit(codes=frozenset(codes))


def load_cohort(path: str | Path) -> Cohort:
    """Load a JSONL cohort, de-duplicating codes within each visit."""
    path = Path(path)
    patients = []
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(f"line {line_no}: malformed JSON ({e})") from e
            if "patient_id" not in rec or "visits" not in rec:
                raise IngestError(f"line {line_no}: missing patient_id or visits")
            visits = rec["visits"]
            if not isinstance(visits, list) or not visits:
                raise IngestError(f"line {line_no}: patient {rec['patient_id']} has empty visit list")
            try:
                parsed = tuple(_parse_visit(v, line_no) for v in visits)
            except ValueError as e:
                raise IngestError(str(e)) from e
            patients.append(Patient(patient_id=str(rec["patient_id"]), visits=parsed))
    if not patients:
        raise IngestError("empty cohort")
    return Cohort(patients=tuple(patients))


def save_cohort(cohort: Cohort, path: str | Path) -> None:
    """Serialize a cohort back to the JSONL wire format (stable code order)."""
    with Path(path).open("w") as fh:
        for p in cohort.patients:
            rec = {
                "patient_id": p.patient_id,
                "visits": [
                    [{"id": c.id, "type": c.type.value} for c in sorted(v.codes)]
                    for v in p.visits
                ],
            }
            fh.write(json.dumps(rec) + "\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Load a CSV vocabulary keyed by (id, type); frequency column is optional."""
    vocab = Vocabulary()
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "type", "name", "parent_category"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestError(f"vocabulary must have columns {sorted(required)}")
        for row in reader:
            raw_freq = (row.get("frequency") or "").strip()
            if raw_freq:
                try:
                    freq = int(raw_freq)
                except ValueError:
                    raise IngestError(f"unparsable frequency {raw_freq!r} for id {row['id']}")
            else:
                freq = 0
            code = CodeId(id=row["id"], type=CodeType.parse(row["type"]))
            vocab.add(VocabEntry(code=code, name=row["name"],
                                 parent_category=row["parent_category"], frequency=freq))
    return vocab


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "type", "name", "parent_category", "frequency"])
        for code in sorted(vocab.entries):
            e = vocab.entries[code]
            writer.writerow([code.id, code.type.value, e.name, e.parent_category, e.frequency])


def validate_cohort(cohort: Cohort, vocab: Vocabulary) -> ValidationReport:
    """Report cohort codes absent from the vocabulary and patients too short to
    contribute transition evidence or next-visit labels."""
    missing = Counter()
    seen = Counter()
    for visit in cohort.iter_visits():
        for code in visit.codes:
            seen[code.type] += 1
            if code not in vocab:
                missing[code] += 1
    short = [p.patient_id for p in cohort.patients if len(p.visits) < 2]
    coverage = {}
    for t in CodeType:
        total = seen.get(t, 0)
        miss = sum(n for c, n in missing.items() if c.type == t)
        coverage[t] = 1.0 if total == 0 else (total - miss) / total
    return ValidationReport(missing_codes=dict(missing), short_patients=short, coverage=coverage)


def cohort_summary(cohort: Cohort) -> CohortStats:
    """Visit counts, mean codes per visit by type, and unique codes by type."""
    if cohort.n_patients == 0:
        raise IngestError("empty cohort")
    n_visits = 0
    code_totals = Counter()
    unique: dict[CodeType, set] = {t: set() for t in CodeType}
    for visit in cohort.iter_visits():
        n_visits += 1
        for code in visit.codes:
            code_totals[code.type] += 1
            unique[code.type].add(code)
    return CohortStats(
        n_patients=cohort.n_patients,
        n_visits=n_visits,
        mean_codes_per_visit={t: code_totals.get(t, 0) / n_visits for t in CodeType},
        unique_codes={t: len(unique[t]) for t in CodeType},
    )
