"""Domain types and dataset I/O shared by every other module.

Datasets are stored as UTF-8 JSON-lines files, one record per line, with
lowercase field names: ``subject``, ``predicate``, ``object`` and the
optional ``sufficiency``, ``necessity``, ``salient``, ``annotators``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError

LIKERT_VALUES = (0.0, 0.5, 1.0)
SPLIT_NAMES = ("train", "dev", "test")
SCHEMAS = ("simplified", "original", "unlabeled")


@dataclass(frozen=True)
class Predicate:
    """A relation key plus a human-readable label."""

    id: str
    display: str

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("predicate id must be non-empty")


def default_predicates() -> dict[str, Predicate]:
    """The three built-in relations."""
    preds = [
        Predicate("requires", "requires"),
        Predicate("capable_of", "capable of"),
        Predicate("complementary", "complementary"),
    ]
    return {p.id: p for p in preds}


class PredicateRegistry:
    """Keyed store of predicates; the three built-ins are pre-registered."""

    def __init__(self) -> None:
        self._by_id: dict[str, Predicate] = default_predicates()

    def register(self, predicate: Predicate) -> None:
        existing = self._by_id.get(predicate.id)
        if existing is not None and existing != predicate:
            raise DataError(f"predicate id {predicate.id!r} already registered with a different display")
        self._by_id[predicate.id] = predicate

    def get(self, predicate_id: str) -> Predicate:
        if predicate_id not in self._by_id:
            raise DataError(f"unknown predicate {predicate_id!r}")
        return self._by_id[predicate_id]

    def get_or_create(self, predicate_id: str) -> Predicate:
        """Resolve a key, minting a predicate with display = id if unseen."""
        if predicate_id not in self._by_id:
            if not predicate_id:
                raise DataError("predicate id must be non-empty")
            self._by_id[predicate_id] = Predicate(predicate_id, predicate_id)
        return self._by_id[predicate_id]

    def __contains__(self, predicate_id: str) -> bool:
        return predicate_id in self._by_id

    def __iter__(self) -> Iterator[Predicate]:
        return iter(self._by_id.values())


@dataclass(frozen=True)
class Triple:
    """A (subject, predicate, object) assertion. Entity strings are trimmed."""

    subject: str
    predicate: Predicate
    object: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "subject", self.subject.strip())
        object.__setattr__(self, "object", self.object.strip())
        if not self.subject or not self.object:
            raise DataError("triple subject and object must be non-empty")

    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate.id, self.object)


def _check_likert(value: float | None, name: str) -> float | None:
    if value is None:
        return None
    value = float(value)
    if value not in LIKERT_VALUES:
        raise DataError(f"{name} must be one of {{0, 0.5, 1}}, got {value}")
    return value


def _check_binary(value: int | None, name: str) -> int | None:
    if value is None:
        return None
    if value not in (0, 1):
        raise DataError(f"{name} must be 0 or 1, got {value}")
    return int(value)


@dataclass(frozen=True)
class AnnotatedTriple:
    """A triple plus optional sufficiency/necessity Likert labels and a salience bit.

    ``annotator_labels`` keeps aligned per-rater (sufficiency, necessity,
    salient) tuples so multi-rater agreement can be computed later.
    """

    triple: Triple
    sufficiency: float | None = None
    necessity: float | None = None
    salient: int | None = None
    annotator_labels: tuple[tuple[float, float, int], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sufficiency", _check_likert(self.sufficiency, "sufficiency"))
        object.__setattr__(self, "necessity", _check_likert(self.necessity, "necessity"))
        object.__setattr__(self, "salient", _check_binary(self.salient, "salient"))
        if self.annotator_labels is not None:
            checked = []
            for k, (suf, nec, sal) in enumerate(self.annotator_labels):
                checked.append(
                    (
                        _check_likert(suf, f"annotator[{k}].sufficiency"),
                        _check_likert(nec, f"annotator[{k}].necessity"),
                        _check_binary(sal, f"annotator[{k}].salient"),
                    )
                )
            object.__setattr__(self, "annotator_labels", tuple(checked))

    def to_record(self) -> dict:
        rec: dict = {
            "subject": self.triple.subject,
            "predicate": self.triple.predicate.id,
            "object": self.triple.object,
        }
        if self.sufficiency is not None:
            rec["sufficiency"] = self.sufficiency
        if self.necessity is not None:
            rec["necessity"] = self.necessity
        if self.salient is not None:
            rec["salient"] = self.salient
        if self.annotator_labels is not None:
            rec["annotators"] = [list(t) for t in self.annotator_labels]
        return rec

    @classmethod
    def from_record(cls, rec: dict, registry: PredicateRegistry) -> "AnnotatedTriple":
        for name in ("subject", "predicate", "object"):
            if name not in rec:
                raise DataError(f"missing required field {name!r}")
        triple = Triple(str(rec["subject"]), registry.get_or_create(str(rec["predicate"])), str(rec["object"]))
        annotators = None
        if "annotators" in rec and rec["annotators"] is not None:
            raw = rec["annotators"]
            if not isinstance(raw, list):
                raise DataError("annotators must be an array of [suf, nec, sal] triplets")
            annotators = tuple((row[0], row[1], row[2]) for row in raw)
        return cls(
            triple=triple,
            sufficiency=rec.get("sufficiency"),
            necessity=rec.get("necessity"),
            salient=rec.get("salient"),
            annotator_labels=annotators,
        )


def _check_schema(record: AnnotatedTriple, schema: str, where: str) -> None:
    if schema == "simplified" and record.salient is None:
        raise DataError(f"{where}: schema=simplified requires a salient label")
    if schema == "original" and (
        record.salient is None or record.sufficiency is None or record.necessity is None
    ):
        raise DataError(f"{where}: schema=original requires sufficiency, necessity, and salient")


@dataclass
class Dataset:
    """An ordered list of annotated triples under one labeling schema."""

    records: list[AnnotatedTriple]
    schema: str = "unlabeled"
    name: str = ""

    def __post_init__(self) -> None:
        if self.schema not in SCHEMAS:
            raise DataError(f"unknown schema {self.schema!r}")
        for i, rec in enumerate(self.records):
            _check_schema(rec, self.schema, f"record {i}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[AnnotatedTriple]:
        return iter(self.records)

    def triples(self) -> list[Triple]:
        return [r.triple for r in self.records]

    def subset(self, indices: Sequence[int], name: str = "") -> "Dataset":
        return Dataset([self.records[i] for i in indices], schema=self.schema, name=name or self.name)


@dataclass(frozen=True)
class SplitAssignment:
    """Total partition of record indices into train/dev/test."""

    assignment: tuple[str, ...]

    def __post_init__(self) -> None:
        for i, split in enumerate(self.assignment):
            if split not in SPLIT_NAMES:
                raise DataError(f"index {i}: unknown split {split!r}")

    def __len__(self) -> int:
        return len(self.assignment)

    def indices(self, split: str) -> list[int]:
        if split not in SPLIT_NAMES:
            raise DataError(f"unknown split {split!r}")
        return [i for i, s in enumerate(self.assignment) if s == split]

    def sizes(self) -> dict[str, int]:
        counts = Counter(self.assignment)
        return {s: counts.get(s, 0) for s in SPLIT_NAMES}

    def apply(self, dataset: Dataset) -> dict[str, Dataset]:
        if len(self.assignment) != len(dataset):
            raise DataError(
                f"assignment covers {len(self.assignment)} records, dataset has {len(dataset)}"
            )
        return {
            s: dataset.subset(self.indices(s), name=f"{dataset.name}/{s}" if dataset.name else s)
            for s in SPLIT_NAMES
        }

    def to_lines(self) -> str:
        return "".join(
            json.dumps({"index": i, "split": s}) + "\n" for i, s in enumerate(self.assignment)
        )

    @classmethod
    def from_lines(cls, text: str) -> "SplitAssignment":
        entries: dict[int, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries[int(obj["index"])] = str(obj["split"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"line {lineno}: malformed assignment entry ({exc})") from exc
        if sorted(entries) != list(range(len(entries))):
            raise DataError("assignment indices must cover 0..n-1 exactly once")
        return cls(tuple(entries[i] for i in range(len(entries))))


def load_dataset(
    path: str | Path,
    schema: str = "unlabeled",
    registry: PredicateRegistry | None = None,
    name: str | None = None,
) -> Dataset:
    """Read a JSON-lines dataset, validating labels against the schema.

    Errors report the 1-based line number of the offending record.
    """
    path = Path(path)
    registry = registry if registry is not None else PredicateRegistry()
    records: list[AnnotatedTriple] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: record must be a JSON object")
            try:
                rec = AnnotatedTriple.from_record(obj, registry)
                _check_schema(rec, schema, "record")
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    return Dataset(records, schema=schema, name=name if name is not None else path.stem)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to JSON-lines; load(write(d)) round-trips."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in dataset.records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False) + "\n")


@dataclass
class ValidationReport:
    """Summary statistics and problems found in a dataset."""

    n_records: int
    duplicate_count: int
    duplicates: list[tuple[str, str, str]]
    per_predicate: dict[str, dict]
    positive_fraction: float | None
    n_entities: int
    n_predicates: int
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "duplicate_count": self.duplicate_count,
            "duplicates": [list(k) for k in self.duplicates],
            "per_predicate": self.per_predicate,
            "positive_fraction": self.positive_fraction,
            "n_entities": self.n_entities,
            "n_predicates": self.n_predicates,
            "violations": self.violations,
        }


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """Report duplicates, label distribution per predicate, and violations.

    Duplicates are flagged, never rejected. Entity/predicate counts are
    informational.
    """
    seen: Counter = Counter(rec.triple.key() for rec in dataset.records)
    duplicates = sorted(k for k, c in seen.items() if c > 1)
    duplicate_count = sum(c - 1 for c in seen.values() if c > 1)

    per_predicate: dict[str, dict] = {}
    n_salient = 0
    n_labeled = 0
    violations: list[str] = []
    for i, rec in enumerate(dataset.records):
        pid = rec.triple.predicate.id
        stats = per_predicate.setdefault(
            pid, {"count": 0, "salient": {"0": 0, "1": 0, "missing": 0}}
        )
        stats["count"] += 1
        if rec.salient is None:
            stats["salient"]["missing"] += 1
        else:
            stats["salient"][str(rec.salient)] += 1
            n_labeled += 1
            n_salient += rec.salient
        try:
            _check_schema(rec, dataset.schema, f"record {i}")
        except DataError as exc:
            violations.append(str(exc))

    entities = {rec.triple.subject for rec in dataset.records}
    entities.update(rec.triple.object for rec in dataset.records)
    return ValidationReport(
        n_records=len(dataset),
        duplicate_count=duplicate_count,
        duplicates=duplicates,
        per_predicate=per_predicate,
        positive_fraction=(n_salient / n_labeled) if n_labeled else None,
        n_entities=len(entities),
        n_predicates=len(per_predicate),
        violations=violations,
    )
