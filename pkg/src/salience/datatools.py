"""Dataset construction and audit tooling.

Covers the split strategies (uniform random and concept-disjoint), the
lexical-cue audit with applicability/coverage statistics, adversarial
candidate generation for high-coverage cues, multi-rater agreement, the
least-squares check that salience is explained by sufficiency and
necessity, and rank correlation for downstream signals.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .core import AnnotatedTriple, Dataset, PredicateRegistry, SplitAssignment, Triple
from .errors import DataError, EvalError
from .seeding import rng_for

SPLITS = ("train", "dev", "test")


def _check_ratios(ratios: tuple[float, float, float]) -> None:
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DataError(f"need three positive ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")


def _target_counts(n: int, ratios: tuple[float, float, float]) -> list[int]:
    """Floor each ratio, then hand out the remainder by largest fraction
    (ties in train/dev/test order)."""
    raw = [r * n for r in ratios]
    counts = [int(np.floor(x)) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(remainder):
        counts[order[i % 3]] += 1
    return counts


def split_random(
    dataset: Dataset, ratios: tuple[float, float, float], seed: int
) -> SplitAssignment:
    """Uniform seeded shuffle into train/dev/test with sizes matching the
    ratios up to rounding."""
    _check_ratios(ratios)
    n = len(dataset)
    counts = _target_counts(n, ratios)
    order = rng_for(seed, "split:random").permutation(n)
    assignment = [""] * n
    cursor = 0
    for split, count in zip(SPLITS, counts):
        for i in order[cursor : cursor + count]:
            assignment[int(i)] = split
        cursor += count
    return SplitAssignment(tuple(assignment))


def _entity_groups(dataset: Dataset, strictness: str) -> list[list[int]]:
    if strictness == "subject":
        groups: dict[str, list[int]] = defaultdict(list)
        for i, rec in enumerate(dataset.records):
            groups[rec.triple.subject].append(i)
        return list(groups.values())
    if strictness != "entity":
        raise DataError(f"strictness must be 'subject' or 'entity', got {strictness!r}")

    # union-find over entity strings; a record joins its subject's component
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for rec in dataset.records:
        union(rec.triple.subject, rec.triple.object)
    groups = defaultdict(list)
    for i, rec in enumerate(dataset.records):
        groups[find(rec.triple.subject)].append(i)
    return list(groups.values())


def split_concept(
    dataset: Dataset,
    ratios: tuple[float, float, float],
    seed: int,
    strictness: str = "subject",
) -> SplitAssignment:
    """Split with concept strings disjoint across the three parts.

    ``subject`` keeps each subject string inside one split; ``entity``
    assigns whole connected components of the subject-object co-occurrence
    graph, so no entity string crosses splits. Groups go largest-first into
    the most-underfilled split relative to the ratio targets.
    """
    _check_ratios(ratios)
    n = len(dataset)
    if n == 0:
        return SplitAssignment(())
    groups = _entity_groups(dataset, strictness)
    order = rng_for(seed, "split:concept").permutation(len(groups))
    shuffled = [groups[int(i)] for i in order]
    shuffled.sort(key=len, reverse=True)  # stable: equal sizes keep shuffle order

    targets = [r * n for r in ratios]
    if shuffled and len(shuffled[0]) > max(targets):
        warnings.warn(
            f"a concept group of size {len(shuffled[0])} exceeds the largest split target "
            f"{max(targets):.1f}; it is still assigned atomically",
            stacklevel=2,
        )
    filled = [0, 0, 0]
    assignment = [""] * n
    for group in shuffled:
        deficits = [targets[i] - filled[i] for i in range(3)]
        best = max(range(3), key=lambda i: (deficits[i], -i))
        for idx in group:
            assignment[idx] = SPLITS[best]
        filled[best] += len(group)
    return SplitAssignment(tuple(assignment))


# -- lexical cues ---------------------------------------------------------------


@dataclass(frozen=True)
class CueEntry:
    """One n-gram with its applicability, coverage, and label distribution."""

    cue: str
    applicability: int
    coverage: float
    label_counts: dict[str, int]
    majority_label: int

    def to_record(self) -> dict:
        return {
            "cue": self.cue,
            "applicability": self.applicability,
            "coverage": self.coverage,
            "label_counts": self.label_counts,
            "majority_label": self.majority_label,
        }


@dataclass
class CueReport:
    """Cue statistics sorted by coverage, highest first."""

    entries: list[CueEntry]
    n_instances: int
    ngram_range: tuple[int, int]

    def top_by_coverage(self, top_percent: float) -> list[CueEntry]:
        if not 0 < top_percent <= 100:
            raise DataError(f"top_percent must be in (0, 100], got {top_percent}")
        k = int(len(self.entries) * top_percent / 100.0)
        return self.entries[:k]

    def max_coverage(self) -> float:
        return self.entries[0].coverage if self.entries else 0.0

    def write(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(json.dumps(e.to_record(), ensure_ascii=False) + "\n")


def _instance_tokens(rec: AnnotatedTriple) -> list[str]:
    t = rec.triple
    return f"{t.subject} {t.predicate.display} {t.object}".split()


def _ngrams(tokens: list[str], lo: int, hi: int) -> set[str]:
    grams = set()
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            grams.add(" ".join(tokens[i : i + n]))
    return grams


def cue_audit(dataset: Dataset, ngram_range: tuple[int, int] = (1, 2)) -> CueReport:
    """Count, per n-gram cue, how many labeled instances contain it.

    Applicability is the instance count, coverage its fraction of the
    dataset; per-label counts expose cues skewed toward one label.
    """
    lo, hi = ngram_range
    if lo < 1 or hi < lo:
        raise DataError(f"bad ngram_range {ngram_range}")
    if len(dataset) == 0:
        raise DataError("cannot audit an empty dataset")
    applies: Counter = Counter()
    by_label: dict[str, Counter] = defaultdict(Counter)
    for rec in dataset.records:
        if rec.salient is None:
            raise DataError("cue audit needs salient labels on every record")
        grams = _ngrams(_instance_tokens(rec), lo, hi)
        for g in grams:
            applies[g] += 1
            by_label[g][rec.salient] += 1
    n = len(dataset)
    entries = []
    for cue, count in applies.items():
        counts = by_label[cue]
        majority = max(sorted(counts), key=lambda lbl: counts[lbl])
        entries.append(
            CueEntry(
                cue=cue,
                applicability=count,
                coverage=count / n,
                label_counts={"0": counts.get(0, 0), "1": counts.get(1, 0)},
                majority_label=majority,
            )
        )
    entries.sort(key=lambda e: (-e.coverage, e.cue))
    return CueReport(entries=entries, n_instances=n, ngram_range=(lo, hi))


# -- adversarial candidates -----------------------------------------------------


@dataclass(frozen=True)
class AdversarialCandidate:
    """A proposed label-inverting rewrite of one instance; humans confirm."""

    original: AnnotatedTriple
    replacement_field: str
    replacement_value: str
    proposed_label: int
    status: str = "proposed"

    def __post_init__(self) -> None:
        if self.replacement_field not in ("subject", "object"):
            raise DataError(f"replacement_field must be subject or object, got {self.replacement_field!r}")
        current = getattr(self.original.triple, self.replacement_field)
        if current == self.replacement_value:
            raise DataError("replacement must change the field's value")
        if self.original.salient is None or self.proposed_label != 1 - self.original.salient:
            raise DataError("proposed label must invert the original salient label")
        if self.status not in ("proposed", "confirmed", "rejected"):
            raise DataError(f"unknown status {self.status!r}")

    def to_record(self) -> dict:
        return {
            "original": self.original.to_record(),
            "replacement_field": self.replacement_field,
            "replacement_value": self.replacement_value,
            "proposed_label": self.proposed_label,
            "status": self.status,
        }

    @classmethod
    def from_record(cls, rec: dict, registry: PredicateRegistry) -> "AdversarialCandidate":
        return cls(
            original=AnnotatedTriple.from_record(rec["original"], registry),
            replacement_field=rec["replacement_field"],
            replacement_value=rec["replacement_value"],
            proposed_label=int(rec["proposed_label"]),
            status=rec.get("status", "proposed"),
        )


def write_candidates(candidates: Sequence[AdversarialCandidate], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(c.to_record(), ensure_ascii=False) + "\n")


def load_candidates(
    path: str | Path, registry: PredicateRegistry | None = None
) -> list[AdversarialCandidate]:
    registry = registry if registry is not None else PredicateRegistry()
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(AdversarialCandidate.from_record(json.loads(line), registry))
            except (json.JSONDecodeError, KeyError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def _contains_gram(tokens: list[str], gram: str) -> bool:
    g = gram.split()
    return any(tokens[i : i + len(g)] == g for i in range(len(tokens) - len(g) + 1))


def adversarial_candidates(
    dataset: Dataset,
    cue_report: CueReport,
    top_percent: float,
    replacement_pool: Sequence[str],
    seed: int,
) -> list[AdversarialCandidate]:
    """Propose one label-inverted rewrite per instance carrying a
    top-coverage cue.

    The entity NOT bearing the cue is replaced (subject when the cue sits
    in the object, otherwise the object) by a seeded draw from the pool.
    Candidates are only ever proposals; nothing is auto-added to a dataset.
    """
    if not replacement_pool:
        raise DataError("replacement pool must be non-empty")
    top = {e.cue for e in cue_report.top_by_coverage(top_percent)}
    if not top:
        return []
    rng = rng_for(seed, "adversarial")
    out: list[AdversarialCandidate] = []
    for rec in dataset.records:
        if rec.salient is None:
            raise DataError("adversarial generation needs salient labels")
        tokens = _instance_tokens(rec)
        hit = next((g for g in sorted(top) if _contains_gram(tokens, g)), None)
        if hit is None:
            continue
        in_object = _contains_gram(rec.triple.object.split(), hit)
        fld = "subject" if in_object else "object"
        current = getattr(rec.triple, fld)
        pool = [w for w in replacement_pool if w != current]
        if not pool:
            continue
        replacement = pool[int(rng.integers(0, len(pool)))]
        out.append(
            AdversarialCandidate(
                original=rec,
                replacement_field=fld,
                replacement_value=replacement,
                proposed_label=1 - rec.salient,
            )
        )
    return out


# -- agreement, regression, correlation ------------------------------------------


@dataclass(frozen=True)
class AgreementReport:
    """Chance-corrected multi-rater agreement per dimension."""

    fleiss_kappa: dict[str, float]
    category_counts: dict[str, dict[str, int]]


def fleiss_kappa(ratings: Sequence[Sequence[object]]) -> float:
    """Fleiss' kappa of an n-items x r-raters matrix of categorical values."""
    if len(ratings) == 0:
        raise DataError("need at least one item")
    r = len(ratings[0])
    if r < 2:
        raise DataError("need at least two raters")
    for i, row in enumerate(ratings):
        if len(row) != r:
            raise DataError(f"item {i} has {len(row)} ratings, expected {r}")
        if any(v is None for v in row):
            raise DataError(f"item {i} has missing ratings")
    categories = sorted({v for row in ratings for v in row}, key=repr)
    cat_index = {c: k for k, c in enumerate(categories)}
    n = len(ratings)
    table = np.zeros((n, len(categories)), dtype=np.float64)
    for i, row in enumerate(ratings):
        for v in row:
            table[i, cat_index[v]] += 1
    p_i = (np.sum(table**2, axis=1) - r) / (r * (r - 1))
    p_bar = float(np.mean(p_i))
    p_j = np.sum(table, axis=0) / (n * r)
    p_e = float(np.sum(p_j**2))
    if p_e >= 1.0:  # every rating identical: perfect agreement by convention
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def agreement_report(dataset: Dataset) -> AgreementReport:
    """Fleiss' kappa per annotation dimension from per-annotator labels."""
    rows = [r.annotator_labels for r in dataset.records]
    if any(r is None for r in rows):
        raise DataError("every record needs annotator_labels for agreement analysis")
    kappas = {}
    counts: dict[str, dict[str, int]] = {}
    for dim, idx in (("sufficiency", 0), ("necessity", 1), ("salient", 2)):
        ratings = [[labels[idx] for labels in row] for row in rows]  # type: ignore[union-attr]
        kappas[dim] = fleiss_kappa(ratings)
        c: Counter = Counter(v for row in ratings for v in row)
        counts[dim] = {str(k): int(v) for k, v in sorted(c.items(), key=lambda kv: repr(kv[0]))}
    return AgreementReport(fleiss_kappa=kappas, category_counts=counts)


@dataclass(frozen=True)
class RegressionReport:
    """OLS fit of salience on (sufficiency, necessity, intercept)."""

    coef_sufficiency: float
    coef_necessity: float
    intercept: float
    r_squared: float
    f_pvalue: float
    t_pvalues: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "coef_sufficiency": self.coef_sufficiency,
            "coef_necessity": self.coef_necessity,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "f_pvalue": self.f_pvalue,
            "t_pvalues": self.t_pvalues,
        }


def regression_fit(dataset: Dataset) -> RegressionReport:
    """Least squares of the salience bit on the two Likert labels.

    Solved through an orthogonal decomposition (lstsq), not normal
    equations; the labels are often near-collinear.
    """
    if dataset.schema != "original":
        raise DataError("regression needs the original schema (all three labels)")
    n = len(dataset)
    if n < 3:
        raise DataError(f"need at least 3 records, got {n}")
    suf = np.array([r.sufficiency for r in dataset.records], dtype=np.float64)
    nec = np.array([r.necessity for r in dataset.records], dtype=np.float64)
    y = np.array([r.salient for r in dataset.records], dtype=np.float64)
    X = np.column_stack([suf, nec, np.ones(n)])
    if np.linalg.matrix_rank(X) < 3:
        degenerate = [
            name
            for name, col in (("sufficiency", suf), ("necessity", nec))
            if np.ptp(col) == 0
        ]
        raise DataError(
            "rank-deficient design matrix"
            + (f" (constant columns: {', '.join(degenerate)})" if degenerate else "")
        )
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ beta
    ss_res = float(residuals @ residuals)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    k = 2  # slopes
    dof = n - k - 1
    if dof > 0 and ss_tot > 0 and r_squared < 1.0:
        f_stat = (r_squared / k) / ((1.0 - r_squared) / dof)
        f_pvalue = float(stats.f.sf(f_stat, k, dof))
    else:
        f_pvalue = 0.0 if ss_tot > 0 else 1.0
    sigma2 = ss_res / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    names = ("sufficiency", "necessity", "intercept")
    t_pvalues = {}
    for i, name in enumerate(names):
        if se[i] > 0 and dof > 0:
            t_pvalues[name] = float(2 * stats.t.sf(abs(beta[i] / se[i]), dof))
        else:
            t_pvalues[name] = 0.0
    return RegressionReport(
        coef_sufficiency=float(beta[0]),
        coef_necessity=float(beta[1]),
        intercept=float(beta[2]),
        r_squared=float(r_squared),
        f_pvalue=f_pvalue,
        t_pvalues=t_pvalues,
    )


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average-tie ranks."""
    if len(x) != len(y):
        raise EvalError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise EvalError("need at least two observations")
    rx = stats.rankdata(x, method="average")
    ry = stats.rankdata(y, method="average")
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise EvalError("zero rank variance; correlation undefined")
    return float(np.corrcoef(rx, ry)[0, 1])
