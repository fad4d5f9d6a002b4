"""Hard templates and masked template variants.

A hard template is a per-predicate sentence pattern with ``[X]`` and
``[Y]`` placeholders for the subject and object. Rendering produces three
variants over one shared token sequence:

* T1 measures the object span one token at a time (subject visible),
* T2 measures the subject span one token at a time (object visible),
* T3 carries two plans: measure each object token with the whole subject
  span replaced by mask tokens, and the symmetric subject measurement.

Prompt slots are reserved positions encoded with the backend's placeholder
token id; their embeddings are injected downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .core import Predicate, Triple
from .errors import TemplateError

if TYPE_CHECKING:  # pragma: no cover
    from .backend.base import Backend

DEFAULT_PATTERNS = {
    "requires": "[X] requires [Y] .",
    "capable_of": "[X] is capable of [Y] .",
    "complementary": "[X] is complementary to [Y] .",
}

# Word-level alternates for the Chinese relation set; select with
# TemplateRegistry(patterns=ZH_PATTERNS).
ZH_PATTERNS = {
    "requires": "[X]需要[Y]。",
    "capable_of": "[X]可以[Y]。",
    "complementary": "[X]搭配[Y]。",
}


@dataclass(frozen=True)
class HardTemplate:
    """A sentence pattern containing exactly one [X] then one [Y]."""

    predicate_id: str
    pattern: str

    def __post_init__(self) -> None:
        p = self.pattern
        if p.count("[X]") != 1 or p.count("[Y]") != 1:
            raise TemplateError(
                f"pattern must contain [X] and [Y] exactly once each: {p!r}"
            )
        if p.index("[X]") > p.index("[Y]"):
            raise TemplateError(f"[X] must precede [Y]: {p!r}")

    def pieces(self) -> tuple[str, str, str]:
        """Split the pattern into (prefix, middle, suffix) around the slots."""
        prefix, rest = self.pattern.split("[X]", 1)
        middle, suffix = rest.split("[Y]", 1)
        return prefix, middle, suffix


@dataclass(frozen=True)
class PromptLayout:
    """Prompt-slot counts: before the predicate text, between predicate and
    object, and trailing. Default totals l = 12."""

    n_pre: int = 3
    n_mid: int = 4
    n_post: int = 5

    def __post_init__(self) -> None:
        if min(self.n_pre, self.n_mid, self.n_post) < 0:
            raise TemplateError("prompt-slot counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n_pre + self.n_mid + self.n_post


@dataclass(frozen=True)
class MaskStep:
    """One pseudo-likelihood step: which positions are masked, and the single
    measured position whose target token probability enters the span sum."""

    masked_positions: tuple[int, ...]
    target_position: int
    target_id: int

    def __post_init__(self) -> None:
        if self.target_position not in self.masked_positions:
            raise TemplateError("target_position must be one of the masked positions")
        if len(set(self.masked_positions)) != len(self.masked_positions):
            raise TemplateError("masked positions must be distinct")


@dataclass(frozen=True)
class RenderedInput:
    """A tokenized template with entity spans, prompt slots, and a mask plan."""

    tokens: tuple[int, ...]
    subject_span: tuple[int, int]  # half-open [start, end)
    object_span: tuple[int, int]
    prompt_positions: tuple[int, ...]
    variant: str
    mask_plan: tuple[MaskStep, ...]

    def __post_init__(self) -> None:
        n = len(self.tokens)
        s0, s1 = self.subject_span
        o0, o1 = self.object_span
        if not (0 <= s0 < s1 <= n) or not (0 <= o0 < o1 <= n):
            raise TemplateError("entity spans out of bounds or empty")
        subj = set(range(s0, s1))
        obj = set(range(o0, o1))
        prompts = set(self.prompt_positions)
        if subj & obj or subj & prompts or obj & prompts:
            raise TemplateError("entity spans and prompt positions must be disjoint")
        if any(p < 0 or p >= n for p in prompts):
            raise TemplateError("prompt position out of bounds")
        if list(self.prompt_positions) != sorted(self.prompt_positions):
            raise TemplateError("prompt positions must be strictly increasing")
        if len(prompts) != len(self.prompt_positions):
            raise TemplateError("prompt positions must be distinct")
        entity = subj | obj
        for step in self.mask_plan:
            if any(p not in entity for p in step.masked_positions):
                raise TemplateError("mask plan may only mask entity-span positions")

    @property
    def subject_positions(self) -> tuple[int, ...]:
        return tuple(range(*self.subject_span))

    @property
    def object_positions(self) -> tuple[int, ...]:
        return tuple(range(*self.object_span))

    def steps_measuring(self, span: tuple[int, int]) -> tuple[MaskStep, ...]:
        lo, hi = span
        return tuple(s for s in self.mask_plan if lo <= s.target_position < hi)


class TemplateRegistry:
    """Write-once-then-read registry of hard templates, keyed by predicate id."""

    def __init__(self, patterns: dict[str, str] | None = None) -> None:
        self._templates: dict[str, HardTemplate] = {}
        for pid, pattern in (patterns if patterns is not None else DEFAULT_PATTERNS).items():
            self.register(pid, pattern)

    def register(self, predicate: Predicate | str, pattern: str) -> None:
        """Register or overwrite the pattern used for a predicate."""
        pid = predicate.id if isinstance(predicate, Predicate) else predicate
        self._templates[pid] = HardTemplate(pid, pattern)

    def get(self, predicate: Predicate | str) -> HardTemplate:
        pid = predicate.id if isinstance(predicate, Predicate) else predicate
        if pid not in self._templates:
            raise TemplateError(f"no template registered for predicate {pid!r}")
        return self._templates[pid]

    def __contains__(self, predicate_id: str) -> bool:
        return predicate_id in self._templates

    def load_file(self, path: str | Path) -> None:
        """Read ``predicate<TAB>pattern`` lines, overriding existing entries."""
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" not in line:
                raise TemplateError(f"{path}:{lineno}: expected predicate<TAB>pattern")
            pid, pattern = line.split("\t", 1)
            self.register(pid.strip(), pattern)

    def write_file(self, path: str | Path) -> None:
        lines = [f"{pid}\t{t.pattern}" for pid, t in sorted(self._templates.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_variants(
    triple: Triple,
    backend: "Backend",
    layout: PromptLayout | None = None,
    registry: TemplateRegistry | None = None,
) -> tuple[RenderedInput, RenderedInput, RenderedInput]:
    """Render the three masked variants of a triple.

    All variants share one token sequence; they differ only in their mask
    plans. Rendering is deterministic for a fixed tokenizer and layout.
    """
    layout = layout if layout is not None else PromptLayout()
    registry = registry if registry is not None else TemplateRegistry()
    template = registry.get(triple.predicate)
    prefix, middle, suffix = template.pieces()

    subject_ids = backend.tokenize(triple.subject)
    object_ids = backend.tokenize(triple.object)
    if not subject_ids or not object_ids:
        raise TemplateError(
            f"subject/object must tokenize to at least one token: {triple.key()}"
        )
    prefix_ids = backend.tokenize(prefix)
    middle_ids = backend.tokenize(middle)
    suffix_ids = backend.tokenize(suffix)
    prompt = backend.prompt_id

    tokens: list[int] = []
    prompt_positions: list[int] = []

    def emit(ids: Iterable[int]) -> None:
        tokens.extend(ids)

    def emit_prompts(count: int) -> None:
        for _ in range(count):
            prompt_positions.append(len(tokens))
            tokens.append(prompt)

    emit(prefix_ids)
    subj_start = len(tokens)
    emit(subject_ids)
    subj_end = len(tokens)
    emit_prompts(layout.n_pre)
    emit(middle_ids)
    emit_prompts(layout.n_mid)
    obj_start = len(tokens)
    emit(object_ids)
    obj_end = len(tokens)
    emit(suffix_ids)
    emit_prompts(layout.n_post)

    seq = tuple(tokens)
    subject_span = (subj_start, subj_end)
    object_span = (obj_start, obj_end)
    subj_positions = tuple(range(subj_start, subj_end))
    obj_positions = tuple(range(obj_start, obj_end))

    def single_steps(positions: tuple[int, ...]) -> tuple[MaskStep, ...]:
        return tuple(MaskStep((p,), p, seq[p]) for p in positions)

    def joint_steps(measured: tuple[int, ...], hidden: tuple[int, ...]) -> tuple[MaskStep, ...]:
        return tuple(
            MaskStep(tuple(sorted(hidden + (p,))), p, seq[p]) for p in measured
        )

    common = dict(
        tokens=seq,
        subject_span=subject_span,
        object_span=object_span,
        prompt_positions=tuple(prompt_positions),
    )
    t1 = RenderedInput(variant="T1", mask_plan=single_steps(obj_positions), **common)
    t2 = RenderedInput(variant="T2", mask_plan=single_steps(subj_positions), **common)
    t3 = RenderedInput(
        variant="T3",
        mask_plan=joint_steps(obj_positions, subj_positions)
        + joint_steps(subj_positions, obj_positions),
        **common,
    )
    return t1, t2, t3
