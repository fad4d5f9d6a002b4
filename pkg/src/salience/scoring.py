"""Span pseudo-log-likelihoods, necessity/sufficiency scores, and salience.

Necessity and sufficiency are PMI-style ratios of span probabilities read
off a masked LM through the template variants:

* raw mode:        log P(x|context) - alpha * log P(x|marginal context)
* normalized mode: the raw value divided by a positive rescaling term,
  pulling scores toward [-1, 1] (0 = independence).

The normalized denominator has two variants. ``paper`` mixes in the other
entity's marginal: necessity uses -log P(s|p,o) - alpha * log P(o|p), and
sufficiency the mirror image. ``standard`` divides by -log of the role's
own conditional only. Salience is the convex combination
lambda * sufficiency + (1 - lambda) * necessity.

All arithmetic here is plain operators, so the same code paths accept
floats and autograd scalars.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

from .backend.base import Backend, MaskedQuery
from .core import Triple
from .errors import ConfigError, DegenerateInputError, SalienceError, ScoringError
from .prompt import PromptVectors
from .templates import MaskStep, PromptLayout, RenderedInput, TemplateRegistry, render_variants

if TYPE_CHECKING:  # pragma: no cover
    from .training import ModelArtifact

MODES = ("raw", "normalized")
DENOMINATORS = ("paper", "standard")
ROLES = ("necessity", "sufficiency")


@dataclass(frozen=True)
class ScoreConfig:
    """Knobs of the score computation.

    ``lambda_value`` is the fixed mixing weight used when no trained model
    supplies a learned one.
    """

    alpha: float = 0.66
    mode: str = "normalized"
    denominator: str = "paper"
    clamp_epsilon: float = 1e-6
    lambda_value: float = 0.5

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.denominator not in DENOMINATORS:
            raise ConfigError(f"denominator must be one of {DENOMINATORS}, got {self.denominator!r}")
        if self.clamp_epsilon <= 0:
            raise ConfigError(f"clamp_epsilon must be > 0, got {self.clamp_epsilon}")
        if not 0.0 <= self.lambda_value <= 1.0:
            raise ConfigError(f"lambda_value must be in [0, 1], got {self.lambda_value}")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "mode": self.mode,
            "denominator": self.denominator,
            "clamp_epsilon": self.clamp_epsilon,
            "lambda_value": self.lambda_value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreConfig":
        return cls(**d)


@dataclass(frozen=True)
class ProbabilityBundle:
    """The four span log-probabilities behind one triple's scores."""

    lp_o_given_sp: float
    lp_s_given_po: float
    lp_o_given_p: float
    lp_s_given_p: float

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if not math.isfinite(value):
                raise ScoringError(f"{name} must be finite, got {value}")
            if value > 0:
                raise ScoringError(f"{name} must be <= 0, got {value}")

    def as_dict(self) -> dict[str, float]:
        return {
            "lp_o_given_sp": self.lp_o_given_sp,
            "lp_s_given_po": self.lp_s_given_po,
            "lp_o_given_p": self.lp_o_given_p,
            "lp_s_given_p": self.lp_s_given_p,
        }


@dataclass(frozen=True)
class ScoreTriple:
    """Necessity, sufficiency, and their combination for one triple."""

    necessity: float
    sufficiency: float
    salience: float


def pmi_ratio(lp_cond, lp_own, lp_other, alpha: float, mode: str, denominator: str):
    """Shared necessity/sufficiency formula over (conditional, own marginal,
    other marginal) log-probabilities. Works on floats and autograd scalars."""
    numerator = lp_cond - alpha * lp_own
    if mode == "raw":
        return numerator
    if denominator == "paper":
        den = -lp_cond - alpha * lp_other
    else:
        den = -lp_cond
    den_value = float(den.detach()) if hasattr(den, "detach") else float(den)
    if den_value <= 0.0:
        raise DegenerateInputError(
            f"non-positive normalization denominator {den_value!r} "
            f"(lp_cond={lp_cond!r}, lp_other={lp_other!r}, alpha={alpha})"
        )
    return numerator / den


def npmi_score(bundle: ProbabilityBundle, role: str, config: ScoreConfig) -> float:
    """Necessity or sufficiency score of a probability bundle."""
    if role == "necessity":
        return pmi_ratio(
            bundle.lp_s_given_po,
            bundle.lp_s_given_p,
            bundle.lp_o_given_p,
            config.alpha,
            config.mode,
            config.denominator,
        )
    if role == "sufficiency":
        return pmi_ratio(
            bundle.lp_o_given_sp,
            bundle.lp_o_given_p,
            bundle.lp_s_given_p,
            config.alpha,
            config.mode,
            config.denominator,
        )
    raise ConfigError(f"role must be one of {ROLES}, got {role!r}")


def combine_salience(nec, suf, lam):
    """lambda * sufficiency + (1 - lambda) * necessity."""
    lam_value = float(lam)
    if not 0.0 <= lam_value <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam_value}")
    return lam * suf + (1.0 - lam) * nec


def build_step_query(
    backend: Backend,
    rendered: RenderedInput,
    step: MaskStep,
    prompts: PromptVectors,
) -> MaskedQuery:
    """Turn one mask-plan step into a backend query.

    Auxiliary masked positions (the hidden entity span in the both-masked
    variant) are written into the token sequence as mask tokens; only the
    measured position is queried. Prompt vectors are injected as offsets
    from the backend's placeholder anchor, so zero vectors leave the
    template's plain placeholder behavior untouched.
    """
    if len(prompts) != len(rendered.prompt_positions):
        raise ScoringError(
            f"prompt vector count {len(prompts)} does not match "
            f"{len(rendered.prompt_positions)} rendered slots"
        )
    tokens = list(rendered.tokens)
    for p in step.masked_positions:
        if p != step.target_position:
            tokens[p] = backend.mask_id
    anchor = backend.prompt_anchor() if len(prompts) else None
    injections = tuple(
        (pos, anchor + prompts.vectors[k]) for k, pos in enumerate(rendered.prompt_positions)
    )
    return MaskedQuery(
        tokens=tuple(tokens),
        masked_positions=(step.target_position,),
        target_ids=(step.target_id,),
        prompt_injections=injections,
    )


def span_pll(
    backend: Backend,
    rendered: RenderedInput,
    prompts: PromptVectors,
    steps: Sequence[MaskStep] | None = None,
) -> float:
    """Sum of target log-probs over the mask plan, one masked token per step."""
    plan = tuple(steps) if steps is not None else rendered.mask_plan
    if not plan:
        raise ScoringError("mask plan is empty")
    queries = [build_step_query(backend, rendered, step, prompts) for step in plan]
    results = backend.forward_log_probs(queries)
    return float(sum(row[0] for row in results))


def collect_probabilities(
    backend: Backend,
    triple: Triple,
    prompts: PromptVectors,
    layout: PromptLayout,
    config: ScoreConfig,
    templates: TemplateRegistry | None = None,
) -> ProbabilityBundle:
    """Render the three variants and read off the four span probabilities,
    each clamped to at most -clamp_epsilon."""
    t1, t2, t3 = render_variants(triple, backend, layout, templates)
    cap = -config.clamp_epsilon
    return ProbabilityBundle(
        lp_o_given_sp=min(span_pll(backend, t1, prompts), cap),
        lp_s_given_po=min(span_pll(backend, t2, prompts), cap),
        lp_o_given_p=min(
            span_pll(backend, t3, prompts, t3.steps_measuring(t3.object_span)), cap
        ),
        lp_s_given_p=min(
            span_pll(backend, t3, prompts, t3.steps_measuring(t3.subject_span)), cap
        ),
    )


def score_triple(
    backend: Backend,
    triple: Triple,
    prompts: PromptVectors,
    layout: PromptLayout,
    config: ScoreConfig,
    lam: float,
    templates: TemplateRegistry | None = None,
) -> ScoreTriple:
    bundle = collect_probabilities(backend, triple, prompts, layout, config, templates)
    nec = npmi_score(bundle, "necessity", config)
    suf = npmi_score(bundle, "sufficiency", config)
    return ScoreTriple(necessity=nec, sufficiency=suf, salience=combine_salience(nec, suf, lam))


@dataclass
class ScoreBatchResult:
    """Batch scores in input order; failed triples stay None and are listed
    in the failure report instead of aborting the batch."""

    scores: list[ScoreTriple | None]
    failures: list[tuple[int, str, str]] = field(default_factory=list)  # (index, category, message)

    @property
    def ok(self) -> bool:
        return not self.failures


def score_batch(
    backend: Backend,
    triples: Sequence[Triple],
    model: "ModelArtifact | None" = None,
    config: ScoreConfig | None = None,
    templates: TemplateRegistry | None = None,
) -> ScoreBatchResult:
    """Score triples with a trained model, or unsupervised (no prompt slots,
    fixed lambda from the config) when no model is given."""
    if model is not None:
        from .prompt import encode_prompts

        prompts = encode_prompts(model.prompt_params)
        layout = model.config.layout
        cfg = config if config is not None else model.config.score_config
        lam = model.lambda_value
        if model.backend_fingerprint != backend.fingerprint():
            warnings.warn(
                "scoring backend fingerprint differs from the one the model was trained on",
                stacklevel=2,
            )
    else:
        cfg = config if config is not None else ScoreConfig()
        layout = PromptLayout(0, 0, 0)
        prompts = PromptVectors.empty(backend.info().embedding_dim)
        lam = cfg.lambda_value

    result = ScoreBatchResult(scores=[None] * len(triples))
    for i, triple in enumerate(triples):
        try:
            result.scores[i] = score_triple(backend, triple, prompts, layout, cfg, lam, templates)
        except SalienceError as exc:
            result.failures.append((i, exc.category, str(exc)))
    return result
