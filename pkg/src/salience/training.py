"""Optimization of prompt parameters and the mixing weight.

The backend stays frozen: per batch we (1) run the backend forward, (2)
rebuild the scoring arithmetic on the returned log-probs as autograd
leaves and backpropagate the loss to get per-position upstream weights and
the mixing-weight gradient, (3) ask the backend for the gradient of the
weighted log-prob sum with respect to the injected prompt vectors, and (4)
push that gradient through the prompt encoder. Adam then updates the
encoder parameters and the mixing weight only.

The mixing weight lambda is the logistic transform of an unconstrained
scalar, so it stays inside (0, 1) for the whole run.

Two objectives: ``simplified`` is mean squared error against binary
salience labels; ``original`` ranks instances within the mini-batch,
log[1 + sum over annotation-ordered pairs of exp(score_j - score_i)],
applied to salience plus gamma-weighted necessity and sufficiency terms.
Pairs require strictly greater annotations; ties contribute nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .backend.base import Backend
from .core import AnnotatedTriple, Dataset
from .errors import ConfigError, TrainingError
from .evaluation import auc_score, classification_metrics, select_threshold
from .prompt import PromptParams, PromptVectors, init_prompt_params
from .scoring import ScoreConfig, build_step_query, pmi_ratio
from .seeding import rng_for
from .templates import PromptLayout, TemplateRegistry, render_variants

LOSS_MODES = ("simplified", "original")
_LAMBDA_MARGIN = 1e-6


def _logit(p: float) -> float:
    p = min(max(p, _LAMBDA_MARGIN), 1.0 - _LAMBDA_MARGIN)
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a training run."""

    loss_mode: str = "simplified"
    learning_rate: float = 1e-5
    batch_size: int = 8
    gamma: float = 0.1
    lambda_init: float = 0.5
    epochs: int = 10
    seed: int = 0
    train_fraction: float = 1.0
    layout: PromptLayout = PromptLayout()
    score_config: ScoreConfig = ScoreConfig()
    hidden_size: int | None = None
    threshold_method: str = "sweep"
    early_stop: bool = False
    patience: int = 3

    def __post_init__(self) -> None:
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.lambda_init <= 1.0:
            raise ConfigError(f"lambda_init must be in [0, 1], got {self.lambda_init}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError(f"train_fraction must be in (0, 1], got {self.train_fraction}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return {
            "loss_mode": self.loss_mode,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "gamma": self.gamma,
            "lambda_init": self.lambda_init,
            "epochs": self.epochs,
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "layout": [self.layout.n_pre, self.layout.n_mid, self.layout.n_post],
            "score_config": self.score_config.to_dict(),
            "hidden_size": self.hidden_size,
            "threshold_method": self.threshold_method,
            "early_stop": self.early_stop,
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "layout" in d:
            d["layout"] = PromptLayout(*d["layout"])
        if "score_config" in d:
            d["score_config"] = ScoreConfig.from_dict(d["score_config"])
        return cls(**d)


def _as_scalar_tensor_list(values: Sequence) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(torch.float64)
    if len(values) > 0 and isinstance(values[0], torch.Tensor):
        return torch.stack([v.reshape(()) for v in values]).to(torch.float64)
    return torch.as_tensor(np.asarray(values, dtype=np.float64))


def loss_simplified(predictions: Sequence, labels: Sequence) -> torch.Tensor:
    """Mean squared error between predicted scores and binary labels."""
    if len(predictions) != len(labels):
        raise TrainingError(
            f"predictions ({len(predictions)}) and labels ({len(labels)}) differ in length"
        )
    if len(predictions) == 0:
        raise TrainingError("need at least one instance")
    pred = _as_scalar_tensor_list(predictions)
    lab = _as_scalar_tensor_list(labels)
    return ((lab - pred) ** 2).mean()


def _ranking_term(pred: torch.Tensor, annot: np.ndarray) -> torch.Tensor:
    total: torch.Tensor | None = None
    n = len(annot)
    for i in range(n):
        for j in range(n):
            if annot[i] > annot[j]:
                term = torch.exp(pred[j] - pred[i])
                total = term if total is None else total + term
    if total is None:
        return torch.zeros((), dtype=torch.float64)
    return torch.log1p(total)


def loss_original(
    predictions: Sequence[tuple], annotations: Sequence[tuple], gamma: float = 0.1
) -> torch.Tensor:
    """In-batch pairwise ranking loss over (salience, necessity, sufficiency).

    Annotations may be binary, Likert, or continuous scores; only their
    strict order within the batch matters.
    """
    if len(predictions) != len(annotations):
        raise TrainingError(
            f"predictions ({len(predictions)}) and annotations ({len(annotations)}) differ in length"
        )
    if len(predictions) == 0:
        raise TrainingError("need at least one instance")
    for row in annotations:
        if any(v is None for v in row):
            raise TrainingError("original loss needs salience, necessity, and sufficiency annotations")
    pred_s = _as_scalar_tensor_list([p[0] for p in predictions])
    pred_n = _as_scalar_tensor_list([p[1] for p in predictions])
    pred_f = _as_scalar_tensor_list([p[2] for p in predictions])
    annot = np.asarray([[float(v) for v in row] for row in annotations], dtype=np.float64)
    loss = _ranking_term(pred_s, annot[:, 0])
    loss = loss + gamma * _ranking_term(pred_n, annot[:, 1])
    loss = loss + gamma * _ranking_term(pred_f, annot[:, 2])
    return loss


_BUNDLE_GROUPS = ("lp_o_given_sp", "lp_s_given_po", "lp_o_given_p", "lp_s_given_p")


def _query_groups(rendered_triple) -> list[tuple[str, object, tuple]]:
    t1, t2, t3 = rendered_triple
    return [
        ("lp_o_given_sp", t1, t1.mask_plan),
        ("lp_s_given_po", t2, t2.mask_plan),
        ("lp_o_given_p", t3, t3.steps_measuring(t3.object_span)),
        ("lp_s_given_p", t3, t3.steps_measuring(t3.subject_span)),
    ]


def batch_loss(
    backend: Backend,
    records: Sequence[AnnotatedTriple],
    params: PromptParams,
    lambda_u: torch.Tensor,
    config: TrainConfig,
    templates: TemplateRegistry | None = None,
    rendered: Sequence[tuple] | None = None,
    compute_grads: bool = False,
) -> float:
    """Loss of one mini-batch; with ``compute_grads`` the gradients are
    accumulated into ``params`` and ``lambda_u``.

    This is the exact pipeline the training loop runs, exposed so gradient
    checks can compare it against finite differences.
    """
    if rendered is None:
        rendered = [
            render_variants(r.triple, backend, config.layout, templates) for r in records
        ]
    prompt_tensor = params()
    prompts = PromptVectors(prompt_tensor.detach().numpy().copy())
    sc = config.score_config

    queries = []
    slices: list[dict[str, tuple[int, int]]] = []
    for rend in rendered:
        per: dict[str, tuple[int, int]] = {}
        for name, variant, steps in _query_groups(rend):
            start = len(queries)
            queries.extend(build_step_query(backend, variant, s, prompts) for s in steps)
            per[name] = (start, len(queries))
        slices.append(per)

    values = backend.forward_log_probs(queries)
    flat = torch.tensor([row[0] for row in values], dtype=torch.float64, requires_grad=compute_grads)
    lam = torch.sigmoid(lambda_u)
    cap = -sc.clamp_epsilon

    predictions: list[tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = []
    for per in slices:
        lp = {name: torch.clamp(flat[a:b].sum(), max=cap) for name, (a, b) in per.items()}
        nec = pmi_ratio(
            lp["lp_s_given_po"], lp["lp_s_given_p"], lp["lp_o_given_p"],
            sc.alpha, sc.mode, sc.denominator,
        )
        suf = pmi_ratio(
            lp["lp_o_given_sp"], lp["lp_o_given_p"], lp["lp_s_given_p"],
            sc.alpha, sc.mode, sc.denominator,
        )
        sal = lam * suf + (1.0 - lam) * nec
        predictions.append((sal, nec, suf))

    if config.loss_mode == "simplified":
        loss = loss_simplified([p[0] for p in predictions], [r.salient for r in records])
    else:
        loss = loss_original(
            predictions,
            [(r.salient, r.necessity, r.sufficiency) for r in records],
            gamma=config.gamma,
        )

    loss_value = float(loss.detach())
    if not math.isfinite(loss_value):
        keys = [r.triple.key() for r in records]
        raise TrainingError(f"non-finite loss {loss_value} on batch {keys}")

    if compute_grads:
        loss.backward()
        if flat.grad is not None and len(queries) > 0:
            upstream = [[float(g)] for g in flat.grad]
            bundle = backend.forward_with_prompt_grads(queries, upstream)
            l, d = params.length, params.dim
            prompt_grad = np.zeros((l, d), dtype=np.float64)
            for query, grads in zip(queries, bundle.prompt_grads):
                for k, g in enumerate(grads):
                    prompt_grad[k] += g
            prompt_tensor.backward(torch.from_numpy(prompt_grad))
    return loss_value


@dataclass
class ModelArtifact:
    """Trained prompt parameters, mixing weight, decision threshold, and the
    provenance needed to score with them."""

    prompt_params: PromptParams
    lambda_u: float
    threshold: float
    config: TrainConfig
    backend_fingerprint: str
    training_log: list[dict] = field(default_factory=list)

    @property
    def lambda_value(self) -> float:
        return 1.0 / (1.0 + math.exp(-self.lambda_u))

    def save(self, path: str | Path) -> None:
        """Write weights.npz (flat double arrays) + manifest.json."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        arrays = self.prompt_params.flat_arrays()
        arrays["lambda_u"] = np.asarray(self.lambda_u, dtype=np.float64)
        np.savez(path / "weights.npz", **arrays)
        manifest = {
            "format_version": 1,
            "threshold": self.threshold,
            "lambda_u": self.lambda_u,
            "lambda_value": self.lambda_value,
            "backend_fingerprint": self.backend_fingerprint,
            "prompt_shape": {
                "length": self.prompt_params.length,
                "dim": self.prompt_params.dim,
                "hidden": self.prompt_params.hidden,
            },
            "config": self.config.to_dict(),
            "training_log": self.training_log,
        }
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ModelArtifact":
        path = Path(path)
        try:
            manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model manifest at {path}: {exc}") from exc
        shape = manifest["prompt_shape"]
        params = PromptParams(shape["length"], shape["dim"], shape["hidden"])
        with np.load(path / "weights.npz") as arrays:
            params.load_flat_arrays({k: arrays[k] for k in arrays.files if k != "lambda_u"})
            lambda_u = float(arrays["lambda_u"])
        return cls(
            prompt_params=params,
            lambda_u=lambda_u,
            threshold=float(manifest["threshold"]),
            config=TrainConfig.from_dict(manifest["config"]),
            backend_fingerprint=str(manifest["backend_fingerprint"]),
            training_log=list(manifest.get("training_log", [])),
        )


def _check_schema_for_loss(dataset: Dataset, loss_mode: str, which: str) -> None:
    for i, rec in enumerate(dataset.records):
        if rec.salient is None:
            raise TrainingError(f"{which} record {i} lacks a salient label")
        if loss_mode == "original" and (rec.sufficiency is None or rec.necessity is None):
            raise TrainingError(
                f"{which} record {i} lacks sufficiency/necessity labels required by the original loss"
            )


def _score_records(
    backend: Backend,
    records: Sequence[AnnotatedTriple],
    prompts: PromptVectors,
    layout: PromptLayout,
    sc: ScoreConfig,
    lam: float,
    templates: TemplateRegistry | None,
) -> np.ndarray:
    from .scoring import score_triple

    out = np.empty(len(records), dtype=np.float64)
    for i, rec in enumerate(records):
        out[i] = score_triple(backend, rec.triple, prompts, layout, sc, lam, templates).salience
    return out


def train(
    config: TrainConfig,
    train_set: Dataset,
    dev_set: Dataset,
    backend: Backend,
    templates: TemplateRegistry | None = None,
) -> ModelArtifact:
    """Fit prompt parameters and the mixing weight; the backend is frozen.

    Mini-batches are drawn with a seeded shuffle each epoch. When
    ``train_fraction`` < 1 the training set is subsampled once, with the
    seed, before the first epoch. After the last epoch the decision
    threshold is selected on the dev set and stored in the artifact.
    """
    if not backend.supports_gradients:
        raise TrainingError("backend does not support prompt gradients; cannot train")
    if len(train_set) == 0:
        raise TrainingError("training set is empty")
    _check_schema_for_loss(train_set, config.loss_mode, "train")
    _check_schema_for_loss(dev_set, "simplified", "dev")
    if config.layout.total < 1:
        raise ConfigError("training needs at least one prompt slot in the layout")

    fingerprint_before = backend.fingerprint()
    info = backend.info()
    d = info.embedding_dim
    h = config.hidden_size if config.hidden_size is not None else max(1, d // 2)
    params = init_prompt_params(config.seed, config.layout.total, d, h)
    lambda_u = torch.tensor(_logit(config.lambda_init), dtype=torch.float64, requires_grad=True)
    optimizer = torch.optim.Adam(list(params.parameters()) + [lambda_u], lr=config.learning_rate)

    n = len(train_set)
    k = min(n, max(1, round(config.train_fraction * n)))
    if k < n:
        chosen = sorted(rng_for(config.seed, "subsample").choice(n, size=k, replace=False))
        records = [train_set.records[int(i)] for i in chosen]
    else:
        records = list(train_set.records)

    rendered = [render_variants(r.triple, backend, config.layout, templates) for r in records]
    dev_labels = [r.salient for r in dev_set.records]

    def dev_snapshot() -> dict:
        from .prompt import encode_prompts

        prompts = encode_prompts(params)
        lam = float(torch.sigmoid(lambda_u))
        scores = _score_records(
            backend, dev_set.records, prompts, config.layout, config.score_config, lam, templates
        )
        return {"scores": scores, "auc": auc_score(scores, dev_labels) if len(dev_set) else None}

    training_log: list[dict] = [{"setup": {"train_records": len(records), "total_records": n}}]
    best_auc = -np.inf
    stale = 0
    for epoch in range(config.epochs):
        order = rng_for(config.seed, f"epoch:{epoch}").permutation(len(records))
        epoch_losses = []
        for start in range(0, len(records), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            batch = [records[int(i)] for i in batch_idx]
            batch_rendered = [rendered[int(i)] for i in batch_idx]
            optimizer.zero_grad()
            loss_value = batch_loss(
                backend, batch, params, lambda_u, config, templates,
                rendered=batch_rendered, compute_grads=True,
            )
            optimizer.step()
            lam_now = float(torch.sigmoid(lambda_u))
            if not 0.0 < lam_now < 1.0:
                raise TrainingError(f"lambda left (0, 1): {lam_now}")
            epoch_losses.append(loss_value)
        entry = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if len(dev_set) > 0:
            snap = dev_snapshot()
            entry["dev_auc"] = float(snap["auc"])
            if config.early_stop:
                if snap["auc"] > best_auc:
                    best_auc = snap["auc"]
                    stale = 0
                else:
                    stale += 1
        training_log.append(entry)
        if config.early_stop and stale >= config.patience:
            training_log.append({"epoch": epoch, "early_stop": True})
            break

    if backend.fingerprint() != fingerprint_before:
        raise TrainingError("backend parameters changed during training; the backend must stay frozen")

    if len(dev_set) > 0:
        snap = dev_snapshot()
        threshold = select_threshold(snap["scores"], dev_labels, method=config.threshold_method)
        report = classification_metrics(snap["scores"], dev_labels, threshold)
        training_log.append({"final_dev": report.to_dict()})
    else:
        threshold = 0.0
        training_log.append({"final_dev": None})

    return ModelArtifact(
        prompt_params=params,
        lambda_u=float(lambda_u),
        threshold=float(threshold),
        config=config,
        backend_fingerprint=fingerprint_before,
        training_log=training_log,
    )
