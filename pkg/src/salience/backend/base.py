"""Masked-language-model backend contract.

A backend owns a tokenizer and answers masked queries with log-probabilities
of target tokens. Gradient support is part of the contract: a backend that
supports training reports the gradient of a caller-weighted sum of its
output log-probabilities with respect to injected prompt vectors, while its
own parameters stay frozen. All probabilities are float64.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

from ..errors import BackendError


@dataclass(frozen=True)
class BackendInfo:
    """Static facts about a backend: vocabulary size, embedding width, and a
    parameter fingerprint."""

    vocab_size: int
    embedding_dim: int
    identifier: str

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise BackendError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.embedding_dim < 1:
            raise BackendError(f"embedding_dim must be >= 1, got {self.embedding_dim}")


@dataclass(frozen=True)
class MaskedQuery:
    """One forward request: a token sequence, positions to mask, the target
    token id expected at each masked position, and prompt vectors to inject
    at reserved positions (replacing those positions' input embeddings)."""

    tokens: tuple[int, ...]
    masked_positions: tuple[int, ...]
    target_ids: tuple[int, ...]
    prompt_injections: tuple[tuple[int, np.ndarray], ...] = ()

    def __post_init__(self) -> None:
        n = len(self.tokens)
        if len(set(self.masked_positions)) != len(self.masked_positions):
            raise BackendError("masked positions must be distinct")
        if any(p < 0 or p >= n for p in self.masked_positions):
            raise BackendError("masked position out of bounds")
        if len(self.target_ids) != len(self.masked_positions):
            raise BackendError("need exactly one target id per masked position")
        inj_positions = [p for p, _ in self.prompt_injections]
        if len(set(inj_positions)) != len(inj_positions):
            raise BackendError("injection positions must be distinct")
        if any(p < 0 or p >= n for p in inj_positions):
            raise BackendError("injection position out of bounds")
        if set(inj_positions) & set(self.masked_positions):
            raise BackendError("injection positions must be disjoint from masked positions")


@dataclass
class GradBundle:
    """Forward log-probs plus gradients of the caller's weighted sum with
    respect to each query's injected vectors (in injection order)."""

    log_probs: list[list[float]]
    prompt_grads: list[list[np.ndarray]] = field(default_factory=list)


class Backend(abc.ABC):
    """Contract shared by the uniform mock, the tiny reference MLM, and the
    remote scoring client."""

    supports_gradients: bool = False

    @abc.abstractmethod
    def info(self) -> BackendInfo: ...

    @abc.abstractmethod
    def tokenize(self, text: str) -> list[int]:
        """Deterministic tokenization; unknown words map to the unknown id."""

    @abc.abstractmethod
    def detokenize(self, ids: list[int]) -> str:
        """Inverse of tokenize up to whitespace normalization."""

    @property
    @abc.abstractmethod
    def mask_id(self) -> int: ...

    @property
    @abc.abstractmethod
    def unk_id(self) -> int: ...

    @property
    @abc.abstractmethod
    def prompt_id(self) -> int:
        """Reserved placeholder id occupying prompt slots in token sequences."""

    def prompt_anchor(self) -> np.ndarray:
        """Base vector that injected prompt vectors are offsets from.

        Backends that expose their input embeddings return the placeholder
        token's embedding, so zero-offset injection reproduces the plain
        placeholder behavior; others anchor at zero (absolute injection).
        """
        return np.zeros(self.info().embedding_dim, dtype=np.float64)

    @abc.abstractmethod
    def forward_log_probs(self, queries: list[MaskedQuery]) -> list[list[float]]:
        """Log softmax probability of each target token at its masked
        position; one list per query, values <= 0."""

    def forward_with_prompt_grads(
        self, queries: list[MaskedQuery], upstream_weights: list[list[float]]
    ) -> GradBundle:
        """Log-probs plus d(sum_i w_i * log_prob_i)/d(injected vectors).

        Backend parameters are never updated by this call. Inference-only
        backends raise GradientsUnsupportedError.
        """
        from ..errors import GradientsUnsupportedError

        raise GradientsUnsupportedError(
            f"{type(self).__name__} does not support prompt gradients"
        )

    def fingerprint(self) -> str:
        return self.info().identifier

    def _check_injection_dims(self, query: MaskedQuery) -> None:
        d = self.info().embedding_dim
        for pos, vec in query.prompt_injections:
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (d,):
                raise BackendError(
                    f"injected vector at position {pos} has shape {v.shape}, expected ({d},)"
                )


def check_upstream_weights(
    queries: list[MaskedQuery], upstream_weights: list[list[float]]
) -> None:
    if len(upstream_weights) != len(queries):
        raise BackendError("need one weight list per query")
    for q, w in zip(queries, upstream_weights):
        if len(w) != len(q.masked_positions):
            raise BackendError("need one upstream weight per masked position")
        if not all(np.isfinite(x) for x in w):
            raise BackendError("upstream weights must be finite")


def whitespace_tokens(text: str) -> list[str]:
    """Split on runs of whitespace; the shared normalization rule for the
    in-process backends."""
    return text.split()
