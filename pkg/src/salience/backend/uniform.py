"""Uniform mock backend: every masked prediction is the uniform distribution.

Serves as an analytic oracle (all log-probs are exactly -ln V) and as a
gradient edge case (constant output, so prompt gradients vanish).
"""

from __future__ import annotations

import math
import zlib

import numpy as np

from ..errors import BackendError
from .base import (
    Backend,
    BackendInfo,
    GradBundle,
    MaskedQuery,
    check_upstream_weights,
    whitespace_tokens,
)


class UniformBackend(Backend):
    """Context-free backend over a vocabulary of size V.

    Word ids come from a stable hash, so tokenization is deterministic
    across processes. For very small V the reserved ids may collide with
    word ids; outputs never depend on ids.
    """

    supports_gradients = True

    def __init__(self, vocab_size: int, embedding_dim: int = 1) -> None:
        if vocab_size < 2:
            raise BackendError(f"uniform backend needs vocab_size >= 2, got {vocab_size}")
        if embedding_dim < 1:
            raise BackendError(f"embedding_dim must be >= 1, got {embedding_dim}")
        self._v = vocab_size
        self._d = embedding_dim
        self._log_prob = -math.log(vocab_size)
        self._seen: dict[int, str] = {}

    def info(self) -> BackendInfo:
        return BackendInfo(self._v, self._d, f"uniform:V={self._v}:d={self._d}")

    @property
    def mask_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return min(1, self._v - 1)

    @property
    def prompt_id(self) -> int:
        return min(2, self._v - 1)

    def _word_id(self, word: str) -> int:
        reserved = 3 if self._v > 3 else 0
        wid = reserved + zlib.crc32(word.encode("utf-8")) % (self._v - reserved)
        self._seen[wid] = self._seen.get(wid, word)
        return wid

    def tokenize(self, text: str) -> list[int]:
        return [self._word_id(w) for w in whitespace_tokens(text)]

    def detokenize(self, ids: list[int]) -> str:
        return " ".join(self._seen.get(i, f"<{i}>") for i in ids)

    def forward_log_probs(self, queries: list[MaskedQuery]) -> list[list[float]]:
        out = []
        for q in queries:
            self._check_injection_dims(q)
            out.append([self._log_prob] * len(q.masked_positions))
        return out

    def forward_with_prompt_grads(
        self, queries: list[MaskedQuery], upstream_weights: list[list[float]]
    ) -> GradBundle:
        check_upstream_weights(queries, upstream_weights)
        log_probs = self.forward_log_probs(queries)
        grads = [
            [np.zeros(self._d, dtype=np.float64) for _ in q.prompt_injections]
            for q in queries
        ]
        return GradBundle(log_probs=log_probs, prompt_grads=grads)


def build_uniform_backend(vocab_size: int, embedding_dim: int = 1) -> UniformBackend:
    """Uniform backend over V tokens; every output is exactly -ln V."""
    return UniformBackend(vocab_size, embedding_dim)
