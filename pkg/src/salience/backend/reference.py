"""Tiny trainable masked language model for desk-scale experiments.

A few-layer bidirectional transformer with tied input/output embeddings,
trained from scratch on a word-level corpus with random masking. Small by
design (vocab <= 512, width <= 64, <= 2 layers) so the full verification
suite runs on a laptop CPU. Everything is float64: span log-probability
sums and finite-difference gradient checks need the headroom.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torch import nn

from ..errors import BackendError
from .base import (
    Backend,
    BackendInfo,
    GradBundle,
    MaskedQuery,
    check_upstream_weights,
    whitespace_tokens,
)

MASK_TOKEN = "[MASK]"
UNK_TOKEN = "[UNK]"
PROMPT_TOKEN = "[PROMPT]"
SPECIAL_TOKENS = (MASK_TOKEN, UNK_TOKEN, PROMPT_TOKEN)

MAX_VOCAB = 512
MAX_DIM = 64
MAX_LAYERS = 2


class _TinyMLM(nn.Module):
    def __init__(self, vocab_size: int, dim: int, layers: int, max_len: int) -> None:
        super().__init__()
        self.tok_emb = nn.Embedding(vocab_size, dim)
        self.pos_emb = nn.Embedding(max_len, dim)
        nhead = 4 if dim % 4 == 0 else (2 if dim % 2 == 0 else 1)
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=nhead,
            dim_feedforward=2 * dim,
            dropout=0.0,  # keep eval == train and runs reproducible
            activation="gelu",
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(encoder_layer, num_layers=layers)
        self.out_bias = nn.Parameter(torch.zeros(vocab_size))
        self.max_len = max_len

    def embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.tok_emb(ids)

    def forward_from_embeddings(self, emb: torch.Tensor) -> torch.Tensor:
        """(B, L, d) input embeddings -> (B, L, V) log-probabilities."""
        length = emb.shape[1]
        if length > self.max_len:
            raise BackendError(f"sequence length {length} exceeds max_len {self.max_len}")
        positions = torch.arange(length, device=emb.device)
        h = self.encoder(emb + self.pos_emb(positions))
        logits = h @ self.tok_emb.weight.T + self.out_bias
        return torch.log_softmax(logits, dim=-1)


class ReferenceBackend(Backend):
    """Word-level MLM backend with full gradient support for prompt vectors."""

    supports_gradients = True

    def __init__(
        self,
        seed: int,
        dim: int,
        layers: int,
        corpus: list[str] | list[list[str]],
        steps: int = 200,
        max_len: int = 128,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        mask_fraction: float = 0.15,
    ) -> None:
        if not corpus:
            raise BackendError("reference backend needs a non-empty corpus")
        if not (1 <= dim <= MAX_DIM):
            raise BackendError(f"dim must be in [1, {MAX_DIM}], got {dim}")
        if not (1 <= layers <= MAX_LAYERS):
            raise BackendError(f"layers must be in [1, {MAX_LAYERS}], got {layers}")

        sentences = [whitespace_tokens(s) if isinstance(s, str) else list(s) for s in corpus]
        sentences = [s for s in sentences if s]
        if not sentences:
            raise BackendError("corpus contains no tokens")

        words = sorted({w for s in sentences for w in s})
        self._vocab: dict[str, int] = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
        for w in words:
            if w not in self._vocab:
                self._vocab[w] = len(self._vocab)
        self._rev_vocab = {i: t for t, i in self._vocab.items()}
        if len(self._vocab) > MAX_VOCAB:
            raise BackendError(
                f"corpus vocabulary {len(self._vocab)} exceeds the desk-scale cap {MAX_VOCAB}"
            )

        self._seed = seed
        self._dim = dim
        torch.manual_seed(seed)
        self._model = _TinyMLM(len(self._vocab), dim, layers, max_len).double()
        self._train_mlm(sentences, steps, batch_size, learning_rate, mask_fraction)
        self._model.eval()
        for p in self._model.parameters():
            p.requires_grad_(False)
        self._fingerprint = self._compute_fingerprint()

    # -- construction helpers -------------------------------------------------

    def _train_mlm(
        self,
        sentences: list[list[str]],
        steps: int,
        batch_size: int,
        learning_rate: float,
        mask_fraction: float,
    ) -> None:
        if steps <= 0:
            return
        encoded = [self._encode_words(s) for s in sentences]
        rng = np.random.default_rng(self._seed)
        optimizer = torch.optim.Adam(self._model.parameters(), lr=learning_rate)
        loss_fn = nn.NLLLoss()
        for _ in range(steps):
            batch_idx = rng.integers(0, len(encoded), size=batch_size)
            # group by length so each sub-batch packs into one tensor
            by_len: dict[int, list[list[int]]] = {}
            for i in batch_idx:
                seq = encoded[int(i)]
                by_len.setdefault(len(seq), []).append(seq)
            optimizer.zero_grad()
            total = None
            for seqs in by_len.values():
                ids = torch.tensor(seqs, dtype=torch.long)
                n, length = ids.shape
                n_mask = max(1, round(mask_fraction * length))
                masked = ids.clone()
                targets = torch.full_like(ids, -100)
                for row in range(n):
                    cols = rng.choice(length, size=n_mask, replace=False)
                    for c in cols:
                        targets[row, c] = ids[row, c]
                        masked[row, c] = self.mask_id
                log_probs = self._model.forward_from_embeddings(self._model.embed(masked))
                loss = loss_fn(log_probs.reshape(-1, log_probs.shape[-1]), targets.reshape(-1))
                total = loss if total is None else total + loss
            assert total is not None
            total.backward()
            optimizer.step()

    def _compute_fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"ref:v={len(self._vocab)}:d={self._dim}:seed={self._seed}".encode())
        for name, param in sorted(self._model.named_parameters()):
            h.update(name.encode())
            h.update(param.detach().numpy().tobytes())
        return h.hexdigest()

    # -- tokenizer -------------------------------------------------------------

    def _encode_words(self, words: list[str]) -> list[int]:
        return [self._vocab.get(w, self.unk_id) for w in words]

    def tokenize(self, text: str) -> list[int]:
        return self._encode_words(whitespace_tokens(text))

    def detokenize(self, ids: list[int]) -> str:
        return " ".join(self._rev_vocab.get(i, UNK_TOKEN) for i in ids)

    @property
    def mask_id(self) -> int:
        return self._vocab[MASK_TOKEN]

    @property
    def unk_id(self) -> int:
        return self._vocab[UNK_TOKEN]

    @property
    def prompt_id(self) -> int:
        return self._vocab[PROMPT_TOKEN]

    # -- contract --------------------------------------------------------------

    def info(self) -> BackendInfo:
        return BackendInfo(len(self._vocab), self._dim, self._fingerprint)

    def token_input_embedding(self, token_id: int) -> np.ndarray:
        """The model's own input embedding of a token (pre-position)."""
        return self._model.tok_emb.weight[token_id].detach().numpy().copy()

    def prompt_anchor(self) -> np.ndarray:
        return self.token_input_embedding(self.prompt_id)

    def _query_log_probs(
        self, query: MaskedQuery, injections: list[torch.Tensor] | None = None
    ) -> torch.Tensor:
        """Log-probs of the query's targets; differentiable in `injections`."""
        self._check_injection_dims(query)
        if any(t < 0 or t >= len(self._vocab) for t in query.target_ids):
            raise BackendError("target id out of vocabulary range")
        ids = torch.tensor(query.tokens, dtype=torch.long)
        if len(query.masked_positions) > 0:
            ids[list(query.masked_positions)] = self.mask_id
        emb = self._model.embed(ids)
        if query.prompt_injections:
            emb = emb.clone()
            for k, (pos, vec) in enumerate(query.prompt_injections):
                if injections is not None:
                    emb[pos] = injections[k]
                else:
                    emb[pos] = torch.as_tensor(np.asarray(vec, dtype=np.float64))
        log_probs = self._model.forward_from_embeddings(emb.unsqueeze(0)).squeeze(0)
        positions = torch.tensor(query.masked_positions, dtype=torch.long)
        targets = torch.tensor(query.target_ids, dtype=torch.long)
        return log_probs[positions, targets]

    def full_distribution(self, query: MaskedQuery) -> np.ndarray:
        """Full (|masked|, V) log-probability rows; used to check softmax
        normalization."""
        with torch.no_grad():
            self._check_injection_dims(query)
            ids = torch.tensor(query.tokens, dtype=torch.long)
            if len(query.masked_positions) > 0:
                ids[list(query.masked_positions)] = self.mask_id
            emb = self._model.embed(ids)
            if query.prompt_injections:
                emb = emb.clone()
                for pos, vec in query.prompt_injections:
                    emb[pos] = torch.as_tensor(np.asarray(vec, dtype=np.float64))
            log_probs = self._model.forward_from_embeddings(emb.unsqueeze(0)).squeeze(0)
            rows = log_probs[torch.tensor(query.masked_positions, dtype=torch.long)]
            return rows.numpy()

    def forward_log_probs(self, queries: list[MaskedQuery]) -> list[list[float]]:
        with torch.no_grad():
            return [[float(x) for x in self._query_log_probs(q)] for q in queries]

    def forward_with_prompt_grads(
        self, queries: list[MaskedQuery], upstream_weights: list[list[float]]
    ) -> GradBundle:
        check_upstream_weights(queries, upstream_weights)
        all_log_probs: list[list[float]] = []
        all_grads: list[list[np.ndarray]] = []
        for query, weights in zip(queries, upstream_weights):
            leaves = [
                torch.as_tensor(np.asarray(vec, dtype=np.float64)).clone().requires_grad_(True)
                for _, vec in query.prompt_injections
            ]
            values = self._query_log_probs(query, injections=leaves)
            all_log_probs.append([float(x) for x in values.detach()])
            grads: list[np.ndarray]
            if leaves:
                weighted = (values * torch.tensor(weights, dtype=torch.float64)).sum()
                grad_list = torch.autograd.grad(weighted, leaves, allow_unused=True)
                grads = [
                    g.detach().numpy().copy() if g is not None else np.zeros(self._dim)
                    for g in grad_list
                ]
            else:
                grads = []
            all_grads.append(grads)
        return GradBundle(log_probs=all_log_probs, prompt_grads=all_grads)


def build_reference_backend(
    seed: int,
    d: int,
    layers: int,
    corpus: list[str] | list[list[str]],
    steps: int,
    **kwargs,
) -> ReferenceBackend:
    """Build and pretrain the tiny reference MLM; deterministic given seed."""
    return ReferenceBackend(seed=seed, dim=d, layers=layers, corpus=corpus, steps=steps, **kwargs)
