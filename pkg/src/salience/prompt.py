"""Trainable soft-prompt parameters and their sequence encoder.

Each of the l prompt slots starts from a pseudo-embedding row. A
bidirectional LSTM mixes the rows, and slot i's vector is a ReLU two-layer
perceptron applied to [forward state through slot i : backward state from
slot i] (inclusive on both sides, zero initial states at the boundaries).
The encoder output feeds the backend's injection positions; gradients flow
back through every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ConfigError


class PromptParams(nn.Module):
    """Pseudo-token table plus the recurrent + perceptron encoder.

    Hidden size h is per direction, so the concatenated state has width 2h
    (= d with the default h = d/2). The perceptron maps 2h -> d -> d.
    """

    def __init__(self, length: int, dim: int, hidden: int) -> None:
        super().__init__()
        if length < 1 or dim < 1 or hidden < 1:
            raise ConfigError(
                f"prompt dimensions must be positive, got l={length}, d={dim}, h={hidden}"
            )
        self.length = length
        self.dim = dim
        self.hidden = hidden
        self.pseudo_table = nn.Parameter(torch.empty(length, dim, dtype=torch.float64))
        self.lstm = nn.LSTM(
            input_size=dim, hidden_size=hidden, bidirectional=True, batch_first=True
        ).double()
        self.mlp = nn.Sequential(
            nn.Linear(2 * hidden, dim), nn.ReLU(), nn.Linear(dim, dim)
        ).double()

    def forward(self) -> torch.Tensor:
        """(l, d) encoded prompt vectors; differentiable in all parameters."""
        states, _ = self.lstm(self.pseudo_table.unsqueeze(0))
        return self.mlp(states.squeeze(0))

    def flat_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.detach().numpy().copy() for name, p in self.named_parameters()}

    def load_flat_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name not in arrays:
                    raise ConfigError(f"missing parameter array {name!r}")
                value = np.asarray(arrays[name], dtype=np.float64)
                if value.shape != tuple(p.shape):
                    raise ConfigError(
                        f"parameter {name!r} has shape {value.shape}, expected {tuple(p.shape)}"
                    )
                p.copy_(torch.from_numpy(value))


@dataclass(frozen=True)
class PromptVectors:
    """Encoded prompt vectors, ordered by slot index; may be empty (l = 0)."""

    vectors: np.ndarray  # (l, d) float64

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ConfigError(f"prompt vectors must be a (l, d) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("prompt vectors must be finite")
        object.__setattr__(self, "vectors", v)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, dim: int) -> "PromptVectors":
        return cls(np.zeros((0, dim), dtype=np.float64))


def init_prompt_params(seed: int, l: int, d: int, h: int | None = None) -> PromptParams:
    """Seeded initialization: pseudo rows ~ N(0, 0.02^2); LSTM and linear
    layers keep torch's fan-in defaults."""
    if h is None:
        h = max(1, d // 2)
    torch.manual_seed(seed)
    params = PromptParams(l, d, h)
    with torch.no_grad():
        params.pseudo_table.normal_(mean=0.0, std=0.02)
    return params


def encode_prompts(params: PromptParams) -> PromptVectors:
    """Pure snapshot of the encoder output for scoring."""
    with torch.no_grad():
        return PromptVectors(params().numpy().copy())
