"""Named substreams off a single root seed.

Every source of randomness in a run derives from the root seed through a
label, so components vary independently and runs reproduce exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np


def seed_for(root_seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{root_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def rng_for(root_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(seed_for(root_seed, label))
