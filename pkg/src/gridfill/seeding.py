"""Deterministic seed derivation for independent random streams."""

import hashlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit seed from a base seed and any number of string keys."""
    h = hashlib.sha256(str(int(seed)).encode())
    for k in keys:
        h.update(b"\x00" + str(k).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def stream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))
