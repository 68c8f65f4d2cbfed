"""Labeled seed derivation so every random stream comes from one master seed."""

import hashlib

import numpy as np


def derive_seed(master_seed, *labels):
    """Return a 64-bit seed deterministically derived from ``master_seed`` and ``labels``."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def derive_rng(master_seed, *labels):
    return np.random.default_rng(derive_seed(master_seed, *labels))
