"""Deterministic seed derivation.

A single master seed fans out to per-stage and per-unit seeds through a
splitmix64 step on (seed, label-hash, index). The derivation is pure
arithmetic on unsigned 64-bit integers, so two runs with the same master
seed always see the same random streams regardless of execution order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def _label_hash(label: str) -> int:
    # FNV-1a, enough to separate stage labels; not cryptographic.
    h = 0xCBF29CE484222325
    for b in label.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Derive a child seed from (master, label, index).

    Used for stage seeds ('synth', 'dataset', ...), per-participant seeds
    (label carries the participant id) and per-tree seeds in the forest.
    """
    x = _splitmix64(master & _MASK)
    x = _splitmix64(x ^ _label_hash(label))
    return _splitmix64(x ^ (index & _MASK))


def rng_for(master: int, label: str, index: int = 0) -> np.random.Generator:
    """PCG64 generator seeded by the derived child seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, label, index)))
