"""Deterministic derivation of independent random streams from one master seed.

Every stochastic component of an experiment (policy draws, environment
rewards, per-sample attack noise, defenses) pulls from its own labelled
substream, so trials can run in any order or in parallel and still
reproduce byte-identical results.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def rng_substream(master_seed: int, *labels: object) -> np.random.Generator:
    """Return the generator identified by ``(master_seed, labels...)``.

    The label path is serialized and hashed with SHA-256; the digest words
    are fed to :class:`numpy.random.SeedSequence` together with the master
    seed. Distinct label paths therefore yield statistically independent
    streams, and the derivation is stable across processes and platforms
    (no dependence on Python's randomized ``hash``).
    """
    hasher = hashlib.sha256()
    hasher.update(int(master_seed & _MASK64).to_bytes(8, "little"))
    for label in labels:
        hasher.update(b"\x1f")
        hasher.update(repr(label).encode("utf-8"))
    digest = hasher.digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 32, 4)]
    return np.random.default_rng(np.random.SeedSequence([master_seed & _MASK64, *words]))
