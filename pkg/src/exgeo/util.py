"""Shared small utilities: counter-based RNG streams and symmetric-matrix indexing."""

import hashlib

import numpy as np


def rng_from(seed: int, *tags) -> np.random.Generator:
    """Deterministic Philox generator keyed by (seed, tags).

    Philox is counter-based, so independent substreams are obtained by
    hashing the purpose tags into the 128-bit key.  Identical inputs give
    bit-identical streams on every platform.
    """
    raw = repr((int(seed),) + tuple(tags)).encode()
    digest = hashlib.blake2b(raw, digest_size=16).digest()
    key = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def vech_pairs(k: int):
    """Index pairs (i, j), i <= j, row-major; the fixed ordering used for
    second-derivative vectors throughout the package."""
    return [(i, j) for i in range(k) for j in range(i, k)]


def sym_from_vech(w, k: int):
    """Symmetric k x k matrix whose diagonal and upper triangle are the vech
    entries of w (values, not halved); inverse of reading off (i<=j) pairs."""
    w = np.asarray(w)
    out = np.zeros(w.shape[:-1] + (k, k), dtype=w.dtype)
    for idx, (i, j) in enumerate(vech_pairs(k)):
        out[..., i, j] = w[..., idx]
        out[..., j, i] = w[..., idx]
    return out
