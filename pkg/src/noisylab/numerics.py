"""Deterministic numerical primitives: stable softmax, categorical and beta
sampling, and a seeded splittable random generator.

All floating point work is float64. The random generator wraps numpy's
Philox counter-based bit generator; identical seeds give identical streams
on every platform, and `split` produces non-overlapping child streams via
SeedSequence spawning.
"""

from __future__ import annotations

import numpy as np

PROB_ATOL = 1e-9


class Rng:
    """Seeded, splittable random stream (Philox counter-based generator)."""

    def __init__(self, seed=None, _ss=None):
        if _ss is None:
            if seed is None:
                raise ValueError("Rng requires a seed")
            _ss = np.random.SeedSequence(int(seed))
        self._ss = _ss
        self._gen = np.random.Generator(np.random.Philox(_ss))

    def split(self, n):
        """Return n independent child streams; the parent remains usable."""
        return [Rng(_ss=child) for child in self._ss.spawn(int(n))]

    def uniform(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)


def softmax(logits):
    """Stable softmax over the last axis (max-subtracted)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax: non-finite logits")
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def check_prob_vector(p, atol=PROB_ATOL):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < -atol) or np.any(p > 1 + atol):
        raise ValueError("invalid probability vector: entries outside [0,1]")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError("invalid probability vector: does not sum to 1")
    return p


def sample_categorical(p, rng):
    """Draw a class index with probabilities p, consuming one uniform."""
    p = check_prob_vector(p)
    u = rng.uniform()
    return int(min(np.searchsorted(np.cumsum(p), u, side="right"), len(p) - 1))


def sample_beta(alpha, rng):
    """Symmetric Beta(alpha, alpha) draw via Johnk's algorithm."""
    alpha = float(alpha)
    if alpha <= 0:
        raise ValueError("sample_beta: alpha must be positive")
    inv = 1.0 / alpha
    while True:
        u, v = rng.uniform(), rng.uniform()
        x, y = u**inv, v**inv
        s = x + y
        if 0 < s <= 1.0:
            return x / s
