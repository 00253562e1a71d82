"""Named, splittable random-number streams.

Every source of randomness in a simulation run is an independent substream
derived from a single 64-bit seed and a text label.  Substream seeds are
obtained by hashing ``(seed, label)`` with BLAKE2b, so distinct labels give
statistically independent streams and the mapping is stable across runs,
processes, and platforms.

All sampling is built on uniform doubles from PCG64: Bernoulli draws compare
a uniform against the success probability, exponential draws invert the CDF.
This keeps the consumption pattern of a stream easy to state exactly (one
uniform per Bernoulli, one per exponential) so that runs can be replayed or
matched by an independent implementation.
"""

from __future__ import annotations

import hashlib

import numpy as np

_TINY = np.finfo(np.float64).tiny


def derive_seed(base_seed: int, label: str) -> int:
    """Map a (seed, label) pair to a 64-bit substream seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(base_seed).to_bytes(8, "little", signed=False))
    h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class Stream:
    """A single PCG64 substream consumed as uniform doubles in [0, 1)."""

    __slots__ = ("seed", "label", "_gen")

    def __init__(self, seed: int, label: str = ""):
        self.seed = seed
        self.label = label
        self._gen = np.random.Generator(np.random.PCG64(seed))

    @classmethod
    def from_label(cls, base_seed: int, label: str) -> "Stream":
        return cls(derive_seed(base_seed, label), label)

    def uniform(self, shape: int | tuple[int, ...] | None = None) -> np.ndarray | float:
        """Uniform draws in [0, 1); a scalar when ``shape`` is None.

        Multidimensional requests fill in row-major order, so one call with
        shape (a, b) consumes the same sequence as ``a`` successive calls
        with shape (b,).
        """
        if shape is None:
            return float(self._gen.random())
        return self._gen.random(shape)

    def bernoulli(self, p: float | np.ndarray, shape: int | None = None) -> np.ndarray | int:
        """Bernoulli(p) via U < p; one uniform per draw."""
        if shape is None and np.isscalar(p):
            return int(self._gen.random() < p)
        n = shape if shape is not None else len(p)  # type: ignore[arg-type]
        return (self._gen.random(n) < p).astype(np.int8)

    def exponential(self, mean: float | np.ndarray, shape: int | None = None) -> np.ndarray | float:
        """Exponential with the given MEAN via inverse CDF, -mean*ln(U).

        U is floored at the smallest positive double; a zero uniform (one
        draw in 2^53) would otherwise produce an infinite value.
        """
        if shape is None and np.isscalar(mean):
            u = max(self._gen.random(), _TINY)
            return float(-mean * np.log(u))
        n = shape if shape is not None else len(mean)  # type: ignore[arg-type]
        u = np.maximum(self._gen.random(n), _TINY)
        return -np.asarray(mean) * np.log(u)
