"""Numerically careful scalar/array primitives used by the models."""

from __future__ import annotations

import numpy as np


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    """Logistic function, stable for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def softplus(z: np.ndarray | float) -> np.ndarray | float:
    """log(1 + e^z) computed as max(z, 0) + log1p(e^-|z|)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return out if out.ndim else float(out)


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Binary cross-entropy of sigmoid(z) against y in the log-sum-exp form.

    Equals -[y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))] but never forms
    the probabilities, so it is finite for any float z.
    """
    return softplus(z) - y * z
