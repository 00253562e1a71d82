"""Ground-truth world model: users, candidate videos, realized outcomes.

A platform serves one video per arriving user, picked from a fresh pool of
``n_candidates`` candidates (half short, half long).  Each candidate carries
a feature vector drawn uniformly from [0,1]^d.  The true finishing rate is
a logistic model of the features and the true stay duration is exponential
with a linear mean, with separate coefficient vectors per length class:

    FR   = sigmoid(beta_fr . x - fr_offset)
    SD   ~ Exponential(mean = beta_sd . x)

Short videos finish often and end quickly; long videos are the opposite.
Outcomes depend only on the chosen candidate's features and class, never on
the treatment assignment or on any model state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nmath import sigmoid
from .streams import Stream


def _ramp_up() -> np.ndarray:
    return np.arange(10) / 10.0  # [0, 0.1, ..., 0.9]


def _ramp_down() -> np.ndarray:
    return 1.0 - np.arange(10) / 10.0  # [1.0, 0.9, ..., 0.1]


@dataclass(frozen=True)
class EnvParams:
    """True model coefficients and pool geometry."""

    feature_dim: int = 10
    n_candidates: int = 100
    beta_fr_short: np.ndarray = field(default_factory=lambda: 0.9 * _ramp_up())
    beta_fr_long: np.ndarray = field(default_factory=lambda: 0.6 * _ramp_up())
    beta_sd_short: np.ndarray = field(default_factory=_ramp_down)
    beta_sd_long: np.ndarray = field(default_factory=lambda: 1.5 * _ramp_down())
    fr_offset: float = 2.5

    def __post_init__(self):
        for name in ("beta_fr_short", "beta_fr_long", "beta_sd_short", "beta_sd_long"):
            vec = np.asarray(getattr(self, name), dtype=np.float64)
            if vec.shape != (self.feature_dim,):
                raise ValueError(f"{name} must have length {self.feature_dim}")
            object.__setattr__(self, name, vec)
        if self.n_candidates < 2 or self.n_candidates % 2:
            raise ValueError("n_candidates must be even and >= 2")


@dataclass(frozen=True)
class Candidate:
    features: np.ndarray
    is_short: bool


@dataclass(frozen=True)
class Outcome:
    finished: int
    stay_duration: float


def candidate_features(stream: Stream, n_users: int, params: EnvParams) -> np.ndarray:
    """Features for the candidate pools of ``n_users`` users, shape (U, N, d).

    Pools use a fixed layout: the first N/2 candidates are short, the rest
    long.  Draw order is row-major, so batching users is draw-equivalent to
    sampling their pools one at a time.
    """
    return stream.uniform((n_users, params.n_candidates, params.feature_dim))


def sample_candidates(stream: Stream, params: EnvParams) -> list[Candidate]:
    """One user's candidate pool as a list (first half short, second half long)."""
    feats = candidate_features(stream, 1, params)[0]
    half = params.n_candidates // 2
    return [Candidate(feats[i], i < half) for i in range(params.n_candidates)]


def true_fr_batch(features: np.ndarray, is_short: np.ndarray, params: EnvParams) -> np.ndarray:
    """True finishing probabilities for (U, d) features with per-row class."""
    beta = np.where(is_short[:, None], params.beta_fr_short, params.beta_fr_long)
    return sigmoid(np.einsum("ud,ud->u", features, beta) - params.fr_offset)


def stay_mean_batch(features: np.ndarray, is_short: np.ndarray, params: EnvParams) -> np.ndarray:
    """True mean stay durations for (U, d) features with per-row class."""
    beta = np.where(is_short[:, None], params.beta_sd_short, params.beta_sd_long)
    return np.einsum("ud,ud->u", features, beta)


def true_fr(candidate: Candidate, params: EnvParams) -> float:
    beta = params.beta_fr_short if candidate.is_short else params.beta_fr_long
    return float(sigmoid(float(beta @ candidate.features) - params.fr_offset))


def realize_outcomes(
    stream: Stream, features: np.ndarray, is_short: np.ndarray, params: EnvParams
) -> tuple[np.ndarray, np.ndarray]:
    """Realize (finished, stay_duration) for a batch of chosen candidates.

    Consumes exactly two uniforms per user from ``stream``, finish draw
    first, in user order.  Raises if any true stay mean is non-positive
    (impossible under the default coefficients, but checked).
    """
    fr = true_fr_batch(features, is_short, params)
    mean_sd = stay_mean_batch(features, is_short, params)
    if np.any(mean_sd <= 0.0):
        raise ValueError("true stay-duration mean must be positive")
    u = stream.uniform((len(fr), 2))
    finished = (u[:, 0] < fr).astype(np.float64)
    tiny = np.finfo(np.float64).tiny
    stay = -mean_sd * np.log(np.maximum(u[:, 1], tiny))
    return finished, stay


def realize_outcome(stream: Stream, candidate: Candidate, params: EnvParams) -> Outcome:
    """Realize one user's outcome; two uniforms, finish first then duration."""
    finished, stay = realize_outcomes(
        stream,
        candidate.features[None, :],
        np.asarray([candidate.is_short]),
        params,
    )
    return Outcome(int(finished[0]), float(stay[0]))
