"""Hand-rolled differentiable models and optimizers for the training loop.

Two model families live here:

* ``PredictorModel`` -- the serving model: a logistic head for finishing
  rate and a linear head for stay duration, both over the inputs
  ``[features, short_indicator, 1]``.  Trained by single weighted-SGD steps
  on the per-point loss ``BCE(fr_hat, finished) + 0.5*(sd_hat - sd)^2``.

* ``WeightNet`` -- a small MLP (two ReLU hidden layers of 64, sigmoid
  output) that classifies whether a logged point came from the treatment
  arm.  Trained by single Adam steps on mean binary cross-entropy.

Every update is a pure function of (parameters, batch, learning rate): the
returned model owns fresh arrays and the inputs are never mutated.
``gradient_check`` compares the analytic gradients against central finite
differences and is the test oracle for all of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nmath import bce_with_logits, sigmoid
from .streams import Stream

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HIDDEN_WIDTH = 64


@dataclass(frozen=True)
class ModelInput:
    """One model-facing point: user-video features plus the length class."""

    features: np.ndarray
    is_short_indicator: int


@dataclass
class Batch:
    """Parallel arrays for one period of logged interactions."""

    features: np.ndarray      # (n, d)
    indicators: np.ndarray    # (n,) in {0, 1}, 1 = short
    finished: np.ndarray      # (n,) in {0, 1}
    stay: np.ndarray          # (n,) nonnegative
    assignments: np.ndarray   # (n,) in {0, 1}

    def __post_init__(self):
        n = len(self.features)
        if n < 1:
            raise ValueError("batch must contain at least one point")
        for name in ("indicators", "finished", "stay", "assignments"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"batch arrays must have equal length ({name})")

    def __len__(self) -> int:
        return len(self.features)

    def subset(self, mask: np.ndarray) -> "Batch":
        return Batch(
            self.features[mask],
            self.indicators[mask],
            self.finished[mask],
            self.stay[mask],
            self.assignments[mask],
        )


def augment(features: np.ndarray, indicators: np.ndarray) -> np.ndarray:
    """Stack [features, indicator, intercept] into the predictor's input."""
    n = len(features)
    return np.column_stack([features, indicators.astype(np.float64), np.ones(n)])


def weight_input(features: np.ndarray, indicators: np.ndarray) -> np.ndarray:
    """Stack [features, indicator] into the weighting model's input."""
    return np.column_stack([features, indicators.astype(np.float64)])


# ---------------------------------------------------------------------------
# Predictor: logistic FR head + linear SD head
# ---------------------------------------------------------------------------


@dataclass
class PredictorModel:
    fr_weights: np.ndarray  # (d + 2,)
    sd_weights: np.ndarray  # (d + 2,)

    @classmethod
    def zeros(cls, feature_dim: int) -> "PredictorModel":
        return cls(np.zeros(feature_dim + 2), np.zeros(feature_dim + 2))

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.fr_weights.copy(), self.sd_weights.copy())

    def state_dict(self) -> dict[str, list[float]]:
        return {
            "fr_weights": self.fr_weights.tolist(),
            "sd_weights": self.sd_weights.tolist(),
        }


def predict_batch(model: PredictorModel, x_aug: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(fr_hat, sd_hat) for augmented inputs of shape (n, d+2)."""
    return sigmoid(x_aug @ model.fr_weights), x_aug @ model.sd_weights


def predict(model: PredictorModel, inp: ModelInput) -> tuple[float, float]:
    x = augment(inp.features[None, :], np.asarray([inp.is_short_indicator]))
    fr, sd = predict_batch(model, x)
    return float(fr[0]), float(sd[0])


def predictor_loss(model: PredictorModel, batch: Batch, weights: np.ndarray) -> float:
    """(1/n) sum_i w_i * [BCE(fr_hat_i, finished_i) + 0.5*(sd_hat_i - sd_i)^2]."""
    x = augment(batch.features, batch.indicators)
    z = x @ model.fr_weights
    s = x @ model.sd_weights
    per_point = bce_with_logits(z, batch.finished) + 0.5 * (s - batch.stay) ** 2
    return float(np.mean(weights * per_point))


def predictor_gradients(
    model: PredictorModel, batch: Batch, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    x = augment(batch.features, batch.indicators)
    n = len(batch)
    fr_err = sigmoid(x @ model.fr_weights) - batch.finished
    sd_err = x @ model.sd_weights - batch.stay
    g_fr = x.T @ (weights * fr_err) / n
    g_sd = x.T @ (weights * sd_err) / n
    return g_fr, g_sd


def weighted_sgd_step(
    model: PredictorModel, batch: Batch, weights: np.ndarray, lr: float
) -> PredictorModel:
    """One SGD step on the weighted loss; returns the updated model."""
    if len(weights) != len(batch):
        raise ValueError("weights length must match batch length")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    g_fr, g_sd = predictor_gradients(model, batch, np.asarray(weights, dtype=np.float64))
    return PredictorModel(model.fr_weights - lr * g_fr, model.sd_weights - lr * g_sd)


# ---------------------------------------------------------------------------
# WeightNet: [d+1] -> 64 -> 64 -> 1 MLP with Adam state
# ---------------------------------------------------------------------------

_PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass
class WeightNet:
    w1: np.ndarray  # (64, d+1)
    b1: np.ndarray  # (64,)
    w2: np.ndarray  # (64, 64)
    b2: np.ndarray  # (64,)
    w3: np.ndarray  # (64,)
    b3: float
    moments1: dict[str, np.ndarray]
    moments2: dict[str, np.ndarray]
    step: int

    @classmethod
    def initialize(cls, feature_dim: int, stream: Stream, hidden: int = HIDDEN_WIDTH) -> "WeightNet":
        """Fan-in-scaled uniform weights (bound sqrt(6/fan_in)), zero biases.

        Weight matrices are drawn layer by layer in row-major order from the
        given stream, so initialization is a pure function of the seed.
        """
        d_in = feature_dim + 1
        w1 = _fan_in_uniform(stream, (hidden, d_in))
        w2 = _fan_in_uniform(stream, (hidden, hidden))
        w3 = _fan_in_uniform(stream, (hidden,), fan_in=hidden)
        zeros = {n: np.zeros_like(v) for n, v in
                 zip(_PARAM_NAMES, (w1, np.zeros(hidden), w2, np.zeros(hidden), w3, 0.0))}
        return cls(w1, np.zeros(hidden), w2, np.zeros(hidden), w3, 0.0,
                   moments1=zeros, moments2={n: v.copy() for n, v in zeros.items()},
                   step=0)

    def params(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in _PARAM_NAMES}

    def state_dict(self) -> dict[str, list[float] | float | int]:
        out: dict = {n: np.asarray(v).tolist() for n, v in self.params().items()}
        out["step"] = self.step
        return out


def _fan_in_uniform(stream: Stream, shape: tuple[int, ...], fan_in: int | None = None) -> np.ndarray:
    fan = fan_in if fan_in is not None else shape[-1]
    bound = np.sqrt(6.0 / fan)
    return (2.0 * stream.uniform(shape) - 1.0) * bound


def _mlp_forward(net: WeightNet, x: np.ndarray):
    """Returns (logits, hidden activations) for inputs of shape (n, d+1)."""
    a1 = np.maximum(x @ net.w1.T + net.b1, 0.0)
    a2 = np.maximum(a1 @ net.w2.T + net.b2, 0.0)
    z = a2 @ net.w3 + net.b3
    return z, a1, a2


def weightnet_forward_batch(net: WeightNet, x: np.ndarray) -> np.ndarray:
    """Treatment-membership probabilities for inputs of shape (n, d+1)."""
    z, _, _ = _mlp_forward(net, x)
    return sigmoid(z)


def weightnet_forward(net: WeightNet, inp: ModelInput) -> float:
    x = weight_input(inp.features[None, :], np.asarray([inp.is_short_indicator]))
    return float(weightnet_forward_batch(net, x)[0])


def weightnet_loss(net: WeightNet, batch: Batch) -> float:
    """Mean BCE of the net's output against the treatment assignments."""
    x = weight_input(batch.features, batch.indicators)
    z, _, _ = _mlp_forward(net, x)
    return float(np.mean(bce_with_logits(z, batch.assignments)))


def weightnet_gradients(net: WeightNet, batch: Batch) -> dict[str, np.ndarray]:
    x = weight_input(batch.features, batch.indicators)
    n = len(batch)
    z, a1, a2 = _mlp_forward(net, x)
    dz = (sigmoid(z) - batch.assignments) / n          # (n,)
    g_w3 = a2.T @ dz
    g_b3 = float(np.sum(dz))
    dh2 = np.outer(dz, net.w3) * (a2 > 0.0)            # (n, 64)
    g_w2 = dh2.T @ a1
    g_b2 = dh2.sum(axis=0)
    dh1 = (dh2 @ net.w2) * (a1 > 0.0)                  # (n, 64)
    g_w1 = dh1.T @ x
    g_b1 = dh1.sum(axis=0)
    return {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2, "w3": g_w3, "b3": g_b3}


def weightnet_adam_step(net: WeightNet, batch: Batch, lr: float) -> WeightNet:
    """One bias-corrected Adam step on the mean BCE; returns the updated net."""
    grads = weightnet_gradients(net, batch)
    t = net.step + 1
    new_params: dict[str, np.ndarray] = {}
    m1: dict[str, np.ndarray] = {}
    m2: dict[str, np.ndarray] = {}
    for name in _PARAM_NAMES:
        g = np.asarray(grads[name], dtype=np.float64)
        m = ADAM_BETA1 * net.moments1[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * net.moments2[name] + (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        new_params[name] = np.asarray(getattr(net, name)) - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        m1[name] = m
        m2[name] = v
    return WeightNet(
        new_params["w1"], new_params["b1"], new_params["w2"], new_params["b2"],
        new_params["w3"], float(new_params["b3"]),
        moments1=m1, moments2=m2, step=t,
    )


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def _flatten_predictor(model: PredictorModel) -> np.ndarray:
    return np.concatenate([model.fr_weights, model.sd_weights])


def _unflatten_predictor(vec: np.ndarray, dim: int) -> PredictorModel:
    return PredictorModel(vec[:dim].copy(), vec[dim:].copy())


def _flatten_net(net: WeightNet) -> np.ndarray:
    return np.concatenate([np.asarray(net.params()[n], dtype=np.float64).ravel()
                           for n in _PARAM_NAMES])


def _unflatten_net(vec: np.ndarray, like: WeightNet) -> WeightNet:
    pieces = {}
    i = 0
    for name in _PARAM_NAMES:
        ref = np.asarray(like.params()[name])
        size = ref.size
        pieces[name] = vec[i:i + size].reshape(ref.shape).copy() if ref.ndim else float(vec[i])
        i += size
    return WeightNet(pieces["w1"], pieces["b1"], pieces["w2"], pieces["b2"],
                     pieces["w3"], pieces["b3"],
                     moments1=like.moments1, moments2=like.moments2, step=like.step)


def gradient_check(
    loss_kind: str,
    params: PredictorModel | WeightNet,
    batch: Batch,
    weights: np.ndarray | None = None,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_kind`` selects the loss: "predictor" (weighted two-head loss,
    ``weights`` defaulting to ones) or "weightnet" (mean BCE against the
    assignments).  Relative errors use denominators floored at 1e-8.
    """
    if loss_kind == "predictor":
        w = np.ones(len(batch)) if weights is None else np.asarray(weights, dtype=np.float64)
        assert isinstance(params, PredictorModel)
        dim = len(params.fr_weights)
        flat = _flatten_predictor(params)
        loss = lambda v: predictor_loss(_unflatten_predictor(v, dim), batch, w)
        g_fr, g_sd = predictor_gradients(params, batch, w)
        analytic = np.concatenate([g_fr, g_sd])
    elif loss_kind == "weightnet":
        assert isinstance(params, WeightNet)
        flat = _flatten_net(params)
        loss = lambda v: weightnet_loss(_unflatten_net(v, params), batch)
        grads = weightnet_gradients(params, batch)
        analytic = np.concatenate([np.asarray(grads[n], dtype=np.float64).ravel()
                                   for n in _PARAM_NAMES])
    else:
        raise ValueError(f"unknown loss kind: {loss_kind!r}")

    numeric = np.empty_like(flat)
    for i in range(len(flat)):
        up = flat.copy()
        dn = flat.copy()
        up[i] += step
        dn[i] -= step
        numeric[i] = (loss(up) - loss(dn)) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
