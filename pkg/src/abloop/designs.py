"""The serve-log-retrain feedback loop under each experiment design.

Every period, a batch of users arrives.  Each user is assigned to an arm,
shown the candidate that maximizes that arm's fusion score
``alpha * fr_hat + sd_hat``, and their realized outcome is logged.  The
designs differ only in how the logged batch retrains the serving models:

* ``weighted``  -- two models; each trains on the full batch with losses
  weighted by G(x)/p (treatment) or (1-G(x))/(1-p) (control), where G is a
  classifier predicting the arm a point came from, itself retrained every
  period.  During the warmup window the updates fall back to splitting and
  G is left untouched.
* ``splitting`` -- two models; each trains only on its own arm's points.
* ``pooling``   -- one shared model trained on the combined batch.
* ``snapshot``  -- one shared model, frozen for the whole experiment.

Global (single-arm) regimes reuse the same loop with every user forced
into one arm and a single pooled model; their paired difference defines
the ground-truth effect the designs are judged against.

Randomness is split into four named substreams per replication seed
(environment, assignment, outcome, model-init), so two runs that differ
only in design consume identical users, candidates, and outcome draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .env import EnvParams, Candidate, candidate_features, realize_outcomes
from .errors import ConfigError
from .logs import METRICS, InteractionLog
from .models import (
    Batch,
    PredictorModel,
    WeightNet,
    predict_batch,
    weight_input,
    weighted_sgd_step,
    weightnet_adam_step,
    weightnet_forward_batch,
)
from .stats import (
    MetricEstimate,
    MetricVector,
    ReplicationResult,
    experimentation_values,
    naive_estimate,
    weightnet_logloss_bits,
)
from .streams import Stream

METHOD_NAMES = ("weighted", "splitting", "pooling", "snapshot")
STREAM_NAMES = ("environment", "assignment", "outcome", "model-init")


@dataclass(frozen=True)
class ExperimentConfig:
    alpha_treatment: float
    alpha_control: float
    p: float
    periods: int
    batch: int
    method: str = "weighted"
    env: EnvParams = field(default_factory=EnvParams)
    seed: int = 0
    warmup_periods: int = 200
    production_burnin_periods: int = 200
    learning_rate_sgd: float = 0.1
    learning_rate_adam: float = 0.001
    clip_epsilon: float | None = None
    # Debug hook: when set, the weighting model is bypassed and its output
    # pinned to this constant (and it is not trained).  Forcing p turns the
    # weighted design into data pooling, which the tests exploit.
    force_weight_output: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("p must lie in [0, 1]")
        if self.periods < 1:
            raise ConfigError("periods must be >= 1")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if not 0 <= self.warmup_periods < self.periods:
            raise ConfigError("warmup_periods must lie in [0, periods)")
        if self.production_burnin_periods < 0:
            raise ConfigError("production_burnin_periods must be >= 0")
        if self.learning_rate_sgd <= 0 or self.learning_rate_adam <= 0:
            raise ConfigError("learning rates must be positive")
        if self.method not in METHOD_NAMES:
            raise ConfigError(f"unknown method: {self.method!r}")
        if self.method == "weighted" and not 0.0 < self.p < 1.0:
            raise ConfigError("the weighted design needs 0 < p < 1")
        if self.clip_epsilon is not None and not 0.0 <= self.clip_epsilon < 0.5:
            raise ConfigError("clip_epsilon must lie in [0, 0.5)")


@dataclass
class StreamSet:
    environment: Stream
    assignment: Stream
    outcome: Stream
    model_init: Stream


def replication_streams(seed: int) -> StreamSet:
    """The four named substreams every replication draws from."""
    return StreamSet(*(Stream.from_label(seed, name) for name in STREAM_NAMES))


@dataclass
class LoopState:
    """Mutable state of one run: serving models, weighting model, log.

    Pooling and snapshot share a single model: both arm fields reference
    the same object, and updates reassign both.
    """

    treatment_model: PredictorModel
    control_model: PredictorModel
    weight_net: WeightNet | None
    period: int
    log: InteractionLog


def assign(stream: Stream, p: float) -> int:
    """Treatment indicator: 1 with probability p, via one uniform draw."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError("p must lie in [0, 1]")
    return int(stream.uniform() < p)


def compute_weights(g_out, p: float):
    """Per-point loss weights (treatment, control) from the classifier output.

    w_t = g/p and w_c = (1-g)/(1-p); they satisfy p*w_t + (1-p)*w_c = 1.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError("weights are undefined for p in {0, 1}")
    g = np.asarray(g_out, dtype=np.float64)
    return g / p, (1.0 - g) / (1.0 - p)


def rank_and_choose(model: PredictorModel, alpha: float, candidates: list[Candidate]) -> int:
    """Index of the fusion-score argmax; ties go to the lowest index."""
    if not candidates:
        raise ValueError("candidate list must be nonempty")
    feats = np.stack([c.features for c in candidates])
    ind = np.asarray([c.is_short for c in candidates], dtype=np.float64)
    x = np.column_stack([feats, ind, np.ones(len(candidates))])
    fr, sd = predict_batch(model, x)
    return int(np.argmax(alpha * fr + sd))


def _serve_batch(
    state: LoopState, config: ExperimentConfig, streams: StreamSet, z: np.ndarray
):
    """Serve one batch: rank under each user's arm, realize outcomes.

    Returns (batch, fr_hat, sd_hat) for the chosen candidates.  Consumes
    B*N*d environment uniforms and 2*B outcome uniforms, independent of
    the design, so designs sharing a seed see identical worlds.
    """
    env = config.env
    n_users = len(z)
    n_cand, dim = env.n_candidates, env.feature_dim
    feats = candidate_features(streams.environment, n_users, env)

    x_aug = np.empty((n_users * n_cand, dim + 2))
    x_aug[:, :dim] = feats.reshape(-1, dim)
    half = n_cand // 2
    ind_row = np.zeros(n_cand)
    ind_row[:half] = 1.0
    x_aug[:, dim] = np.tile(ind_row, n_users)
    x_aug[:, dim + 1] = 1.0

    fr_t, sd_t = predict_batch(state.treatment_model, x_aug)
    if state.control_model is state.treatment_model:
        fr_c, sd_c = fr_t, sd_t
    else:
        fr_c, sd_c = predict_batch(state.control_model, x_aug)
    score_t = (config.alpha_treatment * fr_t + sd_t).reshape(n_users, n_cand)
    score_c = (config.alpha_control * fr_c + sd_c).reshape(n_users, n_cand)

    treated = z == 1
    scores = np.where(treated[:, None], score_t, score_c)
    idx = np.argmax(scores, axis=1)

    rows = np.arange(n_users)
    chosen_feats = feats[rows, idx]
    chosen_short = (idx < half).astype(np.int8)
    flat = rows * n_cand + idx
    fr_hat = np.where(treated, fr_t[flat], fr_c[flat])
    sd_hat = np.where(treated, sd_t[flat], sd_c[flat])

    finished, stay = realize_outcomes(streams.outcome, chosen_feats, chosen_short, env)
    batch = Batch(chosen_feats, chosen_short, finished, stay, z.astype(np.int8))
    return batch, fr_hat, sd_hat


def _splitting_update(state: LoopState, config: ExperimentConfig, batch: Batch) -> None:
    """Each arm's model takes one step on the mean loss of its own points."""
    lr = config.learning_rate_sgd
    treated = batch.assignments == 1
    if np.any(treated):
        sub = batch.subset(treated)
        state.treatment_model = weighted_sgd_step(
            state.treatment_model, sub, np.ones(len(sub)), lr
        )
    if not np.all(treated):
        sub = batch.subset(~treated)
        state.control_model = weighted_sgd_step(
            state.control_model, sub, np.ones(len(sub)), lr
        )


def run_period(state: LoopState, config: ExperimentConfig, streams: StreamSet) -> LoopState:
    """Advance the experiment by one period: serve, log, retrain per design."""
    if state.period >= config.periods:
        raise ValueError("experiment is already complete")
    z = (streams.assignment.uniform(config.batch) < config.p).astype(np.int8)
    batch, fr_hat, sd_hat = _serve_batch(state, config, streams, z)

    in_warmup = state.period < config.warmup_periods
    g_out = None
    if config.method == "weighted" and not in_warmup:
        if config.force_weight_output is not None:
            g_out = np.full(config.batch, config.force_weight_output)
        else:
            g_out = weightnet_forward_batch(
                state.weight_net, weight_input(batch.features, batch.indicators)
            )
        if config.clip_epsilon is not None:
            g_out = np.clip(g_out, config.clip_epsilon, 1.0 - config.clip_epsilon)

    state.log.append_period(
        state.period, z, batch.indicators, batch.finished, batch.stay,
        fr_hat, sd_hat, g_out,
    )

    lr = config.learning_rate_sgd
    if config.method == "snapshot":
        pass
    elif config.method == "pooling":
        updated = weighted_sgd_step(state.treatment_model, batch, np.ones(len(batch)), lr)
        state.treatment_model = updated
        state.control_model = updated
    elif config.method == "splitting" or (config.method == "weighted" and in_warmup):
        _splitting_update(state, config, batch)
    else:  # weighted, past warmup
        w_t, w_c = compute_weights(g_out, config.p)
        state.treatment_model = weighted_sgd_step(state.treatment_model, batch, w_t, lr)
        state.control_model = weighted_sgd_step(state.control_model, batch, w_c, lr)
        if config.force_weight_output is None:
            state.weight_net = weightnet_adam_step(
                state.weight_net, batch, config.learning_rate_adam
            )

    state.period += 1
    return state


def _run_training_loop(
    model: PredictorModel,
    streams: StreamSet,
    config: ExperimentConfig,
    periods: int,
    arm: int,
    alpha: float,
    log: InteractionLog | None = None,
) -> PredictorModel:
    """Single-model, single-arm loop used for burn-in and global regimes."""
    state = LoopState(model, model, None, 0, InteractionLog.with_capacity(0))
    z = np.full(config.batch, arm, dtype=np.int8)
    single = replace(config, alpha_treatment=alpha, alpha_control=alpha)
    for t in range(periods):
        batch, fr_hat, sd_hat = _serve_batch(state, single, streams, z)
        if log is not None:
            log.append_period(t, z, batch.indicators, batch.finished, batch.stay,
                              fr_hat, sd_hat, None)
        updated = weighted_sgd_step(state.treatment_model, batch, np.ones(len(batch)),
                                    config.learning_rate_sgd)
        state.treatment_model = updated
        state.control_model = updated
    return state.treatment_model


def _burnin(streams: StreamSet, config: ExperimentConfig) -> PredictorModel:
    model = PredictorModel.zeros(config.env.feature_dim)
    return _run_training_loop(
        model, streams, config, config.production_burnin_periods,
        arm=0, alpha=config.alpha_control,
    )


def make_production_model(seed: int, config: ExperimentConfig) -> PredictorModel:
    """The warm-started model every design inherits at experiment start.

    Runs the burn-in window under the control algorithm with every user in
    the control arm, training a single model by unweighted SGD from zero
    initialization.  Deterministic per seed.
    """
    return _burnin(replication_streams(seed), config)


def init_loop(
    config: ExperimentConfig, production: PredictorModel, streams: StreamSet
) -> LoopState:
    """Per-design arm models and weighting model, ready for period 0."""
    log = InteractionLog.with_capacity(config.periods * config.batch)
    if config.method in ("pooling", "snapshot"):
        shared = production.copy()
        return LoopState(shared, shared, None, 0, log)
    net = None
    if config.method == "weighted":
        net = WeightNet.initialize(config.env.feature_dim, streams.model_init)
    return LoopState(production.copy(), production.copy(), net, 0, log)


def run_replication_with_log(config: ExperimentConfig) -> tuple[ReplicationResult, InteractionLog]:
    """One full A/B replication; returns the result and the interaction log."""
    streams = replication_streams(config.seed)
    production = _burnin(streams, config)
    state = init_loop(config, production, streams)
    for _ in range(config.periods):
        run_period(state, config, streams)

    metrics = {}
    for metric in METRICS:
        est, se = naive_estimate(state.log, metric)
        values = state.log.metric_values(metric)
        z = state.log.assignments()
        metrics[metric] = MetricEstimate(
            treatment_mean=float(np.mean(values[z == 1])),
            control_mean=float(np.mean(values[z == 0])),
            estimate=est,
            se=se,
        )
    tv, cv = experimentation_values(state.log, config.alpha_treatment, config.alpha_control)
    logloss = None
    if config.method == "weighted" and not np.all(np.isnan(state.log.g_out[: state.log.size])):
        logloss = weightnet_logloss_bits(state.log)
    result = ReplicationResult(
        method=config.method,
        seed=config.seed,
        metrics=metrics,
        treatment_value=tv,
        control_value=cv,
        weightnet_logloss_bits=logloss,
    )
    return result, state.log


def run_replication(config: ExperimentConfig) -> ReplicationResult:
    return run_replication_with_log(config)[0]


def run_global(config: ExperimentConfig, arm: str) -> MetricVector:
    """Metric means when every user is served by one arm's algorithm.

    The assignment stream is never consumed, so the result does not depend
    on p.  A single model is trained, unweighted, on all data.
    """
    if arm not in ("treatment", "control"):
        raise ValueError(f"arm must be 'treatment' or 'control', got {arm!r}")
    streams = replication_streams(config.seed)
    production = _burnin(streams, config)
    alpha = config.alpha_treatment if arm == "treatment" else config.alpha_control
    z_value = 1 if arm == "treatment" else 0
    log = InteractionLog.with_capacity(config.periods * config.batch)
    _run_training_loop(
        production.copy(), streams, config, config.periods,
        arm=z_value, alpha=alpha, log=log,
    )
    return MetricVector(
        short_proportion=float(np.mean(log.metric_values("short_proportion"))),
        stay_duration=float(np.mean(log.metric_values("stay_duration"))),
        finishing_rate=float(np.mean(log.metric_values("finishing_rate"))),
    )
