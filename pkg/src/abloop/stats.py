"""Estimators and cross-replication statistics.

The per-replication estimator is the naive arm contrast: mean metric over
treated users minus mean over control users, with the usual two-sample
standard error.  Across replications we report bias against the simulated
ground truth, the spread of the estimates, the average reported SE, and in
A/A mode the fraction of replications whose t-test falsely rejects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import EstimationError
from .logs import METRICS, InteractionLog


@dataclass(frozen=True)
class MetricVector:
    short_proportion: float
    stay_duration: float
    finishing_rate: float

    def get(self, metric: str) -> float:
        return getattr(self, metric)

    def as_dict(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}


@dataclass(frozen=True)
class MetricEstimate:
    treatment_mean: float
    control_mean: float
    estimate: float
    se: float


@dataclass(frozen=True)
class ReplicationResult:
    method: str
    seed: int
    metrics: dict[str, MetricEstimate]
    treatment_value: float
    control_value: float
    weightnet_logloss_bits: float | None = None


@dataclass(frozen=True)
class MethodMetricSummary:
    bias: float
    std: float
    mean_se: float
    mean_estimate: float
    type1_rate: float | None = None


@dataclass(frozen=True)
class ArmValueSummary:
    treatment_mean: float
    treatment_sem: float
    control_mean: float
    control_sem: float


@dataclass(frozen=True)
class SummaryStats:
    mode: str  # "AB" or "AA"
    rows: dict[tuple[str, str], MethodMetricSummary] = field(default_factory=dict)
    values: dict[str, ArmValueSummary] = field(default_factory=dict)


def _sample_var(x: np.ndarray) -> float:
    n = len(x)
    if n < 2:
        return 0.0
    m = float(np.mean(x))
    return float(np.sum((x - m) ** 2) / (n - 1))


def naive_estimate(log: InteractionLog, metric: str) -> tuple[float, float]:
    """Arm-contrast estimate and two-sample SE for one metric.

    estimate = mean(values | Z=1) - mean(values | Z=0)
    se       = sqrt(Var1/n1 + Var0/n0)   (sample variances, n-1)
    """
    values = log.metric_values(metric)
    z = log.assignments()
    treated = values[z == 1]
    control = values[z == 0]
    if len(treated) == 0 or len(control) == 0:
        raise EstimationError(f"cannot contrast {metric}: an arm is empty")
    estimate = float(np.mean(treated) - np.mean(control))
    se = math.sqrt(_sample_var(treated) / len(treated) + _sample_var(control) / len(control))
    return estimate, se


def t_reject(estimate: float, se: float, level: float = 0.95) -> bool:
    """Two-sided normal test of the null that the contrast is zero."""
    if se == 0.0:
        return estimate != 0.0
    z_crit = NormalDist().inv_cdf(0.5 + level / 2.0)
    return abs(estimate) / se > z_crit


def experimentation_values(
    log: InteractionLog, alpha_t: float, alpha_c: float
) -> tuple[float, float]:
    """Per-arm mean of the arm's own fusion value on realized outcomes."""
    z = log.assignments()
    finished = log.metric_values("finishing_rate")
    stay = log.metric_values("stay_duration")
    fused_t = alpha_t * finished + stay
    fused_c = alpha_c * finished + stay
    if not np.any(z == 1) or not np.any(z == 0):
        raise EstimationError("cannot compute experimentation values: an arm is empty")
    return float(np.mean(fused_t[z == 1])), float(np.mean(fused_c[z == 0]))


def weightnet_logloss_bits(log: InteractionLog) -> float:
    """Mean base-2 cross-entropy of logged weighting-model outputs against Z.

    Outputs are clamped to [1e-12, 1 - 1e-12] so the diagnostic stays
    finite even on saturated predictions.
    """
    n = log.size
    g = log.g_out[:n]
    have = ~np.isnan(g)
    if not np.any(have):
        raise EstimationError("log contains no weighting-model outputs")
    g = np.clip(g[have], 1e-12, 1.0 - 1e-12)
    z = log.z[:n][have].astype(np.float64)
    return float(np.mean(-(z * np.log2(g) + (1.0 - z) * np.log2(1.0 - g))))


def aggregate(
    results: list[ReplicationResult], gte: MetricVector, mode: str = "AB"
) -> SummaryStats:
    """Cross-replication summary per method and metric.

    In "AA" mode the ground truth is identically zero and the type-I rate
    (fraction of replications whose t-test rejects) is reported.
    Input order does not matter: replications are reduced in seed order.
    """
    if mode not in ("AB", "AA"):
        raise ValueError(f"unknown mode: {mode!r}")
    by_method: dict[str, list[ReplicationResult]] = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)

    rows: dict[tuple[str, str], MethodMetricSummary] = {}
    values: dict[str, ArmValueSummary] = {}
    for method, reps in by_method.items():
        if len(reps) < 2:
            raise EstimationError(f"method {method!r} needs >= 2 replications to aggregate")
        reps = sorted(reps, key=lambda r: r.seed)
        for metric in METRICS:
            ests = np.asarray([r.metrics[metric].estimate for r in reps])
            ses = np.asarray([r.metrics[metric].se for r in reps])
            truth = 0.0 if mode == "AA" else gte.get(metric)
            type1 = None
            if mode == "AA":
                rejects = [t_reject(e, s) for e, s in zip(ests, ses)]
                type1 = float(np.mean(rejects))
            rows[(method, metric)] = MethodMetricSummary(
                bias=float(np.mean(ests) - truth),
                std=math.sqrt(_sample_var(ests)),
                mean_se=float(np.mean(ses)),
                mean_estimate=float(np.mean(ests)),
                type1_rate=type1,
            )
        tv = np.asarray([r.treatment_value for r in reps])
        cv = np.asarray([r.control_value for r in reps])
        values[method] = ArmValueSummary(
            treatment_mean=float(np.mean(tv)),
            treatment_sem=math.sqrt(_sample_var(tv) / len(tv)),
            control_mean=float(np.mean(cv)),
            control_sem=math.sqrt(_sample_var(cv) / len(cv)),
        )
    return SummaryStats(mode=mode, rows=rows, values=values)
