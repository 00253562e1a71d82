"""Columnar log of served users, one row per interaction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRICS = ("short_proportion", "stay_duration", "finishing_rate")

LOG_COLUMNS = (
    "period", "user_index", "z", "is_short", "finished",
    "stay_duration", "fr_hat", "sd_hat", "g_out",
)


@dataclass
class InteractionLog:
    """Parallel arrays over all served users of a run, in serving order."""

    period: np.ndarray
    user_index: np.ndarray
    z: np.ndarray
    is_short: np.ndarray
    finished: np.ndarray
    stay_duration: np.ndarray
    fr_hat: np.ndarray
    sd_hat: np.ndarray
    g_out: np.ndarray  # NaN where no weighting model was consulted
    size: int = 0

    @classmethod
    def with_capacity(cls, capacity: int) -> "InteractionLog":
        return cls(
            period=np.zeros(capacity, dtype=np.int32),
            user_index=np.zeros(capacity, dtype=np.int32),
            z=np.zeros(capacity, dtype=np.int8),
            is_short=np.zeros(capacity, dtype=np.int8),
            finished=np.zeros(capacity, dtype=np.float64),
            stay_duration=np.zeros(capacity, dtype=np.float64),
            fr_hat=np.zeros(capacity, dtype=np.float64),
            sd_hat=np.zeros(capacity, dtype=np.float64),
            g_out=np.full(capacity, np.nan),
        )

    def __len__(self) -> int:
        return self.size

    def append_period(
        self,
        period: int,
        z: np.ndarray,
        is_short: np.ndarray,
        finished: np.ndarray,
        stay: np.ndarray,
        fr_hat: np.ndarray,
        sd_hat: np.ndarray,
        g_out: np.ndarray | None,
    ) -> None:
        n = len(z)
        sl = slice(self.size, self.size + n)
        self.period[sl] = period
        self.user_index[sl] = np.arange(n)
        self.z[sl] = z
        self.is_short[sl] = is_short
        self.finished[sl] = finished
        self.stay_duration[sl] = stay
        self.fr_hat[sl] = fr_hat
        self.sd_hat[sl] = sd_hat
        if g_out is not None:
            self.g_out[sl] = g_out
        self.size += n

    def metric_values(self, metric: str) -> np.ndarray:
        """Per-user values of a platform metric over the filled rows."""
        n = self.size
        if metric == "short_proportion":
            return self.is_short[:n].astype(np.float64)
        if metric == "stay_duration":
            return self.stay_duration[:n]
        if metric == "finishing_rate":
            return self.finished[:n]
        raise ValueError(f"unknown metric: {metric!r}")

    def assignments(self) -> np.ndarray:
        return self.z[: self.size]
