"""Multi-replication studies: ground truth, per-design runs, persisted outputs.

A study runs every requested design over ``replications`` seeds, compares
the estimates against the simulated ground-truth effect (paired global
treatment/control runs sharing each replication's environment seed), and
writes deterministic artifacts:

* ``replications.csv`` -- one row per (method, rep, metric)
* ``summary.csv``      -- bias / std / mean SE / type-I / mean estimate
* ``values.csv``       -- per-arm experimentation values per replication
* ``gte.json``         -- the ground-truth effect with its standard error
* ``violin_<metric>.svg`` -- estimate distributions per design (optional)
* ``logs/<method>_rep<k>.csv`` -- raw interaction logs (optional)

Replication seeds depend only on (base_seed, rep), never on the design, so
designs are compared under common random numbers.  Workers may run tasks
in any order; rows are sorted before writing, making parallel and serial
runs byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .designs import (
    METHOD_NAMES,
    ExperimentConfig,
    run_global,
    run_replication_with_log,
)
from .errors import ConfigError, SchemaError
from .logs import LOG_COLUMNS, METRICS, InteractionLog
from .stats import MetricVector, ReplicationResult, SummaryStats, aggregate
from .streams import derive_seed
from .violin import violin_svg


@dataclass(frozen=True)
class RunSpec:
    """Everything a study needs: the experiment plus the replication plan."""

    experiment: ExperimentConfig
    replications: int
    methods: tuple[str, ...] = METHOD_NAMES
    base_seed: int = 0
    threads: int = 1
    output_dir: Path = Path("out")
    emit_logs: bool = False
    emit_plots: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ConfigError(f"unknown method: {m!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    @property
    def mode(self) -> str:
        same = self.experiment.alpha_treatment == self.experiment.alpha_control
        return "AA" if same else "AB"


@dataclass
class GroundTruth:
    effect: MetricVector
    std_error: MetricVector
    replications: int
    cache_key: str = ""


@dataclass
class StudyResult:
    spec: RunSpec
    gte: GroundTruth
    results: list[ReplicationResult]
    summary: SummaryStats
    files: list[Path] = field(default_factory=list)


def replication_seed(base_seed: int, rep: int) -> int:
    """Seed shared by every design (and the global arms) of replication ``rep``."""
    return derive_seed(base_seed, f"rep:{rep}")


def _rep_config(spec: RunSpec, method: str, rep: int) -> ExperimentConfig:
    return replace(spec.experiment, method=method, seed=replication_seed(spec.base_seed, rep))


def _gte_cache_key(spec: RunSpec) -> str:
    env = spec.experiment.env
    payload = {
        "feature_dim": env.feature_dim,
        "n_candidates": env.n_candidates,
        "beta_fr_short": env.beta_fr_short.tolist(),
        "beta_fr_long": env.beta_fr_long.tolist(),
        "beta_sd_short": env.beta_sd_short.tolist(),
        "beta_sd_long": env.beta_sd_long.tolist(),
        "fr_offset": env.fr_offset,
        "alpha_treatment": spec.experiment.alpha_treatment,
        "alpha_control": spec.experiment.alpha_control,
        "periods": spec.experiment.periods,
        "batch": spec.experiment.batch,
        "burnin": spec.experiment.production_burnin_periods,
        "lr_sgd": spec.experiment.learning_rate_sgd,
        "base_seed": spec.base_seed,
        "replications": spec.replications,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def compute_ground_truth(spec: RunSpec, pool: ThreadPoolExecutor | None = None) -> GroundTruth:
    """Paired global-arm runs per replication; identically zero in A/A mode."""
    key = _gte_cache_key(spec)
    if spec.mode == "AA":
        zero = MetricVector(0.0, 0.0, 0.0)
        return GroundTruth(zero, zero, 0, key)

    def one(rep: int) -> dict[str, float]:
        cfg = _rep_config(spec, "pooling", rep)
        treat = run_global(cfg, "treatment")
        ctrl = run_global(cfg, "control")
        return {m: treat.get(m) - ctrl.get(m) for m in METRICS}

    reps = range(spec.replications)
    diffs = list(pool.map(one, reps)) if pool is not None else [one(r) for r in reps]
    means = {}
    sems = {}
    for m in METRICS:
        vals = np.asarray([d[m] for d in diffs])
        means[m] = float(np.mean(vals))
        sems[m] = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return GroundTruth(MetricVector(**means), MetricVector(**sems), spec.replications, key)


def load_cached_ground_truth(path: Path, key: str) -> GroundTruth | None:
    if not path.exists():
        return None
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if data.get("cache_key") != key:
        return None
    eff = {m: data[m]["estimate"] for m in METRICS}
    sem = {m: data[m]["std_error"] for m in METRICS}
    reps = data[METRICS[0]]["replications"]
    return GroundTruth(MetricVector(**eff), MetricVector(**sem), reps, key)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _f(x: float) -> str:
    return format(float(x), ".6g")


def _csv_line(cells: list[str]) -> str:
    return ",".join(cells) + "\n"


def render_replications_csv(results: list[tuple[int, ReplicationResult]]) -> str:
    out = [_csv_line(["method", "rep", "metric", "treatment_mean",
                      "control_mean", "estimate", "se"])]
    rows = []
    for rep, res in results:
        for metric in METRICS:
            est = res.metrics[metric]
            rows.append((res.method, rep, metric, est))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    for method, rep, metric, est in rows:
        out.append(_csv_line([method, str(rep), metric, _f(est.treatment_mean),
                              _f(est.control_mean), _f(est.estimate), _f(est.se)]))
    return "".join(out)


def render_values_csv(results: list[tuple[int, ReplicationResult]]) -> str:
    out = [_csv_line(["method", "rep", "treatment_value", "control_value"])]
    rows = sorted(results, key=lambda t: (t[1].method, t[0]))
    for rep, res in rows:
        out.append(_csv_line([res.method, str(rep), _f(res.treatment_value),
                              _f(res.control_value)]))
    return "".join(out)


def render_summary_csv(summary: SummaryStats) -> str:
    out = [_csv_line(["method", "metric", "bias", "std", "mean_se",
                      "type1_rate", "mean_estimate"])]
    for (method, metric) in sorted(summary.rows):
        row = summary.rows[(method, metric)]
        t1 = "" if row.type1_rate is None else _f(row.type1_rate)
        out.append(_csv_line([method, metric, _f(row.bias), _f(row.std),
                              _f(row.mean_se), t1, _f(row.mean_estimate)]))
    return "".join(out)


def render_gte_json(gte: GroundTruth) -> str:
    payload: dict = {"cache_key": gte.cache_key}
    for m in METRICS:
        payload[m] = {
            "estimate": gte.effect.get(m),
            "std_error": gte.std_error.get(m),
            "replications": gte.replications,
        }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def render_log_csv(log: InteractionLog) -> str:
    n = log.size
    out = [_csv_line(list(LOG_COLUMNS))]
    g = log.g_out
    for i in range(n):
        cells = [
            str(int(log.period[i])), str(int(log.user_index[i])),
            str(int(log.z[i])), str(int(log.is_short[i])),
            str(int(log.finished[i])), _f(log.stay_duration[i]),
            _f(log.fr_hat[i]), _f(log.sd_hat[i]),
            "" if np.isnan(g[i]) else _f(g[i]),
        ]
        out.append(_csv_line(cells))
    return "".join(out)


# ---------------------------------------------------------------------------
# The study driver
# ---------------------------------------------------------------------------


def run_study(spec: RunSpec) -> StudyResult:
    """Run the full study and write all artifacts into ``spec.output_dir``."""
    out_dir = spec.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=spec.threads) as pool:
        gte_path = out_dir / "gte.json"
        gte = load_cached_ground_truth(gte_path, _gte_cache_key(spec))
        if gte is None:
            gte = compute_ground_truth(spec, pool)

        tasks = [(method, rep) for method in spec.methods for rep in range(spec.replications)]

        def one(task: tuple[str, int]):
            method, rep = task
            cfg = _rep_config(spec, method, rep)
            result, log = run_replication_with_log(cfg)
            return rep, result, (log if spec.emit_logs else None)

        outputs = list(pool.map(one, tasks))

    outputs.sort(key=lambda t: (t[1].method, t[0]))
    keyed = [(rep, res) for rep, res, _ in outputs]
    summary = aggregate([res for _, res in keyed], gte.effect, spec.mode)

    artifacts: dict[Path, str] = {
        out_dir / "replications.csv": render_replications_csv(keyed),
        out_dir / "values.csv": render_values_csv(keyed),
        out_dir / "summary.csv": render_summary_csv(summary),
        out_dir / "gte.json": render_gte_json(gte),
    }
    if spec.emit_plots:
        for metric in METRICS:
            per_method = {
                m: np.asarray([res.metrics[metric].estimate for rep, res in keyed
                               if res.method == m])
                for m in sorted(set(spec.methods))
            }
            artifacts[out_dir / f"violin_{metric}.svg"] = violin_svg(
                per_method, gte.effect.get(metric),
                title=f"Estimated treatment effect: {metric}",
            )
    if spec.emit_logs:
        (out_dir / "logs").mkdir(exist_ok=True)
        for rep, res, log in outputs:
            artifacts[out_dir / "logs" / f"{res.method}_rep{rep:03d}.csv"] = render_log_csv(log)

    written: list[Path] = []
    try:
        for path, content in artifacts.items():
            path.write_text(content)
            written.append(path)
    except OSError as exc:
        for path in written:
            path.unlink(missing_ok=True)
        raise OSError(f"failed writing study output {path}: {exc}") from exc

    return StudyResult(spec=spec, gte=gte, results=[res for _, res in keyed],
                       summary=summary, files=sorted(artifacts))


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------


def _parse_float(cell: str, row_num: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise SchemaError(f"summary.csv row {row_num}: bad {column} value {cell!r}") from exc
    if np.isnan(value):
        raise SchemaError(f"summary.csv row {row_num}: NaN in column {column}")
    return value


def read_summary_csv(path: Path) -> list[dict]:
    """Parse and validate summary.csv; raises SchemaError on any defect."""
    if not path.exists():
        raise SchemaError(f"missing summary file: {path}")
    lines = path.read_text().splitlines()
    expected = ["method", "metric", "bias", "std", "mean_se", "type1_rate", "mean_estimate"]
    if not lines or lines[0].split(",") != expected:
        raise SchemaError(f"summary.csv header mismatch in {path}")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(expected):
            raise SchemaError(f"summary.csv row {i}: expected {len(expected)} cells")
        row = {"method": cells[0], "metric": cells[1]}
        for col, cell in zip(expected[2:], cells[2:]):
            if col == "type1_rate" and cell == "":
                row[col] = None
                continue
            row[col] = _parse_float(cell, i, col)
        rows.append(row)
    return rows


def render_report(rows: list[dict]) -> str:
    """Fixed-width per-metric tables of bias / spread / reported SE."""
    methods = sorted({r["method"] for r in rows})
    metrics = sorted({r["metric"] for r in rows})
    has_t1 = any(r["type1_rate"] is not None for r in rows)
    header = ["Method".ljust(16), "Bias".rjust(12), "STD".rjust(12), "SE".rjust(12)]
    if has_t1:
        header.append("TypeI".rjust(12))
    lines = []
    for metric in metrics:
        lines.append(f"=== {metric} ===")
        lines.append("".join(header))
        for method in methods:
            row = next(r for r in rows if r["method"] == method and r["metric"] == metric)
            cells = [method.ljust(16), f"{row['bias']:12.6g}", f"{row['std']:12.6g}",
                     f"{row['mean_se']:12.6g}"]
            if has_t1:
                cells.append("" if row["type1_rate"] is None else f"{row['type1_rate']:12.6g}")
            lines.append("".join(cells))
        lines.append("")
    return "\n".join(lines)


from .errors import SchemaError  # noqa: E402  (placed after use in annotations only)
