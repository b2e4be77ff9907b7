"""Seeded Monte-Carlo sweeps over SNR, error strength and algorithms.

A trial is the unit of work: it owns a pre-split pair of seed sequences (one
for the channel estimates, one for the error realizations), so results do not
depend on the order or the process in which trials run. Rows are always
merged in trial order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .channel import ChannelModelSpec, draw_channel_set, trial_streams
from .designer import ALGORITHMS, DesignRequest, design
from .errors import ConfigError, HybridRelayError
from .structopt import ObjectiveSpec
from .sysmodel import NetworkConfig, evaluate

log = logging.getLogger(__name__)

__all__ = [
    "RESULT_COLUMNS",
    "SUMMARY_COLUMNS",
    "PLOT_COLUMNS",
    "ExperimentConfig",
    "ExperimentResult",
    "config_from_dict",
    "load_config",
    "run",
    "run_trial",
    "write_results",
    "read_results",
    "summarize",
    "emit_plot_data",
    "format_csv",
]

RESULT_COLUMNS = ("snr_db", "sigma_e", "trial", "algorithm", "objective",
                  "spectral_efficiency", "sum_mse", "nonlinear_sum_mse", "iters", "flag")
SUMMARY_COLUMNS = ("algorithm", "objective", "snr_db", "sigma_e", "n",
                   "mean_spectral_efficiency", "ci_spectral_efficiency",
                   "mean_sum_mse", "ci_sum_mse",
                   "mean_nonlinear_sum_mse", "ci_nonlinear_sum_mse", "failed", "flag")
PLOT_COLUMNS = ("x", "algorithm", "mean_metric", "ci")
METRICS = ("spectral_efficiency", "sum_mse", "nonlinear_sum_mse")


@dataclass(frozen=True)
class ExperimentConfig:
    antennas: tuple
    rf_chains: tuple
    n_streams: int
    snr_db_grid: tuple
    sigma_e_grid: tuple = (0.0,)
    alpha_e: float = 0.6
    algorithms: tuple = ALGORITHMS[:5]
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    channel_model: ChannelModelSpec = field(default_factory=ChannelModelSpec)
    trials: int = 100
    seed: int = 0
    tx_power: float = 1.0
    source_power: float = 1.0
    repeat_limit: int = 3
    tolerance: float = 1e-6
    alg1_eps: float = 1e-6
    alg1_max_iters: int = 100
    output_path: str = "results.csv"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_db_grid or not self.sigma_e_grid:
            raise ConfigError("grids must be non-empty")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if not 0.0 <= self.alpha_e < 1.0:
            raise ConfigError("alpha_e must lie in [0, 1)")
        if min(self.sigma_e_grid) < 0:
            raise ConfigError("sigma_e values must be non-negative")
        # Fails early on inconsistent topologies.
        self.network(self.snr_db_grid[0])

    def network(self, snr_db: float) -> NetworkConfig:
        return NetworkConfig.uniform(self.antennas, self.rf_chains, self.n_streams, snr_db,
                                     self.tx_power, self.source_power)

    def to_dict(self) -> dict:
        return {
            "network": {
                "antennas": list(self.antennas),
                "rf_chains": list(self.rf_chains),
                "streams": self.n_streams,
                "tx_power": self.tx_power,
                "source_power": self.source_power,
            },
            "channel": {"kind": self.channel_model.kind, "n_paths": self.channel_model.n_paths},
            "snr_db": list(self.snr_db_grid),
            "sigma_e": list(self.sigma_e_grid),
            "alpha_e": self.alpha_e,
            "algorithms": list(self.algorithms),
            "objective": {"concrete": self.objective.concrete, "family": self.objective.family},
            "trials": self.trials,
            "seed": self.seed,
            "output": self.output_path,
            "design": {
                "repeat_limit": self.repeat_limit,
                "tolerance": self.tolerance,
                "alg1_eps": self.alg1_eps,
                "alg1_max_iters": self.alg1_max_iters,
            },
        }


_TOP_KEYS = {"network", "channel", "snr_db", "sigma_e", "alpha_e", "algorithms", "objective",
             "trials", "seed", "output", "design"}
_SECTION_KEYS = {
    "network": {"antennas", "rf_chains", "streams", "tx_power", "source_power"},
    "channel": {"kind", "n_paths"},
    "objective": {"concrete", "family"},
    "design": {"repeat_limit", "tolerance", "alg1_eps", "alg1_max_iters"},
}


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed config mapping; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    for sec, keys in _SECTION_KEYS.items():
        val = raw.get(sec, {})
        if not isinstance(val, dict):
            raise ConfigError(f"section {sec!r} must be a mapping")
        bad = set(val) - keys
        if bad:
            raise ConfigError(f"unknown keys in {sec!r}: {sorted(bad)}")
    net = raw.get("network")
    if not net or "antennas" not in net or "streams" not in net:
        raise ConfigError("network.antennas and network.streams are required")
    if "snr_db" not in raw:
        raise ConfigError("snr_db is required")
    ch = raw.get("channel", {})
    obj = raw.get("objective", {})
    des = raw.get("design", {})
    try:
        antennas = tuple(int(a) for a in net["antennas"])
        rf = tuple(int(r) for r in _as_list(net.get("rf_chains", antennas)))
        if len(rf) == 1:
            rf = rf * len(antennas)
        return ExperimentConfig(
            antennas=antennas,
            rf_chains=rf,
            n_streams=int(net["streams"]),
            snr_db_grid=tuple(float(x) for x in _as_list(raw["snr_db"])),
            sigma_e_grid=tuple(float(x) for x in _as_list(raw.get("sigma_e", 0.0))),
            alpha_e=float(raw.get("alpha_e", 0.6)),
            algorithms=tuple(_as_list(raw.get("algorithms", list(ALGORITHMS[:5])))),
            objective=ObjectiveSpec(obj.get("concrete", "sum_capacity"), obj.get("family")),
            channel_model=ChannelModelSpec(ch.get("kind", "mmwave"), int(ch.get("n_paths", 10))),
            trials=int(raw.get("trials", 100)),
            seed=int(raw.get("seed", 0)),
            tx_power=float(net.get("tx_power", 1.0)),
            source_power=float(net.get("source_power", 1.0)),
            repeat_limit=int(des.get("repeat_limit", 3)),
            tolerance=float(des.get("tolerance", 1e-6)),
            alg1_eps=float(des.get("alg1_eps", 1e-6)),
            alg1_max_iters=int(des.get("alg1_max_iters", 100)),
            output_path=str(raw.get("output", "results.csv")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, HybridRelayError):
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)


@dataclass
class ExperimentResult:
    rows: list
    metadata: dict
    timings: list = field(default_factory=list)


def run_trial(cfg: ExperimentConfig, trial: int):
    """All rows of one trial, plus matching wall-clock timings."""
    est, err = trial_streams(cfg.seed, cfg.trials)[trial]
    rows, times = [], []
    for sigma_e in cfg.sigma_e_grid:
        chans = draw_channel_set(cfg.antennas, cfg.channel_model, sigma_e, cfg.alpha_e, est, err)
        estimated, true = chans.estimated(), chans.true_channels()
        for snr in cfg.snr_db_grid:
            net = cfg.network(snr)
            for algo in cfg.algorithms:
                t0 = time.perf_counter()
                row = {"snr_db": snr, "sigma_e": sigma_e, "trial": trial, "algorithm": algo,
                       "objective": cfg.objective.concrete}
                try:
                    req = DesignRequest(net, estimated, cfg.objective, algo, cfg.repeat_limit,
                                        cfg.tolerance, cfg.alg1_eps, cfg.alg1_max_iters)
                    d = design(req)
                    m = evaluate(net, d, true)
                    flags = list(d.info.get("flags", []))
                    if m["regularized"]:
                        flags.append("regularized")
                    row.update(spectral_efficiency=m["spectral_efficiency"], sum_mse=m["sum_mse"],
                               nonlinear_sum_mse=m["nonlinear_sum_mse"],
                               iters=int(d.info.get("iters", 0)), flag=";".join(flags))
                except (HybridRelayError, np.linalg.LinAlgError) as exc:
                    log.warning("trial %d %s at %g dB failed: %s", trial, algo, snr, exc)
                    row.update(spectral_efficiency=math.nan, sum_mse=math.nan,
                               nonlinear_sum_mse=math.nan, iters=0,
                               flag=f"failed:{type(exc).__name__}")
                rows.append(row)
                times.append(time.perf_counter() - t0)
    return rows, times


def _run_trial_star(args):
    return run_trial(*args)


def run(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run every trial; ``workers > 1`` uses a process pool with ordered merging."""
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_trial_star, jobs))
    else:
        parts = [run_trial(*j) for j in jobs]
    rows, times = [], []
    for r, t in parts:
        rows.extend(r)
        times.extend(t)
    meta = {"version": __version__, "config": cfg.to_dict(), "rows": len(rows)}
    return ExperimentResult(rows, meta, times)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_results(result: ExperimentResult, path) -> None:
    """Main CSV plus ``.timing.csv`` and ``.meta.json`` sidecars.

    Wall-clock times vary between runs, so they live in the sidecar and the
    main CSV stays byte-identical for a given config and seed.
    """
    path = Path(path)
    try:
        path.write_text(format_csv(result.rows, RESULT_COLUMNS))
        timing = [dict(r, wall_time=t) for r, t in zip(result.rows, result.timings)]
        path.with_suffix(".timing.csv").write_text(
            format_csv(timing, ("snr_db", "sigma_e", "trial", "algorithm", "wall_time")))
        path.with_suffix(".meta.json").write_text(json.dumps(result.metadata, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise ConfigError(f"{path} does not have the result columns {RESULT_COLUMNS}")
        rows = []
        for r in reader:
            rows.append({
                "snr_db": float(r["snr_db"]), "sigma_e": float(r["sigma_e"]),
                "trial": int(r["trial"]), "algorithm": r["algorithm"],
                "objective": r["objective"],
                "spectral_efficiency": float(r["spectral_efficiency"]),
                "sum_mse": float(r["sum_mse"]),
                "nonlinear_sum_mse": float(r["nonlinear_sum_mse"]),
                "iters": int(r["iters"]), "flag": r["flag"],
            })
    return rows


def _mean_ci(vals) -> tuple[float, float]:
    v = np.asarray([x for x in vals if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / np.sqrt(v.size))


def summarize(rows) -> list[dict]:
    """Mean and 95% normal-approximation half-width per algorithm and grid point."""
    if not rows:
        raise ConfigError("no rows to summarize")
    groups: dict = {}
    for r in rows:
        key = (r["algorithm"], r["objective"], r["snr_db"], r["sigma_e"])
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        ok = [r for r in g if not str(r["flag"]).startswith("failed")]
        rec = dict(zip(("algorithm", "objective", "snr_db", "sigma_e"), key))
        rec["n"] = len(ok)
        for m in METRICS:
            mean, ci = _mean_ci([r[m] for r in ok])
            rec[f"mean_{m}"] = mean
            rec[f"ci_{m}"] = ci
        rec["failed"] = len(g) - len(ok)
        rec["flag"] = "single_trial" if len(ok) == 1 else ""
        out.append(rec)
    return out


def emit_plot_data(rows, axis: str = "snr", metric: str = "spectral_efficiency",
                   at: float | None = None) -> list[dict]:
    """Long-format curve data: one row per (x, algorithm), sorted by x then algorithm.

    The axis not being plotted must be single-valued, or pinned with ``at``.
    """
    if axis not in ("snr", "sigma_e"):
        raise ConfigError("axis must be 'snr' or 'sigma_e'")
    if metric not in METRICS:
        raise ConfigError(f"metric must be one of {METRICS}")
    xkey, okey = ("snr_db", "sigma_e") if axis == "snr" else ("sigma_e", "snr_db")
    if at is not None:
        rows = [r for r in rows if r[okey] == at]
    if len({r[okey] for r in rows}) > 1:
        raise ConfigError(f"{okey} takes several values; pick one with --at")
    if not rows:
        raise ConfigError("no rows left to plot")
    groups: dict = {}
    for r in rows:
        if str(r["flag"]).startswith("failed"):
            continue
        groups.setdefault((r[xkey], r["algorithm"]), []).append(r[metric])
    out = []
    for (x, algo) in sorted(groups):
        mean, ci = _mean_ci(groups[(x, algo)])
        out.append({"x": x, "algorithm": algo, "mean_metric": mean, "ci": ci})
    return out
