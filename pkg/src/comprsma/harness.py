"""Seeded Monte Carlo experiments, parameter sweeps and CSV emission.

Determinism contract: per-trial seeds derive from (master seed, axis index,
trial index) only, so the same spec produces the same rows regardless of the
worker count or completion order.  Rows are always written in (axis, kind,
trial) submission order.  Measured wall time is kept in TrialResult but
written as 0 unless timing output is requested, so the CSV bytes stay
reproducible.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .autodiff import NumericFault
from .baselines import ALL_KINDS, BenchmarkKind, apply_kind, pga_oracle
from .channel import ScenarioConfig, dbm_to_watt, sample_scenario
from .errors import ConfigError
from .meta import MetaConfig, run
from .rates import rates
from .stats import mean_ci95

AXES = ("none", "power", "threshold", "antennas", "users", "bs-count")


@dataclass
class ExperimentSpec:
    """One experiment: base configs, an optional sweep axis, trials, output."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    axis: str = "none"
    values: list = field(default_factory=list)
    trials: int = 20
    kinds: list = field(default_factory=lambda: list(ALL_KINDS))
    master_seed: int = 0
    workers: int = 1
    out: Optional[str] = None
    timing: bool = False
    oracle_starts: int = 20   # used by oracle mode only

    def validate(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if self.axis == "none":
            if self.values:
                raise ConfigError("axis 'none' takes no values")
        else:
            if not self.values:
                raise ConfigError(f"axis {self.axis!r} needs at least one value")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise ConfigError("axis values must be strictly increasing")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.kinds:
            raise ConfigError("at least one benchmark kind is required")
        self.scenario.validate()
        self.meta.validate()

    def axis_points(self) -> list:
        return [None] if self.axis == "none" else list(self.values)


@dataclass
class TrialResult:
    """One CSV row."""

    seed: int
    kind: str
    axis: str
    axis_value: Optional[float]
    sum_rate: float
    feasible: bool
    wall_ms: float
    per_user_rate: list
    failed: bool = False


def apply_axis(scenario: ScenarioConfig, meta: MetaConfig, axis: str, value):
    """Specialize the base configs for one sweep point."""
    scenario = replace(scenario)
    meta = replace(meta)
    if axis == "none" or value is None:
        return scenario, meta
    if axis == "power":
        meta.p_max = dbm_to_watt(float(value))
    elif axis == "threshold":
        meta.r_th = float(value)
    elif axis == "antennas":
        scenario.n_antennas = int(value)
    elif axis == "users":
        scenario.n_users = int(value)
    elif axis == "bs-count":
        scenario.n_bs = int(value)
    else:
        raise ConfigError(f"unknown axis {axis!r}")
    return scenario, meta


def trial_seeds(master_seed: int, axis_index: int, trial: int) -> tuple:
    """(scenario seed, optimizer seed); independent of the benchmark kind."""
    root = np.random.SeedSequence([master_seed, axis_index, trial])
    scen, opt = root.spawn(2)
    return int(scen.generate_state(1)[0]), int(opt.generate_state(1)[0])


def _run_trial(task) -> TrialResult:
    scenario, meta, kind, axis, axis_value, scen_seed, opt_seed = task
    t0 = time.perf_counter()
    try:
        real = sample_scenario(scenario, scen_seed)
        cfg = apply_kind(meta, kind)
        _, trace = run(real, cfg, seed=opt_seed)
        _, report = trace.result()
        wall = 1000.0 * (time.perf_counter() - t0)
        return TrialResult(
            seed=scen_seed,
            kind=kind.label,
            axis=axis,
            axis_value=axis_value,
            sum_rate=report.sum_rate,
            feasible=bool(trace.feasible_found),
            wall_ms=wall,
            per_user_rate=list(report.user_rate),
        )
    except NumericFault:
        wall = 1000.0 * (time.perf_counter() - t0)
        return TrialResult(
            seed=scen_seed,
            kind=kind.label,
            axis=axis,
            axis_value=axis_value,
            sum_rate=float("nan"),
            feasible=False,
            wall_ms=wall,
            per_user_rate=[],
            failed=True,
        )


def _run_oracle_trial(task) -> TrialResult:
    scenario, meta, kind, axis, axis_value, scen_seed, opt_seed, starts = task
    t0 = time.perf_counter()
    try:
        real = sample_scenario(scenario, scen_seed)
        cfg = apply_kind(meta, kind)
        _, report = pga_oracle(real, cfg, starts=starts, seed=opt_seed)
        wall = 1000.0 * (time.perf_counter() - t0)
        return TrialResult(
            seed=scen_seed,
            kind=f"pga-{kind.label}",
            axis=axis,
            axis_value=axis_value,
            sum_rate=report.sum_rate,
            feasible=bool(report.feasible),
            wall_ms=wall,
            per_user_rate=list(report.user_rate),
        )
    except NumericFault:
        wall = 1000.0 * (time.perf_counter() - t0)
        return TrialResult(
            seed=scen_seed,
            kind=f"pga-{kind.label}",
            axis=axis,
            axis_value=axis_value,
            sum_rate=float("nan"),
            feasible=False,
            wall_ms=wall,
            per_user_rate=[],
            failed=True,
        )


def _tasks(spec: ExperimentSpec, oracle: bool = False) -> list:
    tasks = []
    for axis_idx, value in enumerate(spec.axis_points()):
        scenario, meta = apply_axis(spec.scenario, spec.meta, spec.axis, value)
        for kind in spec.kinds:
            for trial in range(spec.trials):
                scen_seed, opt_seed = trial_seeds(spec.master_seed, axis_idx, trial)
                base = (scenario, meta, kind, spec.axis, value, scen_seed, opt_seed)
                tasks.append(base + (spec.oracle_starts,) if oracle else base)
    return tasks


def run_experiment(spec: ExperimentSpec, oracle: bool = False) -> list:
    """Execute all trials; returns rows and writes the CSV if requested."""
    spec.validate()
    tasks = _tasks(spec, oracle=oracle)
    worker = _run_oracle_trial if oracle else _run_trial
    if spec.workers == 1:
        rows = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(worker, tasks, chunksize=1))
    if spec.out:
        write_csv(spec.out, rows, n_users_max=_max_users(spec), timing=spec.timing)
    return rows


def _max_users(spec: ExperimentSpec) -> int:
    if spec.axis == "users":
        return int(max(spec.values))
    return spec.scenario.n_users


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path: str, rows: list, n_users_max: int, timing: bool = False):
    header = "seed,kind,axis,axis_value,sum_rate_bps_hz,feasible,wall_ms," + ",".join(
        f"rate_user_{k}" for k in range(n_users_max)
    )
    lines = [header]
    for r in rows:
        cells = [
            str(r.seed),
            r.kind,
            r.axis,
            "" if r.axis_value is None else _fmt(r.axis_value),
            _fmt(r.sum_rate),
            "1" if r.feasible else "0",
            _fmt(r.wall_ms) if timing else "0",
        ]
        rates_out = list(r.per_user_rate) + [None] * (n_users_max - len(r.per_user_rate))
        cells.extend("" if v is None else _fmt(v) for v in rates_out)
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class CellSummary:
    kind: str
    axis_value: Optional[float]
    n: int
    n_feasible: int
    mean_sum_rate: Optional[float]
    ci95: Optional[float]
    infeasible_fraction: float


def summarize(rows: list) -> list:
    """Mean and 95% CI of the sum rate per (kind, axis value), feasible rows only."""
    if not rows:
        raise ConfigError("summarize needs a non-empty table")
    cells: dict = {}
    order = []
    for r in rows:
        key = (r.kind, r.axis_value)
        if key not in cells:
            cells[key] = []
            order.append(key)
        cells[key].append(r)
    out = []
    for key in order:
        group = cells[key]
        feas = [r.sum_rate for r in group if r.feasible and not r.failed]
        if feas:
            mean, half = mean_ci95(feas)
        else:
            mean, half = None, None
        out.append(
            CellSummary(
                kind=key[0],
                axis_value=key[1],
                n=len(group),
                n_feasible=len(feas),
                mean_sum_rate=mean,
                ci95=half,
                infeasible_fraction=1.0 - len(feas) / len(group),
            )
        )
    return out


def format_summary(cells: list) -> str:
    lines = [f"{'kind':<14}{'axis_value':>12}{'n':>5}{'feas':>6}{'mean':>12}{'ci95':>10}{'infeas%':>9}"]
    for c in cells:
        mean = "-" if c.mean_sum_rate is None else f"{c.mean_sum_rate:.4f}"
        ci = "-" if c.ci95 is None else f"{c.ci95:.4f}"
        av = "-" if c.axis_value is None else f"{c.axis_value:g}"
        lines.append(
            f"{c.kind:<14}{av:>12}{c.n:>5}{c.n_feasible:>6}{mean:>12}{ci:>10}"
            f"{100*c.infeasible_fraction:>8.1f}%"
        )
    return "\n".join(lines)
