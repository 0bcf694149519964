"""Benchmark configurations and independent optimality oracles.

The four benchmark schemes toggle two structural switches on the same
meta-optimizer: whether a common stream exists (rate splitting vs pure
spatial multiplexing) and whether user antennas may move (movable vs fixed).

The oracles are deliberately different search machines over the same
objective: a multi-start projected-gradient ascent over all variables, and an
exhaustive per-user grid search over positions only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NumericFault
from .channel import ChannelRealization
from .errors import ConfigError
from .meta import (
    MetaConfig,
    OptimizerTrace,
    initial_variables,
    meta_loss_graph,
    penalized_objective,
    project_power,
    repair_variables,
    run,
)
from .rates import (
    RateReport,
    Variables,
    lift_variables,
    rate_graph,
    rates,
    variable_leaves,
)


@dataclass(frozen=True)
class BenchmarkKind:
    """access in {rsma, sdma} x antenna in {ma, fpa}."""

    access: str
    antenna: str

    def __post_init__(self):
        if self.access not in ("rsma", "sdma") or self.antenna not in ("ma", "fpa"):
            raise ConfigError(f"invalid benchmark kind {self.access}-{self.antenna}")

    @property
    def label(self) -> str:
        return f"{self.access}-{self.antenna}"

    @classmethod
    def parse(cls, text: str) -> "BenchmarkKind":
        parts = text.strip().lower().split("-")
        if len(parts) != 2:
            raise ConfigError(f"benchmark kind must look like 'rsma-ma', got {text!r}")
        return cls(parts[0], parts[1])


ALL_KINDS = (
    BenchmarkKind("rsma", "ma"),
    BenchmarkKind("rsma", "fpa"),
    BenchmarkKind("sdma", "ma"),
    BenchmarkKind("sdma", "fpa"),
)


def apply_kind(cfg: MetaConfig, kind: BenchmarkKind) -> MetaConfig:
    """The scheme's structural switches on top of a base config."""
    return replace(
        cfg,
        use_common=(kind.access == "rsma"),
        update_positions=(kind.antenna == "ma") and cfg.update_positions,
    )


def run_benchmark(
    real: ChannelRealization, kind: BenchmarkKind, cfg: MetaConfig, seed: int = 0
) -> tuple:
    """Run one scheme; returns (Variables, RateReport)."""
    best, trace = run(real, apply_kind(cfg, kind), seed=seed)
    _, report = trace.result()
    return best, report


def _norm_or_zero(g: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(g.ravel())
    if n == 0.0 or not np.isfinite(n):
        return np.zeros_like(g)
    return g / n


def _objective_gradients(real, vars: Variables, cfg: MetaConfig) -> dict:
    """Tape gradients of the penalized objective (-meta loss, hinge mode)."""
    gv = lift_variables(vars)
    rg = rate_graph(real, gv)
    loss = meta_loss_graph(real, rg, gv, replace(cfg, penalty_mode="hinge"))
    leaves = variable_leaves(gv)
    grads = ad.backward(loss, leaves)
    n = vars.n_bs
    g_pre = np.empty_like(vars.precoders)
    for i in range(n):
        g_pre[i] = grads[2 * i] + 1j * grads[2 * i + 1]
    # ascend the objective = descend the loss
    return {"precoders": -g_pre, "common": -grads[2 * n], "positions": -grads[2 * n + 1]}


def pga_oracle(
    real: ChannelRealization,
    cfg: MetaConfig,
    starts: int = 20,
    seed: int = 0,
    max_steps: int = 2000,
    step_precoder: float = 0.25,
    step_common: float = 0.25,
    step_position: float = None,
) -> tuple:
    """Multi-start projected gradient ascent on the penalized objective.

    Each start takes normalized per-block steps, projects the precoders onto
    the power budget and clamps positions into the region after every step,
    and halves a global step scale on non-improvement (slight growth on
    improvement).  A start stops early once the scale collapses.  Returns the
    best feasible repaired point across starts, (Variables, RateReport).
    """
    if starts < 1:
        raise ConfigError("starts must be >= 1")
    cfg = replace(cfg, penalty_mode="hinge")
    cfg.validate()
    rng = np.random.default_rng(seed)
    half = real.region_halfwidth
    k = real.n_users
    sp = step_precoder * np.sqrt(cfg.p_max)
    sc = step_common
    sl = (half / 4.0) if step_position is None else step_position

    best_vars, best_report = None, None
    fallback_vars, fallback_report, fallback_viol = None, None, np.inf

    for start in range(starts):
        # start 0 is the beam-matched point; later starts draw random precoders
        mode = "channel" if start == 0 else "random"
        vars = initial_variables(real, replace(cfg, init_mode=mode), rng)
        if cfg.use_common and start > 0:
            vars.common_split = rng.uniform(0.0, 0.5, size=k)
        if cfg.update_positions and start > 0:
            vars.positions = rng.uniform(-half, half, size=(k, 2))
        obj = penalized_objective(real, vars, cfg)
        scale = 1.0
        grads = None
        for _ in range(max_steps):
            if scale < 1e-12:
                break
            if grads is None:
                grads = _objective_gradients(real, vars, cfg)
            trial = vars.copy()
            trial.precoders = project_power(
                vars.precoders + scale * sp * _norm_or_zero(grads["precoders"]), cfg.p_max
            )
            if cfg.use_common:
                trial.common_split = vars.common_split + scale * sc * _norm_or_zero(
                    grads["common"]
                )
            if cfg.update_positions:
                trial.positions = np.clip(
                    vars.positions + scale * sl * _norm_or_zero(grads["positions"]),
                    -half,
                    half,
                )
            new = penalized_objective(real, trial, cfg)
            if new > obj:
                vars, obj = trial, new
                grads = None
                scale = min(scale * 1.25, 4.0)
            else:
                scale *= 0.5

        candidate = repair_variables(real, vars, cfg)
        report = rates(real, candidate, r_th=cfg.r_th, p_max=cfg.p_max)
        if report.feasible:
            if best_report is None or report.sum_rate > best_report.sum_rate:
                best_vars, best_report = candidate, report
        elif best_report is None:
            v = report.violation_total()
            if v < fallback_viol:
                fallback_viol = v
                fallback_vars, fallback_report = candidate, report

    if best_report is not None:
        return best_vars, best_report
    return fallback_vars, fallback_report


def grid_oracle_positions(
    real: ChannelRealization,
    vars: Variables,
    resolution: int = 41,
    sweeps: int = 2,
) -> np.ndarray:
    """Exhaustive per-user position search on a resolution^2 grid of the region.

    Coordinate descent over users with (P, C) held fixed; returns the
    grid-optimal positions, shape (K, 2).
    """
    if resolution < 2:
        raise ConfigError("resolution must be >= 2")
    k = real.n_users
    if k * resolution**2 > 10**6:
        raise ConfigError(
            f"grid budget exceeded: {k} users x {resolution}^2 points > 1e6"
        )
    half = real.region_halfwidth
    axis = np.linspace(-half, half, resolution)
    work = vars.copy()

    def sum_rate_at(p):
        return rates(real, work).sum_rate

    for _ in range(sweeps):
        for user in range(k):
            best_val, best_pos = -np.inf, None
            for x in axis:
                for y in axis:
                    work.positions[user] = (x, y)
                    val = rates(real, work).sum_rate
                    if val > best_val:
                        best_val, best_pos = val, (x, y)
            work.positions[user] = best_pos
    return work.positions.copy()
