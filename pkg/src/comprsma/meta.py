"""Gradient-fed meta-optimizer for the joint precoder/rate-split/position problem.

One run owns three sub-networks.  Every outer iteration restarts from the
same initial point, takes `inner_iters` network-proposed steps per variable
block (split order: common split -> precoders -> positions, with a power
projection after the precoder block), and scores the reached point with a
penalized loss.  Outer-iteration losses are averaged per epoch and
backpropagated into the sub-network parameters, which are updated with Adam.
The sub-network *inputs* (objective gradients at the current point) are
treated as constants during that backward pass, i.e. a first-order scheme.

Every candidate point is repaired (split clipped/rescaled, positions clamped)
and scored before tracking, so the tracked best is always reportable and its
sum rate is monotone over the run by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, NumericFault
from .cmatrix import CMatrix
from .channel import ChannelRealization, dbm_to_watt
from .errors import ConfigError
from .networks import SubNetwork
from .rates import (
    GraphVars,
    RateGraph,
    RateReport,
    Variables,
    rate_graph,
    rates,
    sum_rate_gradients,
)

NET_NAMES = ("precoder", "common", "position")


@dataclass
class MetaConfig:
    """Loop counts, learning rates, penalty weights and mode switches."""

    inner_iters: int = 1
    outer_iters: int = 1
    epochs: int = 400
    lr_precoder: float = 1.6e-3
    lr_common: float = 1e-3
    lr_position: float = 1e-5
    zeta_qos: float = 1e-4            # weight of the per-user rate-threshold penalty
    zeta_split_nonneg: float = 1e-2   # weight of the c_k >= 0 penalty
    zeta_split_budget: float = 1.001  # weight of the sum(c) <= common-rate penalty
    zeta_box: float = 1e-4            # weight of the position-region penalty
    penalty_mode: str = "hinge"       # "hinge" or "binary"
    r_th: float = 0.6                 # per-user rate threshold, bps/Hz
    p_max: float = dbm_to_watt(33.0)  # per-BS power budget, watts
    use_common: bool = True           # False: pure spatial multiplexing (no common stream)
    update_precoders: bool = True
    update_common: bool = True
    update_positions: bool = True
    precoder_hidden: int = 1000
    common_hidden: int = 100
    position_hidden: int = 1000
    position_step_scale: Optional[float] = None  # meters per unit net output; None -> wavelength/8
    position_inner_iters: Optional[int] = 4      # position-block steps per cycle; None -> inner_iters
    normalize_position_feed: bool = True
    precoder_step_scale: Optional[float] = None  # sqrt-watts per unit net output; None -> 0.1*sqrt(p_max)
    normalize_precoder_feed: bool = True
    init_mode: str = "channel"        # "channel": beam-matched start; "random": CN(0,1) scaled
    split_init: float = 1.5           # starting common portion per user (channel init only)

    def validate(self):
        if self.inner_iters < 0:
            raise ConfigError("inner_iters must be >= 0")
        if self.outer_iters < 1 or self.epochs < 1:
            raise ConfigError("outer_iters and epochs must be >= 1")
        for name in ("lr_precoder", "lr_common", "lr_position"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("zeta_qos", "zeta_split_nonneg", "zeta_split_budget", "zeta_box"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.penalty_mode not in ("hinge", "binary"):
            raise ConfigError(f"penalty_mode must be 'hinge' or 'binary', got {self.penalty_mode!r}")
        if self.p_max <= 0:
            raise ConfigError("p_max must be positive")
        if self.init_mode not in ("channel", "random"):
            raise ConfigError(f"init_mode must be 'channel' or 'random', got {self.init_mode!r}")
        for name in ("precoder_hidden", "common_hidden", "position_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def position_scale(self, real: ChannelRealization) -> float:
        if self.position_step_scale is not None:
            return self.position_step_scale
        return real.config.wavelength / 8.0

    def precoder_scale(self) -> float:
        if self.precoder_step_scale is not None:
            return self.precoder_step_scale
        return 0.1 * np.sqrt(self.p_max)

    def enabled_nets(self) -> list:
        names = []
        if self.update_precoders:
            names.append("precoder")
        if self.use_common and self.update_common:
            names.append("common")
        if self.update_positions:
            names.append("position")
        return names


@dataclass
class OptimizerTrace:
    """Per-outer-iteration history plus the tracked best point."""

    epoch_index: list = field(default_factory=list)
    outer_index: list = field(default_factory=list)
    meta_loss: list = field(default_factory=list)
    sum_rate: list = field(default_factory=list)       # repaired candidate sum rate
    best_sum_rate: list = field(default_factory=list)  # running best feasible (nan before one exists)
    best_vars: Optional[Variables] = None
    best_report: Optional[RateReport] = None
    fallback_vars: Optional[Variables] = None          # least-violating, if nothing feasible
    fallback_report: Optional[RateReport] = None
    feasible_found: bool = False

    def result(self):
        """Best feasible point, else the least-violating one."""
        if self.feasible_found:
            return self.best_vars, self.best_report
        return self.fallback_vars, self.fallback_report

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write("epoch,outer,meta_loss,sum_rate,best_sum_rate\n")
            for row in zip(
                self.epoch_index, self.outer_index, self.meta_loss,
                self.sum_rate, self.best_sum_rate,
            ):
                fh.write(",".join(repr(float(x)) if not isinstance(x, int) else str(x) for x in row))
                fh.write("\n")


def build_networks(n_users: int, cfg: MetaConfig, rng: np.random.Generator) -> dict:
    """The three sub-networks, drawn in a fixed order for reproducibility."""
    k = n_users
    return {
        "precoder": SubNetwork.create(2 * k + 2, cfg.precoder_hidden, 2 * k + 2, rng),
        "common": SubNetwork.create(k, cfg.common_hidden, k, rng),
        "position": SubNetwork.create(2 * k, cfg.position_hidden, 2 * k, rng),
    }


def initial_variables(
    real: ChannelRealization, cfg: MetaConfig, rng: np.random.Generator
) -> Variables:
    """Starting point: beam-matched or random precoders at the exact power budget.

    Channel mode points each private beam at its user's channel (taken at the
    origin position) and the common beam at the channel sum; random mode draws
    i.i.d. complex normal entries.  Either way each BS block is scaled to
    exactly meet the budget.  Positions start at the origin (the fixed-antenna
    operating point) and the split at ``split_init`` per user (channel mode,
    rate-splitting only) or zero.
    """
    from .channel import channel_all  # local import to avoid a cycle at module load

    n, i, k = real.n_bs, real.n_antennas, real.n_users
    # always consume the same rng draws so paired runs stay aligned across modes
    p = (rng.standard_normal((n, i, k + 1)) + 1j * rng.standard_normal((n, i, k + 1))) / np.sqrt(2.0)
    c0 = np.zeros(k)
    if cfg.init_mode == "channel":
        h = channel_all(real, np.zeros((k, 2)))  # (N, K, I)
        p = np.zeros((n, i, k + 1), dtype=np.complex128)
        for bs in range(n):
            big_h = h[bs]  # (K, I), rows are user channels
            if cfg.use_common:
                # matched private beams; the common beam soaks up interference
                cols = big_h.T
            else:
                # no common fallback: start at the regularized zero-forcing point
                reg = real.noise_power * k / cfg.p_max
                cols = big_h.T @ np.linalg.inv(big_h.conj() @ big_h.T + reg * np.eye(k))
            for user in range(k):
                p[bs, :, 1 + user] = cols[:, user] / np.linalg.norm(cols[:, user])
            if cfg.use_common:
                com = big_h.sum(axis=0)
                p[bs, :, 0] = com / np.linalg.norm(com)
        if cfg.use_common:
            c0 = np.full(k, cfg.split_init)
    if not cfg.use_common:
        p[:, :, 0] = 0.0
    tr = np.sum(np.abs(p) ** 2, axis=(1, 2))
    p *= np.sqrt(cfg.p_max / tr)[:, None, None]
    return Variables(p, c0, np.zeros((k, 2)))


def project_power(precoders: np.ndarray, p_max) -> np.ndarray:
    """Scale any BS block exceeding its budget back onto the power sphere."""
    precoders = np.asarray(precoders, dtype=np.complex128)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=np.float64), (precoders.shape[0],))
    tr = np.sum(np.abs(precoders) ** 2, axis=(1, 2))
    scale = np.where(tr > p_max, np.sqrt(p_max / np.maximum(tr, 1e-300)), 1.0)
    return precoders * scale[:, None, None]


def _project_power_graph(precoders: list, p_max: float) -> list:
    out = []
    for cm in precoders:
        tr = cm.fro_norm_sq()
        if float(tr.value) > p_max:
            out.append(cm.scale(ad.sqrt(ad.div(p_max, tr))))
        else:
            out.append(cm)
    return out


def meta_loss_graph(
    real: ChannelRealization, rg: RateGraph, gv: GraphVars, cfg: MetaConfig
) -> Node:
    """Negative sum rate plus constraint penalties, as a scalar node."""
    loss = ad.neg(rg.sum_rate)
    c = gv.common_split
    half = real.region_halfwidth
    if cfg.penalty_mode == "hinge":
        qos = ad.vsum(ad.relu(ad.sub(cfg.r_th, rg.user_rate)))
        neg_split = ad.vsum(ad.relu(ad.neg(c)))
        budget = ad.relu(ad.sub(ad.vsum(c), rg.common_rate))
        box = ad.vsum(
            ad.add(
                ad.relu(ad.sub(gv.positions, half)),
                ad.relu(ad.sub(ad.neg(gv.positions), half)),
            )
        )
        loss = ad.add(loss, ad.mul(qos, cfg.zeta_qos))
        loss = ad.add(loss, ad.mul(neg_split, cfg.zeta_split_nonneg))
        loss = ad.add(loss, ad.mul(budget, cfg.zeta_split_budget))
        loss = ad.add(loss, ad.mul(box, cfg.zeta_box))
        return loss
    # binary mode: indicator counts on the violating side; constant w.r.t. the tape
    user = rg.user_rate.value
    cv = c.value
    pos = gv.positions.value
    count = (
        cfg.zeta_qos * float(np.sum(user < cfg.r_th))
        + cfg.zeta_split_nonneg * float(np.sum(cv < 0.0))
        + cfg.zeta_split_budget * float(np.sum(cv) > rg.common_rate.value)
        + cfg.zeta_box * float(np.sum(np.any(np.abs(pos) > half, axis=1)))
    )
    return ad.add(loss, count)


def penalized_objective(real: ChannelRealization, vars: Variables, cfg: MetaConfig) -> float:
    """Value-path mirror of -meta_loss in hinge mode (the oracle's objective)."""
    rep = rates(real, vars)
    half = real.region_halfwidth
    c = vars.common_split
    pen = (
        cfg.zeta_qos * np.maximum(cfg.r_th - rep.user_rate, 0.0).sum()
        + cfg.zeta_split_nonneg * np.maximum(-c, 0.0).sum()
        + cfg.zeta_split_budget * max(c.sum() - rep.common_rate, 0.0)
        + cfg.zeta_box * (
            np.maximum(vars.positions - half, 0.0).sum()
            + np.maximum(-vars.positions - half, 0.0).sum()
        )
    )
    return float(rep.sum_rate - pen)


class _FeedTap:
    """Record or replay the gradient vectors fed to the sub-networks.

    Replaying pinned feeds makes the epoch loss a pure function of the
    network parameters, which is what the finite-difference check of the
    epoch gradient needs.
    """

    def __init__(self, replay: Optional[dict] = None, record: Optional[dict] = None):
        self.replay = replay
        self.record = record
        self._idx = {}

    def get(self, name: str, compute):
        if self.replay is not None:
            i = self._idx.get(name, 0)
            self._idx[name] = i + 1
            return self.replay[name][i]
        value = compute()
        if self.record is not None:
            self.record.setdefault(name, []).append(value)
        return value


def inner_cycle(
    real: ChannelRealization,
    init: Variables,
    nets: dict,
    cfg: MetaConfig,
    params: Optional[dict] = None,
    feeds: Optional[_FeedTap] = None,
    collect: Optional[list] = None,
) -> GraphVars:
    """One outer iteration's variable updates, built on the tape.

    ``params`` maps net name -> lifted parameter nodes; nets without an entry
    run with constant parameters.  ``collect``, when given, receives a value
    snapshot after every position step so the caller can consider the whole
    position sub-trajectory as best-point candidates.  Returns the reached
    point as graph nodes whose only live dependencies are the sub-network
    parameters.
    """
    k = real.n_users
    n_bs = real.n_bs
    i_ant = real.n_antennas
    if feeds is None:
        feeds = _FeedTap()
    params = params or {}

    gvars = GraphVars(
        precoders=[CMatrix.from_complex(init.precoders[n]) for n in range(n_bs)],
        common_split=Node(init.common_split.copy()),
        positions=Node(init.positions.copy()),
    )

    def current() -> Variables:
        return gvars.values()

    # common-split block
    if cfg.use_common and cfg.update_common:
        for _ in range(cfg.inner_iters):
            g = feeds.get("common", lambda: sum_rate_gradients(real, current())["common"])
            out = nets["common"].forward(g, params.get("common"))
            gvars.common_split = ad.add(gvars.common_split, out)

    # precoder block, then projection
    if cfg.update_precoders:
        p_scale = cfg.precoder_scale()
        mask = np.ones((i_ant, k + 1)) * p_scale
        if not cfg.use_common:
            mask[:, 0] = 0.0
        for _ in range(cfg.inner_iters):
            g = feeds.get("precoders", lambda: sum_rate_gradients(real, current())["precoders"])
            rows = np.empty((n_bs * i_ant, 2 * (k + 1)))
            rows[:, 0::2] = g.real.reshape(n_bs * i_ant, k + 1)
            rows[:, 1::2] = g.imag.reshape(n_bs * i_ant, k + 1)
            if cfg.normalize_precoder_feed:
                rows /= np.sqrt(np.mean(rows**2)) + 1e-30
            out = nets["precoder"].forward(rows, params.get("precoder"))
            for n in range(n_bs):
                blk = ad.getitem(out, (slice(n * i_ant, (n + 1) * i_ant), slice(None)))
                dre = ad.getitem(blk, (slice(None), slice(0, None, 2)))
                dim = ad.getitem(blk, (slice(None), slice(1, None, 2)))
                gvars.precoders[n] = gvars.precoders[n] + CMatrix(
                    ad.mul(dre, mask), ad.mul(dim, mask)
                )
    gvars.precoders = _project_power_graph(gvars.precoders, cfg.p_max)

    # position block
    if cfg.update_positions:
        if collect is not None:
            # the not-yet-moved point: keeps the fixed-antenna operating point
            # in the candidate stream of every movable-antenna cycle
            collect.append(gvars.values())
        scale = cfg.position_scale(real)
        steps = cfg.inner_iters if cfg.position_inner_iters is None else cfg.position_inner_iters
        if cfg.inner_iters == 0:
            steps = 0  # zero inner iterations means the whole cycle is the identity
        for _ in range(steps):
            g = feeds.get("positions", lambda: sum_rate_gradients(real, current())["positions"])
            flat = np.asarray(g, dtype=np.float64).ravel()
            if cfg.normalize_position_feed:
                flat = flat / (np.sqrt(np.mean(flat**2)) + 1e-30)
            out = nets["position"].forward(flat, params.get("position"))
            delta = ad.mul(ad.reshape(out, (k, 2)), scale)
            gvars.positions = ad.add(gvars.positions, delta)
            if collect is not None:
                collect.append(gvars.values())

    return gvars


def repair_variables(real: ChannelRealization, vars: Variables, cfg: MetaConfig) -> Variables:
    """Make a candidate reportable: clamp positions, re-portion the split.

    The sum rate only depends on the split through its total, so within the
    budget (sum <= achievable common rate, entries nonnegative) the portions
    are free.  They are reassigned to cover each user's rate-threshold
    shortfall first; whatever budget remains follows the learned proportions.
    Power needs no repair because every exposed precoder set has already been
    projected.
    """
    half = real.region_halfwidth
    pos = np.clip(vars.positions, -half, half)
    k = real.n_users
    fixed = Variables(vars.precoders.copy(), np.zeros(k), pos)
    if not cfg.use_common:
        return fixed
    c = np.maximum(vars.common_split, 0.0)
    report = rates(real, fixed)
    budget = max(report.common_rate, 0.0)
    total = min(c.sum(), budget)
    deficit = np.maximum(cfg.r_th - report.private_rate_per_user, 0.0)
    need = deficit.sum()
    if need > budget:
        # cannot satisfy every threshold; spread the whole budget by deficit
        fixed.common_split = budget * deficit / need
        return fixed
    # cover deficits, then distribute the rest along the learned portions
    spend = max(total, min(need, budget))
    rest = spend - need
    extra = np.maximum(c - deficit, 0.0)
    weights = extra / extra.sum() if extra.sum() > 0.0 else np.full(k, 1.0 / k)
    fixed.common_split = deficit + rest * weights
    return fixed


def run(
    real: ChannelRealization,
    cfg: MetaConfig,
    seed: int = 0,
    init_vars: Optional[Variables] = None,
) -> tuple:
    """Full meta-optimization; returns (best Variables, OptimizerTrace).

    Deterministic for fixed (realization, config, seed).  Raises NumericFault
    if the loss leaves the reals.
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    nets = build_networks(real.n_users, cfg, rng)
    drawn = initial_variables(real, cfg, rng)
    init = drawn if init_vars is None else init_vars.copy()
    init.check_shapes(real)
    enabled = cfg.enabled_nets()
    lr = {"precoder": cfg.lr_precoder, "common": cfg.lr_common, "position": cfg.lr_position}

    trace = OptimizerTrace()
    best_viol = np.inf

    def consider(point: Variables):
        nonlocal best_viol
        candidate = repair_variables(real, point, cfg)
        report = rates(real, candidate, r_th=cfg.r_th, p_max=cfg.p_max)
        if report.feasible:
            if not trace.feasible_found or report.sum_rate > trace.best_report.sum_rate:
                trace.best_vars, trace.best_report = candidate, report
            trace.feasible_found = True
        elif not trace.feasible_found:
            v = report.violation_total()
            if v < best_viol:
                best_viol = v
                trace.fallback_vars, trace.fallback_report = candidate, report
        return report

    collect_positions = cfg.update_positions

    for epoch in range(cfg.epochs):
        params = {name: nets[name].lift() for name in enabled}
        loss_sum = None
        for outer in range(cfg.outer_iters):
            collected = [] if collect_positions else None
            gv = inner_cycle(real, init, nets, cfg, params=params, collect=collected)
            rg = rate_graph(real, gv)
            loss = meta_loss_graph(real, rg, gv, cfg)
            if not np.isfinite(loss.value):
                raise NumericFault(
                    f"meta-loss became non-finite at epoch {epoch}, outer iteration {outer}"
                )
            loss_sum = loss if loss_sum is None else ad.add(loss_sum, loss)

            if collected:
                for point in collected[:-1]:  # final point handled below
                    consider(point)
            report = consider(gv.values())
            trace.epoch_index.append(epoch)
            trace.outer_index.append(outer)
            trace.meta_loss.append(float(loss.value))
            trace.sum_rate.append(report.sum_rate)
            trace.best_sum_rate.append(
                trace.best_report.sum_rate if trace.feasible_found else np.nan
            )

        if enabled:
            mean_loss = ad.div(loss_sum, float(cfg.outer_iters))
            leaves = []
            for name in enabled:
                leaves.extend(SubNetwork.leaves(params[name]))
            grads = ad.backward(mean_loss, leaves)
            for idx, name in enumerate(enabled):
                g = grads[4 * idx : 4 * (idx + 1)]
                nets[name].apply_adam(
                    {"w1": g[0], "b1": g[1], "w2": g[2], "b2": g[3]}, lr[name]
                )

    best, _ = trace.result()
    return best, trace
