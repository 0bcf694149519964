"""SINRs, rates, the sum-rate objective and constraint checks.

Everything exists twice, deliberately:

* a vectorized numpy *value* path (`rates`, `sdma_rates`, `feasibility`) used
  by reports, oracles and the experiment harness, and
* a tape *graph* path (`rate_graph`, `sum_rate_gradients`) used wherever
  gradients are needed.

Tests pin the two paths to each other and the graph path to finite
differences.

Conventions: stream 0 of each BS precoding matrix is the common stream,
streams 1..K the per-user private streams.  The common-stream SINR
denominator contains *all* private streams, including the user's own; the
private-stream denominator excludes the user's own stream and measures all
interference through the victim user's channel.  Both numerators combine
BS amplitudes coherently; denominators add per-BS stream powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError
from .cmatrix import CMatrix, hconj_vecmat
from .channel import ChannelRealization, channel_all, channel_vector

_LN2 = float(np.log(2.0))


@dataclass
class Variables:
    """One optimization point: precoders, common-rate split, antenna positions.

    precoders: complex (N, I, K+1), column 0 the common stream (sqrt-watts)
    common_split: (K,) portions of the common rate, bps/Hz
    positions: (K, 2) user antenna positions, meters
    """

    precoders: np.ndarray
    common_split: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.precoders = np.asarray(self.precoders, dtype=np.complex128)
        self.common_split = np.asarray(self.common_split, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64)

    @property
    def n_bs(self) -> int:
        return self.precoders.shape[0]

    @property
    def n_users(self) -> int:
        return len(self.common_split)

    def check_shapes(self, real: ChannelRealization):
        n, i, k = real.n_bs, real.n_antennas, real.n_users
        if self.precoders.shape != (n, i, k + 1):
            raise ShapeError(
                f"precoders must be (N, I, K+1)={(n, i, k + 1)}, got {self.precoders.shape}"
            )
        if self.common_split.shape != (k,):
            raise ShapeError(f"common_split must be ({k},), got {self.common_split.shape}")
        if self.positions.shape != (k, 2):
            raise ShapeError(f"positions must be ({k}, 2), got {self.positions.shape}")

    def power_per_bs(self) -> np.ndarray:
        return np.sum(np.abs(self.precoders) ** 2, axis=(1, 2))

    def copy(self) -> "Variables":
        return Variables(
            self.precoders.copy(), self.common_split.copy(), self.positions.copy()
        )


@dataclass
class RateReport:
    """Per-user and aggregate rates, plus (optional) constraint assessment.

    Violation magnitudes are signed: positive means violated by that much.
    """

    common_sinr: np.ndarray          # (K,)
    private_sinr: np.ndarray         # (K,)
    common_rate_per_user: np.ndarray # (K,) decode rate of the common stream
    private_rate_per_user: np.ndarray
    common_split: np.ndarray         # (K,) c_k
    user_rate: np.ndarray            # (K,) private + split
    common_rate: float               # min over users
    sum_rate: float
    power_per_bs: np.ndarray         # (N,)
    # feasibility block, filled when thresholds are supplied
    r_th: Optional[float] = None
    p_max: Optional[np.ndarray] = None
    power_violation: Optional[np.ndarray] = None   # (N,) tr - p_max
    qos_violation: Optional[np.ndarray] = None     # (K,) r_th - user_rate
    split_negativity: Optional[np.ndarray] = None  # (K,) -c_k
    split_budget_violation: Optional[float] = None # sum c - common_rate
    box_violation: Optional[np.ndarray] = None     # (K,) worst coordinate overshoot
    feasible: Optional[bool] = None

    def violation_total(self) -> float:
        """Sum of positive violation magnitudes (0 when feasible)."""
        if self.feasible is None:
            raise ValueError("feasibility was not assessed for this report")
        parts = [
            np.maximum(self.power_violation, 0.0).sum(),
            np.maximum(self.qos_violation, 0.0).sum(),
            np.maximum(self.split_negativity, 0.0).sum(),
            max(self.split_budget_violation, 0.0),
            np.maximum(self.box_violation, 0.0).sum(),
        ]
        return float(sum(parts))


def _amplitudes(real: ChannelRealization, vars: Variables) -> np.ndarray:
    """Per-BS stream amplitudes h_{n,k}^H p_{s,n}, shape (N, K, K+1)."""
    h = channel_all(real, vars.positions)  # (N, K, I)
    return np.einsum("nki,nis->nks", h.conj(), vars.precoders)


def _sinrs(real: ChannelRealization, vars: Variables):
    amp = _amplitudes(real, vars)
    k = real.n_users
    coherent = amp.sum(axis=0)  # (K, K+1)
    incoh = np.abs(amp) ** 2    # (N, K, K+1)
    private_total = incoh[:, :, 1:].sum(axis=(0, 2))             # (K,)
    own = incoh[:, np.arange(k), 1 + np.arange(k)].sum(axis=0)  # (K,) own stream power
    noise = real.noise_power
    common = np.abs(coherent[:, 0]) ** 2 / (private_total + noise)
    private_num = np.abs(coherent[np.arange(k), 1 + np.arange(k)]) ** 2
    private = private_num / (private_total - own + noise)
    return common, private


def common_sinr(real: ChannelRealization, vars: Variables, k: int) -> float:
    """SINR when user k decodes the common stream."""
    vars.check_shapes(real)
    real._check_index(0, k)
    return float(_sinrs(real, vars)[0][k])


def private_sinr(real: ChannelRealization, vars: Variables, k: int) -> float:
    """SINR when user k decodes its private stream (common already removed)."""
    vars.check_shapes(real)
    real._check_index(0, k)
    return float(_sinrs(real, vars)[1][k])


def rates(
    real: ChannelRealization,
    vars: Variables,
    r_th: Optional[float] = None,
    p_max=None,
) -> RateReport:
    """Full rate report; assesses feasibility when r_th and p_max are given."""
    vars.check_shapes(real)
    lc, lp = _sinrs(real, vars)
    r_ck = np.log2(1.0 + lc)
    r_pk = np.log2(1.0 + lp)
    r_c = float(np.min(r_ck))
    user = r_pk + vars.common_split
    report = RateReport(
        common_sinr=lc,
        private_sinr=lp,
        common_rate_per_user=r_ck,
        private_rate_per_user=r_pk,
        common_split=vars.common_split.copy(),
        user_rate=user,
        common_rate=r_c,
        sum_rate=float(user.sum()),
        power_per_bs=vars.power_per_bs(),
    )
    if r_th is not None and p_max is not None:
        _assess(report, vars, real, r_th, p_max)
    return report


def feasibility(
    real: ChannelRealization, vars: Variables, r_th: float, p_max
) -> RateReport:
    """Rate report with all constraint flags and violation magnitudes."""
    return rates(real, vars, r_th=r_th, p_max=p_max)


def _assess(report: RateReport, vars: Variables, real, r_th: float, p_max):
    p_max = np.broadcast_to(np.asarray(p_max, dtype=np.float64), (real.n_bs,)).copy()
    half = real.region_halfwidth
    report.r_th = float(r_th)
    report.p_max = p_max
    report.power_violation = report.power_per_bs - p_max
    report.qos_violation = r_th - report.user_rate
    report.split_negativity = -vars.common_split
    report.split_budget_violation = float(vars.common_split.sum() - report.common_rate)
    report.box_violation = np.max(np.abs(vars.positions), axis=1) - half
    power_ok = np.all(report.power_violation <= 1e-9 * np.maximum(p_max, 1e-300))
    qos_ok = np.all(report.qos_violation <= 1e-9)
    split_ok = np.all(report.split_negativity <= 1e-12)
    budget_ok = report.split_budget_violation <= 1e-9
    box_ok = np.all(report.box_violation <= 1e-12)
    report.feasible = bool(power_ok and qos_ok and split_ok and budget_ok and box_ok)


def sdma_rates(real: ChannelRealization, vars: Variables) -> RateReport:
    """Rates for spatial multiplexing only: no common stream, no rate split.

    Accepts a Variables whose common column/split are zero (they are ignored).
    """
    vars.check_shapes(real)
    h = channel_all(real, vars.positions)
    amp = np.einsum("nki,nis->nks", h.conj(), vars.precoders[:, :, 1:])  # (N, K, K)
    k = real.n_users
    coherent = amp.sum(axis=0)
    incoh = np.abs(amp) ** 2
    total = incoh.sum(axis=(0, 2))
    own = incoh[:, np.arange(k), np.arange(k)].sum(axis=0)
    lp = np.abs(coherent[np.arange(k), np.arange(k)]) ** 2 / (
        total - own + real.noise_power
    )
    r_pk = np.log2(1.0 + lp)
    zeros = np.zeros(k)
    return RateReport(
        common_sinr=zeros.copy(),
        private_sinr=lp,
        common_rate_per_user=zeros.copy(),
        private_rate_per_user=r_pk,
        common_split=zeros.copy(),
        user_rate=r_pk.copy(),
        common_rate=0.0,
        sum_rate=float(r_pk.sum()),
        power_per_bs=vars.power_per_bs(),
    )


# ---------------------------------------------------------------------------
# graph path


@dataclass
class GraphVars:
    """Tape-node mirror of Variables used while building gradients."""

    precoders: list          # N CMatrix, each (I, K+1)
    common_split: Node       # (K,)
    positions: Node          # (K, 2)

    def values(self) -> Variables:
        p = np.stack([cm.value() for cm in self.precoders])
        return Variables(p, self.common_split.value.copy(), self.positions.value.copy())


@dataclass
class RateGraph:
    """Rate quantities as tape nodes."""

    common_sinr: list
    private_sinr: list
    common_rate_per_user: Node  # (K,)
    private_rate_per_user: Node
    common_rate: Node
    user_rate: Node             # (K,)
    sum_rate: Node


def lift_variables(vars: Variables) -> GraphVars:
    """Turn a value point into fresh tape leaves."""
    pre = [
        CMatrix(vars.precoders[n].real.copy(), vars.precoders[n].imag.copy())
        for n in range(vars.n_bs)
    ]
    return GraphVars(
        precoders=pre,
        common_split=Node(vars.common_split.copy()),
        positions=Node(vars.positions.copy()),
    )


def variable_leaves(gv: GraphVars) -> list:
    leaves = []
    for cm in gv.precoders:
        leaves.extend([cm.re, cm.im])
    leaves.append(gv.common_split)
    leaves.append(gv.positions)
    return leaves


def rate_graph(real: ChannelRealization, gv: GraphVars) -> RateGraph:
    """Differentiable evaluation of all rate quantities at a graph point."""
    n_bs, k_users = real.n_bs, real.n_users
    noise = real.noise_power
    r_ck, r_pk, l_c, l_p = [], [], [], []
    for k in range(k_users):
        r_k = ad.getitem(gv.positions, k)
        coherent = None
        incoh = None
        for n in range(n_bs):
            h = channel_vector(real, n, k, r_k)
            amp = hconj_vecmat(h, gv.precoders[n])  # (K+1,) complex
            coherent = amp if coherent is None else coherent + amp
            p = amp.abs2()
            incoh = p if incoh is None else ad.add(incoh, p)
        private_total = ad.vsum(ad.getitem(incoh, slice(1, None)))
        own = ad.getitem(incoh, 1 + k)
        num_c = coherent[0].abs2()
        num_p = coherent[1 + k].abs2()
        lam_c = ad.div(num_c, ad.add(private_total, noise))
        lam_p = ad.div(num_p, ad.add(ad.sub(private_total, own), noise))
        l_c.append(lam_c)
        l_p.append(lam_p)
        r_ck.append(ad.log2(ad.add(lam_c, 1.0)))
        r_pk.append(ad.log2(ad.add(lam_p, 1.0)))
    r_ck_vec = ad.stack_scalars(r_ck)
    r_pk_vec = ad.stack_scalars(r_pk)
    user = ad.add(r_pk_vec, gv.common_split)
    return RateGraph(
        common_sinr=l_c,
        private_sinr=l_p,
        common_rate_per_user=r_ck_vec,
        private_rate_per_user=r_pk_vec,
        common_rate=ad.vmin(r_ck_vec),
        user_rate=user,
        sum_rate=ad.vsum(user),
    )


def sum_rate_gradients(real: ChannelRealization, vars: Variables) -> dict:
    """Tape gradients of the sum rate at a value point.

    Returns ``{"precoders": (N, I, K+1) complex, "common": (K,),
    "positions": (K, 2), "sum_rate": float}`` where the complex precoder
    entry packs d/d(re) + 1j * d/d(im).
    """
    vars.check_shapes(real)
    gv = lift_variables(vars)
    rg = rate_graph(real, gv)
    leaves = variable_leaves(gv)
    grads = ad.backward(rg.sum_rate, leaves)
    n = vars.n_bs
    g_pre = np.empty_like(vars.precoders)
    for i in range(n):
        g_pre[i] = grads[2 * i] + 1j * grads[2 * i + 1]
    return {
        "precoders": g_pre,
        "common": grads[2 * n],
        "positions": grads[2 * n + 1],
        "sum_rate": float(rg.sum_rate.value),
    }
