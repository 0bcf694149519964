"""Multipath field-response channel between fixed BS arrays and movable user antennas.

Geometry convention (nothing in the underlying model pins it, so it is fixed
here and configurable): BSs sit equally spaced on a ring around the origin,
users are dropped uniformly in a central disk.  Each BS has a half-wavelength
uniform linear array along x.  Every (BS, user) link gets its own set of
departure/arrival paths and a complex path-response matrix whose per-entry
variance follows a distance power law.

Under the far-field assumption only the *phases* of the receive paths depend
on the user's antenna position r, through

    rho_d(r) = x * cos(elev_d) * sin(azim_d) + y * sin(elev_d)

and the receive response entry exp(j * 2*pi/wavelength * rho_d(r)).  The
length-I channel vector of a link is (f(r)^T Sigma G)^T, where G stacks the
transmit responses of the I array elements.  The receive side is therefore
the only differentiable piece, and it is available both as plain numpy and as
tape nodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeError
from .cmatrix import CMatrix
from .errors import ConfigError

TWO_PI = 2.0 * np.pi


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt * 1000.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class ScenarioConfig:
    """Everything needed to draw one channel realization."""

    n_bs: int = 2
    n_users: int = 4
    n_antennas: int = 4          # per BS
    n_tx_paths: int = 6
    n_rx_paths: int = 6
    wavelength: float = 0.01     # meters
    noise_power: float = 1e-13   # watts over unit bandwidth (-100 dBm)
    pathloss_exp: float = 3.9
    ref_gain: float = 1e-4       # channel power gain at 1 m (-40 dB)
    region_halfwidth: Optional[float] = None  # defaults to one wavelength (A = 2*lambda)
    bs_ring_radius: float = 100.0
    user_disk_radius: float = 40.0
    diagonal_prm: bool = False

    def __post_init__(self):
        if self.region_halfwidth is None:
            self.region_halfwidth = self.wavelength

    def validate(self):
        for name in ("n_bs", "n_users", "n_antennas", "n_tx_paths", "n_rx_paths"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.wavelength <= 0:
            raise ConfigError(f"wavelength must be positive, got {self.wavelength}")
        if self.noise_power <= 0:
            raise ConfigError(f"noise_power must be positive, got {self.noise_power}")
        if self.region_halfwidth <= 0:
            raise ConfigError("region_halfwidth must be positive")
        if self.diagonal_prm and self.n_tx_paths != self.n_rx_paths:
            raise ConfigError("diagonal_prm needs n_tx_paths == n_rx_paths")


@dataclass
class PathSet:
    """Departure/arrival angles (radians) for one BS-user link."""

    tx_elev: np.ndarray
    tx_azim: np.ndarray
    rx_elev: np.ndarray
    rx_azim: np.ndarray

    @property
    def n_tx(self) -> int:
        return len(self.tx_elev)

    @property
    def n_rx(self) -> int:
        return len(self.rx_elev)


@dataclass
class ChannelRealization:
    """A sampled scenario plus cached per-link transmit-side responses.

    ``prm[n, k]`` is the (Q, L) path-response matrix, ``tx_frm[n, k]`` the
    (L, I) transmit response matrix, and ``rx_mix[n, k] = prm @ tx_frm`` the
    (Q, I) combination the receive response gets contracted against.
    """

    config: ScenarioConfig
    seed: int
    bs_xy: np.ndarray        # (N, 2)
    user_xy: np.ndarray      # (K, 2)
    tx_offsets: np.ndarray   # (I, 2), shared across BSs
    tx_elev: np.ndarray      # (N, K, L)
    tx_azim: np.ndarray
    rx_elev: np.ndarray      # (N, K, Q)
    rx_azim: np.ndarray
    prm: np.ndarray          # (N, K, Q, L) complex
    tx_frm: np.ndarray = field(default=None, repr=False)
    rx_mix: np.ndarray = field(default=None, repr=False)
    # receive-phase direction cosines, cached for vectorized evaluation
    _rx_a: np.ndarray = field(default=None, repr=False)
    _rx_b: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.tx_frm is None:
            self._build_caches()

    def _build_caches(self):
        cfg = self.config
        n, k = cfg.n_bs, cfg.n_users
        frm = np.empty((n, k, cfg.n_tx_paths, cfg.n_antennas), dtype=np.complex128)
        for i_n in range(n):
            for i_k in range(k):
                ps = self.path_set(i_n, i_k)
                for i_a in range(cfg.n_antennas):
                    frm[i_n, i_k, :, i_a] = transmit_frv(
                        ps, self.tx_offsets[i_a], cfg.wavelength
                    )
        self.tx_frm = frm
        self.rx_mix = np.einsum("nkql,nkli->nkqi", self.prm, frm)
        self._rx_a = np.cos(self.rx_elev) * np.sin(self.rx_azim)
        self._rx_b = np.sin(self.rx_elev)

    @property
    def n_bs(self) -> int:
        return self.config.n_bs

    @property
    def n_users(self) -> int:
        return self.config.n_users

    @property
    def n_antennas(self) -> int:
        return self.config.n_antennas

    @property
    def noise_power(self) -> float:
        return self.config.noise_power

    @property
    def region_halfwidth(self) -> float:
        return self.config.region_halfwidth

    def path_set(self, n: int, k: int) -> PathSet:
        self._check_index(n, k)
        return PathSet(
            tx_elev=self.tx_elev[n, k],
            tx_azim=self.tx_azim[n, k],
            rx_elev=self.rx_elev[n, k],
            rx_azim=self.rx_azim[n, k],
        )

    def _check_index(self, n: int, k: int):
        if not (0 <= n < self.n_bs and 0 <= k < self.n_users):
            raise ShapeError(f"link index ({n}, {k}) out of range")

    def distances(self) -> np.ndarray:
        """BS-to-user distances, shape (N, K)."""
        diff = self.bs_xy[:, None, :] - self.user_xy[None, :, :]
        return np.linalg.norm(diff, axis=-1)


def sample_scenario(config: ScenarioConfig, seed: int) -> ChannelRealization:
    """Draw a scenario. Deterministic for a fixed (config, seed)."""
    config.validate()
    rng = np.random.default_rng(seed)
    n, k = config.n_bs, config.n_users
    ll, q = config.n_tx_paths, config.n_rx_paths

    angles = TWO_PI * np.arange(n) / n
    bs_xy = config.bs_ring_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    radius = config.user_disk_radius * np.sqrt(rng.uniform(size=k))
    theta = rng.uniform(0.0, TWO_PI, size=k)
    user_xy = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)

    spacing = config.wavelength / 2.0
    xs = (np.arange(config.n_antennas) - (config.n_antennas - 1) / 2.0) * spacing
    tx_offsets = np.stack([xs, np.zeros_like(xs)], axis=1)

    half_pi = np.pi / 2.0
    tx_elev = rng.uniform(-half_pi, half_pi, size=(n, k, ll))
    tx_azim = rng.uniform(-half_pi, half_pi, size=(n, k, ll))
    rx_elev = rng.uniform(-half_pi, half_pi, size=(n, k, q))
    rx_azim = rng.uniform(-half_pi, half_pi, size=(n, k, q))

    dist = np.linalg.norm(bs_xy[:, None, :] - user_xy[None, :, :], axis=-1)
    var = config.ref_gain * dist ** (-config.pathloss_exp) / config.n_tx_paths  # (N, K)
    std = np.sqrt(var / 2.0)
    if config.diagonal_prm:
        diag = std[:, :, None] * (
            rng.standard_normal((n, k, ll)) + 1j * rng.standard_normal((n, k, ll))
        )
        prm = np.zeros((n, k, q, ll), dtype=np.complex128)
        idx = np.arange(ll)
        prm[:, :, idx, idx] = diag
    else:
        prm = std[:, :, None, None] * (
            rng.standard_normal((n, k, q, ll)) + 1j * rng.standard_normal((n, k, q, ll))
        )

    return ChannelRealization(
        config=config,
        seed=seed,
        bs_xy=bs_xy,
        user_xy=user_xy,
        tx_offsets=tx_offsets,
        tx_elev=tx_elev,
        tx_azim=tx_azim,
        rx_elev=rx_elev,
        rx_azim=rx_azim,
        prm=prm,
    )


def _phase_coeffs(elev: np.ndarray, azim: np.ndarray):
    # rho(pos) = pos_x * a + pos_y * b per path
    return np.cos(elev) * np.sin(azim), np.sin(elev)


def transmit_frv(paths: PathSet, t, wavelength: float) -> np.ndarray:
    """Unit-modulus transmit response of one antenna at offset ``t``."""
    if wavelength <= 0:
        raise ConfigError(f"wavelength must be positive, got {wavelength}")
    t = np.asarray(t, dtype=np.float64)
    a, b = _phase_coeffs(paths.tx_elev, paths.tx_azim)
    rho = t[0] * a + t[1] * b
    return np.exp(1j * (TWO_PI / wavelength) * rho)


def receive_frv(paths: PathSet, r, wavelength: float):
    """Unit-modulus receive response at antenna position ``r``.

    Accepts either a plain length-2 array (returns a complex ndarray) or a
    length-2 tape node (returns a CMatrix differentiable w.r.t. ``r``).
    """
    if wavelength <= 0:
        raise ConfigError(f"wavelength must be positive, got {wavelength}")
    a, b = _phase_coeffs(paths.rx_elev, paths.rx_azim)
    scale = TWO_PI / wavelength
    if isinstance(r, Node):
        if r.shape != (2,):
            raise ShapeError(f"position node must have shape (2,), got {r.shape}")
        x, y = ad.getitem(r, 0), ad.getitem(r, 1)
        arg = ad.mul(ad.add(ad.mul(x, a), ad.mul(y, b)), scale)
        return CMatrix(ad.cos(arg), ad.sin(arg))
    r = np.asarray(r, dtype=np.float64)
    return np.exp(1j * scale * (r[0] * a + r[1] * b))


def channel_vector(real: ChannelRealization, n: int, k: int, r):
    """Length-I channel of link (n, k) with user antenna at ``r``.

    h = (f(r)^T Sigma G)^T.  Returns a complex ndarray for an ndarray ``r``
    and a CMatrix (differentiable in ``r``) for a tape-node ``r``.
    """
    real._check_index(n, k)
    mix = real.rx_mix[n, k]  # (Q, I), Sigma @ G
    if isinstance(r, Node):
        f = receive_frv(real.path_set(n, k), r, real.config.wavelength)
        # plain transpose product, no conjugation
        re = ad.sub(ad.matmul(f.re, mix.real), ad.matmul(f.im, mix.imag))
        im = ad.add(ad.matmul(f.re, mix.imag), ad.matmul(f.im, mix.real))
        return CMatrix(re, im)
    f = receive_frv(real.path_set(n, k), r, real.config.wavelength)
    return f @ mix


def channel_all(real: ChannelRealization, positions: np.ndarray) -> np.ndarray:
    """All link channels at once, shape (N, K, I); vectorized value path."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (real.n_users, 2):
        raise ShapeError(f"positions must be (K, 2), got {positions.shape}")
    scale = TWO_PI / real.config.wavelength
    rho = (
        positions[None, :, 0, None] * real._rx_a
        + positions[None, :, 1, None] * real._rx_b
    )  # (N, K, Q)
    f = np.exp(1j * scale * rho)
    return np.einsum("nkq,nkqi->nki", f, real.rx_mix)


def dump_scenario(real: ChannelRealization, path: str):
    """Write a realization to a structured text (JSON) file."""
    cfg = real.config
    payload = {
        "format": "comprsma-scenario-v1",
        "seed": real.seed,
        "config": {
            "n_bs": cfg.n_bs,
            "n_users": cfg.n_users,
            "n_antennas": cfg.n_antennas,
            "n_tx_paths": cfg.n_tx_paths,
            "n_rx_paths": cfg.n_rx_paths,
            "wavelength": cfg.wavelength,
            "noise_power": cfg.noise_power,
            "pathloss_exp": cfg.pathloss_exp,
            "ref_gain": cfg.ref_gain,
            "region_halfwidth": cfg.region_halfwidth,
            "bs_ring_radius": cfg.bs_ring_radius,
            "user_disk_radius": cfg.user_disk_radius,
            "diagonal_prm": cfg.diagonal_prm,
        },
        "bs_xy": real.bs_xy.tolist(),
        "user_xy": real.user_xy.tolist(),
        "tx_offsets": real.tx_offsets.tolist(),
        "tx_elev": real.tx_elev.tolist(),
        "tx_azim": real.tx_azim.tolist(),
        "rx_elev": real.rx_elev.tolist(),
        "rx_azim": real.rx_azim.tolist(),
        "prm_re": real.prm.real.tolist(),
        "prm_im": real.prm.imag.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_scenario(path: str) -> ChannelRealization:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != "comprsma-scenario-v1":
        raise ConfigError(f"unrecognized scenario file format in {path}")
    cfg = ScenarioConfig(**payload["config"])
    cfg.validate()
    prm = np.asarray(payload["prm_re"], dtype=np.float64) + 1j * np.asarray(
        payload["prm_im"], dtype=np.float64
    )
    return ChannelRealization(
        config=cfg,
        seed=payload["seed"],
        bs_xy=np.asarray(payload["bs_xy"], dtype=np.float64),
        user_xy=np.asarray(payload["user_xy"], dtype=np.float64),
        tx_offsets=np.asarray(payload["tx_offsets"], dtype=np.float64),
        tx_elev=np.asarray(payload["tx_elev"], dtype=np.float64),
        tx_azim=np.asarray(payload["tx_azim"], dtype=np.float64),
        rx_elev=np.asarray(payload["rx_elev"], dtype=np.float64),
        rx_azim=np.asarray(payload["rx_azim"], dtype=np.float64),
        prm=prm,
    )
