"""Fast self-test used by the ``check`` CLI verb.

Runs a reduced cut of the main invariants in a few seconds; the full suite
lives in the test tree.
"""

from __future__ import annotations

import numpy as np

from .channel import ScenarioConfig, channel_all, receive_frv, sample_scenario, transmit_frv
from .meta import MetaConfig, initial_variables, project_power
from .rates import Variables, rates, sdma_rates, sum_rate_gradients


def _gradcheck(real, vars, h=1e-6, tol=1e-4) -> float:
    g = sum_rate_gradients(real, vars)
    worst = 0.0

    def f(v):
        return rates(real, v).sum_rate

    rng = np.random.default_rng(0)
    # spot-check a handful of coordinates from each block
    for _ in range(6):
        n = rng.integers(real.n_bs)
        i = rng.integers(real.n_antennas)
        s = rng.integers(real.n_users + 1)
        for part, pick in ((1.0, np.real), (1j, np.imag)):
            vp, vm = vars.copy(), vars.copy()
            vp.precoders[n, i, s] += part * h
            vm.precoders[n, i, s] -= part * h
            fd = (f(vp) - f(vm)) / (2 * h)
            ad = pick(g["precoders"][n, i, s])
            worst = max(worst, abs(ad - fd) / max(abs(fd), 1e-10))
    for k in range(real.n_users):
        for d in range(2):
            vp, vm = vars.copy(), vars.copy()
            vp.positions[k, d] += h
            vm.positions[k, d] -= h
            fd = (f(vp) - f(vm)) / (2 * h)
            worst = max(worst, abs(g["positions"][k, d] - fd) / max(abs(fd), 1e-10))
    return worst


def quick_check(verbose: bool = False) -> bool:
    """True when every fast invariant holds."""
    results = []

    def record(name, ok, detail=""):
        results.append((name, ok))
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}{f'  ({detail})' if detail else ''}")

    cfg = ScenarioConfig(n_bs=2, n_users=2, n_antennas=2)
    real = sample_scenario(cfg, 0)
    rng = np.random.default_rng(1)

    # unit-modulus responses
    ps = real.path_set(0, 0)
    fr = transmit_frv(ps, [0.003, -0.001], cfg.wavelength)
    rr = receive_frv(ps, [0.002, 0.004], cfg.wavelength)
    mod_err = max(np.abs(np.abs(fr) - 1).max(), np.abs(np.abs(rr) - 1).max())
    record("field responses unit modulus", mod_err < 1e-12, f"err={mod_err:.1e}")

    # tape gradients against finite differences
    mc = MetaConfig()
    vars = initial_variables(real, mc, rng)
    vars.common_split = rng.uniform(0.0, 0.3, real.n_users)
    vars.positions = 1e-3 * rng.standard_normal((real.n_users, 2))
    worst = _gradcheck(real, vars)
    record("tape gradients vs finite differences", worst < 1e-4, f"rel={worst:.1e}")

    # power projection
    ok = True
    for _ in range(100):
        p = rng.standard_normal((2, 2, 3)) + 1j * rng.standard_normal((2, 2, 3))
        p *= rng.uniform(0.1, 10.0)
        q = project_power(p, mc.p_max)
        tr = np.sum(np.abs(q) ** 2, axis=(1, 2))
        ok &= bool(np.all(tr <= mc.p_max * (1 + 1e-9)))
    record("power projection respects budget", ok)

    # RSMA with zero common parts reduces to SDMA
    worst = 0.0
    for _ in range(10):
        v = initial_variables(real, mc, rng)
        v.precoders[:, :, 0] = 0.0
        v.common_split[:] = 0.0
        v.positions = rng.uniform(-cfg.region_halfwidth, cfg.region_halfwidth, (2, 2))
        a = rates(real, v)
        b = sdma_rates(real, v)
        worst = max(worst, np.abs(a.user_rate - b.user_rate).max(), abs(a.sum_rate - b.sum_rate))
    record("RSMA reduces to SDMA at zero common", worst < 1e-12, f"err={worst:.1e}")

    # determinism of sampling
    r2 = sample_scenario(cfg, 0)
    same = np.array_equal(real.prm, r2.prm) and np.array_equal(real.user_xy, r2.user_xy)
    record("scenario sampling deterministic", same)

    return all(ok for _, ok in results)
