"""Command-line front end.

Verbs: ``run`` (single configuration), ``sweep`` (axis sweep), ``oracle``
(projected-gradient oracle only), ``check`` (fast invariant suite).  Values
from a ``--config`` file override built-in defaults; explicit flags override
the file.  Exit codes: 0 success, 2 configuration error, 3 every trial hit a
numeric fault.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace

import numpy as np

from .baselines import ALL_KINDS, BenchmarkKind
from .channel import ScenarioConfig, dbm_to_watt, sample_scenario
from .errors import ConfigError
from .harness import AXES, ExperimentSpec, format_summary, run_experiment, summarize
from .meta import MetaConfig

_SCENARIO_KEYS = {
    "n_bs": int,
    "n_users": int,
    "n_antennas": int,
    "n_tx_paths": int,
    "n_rx_paths": int,
    "wavelength": float,
    "noise_dbm": float,        # converted to noise_power
    "pathloss_exp": float,
    "ref_gain_db": float,      # converted to ref_gain
    "region_halfwidth": float,
    "bs_ring_radius": float,
    "user_disk_radius": float,
    "diagonal_prm": bool,
}

_META_KEYS = {
    "inner_iters": int,
    "outer_iters": int,
    "epochs": int,
    "lr_precoder": float,
    "lr_common": float,
    "lr_position": float,
    "zeta_qos": float,
    "zeta_split_nonneg": float,
    "zeta_split_budget": float,
    "zeta_box": float,
    "penalty_mode": str,
    "r_th": float,
    "power_dbm": float,        # converted to p_max
    "precoder_hidden": int,
    "common_hidden": int,
    "position_hidden": int,
    "position_step_scale": float,
    "normalize_position_feed": bool,
    "init_mode": str,
}

_EXPERIMENT_KEYS = {
    "axis": str,
    "values": str,
    "trials": int,
    "kinds": str,
    "seed": int,
    "workers": int,
    "out": str,
    "timing": bool,
    "oracle_starts": int,
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values = {}
    try:
        fh = open(path)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _typed(key: str, raw, caster):
    if isinstance(raw, str):
        try:
            return _parse_bool(raw) if caster is bool else caster(raw)
        except (ValueError, ConfigError) as e:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({e})") from None
    return raw


def build_spec(file_values: dict, overrides: dict) -> ExperimentSpec:
    """Defaults < config file < CLI flags."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})

    scenario = ScenarioConfig()
    meta = MetaConfig()
    spec = ExperimentSpec(scenario=scenario, meta=meta)

    for key, raw in merged.items():
        if key in _SCENARIO_KEYS:
            val = _typed(key, raw, _SCENARIO_KEYS[key])
            if key == "noise_dbm":
                scenario.noise_power = dbm_to_watt(val)
            elif key == "ref_gain_db":
                scenario.ref_gain = 10.0 ** (val / 10.0)
            else:
                setattr(scenario, key, val)
        elif key in _META_KEYS:
            val = _typed(key, raw, _META_KEYS[key])
            if key == "power_dbm":
                meta.p_max = dbm_to_watt(val)
            else:
                setattr(meta, key, val)
        elif key in _EXPERIMENT_KEYS:
            val = _typed(key, raw, _EXPERIMENT_KEYS[key])
            if key == "values":
                spec.values = _parse_values(val)
            elif key == "kinds":
                spec.kinds = _parse_kinds(val)
            elif key == "seed":
                spec.master_seed = val
            else:
                setattr(spec, key, val)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    if scenario.region_halfwidth is None:
        scenario.region_halfwidth = scenario.wavelength
    return spec


def _parse_values(text) -> list:
    if isinstance(text, list):
        return text
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if part:
            out.append(float(part))
    return out


def _parse_kinds(text) -> list:
    if isinstance(text, list):
        return text
    return [BenchmarkKind.parse(p) for p in str(text).split(",") if p.strip()]


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
    p.add_argument("--kinds", help="comma list, e.g. rsma-ma,sdma-fpa")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--epochs", type=int, help="meta-optimizer epochs")
    p.add_argument("--timing", action="store_true", default=None,
                   help="write measured wall_ms (breaks byte determinism)")
    p.add_argument("--full", action="store_true",
                   help="use the full 150-trial count")


def _spec_from_args(args, axis=None) -> ExperimentSpec:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "kinds": args.kinds,
        "out": args.out,
        "workers": args.workers,
        "epochs": args.epochs,
        "timing": args.timing,
    }
    if axis is not None:
        overrides["axis"] = axis
    if getattr(args, "values", None):
        overrides["values"] = args.values
    if getattr(args, "starts", None):
        overrides["oracle_starts"] = args.starts
    spec = build_spec(file_values, overrides)
    if args.full:
        spec.trials = 150
    return spec


def _finish(rows, spec) -> int:
    print(format_summary(summarize(rows)))
    if spec.out:
        print(f"wrote {len(rows)} rows to {spec.out}")
    if all(r.failed for r in rows):
        print("error: every trial hit a numeric fault", file=sys.stderr)
        return 3
    return 0


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    if spec.axis != "none":
        raise ConfigError("'run' takes no sweep axis; use 'sweep'")
    return _finish(run_experiment(spec), spec)


def cmd_sweep(args) -> int:
    spec = _spec_from_args(args, axis=args.axis)
    if spec.axis == "none":
        raise ConfigError("'sweep' needs --axis and --values")
    return _finish(run_experiment(spec), spec)


def cmd_oracle(args) -> int:
    spec = _spec_from_args(args)
    return _finish(run_experiment(spec, oracle=True), spec)


def cmd_check(args) -> int:
    from .checks import quick_check

    return 0 if quick_check(verbose=True) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="comprsma",
        description="Movable-antenna CoMP-RSMA sum-rate simulator",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="single-configuration Monte Carlo run")
    _add_common_flags(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--axis", choices=[a for a in AXES if a != "none"], required=False)
    p_sweep.add_argument("--values", help="comma list of axis values")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_oracle = sub.add_parser("oracle", help="run the projected-gradient oracle")
    _add_common_flags(p_oracle)
    p_oracle.add_argument("--starts", type=int, help="oracle restarts per trial")
    p_oracle.set_defaults(fn=cmd_oracle)

    p_check = sub.add_parser("check", help="fast invariant self-test")
    p_check.set_defaults(fn=cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
