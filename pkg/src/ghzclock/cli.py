"""Command-line front end: sweeps, bounds, clock runs, and oracle verification.

Commands write delimited output with a manifest of every resolved parameter,
and render companion figures unless --no-figures is given.  Exit codes:
0 success, 1 usage error, 2 verification failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .clock import (
    CA_PLUS_PRESET,
    LOModel,
    ServoConfig,
    allan_deviation,
    detect_fringe_hops,
    adev_prediction,
    run_clock,
)
from .protocols import PROTOCOL_KINDS, ProtocolSpec, make_estimator, phase_uncertainty_closed
from .sensitivity import BoundSet, bounds, sweep_vs_N
from .spin import EnsembleParams
from .verify import run_verification

WORKERS_ENV = "GHZCLOCK_WORKERS"

PRESETS = {
    "ca+": dict(CA_PLUS_PRESET),
    "generic": {
        "gamma_decay": 1.0,
        "gamma_dephase": 0.0,
        "carrier": CA_PLUS_PRESET["carrier"],
        "coherence_time": 7.5,
        "noise_kind": "flicker",
    },
}


class UsageError(Exception):
    pass


class VerificationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(value) -> str:
    """17-significant-digit text, scientific below 1e-3, locale-free."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if v != 0.0 and abs(v) < 1e-3:
            return f"{v:.17e}"
        return f"{v:.17g}"
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_manifest(path, entries: dict):
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(entries):
            fh.write(f"{key} = {fmt(entries[key])}\n")


def parse_config(path) -> dict:
    """Flat key = value file; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        val = val.strip("\"'")
        for caster in (int, float):
            try:
                values[key] = caster(val)
                break
            except ValueError:
                continue
        else:
            values[key] = val
    return values


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}")


def _parse_n_range(text) -> list[int]:
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(n) for n in text.split(",")]
    except ValueError:
        raise UsageError(f"bad --n-range {text!r}; expected a:b or comma list")


def _resolve(args, config: dict, key: str, default=None):
    """CLI flag > config-file value > preset value > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    preset = getattr(args, "preset", None)
    if preset:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
        if key in PRESETS[preset]:
            return PRESETS[preset][key]
    return default


def build_parser() -> _Parser:
    parser = _Parser(prog="ghzclock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--preset", help="named parameter preset (ca+, generic)")
    common.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub.add_parser("sweep", parents=[common], help="optimal sensitivity ratios over N")
    p.add_argument("--protocols", help="comma list of protocol kinds", default=None)
    p.add_argument("--n-range", help="a:b inclusive range or comma list", default=None)
    p.add_argument("--gamma-decay", type=float, default=None)
    p.add_argument("--gamma-dephase", type=float, default=None)
    p.add_argument("--tau", type=float, default=None, help="total averaging time (s)")
    p.add_argument("--out", required=True, help="output csv path")

    p = sub.add_parser("clock", parents=[common], help="closed-loop Monte-Carlo clock runs")
    p.add_argument("--protocol", default=None, choices=PROTOCOL_KINDS)
    p.add_argument("--n", type=int, default=None, help="atom number")
    p.add_argument("--T", type=float, default=None, help="interrogation time (s)")
    p.add_argument("--cycles", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gamma-decay", type=float, default=None)
    p.add_argument("--gamma-dephase", type=float, default=None)
    p.add_argument("--twist-mu", type=float, default=None)
    p.add_argument("--primary-gain", type=float, default=None)
    p.add_argument("--integral-gain", type=float, default=None)
    p.add_argument("--noise-kind", default=None, choices=("flicker", "white", "none"))
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("bounds", parents=[common], help="sensitivity landmarks per N")
    p.add_argument("--n-range", default=None)
    p.add_argument("--gamma-decay", type=float, default=None)
    p.add_argument("--gamma-dephase", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", parents=[common], help="closed forms vs brute-force oracle")
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--draws", type=int, default=50)
    p.add_argument("--out", default=None, help="optional csv report path")
    return parser


def cmd_sweep(args, config) -> int:
    kinds_text = _resolve(args, config, "protocols", "css,parity_ghz,linear_ghz,heralded_ghz,sss")
    kinds = [k.strip() for k in str(kinds_text).split(",") if k.strip()]
    for kind in kinds:
        if kind not in PROTOCOL_KINDS:
            raise UsageError(f"unknown protocol {kind!r}")
    n_values = _parse_n_range(str(_resolve(args, config, "n-range", "2:20")))
    gamma_decay = float(_resolve(args, config, "gamma-decay", PRESETS["generic"]["gamma_decay"]))
    gamma_dephase = float(_resolve(args, config, "gamma-dephase", 0.0))
    tau = float(_resolve(args, config, "tau", 1.0))

    workers = _workers()
    if workers > 1 and len(n_values) > 1:
        chunks = [(kinds, [n], gamma_decay, gamma_dephase, tau) for n in n_values]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [row for part in pool.map(_sweep_worker, chunks) for row in part]
    else:
        rows = sweep_vs_N(kinds, n_values, gamma_decay, gamma_dephase, tau)

    out = Path(args.out)
    write_csv(
        out,
        ["n_atoms", "protocol", "t_min_s", "delta_omega_ratio", "converged"],
        [(r.n_atoms, r.protocol, r.t_min, r.delta_omega_ratio, r.converged) for r in rows],
    )
    write_manifest(out.with_suffix(".manifest.txt"), {
        "command": "sweep", "protocols": ",".join(kinds),
        "n_values": ",".join(map(str, n_values)),
        "gamma_decay": gamma_decay, "gamma_dephase": gamma_dephase, "tau": tau,
        "workers": workers,
    })
    if not args.no_figures:
        from . import plots

        plots.sweep_figure(rows, out.with_suffix(".png"))
    return 0


def _sweep_worker(chunk):
    return sweep_vs_N(*chunk)


def _clock_worker(payload):
    (run_idx, kind, n, gamma_decay, gamma_dephase, twist_mu, T, cycles,
     seed, noise_kind, coherence_time, flicker_floor, carrier, gains) = payload
    params = EnsembleParams(n, gamma_decay, gamma_dephase)
    spec = ProtocolSpec(kind, params, twist_mu=twist_mu)
    est = make_estimator(spec, T)
    lo = LOModel(noise_kind, flicker_floor=flicker_floor, coherence_time=coherence_time, carrier=carrier)
    servo = ServoConfig(*gains)
    trace = run_clock(spec, est, lo, servo, T, cycles, seed=[seed, run_idx])
    k_max = max(1, cycles // 100)
    ks = np.unique(np.round(np.geomspace(1, k_max, 24)).astype(int))
    allan = allan_deviation(trace, ks * T)
    _, hop_cycles = detect_fringe_hops(trace)
    return run_idx, allan, trace.discard_fraction(), hop_cycles


def cmd_clock(args, config) -> int:
    kind = str(_resolve(args, config, "protocol", "heralded_ghz"))
    n = int(_resolve(args, config, "n", 4))
    gamma_decay = float(_resolve(args, config, "gamma-decay", PRESETS["ca+"]["gamma_decay"]))
    gamma_dephase = float(_resolve(args, config, "gamma-dephase", 0.0))
    T = float(_resolve(args, config, "T", 0.11))
    cycles = int(_resolve(args, config, "cycles", 100_000))
    runs = int(_resolve(args, config, "runs", 10))
    seed = _resolve(args, config, "seed")
    if seed is None:
        raise UsageError("clock is stochastic: --seed is required")
    twist_mu = _resolve(args, config, "twist-mu")
    noise_kind = str(_resolve(args, config, "noise-kind", "flicker"))
    coherence_time = _resolve(args, config, "coherence-time", PRESETS["ca+"]["coherence_time"])
    flicker_floor = float(_resolve(args, config, "flicker-floor", 0.0) or 0.0)
    carrier = float(_resolve(args, config, "carrier", PRESETS["ca+"]["carrier"]))
    gains = (
        float(_resolve(args, config, "primary-gain", ServoConfig().primary_gain)),
        float(_resolve(args, config, "integral-gain", ServoConfig().integral_gain)),
    )

    payloads = [
        (run, kind, n, gamma_decay, gamma_dephase, twist_mu, T, cycles,
         int(seed), noise_kind, coherence_time, flicker_floor, carrier, gains)
        for run in range(runs)
    ]
    workers = _workers()
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_clock_worker, payloads))
    else:
        results = [_clock_worker(p) for p in payloads]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    allan_rows = []
    summary_rows = []
    hop_rows = []
    per_run = []
    for run_idx, allan, discard, hop_cycles in results:
        per_run.append(allan)
        for tau_val, sig in zip(allan.taus, allan.sigma_y):
            allan_rows.append((run_idx, tau_val, sig))
        summary_rows.append((run_idx, allan.sigma_y_at_1s, allan.hop_count, discard))
        for cyc in hop_cycles:
            hop_rows.append((run_idx, cyc))
    write_csv(out / "allan.csv", ["run", "tau_s", "sigma_y"], allan_rows)
    write_csv(out / "summary.csv", ["run", "sigma_y_at_1s", "hop_count", "discard_fraction"], summary_rows)
    write_csv(out / "hops.csv", ["run", "cycle"], hop_rows)

    params = EnsembleParams(n, gamma_decay, gamma_dephase)
    spec = ProtocolSpec(kind, params, twist_mu=twist_mu)
    prediction = adev_prediction(math.sqrt(phase_uncertainty_closed(spec, T)), T, carrier)
    write_manifest(out / "manifest.txt", {
        "command": "clock", "protocol": kind, "n_atoms": n,
        "gamma_decay": gamma_decay, "gamma_dephase": gamma_dephase,
        "twist_mu": twist_mu if twist_mu is not None else "none",
        "T": T, "cycles": cycles, "runs": runs, "seed": int(seed),
        "noise_kind": noise_kind, "coherence_time": coherence_time,
        "flicker_floor": flicker_floor, "carrier": carrier,
        "primary_gain": gains[0], "integral_gain": gains[1],
        "sigma_y_1s_prediction": prediction, "workers": workers,
    })
    if not args.no_figures:
        from . import plots

        plots.allan_figure(per_run, prediction, out / "allan.png")
    return 0


def cmd_bounds(args, config) -> int:
    n_values = _parse_n_range(str(_resolve(args, config, "n-range", "2:20")))
    gamma_decay = float(_resolve(args, config, "gamma-decay", PRESETS["generic"]["gamma_decay"]))
    gamma_dephase = float(_resolve(args, config, "gamma-dephase", 0.0))
    tau = float(_resolve(args, config, "tau", 1.0))
    entries: list[tuple[int, BoundSet]] = []
    for n in n_values:
        entries.append((n, bounds(EnsembleParams(n, gamma_decay, gamma_dephase), tau)))
    out = Path(args.out)
    write_csv(
        out,
        ["n_atoms", "sql", "asymptotic", "ghz_qcrb_min"],
        [(n, b.sql, b.asymptotic, b.ghz_qcrb_min) for n, b in entries],
    )
    write_manifest(out.with_suffix(".manifest.txt"), {
        "command": "bounds", "n_values": ",".join(map(str, n_values)),
        "gamma_decay": gamma_decay, "gamma_dephase": gamma_dephase, "tau": tau,
    })
    if not args.no_figures:
        from . import plots

        plots.bounds_figure(entries, out.with_suffix(".png"))
    return 0


def cmd_verify(args, config) -> int:
    results = run_verification(n_max=args.n_max, draws=args.draws)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  max dev {r.max_deviation:.3e}  tol {r.tolerance:.1e}")
    if args.out:
        out = Path(args.out)
        write_csv(out, ["check", "max_deviation", "tolerance", "passed"],
                  [(r.name, r.max_deviation, r.tolerance, r.passed) for r in results])
        write_manifest(out.with_suffix(".manifest.txt"),
                       {"command": "verify", "n_max": args.n_max, "draws": args.draws})
    if not all(r.passed for r in results):
        raise VerificationFailure("oracle verification failed")
    return 0


COMMANDS = {"sweep": cmd_sweep, "clock": cmd_clock, "bounds": cmd_bounds, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = parse_config(args.config) if getattr(args, "config", None) else {}
        return COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except VerificationFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - map any runtime failure to exit 3
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
