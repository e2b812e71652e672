"""Command-line surface: figure-level experiments as file-in/file-out runs.

Every run resolves its configuration (defaults < config file < flags),
writes a manifest first, then emits CSV data files that cite the resolved
config hash.  Progress goes to stderr; stdout carries one JSON summary line.
Exit codes: 0 success, 2 config error, 3 numerical failure, 4 IO error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError
from .model import InitialState, SystemParams, load_params_config, params_from_gamma, scale_to
from .spectral import build_matrix, component_profile, diagonalize, peak_features
from .dynamics import (
    FixedInit,
    RandomPhases,
    make_time_grid,
    phase_difference,
    project_initial,
    propagate,
    ratio_sweep,
    resolve_init,
    sharpness,
)
from .reduction import (
    NhParams,
    NoiseSpec,
    find_noisy_split,
    nh_propagate,
    nh_ratio_curve,
    noisy_split_threshold,
    simulate_noisy,
    spectrum_split_detect,
)
from .estimator import estimator_sweep
from .outputs import write_csv, write_manifest, write_report, load_manifest

_DESK_DEFAULTS = params_from_gamma(n_bath=400, gamma=0.01)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _workers() -> int:
    env = os.environ.get("SSE_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"SSE_LAB_THREADS={env!r} is not an integer") from exc
    return os.cpu_count() or 1


def _params_from_config(config: dict) -> SystemParams:
    return SystemParams(
        n_bath=int(config["n_bath"]),
        delta_omega=float(config["delta_omega"]),
        g=float(config["g"]),
        omega_big=float(config["omega_big"]),
        omega0=float(config["omega0"]),
    )


def _derived_dict(params: SystemParams) -> dict:
    return {
        "gamma": params.gamma(),
        "omega_ep": params.omega_ep(),
        "omega_sse": params.omega_sse(),
        "t_return": params.t_return(),
    }


def _base_params(args) -> SystemParams:
    base = load_params_config(args.config) if args.config else _DESK_DEFAULTS
    return SystemParams(
        n_bath=args.n_bath if args.n_bath is not None else base.n_bath,
        delta_omega=args.delta_omega if args.delta_omega is not None else base.delta_omega,
        g=args.g if args.g is not None else base.g,
        omega_big=args.omega if args.omega is not None else base.omega_big,
        omega0=args.omega0 if args.omega0 is not None else base.omega0,
    )


def _parse_grid(text: str) -> list:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--omega-grid expects lo:hi:steps, got {text!r}")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad --omega-grid {text!r}: {exc}") from exc
    if steps < 2 or not hi > lo:
        raise ConfigError(f"--omega-grid needs hi > lo and steps >= 2, got {text!r}")
    return np.linspace(lo, hi, steps).tolist()


def _maybe_svg(enabled: bool, path: Path, draw) -> list:
    if not enabled:
        return []
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("--svg requires matplotlib (install sse-lab[plot])") from exc
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return [str(path)]


def _ensemble_from_config(config: dict):
    init = config["init"]
    if init == "random":
        return RandomPhases(n_states=int(config["ensemble"]), seed=int(config["seed"]))
    if init in ("unit", "eigenplus"):
        return FixedInit(kind=init)
    raise ConfigError(f"unknown init mode {init!r}")


# ---------------------------------------------------------------------------
# eigenprofile
# ---------------------------------------------------------------------------

def run_eigenprofile(config: dict, out_dir: Path) -> dict:
    params = _params_from_config(config)
    omegas = [float(w) for w in config["omegas"]]
    if not omegas:
        raise ConfigError("eigenprofile needs a nonempty omega list")
    n_list = [int(n) for n in config["n_list"]]
    digest = write_manifest(
        out_dir / "manifest.json", "eigenprofile", config, _derived_dict(params)
    )
    files = []
    for n in n_list:
        pn = scale_to(params, n)
        features = {}
        for i, omega in enumerate(omegas):
            basis = diagonalize(build_matrix(pn.with_omega(omega)))
            path = out_dir / f"eigenprofile_N{n}_omega{i:02d}.csv"
            rows = zip(
                range(1, basis.dimension + 1),
                basis.freqs,
                basis.vectors[0, :],
                basis.vectors[1, :],
            )
            write_csv(path, digest, ["k", "f_k", "e1", "e2"], rows)
            files.append(str(path))
            entry = {}
            for j in (1, 2):
                feats = peak_features(component_profile(basis, j))
                entry[f"component{j}"] = {
                    "peak_count": feats.peak_count,
                    "heights": list(feats.heights),
                    "total_width": feats.total_width,
                    "offsets": list(feats.offsets),
                    "deep_split": feats.deep_split,
                }
            features[f"omega{i:02d}"] = {"omega": omega, **entry}
            _progress(f"eigenprofile N={n} omega[{i}]={omega:.6g} done")
        sidecar = out_dir / f"eigenprofile_N{n}_features.json"
        write_report(sidecar, digest, features)
        files.append(str(sidecar))
        files += _maybe_svg(
            config["svg"],
            out_dir / f"eigenprofile_N{n}.svg",
            lambda ax, pn=pn: _draw_profiles(ax, pn, omegas),
        )
    return {"files": files, "config_hash": digest}


def _draw_profiles(ax, params, omegas) -> None:
    for omega in omegas:
        basis = diagonalize(build_matrix(params.with_omega(omega)))
        ax.plot(basis.freqs, basis.vectors[0, :], lw=0.8, label=f"e1, omega={omega:.4g}")
        ax.plot(basis.freqs, basis.vectors[1, :], lw=0.8, label=f"e2, omega={omega:.4g}")
    ax.set_xlabel("eigenfrequency")
    ax.set_ylabel("head components")
    ax.legend(fontsize=6)


# ---------------------------------------------------------------------------
# ratio-sweep
# ---------------------------------------------------------------------------

_RATIO_HEADER = ["omega", "ratio", "dispersion", "n_bath", "t_max_TR", "ensemble", "seed"]


def _ratio_rows(curve):
    seed = -1 if curve.seed is None else curve.seed
    for w, r, d in zip(curve.omegas, curve.ratios, curve.dispersions):
        yield (w, r, d, curve.n_bath, curve.t_max_in_tr, curve.ensemble_size, seed)


def run_ratio_sweep(config: dict, out_dir: Path) -> dict:
    params = _params_from_config(config)
    digest = write_manifest(
        out_dir / "manifest.json", "ratio-sweep", config, _derived_dict(params)
    )
    t_max = float(config["t_max_tr"]) * params.t_return()
    ensemble = _ensemble_from_config(config)
    _progress(f"ratio-sweep: {len(config['omegas'])} points, workers={_workers()}")
    curve = ratio_sweep(params, config["omegas"], t_max, ensemble, workers=_workers())
    path = out_dir / "ratio_sweep.csv"
    write_csv(path, digest, _RATIO_HEADER, _ratio_rows(curve))
    files = [str(path)]
    files += _maybe_svg(
        config["svg"],
        out_dir / "ratio_sweep.svg",
        lambda ax: (
            ax.plot(curve.omegas, curve.ratios, "o-", ms=3),
            ax.axvline(params.omega_sse(), ls="--", lw=0.8),
            ax.set_xlabel("omega"),
            ax.set_ylabel("<|a1|>/<|a2|> averaged"),
        ),
    )
    return {"files": files, "config_hash": digest}


# ---------------------------------------------------------------------------
# scaling-study
# ---------------------------------------------------------------------------

def run_scaling_study(config: dict, out_dir: Path) -> dict:
    params = _params_from_config(config)
    digest = write_manifest(
        out_dir / "manifest.json", "scaling-study", config, _derived_dict(params)
    )
    n_list = [int(n) for n in config["n_list"]]
    ensemble = _ensemble_from_config(config)
    files, sharp = [], {}
    for n in n_list:
        pn = scale_to(params, n)
        t_max = float(config["t_max_tr"]) * pn.t_return()
        _progress(f"scaling-study: N={n} sweep ({len(config['omegas'])} points)")
        curve = ratio_sweep(pn, config["omegas"], t_max, ensemble, workers=_workers())
        path = out_dir / f"ratio_N{n}.csv"
        write_csv(path, digest, _RATIO_HEADER, _ratio_rows(curve))
        files.append(str(path))
        sharp[n] = sharpness(curve.omegas, curve.ratios, center=pn.omega_sse())
    ordered = [sharp[n] for n in sorted(sharp)]
    monotone = all(a < b for a, b in zip(ordered, ordered[1:]))
    warnings = [] if monotone else ["sharpness not monotone in N (expected monotone increase)"]
    if warnings:
        _progress("WARNING: " + warnings[0])
    summary_path = out_dir / "scaling_summary.json"
    write_report(
        summary_path,
        digest,
        {"sharpness": {str(n): sharp[n] for n in sharp}, "monotone": monotone, "warnings": warnings},
    )
    files.append(str(summary_path))
    return {"files": files, "config_hash": digest, "monotone": monotone}


# ---------------------------------------------------------------------------
# nh-compare
# ---------------------------------------------------------------------------

def run_nh_compare(config: dict, out_dir: Path) -> dict:
    params = _params_from_config(config)
    digest = write_manifest(
        out_dir / "manifest.json", "nh-compare", config, _derived_dict(params)
    )
    t_max = float(config["t_max_tr"]) * params.t_return()
    times = make_time_grid(params, t_max)
    init_spec = _ensemble_from_config(config)
    if isinstance(init_spec, RandomPhases):
        raise ConfigError("nh-compare needs a fixed init (unit or eigenplus)")
    init = resolve_init(init_spec, params)
    _progress(f"nh-compare: propagating N={params.n_bath} to {config['t_max_tr']} T_R")
    basis = diagonalize(build_matrix(params))
    full = propagate(basis, project_initial(basis, init), times)
    nh = nh_propagate(
        NhParams(gamma=params.gamma(), omega_big=params.omega_big, omega0=params.omega0),
        np.array([init.a1_0, init.a2_0], dtype=complex),
        times,
    )
    scale = max(abs(init.a1_0), abs(init.a2_0))
    dev1 = np.abs(np.abs(full.a1) - np.abs(nh.a1)) / scale
    dev2 = np.abs(np.abs(full.a2) - np.abs(nh.a2)) / scale

    files = []
    for tag, traj in (("full", full), ("nh", nh)):
        path = out_dir / f"trajectory_{tag}.csv"
        write_csv(
            path,
            digest,
            ["t", "abs_a1", "abs_a2", "dphi"],
            zip(traj.times, np.abs(traj.a1), np.abs(traj.a2), phase_difference(traj)),
        )
        files.append(str(path))
    overlay = out_dir / "nh_compare.csv"
    write_csv(
        overlay,
        digest,
        ["t", "abs_a1_full", "abs_a2_full", "abs_a1_nh", "abs_a2_nh", "dev_a1", "dev_a2"],
        zip(times, np.abs(full.a1), np.abs(full.a2), np.abs(nh.a1), np.abs(nh.a2), dev1, dev2),
    )
    files.append(str(overlay))

    omegas = config["ratio_omegas"]
    if omegas:
        herm = ratio_sweep(
            params, omegas, t_max, FixedInit(kind="eigenplus"), workers=_workers()
        )
        nh_curve = nh_ratio_curve(params.gamma(), omegas, omega0=params.omega0)
        path = out_dir / "nh_compare_ratio.csv"
        write_csv(
            path,
            digest,
            ["omega", "ratio_full", "ratio_nh"],
            zip(herm.omegas, herm.ratios, nh_curve.ratios),
        )
        files.append(str(path))
    files += _maybe_svg(
        config["svg"],
        out_dir / "nh_compare.svg",
        lambda ax: (
            ax.plot(times, np.abs(full.a1), lw=0.6, label="|a1| full"),
            ax.plot(times, np.abs(nh.a1), lw=0.6, label="|a1| reduced"),
            ax.set_xlabel("t"),
            ax.legend(),
        ),
    )
    return {
        "files": files,
        "config_hash": digest,
        "max_dev_a1": float(dev1.max()),
        "max_dev_a2": float(dev2.max()),
    }


# ---------------------------------------------------------------------------
# noise-spectrum
# ---------------------------------------------------------------------------

def run_noise_spectrum(config: dict, out_dir: Path) -> dict:
    params = _params_from_config(config)
    gamma = params.gamma()
    if float(config["temperature"]) <= 0.0:
        raise ConfigError("noise-free spectrum estimation refused (temperature must be > 0)")
    digest = write_manifest(
        out_dir / "manifest.json", "noise-spectrum", config, _derived_dict(params)
    )
    noise = NoiseSpec(
        temperature=float(config["temperature"]),
        seed=int(config["seed"]),
        dt=float(config["sde_dt"]),
        n_realizations=int(config["realizations"]),
    )
    t_max = float(config["sde_t_max"])
    files = []
    if config["scan"] is not None:
        lo, hi = (float(v) for v in config["scan"])
        _progress(f"noise-spectrum: bisecting split flag on [{lo:.4g}, {hi:.4g}]")
        detected = find_noisy_split(
            gamma, noise, t_max, lo, hi, tol=float(config["scan_tol"]), omega0=params.omega0
        )
        formula = noisy_split_threshold(gamma, 0.0, noise.temperature, 0.0)
        report = {
            "gamma": gamma,
            "temperature": noise.temperature,
            "detected_split": detected,
            "formula_split": formula,
            "relative_deviation": detected / formula - 1.0,
        }
        path = out_dir / "threshold_report.json"
        write_report(path, digest, report)
        files.append(str(path))
        summary = {"files": files, "config_hash": digest, **report}
    else:
        p = NhParams(gamma=gamma, omega_big=params.omega_big, omega0=params.omega0)
        _progress(f"noise-spectrum: {noise.n_realizations} realizations at omega={p.omega_big:.6g}")
        det = spectrum_split_detect(p, noise, t_max)
        path = out_dir / "noise_spectrum.csv"
        write_csv(
            path,
            digest,
            ["freq", "psd_a1", "psd_a2"],
            zip(det.omega_axis, det.psd_a1, det.psd_a2),
        )
        files.append(str(path))
        files += _maybe_svg(
            config["svg"],
            out_dir / "noise_spectrum.svg",
            lambda ax: (
                ax.plot(det.omega_axis, det.psd_a2, lw=0.7),
                ax.set_xlim(-4 * gamma, 4 * gamma),
                ax.set_xlabel("omega"),
                ax.set_ylabel("PSD a2"),
            ),
        )
        summary = {
            "files": files,
            "config_hash": digest,
            "split": det.split,
            "peak_freqs": list(det.peak_freqs),
        }
    return summary


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

def run_estimator(config: dict, out_dir: Path) -> dict:
    params = _params_from_config(config)
    digest = write_manifest(
        out_dir / "manifest.json", "estimator", config, _derived_dict(params)
    )
    t_max = float(config["t_max_tr"]) * params.t_return()
    ensemble = RandomPhases(n_states=int(config["ensemble"]), seed=int(config["seed"]))
    _progress(f"estimator: {len(config['omegas'])} points at N={params.n_bath}")
    cols = estimator_sweep(params, config["omegas"], t_max, ensemble=ensemble)
    path = out_dir / "estimator.csv"
    header = ["omega", "ratio_full", "ratio_no_cross", "ratio_no_xi", "ratio_static", "ratio_peak"]
    write_csv(path, digest, header, zip(*(cols[h] for h in header)))
    files = [str(path)]
    files += _maybe_svg(
        config["svg"],
        out_dir / "estimator.svg",
        lambda ax: (
            [ax.plot(cols["omega"], cols[h], label=h) for h in header[1:]],
            ax.set_xlabel("omega"),
            ax.legend(fontsize=6),
        ),
    )
    return {"files": files, "config_hash": digest}


_RUNNERS = {
    "eigenprofile": run_eigenprofile,
    "ratio-sweep": run_ratio_sweep,
    "scaling-study": run_scaling_study,
    "nh-compare": run_nh_compare,
    "noise-spectrum": run_noise_spectrum,
    "estimator": run_estimator,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_model_flags(sub) -> None:
    sub.add_argument("--config", type=str, default=None, help="flat key=value params file")
    sub.add_argument("--n-bath", type=int, default=None)
    sub.add_argument("--delta-omega", type=float, default=None)
    sub.add_argument("--g", type=float, default=None)
    sub.add_argument("--omega", type=float, default=None, help="head-head coupling")
    sub.add_argument("--omega0", type=float, default=None)
    sub.add_argument("--out-dir", type=str, default=".")
    sub.add_argument("--svg", action="store_true", help="also emit SVG plots")


def _add_sweep_flags(sub, t_max_tr: float) -> None:
    sub.add_argument("--omega-grid", type=str, default=None, help="lo:hi:steps (rad/time)")
    sub.add_argument("--t-max-tr", type=float, default=t_max_tr, help="horizon in T_R units")
    sub.add_argument("--ensemble", type=int, default=200)
    sub.add_argument("--seed", type=int, default=42)
    sub.add_argument(
        "--init", choices=("random", "unit", "eigenplus"), default="random"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sse-lab",
        description="Coupled-oscillator bath experiments: spectra, sweeps, reductions.",
    )
    parser.add_argument("--version", action="version", version=f"sse-lab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("eigenprofile", help="eigenstate component profiles + peak features")
    _add_model_flags(p)
    p.add_argument("--omega-list", type=str, default=None,
                   help="comma-separated absolute couplings (default 0.5,1,1.5,6 x Omega_SSE)")
    p.add_argument("--n-list", type=str, default=None,
                   help="comma-separated bath sizes (scaled from base params)")

    p = subs.add_parser("ratio-sweep", help="averaged amplitude ratio vs coupling")
    _add_model_flags(p)
    _add_sweep_flags(p, t_max_tr=25.0)

    p = subs.add_parser("scaling-study", help="ratio curves and sharpness across bath sizes")
    _add_model_flags(p)
    _add_sweep_flags(p, t_max_tr=25.0)
    p.add_argument("--n-list", type=str, default="50,100,200,400")

    p = subs.add_parser("nh-compare", help="full system vs Born-Markov reduction")
    _add_model_flags(p)
    p.add_argument("--t-max-tr", type=float, default=3.0)
    p.add_argument("--init", choices=("unit", "eigenplus"), default="unit")
    p.add_argument("--omega-grid", type=str, default=None,
                   help="optional lo:hi:steps for the ratio-curve overlay")

    p = subs.add_parser("noise-spectrum", help="stochastic reduced-model spectra and split onset")
    _add_model_flags(p)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--realizations", type=int, default=64)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sde-dt", type=float, default=None, help="Euler-Maruyama step")
    p.add_argument("--sde-t-max", type=float, default=None, help="horizon (default 400/gamma)")
    p.add_argument("--scan", type=str, default=None,
                   help="lo:hi coupling range: bisect the split onset instead of one PSD")
    p.add_argument("--scan-tol", type=float, default=None)

    p = subs.add_parser("estimator", help="mode-sum estimator overlay columns")
    _add_model_flags(p)
    _add_sweep_flags(p, t_max_tr=25.0)

    p = subs.add_parser("rerun", help="re-execute a command from its manifest")
    p.add_argument("manifest", type=str)
    p.add_argument("--out-dir", type=str, default=None)
    return parser


def _config_from_args(args) -> dict:
    params = _base_params(args)
    osse = params.omega_sse()
    config = {
        "n_bath": params.n_bath,
        "delta_omega": params.delta_omega,
        "g": params.g,
        "omega_big": params.omega_big,
        "omega0": params.omega0,
        "svg": bool(args.svg),
    }
    cmd = args.command
    if cmd == "eigenprofile":
        if args.omega_list:
            omegas = [float(v) for v in args.omega_list.split(",") if v.strip()]
        else:
            omegas = [m * osse for m in (0.5, 1.0, 1.5, 6.0)]
        n_list = (
            [int(v) for v in args.n_list.split(",") if v.strip()]
            if args.n_list
            else [params.n_bath]
        )
        config.update(omegas=omegas, n_list=n_list)
    elif cmd in ("ratio-sweep", "estimator"):
        if args.omega_grid:
            omegas = _parse_grid(args.omega_grid)
        elif cmd == "ratio-sweep":
            omegas = np.linspace(0.0, 4.0 * osse, 41).tolist()
        else:
            omegas = np.linspace(0.2 * osse, 4.0 * osse, 13).tolist()
        config.update(
            omegas=omegas,
            t_max_tr=args.t_max_tr,
            ensemble=args.ensemble,
            seed=args.seed,
            init=getattr(args, "init", "random") if cmd == "ratio-sweep" else "random",
        )
    elif cmd == "scaling-study":
        omegas = (
            _parse_grid(args.omega_grid)
            if args.omega_grid
            else np.linspace(0.25 * osse, 2.0 * osse, 36).tolist()
        )
        config.update(
            omegas=omegas,
            t_max_tr=args.t_max_tr,
            ensemble=args.ensemble,
            seed=args.seed,
            init=args.init,
            n_list=[int(v) for v in args.n_list.split(",") if v.strip()],
        )
    elif cmd == "nh-compare":
        config.update(
            t_max_tr=args.t_max_tr,
            init=args.init,
            ratio_omegas=_parse_grid(args.omega_grid) if args.omega_grid else [],
        )
    elif cmd == "noise-spectrum":
        gamma = params.gamma()
        if gamma <= 0.0:
            raise ConfigError("noise-spectrum needs g > 0 (gamma > 0)")
        default_dt = 5e-3 / max(gamma, 2.0 * osse)
        scan = None
        if args.scan is not None:
            parts = args.scan.split(":")
            if len(parts) != 2:
                raise ConfigError(f"--scan expects lo:hi, got {args.scan!r}")
            scan = [float(parts[0]), float(parts[1])]
        config.update(
            temperature=args.temperature,
            realizations=args.realizations,
            seed=args.seed,
            sde_dt=args.sde_dt if args.sde_dt is not None else default_dt,
            sde_t_max=args.sde_t_max if args.sde_t_max is not None else 400.0 / gamma,
            scan=scan,
            scan_tol=args.scan_tol if args.scan_tol is not None else 0.03 * gamma,
        )
    return config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            manifest = load_manifest(args.manifest)
            command = manifest["command"]
            if command not in _RUNNERS:
                raise ConfigError(f"manifest names unknown command {command!r}")
            out_dir = Path(args.out_dir) if args.out_dir else Path(args.manifest).parent
            summary = _RUNNERS[command](manifest["config"], out_dir)
            summary["command"] = command
        else:
            config = _config_from_args(args)
            out_dir = Path(args.out_dir)
            summary = _RUNNERS[args.command](config, out_dir)
            summary["command"] = args.command
        print(json.dumps(summary, sort_keys=True))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
