"""Exact spectral propagation, an RK4 cross-check oracle, and ratio sweeps.

The spectral path evaluates a_j(t) = sum_k C_k (e_k)_j exp(-i f_k t), exact
to rounding at any t.  Because the system is linear and the eigenvectors are
real, every head trajectory with a bath-free initial state is a combination
of three shared mode sums; ensemble sweeps reuse them instead of
re-propagating per member.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigError, DivisionGuardError, StepSizeError
from .model import InitialState, SystemParams
from .spectral import EigenBasis, build_matrix, diagonalize

__all__ = [
    "DIVISION_GUARD",
    "ModeCoefficients",
    "Trajectory",
    "RatioCurve",
    "FixedInit",
    "RandomPhases",
    "make_time_grid",
    "project_initial",
    "propagate",
    "integrate_ode",
    "time_average_abs",
    "amplitude_ratio",
    "ensemble_ratio",
    "phase_difference",
    "ratio_sweep",
    "head_mode_sums",
    "resolve_init",
    "knee_location",
    "sharpness",
]

DIVISION_GUARD = 1e-14
_CHUNK_ROWS = 8192  # phase-matrix rows per block, keeps peak memory ~50 MB


@dataclass(frozen=True)
class ModeCoefficients:
    """Projection of an initial state onto an eigenbasis."""

    coeffs: np.ndarray
    basis: EigenBasis


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled complex head amplitudes (bath optional)."""

    times: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    params: SystemParams | None = None
    bath: np.ndarray | None = None
    norms: np.ndarray | None = None


@dataclass(frozen=True)
class RatioCurve:
    """(Omega, ratio, dispersion) sweep samples with full provenance."""

    omegas: np.ndarray
    ratios: np.ndarray
    dispersions: np.ndarray
    n_bath: int
    t_max_in_tr: float
    ensemble_size: int
    seed: int | None


@dataclass(frozen=True)
class FixedInit:
    """Single fixed initial state: 'unit' (1,1), 'eigenplus', or 'explicit'."""

    kind: str = "unit"
    a1_0: complex = 1.0 + 0.0j
    a2_0: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.kind not in ("unit", "eigenplus", "explicit"):
            raise ConfigError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True)
class RandomPhases:
    """Seeded ensemble of unit-magnitude random-phase initial states."""

    n_states: int
    seed: int

    def __post_init__(self):
        if self.n_states < 1:
            raise ConfigError(f"n_states must be >= 1, got {self.n_states}")


def make_time_grid(params: SystemParams, t_max: float) -> np.ndarray:
    """Uniform grid with >= 20 samples per period of the fastest beat.

    dt = 2 pi / (20 (N delta_omega / 2 + Omega + gamma)); the beat spectrum
    of |a(t)| is bounded by the band edge plus the couplings.
    """
    if not t_max > 0:
        raise ConfigError(f"t_max must be positive, got {t_max}")
    rate = 0.5 * params.n_bath * params.delta_omega + params.omega_big + params.gamma()
    dt = 2.0 * math.pi / (20.0 * rate)
    n = max(int(math.ceil(t_max / dt)), 1)
    return np.linspace(0.0, t_max, n + 1)


def project_initial(basis: EigenBasis, init: InitialState) -> ModeCoefficients:
    """Decompose an initial state onto the eigenbasis: C_k = <e_k, state>."""
    state = init.state_vector(basis.params.n_bath)
    if state.size != basis.dimension:
        raise ConfigError(
            f"state dimension {state.size} != basis dimension {basis.dimension}"
        )
    return ModeCoefficients(coeffs=basis.vectors.T @ state, basis=basis)


def propagate(
    basis: EigenBasis,
    coeffs: ModeCoefficients,
    times: np.ndarray,
    include_bath: bool = False,
) -> Trajectory:
    """Evaluate the exact eigenmode expansion on an arbitrary time grid."""
    if coeffs.coeffs.size != basis.dimension:
        raise ConfigError("mode coefficients do not match basis dimension")
    times = np.asarray(times, dtype=float)
    weights = basis.vectors * coeffs.coeffs[np.newaxis, :]  # (dim, modes)
    rows = weights.T if include_bath else weights[:2].T  # (modes, outputs)
    out = np.empty((times.size, rows.shape[1]), dtype=complex)
    for lo in range(0, times.size, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, times.size)
        phases = np.exp(-1j * np.outer(times[lo:hi], basis.freqs))
        out[lo:hi] = phases @ rows
    bath = out[:, 2:] if include_bath else None
    return Trajectory(
        times=times, a1=out[:, 0], a2=out[:, 1], params=basis.params, bath=bath
    )


def head_mode_sums(basis: EigenBasis, times: np.ndarray):
    """Shared sums s11, s12, s22 with s_ij(t) = sum_k (e_k)_i (e_k)_j e^{-i f_k t}.

    Any bath-free head trajectory is a1 = a1_0 s11 + a2_0 s12 and
    a2 = a1_0 s12 + a2_0 s22.
    """
    v1 = basis.vectors[0, :]
    v2 = basis.vectors[1, :]
    rows = np.column_stack([v1 * v1, v1 * v2, v2 * v2]).astype(complex)
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, 3), dtype=complex)
    for lo in range(0, times.size, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, times.size)
        phases = np.exp(-1j * np.outer(times[lo:hi], basis.freqs))
        out[lo:hi] = phases @ rows
    return out[:, 0], out[:, 1], out[:, 2]


def integrate_ode(
    params: SystemParams,
    init: InitialState,
    t_max: float,
    dt: float,
    store_norms: bool = True,
) -> Trajectory:
    """Classical RK4 on the full (N+2)-dimensional linear system.

    Cross-check oracle for the spectral path; refuses steps beyond
    dt = 0.1 / max|f| with max|f| ~ |omega0| + N delta_omega/2 + Omega + g sqrt(N).
    """
    if not t_max > 0:
        raise ConfigError(f"t_max must be positive, got {t_max}")
    f_scale = (
        abs(params.omega0)
        + 0.5 * params.n_bath * params.delta_omega
        + params.omega_big
        + params.g * math.sqrt(params.n_bath)
    )
    if dt <= 0 or dt * f_scale > 0.1:
        raise StepSizeError(
            f"dt={dt} violates dt <= 0.1/max|f| = {0.1 / f_scale:.3e}"
        )
    n_steps = max(int(math.ceil(t_max / dt)), 1)
    step = t_max / n_steps  # exact landing on t_max; step <= requested dt
    h = build_matrix(params).matrix
    y = init.state_vector(params.n_bath)

    times = np.linspace(0.0, t_max, n_steps + 1)
    a1 = np.empty(n_steps + 1, dtype=complex)
    a2 = np.empty(n_steps + 1, dtype=complex)
    norms = np.empty(n_steps + 1) if store_norms else None
    a1[0], a2[0] = y[0], y[1]
    if store_norms:
        norms[0] = np.linalg.norm(y)
    half = 0.5 * step
    for i in range(1, n_steps + 1):
        k1 = -1j * (h @ y)
        k2 = -1j * (h @ (y + half * k1))
        k3 = -1j * (h @ (y + half * k2))
        k4 = -1j * (h @ (y + step * k3))
        y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        a1[i], a2[i] = y[0], y[1]
        if store_norms:
            norms[i] = np.linalg.norm(y)
    return Trajectory(times=times, a1=a1, a2=a2, params=params, norms=norms)


def time_average_abs(traj: Trajectory):
    """Trapezoidal time averages (<|a1|>, <|a2|>) over the trajectory grid."""
    if traj.times.size == 0:
        raise ConfigError("empty trajectory")
    if traj.times.size == 1:
        return float(abs(traj.a1[0])), float(abs(traj.a2[0]))
    span = traj.times[-1] - traj.times[0]
    m1 = trapezoid(np.abs(traj.a1), traj.times) / span
    m2 = trapezoid(np.abs(traj.a2), traj.times) / span
    return float(m1), float(m2)


def _ratio_of_means(mean1: float, mean2: float) -> float:
    if mean2 < DIVISION_GUARD:
        raise DivisionGuardError(f"<|a2|> = {mean2:.3e} below division guard")
    return mean1 / mean2


def amplitude_ratio(params: SystemParams, init: InitialState, t_max: float) -> float:
    """<|a1|>_t / <|a2|>_t from exact spectral propagation on the policy grid."""
    basis = diagonalize(build_matrix(params))
    times = make_time_grid(params, t_max)
    traj = propagate(basis, project_initial(basis, init), times)
    m1, m2 = time_average_abs(traj)
    return _ratio_of_means(m1, m2)


def _ratios_from_sums(times, s11, s12, s22, inits) -> np.ndarray:
    """Per-state ratios from shared mode sums; inits is (n, 2) complex."""
    span = times[-1] - times[0]
    out = np.empty(len(inits))
    for i, (c1, c2) in enumerate(inits):
        m1 = trapezoid(np.abs(c1 * s11 + c2 * s12), times) / span
        m2 = trapezoid(np.abs(c1 * s12 + c2 * s22), times) / span
        out[i] = _ratio_of_means(m1, m2)
    return out


def ensemble_ratio(params: SystemParams, n_states: int, t_max: float, seed: int):
    """Mean and sample standard deviation of the ratio over random-phase states.

    Initial states are a_{1,2}(0) = exp(i theta_{1,2}) with theta uniform on
    [0, 2 pi), bath empty; fixed seed gives a bit-identical result.
    """
    if n_states < 1:
        raise ConfigError(f"n_states must be >= 1, got {n_states}")
    basis = diagonalize(build_matrix(params))
    times = make_time_grid(params, t_max)
    s11, s12, s22 = head_mode_sums(basis, times)
    thetas = np.random.default_rng(seed).uniform(0.0, 2.0 * math.pi, size=(n_states, 2))
    inits = np.exp(1j * thetas)
    ratios = _ratios_from_sums(times, s11, s12, s22, inits)
    dispersion = float(np.std(ratios, ddof=1)) if n_states > 1 else 0.0
    return float(np.mean(ratios)), dispersion


def phase_difference(traj: Trajectory) -> np.ndarray:
    """Principal-value phase difference arg a1 - arg a2 in (-pi, pi].

    Samples where either amplitude sits below the division guard are NaN.
    """
    dphi = np.angle(traj.a1 * np.conj(traj.a2))
    undefined = (np.abs(traj.a1) <= DIVISION_GUARD) | (np.abs(traj.a2) <= DIVISION_GUARD)
    dphi = np.where(undefined, np.nan, dphi)
    return dphi


def knee_location(omegas, ratios, method: str = "argmax_slope") -> float:
    """Locate the threshold knee of a ratio curve.

    "argmax_slope" returns the midpoint of the steepest finite-difference
    cell.  "plateau_onset" returns the largest midpoint whose slope still
    reaches half the maximum slope, i.e. where the curve stops rising; for
    eigenmode-start curves the initial state itself carries a kink at the
    exceptional point, so the steepest cell pins the EP at every horizon and
    only the plateau onset tracks the long-horizon threshold.
    """
    omegas = np.asarray(omegas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if omegas.size < 3:
        raise ConfigError("need at least 3 points to locate a knee")
    slopes = np.diff(ratios) / np.diff(omegas)
    mids = 0.5 * (omegas[1:] + omegas[:-1])
    if method == "argmax_slope":
        return float(mids[int(np.argmax(slopes))])
    if method == "plateau_onset":
        steep = np.where(slopes >= 0.5 * slopes.max())[0]
        return float(mids[int(steep[-1])])
    raise ConfigError(f"unknown knee method {method!r}")


def sharpness(omegas, ratios, center: float, half_window: float = None) -> float:
    """Steepest locally-fitted slope of a ratio curve near a threshold.

    Fits straight lines over sliding windows of +-10% of `center` (ratio
    curves at finite N carry percent-level mode-structure wobble, so raw
    finite differences measure wobble rather than the transition) and
    returns the largest absolute fitted slope with the window center inside
    [0.6, 1.4] * center.
    """
    omegas = np.asarray(omegas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    hw = 0.1 * center if half_window is None else half_window
    best = 0.0
    for c in np.linspace(0.6 * center, 1.4 * center, 33):
        mask = np.abs(omegas - c) <= hw
        if np.count_nonzero(mask) >= 4:
            slope = np.polyfit(omegas[mask], ratios[mask], 1)[0]
            best = max(best, abs(float(slope)))
    if best == 0.0:
        raise ConfigError("no sliding window contained >= 4 grid points")
    return best


def resolve_init(spec: FixedInit, params: SystemParams) -> InitialState:
    """Concrete initial state for a FixedInit spec at the params' coupling."""
    if spec.kind == "unit":
        return InitialState(a1_0=1.0 + 0.0j, a2_0=1.0 + 0.0j)
    if spec.kind == "explicit":
        return InitialState(a1_0=spec.a1_0, a2_0=spec.a2_0)
    from .reduction import NhParams, nh_eigensystem

    nh = nh_eigensystem(
        NhParams(gamma=params.gamma(), omega_big=params.omega_big, omega0=params.omega0)
    )
    return InitialState(a1_0=complex(nh.e_plus[0]), a2_0=complex(nh.e_plus[1]))


def _sweep_cell(args):
    params, omega, t_max, ensemble = args
    p = params.with_omega(omega)
    basis = diagonalize(build_matrix(p))
    times = make_time_grid(p, t_max)
    s11, s12, s22 = head_mode_sums(basis, times)
    if isinstance(ensemble, RandomPhases):
        thetas = np.random.default_rng(ensemble.seed).uniform(
            0.0, 2.0 * math.pi, size=(ensemble.n_states, 2)
        )
        ratios = _ratios_from_sums(times, s11, s12, s22, np.exp(1j * thetas))
        disp = float(np.std(ratios, ddof=1)) if ensemble.n_states > 1 else 0.0
        return float(np.mean(ratios)), disp
    init = resolve_init(ensemble, p)
    ratios = _ratios_from_sums(times, s11, s12, s22, [(init.a1_0, init.a2_0)])
    return float(ratios[0]), 0.0


def ratio_sweep(
    params: SystemParams,
    omega_grid,
    t_max: float,
    ensemble,
    workers: int | None = None,
) -> RatioCurve:
    """Ratio vs coupling strength over an ascending Omega grid.

    ensemble selects a single fixed initial state (FixedInit) or a seeded
    random-phase ensemble (RandomPhases).  Every Omega cell reuses the same
    seed, so adjacent points share initial states and the curve shape is not
    dominated by ensemble noise.  Cells are independent; workers > 1 runs
    them on a process pool with results assembled in grid order.
    """
    omegas = np.asarray(omega_grid, dtype=float)
    if omegas.size == 0:
        raise ConfigError("omega grid is empty")
    if np.any(np.diff(omegas) <= 0):
        raise ConfigError("omega grid must be strictly ascending")
    if not isinstance(ensemble, (FixedInit, RandomPhases)):
        raise ConfigError(f"unsupported ensemble spec {ensemble!r}")

    jobs = [(params, float(w), float(t_max), ensemble) for w in omegas]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]

    ratios = np.array([r for r, _ in results])
    disps = np.array([d for _, d in results])
    if isinstance(ensemble, RandomPhases):
        size, seed = ensemble.n_states, ensemble.seed
    else:
        size, seed = 1, None
    return RatioCurve(
        omegas=omegas,
        ratios=ratios,
        dispersions=disps,
        n_bath=params.n_bath,
        t_max_in_tr=float(t_max) / params.t_return(),
        ensemble_size=size,
        seed=seed,
    )
