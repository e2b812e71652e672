"""Born-Markov 2x2 reduction: closed-form eigensystem, exact propagation,
fluctuation-dissipation noise, spectrum estimation, and the noisy split
threshold formula.

The reduced generator is M = [[-i omega0 - gamma, -i Omega],
                              [-i Omega,          -i omega0]].
Its eigenvalues are lambda_pm = -gamma/2 - i omega0 +- sqrt(gamma^2 - 4 Omega^2)/2
with an exceptional point at Omega = gamma/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .errors import (
    BracketingError,
    ConfigError,
    DomainError,
    InsufficientSamplesError,
    StepSizeError,
)
from .dynamics import Trajectory, RatioCurve, DIVISION_GUARD
from scipy.integrate import trapezoid

__all__ = [
    "NhParams",
    "NhEigensystem",
    "NoiseSpec",
    "NoisyEnsemble",
    "SplitDetection",
    "nh_matrix",
    "nh_eigensystem",
    "nh_propagate",
    "nh_ratio_curve",
    "noisy_split_threshold",
    "simulate_noisy",
    "spectrum_split_detect",
    "find_noisy_split",
]


@dataclass(frozen=True)
class NhParams:
    """Reduced-model constants: decay rate, head coupling, carrier."""

    gamma: float
    omega_big: float
    omega0: float = 0.0

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.omega_big < 0.0:
            raise ConfigError(f"omega_big must be >= 0, got {self.omega_big}")


@dataclass(frozen=True)
class NhEigensystem:
    lambda_plus: complex
    lambda_minus: complex
    e_plus: np.ndarray
    e_minus: np.ndarray


@dataclass(frozen=True)
class NoiseSpec:
    """Noise strength gamma*T, stream seed, SDE step, and ensemble size."""

    temperature: float
    seed: int
    dt: float
    n_realizations: int

    def __post_init__(self):
        if self.temperature < 0.0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.dt <= 0.0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_realizations < 1:
            raise ConfigError(f"n_realizations must be >= 1, got {self.n_realizations}")


@dataclass(frozen=True)
class NoisyEnsemble:
    """Euler-Maruyama realizations; a1/a2 have shape (n_realizations, n_times)."""

    times: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    params: NhParams
    noise: NoiseSpec


@dataclass(frozen=True)
class SplitDetection:
    """Outcome of the spectral split test on the a2 periodogram."""

    split: bool
    peak_freqs: tuple
    omega_axis: np.ndarray
    psd_a1: np.ndarray
    psd_a2: np.ndarray
    curvature: float
    curvature_se: float


def nh_matrix(p: NhParams) -> np.ndarray:
    return np.array(
        [
            [-1j * p.omega0 - p.gamma, -1j * p.omega_big],
            [-1j * p.omega_big, -1j * p.omega0],
        ],
        dtype=complex,
    )


def nh_eigensystem(p: NhParams) -> NhEigensystem:
    """Closed-form eigenvalues and eigenvectors of the reduced generator.

    For Omega > 0 the eigenvectors are (i(-gamma +- s)/(2 Omega), 1) with
    s = sqrt(gamma^2 - 4 Omega^2); at Omega = 0 the generator is diagonal.
    """
    s = np.sqrt(complex(p.gamma * p.gamma - 4.0 * p.omega_big * p.omega_big, 0.0))
    base = -0.5 * p.gamma - 1j * p.omega0
    lam_p = base + 0.5 * s
    lam_m = base - 0.5 * s
    if p.omega_big > 0.0:
        e_p = np.array([1j * (-p.gamma + s) / (2.0 * p.omega_big), 1.0], dtype=complex)
        e_m = np.array([1j * (-p.gamma - s) / (2.0 * p.omega_big), 1.0], dtype=complex)
    else:
        e_p = np.array([0.0, 1.0], dtype=complex)
        e_m = np.array([1.0, 0.0], dtype=complex)
    return NhEigensystem(lambda_plus=lam_p, lambda_minus=lam_m, e_plus=e_p, e_minus=e_m)


def _propagator_coeffs(p: NhParams, times: np.ndarray):
    """Scalar coefficients of exp(M t) = c0(t) I + c1(t) (M - mean(lambda) I).

    c0 = (E+ + E-)/2 and c1 = (E+ - E-)/s with E+- = exp(lambda_pm t); the
    s -> 0 limit is the Jordan form c1 = t exp(lambda t), evaluated by series
    near the exceptional point to avoid catastrophic cancellation.
    """
    s = np.sqrt(complex(p.gamma * p.gamma - 4.0 * p.omega_big * p.omega_big, 0.0))
    base = -0.5 * p.gamma - 1j * p.omega0
    e_p = np.exp((base + 0.5 * s) * times)
    e_m = np.exp((base - 0.5 * s) * times)
    c0 = 0.5 * (e_p + e_m)
    z = 0.5 * s * times
    if abs(s) * float(np.max(times, initial=0.0)) < 1e-4:
        sinhc = 1.0 + z * z / 6.0 + z**4 / 120.0  # sinh(z)/z
        c1 = times * np.exp(base * times) * sinhc
    else:
        c1 = (e_p - e_m) / s
    return c0, c1


def nh_propagate(p: NhParams, init, times) -> Trajectory:
    """Exact solution of the deterministic 2x2 linear system."""
    times = np.asarray(times, dtype=float)
    init = np.asarray(init, dtype=complex)
    if init.shape != (2,):
        raise ConfigError(f"init must be a 2-vector, got shape {init.shape}")
    base = -0.5 * p.gamma - 1j * p.omega0
    c0, c1 = _propagator_coeffs(p, times)
    shifted = nh_matrix(p) @ init - base * init
    state = c0[:, None] * init[None, :] + c1[:, None] * shifted[None, :]
    return Trajectory(times=times, a1=state[:, 0], a2=state[:, 1])


def _nh_time_grid(p: NhParams, t_max: float) -> np.ndarray:
    rate = abs(p.omega0) + p.omega_big + p.gamma
    dt = 2.0 * math.pi / (20.0 * max(rate, 1e-12))
    n = min(max(int(math.ceil(t_max / dt)), 1), 2_000_000)
    return np.linspace(0.0, t_max, n + 1)


def nh_ratio_curve(gamma: float, omegas, omega0: float = 0.0, t_max: float | None = None) -> RatioCurve:
    """Time-averaged ratio of the reduced model with init = e_plus, per Omega.

    For an eigenmode start the ratio equals |(e+)_1| / |(e+)_2| at every
    horizon, so t_max only sets the quadrature grid.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        raise ConfigError("omega grid is empty")
    ratios = np.empty(omegas.size)
    for i, omega in enumerate(omegas):
        p = NhParams(gamma=gamma, omega_big=float(omega), omega0=omega0)
        horizon = t_max if t_max is not None else 20.0 / max(gamma, omega, 1e-12)
        times = _nh_time_grid(p, horizon)
        es = nh_eigensystem(p)
        traj = nh_propagate(p, es.e_plus, times)
        span = times[-1] - times[0]
        m1 = trapezoid(np.abs(traj.a1), times) / span
        m2 = trapezoid(np.abs(traj.a2), times) / span
        ratios[i] = 0.0 if m2 < DIVISION_GUARD else m1 / m2
    return RatioCurve(
        omegas=omegas,
        ratios=ratios,
        dispersions=np.zeros_like(ratios),
        n_bath=0,
        t_max_in_tr=0.0,
        ensemble_size=1,
        seed=None,
    )


def noisy_split_threshold(gamma1: float, gamma2: float, t1: float, t2: float) -> float:
    """Coupling strength at which the second oscillator's noisy spectrum splits.

    Closed form for the general two-reservoir model; with a single reservoir
    (gamma2 = T2 = 0) it reduces to gamma / sqrt(2).
    """
    den = 2.0 * (gamma2 * t2 + 2.0 * gamma1 * t1)
    if den <= 0.0:
        raise DomainError(f"denominator 2(gamma2 T2 + 2 gamma1 T1) = {den} must be positive")
    rad = 4.0 * gamma2 * gamma1**4 * t2 * (gamma2 * t2 + 2.0 * gamma1 * t1) + (
        gamma1 * (gamma1**2 + gamma2**2) * t1
        - 2.0 * gamma1 * gamma2 * (gamma1 + gamma2) * t2
    ) ** 2
    if rad < 0.0:
        raise DomainError(f"negative radicand {rad}")
    value = (
        gamma2**2 * gamma1 * t1
        + gamma1**3 * t1
        - 2.0 * gamma1**2 * gamma2 * t2
        - 2.0 * gamma2**2 * gamma1 * t2
        + math.sqrt(rad)
    ) / den
    if value <= 0.0:
        raise DomainError(f"nonpositive squared threshold {value}")
    return math.sqrt(value)


def simulate_noisy(p: NhParams, noise: NoiseSpec, t_max: float) -> NoisyEnsemble:
    """Euler-Maruyama integration of the reduced model with white noise on a1.

    The complex noise increment has independent real and imaginary parts of
    variance gamma*T*dt/2 each, matching <xi* xi> = gamma T delta(tau) and
    <xi xi> = 0.  Realization r draws from the independent child stream
    (seed, r), so parallel execution is reproducible.
    """
    if not t_max > 0:
        raise ConfigError(f"t_max must be positive, got {t_max}")
    if p.gamma * noise.dt > 1e-2 or p.omega_big * noise.dt > 1e-2:
        raise StepSizeError(
            f"dt={noise.dt} too large: need gamma*dt and Omega*dt <= 1e-2"
        )
    if abs(p.omega0) * noise.dt > 1e-2:
        raise StepSizeError(f"dt={noise.dt} too large for carrier omega0={p.omega0}")
    n_steps = max(int(math.ceil(t_max / noise.dt)), 1)
    dt = noise.dt
    n_real = noise.n_realizations
    m = nh_matrix(p)
    amp = math.sqrt(0.5 * p.gamma * noise.temperature * dt)

    xi = np.zeros((n_steps, n_real), dtype=complex)
    if amp > 0.0:
        for r in range(n_real):
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy=noise.seed, spawn_key=(r,)))
            )
            draws = rng.standard_normal((n_steps, 2))
            xi[:, r] = amp * (draws[:, 0] + 1j * draws[:, 1])

    state = np.zeros((2, n_real), dtype=complex)
    state[0, :] = 1.0  # deterministic (1, 0) start; the transient is discarded
    state[1, :] = 0.0
    a1 = np.empty((n_real, n_steps + 1), dtype=complex)
    a2 = np.empty((n_real, n_steps + 1), dtype=complex)
    a1[:, 0] = state[0]
    a2[:, 0] = state[1]
    for i in range(n_steps):
        state = state + dt * (m @ state)
        state[0, :] += xi[i]
        a1[:, i + 1] = state[0]
        a2[:, i + 1] = state[1]
    times = np.arange(n_steps + 1) * dt
    return NoisyEnsemble(times=times, a1=a1, a2=a2, params=p, noise=noise)


def _averaged_psd(signals: np.ndarray, dt: float, nperseg: int):
    """Two-sided Welch PSD per realization, Hann window, 50% overlap.

    Returns (omega ascending, mean PSD, per-bin standard error), with the
    angular axis oriented so a component exp(-i w t) appears at +w.
    """
    freqs, psd = welch(
        signals,
        fs=1.0 / dt,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
        axis=-1,
    )
    omega = -2.0 * math.pi * freqs
    order = np.argsort(omega)
    omega = omega[order]
    psd = psd[..., order]
    mean = psd.mean(axis=0)
    n_real = psd.shape[0]
    sem = psd.std(axis=0, ddof=1) / math.sqrt(n_real) if n_real > 1 else np.zeros_like(mean)
    return omega, mean, sem


def spectrum_split_detect(
    p: NhParams,
    noise: NoiseSpec,
    t_max: float,
    ensemble: NoisyEnsemble | None = None,
    fit_halfwidth: float | None = None,
    significance: float = 3.0,
) -> SplitDetection:
    """Detect off-center maxima in the stationary a2 power spectrum.

    Discards the initial 10/gamma transient, averages Hann periodograms over
    realizations (resolution <= gamma/10), and tests the curvature of the
    inverse spectrum at omega0: the spectrum is maximal off-center exactly
    when the coefficient of (omega - omega0)^2 in 1/S is significantly
    negative.  This pins the detected onset at the true two-maxima threshold
    instead of the much later half-height dip crossing.
    """
    if p.gamma <= 0.0:
        raise ConfigError("split detection needs gamma > 0")
    if noise.temperature <= 0.0:
        raise ConfigError("noise-free spectrum estimation refused (T = 0)")
    if ensemble is None:
        ensemble = simulate_noisy(p, noise, t_max)
    dt = noise.dt
    skip = int(math.ceil(10.0 / p.gamma / dt))
    nperseg = 1 << max(int(math.ceil(20.0 * math.pi / (p.gamma * dt))), 1).bit_length()
    kept = ensemble.a2.shape[1] - skip
    if kept < nperseg:
        raise InsufficientSamplesError(
            f"{kept} stationary samples < nperseg={nperseg} needed for gamma/10 resolution"
        )
    omega, psd2, sem2 = _averaged_psd(ensemble.a2[:, skip:], dt, nperseg)
    _, psd1, _ = _averaged_psd(ensemble.a1[:, skip:], dt, nperseg)

    half = fit_halfwidth if fit_halfwidth is not None else 1.2 * p.gamma
    sel = np.abs(omega - p.omega0) <= half
    if np.count_nonzero(sel) < 8:
        raise InsufficientSamplesError("fewer than 8 PSD bins inside the fit window")
    u = (omega[sel] - p.omega0) ** 2
    y = 1.0 / psd2[sel]
    w = psd2[sel] ** 2 / np.maximum(sem2[sel], 1e-300)  # 1/SE(1/S)
    design = np.column_stack([np.ones_like(u), u, u * u])
    wd = design * w[:, None]
    wy = y * w
    coef, *_ = np.linalg.lstsq(wd, wy, rcond=None)
    resid = wy - wd @ coef
    dof = max(u.size - 3, 1)
    cov = np.linalg.inv(wd.T @ wd) * float(resid @ resid) / dof
    beta = float(coef[1])
    beta_se = float(math.sqrt(max(cov[1, 1], 0.0)))

    split = beta < -significance * beta_se
    if split and coef[2] > 0.0:
        u_star = -0.5 * beta / float(coef[2])
        offset = math.sqrt(max(u_star, 0.0))
        peaks = (p.omega0 - offset, p.omega0 + offset)
    elif split:
        imax = int(np.argmax(np.where(sel, psd2, -np.inf)))
        off = abs(omega[imax] - p.omega0)
        peaks = (p.omega0 - off, p.omega0 + off)
    else:
        peaks = (p.omega0,)
    return SplitDetection(
        split=bool(split),
        peak_freqs=peaks,
        omega_axis=omega,
        psd_a1=psd1,
        psd_a2=psd2,
        curvature=beta,
        curvature_se=beta_se,
    )


def find_noisy_split(
    gamma: float,
    noise: NoiseSpec,
    t_max: float,
    omega_lo: float,
    omega_hi: float,
    tol: float,
    omega0: float = 0.0,
) -> float:
    """Bisect on Omega for the onset of the noisy a2-spectrum split.

    Each evaluation uses a fresh child seed (seed, step) so the bisection is
    deterministic for a fixed NoiseSpec.
    """
    if not (omega_lo < omega_hi):
        raise ConfigError(f"need omega_lo < omega_hi, got [{omega_lo}, {omega_hi}]")
    if tol <= 0:
        raise ConfigError(f"tol must be positive, got {tol}")

    def _flag(omega: float, step: int) -> bool:
        child = int(
            np.random.SeedSequence(entropy=noise.seed, spawn_key=(1000 + step,)).generate_state(1)[0]
        )
        spec = NoiseSpec(
            temperature=noise.temperature,
            seed=child,
            dt=noise.dt,
            n_realizations=noise.n_realizations,
        )
        p = NhParams(gamma=gamma, omega_big=float(omega), omega0=omega0)
        return spectrum_split_detect(p, spec, t_max).split

    lo_flag = _flag(omega_lo, 0)
    hi_flag = _flag(omega_hi, 1)
    if lo_flag or not hi_flag:
        raise BracketingError(
            f"no unsplit->split bracket: split={lo_flag} at {omega_lo}, "
            f"split={hi_flag} at {omega_hi}"
        )
    lo, hi = float(omega_lo), float(omega_hi)
    step = 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _flag(mid, step):
            hi = mid
        else:
            lo = mid
        step += 1
    return 0.5 * (lo + hi)
