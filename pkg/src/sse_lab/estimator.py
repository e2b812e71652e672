"""Mode-sum analysis chain: cross-term-free ratios, static sums, and the
peak-shape ratio estimate.

All time integrals share the dynamics grid policy and, unless asked
otherwise, start at 2 T_R, where the eigenmode phases have decohered enough
for the incoherent-sum arguments to apply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .dynamics import DIVISION_GUARD, RandomPhases, ensemble_ratio, make_time_grid
from .errors import ConfigError, DegenerateProfileError, DivisionGuardError
from .model import SystemParams
from .spectral import (
    EigenBasis,
    PeakFeatures,
    build_matrix,
    component_profile,
    diagonalize,
    peak_features,
)

__all__ = [
    "ModeSumSeries",
    "mode_sum",
    "cross_sum",
    "ratio_no_cross_terms",
    "ratio_no_cross_no_xi",
    "static_sum_ratio",
    "peak_estimate_ratio",
    "estimator_sweep",
]

_CHUNK_ROWS = 8192


@dataclass(frozen=True)
class ModeSumSeries:
    """|sum_k (e_k)_j^2 exp(-i (f_k - omega0) t)| sampled on a time grid."""

    times: np.ndarray
    values: np.ndarray
    component_index: int
    basis: EigenBasis


def _phase_sums(basis: EigenBasis, times: np.ndarray) -> np.ndarray:
    """Columns [S_11, S_12, S_22](t) with S_ij = sum_k (e_k)_i (e_k)_j e^{-i(f_k-w0)t}."""
    v1 = basis.vectors[0, :]
    v2 = basis.vectors[1, :]
    rows = np.column_stack([v1 * v1, v1 * v2, v2 * v2]).astype(complex)
    shifted = basis.freqs - basis.params.omega0
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, 3), dtype=complex)
    for lo in range(0, times.size, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, times.size)
        out[lo:hi] = np.exp(-1j * np.outer(times[lo:hi], shifted)) @ rows
    return out


def mode_sum(basis: EigenBasis, j: int, times) -> ModeSumSeries:
    """Modulus of the diagonal mode sum for head component j."""
    if j not in (1, 2):
        raise ConfigError(f"component index must be 1 or 2, got {j}")
    sums = _phase_sums(basis, times)
    values = np.abs(sums[:, 0] if j == 1 else sums[:, 2])
    return ModeSumSeries(
        times=np.asarray(times, dtype=float), values=values, component_index=j, basis=basis
    )


def cross_sum(basis: EigenBasis, times) -> np.ndarray:
    """Complex cross series xi(t) = sum_k (e_k)_1 (e_k)_2 e^{-i (f_k - omega0) t}."""
    return _phase_sums(basis, times)[:, 1]


def _averaging_grid(basis: EigenBasis, t_max: float, t_start: float | None):
    params = basis.params
    start = 2.0 * params.t_return() if t_start is None else float(t_start)
    if not t_max > start:
        raise ConfigError(
            f"t_max={t_max} must exceed the averaging start t={start} (2 T_R default)"
        )
    full = make_time_grid(params, t_max)
    dt = full[1] - full[0]
    n = max(int(math.ceil((t_max - start) / dt)), 1)
    return np.linspace(start, t_max, n + 1)


def ratio_no_cross_terms(basis: EigenBasis, t_max: float, t_start: float | None = None) -> float:
    """Averaged-ratio estimate with the sign-alternating terms dropped.

    Evaluates int sqrt(|S_1|^2 + |xi|^2) dt / int sqrt(|S_2|^2 + |xi|^2) dt
    over [2 T_R, t_max]; equal initial-magnitude factors are already divided
    out.
    """
    times = _averaging_grid(basis, t_max, t_start)
    sums = _phase_sums(basis, times)
    xi2 = np.abs(sums[:, 1]) ** 2
    num = trapezoid(np.sqrt(np.abs(sums[:, 0]) ** 2 + xi2), times)
    den = trapezoid(np.sqrt(np.abs(sums[:, 2]) ** 2 + xi2), times)
    if den < DIVISION_GUARD:
        raise DivisionGuardError(f"denominator integral {den:.3e} below guard")
    return float(num / den)


def ratio_no_cross_no_xi(basis: EigenBasis, t_max: float, t_start: float | None = None) -> float:
    """As ratio_no_cross_terms but with the |xi|^2 contribution removed."""
    times = _averaging_grid(basis, t_max, t_start)
    sums = _phase_sums(basis, times)
    num = trapezoid(np.abs(sums[:, 0]), times)
    den = trapezoid(np.abs(sums[:, 2]), times)
    if den < DIVISION_GUARD:
        raise DivisionGuardError(f"denominator integral {den:.3e} below guard")
    return float(num / den)


def static_sum_ratio(basis: EigenBasis) -> float:
    """sqrt(sum_k (e_k)_1^4) / sqrt(sum_k (e_k)_2^4); time drops out exactly."""
    v1 = basis.vectors[0, :]
    v2 = basis.vectors[1, :]
    num = math.sqrt(float(np.sum(v1**4)))
    den = math.sqrt(float(np.sum(v2**4)))
    if den < DIVISION_GUARD:
        raise DivisionGuardError(f"static denominator {den:.3e} below guard")
    return num / den


def peak_estimate_ratio(features1: PeakFeatures, features2: PeakFeatures) -> float:
    """Peak-shape estimate (s1 P1 sqrt(G1)) / (s2 P2 sqrt(G2)).

    s_j is sqrt(2) once component j is deep-split (half-height rule) and 1
    before; widths are the half-height measures from peak_features.
    """
    for feats in (features1, features2):
        if not feats.heights or not feats.total_width > 0.0:
            raise DegenerateProfileError(f"degenerate peak features: {feats}")
    s1 = math.sqrt(2.0) if features1.deep_split else 1.0
    s2 = math.sqrt(2.0) if features2.deep_split else 1.0
    num = s1 * math.sqrt(features1.total_width) * max(features1.heights)
    den = s2 * math.sqrt(features2.total_width) * max(features2.heights)
    return num / den


def estimator_sweep(
    params: SystemParams,
    omegas,
    t_max: float,
    ensemble: RandomPhases | None = None,
):
    """All estimator ratios (and optionally the full ensemble ratio) per Omega.

    Returns a dict of arrays keyed by the overlay CSV columns.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        raise ConfigError("omega grid is empty")
    cols = {
        "omega": omegas,
        "ratio_full": np.full(omegas.size, np.nan),
        "ratio_no_cross": np.empty(omegas.size),
        "ratio_no_xi": np.empty(omegas.size),
        "ratio_static": np.empty(omegas.size),
        "ratio_peak": np.empty(omegas.size),
    }
    for i, omega in enumerate(omegas):
        p = params.with_omega(float(omega))
        basis = diagonalize(build_matrix(p))
        cols["ratio_no_cross"][i] = ratio_no_cross_terms(basis, t_max)
        cols["ratio_no_xi"][i] = ratio_no_cross_no_xi(basis, t_max)
        cols["ratio_static"][i] = static_sum_ratio(basis)
        feats1 = peak_features(component_profile(basis, 1))
        feats2 = peak_features(component_profile(basis, 2))
        cols["ratio_peak"][i] = peak_estimate_ratio(feats1, feats2)
        if ensemble is not None:
            mean, _ = ensemble_ratio(p, ensemble.n_states, t_max, ensemble.seed)
            cols["ratio_full"][i] = mean
    return cols
