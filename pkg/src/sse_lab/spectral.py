"""Full Hermitian coupling matrix, exact diagonalization, and peak analysis.

The generator convention is da/dt = -i H a with H real symmetric of
dimension N+2: indices 0 and 1 are the two head oscillators, index 2+k is
bath oscillator k.  Peak analysis operates on the squared head components
(e_k)_j^2 of the eigenvectors, treated as a curve sampled at the
eigenfrequencies f_k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import BracketingError, ConfigError, DegenerateProfileError, EigensolverError
from .model import SystemParams, bath_frequencies

__all__ = [
    "MAX_DIMENSION",
    "CouplingMatrix",
    "EigenBasis",
    "ComponentProfile",
    "PeakFeatures",
    "build_matrix",
    "diagonalize",
    "component_profile",
    "peak_features",
    "find_split_threshold",
]

MAX_DIMENSION = 20_002


@dataclass(frozen=True)
class CouplingMatrix:
    """Real symmetric generator of the linear amplitude equations."""

    matrix: np.ndarray
    params: SystemParams

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EigenBasis:
    """Ascending eigenfrequencies and orthonormal eigenvectors (columns).

    Eigenvector signs follow a fixed convention: the largest-magnitude
    component of each vector is positive, ties broken toward lower index.
    """

    freqs: np.ndarray
    vectors: np.ndarray
    params: SystemParams

    @property
    def dimension(self) -> int:
        return self.freqs.size

    def head_component(self, j: int) -> np.ndarray:
        """Row j (1 or 2) of the eigenvector matrix: (e_k)_j for all k."""
        if j not in (1, 2):
            raise ConfigError(f"head component index must be 1 or 2, got {j}")
        return self.vectors[j - 1, :]


@dataclass(frozen=True)
class ComponentProfile:
    """(f_k, (e_k)_j) samples for one head component, sorted by frequency."""

    freqs: np.ndarray
    values: np.ndarray
    component_index: int
    omega0: float


@dataclass(frozen=True)
class PeakFeatures:
    """Peak descriptors of a squared component profile.

    peak_count  : number of dominant local maxima (1 or 2); two maxima count
                  as split as soon as any dip exists between them, which is
                  the transition the split threshold bisection tracks.
    heights     : squared sample maxima, one per counted peak.
    total_width : measure of the half-height region {f : y(f) >= ymax/2}
                  with linear interpolation -- the envelope FWHM while the
                  inter-peak dip stays above half height, and the sum of the
                  two single-peak FWHMs once it drops below.
    offsets     : |peak frequency - omega0| per counted peak.
    deep_split  : True once the half-height region splits in two, i.e. the
                  inter-peak minimum is below half the global maximum.  This
                  is the switch used by the peak-ratio estimator.
    """

    peak_count: int
    heights: tuple
    total_width: float
    offsets: tuple
    deep_split: bool


def build_matrix(params: SystemParams, max_dimension: int = MAX_DIMENSION) -> CouplingMatrix:
    """Assemble the (N+2) x (N+2) real symmetric coupling matrix."""
    n = params.n_bath + 2
    if n > max_dimension:
        raise ConfigError(f"matrix dimension {n} exceeds maximum {max_dimension}")
    h = np.zeros((n, n))
    h[0, 0] = h[1, 1] = params.omega0
    h[0, 1] = h[1, 0] = params.omega_big
    h[0, 2:] = params.g
    h[2:, 0] = params.g
    diag = np.arange(2, n)
    h[diag, diag] = bath_frequencies(params)
    return CouplingMatrix(matrix=h, params=params)


def diagonalize(coupling: CouplingMatrix) -> EigenBasis:
    """Dense symmetric eigendecomposition with the fixed sign convention."""
    try:
        freqs, vectors = np.linalg.eigh(coupling.matrix)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"symmetric eigensolver failed: {exc}") from exc
    cols = np.arange(vectors.shape[1])
    anchor = np.argmax(np.abs(vectors), axis=0)  # first index wins ties
    flip = vectors[anchor, cols] < 0.0
    vectors[:, flip] *= -1.0
    return EigenBasis(freqs=freqs, vectors=vectors, params=coupling.params)


def component_profile(basis: EigenBasis, j: int) -> ComponentProfile:
    """Head-component amplitudes (e_k)_j against eigenfrequency."""
    return ComponentProfile(
        freqs=basis.freqs,
        values=basis.head_component(j).copy(),
        component_index=j,
        omega0=basis.params.omega0,
    )


def _local_maxima(y: np.ndarray) -> np.ndarray:
    """Indices of local maxima, including plateau centers and endpoints."""
    idx, _ = find_peaks(y, plateau_size=1)
    ends = []
    if y.size >= 2:
        if y[0] > y[1]:
            ends.append(0)
        if y[-1] > y[-2]:
            ends.append(y.size - 1)
    if ends:
        idx = np.sort(np.concatenate([idx, np.array(ends, dtype=int)]))
    return idx


def _half_height_intervals(freqs: np.ndarray, y: np.ndarray, level: float):
    """Disjoint intervals of {f : y(f) >= level}, linear interpolation."""
    intervals = []
    start = freqs[0] if y[0] >= level else None
    for i in range(y.size - 1):
        y0, y1 = y[i], y[i + 1]
        if (y0 >= level) == (y1 >= level):
            continue
        xc = freqs[i] + (level - y0) / (y1 - y0) * (freqs[i + 1] - freqs[i])
        if y1 >= level:
            start = xc
        else:
            intervals.append((start, xc))
            start = None
    if start is not None:
        intervals.append((start, freqs[-1]))
    return intervals


def peak_features(profile: ComponentProfile, noise_floor: float = 1e-14) -> PeakFeatures:
    """Classify a squared component profile as single- or double-peaked.

    Requires at least ~16 bath modes of resolution.  The squared values are
    analysed directly, with no smoothing.
    """
    if profile.freqs.size < 18:
        raise ConfigError(
            f"profile has {profile.freqs.size} samples; need a basis with N >= 16"
        )
    y = profile.values.astype(float) ** 2
    ymax = float(y.max())
    if ymax < noise_floor:
        raise DegenerateProfileError(
            f"component {profile.component_index} profile below noise floor"
        )

    maxima = _local_maxima(y)
    # Dominant maxima only: a countable second peak must reach half height
    # and rise measurably above the dip separating it from the main peak.
    major = [int(i) for i in maxima if y[i] >= 0.5 * ymax]
    major.sort(key=lambda i: y[i], reverse=True)
    selected = [major[0]] if major else [int(np.argmax(y))]
    for i in major[1:]:
        lo, hi = min(i, selected[0]), max(i, selected[0])
        dip = y[lo : hi + 1].min()
        if dip < (1.0 - 1e-9) * min(y[i], y[selected[0]]):
            selected.append(i)
            break
    selected.sort()

    level = 0.5 * ymax
    intervals = _half_height_intervals(profile.freqs, y, level)
    total_width = float(sum(b - a for a, b in intervals))
    deep_split = len(intervals) >= 2

    heights = tuple(float(y[i]) for i in selected)
    offsets = tuple(float(abs(profile.freqs[i] - profile.omega0)) for i in selected)
    return PeakFeatures(
        peak_count=len(selected),
        heights=heights,
        total_width=total_width,
        offsets=offsets,
        deep_split=deep_split,
    )


def _peak_count_at(params: SystemParams, omega: float, j: int) -> int:
    basis = diagonalize(build_matrix(params.with_omega(omega)))
    return peak_features(component_profile(basis, j)).peak_count


def find_split_threshold(
    params: SystemParams,
    omega_lo: float,
    omega_hi: float,
    tol: float,
) -> float:
    """Bisect the single/double transition of the second component.

    Requires peak_count(j=2) == 1 at omega_lo and == 2 at omega_hi; returns
    the bracketing midpoint once the bracket width is <= tol.
    """
    if not (omega_lo < omega_hi):
        raise ConfigError(f"need omega_lo < omega_hi, got [{omega_lo}, {omega_hi}]")
    if tol <= 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    count_lo = _peak_count_at(params, omega_lo, 2)
    count_hi = _peak_count_at(params, omega_hi, 2)
    if count_lo != 1 or count_hi != 2:
        raise BracketingError(
            f"no single->double bracket: peak_count={count_lo} at {omega_lo}, "
            f"{count_hi} at {omega_hi}"
        )
    lo, hi = float(omega_lo), float(omega_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _peak_count_at(params, mid, 2) == 1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
