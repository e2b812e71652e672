"""Two coupled oscillators against a finite oscillator bath.

Exact Hermitian spectral dynamics, the Born-Markov non-Hermitian reduction
with and without fluctuation-dissipation noise, eigenstate peak analysis,
and the averaged-amplitude symmetry-emergence threshold machinery.
"""

__version__ = "0.1.0"

from .model import (
    DerivedConstants,
    InitialState,
    SystemParams,
    bath_frequency,
    derive_constants,
    params_from_gamma,
    scale_to,
)
from .spectral import (
    ComponentProfile,
    CouplingMatrix,
    EigenBasis,
    PeakFeatures,
    build_matrix,
    component_profile,
    diagonalize,
    find_split_threshold,
    peak_features,
)
from .dynamics import (
    FixedInit,
    ModeCoefficients,
    RandomPhases,
    RatioCurve,
    Trajectory,
    amplitude_ratio,
    ensemble_ratio,
    integrate_ode,
    make_time_grid,
    phase_difference,
    project_initial,
    propagate,
    ratio_sweep,
    time_average_abs,
)
from .reduction import (
    NhEigensystem,
    NhParams,
    NoiseSpec,
    find_noisy_split,
    nh_eigensystem,
    nh_propagate,
    nh_ratio_curve,
    noisy_split_threshold,
    simulate_noisy,
    spectrum_split_detect,
)
from .estimator import (
    ModeSumSeries,
    cross_sum,
    mode_sum,
    peak_estimate_ratio,
    ratio_no_cross_no_xi,
    ratio_no_cross_terms,
    static_sum_ratio,
)
