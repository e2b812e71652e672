"""Physical parameters, derived constants, scaling rules, and the bath grid.

All frequencies are angular (radian / time unit) with hbar = 1.  The default
working frame is the rotating frame omega0 = 0; a nonzero carrier only shifts
every eigenfrequency and leaves all modulus observables unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError

__all__ = [
    "SystemParams",
    "InitialState",
    "DerivedConstants",
    "derive_constants",
    "bath_frequency",
    "bath_frequencies",
    "scale_to",
    "params_from_gamma",
    "load_params_config",
]


@dataclass(frozen=True)
class SystemParams:
    """Model constants for the two heads + finite bath system.

    n_bath      : number of bath oscillators N
    delta_omega : bath frequency spacing (> 0)
    g           : head-1 to bath coupling (>= 0, same for every bath mode)
    omega_big   : head-head coupling Omega (>= 0)
    omega0      : carrier frequency of both heads (default rotating frame, 0)
    """

    n_bath: int
    delta_omega: float
    g: float
    omega_big: float
    omega0: float = 0.0

    def __post_init__(self):
        if int(self.n_bath) != self.n_bath or self.n_bath < 1:
            raise ConfigError(f"n_bath must be a positive integer, got {self.n_bath}")
        if not (self.delta_omega > 0.0) or not math.isfinite(self.delta_omega):
            raise ConfigError(f"delta_omega must be positive, got {self.delta_omega}")
        if self.g < 0.0 or not math.isfinite(self.g):
            raise ConfigError(f"g must be >= 0, got {self.g}")
        if self.omega_big < 0.0 or not math.isfinite(self.omega_big):
            raise ConfigError(f"omega_big must be >= 0, got {self.omega_big}")
        if not math.isfinite(self.omega0):
            raise ConfigError(f"omega0 must be finite, got {self.omega0}")

    def gamma(self) -> float:
        """Effective decay rate pi * g**2 / delta_omega."""
        return math.pi * self.g * self.g / self.delta_omega

    def omega_ep(self) -> float:
        """Exceptional-point coupling of the noise-free reduction, gamma / 2."""
        return 0.5 * self.gamma()

    def omega_sse(self) -> float:
        """Symmetry-emergence / spectral-split coupling, gamma / sqrt(2)."""
        return self.gamma() / math.sqrt(2.0)

    def t_return(self) -> float:
        """Bath revival time 2 pi / delta_omega."""
        return 2.0 * math.pi / self.delta_omega

    def with_omega(self, omega_big: float) -> "SystemParams":
        return replace(self, omega_big=float(omega_big))


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float
    omega_ep: float
    omega_sse: float
    t_return: float


def derive_constants(params: SystemParams) -> DerivedConstants:
    """Bundle the derived rates and times of a parameter set."""
    return DerivedConstants(
        gamma=params.gamma(),
        omega_ep=params.omega_ep(),
        omega_sse=params.omega_sse(),
        t_return=params.t_return(),
    )


def bath_frequency(params: SystemParams, k: int) -> float:
    """Frequency of bath oscillator k (1-based): omega0 + delta_omega*(k - N/2)."""
    if not 1 <= k <= params.n_bath:
        raise ConfigError(f"bath index k={k} outside 1..{params.n_bath}")
    return params.omega0 + params.delta_omega * (k - params.n_bath / 2.0)


def bath_frequencies(params: SystemParams) -> np.ndarray:
    """All bath frequencies as an ascending array of length n_bath."""
    k = np.arange(1, params.n_bath + 1, dtype=float)
    return params.omega0 + params.delta_omega * (k - params.n_bath / 2.0)


def scale_to(params: SystemParams, n_new: int) -> SystemParams:
    """Rescale to a different bath size at fixed band width and decay rate.

    delta_omega scales as 1/N and g as 1/sqrt(N), so N*delta_omega and
    gamma = pi g^2/delta_omega are invariant.
    """
    if int(n_new) != n_new or n_new < 1:
        raise ConfigError(f"n_new must be a positive integer, got {n_new}")
    ratio = params.n_bath / n_new
    return replace(
        params,
        n_bath=int(n_new),
        delta_omega=params.delta_omega * ratio,
        g=params.g * math.sqrt(ratio),
    )


def params_from_gamma(
    n_bath: int = 400,
    gamma: float = 0.01,
    band_width: float = 1.0,
    omega_big: float = 0.0,
    omega0: float = 0.0,
) -> SystemParams:
    """Desk-scale constructor: pick g from a target decay rate.

    delta_omega = band_width / n_bath and g = sqrt(gamma*delta_omega/pi),
    which keeps gamma well inside the bath band for the default values.
    """
    if gamma < 0.0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    delta_omega = band_width / n_bath
    g = math.sqrt(gamma * delta_omega / math.pi)
    return SystemParams(
        n_bath=n_bath, delta_omega=delta_omega, g=g, omega_big=omega_big, omega0=omega0
    )


@dataclass(frozen=True)
class InitialState:
    """Initial complex amplitudes; bath defaults to empty (all zero).

    bath_0, when given, must match n_bath of the paired SystemParams.
    """

    a1_0: complex = 1.0 + 0.0j
    a2_0: complex = 0.0 + 0.0j
    bath_0: tuple = field(default=())

    def state_vector(self, n_bath: int) -> np.ndarray:
        """Full (N+2)-component complex vector [a1, a2, b_1..b_N]."""
        state = np.zeros(n_bath + 2, dtype=complex)
        state[0] = self.a1_0
        state[1] = self.a2_0
        if len(self.bath_0):
            if len(self.bath_0) != n_bath:
                raise ConfigError(
                    f"bath_0 has length {len(self.bath_0)}, expected {n_bath}"
                )
            state[2:] = np.asarray(self.bath_0, dtype=complex)
        return state


_CONFIG_KEYS = {"n_bath": int, "delta_omega": float, "g": float,
                "omega_big": float, "omega0": float}


def load_params_config(path) -> SystemParams:
    """Read a flat key = value config file into SystemParams.

    Accepted keys: n_bath, delta_omega, g, omega_big, omega0.  Lines may use
    '=' or ':' separators; blank lines and '#' comments are ignored.
    """
    raw: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            sep = "=" if "=" in text else (":" if ":" in text else None)
            if sep is None:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = text.partition(sep)
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                raw[key] = _CONFIG_KEYS[key](value.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    missing = {"n_bath", "delta_omega", "g", "omega_big"} - raw.keys()
    if missing:
        raise ConfigError(f"{path}: missing required keys {sorted(missing)}")
    return SystemParams(**raw)
