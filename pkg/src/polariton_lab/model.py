"""Dual-V stationary-light model in the linear-response regime.

Variables are ordered ``(E+, E-, sigma_gs, sigma_ge+, sigma_ge-)``.  All
quantities are in reduced units: the decoherence rate ``gamma`` sets the
frequency unit and ``c/gamma`` the length unit, with ``hbar = 1``.

Two wavenumber conventions appear here.  :func:`build_h` takes ``k`` for a
Fourier kernel ``exp(-ikz)``, matching the printed coefficient matrix.  The
propagation code expands fields in plane waves ``exp(+ikz)`` (numpy's FFT
convention); the generator for such a mode is :func:`mode_matrix`, which is
``build_h`` at ``-k``.  In that convention a forward probe has ``omega = +kc``
and the dark branch starts as ``omega ≈ k * v`` with ``v > 0`` forward.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateControlError, InvalidInputError

__all__ = [
    "ModelParams",
    "MixingAngles",
    "DerivedScales",
    "AdiabaticityReport",
    "build_h",
    "mode_matrix",
    "mode_matrices",
    "mixing_angles",
    "derived_scales",
    "dark_polariton_vector",
    "validate_adiabaticity",
    "ADIABATIC_PASS",
    "ADIABATIC_WARN",
]

E_PLUS, E_MINUS, SPIN, EXC_PLUS, EXC_MINUS = range(5)
FIELD_SLICE = slice(0, 2)
EXCITED_SLICE = slice(3, 5)

ADIABATIC_PASS = 10.0
ADIABATIC_WARN = 3.0


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the dual-V system (reduced units).

    Attributes
    ----------
    g_sqrt_n : float
        Collective probe coupling ``g*sqrt(N)``.
    omega_plus, omega_minus : complex
        Control Rabi frequencies of the forward and backward control fields.
    delta_plus, delta_minus : float
        One-photon detunings.
    gamma_plus, gamma_minus : float
        Optical coherence decay rates.
    c : float
        Vacuum speed of light.
    """

    g_sqrt_n: float
    omega_plus: complex
    omega_minus: complex = 0.0
    delta_plus: float = 0.0
    delta_minus: float = 0.0
    gamma_plus: float = 1.0
    gamma_minus: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("g_sqrt_n", "delta_plus", "delta_minus", "gamma_plus", "gamma_minus", "c"):
            val = getattr(self, name)
            if isinstance(val, complex) or not math.isfinite(float(val)):
                raise InvalidInputError(f"{name} must be a finite real number, got {val!r}")
            object.__setattr__(self, name, float(val))
        for name in ("omega_plus", "omega_minus"):
            val = complex(getattr(self, name))
            if not (math.isfinite(val.real) and math.isfinite(val.imag)):
                raise InvalidInputError(f"{name} must be finite, got {val!r}")
            object.__setattr__(self, name, val)
        if self.g_sqrt_n < 0:
            raise InvalidInputError(f"g_sqrt_n must be >= 0, got {self.g_sqrt_n}")
        if self.gamma_plus < 0 or self.gamma_minus < 0:
            raise InvalidInputError("gamma_plus and gamma_minus must be >= 0")
        if self.c <= 0:
            raise InvalidInputError(f"c must be > 0, got {self.c}")

    @property
    def omega_sq(self) -> float:
        return abs(self.omega_plus) ** 2 + abs(self.omega_minus) ** 2

    @property
    def gamma(self) -> float:
        """Reference decoherence rate (the larger of the two)."""
        return max(self.gamma_plus, self.gamma_minus)

    @property
    def big_gamma_plus(self) -> complex:
        return 1j * self.delta_plus + self.gamma_plus

    @property
    def big_gamma_minus(self) -> complex:
        return 1j * self.delta_minus + self.gamma_minus

    @property
    def omega_eff(self) -> float:
        return math.sqrt(self.g_sqrt_n**2 + self.omega_sq)

    @property
    def symmetric_decay(self) -> bool:
        return self.delta_plus == self.delta_minus and self.gamma_plus == self.gamma_minus

    def with_controls(self, omega_plus, omega_minus) -> "ModelParams":
        return dataclasses.replace(self, omega_plus=omega_plus, omega_minus=omega_minus)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for name in ("omega_plus", "omega_minus"):
            z = out[name]
            out[name] = z.real if z.imag == 0 else [z.real, z.imag]
        return out


@dataclass(frozen=True)
class MixingAngles:
    theta: float
    phi: float
    omega_sq: float


@dataclass(frozen=True)
class DerivedScales:
    v_gr: float
    l_abs: float
    omega_eff: float


@dataclass(frozen=True)
class AdiabaticityReport:
    """Ratios quantifying the two adiabatic conditions.

    ``temporal_ratio`` is ``Omega_eff * T``; ``spatial_ratio`` is
    ``L_p / sqrt(L_abs * c / gamma)``.  A ratio passes at >= 10; below 3 it is
    flagged as severe.
    """

    temporal_ratio: float
    spatial_ratio: float

    @property
    def temporal_pass(self) -> bool:
        return self.temporal_ratio >= ADIABATIC_PASS

    @property
    def spatial_pass(self) -> bool:
        return self.spatial_ratio >= ADIABATIC_PASS

    @property
    def passed(self) -> bool:
        return self.temporal_pass and self.spatial_pass

    @property
    def severe(self) -> bool:
        return min(self.temporal_ratio, self.spatial_ratio) < ADIABATIC_WARN

    @property
    def status(self) -> str:
        return "pass" if self.passed else "warn"

    def to_dict(self) -> dict:
        return {
            "temporal_ratio": self.temporal_ratio,
            "spatial_ratio": self.spatial_ratio,
            "temporal_pass": self.temporal_pass,
            "spatial_pass": self.spatial_pass,
            "status": self.status,
            "severe": self.severe,
        }


def build_h(params: ModelParams, k: float = 0.0) -> np.ndarray:
    """Coefficient matrix ``H(k)`` of ``dX/dt = -i H X`` (kernel ``exp(-ikz)``)."""
    p = params
    g = p.g_sqrt_n
    kc = k * p.c
    op, om = p.omega_plus, p.omega_minus
    return np.array(
        [
            [-kc, 0, 0, -g, 0],
            [0, kc, 0, 0, -g],
            [0, 0, 0, -op, -om],
            [-g, 0, -np.conj(op), -1j * p.big_gamma_plus, 0],
            [0, -g, -np.conj(om), 0, -1j * p.big_gamma_minus],
        ],
        dtype=complex,
    )


def mode_matrix(params: ModelParams, k: float) -> np.ndarray:
    """Generator for the plane-wave component ``exp(+ikz)``."""
    return build_h(params, -k)


def mode_matrices(params: ModelParams, k) -> np.ndarray:
    """Stack of :func:`mode_matrix` over an array of wavenumbers, shape (n, 5, 5)."""
    k = np.asarray(k, dtype=float).ravel()
    base = build_h(params, 0.0)
    out = np.broadcast_to(base, (k.size, 5, 5)).copy()
    out[:, E_PLUS, E_PLUS] = k * params.c
    out[:, E_MINUS, E_MINUS] = -k * params.c
    return out


def mixing_angles(params: ModelParams) -> MixingAngles:
    """``tan^2 theta = g^2 N / Omega^2`` and ``tan^2 phi = |Omega-|^2 / |Omega+|^2``."""
    osq = params.omega_sq
    if osq <= 0:
        raise DegenerateControlError("degenerate control fields: Omega+ = Omega- = 0")
    theta = math.atan2(params.g_sqrt_n, math.sqrt(osq))
    phi = math.atan2(abs(params.omega_minus), abs(params.omega_plus))
    return MixingAngles(theta=theta, phi=phi, omega_sq=osq)


def derived_scales(params: ModelParams) -> DerivedScales:
    """Slow-light group velocity, absorption length and effective Rabi frequency."""
    angles = mixing_angles(params)
    g2 = params.g_sqrt_n**2
    l_abs = params.c * params.gamma / g2 if g2 > 0 else math.inf
    return DerivedScales(
        v_gr=params.c * math.cos(angles.theta) ** 2,
        l_abs=l_abs,
        omega_eff=params.omega_eff,
    )


def dark_polariton_vector(params: ModelParams) -> np.ndarray:
    """Unit dark-state polariton vector at ``k = 0``.

    ``(cos(phi) cos(theta), sin(phi) cos(theta), -sin(theta), 0, 0)`` for real
    controls; complex controls enter through ``conj(Omega±)/Omega``, which keeps
    the vector in the null space of ``H(0)`` for any detunings and decay rates.
    """
    angles = mixing_angles(params)
    omega = math.sqrt(angles.omega_sq)
    ct, st = math.cos(angles.theta), math.sin(angles.theta)
    return np.array(
        [
            np.conj(params.omega_plus) / omega * ct,
            np.conj(params.omega_minus) / omega * ct,
            -st,
            0.0,
            0.0,
        ],
        dtype=complex,
    )


def validate_adiabaticity(
    params: ModelParams, pulse_duration: float, pulse_length: float
) -> AdiabaticityReport:
    """Evaluate ``Omega_eff * T >> 1`` and ``L_p >> sqrt(L_abs) sqrt(c/gamma)``."""
    if not pulse_duration > 0 or not pulse_length > 0:
        raise InvalidInputError("pulse_duration and pulse_length must be positive")
    # sqrt(L_abs * c / gamma) = c / (g sqrt N), which stays defined for gamma = 0
    g = params.g_sqrt_n
    spatial = pulse_length * g / params.c
    return AdiabaticityReport(
        temporal_ratio=params.omega_eff * pulse_duration,
        spatial_ratio=spatial,
    )
