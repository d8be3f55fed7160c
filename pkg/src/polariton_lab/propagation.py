"""Per-mode time evolution of the five-field system on a periodic grid.

Fields are sampled on a uniform periodic grid and expanded in plane waves
``exp(+ikz)`` with ``k_j = 2*pi*j / (n*dz)``, ``j`` in numpy's FFT order
(``0, 1, ..., n/2-1, -n/2, ..., -1``).  Every mode evolves independently
under ``dX_k/dt = -i H_k X_k``; for time-independent coefficients each step is
the exact matrix exponential.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .dispersion import PerturbativeCoefficients, perturbative_coefficients, track_dark_modes
from .errors import (
    InvalidInputError,
    NonAdiabaticSpectrumError,
    StepSizeError,
    UnsupportedRegimeError,
)
from .model import ModelParams, mode_matrices, validate_adiabaticity

__all__ = [
    "Grid1D",
    "FieldState",
    "PulseSpec",
    "ComparisonReport",
    "ModePropagator",
    "init_on_dark_branch",
    "evolve_full",
    "evolve_full_series",
    "evolve_effective",
    "dark_amplitude",
    "compare_full_vs_effective",
    "max_stable_dt",
    "centroid",
    "rms_width",
]

COMPONENTS = ("E+", "E-", "sigma_gs", "sigma_ge+", "sigma_ge-")
NONADIABATIC_K_FRACTION = 0.1
NONADIABATIC_WEIGHT = 0.01


class AdiabaticityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid ``z_j = z_min + j*dz``, ``dz = (z_max - z_min)/n``."""

    n_points: int
    z_min: float
    z_max: float

    def __post_init__(self):
        n = int(self.n_points)
        if n < 16 or n & (n - 1):
            raise InvalidInputError(f"n_points must be a power of two >= 16, got {self.n_points}")
        if not self.z_max > self.z_min:
            raise InvalidInputError("z_max must exceed z_min")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "z_min", float(self.z_min))
        object.__setattr__(self, "z_max", float(self.z_max))

    @property
    def length(self) -> float:
        return self.z_max - self.z_min

    @property
    def dz(self) -> float:
        return self.length / self.n_points

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)

    @property
    def k_max(self) -> float:
        return math.pi / self.dz

    def to_k(self, x: np.ndarray) -> np.ndarray:
        return np.fft.fft(x, axis=-1)

    def to_z(self, x: np.ndarray) -> np.ndarray:
        return np.fft.ifft(x, axis=-1)


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian envelope whose intensity ``|psi|^2`` has rms width ``width``."""

    center: float
    width: float
    k0: float = 0.0
    amplitude: complex = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidInputError(f"pulse width must be positive, got {self.width}")

    def envelope(self, z: np.ndarray) -> np.ndarray:
        dz = z - self.center
        return self.amplitude * np.exp(-(dz**2) / (4 * self.width**2) + 1j * self.k0 * dz)

    def check_inside(self, grid: Grid1D) -> None:
        lo, hi = self.center - 5 * self.width, self.center + 5 * self.width
        if lo < grid.z_min or hi > grid.z_max:
            raise InvalidInputError(
                f"pulse support [{lo:.4g}, {hi:.4g}] not inside grid "
                f"[{grid.z_min:.4g}, {grid.z_max:.4g}]"
            )


@dataclass
class FieldState:
    """The five amplitudes on a grid, either in ``"z"`` or ``"k"`` representation."""

    grid: Grid1D
    amplitudes: np.ndarray
    representation: str = "z"
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (5, self.grid.n_points):
            raise InvalidInputError(
                f"amplitudes must have shape (5, {self.grid.n_points}), got {self.amplitudes.shape}"
            )
        if self.representation not in ("z", "k"):
            raise InvalidInputError("representation must be 'z' or 'k'")

    def to_k(self) -> "FieldState":
        if self.representation == "k":
            return self
        return replace(self, amplitudes=self.grid.to_k(self.amplitudes), representation="k")

    def to_z(self) -> "FieldState":
        if self.representation == "z":
            return self
        return replace(self, amplitudes=self.grid.to_z(self.amplitudes), representation="z")

    def component_norms(self) -> np.ndarray:
        """``int |X_i|^2 dz`` for each component (Parseval in k-space)."""
        weight = self.grid.dz if self.representation == "z" else self.grid.dz / self.grid.n_points
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1) * weight

    def norm(self) -> float:
        return float(np.sum(self.component_norms()))

    def fractions(self) -> dict:
        """Field / spin / excited-state shares of the current total norm."""
        parts = self.component_norms()
        total = parts.sum()
        if total == 0:
            return {"field": 0.0, "spin": 0.0, "excited": 0.0}
        field_f = (parts[0] + parts[1]) / total
        spin_f = parts[2] / total
        # the third share is the complement, so the three sum to one exactly
        return {"field": float(field_f), "spin": float(spin_f), "excited": float(1.0 - field_f - spin_f)}


@dataclass(frozen=True)
class ComparisonReport:
    l2_error: float
    centroid_full: float
    centroid_effective: float
    width_full: float
    width_effective: float
    norm_full: float
    norm_effective: float
    t_final: float
    adiabatic: bool

    @property
    def centroid_error(self) -> float:
        return abs(self.centroid_full - self.centroid_effective)

    @property
    def width_error(self) -> float:
        return abs(self.width_full - self.width_effective)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["centroid_error"] = self.centroid_error
        out["width_error"] = self.width_error
        return out


def centroid(z: np.ndarray, density: np.ndarray) -> float:
    total = np.sum(density)
    return float(np.sum(z * density) / total) if total > 0 else math.nan


def rms_width(z: np.ndarray, density: np.ndarray) -> float:
    total = np.sum(density)
    if total <= 0:
        return math.nan
    mu = np.sum(z * density) / total
    return float(math.sqrt(np.sum((z - mu) ** 2 * density) / total))


def max_stable_dt(params: ModelParams, grid: Grid1D) -> float:
    """Largest step allowed by ``dt <= 0.1/Omega_eff`` and ``dt <= 0.1/(k_max c)``."""
    bounds = [0.1 / (grid.k_max * params.c)]
    if params.omega_eff > 0:
        bounds.append(0.1 / params.omega_eff)
    return min(bounds)


def _check_dt(params: ModelParams, grid: Grid1D, dt: float) -> None:
    if not dt > 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    limit = max_stable_dt(params, grid)
    if dt > limit * (1 + 1e-12):
        raise StepSizeError(
            f"dt={dt:.6g} exceeds the allowed step {limit:.6g} "
            "(0.1/Omega_eff and 0.1/(k_max c))"
        )


def _batched_expm(mats: np.ndarray, threads: int = 1) -> np.ndarray:
    if threads <= 1 or mats.shape[0] < 2 * threads:
        return expm(mats)
    chunks = np.array_split(mats, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(expm, chunks)))


def _apply(u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply per-mode matrices ``u`` (n,5,5) to a ``(5, n)`` k-space state."""
    return np.einsum("kij,jk->ik", u, x)


class ModePropagator:
    """Exact per-mode propagators for constant coefficients, cached by step count."""

    def __init__(self, params: ModelParams, grid: Grid1D, dt: float, threads: int = 1):
        _check_dt(params, grid, dt)
        self.params = params
        self.grid = grid
        self.dt = float(dt)
        self.threads = threads
        self._gen = -1j * mode_matrices(params, grid.k)
        self._step = _batched_expm(self._gen * self.dt, threads)
        self._powers: dict[int, np.ndarray] = {}

    def _power(self, n: int) -> np.ndarray:
        if n not in self._powers:
            self._powers[n] = np.linalg.matrix_power(self._step, n)
        return self._powers[n]

    def advance(self, x_k: np.ndarray, duration: float) -> np.ndarray:
        """Advance a ``(5, n)`` k-space state by whole steps plus one remainder step."""
        if duration < 0:
            raise InvalidInputError("duration must be non-negative")
        n_steps = int(math.floor(duration / self.dt + 1e-9))
        rem = duration - n_steps * self.dt
        out = x_k
        if n_steps:
            out = _apply(self._power(n_steps), out)
        if rem > 1e-12 * self.dt:
            out = _apply(_batched_expm(self._gen * rem, self.threads), out)
        return out

    def exact(self, x_k: np.ndarray, duration: float) -> np.ndarray:
        """Single matrix exponential over ``duration`` (reference solution)."""
        return _apply(_batched_expm(self._gen * duration, self.threads), x_k)


def init_on_dark_branch(
    params: ModelParams, pulse: PulseSpec, grid: Grid1D, *, threads: int = 1
) -> FieldState:
    """Load a Gaussian pulse onto the dark branch, mode by mode.

    Each plane-wave component gets the pulse spectrum times the dark eigenvector
    of its mode generator, phase-continued from the ``k = 0`` dark vector.

    Raises
    ------
    NonAdiabaticSpectrumError
        If more than 1% of the spectral weight lies at ``|k| c > 0.1 Omega_eff``.
    """
    pulse.check_inside(grid)
    report = validate_adiabaticity(params, pulse.width / params.c, pulse.width)
    if not report.passed:
        warnings.warn(
            f"pulse is not deep in the adiabatic regime: {report.to_dict()}",
            AdiabaticityWarning,
            stacklevel=2,
        )
    psi_k = grid.to_k(pulse.envelope(grid.z))
    k = grid.k
    power = np.abs(psi_k) ** 2
    outside = np.abs(k) * params.c > NONADIABATIC_K_FRACTION * params.omega_eff
    weight = power[outside].sum() / power.sum()
    if weight > NONADIABATIC_WEIGHT:
        raise NonAdiabaticSpectrumError(
            f"{weight:.2%} of the pulse spectrum lies at |k|c > 0.1 Omega_eff"
        )
    _, right, _, _ = track_dark_modes(params, k, threads=threads)
    x_k = right.T * psi_k
    return FieldState(grid, grid.to_z(x_k), "z", 0.0)


def evolve_full(
    state: FieldState, params: ModelParams, t_final: float, dt: float, *, threads: int = 1
) -> FieldState:
    """Advance every mode by ``t_final`` with exact exponential steps of size ``dt``.

    Raises
    ------
    StepSizeError
        If ``dt > 0.1/Omega_eff`` or ``dt > 0.1/(k_max c)``.  There is no silent
        sub-stepping.
    """
    prop = ModePropagator(params, state.grid, dt, threads)
    x_k = prop.advance(state.to_k().amplitudes, t_final)
    out = FieldState(state.grid, x_k, "k", state.time + t_final)
    return out if state.representation == "k" else out.to_z()


def evolve_full_series(
    state: FieldState, params: ModelParams, times, dt: float, *, threads: int = 1
) -> list[FieldState]:
    """States (z-representation) at each of the increasing absolute ``times``."""
    prop = ModePropagator(params, state.grid, dt, threads)
    x_k = state.to_k().amplitudes
    t = state.time
    out = []
    for target in times:
        if target < t - 1e-12:
            raise InvalidInputError("snapshot times must be increasing")
        x_k = prop.advance(x_k, max(target - t, 0.0))
        t = target
        out.append(FieldState(state.grid, x_k, "k", t).to_z())
    return out


def evolve_effective(
    psi: np.ndarray, coeffs: PerturbativeCoefficients, t_final: float, grid: Grid1D
) -> np.ndarray:
    """Exact spectral solution of the effective polariton equation.

    Each component is multiplied by ``exp(-i (k C1 + k^2 C2) t)``; with ``C1 > 0``
    the envelope moves towards ``+z``.
    """
    k = grid.k
    phase = np.exp(-1j * (k * coeffs.c1 + k**2 * coeffs.c2) * t_final)
    return grid.to_z(grid.to_k(np.asarray(psi, dtype=complex)) * phase)


def dark_amplitude(state: FieldState, params: ModelParams, modes=None) -> np.ndarray:
    """Dark-polariton envelope ``Psi_D(z)`` from the biorthogonal projection of each mode.

    ``modes`` may carry a precomputed :func:`track_dark_modes` result.
    """
    if modes is None:
        modes = track_dark_modes(params, state.grid.k)
    left = modes[2]
    x_k = state.to_k().amplitudes
    psi_k = np.einsum("ki,ik->k", left, x_k)
    return state.grid.to_z(psi_k)


def compare_full_vs_effective(
    params: ModelParams,
    pulse: PulseSpec,
    grid: Grid1D,
    t_final: float,
    dt: float | None = None,
    *,
    threads: int = 1,
) -> ComparisonReport:
    """Run the five-field model and the effective equation from the same polariton.

    The full solution is projected on the tracked dark eigenvector of each mode
    and compared with the effective evolution of the initial projection.
    """
    if params.g_sqrt_n <= 0:
        raise UnsupportedRegimeError("dark-polariton projection undefined for g_sqrt_n = 0")
    coeffs = perturbative_coefficients(params)
    needed = 20 * pulse.width + abs(coeffs.v) * t_final
    if grid.length < needed:
        raise InvalidInputError(
            f"grid length {grid.length:.4g} < 20*width + |v|*t_final = {needed:.4g}"
        )
    if dt is None:
        dt = max_stable_dt(params, grid)
    report = validate_adiabaticity(params, pulse.width / params.c, pulse.width)
    state0 = init_on_dark_branch(params, pulse, grid, threads=threads)
    modes = track_dark_modes(params, grid.k, threads=threads)
    psi0 = dark_amplitude(state0, params, modes)
    final = evolve_full(state0, params, t_final, dt, threads=threads)
    psi_full = dark_amplitude(final, params, modes)
    psi_eff = evolve_effective(psi0, coeffs, t_final, grid)

    z = grid.z
    dens_full = np.abs(psi_full) ** 2
    dens_eff = np.abs(psi_eff) ** 2
    return ComparisonReport(
        l2_error=float(np.linalg.norm(psi_full - psi_eff) / np.linalg.norm(psi_full)),
        centroid_full=centroid(z, dens_full),
        centroid_effective=centroid(z, dens_eff),
        width_full=rms_width(z, dens_full),
        width_effective=rms_width(z, dens_eff),
        norm_full=float(np.sum(dens_full) * grid.dz),
        norm_effective=float(np.sum(dens_eff) * grid.dz),
        t_final=float(t_final),
        adiabatic=report.passed,
    )
