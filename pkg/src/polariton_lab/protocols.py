"""Control-field protocols: slow light, storage, stationary retrieval, drift control.

A :class:`ControlSchedule` is a chain of segments.  Inside a segment each
control Rabi frequency moves from its start to its end value along a raised
cosine, so both the value and its first derivative are continuous.  Constant
segments are propagated with cached exact exponentials; ramps use exponential
sub-steps with coefficients frozen at the sub-step midpoint.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .checks import Check
from .dispersion import track_dark_modes
from .errors import InvalidInputError, StepSizeError
from .model import ModelParams, build_h
from .propagation import (
    FieldState,
    Grid1D,
    ModePropagator,
    PulseSpec,
    centroid,
    dark_amplitude,
    init_on_dark_branch,
    rms_width,
)

__all__ = [
    "Segment",
    "ControlSchedule",
    "ScenarioResult",
    "run_custom",
    "run_storage",
    "run_retrieval_stationary",
    "drift_velocity",
    "instantaneous_drift_velocity",
    "schedule_step",
]

RAMP_ADIABATIC = 10.0
CONTINUITY_RTOL = 1e-12


class NonAdiabaticScheduleWarning(UserWarning):
    pass


def _raised_cosine(a: complex, b: complex, s: float) -> complex:
    return a + (b - a) * 0.5 * (1.0 - math.cos(math.pi * s))


@dataclass(frozen=True)
class Segment:
    """Raised-cosine move of ``(Omega+, Omega-)`` from ``start`` to ``end`` over ``duration``."""

    duration: float
    plus: tuple
    minus: tuple

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidInputError(f"segment duration must be positive, got {self.duration}")
        object.__setattr__(self, "plus", tuple(complex(x) for x in self.plus))
        object.__setattr__(self, "minus", tuple(complex(x) for x in self.minus))

    @property
    def is_ramp(self) -> bool:
        return self.plus[0] != self.plus[1] or self.minus[0] != self.minus[1]

    def controls(self, s: float) -> tuple:
        """Controls at fractional position ``s`` in ``[0, 1]``."""
        return (
            _raised_cosine(*self.plus, s),
            _raised_cosine(*self.minus, s),
        )

    def min_omega_sq(self) -> float:
        ss = np.linspace(0.0, 1.0, 257)
        return min(abs(p) ** 2 + abs(m) ** 2 for p, m in (self.controls(s) for s in ss))

    def max_omega_sq(self) -> float:
        return max(abs(self.plus[0]) ** 2 + abs(self.minus[0]) ** 2,
                   abs(self.plus[1]) ** 2 + abs(self.minus[1]) ** 2,
                   *(abs(p) ** 2 + abs(m) ** 2 for p, m in
                     (self.controls(s) for s in np.linspace(0, 1, 65))))


@dataclass(frozen=True)
class ControlSchedule:
    segments: tuple

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise InvalidInputError("schedule needs at least one segment")
        for i in range(1, len(segs)):
            a, b = segs[i - 1], segs[i]
            scale = max(1.0, abs(a.plus[1]), abs(a.minus[1]))
            if (abs(a.plus[1] - b.plus[0]) > CONTINUITY_RTOL * scale
                    or abs(a.minus[1] - b.minus[0]) > CONTINUITY_RTOL * scale):
                raise InvalidInputError(f"controls jump between segments {i - 1} and {i}")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def from_levels(cls, initial, steps) -> "ControlSchedule":
        """Build from an initial ``(Omega+, Omega-)`` and ``(duration, Omega+, Omega-)`` targets."""
        cur = tuple(complex(x) for x in initial)
        segs = []
        for duration, op, om in steps:
            nxt = (complex(op), complex(om))
            segs.append(Segment(duration, (cur[0], nxt[0]), (cur[1], nxt[1])))
            cur = nxt
        return cls(tuple(segs))

    @classmethod
    def constant(cls, omega_plus, omega_minus, duration) -> "ControlSchedule":
        return cls.from_levels((omega_plus, omega_minus), [(duration, omega_plus, omega_minus)])

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def initial(self) -> tuple:
        s = self.segments[0]
        return s.plus[0], s.minus[0]

    @property
    def final(self) -> tuple:
        s = self.segments[-1]
        return s.plus[1], s.minus[1]

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def controls_at(self, t: float) -> tuple:
        edges = self.boundaries()
        i = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(self.segments) - 1))
        seg = self.segments[i]
        s = min(max((t - edges[i]) / seg.duration, 0.0), 1.0)
        return seg.controls(s)

    def nonadiabatic_ramps(self, params: ModelParams) -> list:
        """``(index, Omega_eff*T_ramp)`` for every ramp below the adiabatic threshold."""
        out = []
        for i, seg in enumerate(self.segments):
            if not seg.is_ramp:
                continue
            omega_eff = math.sqrt(params.g_sqrt_n**2 + seg.min_omega_sq())
            ratio = omega_eff * seg.duration
            if omega_eff > 0 and ratio < RAMP_ADIABATIC:
                out.append((i, ratio))
        return out

    def to_dict(self) -> dict:
        def num(z):
            return z.real if z.imag == 0 else [z.real, z.imag]

        return {
            "initial": [num(self.initial[0]), num(self.initial[1])],
            "segments": [
                {"duration": s.duration, "omega_plus": num(s.plus[1]), "omega_minus": num(s.minus[1])}
                for s in self.segments
            ],
        }


@dataclass
class ScenarioResult:
    """Time-aligned diagnostics of a protocol run.

    Fractions are shares of the current total norm; ``dsp_norm`` is the norm of
    the dark-polariton projection under the instantaneous controls.
    """

    times: np.ndarray
    states: list
    psi_d: list
    total_norm: np.ndarray
    dsp_norm: np.ndarray
    spin_fraction: np.ndarray
    field_fraction: np.ndarray
    excited_fraction: np.ndarray
    centroid: np.ndarray
    width: np.ndarray
    field_centroid: np.ndarray
    controls: list
    checks: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "times": self.times.tolist(),
            "total_norm": self.total_norm.tolist(),
            "dsp_norm": self.dsp_norm.tolist(),
            "spin_fraction": self.spin_fraction.tolist(),
            "field_fraction": self.field_fraction.tolist(),
            "excited_fraction": self.excited_fraction.tolist(),
            "centroid": self.centroid.tolist(),
            "width": self.width.tolist(),
            "field_centroid": self.field_centroid.tolist(),
            "checks": [c.to_dict() for c in self.checks],
            "warnings": list(self.warnings),
        }


def schedule_step(params: ModelParams, grid: Grid1D, schedule: ControlSchedule) -> float:
    """Default sub-step: ``0.01 * min(1/Omega_eff, T_ramp)``, also within ``0.1/(k_max c)``."""
    max_osq = max(s.max_omega_sq() for s in schedule.segments)
    omega_eff = math.sqrt(params.g_sqrt_n**2 + max_osq)
    bounds = [0.1 / (grid.k_max * params.c)]
    if omega_eff > 0:
        bounds.append(0.01 / omega_eff)
    ramps = [s.duration for s in schedule.segments if s.is_ramp]
    if ramps:
        bounds.append(0.01 * min(ramps))
    return min(bounds)


def _taylor_terms(rho: float) -> int:
    """Smallest order whose truncation error bound ``rho^(m+1)/(m+1)!`` is below 1e-17."""
    if rho >= 1.0:
        raise InvalidInputError(f"ramp sub-step too large (||H dt|| = {rho:.3g})")
    m, bound = 0, 1.0
    while bound > 1e-17:
        m += 1
        bound *= rho / (m + 1)
    return m


def _advance_ramp(x_k, params, grid, seg, t_lo, t_hi, dt):
    """Advance through ``[t_lo, t_hi]`` (segment-local times) with midpoint-frozen steps.

    Each sub-step applies ``exp(-i H h)`` as a Taylor series truncated at a
    norm-based order, which is the exact exponential to round-off.
    """
    span = t_hi - t_lo
    if span <= 0:
        return x_k
    m = max(1, math.ceil(span / dt - 1e-9))
    h = span / m
    kc = grid.k * params.c
    kc_max = float(np.max(np.abs(kc)))
    scaled_kc = [None] + [(-1j * h / j) * kc for j in range(1, 60)]
    x_k = x_k.copy()
    for step in range(m):
        s = (t_lo + (step + 0.5) * h) / seg.duration
        op, om = seg.controls(s)
        b = build_h(params.with_controls(op, om), 0.0)
        n_terms = _taylor_terms(h * (kc_max + np.abs(b).sum(axis=1).max()))
        term = x_k
        for j in range(1, n_terms + 1):
            nxt = ((-1j * h / j) * b) @ term
            nxt[0] += scaled_kc[j] * term[0]
            nxt[1] -= scaled_kc[j] * term[1]
            x_k += nxt
            term = nxt
    return x_k


def _snapshot_times(schedule: ControlSchedule, interval: float | None) -> np.ndarray:
    edges = schedule.boundaries()
    if interval is None:
        return edges
    grid_t = np.arange(0.0, schedule.duration + 0.5 * interval, interval)
    grid_t = grid_t[grid_t <= schedule.duration + 1e-12]
    times = np.unique(np.round(np.concatenate([edges, grid_t]), 12))
    return times


def _evolve_schedule(state: FieldState, params, schedule, times, dt, threads):
    grid = state.grid
    edges = schedule.boundaries()
    x_k = state.to_k().amplitudes
    out = [x_k]
    t = 0.0
    props = {}
    for target in times[1:]:
        while t < target - 1e-12:
            i = int(np.clip(np.searchsorted(edges, t + 1e-12, side="right") - 1, 0,
                            len(schedule.segments) - 1))
            seg = schedule.segments[i]
            stop = min(target, edges[i + 1])
            if seg.is_ramp:
                x_k = _advance_ramp(x_k, params, grid, seg, t - edges[i], stop - edges[i], dt)
            else:
                if i not in props:
                    frozen = params.with_controls(seg.plus[0], seg.minus[0])
                    props[i] = ModePropagator(frozen, grid, dt, threads)
                x_k = props[i].advance(x_k, stop - t)
            t = stop
        out.append(x_k)
    return out


def _diagnose(states_k, times, params, grid, schedule, threads):
    states, psis = [], []
    total, dsp, spin, fieldf, exc, cen, wid, fcen, ctrl = ([] for _ in range(9))
    z = grid.z
    for t, x_k in zip(times, states_k):
        op, om = schedule.controls_at(t)
        p = params.with_controls(op, om)
        st = FieldState(grid, x_k, "k", float(t)).to_z()
        modes = track_dark_modes(p, grid.k, threads=threads)
        psi = dark_amplitude(st, p, modes)
        dens = np.abs(psi) ** 2
        fr = st.fractions()
        fdens = np.abs(st.amplitudes[0]) ** 2 + np.abs(st.amplitudes[1]) ** 2
        states.append(st)
        psis.append(psi)
        total.append(st.norm())
        dsp.append(float(np.sum(dens) * grid.dz))
        spin.append(fr["spin"])
        fieldf.append(fr["field"])
        exc.append(fr["excited"])
        cen.append(centroid(z, dens))
        wid.append(rms_width(z, dens))
        fcen.append(centroid(z, fdens))
        ctrl.append((op, om))
    arr = np.asarray
    return ScenarioResult(
        times=arr(times, dtype=float),
        states=states,
        psi_d=psis,
        total_norm=arr(total),
        dsp_norm=arr(dsp),
        spin_fraction=arr(spin),
        field_fraction=arr(fieldf),
        excited_fraction=arr(exc),
        centroid=arr(cen),
        width=arr(wid),
        field_centroid=arr(fcen),
        controls=ctrl,
    )


def run_custom(
    params: ModelParams,
    pulse: PulseSpec | None,
    grid: Grid1D,
    schedule: ControlSchedule,
    *,
    initial_state: FieldState | None = None,
    dt: float | None = None,
    snapshot_interval: float | None = None,
    threads: int = 1,
) -> ScenarioResult:
    """Evolve the full model through ``schedule`` and record diagnostics.

    Without ``initial_state`` the pulse is loaded on the dark branch of the
    schedule's initial controls.  No physics assertions are made.
    """
    limit = schedule_step(params, grid, schedule)
    if dt is None:
        dt = limit
    elif dt > limit * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:.6g} exceeds the schedule step bound {limit:.6g}")
    if initial_state is None:
        if pulse is None:
            raise InvalidInputError("need a pulse or an initial state")
        initial_state = init_on_dark_branch(
            params.with_controls(*schedule.initial), pulse, grid, threads=threads
        )
    times = _snapshot_times(schedule, snapshot_interval)
    states_k = _evolve_schedule(initial_state, params, schedule, times, dt, threads)
    result = _diagnose(states_k, times, params, grid, schedule, threads)
    result.times = result.times + initial_state.time
    for st, t in zip(result.states, result.times):
        st.time = float(t)
    for i, ratio in schedule.nonadiabatic_ramps(params):
        msg = f"segment {i} ramp is not adiabatic (Omega_eff*T_ramp = {ratio:.3g} < 10)"
        result.warnings.append(msg)
        warnings.warn(msg, NonAdiabaticScheduleWarning, stacklevel=2)
    return result


def instantaneous_drift_velocity(params: ModelParams, omega_plus, omega_minus) -> float:
    """``c cos^2(theta) cos(2 phi)`` for the given controls (0 when both are off)."""
    osq = abs(omega_plus) ** 2 + abs(omega_minus) ** 2
    if osq == 0:
        return 0.0
    g2 = params.g_sqrt_n**2
    cos2_theta = osq / (osq + g2)
    cos_2phi = (abs(omega_plus) ** 2 - abs(omega_minus) ** 2) / osq
    return params.c * cos2_theta * cos_2phi


def drift_velocity(times, positions) -> float:
    """Least-squares slope of ``positions`` against ``times``."""
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if times.size < 2:
        return math.nan
    return float(np.polyfit(times, positions, 1)[0])


def _schedule_integrals(params: ModelParams, schedule: ControlSchedule, samples: int = 4001):
    """``int C1 dt`` and ``int C2 dt`` over the schedule (trapezoid rule)."""
    c1_int = 0.0
    c2_int = 0.0
    g2 = params.g_sqrt_n**2
    gam = complex(params.delta_plus, -params.gamma_plus)
    for seg in schedule.segments:
        s = np.linspace(0.0, 1.0, samples)
        c1 = np.empty(samples)
        c2 = np.empty(samples, dtype=complex)
        for j, sj in enumerate(s):
            op, om = seg.controls(sj)
            osq = abs(op) ** 2 + abs(om) ** 2
            if osq == 0:
                c1[j] = 0.0
                c2[j] = 0.0
                continue
            cos2t = osq / (osq + g2)
            sin2t = 1.0 - cos2t
            c2p = (abs(op) ** 2 - abs(om) ** 2) / osq
            s2p = 1.0 - c2p**2
            v_gr = params.c * cos2t
            c1[j] = v_gr * c2p
            c2[j] = v_gr * params.c / g2 * gam * (s2p + c2p**2 * sin2t**2)
        c1_int += trapezoid(c1, s) * seg.duration
        c2_int += trapezoid(c2, s) * seg.duration
    return c1_int, c2_int


def _relative_l2(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def run_storage(
    params: ModelParams,
    pulse: PulseSpec,
    grid: Grid1D,
    schedule: ControlSchedule,
    **kwargs,
) -> ScenarioResult:
    """Store a forward slow-light pulse in the spin coherence by turning the control off.

    Checks after the last ramp: spin share >= 0.99, residual probe amplitude
    <= 1e-3 of the initial probe peak, and the stored spin profile equal (2%
    relative L2) to minus the initial polariton envelope carried along by the
    effective propagation law.  A non-adiabatic schedule turns the checks into
    diagnostics.
    """
    op0, om0 = schedule.initial
    if om0 != 0:
        raise InvalidInputError("storage starts from a single forward control (Omega- = 0)")
    if schedule.final != (0, 0):
        raise InvalidInputError("storage schedule must end with both controls off")
    if params.g_sqrt_n <= 0:
        raise InvalidInputError("storage needs g_sqrt_n > 0")
    result = run_custom(params, pulse, grid, schedule, **kwargs)
    enforced = not result.warnings

    first, last = result.states[0], result.states[-1]
    probe_peak0 = float(np.max(np.abs(first.amplitudes[0])))
    probe_peak1 = float(np.max(np.abs(last.amplitudes[:2])))

    psi0_k = grid.to_k(result.psi_d[0])
    c1_int, c2_int = _schedule_integrals(params, schedule)
    k = grid.k
    if params.symmetric_decay:
        expected = -grid.to_z(psi0_k * np.exp(-1j * (k * c1_int + k**2 * c2_int)))
    else:
        expected = -grid.to_z(psi0_k * np.exp(-1j * k * c1_int))
    result.checks += [
        Check("storage.spin_fraction", float(result.spin_fraction[-1]), 0.99, ">=", enforced),
        Check("storage.field_residual", probe_peak1 / probe_peak0, 1e-3, "<=", enforced),
        Check("storage.profile_l2", _relative_l2(last.amplitudes[2], expected), 0.02, "<=", enforced),
    ]
    return result


def run_retrieval_stationary(
    params: ModelParams,
    stored: FieldState,
    grid: Grid1D,
    schedule: ControlSchedule,
    **kwargs,
) -> ScenarioResult:
    """Release a stored spin excitation with two counter-propagating controls.

    With equal final controls the released probes must be mirror images
    (|E+|^2 vs |E-|^2 within 1% relative L2) and the field-intensity centroid
    must drift by at most 0.02 sigma_z per 10/gamma over the final hold segment.
    With unequal final controls the drift is compared with
    ``c cos^2(theta) cos(2 phi)`` (5%).
    """
    if schedule.initial != (0, 0):
        raise InvalidInputError("retrieval schedule must start with both controls off")
    if schedule.segments[-1].is_ramp:
        raise InvalidInputError("retrieval schedule must end with a constant hold segment")
    spin = np.abs(stored.to_z().amplitudes[2]) ** 2
    sigma_z = rms_width(grid.z, spin)
    result = run_custom(params, None, grid, schedule, initial_state=stored, **kwargs)
    enforced = not result.warnings

    hold_start = stored.time + schedule.boundaries()[-2]
    hold = result.times >= hold_start - 1e-12
    v_meas = drift_velocity(result.times[hold], result.field_centroid[hold])
    last = result.states[-1]
    ep = np.abs(last.amplitudes[0]) ** 2
    em = np.abs(last.amplitudes[1]) ** 2
    op, om = schedule.final
    gamma_unit = params.gamma if params.gamma > 0 else 1.0
    if abs(op) == abs(om):
        result.checks += [
            Check("retrieval.symmetry_l2", _relative_l2(ep, em), 0.01, "<=", enforced),
            Check("retrieval.drift_per_10_over_gamma",
                  abs(v_meas) * 10.0 / gamma_unit / sigma_z, 0.02, "<=", enforced),
        ]
    else:
        v_pred = instantaneous_drift_velocity(params, op, om)
        result.checks.append(
            Check("retrieval.drift_velocity_rel", abs(v_meas - v_pred) / abs(v_pred), 0.05, "<=", enforced)
        )
    return result
