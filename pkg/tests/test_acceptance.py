"""Acceptance gate: ten end-to-end criteria, each printing one PASS/FAIL line.

Oracles are independent of the code under test wherever possible: dense
eigensolvers, closed-form null vectors, finite differences of the exact
spectrum and closed-form complex-Gaussian spreading.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest

from polariton_lab import (
    ControlSchedule,
    Grid1D,
    ModelParams,
    PulseSpec,
    build_h,
    compare_full_vs_effective,
    dark_amplitude,
    dark_branch_derivatives,
    dark_polariton_vector,
    init_on_dark_branch,
    morris_shore,
    perturbative_coefficients,
    run_custom,
    run_retrieval_stationary,
    run_storage,
    track_dark_modes,
    verify_mass_identity,
)
from polariton_lab.propagation import centroid, evolve_full_series, max_stable_dt, rms_width
from polariton_lab.protocols import drift_velocity, instantaneous_drift_velocity


@pytest.fixture
def report(capsys):
    """Print one verdict line straight to the terminal, then assert it."""

    def _report(number: int, title: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}")
        assert ok, detail

    return _report


def _random_coupling(rng, n_a, n_b, rank=None):
    v = rng.normal(size=(n_a, n_b)) + 1j * rng.normal(size=(n_a, n_b))
    if rank is not None:
        left = rng.normal(size=(n_a, rank)) + 1j * rng.normal(size=(n_a, rank))
        right = rng.normal(size=(rank, n_b)) + 1j * rng.normal(size=(rank, n_b))
        v = left @ right
    return v


def _off_block(t: np.ndarray, n_pairs: int) -> np.ndarray:
    mask = np.ones(t.shape, dtype=bool)
    for j in range(n_pairs):
        mask[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] = False
    return t[mask]


def test_criterion_1_morris_shore_correctness(report):
    rng = np.random.default_rng(1)
    worst_block = worst_spec = 0.0
    bad_count = 0
    start = time.perf_counter()
    for case in range(200):
        n_a, n_b = rng.integers(1, 13, size=2)
        small = int(min(n_a, n_b))
        # every fourth case is rank deficient
        rank = int(rng.integers(0, small)) if case % 4 == 0 and small > 1 else None
        v = _random_coupling(rng, n_a, n_b, rank)
        v_norm = max(np.linalg.norm(v, 2), 1.0)
        dec = morris_shore(v)
        t = dec.transformed_matrix()
        worst_block = max(worst_block, np.max(np.abs(_off_block(t, dec.n_pairs)), initial=0.0) / v_norm)
        deficiency = small - np.linalg.matrix_rank(v)
        if dec.n_dark != abs(int(n_a) - int(n_b)) + deficiency:
            bad_count += 1
        oracle = np.sort(np.linalg.eigvalsh(dec.system_matrix()))
        worst_spec = max(worst_spec, np.max(np.abs(dec.spectrum() - oracle)) / v_norm)
    elapsed = time.perf_counter() - start
    ok = worst_block <= 1e-10 and worst_spec <= 1e-10 and bad_count == 0 and elapsed < 10
    report(1, "MS block form, dark count, spectrum", ok,
           f"off-block {worst_block:.2e}, spectrum {worst_spec:.2e}, "
           f"dark-count mismatches {bad_count}, {elapsed:.2f}s")


def _collinearity(a: np.ndarray, b: np.ndarray) -> float:
    return abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))


def test_criterion_2_closed_form_dark_variables(report):
    rng = np.random.default_rng(2)
    worst = 1.0
    for _ in range(500):
        v1, v2 = rng.uniform(-3, 3, size=2)
        dark = morris_shore([[v1], [v2]]).dark_vectors
        worst = min(worst, _collinearity(dark[0], np.array([v2, -v1, 0.0])))
    for _ in range(500):
        v1, v2, v3, v4 = rng.uniform(-3, 3, size=4)
        dark = morris_shore([[v1, 0.0], [0.0, v2], [v3, v4]]).dark_vectors
        ref = np.array([v2 * v3, v1 * v4, -v1 * v2, 0.0, 0.0])
        worst = min(worst, _collinearity(dark[0], ref))
    report(2, "closed-form dark variables (Lambda, M)", worst >= 1 - 1e-10,
           f"min collinearity 1 - {1 - worst:.2e} over 1000 couplings")


def _random_params(rng) -> ModelParams:
    return ModelParams(
        g_sqrt_n=rng.uniform(0.1, 20),
        omega_plus=complex(*rng.normal(size=2)) * rng.uniform(0.1, 10),
        omega_minus=complex(*rng.normal(size=2)) * rng.uniform(0.0, 10),
        delta_plus=rng.uniform(-5, 5),
        delta_minus=rng.uniform(-5, 5),
        gamma_plus=rng.uniform(0, 3),
        gamma_minus=rng.uniform(0, 3),
    )


def test_criterion_3_exact_darkness_at_k0(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        p = _random_params(rng)
        h = build_h(p, 0.0)
        y = dark_polariton_vector(p)
        worst = max(worst, np.linalg.norm(h @ y) / np.linalg.norm(h, 2))
    report(3, "exact darkness at k = 0", worst <= 1e-10, f"max |H(0) Y_D|/|H(0)| = {worst:.2e}")


def test_criterion_4_dispersion_coefficients(report):
    g = 10.0
    worst_c1 = worst_c2 = 0.0
    start = time.perf_counter()
    for theta in (math.pi / 6, math.pi / 4, math.pi / 3):
        omega = g / math.tan(theta)
        for phi in (0.0, math.pi / 6, math.pi / 3):
            for delta in (-1.0, 0.0, 2.0):
                p = ModelParams(g, omega * math.cos(phi), omega * math.sin(phi), delta, delta)
                coeffs = perturbative_coefficients(p)
                fd = dark_branch_derivatives(p, 1e-4)
                worst_c1 = max(worst_c1, abs(fd.d1_richardson - coeffs.c1) / abs(coeffs.c1))
                worst_c2 = max(worst_c2, abs(fd.d2_richardson - 2 * coeffs.c2) / abs(2 * coeffs.c2))
    elapsed = time.perf_counter() - start
    ok = worst_c1 <= 0.005 and worst_c2 <= 0.02 and elapsed < 30
    report(4, "dispersion coefficients vs finite differences", ok,
           f"C1 rel {worst_c1:.2e}, 2*C2 rel {worst_c2:.2e}, 27 points in {elapsed:.2f}s")


def test_criterion_5_mass_identity(report):
    rng = np.random.default_rng(5)
    worst = 0.0
    consistent = True
    for _ in range(50):
        gamma = rng.uniform(0.2, 3)
        delta = rng.uniform(-5, 5)
        p = ModelParams(rng.uniform(1, 20), rng.uniform(0.5, 10), rng.uniform(0, 10),
                        delta, delta, gamma, gamma)
        k_probe = rng.uniform(0.5, 20)
        rep = verify_mass_identity(p, k_probe, rng.uniform(1e-3, 1), 2 * math.pi / k_probe)
        worst = max(worst, rep.residual)
        consistent &= rep.recoil_consistent
    report(5, "complex mass identity", worst <= 1e-12 and consistent,
           f"max relative residual {worst:.2e}, recoil identities consistent: {consistent}")


def test_criterion_6_slow_light_limit(report):
    g, sigma = 10.0, 2.0
    errors = {}
    start = time.perf_counter()
    for cos2 in (0.5, 0.1, 0.01):
        omega = g * math.sqrt(cos2 / (1 - cos2))
        p = ModelParams(g, omega)
        v_gr = p.c * cos2
        t_final = 10 * sigma / v_gr
        length = 20 * sigma + v_gr * t_final + 8
        grid = Grid1D(1024, -length / 2, length / 2)
        pulse = PulseSpec(-length / 2 + 10.8 * sigma, sigma)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            state0 = init_on_dark_branch(p, pulse, grid)
        times = np.linspace(0, t_final, 11)
        states = evolve_full_series(state0, p, times, max_stable_dt(p, grid))
        cents = [centroid(grid.z, np.abs(s.amplitudes[0]) ** 2) for s in states]
        errors[cos2] = drift_velocity(times, cents) / v_gr - 1
    elapsed = time.perf_counter() - start
    worst = max(abs(e) for e in errors.values())
    detail = ", ".join(f"cos2theta={c}: {e:+.2e}" for c, e in errors.items())
    report(6, "slow-light group velocity", worst <= 0.01 and elapsed < 60, f"{detail}; {elapsed:.2f}s")


def _gaussian_width_sq(sigma: float, c2: complex, t: float) -> float:
    """Intensity rms width squared of a Gaussian under ``exp(-i C2 k^2 t)``."""
    a = sigma**2 + 1j * c2 * t
    return abs(a) ** 2 / a.real


def test_criterion_7_stationarity(report):
    p = ModelParams(2.0, math.sqrt(2), math.sqrt(2))
    sigma, t_final = 6.0, 10.0
    grid = Grid1D(1024, -80, 80)
    state0 = init_on_dark_branch(p, PulseSpec(0.0, sigma), grid)
    modes = track_dark_modes(p, grid.k)
    states = evolve_full_series(state0, p, [0.0, t_final], max_stable_dt(p, grid))
    psis = [dark_amplitude(s, p, modes) for s in states]
    dens = [np.abs(x) ** 2 for x in psis]
    drift = abs(centroid(grid.z, dens[1]) - centroid(grid.z, dens[0]))
    w0, w1 = (rms_width(grid.z, d) for d in dens)
    growth = w1**2 - w0**2
    coeffs = perturbative_coefficients(p)
    oracle = _gaussian_width_sq(sigma, coeffs.c2, t_final) - sigma**2
    rel = abs(growth / oracle - 1)
    ok = drift <= 0.02 * sigma and rel <= 0.05 and growth > 0
    report(7, "stationary light: no drift, diffusive spreading", ok,
           f"drift {drift / sigma:.2e} sigma, width^2 growth {growth:.4f} vs oracle {oracle:.4f} ({rel:.2%})")


def test_criterion_8_full_vs_effective(report):
    g, sigma, t_final = 10.0, 10.0, 200.0
    results = []
    for op, om, delta in ((3.0, 0.0, 0.0), (2.0, 1.0, 0.5), (1.5, 1.5, 0.0)):
        p = ModelParams(g, op, om, delta, delta)
        v = perturbative_coefficients(p).v
        length = 20 * sigma + abs(v) * t_final + 20
        grid = Grid1D(1024, -length / 2, length / 2)
        center = -length / 2 + 10 * sigma + 2 if v > 0 else 0.0
        rep = compare_full_vs_effective(p, PulseSpec(center, sigma), grid, t_final)
        results.append((rep.l2_error, rep.adiabatic))
    worst = max(r[0] for r in results)
    ok = worst <= 0.05 and all(r[1] for r in results)
    report(8, "full model vs effective equation", ok,
           f"L2 errors {', '.join(f'{r[0]:.1e}' for r in results)}; deep adiabatic: {all(r[1] for r in results)}")


def test_criterion_9_storage_retrieval(report):
    g, omega, half = 10.0, 5.0, 5.0 / math.sqrt(2)
    p = ModelParams(g, omega, gamma_plus=0.0, gamma_minus=0.0)
    grid = Grid1D(1024, -32, 32)
    store = ControlSchedule.from_levels((omega, 0.0), [(20.0, 0.0, 0.0), (5.0, 0.0, 0.0)])
    stored = run_storage(p, PulseSpec(-10.0, 2.0), grid, store, snapshot_interval=5.0)
    release = ControlSchedule.from_levels((0.0, 0.0), [(20.0, half, half), (10.0, half, half)])
    back = run_retrieval_stationary(p, stored.states[-1], grid, release, snapshot_interval=2.0)
    norm_ratio = back.dsp_norm[-1] / stored.dsp_norm[0]
    spin = stored.spin_fraction[-1]
    checks = {c.name: c for c in stored.checks + back.checks}
    sym = checks["retrieval.symmetry_l2"].value
    ok = norm_ratio >= 0.98 and spin >= 0.99 and sym <= 0.01 and all(c.passed for c in checks.values())
    report(9, "storage and stationary retrieval", ok,
           f"DSP norm ratio {norm_ratio:.6f}, stored spin share {spin:.6f}, |E+|^2 vs |E-|^2 L2 {sym:.1e}")


def test_criterion_10_drift_direction(report):
    g, omega, sigma, t_final = 10.0, 10.0, 4.0, 40.0
    grid = Grid1D(1024, -64, 64)
    worst = 0.0
    flips = True
    rows = []
    for cos2phi in (0.5, -0.5, 0.2, -0.2):
        phi = 0.5 * math.acos(cos2phi)
        op, om = omega * math.cos(phi), omega * math.sin(phi)
        measured = []
        for a, b in ((op, om), (om, op)):
            p = ModelParams(g, a, b)
            sched = ControlSchedule.constant(a, b, t_final)
            res = run_custom(p, PulseSpec(0.0, sigma), grid, sched, snapshot_interval=4.0)
            v_meas = drift_velocity(res.times, res.field_centroid)
            v_pred = instantaneous_drift_velocity(p, a, b)
            worst = max(worst, abs(v_meas / v_pred - 1))
            measured.append(v_meas)
        flips &= np.sign(measured[0]) == -np.sign(measured[1]) != 0
        rows.append(f"{cos2phi:+.1f}: {measured[0]:+.4f}/{measured[1]:+.4f}")
    report(10, "drift direction follows control imbalance", flips and worst <= 0.05,
           f"v (as given / swapped) {'; '.join(rows)}; max rel error {worst:.2e}")
