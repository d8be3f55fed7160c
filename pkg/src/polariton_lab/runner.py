"""Run orchestration for the command-line tool.

Every mode writes its artifacts plus ``manifest.json`` into the output
directory.  The manifest is a pure function of the configuration, so repeated
runs are byte-identical; wall-clock time goes to a separate ``timing.json``.
"""

from __future__ import annotations

import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .checks import Check, all_enforced_pass
from .config import RunConfig, config_to_dict
from .dispersion import (
    branches_to_csv,
    dark_branch,
    dark_branch_derivatives,
    eigen_branches,
    perturbative_coefficients,
    track_dark_modes,
)
from .errors import InvalidInputError, PolaritonLabError
from .model import build_h, derived_scales, mixing_angles, validate_adiabaticity
from .morris_shore import a_set_dark_vectors, dark_stability_under_b_diagonal, morris_shore
from .propagation import (
    dark_amplitude,
    evolve_effective,
    evolve_full_series,
    init_on_dark_branch,
    max_stable_dt,
)
from .protocols import ControlSchedule, run_custom, run_retrieval_stationary, run_storage
from .serialize import dumps, snapshot_csv, write_text

UNITS = "reduced units: gamma = c = hbar = 1 (times in 1/gamma, lengths in c/gamma)"
SIGN_CONVENTION = (
    "plane waves exp(+ikz) evolve as exp(-i omega t); "
    "dark branch omega(k) = C1 k + C2 k^2, C1 > 0 moves towards +z"
)


class RunError(PolaritonLabError):
    """A physics or I/O failure, tagged with the configuration section it came from."""

    def __init__(self, section: str, exc: Exception):
        self.section = section
        self.cause = exc
        super().__init__(f"{section}: {type(exc).__name__}: {exc}")


def _rel(a: complex, b: complex, scale: float | None = None) -> float:
    den = abs(b) if scale is None else scale
    return float(abs(a - b) / den) if den > 0 else float(abs(a - b))


def _coupling_from_model(params) -> np.ndarray:
    """Bipartite coupling of ``H(0)``: rows ``(E+, E-, S)``, columns ``(P+, P-)``."""
    h = build_h(params, 0.0)
    return h[:3, 3:]


def _run_transform(cfg: RunConfig, out: Path):
    if cfg.coupling is not None:
        v = np.array(cfg.coupling, dtype=complex)
    else:
        v = _coupling_from_model(cfg.model)
    dec = morris_shore(v)
    h = dec.system_matrix()
    m = dec.transform
    n = h.shape[0]
    v_norm = max(float(np.linalg.norm(v, 2)), 1.0)
    unitarity = float(np.linalg.norm(m.conj().T @ m - np.eye(n)))
    block = float(np.linalg.norm(dec.transformed_matrix() - dec.block_matrix()))
    spec_ref = np.sort(np.linalg.eigvalsh(h))
    spectrum = float(np.max(np.abs(dec.spectrum() - spec_ref)))
    dark = dec.dark_vectors
    darkness = float(max((np.linalg.norm(h @ d) for d in dark), default=0.0))
    checks = [
        Check("transform.unitarity", unitarity, 1e-10),
        Check("transform.block_residual", block / v_norm, 1e-10),
        Check("transform.spectrum", spectrum / v_norm, 1e-10),
        Check("transform.darkness", darkness / v_norm, 1e-10),
    ]
    if cfg.coupling is not None:
        b_diag = -1j * np.ones(dec.coupling.n_b)
        stable = dark_stability_under_b_diagonal(v, b_diag) if a_set_dark_vectors(v).size else True
        checks.append(Check("transform.dark_under_b_decay", float(not stable), 0.0))
    data = dec.to_dict()
    data["spectrum"] = dec.spectrum().tolist()
    write_text(out / "transform.json", dumps(data))
    return checks, [], ["transform.json"]


def _run_dispersion(cfg: RunConfig, out: Path, threads: int):
    p = cfg.model
    d = cfg.dispersion
    k = np.linspace(d.k_min, d.k_max, d.n_k)
    if d.k_min < 0 < d.k_max and not np.any(k == 0):
        k = np.sort(np.append(k, 0.0))
    branches = eigen_branches(p, k, threads=threads)
    write_text(out / "branches.csv", branches_to_csv(branches))
    ang = mixing_angles(p)
    scales = derived_scales(p)
    h0 = np.linalg.norm(build_h(p, 0.0), 2)
    dark = dark_branch(branches)
    i0 = int(np.argmin(np.abs(k)))
    checks = [Check("dispersion.dark_omega_at_k0", float(abs(dark.omega[i0]) / h0), 1e-10)]
    warns = []
    data = {
        "theta": ang.theta,
        "phi": ang.phi,
        "v_gr": scales.v_gr,
        "l_abs": scales.l_abs,
        "omega_eff": scales.omega_eff,
        "dark_branch": dark.branch_id + 1,
    }
    if p.symmetric_decay and p.g_sqrt_n > 0:
        coeffs = perturbative_coefficients(p)
        fd = dark_branch_derivatives(p, d.fd_step)
        # C1 vanishes for balanced controls; fall back to the group velocity scale
        c1_scale = max(abs(coeffs.c1), scales.v_gr)
        c2_scale = abs(2 * coeffs.c2) if coeffs.c2 != 0 else scales.v_gr * p.c / p.g_sqrt_n**2
        checks += [
            Check("dispersion.c1_rel", _rel(fd.d1_richardson, coeffs.c1, c1_scale), 0.005),
            Check("dispersion.c2_rel", _rel(fd.d2_richardson, 2 * coeffs.c2, c2_scale), 0.02),
        ]
        data["coefficients"] = coeffs.to_dict()
        data["finite_difference"] = fd.to_dict()
    else:
        warns.append("perturbative coefficients need g_sqrt_n > 0 and gamma_plus = gamma_minus, "
                     "delta_plus = delta_minus; coefficient checks skipped")
    write_text(out / "dispersion.json", dumps(data))
    return checks, warns, ["branches.csv", "dispersion.json"]


def _snapshot_grid(t_final: float, interval: float | None) -> np.ndarray:
    if interval is None:
        return np.linspace(0.0, t_final, 11)
    n = int(np.floor(t_final / interval + 1e-9))
    times = np.arange(n + 1) * interval
    if t_final - times[-1] > 1e-9 * max(t_final, 1.0):
        times = np.append(times, t_final)
    return times


def _write_snapshots(out: Path, states, psis) -> list[str]:
    names = []
    for i, (st, psi) in enumerate(zip(states, psis)):
        name = f"snapshots/snap_{i:04d}.csv"
        write_text(out / name, snapshot_csv(st, psi))
        names.append(name)
    return names


def _run_propagate(cfg: RunConfig, out: Path, threads: int):
    p, grid, pulse, s = cfg.model, cfg.grid, cfg.pulse, cfg.propagate
    dt = s.dt if s.dt is not None else max_stable_dt(p, grid)
    state0 = init_on_dark_branch(p, pulse, grid, threads=threads)
    modes = track_dark_modes(p, grid.k, threads=threads)
    times = _snapshot_grid(s.t_final, s.snapshot_interval)
    states = evolve_full_series(state0, p, times, dt, threads=threads)
    psis = [dark_amplitude(st, p, modes) for st in states]
    artifacts = _write_snapshots(out, states, psis)

    fr0 = state0.fractions()
    # first-order k admixture of the decaying states; reported, not enforced
    checks = [Check("propagate.excited_fraction_t0", fr0["excited"], 1e-6, enforced=False)]
    warns = []
    report = validate_adiabaticity(p, pulse.width / p.c, pulse.width)
    summary = {
        "times": times.tolist(),
        "dt": dt,
        "norm": [st.norm() for st in states],
        "fractions": [st.fractions() for st in states],
        "adiabaticity": report.to_dict(),
    }
    if p.symmetric_decay and p.g_sqrt_n > 0:
        coeffs = perturbative_coefficients(p)
        psi_eff = evolve_effective(psis[0], coeffs, s.t_final, grid)
        l2 = float(np.linalg.norm(psis[-1] - psi_eff) / np.linalg.norm(psis[-1]))
        checks.append(Check("propagate.full_vs_effective_l2", l2, 0.05, enforced=report.passed))
        summary["coefficients"] = coeffs.to_dict()
    if not report.passed:
        warns.append(f"pulse outside the deep adiabatic regime ({report.status}); "
                     "full-vs-effective check is diagnostic only")
    write_text(out / "summary.json", dumps(summary))
    return checks, warns, artifacts + ["summary.json"]


def _run_scenario(cfg: RunConfig, out: Path, threads: int):
    p, grid, s = cfg.model, cfg.grid, cfg.scenario
    kw = {"dt": s.dt, "snapshot_interval": s.snapshot_interval, "threads": threads}
    summary = {}
    if s.kind == "storage":
        result = run_storage(p, cfg.pulse, grid, cfg.schedule, **kw)
    elif s.kind == "custom":
        result = run_custom(p, cfg.pulse, grid, cfg.schedule, **kw)
    else:
        # the configured schedule stores the pulse, the retrieval segments release it
        stored = run_storage(p, cfg.pulse, grid, cfg.schedule, **kw)
        summary["storage"] = stored.summary()
        release = ControlSchedule.from_levels((0, 0), list(s.retrieval))
        result = run_retrieval_stationary(p, stored.states[-1], grid, release, **kw)
        ratio = float(result.dsp_norm[-1] / stored.dsp_norm[0])
        result.checks = stored.checks + result.checks + [
            Check("retrieval.dsp_norm_ratio", ratio, 0.98, ">=", not result.warnings)
        ]
        result.warnings = stored.warnings + result.warnings
    summary.update(result.summary())
    artifacts = _write_snapshots(out, result.states, result.psi_d)
    write_text(out / "summary.json", dumps(summary))
    return list(result.checks), list(result.warnings), artifacts + ["summary.json"]


def run(cfg: RunConfig, out_dir: str | Path | None = None, *, threads: int = 1) -> dict:
    """Execute ``cfg`` and write artifacts plus ``manifest.json``.

    Returns the manifest as a dict.  Physics errors are re-raised as
    :class:`RunError` naming the responsible configuration section.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg.seed)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            if cfg.mode == "transform":
                checks, warns, artifacts = _run_transform(cfg, out)
            elif cfg.mode == "dispersion":
                checks, warns, artifacts = _run_dispersion(cfg, out, threads)
            elif cfg.mode == "propagate":
                checks, warns, artifacts = _run_propagate(cfg, out, threads)
            else:
                checks, warns, artifacts = _run_scenario(cfg, out, threads)
        except (PolaritonLabError, InvalidInputError, ValueError) as exc:
            section = {"transform": "transform", "dispersion": "model",
                       "propagate": "pulse", "scenario": "schedule"}[cfg.mode]
            raise RunError(section, exc) from exc
    elapsed = time.perf_counter() - start

    seen = set(warns)
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if str(w.message) not in seen and msg not in seen:
            warns.append(msg)
            seen.add(msg)

    manifest = {
        "tool": "polariton-lab",
        "version": __version__,
        "mode": cfg.mode,
        "units": UNITS,
        "sign_convention": SIGN_CONVENTION,
        "config": config_to_dict(cfg),
        "checks": [c.to_dict() for c in checks],
        "warnings": warns,
        "artifacts": sorted(artifacts),
        "passed": all_enforced_pass(checks),
    }
    write_text(out / "manifest.json", dumps(manifest))
    write_text(out / "timing.json", dumps({"wall_clock_seconds": elapsed}))
    return manifest
