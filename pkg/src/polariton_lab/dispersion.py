"""Exact dispersion branches of the dual-V system and their low-k expansion.

Wavenumbers here follow the plane-wave convention ``exp(+ikz)`` (see
:mod:`polariton_lab.model`), so the dark branch reads
``omega(k) = k*C1 + k**2*C2 + O(k**3)``.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError, TrackingError, UnsupportedRegimeError
from .model import ModelParams, dark_polariton_vector, mixing_angles, mode_matrices

__all__ = [
    "DispersionBranch",
    "PerturbativeCoefficients",
    "DerivativeEstimate",
    "MassIdentityReport",
    "batched_eig",
    "eigen_branches",
    "dark_branch",
    "track_dark_modes",
    "perturbative_coefficients",
    "dark_branch_derivatives",
    "verify_mass_identity",
    "branches_to_csv",
]

HBAR = 1.0
MIN_TRACK_OVERLAP = 0.5
DARK_ID_OVERLAP = 0.999
DEGENERATE_ZERO = 1e-8


@dataclass
class DispersionBranch:
    """One eigenvalue branch ``omega(k)`` with unit eigenvectors."""

    k_grid: np.ndarray
    omega: np.ndarray
    vectors: np.ndarray
    branch_id: int
    is_dark: bool = False


@dataclass(frozen=True)
class PerturbativeCoefficients:
    """Low-k expansion of the dark branch and derived propagation constants.

    ``inv_mass`` is ``1/m*`` with ``hbar = 1``, i.e. ``2*c2``.
    """

    c1: complex
    c2: complex
    v: float
    inv_mass: complex

    def to_dict(self) -> dict:
        return {
            "c1": [self.c1.real, self.c1.imag],
            "c2": [self.c2.real, self.c2.imag],
            "v": self.v,
            "inv_mass": [self.inv_mass.real, self.inv_mass.imag],
        }


@dataclass(frozen=True)
class DerivativeEstimate:
    """Centered 5-point derivatives of the dark branch at ``k = 0``.

    ``d1``/``d2`` use step ``h``; the ``*_richardson`` values combine steps
    ``h`` and ``h/2`` to cancel the leading ``h**4`` error.
    """

    h: float
    d1: complex
    d2: complex
    d1_richardson: complex
    d2_richardson: complex

    def to_dict(self) -> dict:
        def pair(z):
            return [z.real, z.imag]

        return {
            "h": self.h,
            "d1": pair(self.d1),
            "d2": pair(self.d2),
            "d1_richardson": pair(self.d1_richardson),
            "d2_richardson": pair(self.d2_richardson),
        }


@dataclass(frozen=True)
class MassIdentityReport:
    expanded: complex
    from_c2: complex
    residual: float
    recoil_consistent: bool

    @property
    def ok(self) -> bool:
        return self.recoil_consistent and self.residual <= 1e-12


def batched_eig(mats: np.ndarray, threads: int = 1):
    """Eigen-decompose a stack of matrices, optionally across threads.

    The chunking is fixed by ``threads`` and results are reassembled in input
    order, so the output does not depend on scheduling.
    """
    if threads <= 1 or mats.shape[0] < 2 * threads:
        return np.linalg.eig(mats)
    chunks = np.array_split(mats, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(np.linalg.eig, chunks))
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
    )


def _dark_reference(params: ModelParams) -> np.ndarray:
    if params.omega_sq > 0:
        return dark_polariton_vector(params)
    # all controls off: the spin coherence decouples and is the dark limit
    ref = np.zeros(5, dtype=complex)
    ref[2] = 1.0
    return ref


def _anchor(params: ModelParams, ref: np.ndarray | None):
    """Eigen-decomposition at ``k = 0`` with the dark vector pinned if degenerate."""
    w, v = np.linalg.eig(mode_matrices(params, [0.0])[0])
    v = v / np.linalg.norm(v, axis=0)
    if ref is None:
        return w, v
    overlaps = np.abs(ref.conj() @ v)
    dark = int(np.argmax(overlaps))
    cluster = np.flatnonzero(np.abs(w) < DEGENERATE_ZERO * max(1.0, np.abs(w).max()))
    if cluster.size > 1 and dark in cluster:
        # eig returns an arbitrary basis of a degenerate null space; rebuild it
        # around the exact dark vector
        basis = [ref / np.linalg.norm(ref)]
        for idx in cluster:
            if idx == dark:
                continue
            vec = v[:, idx].copy()
            for b in basis:
                vec -= (b.conj() @ vec) * b
            vec /= np.linalg.norm(vec)
            basis.append(vec)
        order = [dark] + [i for i in cluster if i != dark]
        for idx, vec in zip(order, basis):
            v[:, idx] = vec
        w[dark] = 0.0
    return w, v


def _align(prev: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Rephase ``new`` so that its overlap with ``prev`` is real and positive."""
    ov = np.sum(prev.conj() * new, axis=0)
    mag = np.abs(ov)
    phase = np.where(mag > 0, ov.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    return new * phase


def _side_order(k: np.ndarray):
    pos = np.flatnonzero(k >= 0)
    neg = np.flatnonzero(k < 0)
    pos = pos[np.argsort(k[pos], kind="stable")]
    neg = neg[np.argsort(-k[neg], kind="stable")]
    return pos, neg


def eigen_branches(
    params: ModelParams, k_grid, *, threads: int = 1
) -> list[DispersionBranch]:
    """All five eigenvalue branches of the mode generator over ``k_grid``.

    Branches are continued outward from ``k = 0`` by maximal eigenvector overlap
    (an optimal assignment between consecutive grid points), not by sorting
    eigenvalues.  The dark branch is the one whose ``k = 0`` eigenvector matches
    the dark-state polariton; it is only identified when a control field is on.

    Raises
    ------
    TrackingError
        If some branch's overlap with its predecessor drops below 0.5.
    """
    k = np.asarray(k_grid, dtype=float).ravel()
    if k.size == 0 or not np.all(np.isfinite(k)):
        raise InvalidInputError("k_grid must be a non-empty array of finite values")
    if np.any(np.diff(k) < 0):
        raise InvalidInputError("k_grid must be sorted ascending")

    ref = _dark_reference(params) if params.omega_sq > 0 else None
    w0, v0 = _anchor(params, ref)
    vals, vecs = batched_eig(mode_matrices(params, k), threads)
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)

    omega = np.empty((k.size, 5), dtype=complex)
    vectors = np.empty((k.size, 5, 5), dtype=complex)
    for side in _side_order(k):
        prev = v0
        for i in side:
            if k[i] == 0.0:
                omega[i], vectors[i], prev = w0, v0, v0
                continue
            ov = np.abs(prev.conj().T @ vecs[i])
            rows, cols = linear_sum_assignment(-ov)
            worst = ov[rows, cols].min()
            if worst < MIN_TRACK_OVERLAP:
                raise TrackingError(k[i], worst)
            new = _align(prev, vecs[i][:, cols])
            omega[i] = vals[i][cols]
            vectors[i] = new
            prev = new

    dark_id = None
    if ref is not None:
        ov = np.abs(ref.conj() @ v0)
        if ov.max() >= DARK_ID_OVERLAP:
            dark_id = int(np.argmax(ov))
    return [
        DispersionBranch(
            k_grid=k.copy(),
            omega=omega[:, j].copy(),
            vectors=vectors[:, :, j].copy(),
            branch_id=j,
            is_dark=(j == dark_id),
        )
        for j in range(5)
    ]


def dark_branch(branches: list[DispersionBranch]) -> DispersionBranch:
    for b in branches:
        if b.is_dark:
            return b
    raise UnsupportedRegimeError("no dark branch identified (are the controls off?)")


def track_dark_modes(params: ModelParams, k, *, threads: int = 1):
    """Dark eigenpair of every plane-wave mode, continued from ``k = 0``.

    Unlike :func:`eigen_branches` this never raises on weak overlaps: far outside
    the transparency window the dark branch is ill-defined but carries no weight.

    Returns
    -------
    omega : (n,) complex
    right : (n, 5) complex
        Unit dark eigenvectors, phase-continued from the ``k = 0`` dark vector.
    left : (n, 5) complex
        Biorthogonal partners, ``left[i] @ right[i] = 1``; ``left[i] @ x`` is the
        dark-branch amplitude of mode state ``x``.
    min_overlap : float
        Smallest overlap between consecutive dark vectors along the continuation.
    """
    k = np.asarray(k, dtype=float).ravel()
    ref = _dark_reference(params)
    vals, vecs = batched_eig(mode_matrices(params, k), threads)
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    inv = np.linalg.inv(vecs)

    omega = np.empty(k.size, dtype=complex)
    right = np.empty((k.size, 5), dtype=complex)
    left = np.empty((k.size, 5), dtype=complex)
    min_overlap = 1.0
    for side in _side_order(k):
        prev = ref
        for i in side:
            ov = prev.conj() @ vecs[i]
            j = int(np.argmax(np.abs(ov)))
            min_overlap = min(min_overlap, float(np.abs(ov[j])))
            phase = np.conj(ov[j]) / abs(ov[j]) if ov[j] != 0 else 1.0
            omega[i] = vals[i][j]
            right[i] = vecs[i][:, j] * phase
            left[i] = inv[i][j, :] / phase
            if k[i] == 0.0:
                omega[i] = 0.0
                right[i] = ref
            prev = right[i]
    return omega, right, left, min_overlap


def perturbative_coefficients(params: ModelParams) -> PerturbativeCoefficients:
    """First- and second-order dark-branch coefficients for symmetric decay.

    ``C1 = v_gr cos(2 phi)`` and
    ``C2 = v_gr L_abs (Delta/gamma - i) (sin^2 2phi + cos^2 2phi sin^4 theta)``,
    evaluated as ``v_gr (c / g^2 N) (Delta - i gamma) (...)`` so that the
    lossless limit ``gamma = 0`` stays finite.
    """
    if not params.symmetric_decay:
        raise UnsupportedRegimeError(
            "perturbative coefficients need Gamma+ = Gamma-; use eigen_branches instead"
        )
    if params.g_sqrt_n <= 0:
        raise UnsupportedRegimeError("perturbative coefficients need g_sqrt_n > 0")
    ang = mixing_angles(params)
    c = params.c
    v_gr = c * math.cos(ang.theta) ** 2
    c1 = v_gr * math.cos(2 * ang.phi)
    shape = math.sin(2 * ang.phi) ** 2 + math.cos(2 * ang.phi) ** 2 * math.sin(ang.theta) ** 4
    c2 = v_gr * (c / params.g_sqrt_n**2) * complex(params.delta_plus, -params.gamma_plus) * shape
    return PerturbativeCoefficients(
        c1=complex(c1), c2=complex(c2), v=float(c1), inv_mass=2 * complex(c2) / HBAR
    )


def _five_point(f, h):
    fm2, fm1, f0, fp1, fp2 = f
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
    return d1, d2


def dark_branch_derivatives(params: ModelParams, h: float = 1e-4) -> DerivativeEstimate:
    """Finite-difference ``d omega/dk`` and ``d^2 omega/dk^2`` of the exact dark branch."""
    if not h > 0:
        raise InvalidInputError("finite-difference step must be positive")
    steps = np.array([-2, -1, -0.5, -0.25, 0, 0.25, 0.5, 1, 2]) * h
    branch = dark_branch(eigen_branches(params, steps))
    f = dict(zip(steps.tolist(), branch.omega))
    coarse = [f[s * h] for s in (-2, -1, 0, 1, 2)]
    fine = [f[s * h] for s in (-1, -0.5, 0, 0.5, 1)]
    d1, d2 = _five_point(coarse, h)
    d1f, d2f = _five_point(fine, h / 2)
    return DerivativeEstimate(
        h=h,
        d1=complex(d1),
        d2=complex(d2),
        d1_richardson=complex((16 * d1f - d1) / 15),
        d2_richardson=complex((16 * d2f - d2) / 15),
    )


def verify_mass_identity(
    params: ModelParams, k_probe: float, v_rec: float, lambda_p: float
) -> MassIdentityReport:
    """Compare the expanded complex-mass expression with ``2*C2/hbar``.

    The atomic mass follows from the recoil relation ``m v_rec = hbar k_p``;
    ``lambda_p * k_p = 2 pi`` is checked and reported, not enforced.
    """
    if not (k_probe > 0 and v_rec > 0 and lambda_p > 0):
        raise InvalidInputError("k_probe, v_rec and lambda_p must be positive")
    if params.gamma_plus <= 0:
        raise UnsupportedRegimeError("the expanded mass expression needs gamma > 0")
    coeffs = perturbative_coefficients(params)
    ang = mixing_angles(params)
    gamma = params.gamma_plus
    v_gr = params.c * math.cos(ang.theta) ** 2
    l_abs = params.c * gamma / params.g_sqrt_n**2
    mass = HBAR * k_probe / v_rec
    shape = math.sin(2 * ang.phi) ** 2 + math.cos(2 * ang.phi) ** 2 * math.sin(ang.theta) ** 4
    expanded = (
        (4 * math.pi / mass) * (v_gr / v_rec) * (l_abs / lambda_p)
        * complex(params.delta_plus / gamma, -1.0) * shape
    )
    from_c2 = 2 * coeffs.c2 / HBAR
    scale = max(abs(expanded), abs(from_c2))
    residual = abs(expanded - from_c2) / scale if scale > 0 else 0.0
    consistent = abs(lambda_p * k_probe - 2 * math.pi) <= 1e-12 * 2 * math.pi
    return MassIdentityReport(
        expanded=complex(expanded),
        from_c2=complex(from_c2),
        residual=float(residual),
        recoil_consistent=consistent,
    )


def branches_to_csv(branches: list[DispersionBranch]) -> str:
    """CSV table: ``k``, ``re/im_omega_j`` for j = 1..5, ``dark_branch`` (1-based, 0 if none)."""
    k = branches[0].k_grid
    dark = next((b.branch_id + 1 for b in branches if b.is_dark), 0)
    header = ["k"]
    for j in range(1, len(branches) + 1):
        header += [f"re_omega_{j}", f"im_omega_{j}"]
    header.append("dark_branch")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i in range(k.size):
        row = [f"{k[i]:.17g}"]
        for b in branches:
            row += [f"{b.omega[i].real:.17g}", f"{b.omega[i].imag:.17g}"]
        row.append(str(dark))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
