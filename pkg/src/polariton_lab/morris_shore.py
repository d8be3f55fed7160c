"""Morris-Shore reduction of bipartite linear systems.

A system ``dX/dt = -i H X`` whose coefficient matrix only links a set ``A`` of
variables to a set ``B`` (never within a set) has the block form

    H = [[0,  V ],
         [V^†, 0 ]]

with ``V`` of shape ``(n_a, n_b)``.  The singular value factorisation
``V = U S W^†`` supplies a unitary change of basis ``M = U ⊕ W`` that splits the
dynamics into independent two-variable pairs coupled by the singular values,
plus uncoupled ("dark") variables that stay constant.

Variable ordering is always A-set first, B-set second.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "CouplingMatrix",
    "MsDecomposition",
    "assemble_bipartite",
    "morris_shore",
    "a_set_dark_vectors",
    "dark_stability_under_b_diagonal",
    "complex_to_pairs",
    "pairs_to_complex",
]

# singular values below RANK_RTOL * ||V||_2 are treated as exact zeros
RANK_RTOL = 1e-12
DARKNESS_RTOL = 1e-10


@dataclass(frozen=True)
class CouplingMatrix:
    """Complex ``n_a x n_b`` coupling block between the A and B sets."""

    v: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.v, dtype=complex))
        if v.ndim != 2:
            raise InvalidInputError(f"coupling must be a 2-d matrix, got ndim={v.ndim}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInputError(f"coupling dimensions must be >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("coupling contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @property
    def n_a(self) -> int:
        return self.v.shape[0]

    @property
    def n_b(self) -> int:
        return self.v.shape[1]

    @property
    def size(self) -> int:
        return self.n_a + self.n_b


def _as_coupling(v) -> CouplingMatrix:
    return v if isinstance(v, CouplingMatrix) else CouplingMatrix(v)


def assemble_bipartite(v) -> np.ndarray:
    """Return the full ``(n_a+n_b)``-square matrix ``[[0, V], [V^†, 0]]``."""
    cm = _as_coupling(v)
    h = np.zeros((cm.size, cm.size), dtype=complex)
    h[: cm.n_a, cm.n_a :] = cm.v
    h[cm.n_a :, : cm.n_a] = cm.v.conj().T
    return h


def _fix_phase(vec: np.ndarray) -> complex:
    """Phase factor that makes the first non-negligible entry real and positive."""
    mag = np.abs(vec)
    idx = int(np.argmax(mag > 1e-12 * mag.max()))
    return np.conj(vec[idx]) / mag[idx]


@dataclass(frozen=True)
class MsDecomposition:
    """Result of :func:`morris_shore`.

    Columns of ``transform`` are ordered as bright pairs
    ``(a_1, b_1, a_2, b_2, ...)`` followed by the unpaired dark directions, so
    ``transform^† H transform`` is 2x2-block diagonal with a trailing zero block.

    ``dark_vectors`` (rows) span the null space on the larger of the two sets:
    the ``|n_a - n_b|`` unpaired directions plus one direction per vanishing
    singular value.  When ``n_a >= n_b`` they carry exact zeros on the B-set.
    """

    coupling: CouplingMatrix
    transform: np.ndarray
    dark_vectors: np.ndarray
    pair_couplings: np.ndarray

    @property
    def n_dark(self) -> int:
        return self.dark_vectors.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.pair_couplings.shape[0]

    def system_matrix(self) -> np.ndarray:
        return assemble_bipartite(self.coupling)

    def transformed_matrix(self) -> np.ndarray:
        """``M^† H M``."""
        m = self.transform
        return m.conj().T @ self.system_matrix() @ m

    def block_matrix(self) -> np.ndarray:
        """The ideal block-diagonal form built from ``pair_couplings`` alone."""
        n = self.coupling.size
        out = np.zeros((n, n), dtype=complex)
        for j, s in enumerate(self.pair_couplings):
            out[2 * j, 2 * j + 1] = s
            out[2 * j + 1, 2 * j] = s
        return out

    def spectrum(self) -> np.ndarray:
        """Eigenvalues ``{±v_j} ∪ {0 x |n_a-n_b|}``, sorted ascending."""
        n_unpaired = abs(self.coupling.n_a - self.coupling.n_b)
        s = self.pair_couplings
        return np.sort(np.concatenate([-s, s, np.zeros(n_unpaired)]))

    def to_ms_basis(self, x) -> np.ndarray:
        """Map original variables ``X`` to MS variables ``Y = M^† X``."""
        return self.transform.conj().T @ np.asarray(x, dtype=complex)

    def from_ms_basis(self, y) -> np.ndarray:
        return self.transform @ np.asarray(y, dtype=complex)

    def to_dict(self) -> dict:
        return {
            "n_a": self.coupling.n_a,
            "n_b": self.coupling.n_b,
            "n_dark": self.n_dark,
            "coupling": complex_to_pairs(self.coupling.v),
            "transform": complex_to_pairs(self.transform),
            "dark_vectors": complex_to_pairs(self.dark_vectors),
            "pair_couplings": [float(s) for s in self.pair_couplings],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "MsDecomposition":
        n = data["n_a"] + data["n_b"]
        dark = pairs_to_complex(data["dark_vectors"]).reshape(-1, n)
        return cls(
            coupling=CouplingMatrix(pairs_to_complex(data["coupling"])),
            transform=pairs_to_complex(data["transform"]),
            dark_vectors=dark,
            pair_couplings=np.asarray(data["pair_couplings"], dtype=float),
        )


def complex_to_pairs(a) -> list:
    """Nested row-major lists with each complex entry as ``[re, im]``."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def pairs_to_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise InvalidInputError("expected trailing [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def morris_shore(v) -> MsDecomposition:
    """Decompose a bipartite coupling into bright pairs and dark variables.

    Parameters
    ----------
    v : CouplingMatrix or array_like, shape (n_a, n_b)

    Returns
    -------
    MsDecomposition
    """
    cm = _as_coupling(v)
    n_a, n_b = cm.n_a, cm.n_b
    n = n_a + n_b
    u, s, wh = np.linalg.svd(cm.v, full_matrices=True)
    w = wh.conj().T
    n_pairs = min(n_a, n_b)

    scale = s[0] if s.size else 0.0
    zero = s <= RANK_RTOL * scale if scale > 0 else np.ones_like(s, dtype=bool)
    s = np.where(zero, 0.0, s)

    cols = []
    for j in range(n_pairs):
        phase = _fix_phase(u[:, j])
        a_vec = u[:, j] * phase
        # same phase on w_j keeps V w_j = s_j u_j with s_j real
        b_vec = w[:, j] * (_fix_phase(w[:, j]) if zero[j] else phase)
        cols.append(np.concatenate([a_vec, np.zeros(n_b)]))
        cols.append(np.concatenate([np.zeros(n_a), b_vec]))

    a_side = n_a >= n_b

    def embed(vec):
        vec = vec * _fix_phase(vec)
        if a_side:
            return np.concatenate([vec, np.zeros(n_b)])
        return np.concatenate([np.zeros(n_a), vec])

    side = u if a_side else w
    unpaired = [embed(side[:, j]) for j in range(n_pairs, side.shape[1])]
    cols.extend(unpaired)

    transform = np.column_stack(cols).astype(complex)
    zero_dirs = [
        transform[:, 2 * j + (0 if a_side else 1)] for j in range(n_pairs) if zero[j]
    ]
    dark_list = zero_dirs + unpaired
    dark = np.array(dark_list, dtype=complex).reshape(len(dark_list), n)
    return MsDecomposition(
        coupling=cm,
        transform=transform,
        dark_vectors=dark,
        pair_couplings=s[:n_pairs].astype(float),
    )


def a_set_dark_vectors(v) -> np.ndarray:
    """Orthonormal rows spanning the dark variables built only from the A-set.

    These are the null space of ``V^†``; each row has exact zeros on the B-set.
    """
    cm = _as_coupling(v)
    u, s, _ = np.linalg.svd(cm.v, full_matrices=True)
    scale = s[0] if s.size else 0.0
    rank = int(np.sum(s > RANK_RTOL * scale)) if scale > 0 else 0
    rows = []
    for j in range(rank, cm.n_a):
        vec = u[:, j] * _fix_phase(u[:, j])
        rows.append(np.concatenate([vec, np.zeros(cm.n_b)]))
    return np.array(rows, dtype=complex).reshape(len(rows), cm.size)


def dark_stability_under_b_diagonal(v, b_diag) -> bool:
    """Check that A-built dark variables stay dark when B-diagonal terms are added.

    Adds ``diag(0, ..., 0, b_diag)`` to the bipartite matrix (e.g. decay terms
    ``-i*Gamma`` of the B-set) and verifies that every dark vector with zero
    B-components is still annihilated to relative tolerance 1e-10.
    """
    cm = _as_coupling(v)
    b_diag = np.asarray(b_diag, dtype=complex).ravel()
    if b_diag.shape != (cm.n_b,):
        raise InvalidInputError(f"b_diag must have length n_b={cm.n_b}, got {b_diag.shape}")
    h = assemble_bipartite(cm)
    h[cm.n_a :, cm.n_a :] += np.diag(b_diag)
    h_norm = np.linalg.norm(h, 2)
    for d in a_set_dark_vectors(cm):
        if np.linalg.norm(h @ d) > DARKNESS_RTOL * h_norm * np.linalg.norm(d):
            return False
    return True
