import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polariton_lab.errors import InvalidInputError
from polariton_lab.morris_shore import (
    CouplingMatrix,
    MsDecomposition,
    a_set_dark_vectors,
    assemble_bipartite,
    dark_stability_under_b_diagonal,
    morris_shore,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@st.composite
def couplings(draw, max_dim=6):
    n_a = draw(st.integers(1, max_dim))
    n_b = draw(st.integers(1, max_dim))
    re = draw(st.lists(finite, min_size=n_a * n_b, max_size=n_a * n_b))
    im = draw(st.lists(finite, min_size=n_a * n_b, max_size=n_a * n_b))
    return (np.array(re) + 1j * np.array(im)).reshape(n_a, n_b)


def test_assemble_lambda_placement():
    h = assemble_bipartite([[1.0], [0.0]])
    expected = np.zeros((3, 3))
    expected[0, 2] = expected[2, 0] = 1
    np.testing.assert_array_equal(h, expected)


def test_assemble_identity_gives_two_pairs():
    h = assemble_bipartite(np.eye(2))
    assert h.shape == (4, 4)
    assert h[0, 2] == h[1, 3] == 1
    assert np.count_nonzero(h) == 4


@pytest.mark.parametrize("bad", [np.zeros((0, 2)), np.ones((2, 2, 2)), [[np.nan]], [[np.inf, 1]]])
def test_invalid_couplings_rejected(bad):
    with pytest.raises(InvalidInputError):
        CouplingMatrix(bad)


@given(couplings())
def test_hermitian_assembly(v):
    h = assemble_bipartite(v)
    np.testing.assert_array_equal(h, h.conj().T)


@given(couplings())
def test_decomposition_invariants(v):
    dec = morris_shore(v)
    n = dec.coupling.size
    v_norm = max(1.0, np.linalg.norm(v, 2))
    m = dec.transform
    assert np.linalg.norm(m.conj().T @ m - np.eye(n)) <= 1e-12 * n
    np.testing.assert_allclose(dec.transformed_matrix(), dec.block_matrix(), atol=1e-10 * v_norm)
    assert dec.n_pairs == min(v.shape)
    oracle = np.sort(np.linalg.eigvalsh(dec.system_matrix()))
    np.testing.assert_allclose(dec.spectrum(), oracle, atol=1e-10 * v_norm)
    h = dec.system_matrix()
    for d in dec.dark_vectors:
        assert np.linalg.norm(h @ d) <= 1e-10 * np.linalg.norm(h, 2) + 1e-300
        assert np.isclose(np.linalg.norm(d), 1.0)


def test_singular_values_are_pair_couplings(rng):
    v = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
    dec = morris_shore(v)
    np.testing.assert_allclose(np.sort(dec.pair_couplings), np.sort(np.linalg.svd(v, compute_uv=False)))


def test_random_4x2_two_dark_on_a_side(rng):
    v = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    dec = morris_shore(v)
    assert dec.n_dark == 2
    # exact zeros on the B indices
    assert np.max(np.abs(dec.dark_vectors[:, 4:])) <= 1e-14


def test_rank_deficiency_adds_dark_vectors(rng):
    v = np.outer(rng.normal(size=4), rng.normal(size=3))
    dec = morris_shore(v)
    assert dec.n_dark == 1 + 2


def test_lambda_complex_conjugation_convention():
    v1, v2 = 1 + 2j, -0.5 + 1j
    d = morris_shore([[v1], [v2]]).dark_vectors[0]
    ref = np.array([np.conj(v2), -np.conj(v1), 0])
    assert abs(np.vdot(ref, d)) / np.linalg.norm(ref) == pytest.approx(1.0, abs=1e-12)


def test_m_system_unit_couplings():
    d = morris_shore([[1, 0], [0, 1], [1, 1]]).dark_vectors[0]
    np.testing.assert_allclose(d, np.array([1, 1, -1, 0, 0]) / np.sqrt(3), atol=1e-14)


@pytest.mark.parametrize("gamma", [0.0, 0.3, 7.0])
def test_lambda_dark_under_decay(gamma):
    assert dark_stability_under_b_diagonal([[1.0], [1.0]], [-1j * gamma])


def test_m_system_dark_under_decay():
    assert dark_stability_under_b_diagonal([[1, 0], [0, 1], [1, 1]], [-0.7j, -2.5j])
    assert dark_stability_under_b_diagonal([[1, 0], [0, 1], [1, 1]], [0, 0])


@given(couplings(max_dim=5), st.lists(st.floats(0, 10), min_size=5, max_size=5))
def test_dark_stability_always_holds(v, gammas):
    b_diag = -1j * np.array(gammas[: v.shape[1]])
    assert dark_stability_under_b_diagonal(v, b_diag)


def test_a_set_dark_vectors_have_zero_b_part(rng):
    v = rng.normal(size=(5, 2))
    d = a_set_dark_vectors(v)
    assert d.shape == (3, 7)
    assert np.all(d[:, 5:] == 0)


def test_basis_roundtrip_and_json(rng):
    v = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
    dec = morris_shore(v)
    x = rng.normal(size=5) + 1j * rng.normal(size=5)
    np.testing.assert_allclose(dec.from_ms_basis(dec.to_ms_basis(x)), x, atol=1e-13)
    back = MsDecomposition.from_dict(json.loads(dec.to_json()))
    np.testing.assert_array_equal(back.transform, dec.transform)
    np.testing.assert_array_equal(back.dark_vectors, dec.dark_vectors)


def test_deterministic(rng):
    v = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    assert morris_shore(v).to_json() == morris_shore(v.copy()).to_json()
