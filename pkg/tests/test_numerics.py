import numpy as np
import pytest

from anonphy.errors import RankDeficientError
from anonphy.numerics import hermitian_eig, pseudo_inverse

rng = np.random.default_rng(1234)


def test_pinv_matches_inverse_for_square_full_rank():
    a = np.array([[1.0 + 1.0j, 2.0], [0.5j, 3.0 - 1.0j]])
    expected = np.linalg.inv(a)
    assert np.allclose(pseudo_inverse(a), expected, atol=1e-12)


def test_pinv_moore_penrose_properties_tall():
    a = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    p = pseudo_inverse(a)
    assert p.shape == (3, 6)
    assert np.allclose(a @ p @ a, a, atol=1e-10)
    assert np.allclose(p @ a @ p, p, atol=1e-10)
    assert np.allclose((a @ p).conj().T, a @ p, atol=1e-10)
    assert np.allclose((p @ a).conj().T, p @ a, atol=1e-10)


def test_pinv_wide_row_rank_deficient_allowed():
    # wide matrix with a repeated row: rank 1, still invertible in the MP sense
    row = np.array([1.0, 2.0j, -1.0])
    a = np.vstack([row, row])
    p = pseudo_inverse(a)
    assert np.allclose(a @ p @ a, a, atol=1e-10)


def test_pinv_tall_rank_deficient_raises():
    col = rng.standard_normal((5, 1)) + 1j * rng.standard_normal((5, 1))
    a = np.hstack([col, 2.0 * col, col - col])  # rank 1, three columns
    with pytest.raises(RankDeficientError) as exc:
        pseudo_inverse(a)
    assert exc.value.estimated_rank == 1


def test_pinv_cutoff_treats_tiny_singular_values_as_zero():
    # singular values 1 and 1e-14: the second is below 1e-12 * s_max
    u = np.eye(2)
    vt = np.eye(3)[:2]
    a = u @ np.diag([1.0, 1e-14]) @ vt
    with pytest.raises(RankDeficientError):
        pseudo_inverse(a.T)  # tall 3x2, effective rank 1
    p = pseudo_inverse(a)  # wide: allowed, tiny mode dropped
    assert np.abs(p).max() < 2.0


def test_pinv_input_validation():
    with pytest.raises(ValueError):
        pseudo_inverse(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        pseudo_inverse(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        pseudo_inverse(np.array([[np.nan, 1.0], [0.0, 1.0]]))


def test_hermitian_eig_known_2x2():
    # [[2, -i], [i, 2]] has eigenvalues 3 and 1
    m = np.array([[2.0, -1.0j], [1.0j, 2.0]])
    w, v = hermitian_eig(m)
    assert np.allclose(w, [3.0, 1.0])
    for i in range(2):
        assert np.allclose(m @ v[:, i], w[i] * v[:, i], atol=1e-12)


def test_hermitian_eig_descending_order():
    a = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    m = a @ a.conj().T
    w, v = hermitian_eig(m)
    assert np.all(np.diff(w) <= 1e-12)
    assert np.allclose(m @ v, v @ np.diag(w), atol=1e-9)


def test_hermitian_eig_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_eig(np.array([[1.0, 2.0], [3.0, 4.0]]))
    with pytest.raises(ValueError):
        hermitian_eig(np.ones((2, 3)))
