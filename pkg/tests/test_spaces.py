import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxsplit.errors import DimensionMismatch, FactorizationError, NotPSD, NotSymmetric
from proxsplit.spaces import (
    BlockLayout,
    BlockVector,
    Factorization,
    Preconditioner,
    apply_c,
    apply_cstar,
    factor_psd,
    m_inner,
    m_seminorm,
)


def test_layout_split_join_roundtrip():
    lay = BlockLayout((2, 3))
    x = np.arange(5.0)
    assert lay.total_dim == 5
    blocks = lay.split(x)
    assert [b.tolist() for b in blocks] == [[0, 1], [2, 3, 4]]
    np.testing.assert_array_equal(lay.join(blocks), x)
    with pytest.raises(DimensionMismatch):
        lay.split(np.zeros(4))
    with pytest.raises(DimensionMismatch):
        lay.join([np.zeros(2), np.zeros(2)])


def test_block_vector_arithmetic_and_mismatch():
    u = BlockVector([[1.0, 2.0], [3.0]])
    v = BlockVector([[1.0, 1.0], [1.0]])
    np.testing.assert_array_equal(np.asarray(u + v), [2, 3, 4])
    np.testing.assert_array_equal(np.asarray(2 * u - v), [1, 3, 5])
    np.testing.assert_array_equal(np.asarray(-u), [-1, -2, -3])
    with pytest.raises(DimensionMismatch):
        u + BlockVector([[1.0], [2.0, 3.0]])
    with pytest.raises(ValueError):
        u.flat[0] = 7.0


def test_preconditioner_validation():
    Preconditioner(np.eye(2))
    with pytest.raises(NotSymmetric):
        Preconditioner(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(NotPSD):
        Preconditioner(np.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatch):
        Preconditioner(np.ones((2, 3)))


def test_seminorm_examples():
    M = np.array([[1.0, -1.0], [-1.0, 1.0]])
    assert m_seminorm(M, [1.0, 1.0]) == 0.0
    assert m_seminorm(M, [1.0, 0.0]) == pytest.approx(1.0)
    assert m_inner(M, [1.0, 0.0], [0.0, 1.0]) == pytest.approx(-1.0)
    with pytest.raises(DimensionMismatch):
        m_inner(M, [1.0], [1.0, 2.0])


def test_factor_psd_examples():
    F = factor_psd(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert F.rank == 1
    np.testing.assert_allclose(F.preconditioner_matrix, [[1, -1], [-1, 1]], atol=1e-14)
    assert factor_psd(np.zeros((3, 3))).rank == 0
    assert factor_psd(np.eye(3)).rank == 3
    with pytest.raises(NotPSD):
        factor_psd(np.diag([1.0, -1.0]))


def test_closed_form_factor():
    C = np.array([[1.0], [-1.0]])
    F = Factorization.from_closed_form(C, C @ C.T)
    assert F.rank == 1
    with pytest.raises(FactorizationError):
        Factorization.from_closed_form(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(FactorizationError):
        Factorization.from_closed_form(C, np.eye(2))


def test_apply_c_dimension_checks():
    F = factor_psd(np.eye(2))
    with pytest.raises(DimensionMismatch):
        apply_cstar(F, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        apply_c(F, np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 8), r=st.integers(0, 8), seed=st.integers(0, 2**31 - 1))
def test_factor_psd_reconstructs_and_is_isometric(d, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, d)
    G = rng.standard_normal((d, r))
    M = G @ G.T
    F = factor_psd(M)
    assert F.rank == r
    scale = max(np.linalg.norm(M), 1.0)
    assert np.linalg.norm(F.preconditioner_matrix - M) <= 1e-10 * scale
    u = rng.standard_normal(d)
    assert abs(np.linalg.norm(apply_cstar(F, u)) - m_seminorm(M, u)) <= 1e-8 * (1 + m_seminorm(M, u))
    if r:
        w = rng.standard_normal(r)
        np.testing.assert_allclose(F.reduce_lstsq(apply_c(F, w)), w, atol=1e-8 * (1 + np.linalg.norm(w)))
