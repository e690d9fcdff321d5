import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from ere_lab.exceptions import NotPositiveDefiniteError
from ere_lab.linalg import (
    as_matrix,
    is_psd,
    max_eigenvalue_sym,
    min_eigenvalue_sym,
    spd_solve,
    spectral_norm,
    sym,
    trace_norm,
)


def test_spectral_norm_cases():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert spectral_norm(np.zeros((2, 2))) == 0.0
    # diagonal oracle: eigenvalues of M'M are 9 and 16
    assert spectral_norm(np.array([[3.0, 0.0], [0.0, 4.0]])) == pytest.approx(4.0, abs=1e-14)


def test_spectral_norm_rectangular_and_stacked():
    m = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
    assert spectral_norm(m) == pytest.approx(np.sqrt(5.0))
    stack = np.stack([np.eye(2), 2 * np.eye(2), np.diag([0.0, 5.0])])
    np.testing.assert_allclose(spectral_norm(stack), [1.0, 2.0, 5.0])


def test_trace_norm_cases():
    assert trace_norm(np.eye(4)) == pytest.approx(4.0)
    assert trace_norm(np.array([[3.0, 0.0], [0.0, 4.0]])) == pytest.approx(7.0, abs=1e-14)
    assert trace_norm(np.zeros((3, 3))) == 0.0


def test_min_eigenvalue_cases():
    assert min_eigenvalue_sym(np.eye(2)) == pytest.approx(1.0)
    assert min_eigenvalue_sym(np.diag([0.5, 3.0])) == pytest.approx(0.5)
    # closed form: eigenvalues 2 +- 1
    assert min_eigenvalue_sym(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0, abs=1e-14)
    assert max_eigenvalue_sym(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(3.0, abs=1e-14)


def test_spd_solve_identity_and_scaling():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(spd_solve(np.eye(2), b), b)
    np.testing.assert_allclose(spd_solve(2 * np.eye(2), np.eye(2)), 0.5 * np.eye(2))


def test_spd_solve_matches_scipy_cholesky():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((4, 4))
    a = g @ g.T + 0.5 * np.eye(4)
    b = rng.standard_normal((4, 3))
    np.testing.assert_allclose(spd_solve(a, b), cho_solve(cho_factor(a), b), rtol=1e-12)


def test_spd_solve_rejects_indefinite():
    a = np.diag([1.0, -1.0])
    with pytest.raises(NotPositiveDefiniteError) as err:
        spd_solve(a, np.eye(2))
    assert err.value.min_pivot is None or err.value.min_pivot <= 0


def test_spd_solve_stack_reports_bad_index():
    a = np.stack([np.eye(2), 2 * np.eye(2), np.diag([1.0, -2.0])])
    b = np.ones((3, 2, 1))
    with pytest.raises(NotPositiveDefiniteError) as err:
        spd_solve(a, b)
    assert err.value.where == 2
    good = spd_solve(a[:2], b[:2])
    np.testing.assert_allclose(good[1], 0.5 * np.ones((2, 1)))


def test_sym_and_psd():
    m = np.array([[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_allclose(sym(m), [[1.0, 1.0], [1.0, 1.0]])
    assert is_psd(sym(m))
    assert not is_psd(np.diag([1.0, -1e-3]))


def test_as_matrix_scalar_and_shape_errors():
    assert as_matrix(2.0).shape == (1, 1)
    with pytest.raises(ValueError):
        as_matrix([[1.0, 2.0]], shape=(2, 2), name="X")
