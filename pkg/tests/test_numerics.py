import numpy as np
import pytest
from numpy.testing import assert_allclose

from bdris_rsma.numerics import (
    hermitian_eig,
    inv_sqrt_psd,
    is_hermitian,
    random_unitary,
    spectral_norm,
)


def random_hermitian(n, rng):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


def test_is_hermitian_accepts_exact_and_rounded():
    rng = np.random.default_rng(0)
    a = random_hermitian(5, rng)
    assert is_hermitian(a)
    # perturbation at the tolerance scale still counts
    assert is_hermitian(a + 1e-14 * 1j * np.eye(5))


def test_is_hermitian_rejects():
    rng = np.random.default_rng(1)
    assert not is_hermitian(rng.standard_normal((3, 4)))
    assert not is_hermitian(np.empty((0, 0)))
    a = random_hermitian(3, rng)
    a[0, 1] += 0.1j
    assert not is_hermitian(a)


def test_hermitian_eig_descending_and_reconstructs():
    rng = np.random.default_rng(2)
    a = random_hermitian(6, rng)
    w, u = hermitian_eig(a)
    assert np.all(np.diff(w) <= 0.0)
    assert_allclose(u @ np.diag(w) @ u.conj().T, a, atol=1e-12)
    assert_allclose(u.conj().T @ u, np.eye(6), atol=1e-12)


def test_hermitian_eig_known_spectrum():
    q = random_unitary(4, np.random.default_rng(3))
    w_true = np.array([3.0, 1.0, -0.5, -2.0])
    a = (q * w_true) @ q.conj().T
    w, _ = hermitian_eig(a)
    assert_allclose(w, w_true, atol=1e-12)


def test_hermitian_eig_rejects_bad_input():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        hermitian_eig(rng.standard_normal((2, 3)))
    with pytest.raises(ValueError):
        hermitian_eig(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((4, 7)) + 1j * rng.standard_normal((4, 7))
    assert_allclose(spectral_norm(a), np.linalg.svd(a, compute_uv=False)[0], rtol=1e-13)
    assert spectral_norm(np.diag([3.0, 1.0])) == 3.0


def test_spectral_norm_scaling():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    c = 0.7 - 1.3j
    assert_allclose(spectral_norm(c * a), abs(c) * spectral_norm(a), rtol=1e-12)


def test_spectral_norm_rejects_empty_and_vector():
    with pytest.raises(ValueError):
        spectral_norm(np.empty((0, 3)))
    with pytest.raises(ValueError):
        spectral_norm(np.ones(4))


def test_inv_sqrt_psd_inverts_square_root():
    rng = np.random.default_rng(7)
    b = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    a = b @ b.conj().T + 0.1 * np.eye(5)
    r = inv_sqrt_psd(a)
    assert_allclose(r @ a @ r, np.eye(5), atol=1e-10)
    assert is_hermitian(r)
    assert_allclose(inv_sqrt_psd(np.eye(3)), np.eye(3), atol=1e-14)


def test_inv_sqrt_psd_tolerances_scale_with_spectrum():
    # a large but well-conditioned spectrum passes; an absolute eigenvalue
    # floor would misread its rounding noise as rank deficiency
    q = random_unitary(3, np.random.default_rng(8))
    a = (q * np.array([1e8, 1e4, 1.0])) @ q.conj().T
    r = inv_sqrt_psd(a)
    assert_allclose(r @ a @ r, np.eye(3), atol=1e-6)
    # an indefinite matrix is refused outright
    with pytest.raises(ValueError, match="not PSD"):
        inv_sqrt_psd(np.diag([1.0, -0.5]))
    # at large scale the same -0.5 is rounding noise, clamped, then refused
    # as singular rather than indefinite
    with pytest.raises(ValueError, match="singular"):
        inv_sqrt_psd(np.diag([1e12, -0.5]))
    with pytest.raises(ValueError, match="singular"):
        inv_sqrt_psd(np.diag([1.0, 0.0]))


def test_random_unitary_deterministic_and_unitary():
    a = random_unitary(6, np.random.default_rng(9))
    b = random_unitary(6, np.random.default_rng(9))
    assert_allclose(a, b)
    assert_allclose(a @ a.conj().T, np.eye(6), atol=1e-12)
    c = random_unitary(6, np.random.default_rng(10))
    assert np.abs(a - c).max() > 1e-3


def test_random_unitary_phase_convention():
    # first nonzero entry of every column is real positive, so the factor
    # is a function of the generator draw alone
    u = random_unitary(5, np.random.default_rng(11))
    for col in u.T:
        lead = col[np.abs(col) > 1e-12][0]
        assert abs(lead.imag) < 1e-12 and lead.real > 0.0


def test_random_unitary_rejects_empty():
    with pytest.raises(ValueError):
        random_unitary(0, np.random.default_rng(12))
