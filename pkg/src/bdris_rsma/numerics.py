"""Dense Hermitian linear-algebra kernels shared by all optimizer stages.

Everything here operates on complex ndarrays. Matrices tagged Hermitian are
checked against ``max|A - A^H| <= 1e-12 * max(1, max|A|)`` before
eigendecompositions so that silent asymmetry upstream fails loudly.
"""

from __future__ import annotations

import numpy as np

HERM_RTOL = 1e-12


def is_hermitian(a: np.ndarray, rtol: float = HERM_RTOL) -> bool:
    """True when A is square and max|A - A^H| <= rtol * max(1, max|A|)."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if a.size == 0:
        return False
    scale = max(1.0, float(np.abs(a).max()))
    return float(np.abs(a - a.conj().T).max()) <= rtol * scale


def hermitian_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix with eigenvalues descending.

    Returns
    -------
    w : (n,) real ndarray, w[0] >= w[1] >= ...
    u : (n, n) complex ndarray with unitary columns, a = u @ diag(w) @ u^H.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not is_hermitian(a):
        raise ValueError("matrix is not Hermitian within tolerance")
    w, u = np.linalg.eigh(a)
    return w[::-1].copy(), u[:, ::-1].copy()


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value of a (any rectangular complex matrix)."""
    if a.ndim != 2 or a.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {a.shape}")
    return float(np.linalg.norm(a, 2))


def inv_sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Inverse matrix square root of a Hermitian positive-definite matrix.

    Tolerances scale with the largest eigenvalue, since that is the accuracy
    the eigendecomposition itself delivers. Slightly negative eigenvalues are
    treated as rounding noise and clamped to zero; anything further below
    zero is rejected. After clamping, an eigenvalue at the noise floor means
    the matrix is singular within working precision and the inverse square
    root is refused.
    """
    w, u = hermitian_eig(a)
    scale = max(1.0, float(w[0]))
    if w[-1] < -1e-9 * scale:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {w[-1]:.3e}")
    w = np.maximum(w, 0.0)
    if w[-1] < 1e-14 * scale:
        raise ValueError("matrix is singular within tolerance; inverse square root undefined")
    return (u * (1.0 / np.sqrt(w))) @ u.conj().T


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random n-by-n unitary matrix, deterministic for a given generator state.

    QR orthonormalization of a standard complex Gaussian matrix; each column
    is rotated so its first nonzero entry is real and positive, which removes
    the phase ambiguity of the factorization.
    """
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, _ = np.linalg.qr(z)
    for j in range(n):
        col = q[:, j]
        lead = col[np.abs(col) > 1e-12][0]
        q[:, j] = col * (lead.conjugate() / abs(lead))
    return q
