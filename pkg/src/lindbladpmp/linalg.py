"""Dense complex-matrix kernels used throughout the package.

Column-stacking vectorization, Kronecker products, the matrix exponential,
Hermitian square roots, and the polynomial (Cayley-Hamilton) expansion of
the matrix square root around the identity.
"""

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateSpectrumError,
    DimensionError,
    NotPositiveSemidefiniteError,
)

# Clamp window for near-zero eigenvalues of nominally PSD matrices. Pure
# states are exactly rank deficient, so roundoff-scale negatives are expected.
EPS_PSD = 1e-10

# Minimal eigenvalue gap for the polynomial square-root expansion: the
# Vandermonde system is singular at confluent eigenvalues.
EPS_DEGEN = 1e-8


def _as_square(m, name="matrix"):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def vectorize(m):
    """Column-stacking vec map: entry i + n*j of the result is m[i, j].

    Equivalently vec(|psi><xi|) = |xi> (x) |psi>, and
    vec(A X B) = (B^T (x) A) vec(X) for conformable A, X, B.
    """
    return _as_square(m).reshape(-1, order="F")


def devectorize(v, n):
    """Inverse of :func:`vectorize` for an n x n matrix."""
    v = np.asarray(v)
    if v.ndim != 1 or v.size != n * n:
        raise DimensionError(
            f"expected a vector of length {n * n} for dimension {n}, "
            f"got shape {v.shape}"
        )
    return v.reshape((n, n), order="F")


def kron(a, b):
    """Kronecker product a (x) b."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def matrix_exponential(a):
    """Matrix exponential e^A (scaling and squaring with a Pade core)."""
    a = _as_square(a, "exponent")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix exponential of a non-finite matrix")
    return sla.expm(a)


def hermitian_sqrt(a, tol=EPS_PSD, zero_cutoff=1e-14):
    """Hermitian PSD square root S of a Hermitian PSD matrix, S @ S = a.

    Computed by eigendecomposition. Eigenvalues in (-tol, 0) are clamped to
    zero; an eigenvalue below -tol raises
    :class:`~lindbladpmp.errors.NotPositiveSemidefiniteError`. Eigenvalues
    below ``zero_cutoff`` relative to the largest are treated as exact zeros:
    rank-deficient inputs put them anywhere within roundoff of zero and the
    square root would otherwise amplify that noise to sqrt(eps)-sized modes.
    """
    a = _as_square(a)
    w, v = np.linalg.eigh((a + a.conj().T) / 2.0)
    if w[0] < -tol:
        raise NotPositiveSemidefiniteError(
            f"eigenvalue {w[0]:.3e} below the PSD tolerance -{tol:.1e}"
        )
    w = np.clip(w, 0.0, None)
    if w[-1] > 0.0:
        w[w < zero_cutoff * w[-1]] = 0.0
    return (v * np.sqrt(w)) @ v.conj().T


def cayley_hamilton_sqrt_coeffs(rho, gap_tol=EPS_DEGEN, psd_tol=EPS_PSD):
    """Coefficients a_k of the expansion sqrt(rho) = sum_k a_k (rho - I)^k.

    The coefficients solve the Vandermonde system
    sqrt(lam_j) = sum_k a_k (lam_j - 1)^k over the eigenvalues lam_j of rho,
    which is the Cayley-Hamilton reduction of the Taylor series of the square
    root at the identity. Requires a non-confluent spectrum: any eigenvalue
    gap below ``gap_tol`` raises
    :class:`~lindbladpmp.errors.DegenerateSpectrumError` and callers should
    fall back to :func:`hermitian_sqrt`.
    """
    rho = _as_square(rho)
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    if w[0] < -psd_tol:
        raise NotPositiveSemidefiniteError(
            f"eigenvalue {w[0]:.3e} below the PSD tolerance -{psd_tol:.1e}"
        )
    w = np.clip(w, 0.0, None)
    gaps = np.diff(np.sort(w))
    if gaps.size and gaps.min() < gap_tol:
        raise DegenerateSpectrumError(
            f"eigenvalue gap {gaps.min():.3e} below {gap_tol:.1e}"
        )
    vand = np.vander(w - 1.0, increasing=True)  # vand[j, k] = (lam_j - 1)^k
    return np.linalg.solve(vand, np.sqrt(w))
