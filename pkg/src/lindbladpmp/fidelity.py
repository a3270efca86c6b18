"""Uhlmann fidelity between density operators and its gradient in the state.

The fidelity is F(rho, sigma) = (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2. Its
gradient with respect to rho supplies the terminal costate of the adjoint
system; the convention used throughout is the real trace pairing

    d/de F(rho + e*Delta)|_0 = Re tr(grad * Delta)    for Hermitian Delta.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import POSITIVITY_TOL, check_density_matrix
from .errors import DegenerateSpectrumError, DimensionError
from .linalg import cayley_hamilton_sqrt_coeffs, hermitian_sqrt

# Below this smallest eigenvalue of rho the closed-form gradient (which needs
# rho^{-1/2}) is abandoned for finite differences.
RANK_TOL = 1e-8

FD_STEP = 1e-6


@dataclass(frozen=True)
class TargetState:
    """Desired terminal state with its purity recorded."""

    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=complex))
        check_density_matrix(self.sigma)

    @property
    def purity(self):
        """tr(sigma^2); equals 1 for a pure target."""
        return float(np.trace(self.sigma @ self.sigma).real)


def _coerce_sigma(sigma):
    if isinstance(sigma, TargetState):
        return sigma.sigma
    return np.asarray(sigma, dtype=complex)


def _check_pair(rho, sigma):
    if rho.shape != sigma.shape:
        raise DimensionError(
            f"state shapes differ: {rho.shape} vs {sigma.shape}"
        )


def fidelity(rho, sigma, psd_tol=POSITIVITY_TOL):
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 in [0, 1].

    The sandwiched product equals M'M with M = sqrt(sigma) sqrt(rho), so its
    trace square root is the sum of the singular values of M. Evaluating the
    singular values directly keeps the value smooth when the product is rank
    deficient (pure targets): an eigendecomposition of M'M would put the
    numerically-zero modes anywhere in +-eps and the square root would
    amplify them to sqrt(eps)-sized noise.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = _coerce_sigma(sigma)
    _check_pair(rho, sigma)
    m = hermitian_sqrt(sigma, tol=psd_tol) @ hermitian_sqrt(rho, tol=psd_tol)
    f = float(np.linalg.svd(m, compute_uv=False).sum()) ** 2
    return min(max(f, 0.0), 1.0)


def fidelity_trace_norm(rho, sigma, psd_tol=POSITIVITY_TOL):
    """Fidelity via the trace norm, (tr |sqrt(rho) sqrt(sigma)|)^2.

    Evaluates |A| = sqrt(A'A) literally through the Gram matrix and its
    Hermitian square root; an independent computational path kept for
    cross-validation of :func:`fidelity`.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = _coerce_sigma(sigma)
    _check_pair(rho, sigma)
    a = hermitian_sqrt(rho, tol=psd_tol) @ hermitian_sqrt(sigma, tol=psd_tol)
    gram = a.conj().T @ a
    root = hermitian_sqrt((gram + gram.conj().T) / 2.0, tol=psd_tol)
    f = float(np.trace(root).real) ** 2
    return min(max(f, 0.0), 1.0)


def hermitian_basis(n):
    """Orthonormal basis of n x n Hermitian matrices under tr(A B)."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            s = np.zeros((n, n), dtype=complex)
            s[i, j] = s[j, i] = inv_sqrt2
            basis.append(s)
            a = np.zeros((n, n), dtype=complex)
            a[i, j] = 1j * inv_sqrt2
            a[j, i] = -1j * inv_sqrt2
            basis.append(a)
    return basis


@dataclass(frozen=True)
class TerminalGradient:
    """Gradient of the fidelity in the final state, with provenance.

    ``method`` records which path produced ``matrix`` ("analytic",
    "finite-difference" or "cayley-hamilton"); ``used_fallback`` is set when
    the requested path was unavailable and finite differences were used.
    ``expansion_gap`` is the Frobenius distance between the validated
    gradient and the polynomial-expansion form, when the latter is
    computable (None on a confluent spectrum).
    """

    matrix: np.ndarray
    method: str
    used_fallback: bool
    expansion_gap: float | None


def _analytic_gradient(rho, sigma, psd_tol):
    # d tr sqrt(sqrt(rho) sigma sqrt(rho)) = 1/2 tr(rho^{-1/2} G rho^{-1/2} drho)
    # with G = sqrt(sqrt(rho) sigma sqrt(rho)), valid for invertible rho;
    # hence grad F = sqrt(F) * rho^{-1/2} G rho^{-1/2}. G is assembled from
    # the SVD of sqrt(sigma) sqrt(rho) for the same rank-deficiency reason
    # as in :func:`fidelity`.
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2.0)
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    m = hermitian_sqrt(sigma, tol=psd_tol) @ s
    _, sing, vh = np.linalg.svd(m)
    g = vh.conj().T @ (sing[:, None] * vh)
    sqrt_f = float(sing.sum())
    inv_s = (v * (1.0 / np.sqrt(w))) @ v.conj().T
    grad = sqrt_f * (inv_s @ g @ inv_s)
    return (grad + grad.conj().T) / 2.0


def _fd_gradient(rho, sigma, step, psd_tol):
    n = rho.shape[0]
    # Perturbed states may pick up eigenvalues ~ -step; widen the clamp so
    # the fidelity evaluations stay total.
    tol = max(psd_tol, 10.0 * step)
    grad = np.zeros((n, n), dtype=complex)
    for b in hermitian_basis(n):
        fp = fidelity(rho + step * b, sigma, psd_tol=tol)
        fm = fidelity(rho - step * b, sigma, psd_tol=tol)
        grad += ((fp - fm) / (2.0 * step)) * b
    return grad


def _expansion_gradient(rho, sigma, psd_tol):
    """Polynomial-expansion form of the gradient.

    Treats the expansion coefficients of sqrt(rho) = sum_k a_k (rho - I)^k as
    constants and differentiates tr(sqrt(rho) sqrt(sigma)) term by term:

        2 tr sqrt(rho sigma) sum_k a_k sum_{i<k} rb^i sqrt(sigma) rb^{k-1-i}

    with rb = rho - I. This neglects the state dependence of the a_k, so it
    generally differs from the true gradient; it is retained as a
    reproduction switch and its distance to the validated gradient is
    reported.
    """
    coeffs = cayley_hamilton_sqrt_coeffs(rho)
    n = rho.shape[0]
    rb = rho - np.eye(n)
    sqrt_sigma = hermitian_sqrt(sigma, tol=psd_tol)
    # tr sqrt(rho sigma) = sum of sqrt of the (real, non-negative) spectrum
    # of rho sigma, which equals sqrt(F).
    eig = np.linalg.eigvals(rho @ sigma)
    tr_sqrt = float(np.sum(np.sqrt(np.clip(eig.real, 0.0, None))))
    powers = [np.eye(n, dtype=complex)]
    for _ in range(n - 1):
        powers.append(powers[-1] @ rb)
    total = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        inner = np.zeros((n, n), dtype=complex)
        for i in range(k):
            inner += powers[i] @ sqrt_sigma @ powers[k - 1 - i]
        total += coeffs[k] * inner
    return 2.0 * tr_sqrt * total


def terminal_costate(rho, sigma, method="auto", fd_step=FD_STEP,
                     rank_tol=RANK_TOL, psd_tol=POSITIVITY_TOL):
    """Gradient of fidelity(rho, sigma) in rho, as the terminal costate.

    method:
      * "auto" -- closed-form gradient when rho is safely invertible,
        otherwise central finite differences over a Hermitian basis
        (flagged via ``used_fallback``).
      * "analytic", "finite-difference" -- force the respective path.
      * "cayley-hamilton" -- the polynomial-expansion form; falls back to
        finite differences (flagged) on a confluent spectrum.

    The returned ``expansion_gap`` records how far the polynomial-expansion
    form is from the oracle-validated gradient whenever it can be formed.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = _coerce_sigma(sigma)
    _check_pair(rho, sigma)

    min_eig = float(np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)[0])
    invertible = min_eig > rank_tol

    def validated():
        if invertible:
            return _analytic_gradient(rho, sigma, psd_tol), "analytic", False
        return _fd_gradient(rho, sigma, fd_step, psd_tol), "finite-difference", True

    expansion = None
    try:
        expansion = _expansion_gradient(rho, sigma, psd_tol)
    except DegenerateSpectrumError:
        pass

    if method == "auto":
        matrix, used, fallback = validated()
    elif method == "analytic":
        if not invertible:
            raise ValueError(
                f"closed-form gradient needs min eigenvalue > {rank_tol:.1e}, "
                f"got {min_eig:.3e}"
            )
        matrix, used, fallback = _analytic_gradient(rho, sigma, psd_tol), "analytic", False
    elif method == "finite-difference":
        matrix, used, fallback = _fd_gradient(rho, sigma, fd_step, psd_tol), "finite-difference", False
    elif method == "cayley-hamilton":
        if expansion is not None:
            matrix, used, fallback = expansion, "cayley-hamilton", False
        else:
            matrix, used, fallback = _fd_gradient(rho, sigma, fd_step, psd_tol), "finite-difference", True
    else:
        raise ValueError(f"unknown gradient method {method!r}")

    gap = None
    if expansion is not None:
        reference = matrix if method != "cayley-hamilton" else validated()[0]
        gap = float(np.linalg.norm(expansion - reference))
    return TerminalGradient(matrix=matrix, method=used,
                            used_fallback=fallback, expansion_gap=gap)
