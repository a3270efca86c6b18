"""Shared fixtures and independent oracle helpers for the test suite."""

import numpy as np
import pytest

from lindbladpmp.dynamics import LindbladChannel
from lindbladpmp.lambda_atom import LambdaAtomModel


def random_complex(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def random_hermitian(rng, n):
    a = random_complex(rng, n)
    return (a + a.conj().T) / 2.0


def random_density(rng, n, min_eig=0.0):
    """Random full-rank density matrix; eigenvalues >= min_eig after mixing."""
    a = random_complex(rng, n)
    rho = a @ a.conj().T
    rho = rho / rho.trace().real
    if min_eig > 0.0:
        rho = (1.0 - n * min_eig) * rho + min_eig * np.eye(n)
    return rho


def random_density_distinct(rng, n, min_eig=0.05, min_gap=0.03):
    """Full-rank density matrix with well-separated eigenvalues."""
    while True:
        rho = random_density(rng, n, min_eig=min_eig)
        w = np.linalg.eigvalsh(rho)
        if np.diff(np.sort(w)).min() > min_gap:
            return rho


def random_pure(rng, n):
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def random_unitary(rng, n):
    q, r = np.linalg.qr(random_complex(rng, n))
    return q * (np.diag(r) / np.abs(np.diag(r))).conj()


def random_channels(rng, n, k=2, max_rate=0.5):
    return tuple(
        LindbladChannel(jump=random_complex(rng, n), rate=rng.uniform(0, max_rate))
        for _ in range(k)
    )


def rk4_matrix_ode(rhs, y0, t0, t1, substeps):
    """Classic fixed-step RK4 for a matrix-valued ODE y' = rhs(t, y)."""
    y = y0.astype(complex).copy()
    h = (t1 - t0) / substeps
    t = t0
    for _ in range(substeps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


@pytest.fixture
def lam():
    return LambdaAtomModel()


@pytest.fixture
def lam_model(lam):
    return lam.hamiltonian_model()


@pytest.fixture
def lam_channels(lam):
    return lam.channels()


@pytest.fixture
def lam_spec(lam):
    return lam.coherence_spec(c0=1.0, alpha=0.5)
