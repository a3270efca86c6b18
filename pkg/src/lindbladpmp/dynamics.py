"""Lindblad master equation: the matrix-form right-hand side, its vectorized
generator, and exact propagation for piecewise-constant controls.

The generator in vectorized (column-stacking) form is

    Lhat = -i(I (x) H - H^T (x) I)
           + sum_k gamma_k (Lk* (x) Lk - 1/2 I (x) Lk'Lk - 1/2 (Lk'Lk)^T (x) I)

so that d/dt vec(rho) = Lhat vec(rho) reproduces
rho_dot = -i[H, rho] + D(rho) with hbar = 1.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, PropagationError
from .linalg import devectorize, kron, matrix_exponential, vectorize

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-9


@dataclass(frozen=True)
class LindbladChannel:
    """A jump operator with its non-negative damping rate."""

    jump: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "jump", np.asarray(self.jump, dtype=complex))
        if self.jump.ndim != 2 or self.jump.shape[0] != self.jump.shape[1]:
            raise DimensionError(
                f"jump operator must be square, got shape {self.jump.shape}"
            )
        if not self.rate >= 0.0:
            raise ValueError(f"damping rate must be non-negative, got {self.rate}")


@dataclass(frozen=True)
class HamiltonianModel:
    """Drift Hamiltonian plus a control coupling H_C(u, omega, phi, t).

    ``control_coupling`` must return a Hermitian matrix for all real
    arguments and must be linear in the amplitude u (bilinear control
    structure); the solver's control update relies on that linearity.
    """

    drift: np.ndarray
    control_coupling: Callable[[float, float, float, float], np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "drift", np.asarray(self.drift, dtype=complex))
        if not np.allclose(self.drift, self.drift.conj().T, atol=1e-12):
            raise ValueError("drift Hamiltonian must be Hermitian")

    def hamiltonian(self, u, omega, phi, t):
        """Total Hamiltonian H0 + H_C(u, omega, phi, t)."""
        return self.drift + self.control_coupling(u, omega, phi, t)


def check_density_matrix(rho, herm_tol=HERMITICITY_TOL, trace_tol=TRACE_TOL,
                         psd_tol=POSITIVITY_TOL):
    """Raise ValueError if rho is not Hermitian, unit-trace and PSD
    within the given tolerances."""
    rho = np.asarray(rho)
    herm = np.linalg.norm(rho - rho.conj().T)
    if herm > herm_tol:
        raise ValueError(f"not Hermitian: ||rho - rho'|| = {herm:.3e}")
    tr = abs(rho.trace() - 1.0)
    if tr > trace_tol:
        raise ValueError(f"trace deviates from one by {tr:.3e}")
    min_eig = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)[0]
    if min_eig < -psd_tol:
        raise ValueError(f"negative eigenvalue {min_eig:.3e}")


def _check_dims(rho, channels):
    n = rho.shape[0]
    for k, ch in enumerate(channels):
        if ch.jump.shape[0] != n:
            raise DimensionError(
                f"channel {k} has dimension {ch.jump.shape[0]}, state has {n}"
            )


def dissipator(rho, channels):
    """Dissipative part sum_k gamma_k (Lk rho Lk' - 1/2 {Lk'Lk, rho}).

    Hermitian and traceless for Hermitian rho.
    """
    rho = np.asarray(rho, dtype=complex)
    _check_dims(rho, channels)
    out = np.zeros_like(rho)
    for ch in channels:
        l = ch.jump
        ldl = l.conj().T @ l
        out += ch.rate * (l @ rho @ l.conj().T - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def master_rhs(rho, h, channels):
    """Full master-equation right-hand side -i[H, rho] + D(rho), hbar = 1."""
    rho = np.asarray(rho, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if h.shape != rho.shape:
        raise DimensionError(
            f"Hamiltonian shape {h.shape} does not match state shape {rho.shape}"
        )
    return -1j * (h @ rho - rho @ h) + dissipator(rho, channels)


def liouvillian(h, channels):
    """Vectorized generator Lhat with Lhat vec(rho) = vec(master_rhs(rho))."""
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    eye = np.eye(n)
    lhat = -1j * (kron(eye, h) - kron(h.T, eye))
    for ch in channels:
        l = ch.jump
        if l.shape[0] != n:
            raise DimensionError(
                f"channel dimension {l.shape[0]} does not match Hamiltonian {n}"
            )
        ldl = l.conj().T @ l
        lhat += ch.rate * (
            kron(l.conj(), l)
            - 0.5 * kron(eye, ldl)
            - 0.5 * kron(ldl.T, eye)
        )
    return lhat


def step_generators(schedule, model, channels, n_steps):
    """Per-subinterval generators Lhat(V_m) sampled at the left grid points.

    The control on [t_m, t_{m+1}) is V_m = (u_m, omega, phi) with the
    explicitly time-dependent coupling frozen at t_m = m / n_steps.
    """
    if len(schedule.u) != n_steps:
        raise DimensionError(
            f"schedule has {len(schedule.u)} amplitudes, expected {n_steps}"
        )
    gens = []
    for m in range(n_steps):
        t_m = m / n_steps
        h = model.hamiltonian(schedule.u[m], schedule.omega, schedule.phi, t_m)
        gens.append(liouvillian(h, channels))
    return gens


def propagate_forward(rho0, schedule, model, channels, n_steps,
                      mode="product", validate=True):
    """Propagate rho0 over the uniform grid t_m = m / n_steps on [0, 1].

    mode="product" (default) applies the exact per-subinterval flow

        rho_{m+1} = unvec( expm(Lhat(V_m) / N) vec(rho_m) ),

    i.e. the ordered product of per-step exponentials, which is the exact
    solution for a piecewise-constant generator. mode="summed" instead
    exponentiates the accumulated sum of the per-step generators,

        vec(rho_m) = expm( sum_{k<m} Lhat(V_k) / N ) vec(rho_0),

    which coincides with the product form only when the generators commute;
    it is retained as a reproduction switch.

    Returns an array of n_steps + 1 density matrices. With ``validate`` every
    state is checked against the density-matrix invariants and a violation
    raises :class:`~lindbladpmp.errors.PropagationError` carrying the step.
    """
    if mode not in ("product", "summed"):
        raise ValueError(f"unknown propagation mode {mode!r}")
    rho0 = np.asarray(rho0, dtype=complex)
    n = rho0.shape[0]
    gens = step_generators(schedule, model, channels, n_steps)

    traj = np.empty((n_steps + 1, n, n), dtype=complex)
    traj[0] = rho0
    _validate_state(rho0, 0, validate)

    if mode == "product":
        vec = vectorize(rho0)
        for m in range(n_steps):
            vec = matrix_exponential(gens[m] / n_steps) @ vec
            traj[m + 1] = devectorize(vec, n)
            _validate_state(traj[m + 1], m + 1, validate)
    else:
        vec0 = vectorize(rho0)
        acc = np.zeros_like(gens[0])
        for m in range(n_steps):
            acc = acc + gens[m] / n_steps
            traj[m + 1] = devectorize(matrix_exponential(acc) @ vec0, n)
            _validate_state(traj[m + 1], m + 1, validate)
    return traj


def _validate_state(rho, step, validate):
    if not validate:
        return
    try:
        check_density_matrix(rho)
    except ValueError as exc:
        raise PropagationError(f"invalid state at step {step}: {exc}",
                               step=step) from exc
