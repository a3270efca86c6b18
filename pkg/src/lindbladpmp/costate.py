"""Adjoint (costate) system of the fidelity-maximization problem.

The costate pi pairs with the state through Re tr(pi' rho_dot). Its flow is
governed by the operator

    G(X) = -i[X, H(t)] + D(X) + D0(X),
    D0(X) = sum_k gamma_k (Lk' X Lk - Lk X Lk'),

where D is the same dissipator that drives the state. Algebraically
D + D0 is the Heisenberg-picture dissipator, so G is the adjoint of the
forward generator with respect to the Hilbert-Schmidt inner product; the
implementation nevertheless computes G literally from its definition and the
test suite verifies the identity.

With active state constraints the costate equation picks up a state-dependent
inhomogeneity proportional to the effective multiplier weight mu_bar:

    -d(pi')/dt = G(pi') - mu_bar * sum_i [ M_i tr(G(M_i') rho)
                                           + tr(M_i rho) G(M_i') ].
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .constraints import build_multiplier_track  # noqa: F401  (re-export)
from .dynamics import dissipator, liouvillian, step_generators
from .errors import DimensionError
from .linalg import devectorize, kron, matrix_exponential, vectorize


def d0(x, channels):
    """Auxiliary dissipator sum_k gamma_k (Lk' X Lk - Lk X Lk'); traceless."""
    x = np.asarray(x, dtype=complex)
    out = np.zeros_like(x)
    for k, ch in enumerate(channels):
        l = ch.jump
        if l.shape[0] != x.shape[0]:
            raise DimensionError(
                f"channel {k} dimension {l.shape[0]} does not match {x.shape[0]}"
            )
        out += ch.rate * (l.conj().T @ x @ l - l @ x @ l.conj().T)
    return out


def g_operator(x, h, channels):
    """Adjoint-flow operator G(X) = -i[X, H] + D(X) + D0(X)."""
    x = np.asarray(x, dtype=complex)
    h = np.asarray(h, dtype=complex)
    if h.shape != x.shape:
        raise DimensionError(
            f"Hamiltonian shape {h.shape} does not match operand {x.shape}"
        )
    return -1j * (x @ h - h @ x) + dissipator(x, channels) + d0(x, channels)


def constraint_inhomogeneity(rho, mu_bar, h, channels, spec):
    """Inhomogeneous costate term for an active coherence constraint.

    Returns -mu_bar * sum_i [M_i tr(G(M_i') rho) + tr(M_i rho) G(M_i')],
    i.e. the constraint part of the costate equation moved to the
    inhomogeneous slot of the vectorized flow.
    """
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    if spec is None or mu_bar == 0.0:
        return out
    for m in spec.m_ops:
        g_m = g_operator(m.conj().T, h, channels)
        out += m * np.trace(g_m @ rho) + np.trace(m @ rho) * g_m
    return -mu_bar * out


def adjoint_rhs(pi, rho, mu_bar, h, channels, spec=None):
    """Right-hand side of the costate equation, i.e. -d(pi')/dt."""
    pi = np.asarray(pi, dtype=complex)
    return (g_operator(pi.conj().T, h, channels)
            + constraint_inhomogeneity(rho, mu_bar, h, channels, spec))


@dataclass(frozen=True)
class AdjointGenerator:
    """Vectorized adjoint generator in two constructions.

    ``derived_form`` vectorizes X -> G(X) column by column and is the form
    the solver uses. ``shifted_form`` is the alternative closed expression
    that augments the forward generator with the jump-operator Kronecker
    pairs Lk^T (x) Lk' + Lk* (x) Lk; it does not satisfy the defining
    identity (wrong Hamiltonian sign, extra dissipative term) and is kept
    only for comparison. ``form_gap`` is their Frobenius distance.
    """

    derived_form: np.ndarray
    shifted_form: np.ndarray

    @property
    def form_gap(self):
        return float(np.linalg.norm(self.derived_form - self.shifted_form))

    def form(self, mode):
        if mode == "derived":
            return self.derived_form
        if mode == "shifted":
            return self.shifted_form
        raise ValueError(f"unknown adjoint mode {mode!r}")


def adjoint_generator(h, channels):
    """Build both vectorized forms of the adjoint generator for (H, channels)."""
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    derived = np.empty((n * n, n * n), dtype=complex)
    for col in range(n * n):
        basis = devectorize(np.eye(n * n, dtype=complex)[:, col], n)
        derived[:, col] = vectorize(g_operator(basis, h, channels))

    shifted = liouvillian(h, channels)
    for ch in channels:
        l = ch.jump
        shifted = shifted + ch.rate * (kron(l.T, l.conj().T) + kron(l.conj(), l))
    return AdjointGenerator(derived_form=derived, shifted_form=shifted)


def propagate_backward(pi_terminal, trajectory, track, schedule, model,
                       channels, spec, n_steps, adjoint_mode="derived"):
    """Backward costate propagation from pi(1) over the uniform grid.

    Each subinterval applies the exact exponential of the frozen adjoint
    generator, mirroring the ordered-product forward propagation, plus a
    trapezoid-weighted contribution of the inhomogeneous term sampled at the
    left endpoint:

        vec(pi'_m) = E_m vec(pi'_{m+1}) + (1/2N) (I + E_m) vec(cte_m),

    with E_m = expm(Lhat'(V_m) / N) and cte_m built from (rho_m, mu_bar_m).
    Returns the n_steps + 1 costate matrices.
    """
    pi_terminal = np.asarray(pi_terminal, dtype=complex)
    n = pi_terminal.shape[0]
    if len(trajectory) != n_steps + 1:
        raise DimensionError(
            f"trajectory has {len(trajectory)} states, expected {n_steps + 1}"
        )
    mu_bar = (track.mu_bar if track is not None
              else np.zeros(n_steps + 1))

    costates = np.empty((n_steps + 1, n, n), dtype=complex)
    costates[n_steps] = pi_terminal
    x = vectorize(pi_terminal.conj().T)
    eye = np.eye(n * n)
    for m in range(n_steps - 1, -1, -1):
        t_m = m / n_steps
        h = model.hamiltonian(schedule.u[m], schedule.omega, schedule.phi, t_m)
        gen = adjoint_generator(h, channels).form(adjoint_mode)
        e = matrix_exponential(gen / n_steps)
        cte = constraint_inhomogeneity(trajectory[m], mu_bar[m], h, channels,
                                       spec)
        x = e @ x + (0.5 / n_steps) * ((eye + e) @ vectorize(cte))
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite costate at step {m}")
        costates[m] = devectorize(x, n).conj().T
    return costates


def control_gradient(trajectory, costates, schedule, model, channels, n_steps):
    """Exact derivative of the terminal pairing with respect to each u_m.

    For the discrete flow vec(rho_{m+1}) = expm(Lhat(V_m)/N) vec(rho_m) the
    derivative of the objective in u_m is

        dF/du_m = Re  vec(pi_{m+1})'  K_m  vec(rho_m),

    where K_m is the Frechet derivative of the step exponential in the
    direction of the control part of the generator. This is the
    discretization-consistent evaluation of the Hamiltonian slope in u
    (times the subinterval length 1/N); a left-endpoint sampling of the
    continuous-time slope carries O(1/N) error instead. Assumes the control
    coupling is linear in u.
    """
    grads = np.zeros(n_steps)
    gens = step_generators(schedule, model, channels, n_steps)
    n = trajectory[0].shape[0]
    eye = np.eye(n)
    for m in range(n_steps):
        t_m = m / n_steps
        b = model.control_coupling(1.0, schedule.omega, schedule.phi, t_m)
        gen_b = -1j * (kron(eye, b) - kron(b.T, eye))
        _, frechet = sla.expm_frechet(gens[m] / n_steps, gen_b / n_steps)
        grads[m] = np.vdot(vectorize(costates[m + 1]),
                           frechet @ vectorize(trajectory[m])).real
    return grads
