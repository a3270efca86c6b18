"""Three-level Lambda-type atom: two ground states |a>, |b> coupled to one
excited state |e> that decays into both of them (non-unital spontaneous
emission). Basis ordering is (e, a, b).

The drive couples the e-a transition only,

    H_C(t) = u(t) cos(w t) ( e^{-i phi} |e><a| + e^{i phi} |a><e| ),

and the coherence observables M1 = |e><a| + |a><e|,
M2 = -i(|e><a| - |a><e|) measure the e-a off-diagonal structure.
"""

from dataclasses import dataclass

import numpy as np

from .constraints import CoherenceSpec, coherence
from .dynamics import HamiltonianModel, LindbladChannel
from .fidelity import TargetState
from .solver import Problem

# Basis projectors, ordering (e, a, b).
RHO_E = np.diag([1.0, 0.0, 0.0]).astype(complex)
RHO_A = np.diag([0.0, 1.0, 0.0]).astype(complex)
RHO_B = np.diag([0.0, 0.0, 1.0]).astype(complex)


def _flip_ea(phase):
    """e^{-i phase} |e><a| + e^{i phase} |a><e|."""
    out = np.zeros((3, 3), dtype=complex)
    out[0, 1] = np.exp(-1j * phase)
    out[1, 0] = np.exp(1j * phase)
    return out


@dataclass(frozen=True)
class LambdaAtomModel:
    """Energies and decay rates of the Lambda atom (hbar = 1).

    Defaults are the worked instance: E_e = 0.8, E_a = 0.5, E_b = 0.4 with
    decay rates gamma_a = 0.1 (e -> a) and gamma_b = 1e-3 (e -> b). With
    gamma_b << gamma_a the b level stays almost unpopulated and the atom
    behaves like a driven two-level system.
    """

    energy_e: float = 0.8
    energy_a: float = 0.5
    energy_b: float = 0.4
    gamma_a: float = 0.1
    gamma_b: float = 1e-3

    @classmethod
    def from_frequencies(cls, omega1, omega2, omega3, gamma_a=0.1,
                         gamma_b=1e-3):
        """Alternative constructor from the transition frequencies.

        Uses the traceless combination
        H0 = (w1/3)(rho_e - rho_a) + (w2/3)(rho_e - rho_b)
             + (w3/3)(rho_a - rho_b),
        i.e. the frequency form with the mean energy removed. This differs
        from the energy form by the dropped constant (E_a + E_b + E_e)/3 and
        an overall normalization; the two are not numerically
        interchangeable.
        """
        return cls(
            energy_e=(omega1 + omega2) / 3.0,
            energy_a=(omega3 - omega1) / 3.0,
            energy_b=-(omega2 + omega3) / 3.0,
            gamma_a=gamma_a, gamma_b=gamma_b,
        )

    @property
    def omega1(self):
        """Resonance of the e-a transition."""
        return self.energy_e - self.energy_a

    @property
    def omega2(self):
        """Resonance of the e-b transition."""
        return self.energy_e - self.energy_b

    @property
    def omega3(self):
        """Resonance of the a-b transition."""
        return self.energy_a - self.energy_b

    def drift_hamiltonian(self):
        """H0 = E_e rho_e + E_a rho_a + E_b rho_b (diagonal)."""
        return np.diag([self.energy_e, self.energy_a,
                        self.energy_b]).astype(complex)

    @staticmethod
    def control_hamiltonian(u, omega, phi, t):
        """Drive Hamiltonian u cos(w t) (e^{-i phi}|e><a| + h.c.)."""
        return u * np.cos(omega * t) * _flip_ea(phi)

    def channels(self):
        """Spontaneous-emission channels (|a><e|, gamma_a), (|b><e|, gamma_b)."""
        l1 = np.zeros((3, 3), dtype=complex)
        l1[1, 0] = 1.0
        l2 = np.zeros((3, 3), dtype=complex)
        l2[2, 0] = 1.0
        return (LindbladChannel(jump=l1, rate=self.gamma_a),
                LindbladChannel(jump=l2, rate=self.gamma_b))

    @staticmethod
    def coherence_operators():
        """(M1, M2): Hermitian observables of the e-a coherence."""
        m1 = _flip_ea(0.0)
        m2 = np.zeros((3, 3), dtype=complex)
        m2[0, 1] = -1j
        m2[1, 0] = 1j
        return m1, m2

    def hamiltonian_model(self):
        return HamiltonianModel(drift=self.drift_hamiltonian(),
                                control_coupling=self.control_hamiltonian)

    def coherence_spec(self, c0=1.0, alpha=0.5):
        return CoherenceSpec(m_ops=self.coherence_operators(), c0=c0,
                             alpha=alpha)


def target_state(beta):
    """Pure target sin(beta)|a> + cos(beta)|b> as a density matrix.

    beta = 0 gives rho_b, beta = pi/2 gives rho_a.
    """
    sigma = np.zeros((3, 3), dtype=complex)
    s, c = np.sin(beta), np.cos(beta)
    sigma[1, 1] = s ** 2
    sigma[1, 2] = sigma[2, 1] = s * c
    sigma[2, 2] = c ** 2
    return TargetState(sigma=sigma)


def default_problem(beta=np.pi / 2, c0=1.0, alpha=0.5,
                    model=None):
    """Ready-to-solve bundle: excited initial state, pure target
    parameterized by beta, coherence bound (c0, alpha).

    The initial state rho_e has zero coherence, so the lower bound is
    violated at t = 0; the solver's default "grace" constraint mode delays
    it until the coherence first reaches the lower level.
    """
    model = model or LambdaAtomModel()
    return Problem(
        model=model.hamiltonian_model(),
        channels=model.channels(),
        coherence=model.coherence_spec(c0=c0, alpha=alpha),
        rho0=RHO_E.copy(),
        target=target_state(beta),
    )


def initial_coherence(problem):
    """Coherence of the initial state (zero for the default bundle)."""
    return coherence(problem.rho0, problem.coherence)
