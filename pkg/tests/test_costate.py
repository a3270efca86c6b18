import numpy as np
import pytest

from lindbladpmp.costate import (
    adjoint_generator,
    adjoint_rhs,
    constraint_inhomogeneity,
    control_gradient,
    d0,
    g_operator,
    propagate_backward,
)
from lindbladpmp.constraints import build_multiplier_track
from lindbladpmp.dynamics import (
    HamiltonianModel,
    dissipator,
    liouvillian,
    master_rhs,
    propagate_forward,
)
from lindbladpmp.fidelity import terminal_costate
from lindbladpmp.lambda_atom import RHO_A, RHO_B, RHO_E, target_state
from lindbladpmp.linalg import vectorize
from lindbladpmp.solver import ControlSchedule

from conftest import (
    random_channels,
    random_complex,
    random_density,
    random_hermitian,
    rk4_matrix_ode,
)


class TestD0:
    def test_no_channels(self):
        assert np.array_equal(d0(np.eye(3), ()), np.zeros((3, 3)))

    def test_identity_input(self, lam_channels):
        expected = 0.1 * (RHO_E - RHO_A) + 0.001 * (RHO_E - RHO_B)
        assert np.linalg.norm(d0(np.eye(3), lam_channels) - expected) < 1e-15

    def test_trace_identity(self):
        # Trace cyclicity gives tr(d0(X)) = sum_k g_k tr(X [Lk, Lk']); this
        # vanishes at X = I (and for normal jumps) but not for general X.
        rng = np.random.default_rng(60)
        for _ in range(20):
            x = random_complex(rng, 3)
            chans = random_channels(rng, 3)
            expected = sum(
                ch.rate * np.trace(x @ (ch.jump @ ch.jump.conj().T
                                        - ch.jump.conj().T @ ch.jump))
                for ch in chans)
            assert abs(np.trace(d0(x, chans)) - expected) < 1e-13
            assert abs(np.trace(d0(np.eye(3), chans))) < 1e-13


class TestGOperator:
    def test_zero_case(self):
        x = np.eye(3)
        assert np.array_equal(g_operator(x, np.zeros((3, 3)), ()),
                              np.zeros((3, 3)))

    def test_identity_commutator_vanishes(self, lam_channels):
        rng = np.random.default_rng(61)
        h = random_hermitian(rng, 3)
        lhs = g_operator(np.eye(3), h, lam_channels)
        rhs = (dissipator(np.eye(3), lam_channels)
               + d0(np.eye(3), lam_channels))
        assert np.abs(lhs - rhs).max() < 1e-14

    def test_heisenberg_dissipator_identity(self):
        # D(X) + D0(X) = sum_k g_k (Lk' X Lk - 1/2 {Lk'Lk, X})
        rng = np.random.default_rng(62)
        for _ in range(20):
            x = random_complex(rng, 3)
            chans = random_channels(rng, 3)
            lhs = dissipator(x, chans) + d0(x, chans)
            rhs = np.zeros_like(x)
            for ch in chans:
                l = ch.jump
                ldl = l.conj().T @ l
                rhs += ch.rate * (l.conj().T @ x @ l
                                  - 0.5 * (ldl @ x + x @ ldl))
            assert np.abs(lhs - rhs).max() < 1e-13


class TestAdjointRhs:
    def test_unconstrained_is_g(self, lam_channels, lam_spec):
        rng = np.random.default_rng(63)
        pi = random_hermitian(rng, 3)
        rho = random_density(rng, 3)
        h = random_hermitian(rng, 3)
        lhs = adjoint_rhs(pi, rho, 0.0, h, lam_channels, lam_spec)
        assert np.array_equal(lhs, g_operator(pi.conj().T, h, lam_channels))

    def test_zero_costate_leaves_inhomogeneity(self, lam_channels, lam_spec):
        rng = np.random.default_rng(64)
        rho = random_density(rng, 3)
        h = random_hermitian(rng, 3)
        lhs = adjoint_rhs(np.zeros((3, 3)), rho, 0.8, h, lam_channels,
                          lam_spec)
        rhs = constraint_inhomogeneity(rho, 0.8, h, lam_channels, lam_spec)
        assert np.abs(lhs - rhs).max() < 1e-15

    def test_linearity_split(self, lam_channels, lam_spec):
        rng = np.random.default_rng(65)
        pi = random_complex(rng, 3)
        rho = random_density(rng, 3)
        h = random_hermitian(rng, 3)
        full = adjoint_rhs(pi, rho, 0.4, h, lam_channels, lam_spec)
        parts = (adjoint_rhs(pi, rho, 0.0, h, lam_channels, lam_spec)
                 + constraint_inhomogeneity(rho, 0.4, h, lam_channels,
                                            lam_spec))
        assert np.abs(full - parts).max() < 1e-15


class TestAdjointGenerator:
    def test_zero_case(self):
        gen = adjoint_generator(np.zeros((3, 3)), ())
        assert np.array_equal(gen.derived_form, np.zeros((9, 9)))
        assert np.array_equal(gen.shifted_form, np.zeros((9, 9)))

    def test_defining_identity(self):
        rng = np.random.default_rng(66)
        h = random_hermitian(rng, 3)
        chans = random_channels(rng, 3)
        gen = adjoint_generator(h, chans)
        for _ in range(100):
            x = random_complex(rng, 3)
            lhs = gen.derived_form @ vectorize(x)
            rhs = vectorize(g_operator(x, h, chans))
            assert np.abs(lhs - rhs).max() < 1e-12

    def test_derived_form_is_forward_adjoint(self):
        # The flow operator is the Hilbert-Schmidt adjoint of the forward
        # generator, so its vectorization is the conjugate transpose.
        rng = np.random.default_rng(67)
        h = random_hermitian(rng, 3)
        chans = random_channels(rng, 3)
        gen = adjoint_generator(h, chans)
        assert np.abs(gen.derived_form
                      - liouvillian(h, chans).conj().T).max() < 1e-13

    def test_shifted_form_gap_reported(self, lam_model, lam_channels):
        gen = adjoint_generator(lam_model.drift, lam_channels)
        assert gen.form_gap > 0.01  # documented divergence, not an error
        assert np.isfinite(gen.form_gap)


class TestPropagateBackward:
    def test_zero_generator_constant(self):
        model = HamiltonianModel(
            drift=np.zeros((3, 3)),
            control_coupling=lambda u, w, p, t: np.zeros((3, 3)))
        rng = np.random.default_rng(68)
        pi_n = random_hermitian(rng, 3)
        n = 8
        traj = np.array([np.eye(3) / 3.0] * (n + 1))
        sched = ControlSchedule(u=np.zeros(n), omega=0.3, phi=0.0)
        cost = propagate_backward(pi_n, traj, None, sched, model, (), None, n)
        for c in cost:
            assert np.abs(c - pi_n).max() < 1e-14

    def test_linearity_in_terminal_value(self, lam_model, lam_channels):
        rng = np.random.default_rng(69)
        n = 12
        sched = ControlSchedule(u=rng.uniform(-1, 1, n), omega=0.3, phi=0.4)
        traj = propagate_forward(RHO_E, sched, lam_model, lam_channels, n)
        pi_n = random_hermitian(rng, 3)
        c1 = propagate_backward(pi_n, traj, None, sched, lam_model,
                                lam_channels, None, n)
        c2 = propagate_backward(2.0 * pi_n, traj, None, sched, lam_model,
                                lam_channels, None, n)
        assert np.abs(2.0 * c1 - c2).max() < 1e-12

    def test_matches_reference_integration(self, lam_model, lam_channels):
        # mu_bar = 0 backward flow against a fine RK4 integration of the
        # matrix-form costate equation with the same piecewise-frozen H
        rng = np.random.default_rng(70)
        n = 10
        sched = ControlSchedule(u=rng.uniform(-1, 1, n), omega=0.35, phi=1.1)
        traj = propagate_forward(RHO_E, sched, lam_model, lam_channels, n)
        pi_n = terminal_costate(traj[-1], target_state(np.pi / 2)).matrix

        cost = propagate_backward(pi_n, traj, None, sched, lam_model,
                                  lam_channels, None, n)
        ref = pi_n.copy()
        for m in range(n - 1, -1, -1):
            h = lam_model.hamiltonian(sched.u[m], sched.omega, sched.phi,
                                      m / n)
            # integrate d(pi)/ds = G(pi) in reversed time s = t_{m+1} - t
            ref = rk4_matrix_ode(
                lambda s, y: g_operator(y, h, lam_channels),
                ref, 0.0, 1.0 / n, 400)
            assert np.abs(cost[m] - ref).max() < 1e-6

    def test_pairing_conserved_without_dissipation(self, lam_model):
        rng = np.random.default_rng(71)
        n = 15
        sched = ControlSchedule(u=rng.uniform(-1, 1, n), omega=0.3, phi=0.9)
        rho0 = random_density(rng, 3)
        traj = propagate_forward(rho0, sched, lam_model, (), n)
        pi_n = random_hermitian(rng, 3)
        cost = propagate_backward(pi_n, traj, None, sched, lam_model, (),
                                  None, n)
        pairs = [np.trace(cost[m].conj().T @ traj[m]).real
                 for m in range(n + 1)]
        assert max(abs(p - pairs[-1]) for p in pairs) < 1e-8

    def test_inhomogeneity_enters(self, lam_model, lam_channels, lam_spec):
        # nonzero multipliers must change the costates
        rng = np.random.default_rng(72)
        n = 10
        sched = ControlSchedule(u=np.full(n, -1.0), omega=0.1, phi=0.0)
        traj = propagate_forward(RHO_E, sched, lam_model, lam_channels, n)
        pi_n = terminal_costate(traj[-1], target_state(np.pi / 2)).matrix
        free = propagate_backward(pi_n, traj, None, sched, lam_model,
                                  lam_channels, lam_spec, n)
        from lindbladpmp.constraints import MultiplierTrack
        track = MultiplierTrack.zeros(n)
        track.mu1[:] = np.linspace(1.0, 0.0, n + 1)
        forced = propagate_backward(pi_n, traj, track, sched, lam_model,
                                    lam_channels, lam_spec, n)
        assert np.abs(free - forced).max() > 1e-6


class TestControlGradient:
    def test_matches_repropagation_finite_differences(self, lam_model,
                                                      lam_channels):
        from dataclasses import replace
        from lindbladpmp.fidelity import fidelity
        rng = np.random.default_rng(73)
        n = 12
        sched = ControlSchedule(u=rng.uniform(-1, 1, n), omega=0.3, phi=0.7)
        sigma = target_state(np.pi / 2)
        traj = propagate_forward(RHO_E, sched, lam_model, lam_channels, n)
        pi_n = terminal_costate(traj[-1], sigma).matrix
        cost = propagate_backward(pi_n, traj, None, sched, lam_model,
                                  lam_channels, None, n)
        grads = control_gradient(traj, cost, sched, lam_model, lam_channels, n)

        def objective(u):
            t = propagate_forward(RHO_E, replace(sched, u=u), lam_model,
                                  lam_channels, n, validate=False)
            return fidelity(t[-1], sigma)

        step = 1e-5
        for m in range(n):
            up, dn = sched.u.copy(), sched.u.copy()
            up[m] += step
            dn[m] -= step
            fd = (objective(up) - objective(dn)) / (2 * step)
            assert abs(fd - grads[m]) < max(1e-5 * abs(fd), 1e-9)
