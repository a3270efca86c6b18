"""Pontryagin-type outer iteration: Hamiltonian evaluation, grid
maximization over the control triple (u, omega, phi), and the discretized
forward/backward sweep with multiplier updates and a stopping test.

One iteration consists of
  1. forward propagation of the state under the current schedule,
  2. the terminal costate (fidelity gradient) and the multiplier track,
  3. backward propagation of the costate,
  4. per-step evaluation of the control Hamiltonian

         H_m(u, w, p) = Re tr( (pi_m - mu_bar_m sum_i tr(M_i rho_m) M_i)'
                               (-i[H(u, w, p, t_m), rho_m] + D(rho_m)) ),

  5. replacement of the per-step amplitudes u_m by their grid argmax and of
     the shared (omega, phi) by the pair maximizing sum_m H_m,
  6. a stopping test on the change of all three control components.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import (
    CoherenceSpec,
    build_multiplier_track,
    coherence_squared,
    constraint_values,
    grace_start_index,
)
from .costate import adjoint_generator, propagate_backward
from .dynamics import HamiltonianModel, check_density_matrix, master_rhs, propagate_forward
from .errors import ConfigError, ConstraintError, DimensionError
from .fidelity import TargetState, fidelity, terminal_costate


@dataclass(frozen=True)
class ControlGrids:
    """Sorted candidate grids for the control triple."""

    u: np.ndarray
    omega: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        for name in ("u", "omega", "phi"):
            vals = np.sort(np.asarray(getattr(self, name), dtype=float))
            if vals.size == 0:
                raise ValueError(f"empty {name} grid")
            object.__setattr__(self, name, vals)

    @classmethod
    def default(cls, u_bounds=(-1.0, 1.0), u_points=41,
                omega_range=(0.1, 0.5), omega_points=21, phi_points=16):
        """Defaults: 41 amplitudes in [-1, 1], 21 frequencies in [0.1, 0.5],
        16 phases in [0, 2*pi)."""
        return cls(
            u=np.linspace(u_bounds[0], u_bounds[1], u_points),
            omega=np.linspace(omega_range[0], omega_range[1], omega_points),
            phi=np.linspace(0.0, 2.0 * np.pi, phi_points, endpoint=False),
        )


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant amplitude u plus the shared (omega, phi)."""

    u: np.ndarray
    omega: float
    phi: float
    bounds: tuple = (-1.0, 1.0)
    grids: ControlGrids | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        lo, hi = self.bounds
        if self.u.size and (self.u.min() < lo - 1e-12 or self.u.max() > hi + 1e-12):
            raise ValueError(
                f"amplitudes leave the admissible range [{lo}, {hi}]"
            )


@dataclass(frozen=True)
class Problem:
    """Dynamics, constraint data and boundary states of one solve."""

    model: HamiltonianModel
    channels: tuple
    coherence: CoherenceSpec | None
    rho0: np.ndarray
    target: TargetState

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "rho0", np.asarray(self.rho0, dtype=complex))


@dataclass(frozen=True)
class SolverConfig:
    """Discretization, grids, tolerances and mode switches of the solve."""

    n_steps: int = 50
    max_iterations: int = 200
    eps_u: float = 1e-4
    eps_omega: float = 1e-4
    eps_phi: float = 1e-4
    activity_tol: float | None = None
    u_bounds: tuple = (-1.0, 1.0)
    u_points: int = 41
    omega_range: tuple = (0.1, 0.5)
    omega_points: int = 21
    phi_points: int = 16
    initial_u: float = 0.0
    initial_omega: float = 0.3
    initial_phi: float = 0.0
    propagator_mode: str = "product"
    adjoint_mode: str = "derived"
    gradient_method: str = "auto"
    constraint_mode: str = "grace"
    scalarization: str = "frobenius"
    fixed_increment: float = 1.0
    relaxation: float = 1.0
    refine: bool = False

    def validate(self):
        if self.n_steps < 2:
            raise ConfigError("must be at least 2", field="n_steps")
        if self.max_iterations < 0:
            raise ConfigError("must be non-negative", field="max_iterations")
        for name in ("eps_u", "eps_omega", "eps_phi"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", field=name)
        if self.activity_tol is not None and not self.activity_tol > 0:
            raise ConfigError("must be positive when given", field="activity_tol")
        if not self.u_bounds[0] <= self.u_bounds[1]:
            raise ConfigError("lower bound exceeds upper", field="u_bounds")
        for name in ("u_points", "omega_points", "phi_points"):
            if getattr(self, name) < 1:
                raise ConfigError("grid needs at least one point", field=name)
        if not self.omega_range[0] <= self.omega_range[1]:
            raise ConfigError("lower edge exceeds upper", field="omega_range")
        if not self.u_bounds[0] - 1e-12 <= self.initial_u <= self.u_bounds[1] + 1e-12:
            raise ConfigError("outside the amplitude bounds", field="initial_u")
        if self.propagator_mode not in ("product", "summed"):
            raise ConfigError(f"unknown mode {self.propagator_mode!r}",
                              field="propagator_mode")
        if self.adjoint_mode not in ("derived", "shifted"):
            raise ConfigError(f"unknown mode {self.adjoint_mode!r}",
                              field="adjoint_mode")
        if self.gradient_method not in ("auto", "analytic",
                                        "finite-difference", "cayley-hamilton"):
            raise ConfigError(f"unknown method {self.gradient_method!r}",
                              field="gradient_method")
        if self.constraint_mode not in ("strict", "grace", "upper-only"):
            raise ConfigError(f"unknown mode {self.constraint_mode!r}",
                              field="constraint_mode")
        if self.scalarization not in ("frobenius", "fixed"):
            raise ConfigError(f"unknown rule {self.scalarization!r}",
                              field="scalarization")
        if not 0.0 < self.relaxation <= 1.0:
            raise ConfigError("must lie in (0, 1]", field="relaxation")
        return self

    def grids(self):
        return ControlGrids.default(
            u_bounds=self.u_bounds, u_points=self.u_points,
            omega_range=self.omega_range, omega_points=self.omega_points,
            phi_points=self.phi_points,
        )

    def initial_schedule(self):
        return ControlSchedule(
            u=np.full(self.n_steps, self.initial_u),
            omega=self.initial_omega, phi=self.initial_phi,
            bounds=self.u_bounds, grids=self.grids(),
        )


@dataclass(frozen=True)
class ConstraintSummary:
    """Coherence range and bound violations along the final trajectory."""

    max_cbar: float
    min_cbar: float
    upper_violations: int
    lower_violations: int
    max_upper_violation: float
    max_lower_violation: float
    grace_start: int | None


@dataclass(frozen=True)
class SolverFlags:
    """Diagnostics accumulated over the solve."""

    gradient_methods: tuple
    gradient_fallback_used: bool
    adjoint_form_gap: float
    max_hamiltonian_imag: float


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a solve, including enough data to export all artifacts.

    ``fidelity_history`` has one entry per evaluated schedule (initial plus
    one per iteration); ``control_changes``, ``omega_history``,
    ``phi_history`` and ``multiplier_maxima`` record the per-iteration
    control movement and the largest multiplier values seen in each
    backward sweep.
    """

    final_fidelity: float
    initial_fidelity: float
    iterations: int
    fidelity_history: tuple
    control_changes: tuple
    omega_history: tuple
    phi_history: tuple
    multiplier_maxima: tuple
    final_schedule: ControlSchedule
    constraint_summary: ConstraintSummary | None
    flags: SolverFlags
    stop_reason: str
    trajectory: np.ndarray
    multipliers: object  # MultiplierTrack or None


def _effective_costate(pi, rho, mu_bar, spec):
    if spec is None or mu_bar == 0.0:
        return np.asarray(pi, dtype=complex)
    shift = np.zeros_like(spec.m_ops[0])
    for m in spec.m_ops:
        shift = shift + np.trace(m @ rho) * m
    return pi - mu_bar * shift


def _hamiltonian_complex(rho, pi, mu_bar, control, t, model, channels, spec):
    u, omega, phi = control
    h = model.hamiltonian(u, omega, phi, t)
    rhs = master_rhs(rho, h, channels)
    pi_eff = _effective_costate(pi, rho, mu_bar, spec)
    return complex(np.trace(pi_eff.conj().T @ rhs))


def pontryagin_hamiltonian(rho, pi, mu_bar, control, t, model, channels,
                           spec=None):
    """Control Hamiltonian value (real part of the costate/velocity pairing).

    The trace is real up to roundoff for a Hermitian costate; the imaginary
    part is monitored separately by the solver.
    """
    return _hamiltonian_complex(rho, pi, mu_bar, control, t, model, channels,
                                spec).real


def maximize_hamiltonian(rho, pi, mu_bar, t, grids, model, channels,
                         spec=None):
    """Exhaustive grid argmax of the control Hamiltonian at one grid point.

    Ties resolve deterministically to the smallest u, then the smallest
    omega, then the smallest phi (the grids are iterated in ascending order
    and only a strict improvement replaces the incumbent).
    """
    best = None
    best_val = -math.inf
    for u in grids.u:
        for omega in grids.omega:
            for phi in grids.phi:
                val = pontryagin_hamiltonian(rho, pi, mu_bar,
                                             (u, omega, phi), t,
                                             model, channels, spec)
                if val > best_val:
                    best_val = val
                    best = (float(u), float(omega), float(phi))
    return best


def _update_controls(trajectory, costates, mu_bar, model, channels,
                     spec, n_steps, grids, refine=False):
    """One full control update: per-step amplitudes plus shared (omega, phi).

    The Hamiltonian is affine in u, H_m(u) = c0_m + u * c1_m(omega, phi), so
    the per-step grid maximum sits at a grid endpoint (the smaller amplitude
    on ties, matching the fixed tie-break order). The shared pair maximizes
    the sum over m of those per-step maxima, scanning the grids in ascending
    order with strict-improvement replacement so ties keep the smallest
    candidates.
    """
    n = trajectory[0].shape[0]
    drift_rhs = []
    pairing = []  # W_m with tr(W_m B) = tr(pi_eff' (-i[B, rho]))
    c0_cplx = np.empty(n_steps, dtype=complex)
    for m in range(n_steps):
        pi_eff = _effective_costate(costates[m], trajectory[m], mu_bar[m], spec)
        r0 = master_rhs(trajectory[m], model.drift, channels)
        drift_rhs.append(r0)
        c0_cplx[m] = np.trace(pi_eff.conj().T @ r0)
        pe = pi_eff.conj().T
        pairing.append(-1j * (trajectory[m] @ pe - pe @ trajectory[m]))

    u_lo = float(grids.u[0])
    u_hi = float(grids.u[-1])

    def couplings(omega, phi):
        return [np.trace(pairing[m] @ model.control_coupling(
            1.0, omega, phi, m / n_steps)) for m in range(n_steps)]

    def score(omega, phi):
        c1 = couplings(omega, phi)
        total = 0.0
        us = np.empty(n_steps)
        for m in range(n_steps):
            lo = c0_cplx[m].real + u_lo * c1[m].real
            hi = c0_cplx[m].real + u_hi * c1[m].real
            if hi > lo:
                us[m] = u_hi
                total += hi
            else:
                us[m] = u_lo
                total += lo
        return total, us, c1

    best_total = -math.inf
    best = None
    for omega in grids.omega:
        for phi in grids.phi:
            total, us, c1 = score(omega, phi)
            if total > best_total:
                best_total = total
                best = (float(omega), float(phi), us, c1)

    if refine:
        omega0, phi0 = best[0], best[1]
        d_omega = (grids.omega[-1] - grids.omega[0]) / max(len(grids.omega) - 1, 1)
        d_phi = (grids.phi[-1] - grids.phi[0]) / max(len(grids.phi) - 1, 1)
        for omega in sorted({max(grids.omega[0], omega0 - d_omega / 2), omega0,
                             min(grids.omega[-1], omega0 + d_omega / 2)}):
            for phi in sorted({phi0 - d_phi / 2, phi0, phi0 + d_phi / 2}):
                total, us, c1 = score(omega, phi)
                if total > best_total:
                    best_total = total
                    best = (float(omega), float(phi), us, c1)

    omega_new, phi_new, u_new, c1 = best
    chosen = c0_cplx + u_new * np.asarray(c1)
    max_imag = float(np.abs(chosen.imag).max()) if n_steps else 0.0
    return u_new, omega_new, phi_new, max_imag


def _constraint_summary(trajectory, spec, mode, activity_tol):
    if spec is None:
        return None
    tol = spec.activity_tol(activity_tol)
    cbars = np.array([coherence_squared(r, spec) for r in trajectory])
    if mode == "grace":
        grace = grace_start_index(trajectory, spec, activity_tol)
    else:
        grace = 0 if mode == "strict" else len(trajectory)
    upper_violation = np.clip(cbars - spec.upper_level, 0.0, None)
    lower_violation = np.clip(spec.lower_level - cbars, 0.0, None)
    lower_violation[:min(grace, len(cbars))] = 0.0
    return ConstraintSummary(
        max_cbar=float(cbars.max()),
        min_cbar=float(cbars.min()),
        upper_violations=int((upper_violation > tol).sum()),
        lower_violations=int((lower_violation > tol).sum()),
        max_upper_violation=float(upper_violation.max()),
        max_lower_violation=float(lower_violation.max()),
        grace_start=None if grace >= len(trajectory) else int(grace),
    )


def solve(problem, config):
    """Run the full discretized iteration and return a
    :class:`SolveReport`.

    Terminates when the three control components all change by less than
    their tolerances between consecutive iterations ("converged") or after
    ``max_iterations`` sweeps ("max-iterations"). Identical inputs produce
    bit-identical reports: the iteration is deterministic and tie-breaking
    is fixed.
    """
    config.validate()
    model, channels = problem.model, problem.channels
    spec = problem.coherence
    sigma = problem.target.sigma if isinstance(problem.target, TargetState) \
        else np.asarray(problem.target, dtype=complex)
    check_density_matrix(problem.rho0)
    n_steps = config.n_steps
    grids = config.grids()

    if spec is not None and config.constraint_mode == "strict":
        up, low = constraint_values(problem.rho0, spec)
        tol = spec.activity_tol(config.activity_tol)
        if up > tol or low > tol:
            raise ConstraintError(
                f"initial state infeasible: hbar_1 = {up:.3e}, "
                f"hbar_2 = {low:.3e}"
            )

    schedule = config.initial_schedule()
    trajectory = propagate_forward(problem.rho0, schedule, model, channels,
                                   n_steps, mode=config.propagator_mode)
    fid = fidelity(trajectory[-1], sigma)
    history = [fid]
    changes = []
    omegas = [schedule.omega]
    phis = [schedule.phi]
    mu_maxima = []

    fallback_used = False
    methods = set()
    max_imag = 0.0
    adjoint_gap = adjoint_generator(model.drift, channels).form_gap

    track = None
    iterations = 0
    stop_reason = "max-iterations"
    for j in range(config.max_iterations):
        grad = terminal_costate(trajectory[-1], sigma,
                                method=config.gradient_method)
        fallback_used = fallback_used or grad.used_fallback
        methods.add(grad.method)
        if spec is not None:
            track = build_multiplier_track(
                trajectory, spec, n_steps, activity_tol=config.activity_tol,
                scalarization=config.scalarization,
                fixed_increment=config.fixed_increment,
                constraint_mode=config.constraint_mode)
        costates = propagate_backward(grad.matrix, trajectory, track,
                                      schedule, model, channels, spec,
                                      n_steps, adjoint_mode=config.adjoint_mode)
        mu_bar = track.mu_bar if track is not None else np.zeros(n_steps + 1)
        mu_maxima.append((float(track.mu1.max()), float(track.mu2.max()))
                         if track is not None else (0.0, 0.0))
        u_new, omega_new, phi_new, imag = _update_controls(
            trajectory, costates, mu_bar, model, channels, spec,
            n_steps, grids, refine=config.refine)
        max_imag = max(max_imag, imag)

        theta = config.relaxation
        u_next = schedule.u + theta * (u_new - schedule.u)
        omega_next = schedule.omega + theta * (omega_new - schedule.omega)
        phi_next = schedule.phi + theta * (phi_new - schedule.phi)
        delta_u = float(np.abs(u_next - schedule.u).max())
        delta_omega = abs(omega_next - schedule.omega)
        delta_phi = abs(phi_next - schedule.phi)

        schedule = replace(schedule, u=u_next, omega=omega_next, phi=phi_next)
        trajectory = propagate_forward(problem.rho0, schedule, model,
                                       channels, n_steps,
                                       mode=config.propagator_mode)
        fid = fidelity(trajectory[-1], sigma)
        history.append(fid)
        iterations = j + 1
        if (delta_u < config.eps_u and delta_omega < config.eps_omega
                and delta_phi < config.eps_phi):
            stop_reason = "converged"
            break

    if spec is not None:
        track = build_multiplier_track(
            trajectory, spec, n_steps, activity_tol=config.activity_tol,
            scalarization=config.scalarization,
            fixed_increment=config.fixed_increment,
            constraint_mode=config.constraint_mode)

    return SolveReport(
        final_fidelity=history[-1],
        initial_fidelity=history[0],
        iterations=iterations,
        fidelity_history=tuple(history),
        final_schedule=schedule,
        constraint_summary=_constraint_summary(
            trajectory, spec, config.constraint_mode, config.activity_tol),
        flags=SolverFlags(
            gradient_methods=tuple(sorted(methods)),
            gradient_fallback_used=fallback_used,
            adjoint_form_gap=float(adjoint_gap),
            max_hamiltonian_imag=float(max_imag),
        ),
        stop_reason=stop_reason,
        trajectory=trajectory,
        multipliers=track,
    )
