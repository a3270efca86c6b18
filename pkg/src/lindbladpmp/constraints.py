"""Coherence measure for non-unital channels, the two-sided bound on it, and
the multiplier tracks that enforce the bound along the trajectory.

The coherence is C(rho) = sqrt(sum_i tr(M_i rho)^2) for Hermitian observables
M_i, constrained by alpha*c0 <= C(rho(t)) <= c0. All constraint logic works
with the squared form Cbar = C^2, whose bounds become

    hbar_1 = Cbar - c0^2 <= 0,      hbar_2 = (alpha*c0)^2 - Cbar <= 0.

The multipliers (mu1, mu2) are piecewise-constant, non-negative, and
non-increasing in forward time; they are built by a backward recursion that
adds a non-negative increment wherever the corresponding bound is active.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class CoherenceSpec:
    """Coherence observables and the bound parameters (c0, alpha)."""

    m_ops: tuple
    c0: float
    alpha: float

    def __post_init__(self):
        ops = tuple(np.asarray(m, dtype=complex) for m in self.m_ops)
        for k, m in enumerate(ops):
            if not np.allclose(m, m.conj().T, atol=1e-12):
                raise ValueError(f"coherence observable {k} must be Hermitian")
        object.__setattr__(self, "m_ops", ops)
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def upper_level(self):
        """Active level of the upper bound in the squared form, c0^2."""
        return self.c0 ** 2

    @property
    def lower_level(self):
        """Active level of the lower bound in the squared form, (alpha c0)^2."""
        return (self.alpha * self.c0) ** 2

    def activity_tol(self, tol=None):
        """Default activation band 1e-6 * c0^2 unless overridden."""
        return 1e-6 * self.c0 ** 2 if tol is None else tol


def _traces(rho, spec):
    rho = np.asarray(rho, dtype=complex)
    for m in spec.m_ops:
        if m.shape != rho.shape:
            raise DimensionError(
                f"observable shape {m.shape} does not match state {rho.shape}"
            )
    return np.array([np.trace(m @ rho).real for m in spec.m_ops])


def coherence(rho, spec):
    """C(rho) = sqrt(sum_i tr(M_i rho)^2), non-negative."""
    return float(np.sqrt(np.sum(_traces(rho, spec) ** 2)))


def coherence_squared(rho, spec):
    """Cbar(rho) = C(rho)^2; the form all constraint logic uses."""
    return float(np.sum(_traces(rho, spec) ** 2))


def constraint_values(rho, spec):
    """(hbar_1, hbar_2); the state is feasible iff both are <= 0."""
    cbar = coherence_squared(rho, spec)
    return cbar - spec.upper_level, spec.lower_level - cbar


def coherence_gradient(rho, spec):
    """Gradient of Cbar: 2 sum_i tr(M_i rho) M_i (Hermitian).

    Satisfies d/de Cbar(rho + e*Delta)|_0 = Re tr(grad * Delta) for
    Hermitian Delta.
    """
    traces = _traces(rho, spec)
    grad = np.zeros_like(spec.m_ops[0])
    for t, m in zip(traces, spec.m_ops):
        grad = grad + 2.0 * t * m
    return grad


@dataclass
class MultiplierTrack:
    """Piecewise-constant multipliers over the grid with activity flags.

    mu1 enforces the upper bound, mu2 the lower bound; both have length
    n_steps + 1 and are non-negative. ``upper_active`` / ``lower_active``
    record per-grid-point constraint activity; a point with neither flag is
    inactive and carries its multiplier value unchanged.
    """

    mu1: np.ndarray
    mu2: np.ndarray
    upper_active: np.ndarray
    lower_active: np.ndarray

    @classmethod
    def zeros(cls, n_steps):
        size = n_steps + 1
        return cls(
            mu1=np.zeros(size),
            mu2=np.zeros(size),
            upper_active=np.zeros(size, dtype=bool),
            lower_active=np.zeros(size, dtype=bool),
        )

    @property
    def mu_bar(self):
        """Effective scalar weight 2*(mu1 - mu2) entering the costate flow."""
        return 2.0 * (self.mu1 - self.mu2)

    def validate(self):
        if (self.mu1 < 0).any() or (self.mu2 < 0).any():
            raise ValueError("multipliers must stay non-negative")


def _increment(rho, spec, n_steps, scalarization, fixed_increment):
    if callable(scalarization):
        return float(scalarization(coherence_gradient(rho, spec), rho)) / n_steps
    if scalarization == "frobenius":
        return float(np.linalg.norm(coherence_gradient(rho, spec))) / n_steps
    if scalarization == "fixed":
        return float(fixed_increment) / n_steps
    raise ValueError(f"unknown scalarization {scalarization!r}")


def update_multipliers(track, trajectory, spec, n_steps, m, activity_tol=None,
                       scalarization="frobenius", fixed_increment=1.0,
                       lower_enabled_from=0):
    """One backward multiplier step: set (mu1, mu2) at m-1 from the values
    at m and the constraint activity at grid point m.

    Activity is detected with the band |Cbar - level| <= activity_tol,
    extended one-sided so that a value beyond the bound also counts as
    active (a violating excursion must keep pushing the multiplier). An
    active bound adds the non-negative scalar increment

        delta = ||grad Cbar(rho_m)||_F / n_steps

    (Frobenius scalarization; "fixed" or a callable hook may replace it)
    going backward, so each multiplier is non-increasing in forward time.
    The lower bound is only examined for m >= ``lower_enabled_from``.
    """
    if not 1 <= m <= n_steps:
        raise IndexError(f"step index {m} outside 1..{n_steps}")
    tol = spec.activity_tol(activity_tol)
    cbar = coherence_squared(trajectory[m], spec)

    upper = cbar >= spec.upper_level - tol
    lower = m >= lower_enabled_from and cbar <= spec.lower_level + tol
    track.upper_active[m] = upper
    track.lower_active[m] = lower

    delta = 0.0
    if upper or lower:
        delta = _increment(trajectory[m], spec, n_steps, scalarization,
                           fixed_increment)
    track.mu1[m - 1] = track.mu1[m] + (delta if upper else 0.0)
    track.mu2[m - 1] = track.mu2[m] + (delta if lower else 0.0)
    track.validate()
    return track


def grace_start_index(trajectory, spec, activity_tol=None):
    """First grid index at which the coherence reaches the lower level.

    Supports initial states that start below the lower bound: the bound is
    only enforced once the trajectory first satisfies it. Returns
    len(trajectory) when the level is never reached.
    """
    tol = spec.activity_tol(activity_tol)
    for m, rho in enumerate(trajectory):
        if coherence_squared(rho, spec) >= spec.lower_level - tol:
            return m
    return len(trajectory)


def build_multiplier_track(trajectory, spec, n_steps, activity_tol=None,
                           scalarization="frobenius", fixed_increment=1.0,
                           constraint_mode="grace"):
    """Full backward sweep producing the multiplier track for a trajectory.

    Multipliers start at zero at the terminal time. ``constraint_mode``
    selects how the lower bound is handled: "strict" enforces it from t=0,
    "grace" only after the coherence first reaches the lower level, and
    "upper-only" disables it.
    """
    if constraint_mode == "strict":
        lower_from = 0
    elif constraint_mode == "grace":
        lower_from = grace_start_index(trajectory, spec, activity_tol)
    elif constraint_mode == "upper-only":
        lower_from = n_steps + 1
    else:
        raise ValueError(f"unknown constraint mode {constraint_mode!r}")

    track = MultiplierTrack.zeros(n_steps)
    for m in range(n_steps, 0, -1):
        update_multipliers(track, trajectory, spec, n_steps, m,
                           activity_tol=activity_tol,
                           scalarization=scalarization,
                           fixed_increment=fixed_increment,
                           lower_enabled_from=lower_from)
    # Activity at the initial point, for reporting only (no update uses it).
    tol = spec.activity_tol(activity_tol)
    cbar0 = coherence_squared(trajectory[0], spec)
    track.upper_active[0] = cbar0 >= spec.upper_level - tol
    track.lower_active[0] = 0 >= lower_from and cbar0 <= spec.lower_level + tol
    return track
