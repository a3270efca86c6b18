"""Configuration-driven runner.

Reads a JSON run configuration (schema below), executes one of three modes
and writes the artifacts into the output directory:

  solve      full iteration; trajectory, convergence, multiplier tables and
             a JSON summary
  propagate  forward propagation of the initial schedule only
  check      invariant battery on the configured model

All tables are comma-separated with a header row and 12 significant digits;
the summary keeps full double precision. Files are written to a temporary
name and renamed into place so no artifact is ever half-written.

Exit codes: 0 success, 2 configuration error, 3 solver/check error,
4 I/O error.
"""

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import lambda_atom
from .constraints import coherence_squared
from .costate import adjoint_generator
from .dynamics import check_density_matrix, liouvillian, master_rhs, propagate_forward
from .errors import ConfigError, LindbladPMPError
from .fidelity import fidelity, hermitian_basis, terminal_costate
from .lambda_atom import LambdaAtomModel, default_problem
from .linalg import vectorize
from .solver import SolverConfig, pontryagin_hamiltonian, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

SCHEMA_VERSION = 1

_MODEL_KEYS = {"energy_e", "energy_a", "energy_b", "gamma_a", "gamma_b"}
_PROBLEM_KEYS = {"beta", "c0", "alpha"}
_OUTPUT_KEYS = {"directory", "trajectory", "convergence", "multipliers"}
_SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
_TOP_KEYS = {"schema_version", "model", "problem", "solver", "output", "seed"}


@dataclass(frozen=True)
class RunConfig:
    """Validated run description: model, problem, solver and output options."""

    model: LambdaAtomModel = field(default_factory=LambdaAtomModel)
    beta: float = math.pi / 2
    c0: float = 1.0
    alpha: float = 0.5
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "out"
    write_trajectory: bool = True
    write_convergence: bool = True
    write_multipliers: bool = True
    seed: int | None = None  # reserved; the solver is deterministic

    def problem(self):
        return default_problem(beta=self.beta, c0=self.c0, alpha=self.alpha,
                               model=self.model)


def default_config_text():
    """The full configuration with every default spelled out, as JSON."""
    cfg = RunConfig()
    solver = {f.name: getattr(cfg.solver, f.name) for f in fields(SolverConfig)}
    solver["u_bounds"] = list(solver["u_bounds"])
    solver["omega_range"] = list(solver["omega_range"])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": {
            "energy_e": cfg.model.energy_e,
            "energy_a": cfg.model.energy_a,
            "energy_b": cfg.model.energy_b,
            "gamma_a": cfg.model.gamma_a,
            "gamma_b": cfg.model.gamma_b,
        },
        "problem": {"beta": cfg.beta, "c0": cfg.c0, "alpha": cfg.alpha},
        "solver": solver,
        "output": {
            "directory": cfg.output_dir,
            "trajectory": cfg.write_trajectory,
            "convergence": cfg.write_convergence,
            "multipliers": cfg.write_multipliers,
        },
        "seed": cfg.seed,
    }
    return json.dumps(doc, indent=2) + "\n"


def _require_number(value, field_name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field_name)
    return float(value)


def _check_keys(section, allowed, prefix):
    for key in section:
        if key not in allowed:
            raise ConfigError("unknown key", field=f"{prefix}{key}")


def parse_config(source):
    """Parse a run configuration from a file path or raw JSON text.

    Missing sections fall back to the documented defaults; unknown keys and
    out-of-range values raise :class:`~lindbladpmp.errors.ConfigError`
    naming the offending field.
    """
    if isinstance(source, Path) or (
            isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", field=str(source))
    else:
        text = source
    try:
        doc = json.loads(text or "{}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, "
                          f"column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError("top-level value must be an object")
    _check_keys(doc, _TOP_KEYS, "")

    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported version {version!r}",
                          field="schema_version")

    model_doc = doc.get("model", {})
    _check_keys(model_doc, _MODEL_KEYS, "model.")
    model_kwargs = {k: _require_number(v, f"model.{k}")
                    for k, v in model_doc.items()}
    for rate in ("gamma_a", "gamma_b"):
        if rate in model_kwargs and model_kwargs[rate] < 0:
            raise ConfigError("must be non-negative", field=f"model.{rate}")
    model = LambdaAtomModel(**model_kwargs)

    problem_doc = doc.get("problem", {})
    _check_keys(problem_doc, _PROBLEM_KEYS, "problem.")
    beta = _require_number(problem_doc.get("beta", math.pi / 2), "problem.beta")
    c0 = _require_number(problem_doc.get("c0", 1.0), "problem.c0")
    alpha = _require_number(problem_doc.get("alpha", 0.5), "problem.alpha")
    if not c0 > 0:
        raise ConfigError("must be positive", field="problem.c0")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("must lie in (0, 1)", field="problem.alpha")

    solver_doc = dict(doc.get("solver", {}))
    _check_keys(solver_doc, _SOLVER_KEYS, "solver.")
    for tup in ("u_bounds", "omega_range"):
        if tup in solver_doc:
            val = solver_doc[tup]
            if (not isinstance(val, (list, tuple)) or len(val) != 2):
                raise ConfigError("expected a pair [lo, hi]",
                                  field=f"solver.{tup}")
            solver_doc[tup] = (float(val[0]), float(val[1]))
    try:
        solver = SolverConfig(**solver_doc)
        solver.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1],
                          field=f"solver.{exc.field}" if exc.field else None)
    except TypeError as exc:
        raise ConfigError(str(exc), field="solver")

    output_doc = doc.get("output", {})
    _check_keys(output_doc, _OUTPUT_KEYS, "output.")

    seed = doc.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError("must be an integer or null", field="seed")

    return RunConfig(
        model=model, beta=beta, c0=c0, alpha=alpha, solver=solver,
        output_dir=str(output_doc.get("directory", "out")),
        write_trajectory=bool(output_doc.get("trajectory", True)),
        write_convergence=bool(output_doc.get("convergence", True)),
        write_multipliers=bool(output_doc.get("multipliers", True)),
        seed=seed,
    )


def _fmt(x):
    """12 significant digits, fixed table format."""
    return f"{x:.11e}"


def _atomic_write(path, writer):
    """Write via a sibling temp file and rename, so failures leave nothing."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_LEVELS = ("e", "a", "b")


def _write_trajectory(path, trajectory, schedule, spec, n_steps):
    header = ["t", "pop_e", "pop_a", "pop_b"]
    for i in _LEVELS:
        for j in _LEVELS:
            header += [f"rho_{i}{j}_re", f"rho_{i}{j}_im"]
    header += ["coherence_sq", "u"]

    def writer(handle):
        out = csv.writer(handle)
        out.writerow(header)
        for m, rho in enumerate(trajectory):
            # The control column holds the amplitude active on [t_m, t_{m+1});
            # the final row repeats the last subinterval's value.
            u = schedule.u[min(m, n_steps - 1)]
            row = [_fmt(m / n_steps)]
            row += [_fmt(rho[k, k].real) for k in range(3)]
            for i in range(3):
                for j in range(3):
                    row += [_fmt(rho[i, j].real), _fmt(rho[i, j].imag)]
            row += [_fmt(coherence_squared(rho, spec)), _fmt(u)]
            out.writerow(row)

    _atomic_write(path, writer)


def _write_convergence(path, report):
    def writer(handle):
        out = csv.writer(handle)
        out.writerow(["iteration", "fidelity"])
        for it, fid in enumerate(report.fidelity_history):
            out.writerow([it, _fmt(fid)])

    _atomic_write(path, writer)


def _write_multipliers(path, track, n_steps):
    def writer(handle):
        out = csv.writer(handle)
        out.writerow(["m", "t", "mu1", "mu2", "mu_bar",
                      "upper_active", "lower_active"])
        for m in range(n_steps + 1):
            out.writerow([
                m, _fmt(m / n_steps), _fmt(track.mu1[m]), _fmt(track.mu2[m]),
                _fmt(track.mu_bar[m]), int(track.upper_active[m]),
                int(track.lower_active[m]),
            ])

    _atomic_write(path, writer)


def _write_summary(path, payload):
    def writer(handle):
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")

    _atomic_write(path, writer)


def _summary_payload(config, report):
    summary = {
        "schema_version": SCHEMA_VERSION,
        "final_fidelity": report.final_fidelity,
        "final_fidelity_table": _fmt(report.final_fidelity),
        "initial_fidelity": report.initial_fidelity,
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "final_omega": report.final_schedule.omega,
        "final_phi": report.final_schedule.phi,
        "flags": {
            "gradient_methods": list(report.flags.gradient_methods),
            "gradient_fallback_used": report.flags.gradient_fallback_used,
            "adjoint_form_gap": report.flags.adjoint_form_gap,
            "max_hamiltonian_imag": report.flags.max_hamiltonian_imag,
        },
    }
    if report.constraint_summary is not None:
        cs = report.constraint_summary
        summary["constraints"] = {
            "max_coherence_sq": cs.max_cbar,
            "min_coherence_sq": cs.min_cbar,
            "upper_violations": cs.upper_violations,
            "lower_violations": cs.lower_violations,
            "max_upper_violation": cs.max_upper_violation,
            "max_lower_violation": cs.max_lower_violation,
            "grace_start": cs.grace_start,
        }
    return summary


def _run_solve(config, out_dir, quiet):
    problem = config.problem()
    report = solve(problem, config.solver)
    n_steps = config.solver.n_steps
    if config.write_trajectory:
        _write_trajectory(out_dir / "trajectory.csv", report.trajectory,
                          report.final_schedule, problem.coherence, n_steps)
    if config.write_convergence:
        _write_convergence(out_dir / "convergence.csv", report)
    if config.write_multipliers and report.multipliers is not None:
        _write_multipliers(out_dir / "multipliers.csv", report.multipliers,
                           n_steps)
    _write_summary(out_dir / "summary.json", _summary_payload(config, report))
    if not quiet:
        print(f"fidelity {report.initial_fidelity:.6f} -> "
              f"{report.final_fidelity:.6f} in {report.iterations} "
              f"iterations ({report.stop_reason})")
    return EXIT_OK


def _run_propagate(config, out_dir, quiet):
    problem = config.problem()
    solver = config.solver
    schedule = solver.initial_schedule()
    trajectory = propagate_forward(problem.rho0, schedule, problem.model,
                                   problem.channels, solver.n_steps,
                                   mode=solver.propagator_mode)
    final_fid = fidelity(trajectory[-1], problem.target.sigma)
    _write_trajectory(out_dir / "trajectory.csv", trajectory, schedule,
                      problem.coherence, solver.n_steps)
    _write_summary(out_dir / "summary.json", {
        "schema_version": SCHEMA_VERSION,
        "mode": "propagate",
        "final_fidelity": final_fid,
        "final_population_e": float(trajectory[-1][0, 0].real),
    })
    if not quiet:
        print(f"propagated {solver.n_steps} steps, "
              f"final excited population {trajectory[-1][0, 0].real:.6f}")
    return EXIT_OK


def _run_check(config, out_dir, quiet):
    """Invariant battery on the configured model; exits nonzero on failure."""
    problem = config.problem()
    solver = config.solver
    model, channels, spec = problem.model, problem.channels, problem.coherence
    rng = np.random.default_rng(config.seed if config.seed is not None else 0)
    checks = []

    def record(name, error, bound):
        checks.append({"name": name, "max_error": float(error),
                       "bound": bound, "passed": bool(error <= bound)})

    # Vectorized generator reproduces the matrix-form right-hand side.
    err = 0.0
    for _ in range(20):
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho = a @ a.conj().T
        rho /= rho.trace()
        u, omega, phi, t = rng.uniform(-1, 1, size=4)
        h = model.hamiltonian(u, omega, phi, t)
        lhs = liouvillian(h, channels) @ vectorize(rho)
        rhs = vectorize(master_rhs(rho, h, channels))
        err = max(err, float(np.abs(lhs - rhs).max()))
    record("liouvillian_identity", err, 1e-12)

    # Trajectory invariants under the initial schedule.
    schedule = solver.initial_schedule()
    trajectory = propagate_forward(problem.rho0, schedule, model, channels,
                                   solver.n_steps, mode=solver.propagator_mode)
    herm = max(float(np.linalg.norm(r - r.conj().T)) for r in trajectory)
    tr = max(float(abs(r.trace() - 1.0)) for r in trajectory)
    neg = max(float(-np.linalg.eigvalsh((r + r.conj().T) / 2)[0])
              for r in trajectory)
    record("trajectory_hermiticity", herm, 1e-10)
    record("trajectory_trace", tr, 1e-10)
    record("trajectory_positivity", max(neg, 0.0), 1e-9)

    # Fidelity sanity.
    record("self_fidelity", abs(fidelity(trajectory[-1], trajectory[-1]) - 1.0),
           1e-9)
    sig = problem.target.sigma
    record("pure_target_reduction",
           abs(fidelity(trajectory[-1], sig)
               - float(np.trace(trajectory[-1] @ sig).real)), 1e-9)

    # Adjoint generator defining identity.
    h0 = model.drift
    gen = adjoint_generator(h0, channels)
    err = 0.0
    from .costate import g_operator
    for _ in range(10):
        x = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        lhs = gen.derived_form @ vectorize(x)
        rhs = vectorize(g_operator(x, h0, channels))
        err = max(err, float(np.abs(lhs - rhs).max()))
    record("adjoint_defining_identity", err, 1e-12)

    # Terminal gradient against finite differences.
    rho1 = trajectory[-1]
    grad = terminal_costate(rho1, sig).matrix
    err = 0.0
    for b in hermitian_basis(3):
        step = 1e-6
        fd = (fidelity(rho1 + step * b, sig, psd_tol=1e-5)
              - fidelity(rho1 - step * b, sig, psd_tol=1e-5)) / (2 * step)
        err = max(err, abs(fd - float(np.trace(grad @ b).real)))
    record("terminal_gradient_fd", err, 1e-5)

    passed = all(c["passed"] for c in checks)
    _write_summary(out_dir / "check_report.json", {
        "schema_version": SCHEMA_VERSION,
        "mode": "check",
        "passed": passed,
        "checks": checks,
    })
    if not quiet:
        for c in checks:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"{status} {c['name']} (max error {c['max_error']:.3e}, "
                  f"bound {c['bound']:.1e})")
    return EXIT_OK if passed else EXIT_SOLVER


def run(config, mode="solve", out_dir=None, quiet=False):
    """Execute one mode of the runner; returns a process exit code."""
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if not out_dir.is_dir():
            raise OSError(f"not a directory: {out_dir}")
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if mode == "solve":
            return _run_solve(config, out_dir, quiet)
        if mode == "propagate":
            return _run_propagate(config, out_dir, quiet)
        if mode == "check":
            return _run_check(config, out_dir, quiet)
        raise ConfigError(f"unknown mode {mode!r}", field="mode")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LindbladPMPError, FloatingPointError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lindbladpmp",
        description="Coherence-constrained state-transfer optimization for "
                    "a driven, dissipative Lambda atom.",
    )
    parser.add_argument("--config", default=None,
                        help="path to a JSON run configuration "
                             "(defaults apply when omitted)")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides the config)")
    parser.add_argument("--mode", default="solve",
                        choices=["solve", "propagate", "check"])
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress output")
    parser.add_argument("--print-default-config", action="store_true",
                        help="write the default configuration to stdout and exit")
    args = parser.parse_args(argv)

    if args.print_default_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK

    try:
        config = (parse_config(args.config) if args.config is not None
                  else RunConfig())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config, mode=args.mode, out_dir=args.out, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
