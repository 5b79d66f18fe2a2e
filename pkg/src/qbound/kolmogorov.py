"""Forward Kolmogorov system dp/dt = A(t) p on a truncated state space."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .bounds import BoundCurves, ClosedFormRates, RateFunctions, TruncatedRates
from .dseq import DSequence, norm_1D, norm_1E
from .generator import TransitionStructure, transition_structure
from .intensity import ConfigError, DomainError, ModelSpec, local_bound_L
from .bounds import UnsupportedModeError

NEG_TOL = 1e-10
MASS_TOL = 1e-9


class SolverError(RuntimeError):
    """The integrator failed or the solution left the probability simplex."""


class TruncationError(RuntimeError):
    """Doubling N did not reach the requested truncation tolerance below the cap."""


@dataclass(frozen=True)
class Trajectory:
    grid: np.ndarray
    states: np.ndarray  # shape (len(grid), N + 1)
    N: int
    solver_stats: dict[str, Any] = field(default_factory=dict)

    @property
    def p0(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def mean(self) -> np.ndarray:
        return self.states @ np.arange(self.N + 1)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def characteristics(p: np.ndarray) -> tuple[float, float]:
    """(p_0, sum_k k p_k) of a probability vector."""
    p = np.asarray(p, dtype=float)
    return float(p[0]), float(np.arange(p.size) @ p)


def unit_vector(N: int, k: int = 0) -> np.ndarray:
    if not 0 <= k <= N:
        raise DomainError(f"state {k} outside 0..{N}")
    p = np.zeros(N + 1)
    p[k] = 1.0
    return p


def _check_simplex(states: np.ndarray, grid: np.ndarray) -> None:
    mins = states.min(axis=1)
    drift = np.abs(states.sum(axis=1) - 1.0)
    if mins.min() < -NEG_TOL:
        k = int(np.argmin(mins))
        raise SolverError(f"probability entry {mins[k]:.3e} < -{NEG_TOL:g} at t = {grid[k]:.6g}")
    if drift.max() > MASS_TOL:
        k = int(np.argmax(drift))
        raise SolverError(f"total mass drifted by {drift[k]:.3e} at t = {grid[k]:.6g}")


def solve(
    model: ModelSpec,
    N: int,
    p0: np.ndarray | None = None,
    span: Sequence[float] = (0.0, 1.0),
    tol: float = 1e-10,
    t_eval: np.ndarray | None = None,
    overflow: str = "drop",
    method: str = "DOP853",
    structure: TransitionStructure | None = None,
) -> Trajectory:
    """Integrate the truncated forward equations with an explicit adaptive Runge-Kutta pair.

    The step is capped at 0.5 / L, with L the largest total outflow rate,
    which keeps the explicit scheme inside its stability region.
    """
    t0, t1 = float(span[0]), float(span[1])
    if not (0 <= t0 <= t1):
        raise DomainError(f"span must satisfy 0 <= t0 <= t1, got {span}")
    if not tol > 0:
        raise ConfigError("solver tolerance must be positive")
    struct = structure or transition_structure(model, N, overflow)
    p0 = unit_vector(N) if p0 is None else np.asarray(p0, dtype=float)
    if p0.shape != (N + 1,):
        raise DomainError(f"initial distribution must have length N + 1 = {N + 1}")
    _check_simplex(p0[None, :], np.array([t0]))

    L = local_bound_L(model, N)
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.size and (t_eval.min() < t0 - 1e-12 or t_eval.max() > t1 + 1e-12):
            raise DomainError("t_eval must lie inside the span")
        t_eval = np.clip(t_eval, t0, t1)

    if t1 == t0 or L == 0.0:
        grid = np.array([t0]) if t_eval is None else t_eval
        states = np.tile(p0, (grid.size, 1))
        return Trajectory(grid, states, N, {"L": L, "nfev": 0, "method": method})

    lam_A, mu_A = struct.A_lam, struct.A_mu
    lam_f, mu_f = model.lambda_base, model.mu_base

    def rhs(t, p):
        return float(lam_f(t)) * (lam_A @ p) + float(mu_f(t)) * (mu_A @ p)

    max_step = 0.5 / L
    sol = solve_ivp(
        rhs,
        (t0, t1),
        p0,
        method=method,
        t_eval=t_eval,
        rtol=max(tol, 1e-13),
        atol=tol,
        max_step=max_step,
    )
    if sol.status != 0:
        raise SolverError(
            f"integrator stopped: {sol.message} (local outflow bound L = {L:.6g}, step ceiling {max_step:.3g})"
        )
    grid = np.asarray(sol.t)
    states = np.asarray(sol.y).T
    _check_simplex(states, grid)
    stats = {"L": L, "max_step": max_step, "nfev": int(sol.nfev), "method": method, "tol": tol}
    return Trajectory(grid, states, N, stats)


# ---------------------------------------------------------------------------
# Limiting regime
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitingCharacteristics:
    window: tuple[float, float]
    times: np.ndarray
    p0_curve: np.ndarray
    mean_curve: np.ndarray
    truncation_error_estimate: float
    N_used: int
    N_compared: int
    period_drift: float
    t_star: float
    within_tolerance: bool
    history: list[dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "window": list(self.window),
            "N_used": self.N_used,
            "N_compared": self.N_compared,
            "t_star": self.t_star,
            "truncation_error_estimate": self.truncation_error_estimate,
            "period_drift": self.period_drift,
            "within_tolerance": self.within_tolerance,
            "history": self.history,
        }


class _WindowRun:
    """One truncation level advanced period by period from X(0) = 0."""

    def __init__(self, model, N, t_star, samples, solver_tol, overflow):
        self.model, self.N, self.samples = model, N, samples
        self.solver_tol, self.overflow = solver_tol, overflow
        self.struct = transition_structure(model, N, overflow)
        tw = np.linspace(t_star - 1.0, t_star + 1.0, 2 * samples - 1)
        traj = solve(model, N, None, (0.0, t_star + 1.0), solver_tol, tw, overflow, structure=self.struct)
        self.prev = (traj.p0[:samples], traj.mean[:samples])
        self.last = (traj.p0[samples - 1 :], traj.mean[samples - 1 :])
        self.state = traj.final
        self.t_end = t_star + 1.0

    def advance(self) -> None:
        tw = np.linspace(self.t_end, self.t_end + 1.0, self.samples)
        traj = solve(
            self.model, self.N, self.state, (self.t_end, self.t_end + 1.0),
            self.solver_tol, tw, self.overflow, structure=self.struct,
        )
        self.prev = self.last
        self.last = (traj.p0, traj.mean)
        self.state = traj.final
        self.t_end += 1.0


def _sup_gap(x, y) -> float:
    return float(max(np.abs(x[0] - y[0]).max(), np.abs(x[1] - y[1]).max()))


def limiting_regime(
    model: ModelSpec,
    tol_truncation: float = 1e-4,
    t_star: float = 5.0,
    solver_tol: float = 1e-10,
    N_start: int = 155,
    N_cap: int = 4096,
    samples: int = 201,
    overflow: str = "drop",
    auto_t_star: bool = True,
    t_star_cap: float = 25.0,
) -> LimitingCharacteristics:
    """p_0(t) and the mean on [t*, t*+1] from X(0) = 0, with N doubled until stable.

    Truncation error is the sup-norm change of both curves when N doubles.
    With ``auto_t_star`` the window moves one period later while the curves
    on consecutive periods differ by more than 10 * tol_truncation.
    """
    if not model.periodic:
        raise UnsupportedModeError("the limiting regime needs 1-periodic intensities")
    if t_star < 1:
        raise ConfigError("t_star must be >= 1")
    history: list[dict[str, float]] = []
    N = int(N_start)
    while True:
        if 2 * N > N_cap:
            raise TruncationError(f"truncation error still above {tol_truncation:g} at N = {N} (cap {N_cap})")
        small = _WindowRun(model, N, float(t_star), samples, solver_tol, overflow)
        big = _WindowRun(model, 2 * N, float(t_star), samples, solver_tol, overflow)
        while True:
            ts = big.t_end - 1.0
            err = _sup_gap(small.last, big.last)
            drift = _sup_gap(big.last, big.prev)
            history.append({"N": N, "t_star": ts, "truncation_error": err, "period_drift": drift})
            if not auto_t_star or drift <= 10 * tol_truncation or ts + 1.0 > t_star_cap:
                break
            small.advance()
            big.advance()
        if err < tol_truncation:
            return LimitingCharacteristics(
                (ts, ts + 1.0),
                np.linspace(ts, ts + 1.0, samples),
                big.last[0],
                big.last[1],
                err,
                2 * N,
                N,
                drift,
                ts,
                drift <= 10 * tol_truncation,
                history,
            )
        N *= 2


# ---------------------------------------------------------------------------
# Bound-versus-measurement experiment
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceTable:
    columns: list[str]
    rows: np.ndarray
    passed: bool
    failures: list[str]
    rates_source: str

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "columns": self.columns,
            "rows": self.rows.tolist(),
            "passed": self.passed,
            "failures": self.failures,
            "rates_source": self.rates_source,
        }


def convergence_experiment(
    model: ModelSpec,
    d: DSequence,
    N: int,
    p0_a: np.ndarray,
    p0_b: np.ndarray,
    span: Sequence[float] = (0.0, 1.0),
    n_samples: int = 50,
    overflow: str = "drop",
    rates: str | RateFunctions = "truncated",
    solver_tol: float = 1e-13,
    slack: float = 1e-8,
) -> ConvergenceTable:
    """Measured distances between two solutions against the weak-ergodicity curves.

    ``rates="truncated"`` derives alpha, beta, chi from the truncated matrices
    (valid for the system actually solved); ``"closed-form"`` uses the
    untruncated closed forms.
    """
    t0, t1 = float(span[0]), float(span[1])
    times = np.linspace(t0, t1, n_samples)
    struct = transition_structure(model, N, overflow)
    if isinstance(rates, RateFunctions):
        rf = rates
    elif rates == "truncated":
        rf = TruncatedRates(model, d, N, overflow)
    elif rates == "closed-form":
        rf = ClosedFormRates(model, d)
    else:
        raise ConfigError(f"unknown rates source {rates!r}")
    positivity_ok = bool(rf.positivity()) if isinstance(rf, TruncatedRates) else True

    ta = solve(model, N, p0_a, (t0, t1), solver_tol, times, overflow, structure=struct)
    tb = solve(model, N, p0_b, (t0, t1), solver_tol, times, overflow, structure=struct)
    diff = ta.states - tb.states
    z = diff[:, 1:]
    tv = np.abs(diff).sum(axis=1)
    d1D = norm_1D(z, d)
    d1E = norm_1E(z)

    curves = BoundCurves(rf, d, p0_a, p0_b, s=t0, positivity_ok=positivity_ok)
    e_alpha = np.exp(-rf.cumulative("alpha", times, s=t0))
    e_chi = np.exp(-rf.cumulative("chi", times, s=t0))
    init = curves.init_1D
    cols = {
        "t": times,
        "tv": tv,
        "norm_1D": d1D,
        "norm_1E": d1E,
        "upper_1D": e_alpha * init,
        "lower_1D": e_chi * init,
        "upper_tv": 4.0 * e_alpha * init,
    }
    if curves.norms is not None:
        cols["upper_1E"] = 2.0 / curves.norms.W * e_alpha * init
    use_beta = curves.ordered and positivity_ok
    if use_beta:
        cols["lower_beta"] = np.exp(-rf.cumulative("beta", times, s=t0)) * init

    failures: list[str] = []

    def check(name: str, ok: np.ndarray) -> None:
        bad = np.nonzero(~ok)[0]
        if bad.size:
            k = int(bad[0])
            failures.append(f"{name} violated at t = {times[k]:.6g}")

    check("tv <= upper_tv", tv <= cols["upper_tv"] + slack)
    check("norm_1D <= upper_1D", d1D <= cols["upper_1D"] + slack)
    check("norm_1D >= lower_1D", d1D >= cols["lower_1D"] - slack)
    if "upper_1E" in cols:
        check("norm_1E <= upper_1E", d1E <= cols["upper_1E"] + slack)
    if use_beta:
        check("norm_1D >= lower_beta", d1D >= cols["lower_beta"] - slack)

    names = list(cols)
    rows = np.column_stack([cols[k] for k in names])
    return ConvergenceTable(names, rows, not failures, failures, rf.source)
