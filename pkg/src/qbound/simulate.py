"""Monte-Carlo paths of the truncated chain by thinning.

Between jumps the state is fixed, so a candidate stream with the state's own
dominating rate ``L_dom(x) = margin * sup_t (total outflow of x)`` gives exact
paths: at a candidate time tau the move to y is accepted with probability
``q_xy(tau) / L_dom(x)``, otherwise nothing happens.

All paths are advanced together as numpy arrays.  Paths are grouped in fixed
chunks, each with its own Philox stream spawned from the run seed, so results
do not depend on how chunks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

from .generator import transition_structure
from .intensity import ConfigError, DomainError, ModelSpec, outflow_weights
from .kolmogorov import Trajectory

CHUNK = 2048


class DominatingRateError(RuntimeError):
    """A transition rate exceeded the dominating candidate rate."""


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    seed: int
    sample_grid: tuple[float, ...]
    N: int
    x0: int = 0
    overflow: str = "drop"
    margin: float = 1.05
    record_transitions: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        grid = tuple(float(t) for t in self.sample_grid)
        object.__setattr__(self, "sample_grid", grid)
        if int(self.n_paths) < 1:
            raise ConfigError("n_paths must be >= 1")
        if not grid or any(t < 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("sample_grid must be non-empty, non-negative and strictly increasing")
        if not 0 <= self.x0 <= self.N:
            raise DomainError(f"x0 = {self.x0} outside 0..{self.N}")
        if self.margin < 1.0:
            raise ConfigError("margin must be >= 1")

    @property
    def horizon(self) -> float:
        return self.sample_grid[-1]


@dataclass
class EmpiricalDistribution:
    times: np.ndarray
    counts: np.ndarray  # (len(times), N + 1) integer histogram
    n_paths: int
    transitions: np.ndarray | None = None
    stats: dict[str, Any] = field(default_factory=dict)

    @property
    def p_hat(self) -> np.ndarray:
        return self.counts / self.n_paths

    @property
    def se(self) -> np.ndarray:
        p = self.p_hat
        return np.sqrt(p * (1 - p) / self.n_paths)

    @property
    def mean(self) -> np.ndarray:
        return self.p_hat @ np.arange(self.counts.shape[1])

    @property
    def mean_se(self) -> np.ndarray:
        k = np.arange(self.counts.shape[1])
        var = self.p_hat @ (k * k) - self.mean**2
        return np.sqrt(np.maximum(var, 0.0) / max(self.n_paths - 1, 1))

    def rows(self):
        """(t, state, count, p_hat, se) for every state seen at each time."""
        p, se = self.p_hat, self.se
        for i, t in enumerate(self.times):
            for k in np.nonzero(self.counts[i])[0]:
                yield float(t), int(k), int(self.counts[i, k]), float(p[i, k]), float(se[i, k])


class _Tables:
    """Per-state arrival and service targets with cumulative weights."""

    def __init__(self, model: ModelSpec, N: int, overflow: str):
        struct = transition_structure(model, N, overflow)
        self.lam = self._prep(struct.lam_offdiag)
        self.mu = self._prep(struct.mu_offdiag)
        lam_out, mu_out = outflow_weights(model, N)
        self.lam_tot = self.lam[3]
        self.mu_tot = self.mu[3]
        # per-state dominating rate from the untruncated outflow and exact sups
        self.dom = lam_out * model.lambda_base.sup() + mu_out * model.mu_base.sup()

    @staticmethod
    def _prep(M):
        M = M.tocsc()
        M.sort_indices()
        cum = np.cumsum(M.data)
        start = np.concatenate([[0.0], cum])[M.indptr[:-1]]
        total = np.concatenate([[0.0], cum])[M.indptr[1:]] - start
        return M.indptr, M.indices, cum, total, start

    @staticmethod
    def pick(table, x, v):
        indptr, indices, cum, _, start = table
        idx = np.searchsorted(cum, start[x] + v, side="right")
        idx = np.clip(idx, indptr[x], indptr[x + 1] - 1)
        return indices[idx]


def _run_chunk(model: ModelSpec, cfg: SimConfig, n: int, seed_seq: np.random.SeedSequence):
    tables = _Tables(model, cfg.N, cfg.overflow)
    rng = np.random.Generator(np.random.Philox(seed_seq))
    grid = np.asarray(cfg.sample_grid)
    G = grid.size
    counts = np.zeros((G, cfg.N + 1), dtype=np.int64)
    trans = np.zeros((cfg.N + 1, cfg.N + 1), dtype=np.int64) if cfg.record_transitions else None

    x = np.full(n, cfg.x0, dtype=np.int64)
    t = np.zeros(n)
    ptr = np.zeros(n, dtype=np.int64)
    dom = cfg.margin * tables.dom
    candidates = accepted = 0
    max_ratio = 0.0

    active = np.arange(n)
    while active.size:
        xa = x[active]
        rate = dom[xa]
        frozen = rate <= 0
        tau = t[active] + np.where(frozen, np.inf, rng.exponential(1.0, active.size) / np.where(frozen, 1.0, rate))
        # record the current state at every grid time passed before tau
        while True:
            pa = ptr[active]
            hit = (pa < G) & (grid[np.minimum(pa, G - 1)] < tau)
            if not hit.any():
                break
            h = active[hit]
            np.add.at(counts, (ptr[h], x[h]), 1)
            ptr[h] += 1
        done = tau >= grid[-1]
        live = ~done
        act = active[live]
        if act.size:
            tau_l = tau[live]
            xl = x[act]
            lam_t = np.asarray(model.lambda_base(tau_l), dtype=float)
            mu_t = np.asarray(model.mu_base(tau_l), dtype=float)
            a_rate = lam_t * tables.lam_tot[xl]
            s_rate = mu_t * tables.mu_tot[xl]
            total = a_rate + s_rate
            ratio = total / dom[xl]
            max_ratio = max(max_ratio, float(ratio.max()))
            if max_ratio > 1.0:
                k = int(np.argmax(ratio))
                raise DominatingRateError(
                    f"outflow {total[k]:.6g} from state {xl[k]} at t = {tau_l[k]:.6g} exceeds "
                    f"the dominating rate {dom[xl[k]]:.6g}"
                )
            u = rng.random(act.size) * dom[xl]
            arr = u < a_rate
            srv = ~arr & (u < total)
            new = xl.copy()
            if arr.any():
                new[arr] = _Tables.pick(tables.lam, xl[arr], u[arr] / lam_t[arr])
            if srv.any():
                new[srv] = _Tables.pick(tables.mu, xl[srv], (u[srv] - a_rate[srv]) / mu_t[srv])
            moved = arr | srv
            if trans is not None and moved.any():
                np.add.at(trans, (xl[moved], new[moved]), 1)
            x[act] = new
            t[act] = tau_l
            candidates += act.size
            accepted += int(moved.sum())
        active = act
    return counts, trans, candidates, accepted, max_ratio


def simulate(model: ModelSpec, cfg: SimConfig) -> EmpiricalDistribution:
    """Empirical state distribution at ``cfg.sample_grid`` over ``cfg.n_paths`` paths."""
    sizes = [CHUNK] * (cfg.n_paths // CHUNK)
    if cfg.n_paths % CHUNK:
        sizes.append(cfg.n_paths % CHUNK)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = list(zip(sizes, seeds))
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_chunk, [model] * len(jobs), [cfg] * len(jobs), sizes, seeds))
    else:
        results = [_run_chunk(model, cfg, n, s) for n, s in jobs]
    # merge in chunk order
    counts = sum(r[0] for r in results)
    trans = sum(r[1] for r in results) if cfg.record_transitions else None
    info = {
        "candidates": int(sum(r[2] for r in results)),
        "accepted": int(sum(r[3] for r in results)),
        "max_acceptance_ratio": float(max(r[4] for r in results)),
        "chunks": len(jobs),
    }
    return EmpiricalDistribution(np.asarray(cfg.sample_grid), counts, cfg.n_paths, trans, info)


# ---------------------------------------------------------------------------
# Comparison with the ODE solution
# ---------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    times: np.ndarray
    tv: np.ndarray
    z_p0: np.ndarray
    z_mean: np.ndarray
    threshold: float
    passed: bool

    @property
    def max_abs_z(self) -> float:
        return float(max(np.abs(self.z_p0).max(), np.abs(self.z_mean).max()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "tv": self.tv.tolist(),
            "z_p0": self.z_p0.tolist(),
            "z_mean": self.z_mean.tolist(),
            "threshold": self.threshold,
            "passed": self.passed,
        }


def bonferroni_threshold(n_tests: int, level: float = 0.0027) -> float:
    """Two-sided normal critical value at ``level / n_tests`` (level 0.0027 is 3 sigma)."""
    return float(stats.norm.isf(level / (2 * max(n_tests, 1))))


def compare_to_ode(
    emp: EmpiricalDistribution, traj: Trajectory, threshold: float | None = None
) -> ComparisonReport:
    """z-scores of p_0 and the mean against the ODE values, using the ODE variances.

    Pass iff every |z| is below ``threshold`` (default: Bonferroni-adjusted
    3 sigma over all p_0 and mean tests).
    """
    if emp.times.shape != traj.grid.shape or not np.allclose(emp.times, traj.grid, atol=1e-12):
        raise ValueError("empirical and ODE grids differ")
    if emp.counts.shape[1] != traj.N + 1:
        raise ValueError("empirical and ODE truncations differ")
    n = emp.n_paths
    p = np.clip(traj.states, 0.0, 1.0)
    k = np.arange(traj.N + 1)
    p0 = p[:, 0]
    m = p @ k
    var_m = np.maximum(p @ (k * k) - m * m, 0.0)
    floor = 1.0 / n**2  # keeps the score finite when the ODE puts all mass on one state
    z_p0 = (emp.p_hat[:, 0] - p0) / np.sqrt(np.maximum(p0 * (1 - p0), floor) / n)
    z_mean = (emp.mean - m) / np.sqrt(np.maximum(var_m, floor) / n)
    tv = 0.5 * np.abs(emp.p_hat - p).sum(axis=1)
    thr = bonferroni_threshold(2 * emp.times.size) if threshold is None else float(threshold)
    passed = bool(np.all(np.abs(z_p0) < thr) and np.all(np.abs(z_mean) < thr))
    return ComparisonReport(emp.times.copy(), tv, z_p0, z_mean, thr, passed)


def empirical_batch_sizes(emp: EmpiricalDistribution) -> np.ndarray:
    """Counts of upward jump sizes 1..N from the recorded transition matrix."""
    if emp.transitions is None:
        raise ValueError("run with record_transitions=True")
    T = emp.transitions
    N = T.shape[0] - 1
    out = np.zeros(N + 1, dtype=np.int64)
    for k in range(1, N + 1):
        out[k] = np.trace(T, offset=k)
    return out
