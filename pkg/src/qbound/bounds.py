"""Convergence-rate bounds from the logarithmic norm of D B(t) D^-1.

The closed forms below give, for each class, the negated column sums
``alpha_i(t)`` and the absolute column sums ``chi_i(t)`` of the transformed
reduced matrix of the *untruncated* chain.  They are linear in the two base
intensities, so

    alpha_i(t) = lambda(t) * P_i + mu(t) * Q_i

and the infimum over i reduces to a handful of distinct coefficient pairs.
``TruncatedRates`` computes the same quantities from explicit truncated
matrices; the two routes are kept independent on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from .dseq import DSequence, NormConstants, compute_W, norm_1D, D_apply
from .generator import check_positivity, transition_structure, PositivityVerdict
from .intensity import ConfigError, DomainError, ModelSpec


class UnsupportedModeError(ValueError):
    """The requested quantity needs periodic or time-constant intensities."""


class PreconditionError(ValueError):
    """A bound was requested for initial data that do not meet its hypothesis."""


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _closed_forms(
    class_tag: str, S: int, lam: np.ndarray, mu: np.ndarray, d: DSequence, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """alpha_i and chi_i for i = 1..n given rate arrays indexed from 0.

    ``lam``/``mu`` hold lambda_k / mu_k: per state for state-dependent parts,
    per batch size for batch parts.  Both need at least n + 1 entries.
    """
    i = np.arange(1, n + 1)
    dv = d.values(n + S + 1)
    d_i = dv[:n]
    d_up = dv[1 : n + 1] / d_i
    d_down = np.concatenate([[0.0], dv[: n - 1]]) / d_i
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)

    if class_tag in ("II", "IV"):
        k = np.arange(1, S + 1)
        lam_k = lam[1 : S + 1]
        # d_{k+i}/d_i for every (i, k)
        arr = (dv[(i[:, None] + k[None, :]) - 1] / d_i[:, None]) @ lam_k
        lam_total = lam_k.sum()
    if class_tag in ("III", "IV"):
        served = np.cumsum(mu[1 : n + 1])
        # sum_{k=1}^{i-1} (mu_{i-k} - mu_i) d_k / d_i
        kk = np.arange(1, n + 1)
        lower = kk[None, :] < i[:, None]
        diff_idx = np.where(lower, i[:, None] - kk[None, :], 0)
        trans = np.where(lower, (mu[diff_idx] - mu[i][:, None]) * dv[None, :n], 0.0).sum(axis=1) / d_i

    if class_tag == "I":
        down = mu[i] - d_down * mu[i - 1]
        down_abs = mu[i] + d_down * mu[i - 1]
        up = lam[i - 1] - d_up * lam[i]
        up_abs = lam[i - 1] + d_up * lam[i]
        return down + up, down_abs + up_abs
    if class_tag == "II":
        down = mu[i] - d_down * mu[i - 1]
        down_abs = mu[i] + d_down * mu[i - 1]
        return down + lam_total - arr, down_abs + lam_total + arr
    if class_tag == "III":
        up = lam[i - 1] - d_up * lam[i]
        up_abs = lam[i - 1] + d_up * lam[i]
        return served - trans + up, served + trans + up_abs
    return served + lam_total - trans - arr, served + lam_total + trans + arr


def _rate_arrays(model: ModelSpec, n: int, lam_scale: float, mu_scale: float):
    size = max(n, model.S) + 1
    return lam_scale * model.lambda_weights(size), mu_scale * model.mu_weights(size)


def _check_i(i: int) -> None:
    if i < 1:
        raise DomainError(f"index i must be >= 1, got {i}")


def alpha_i(model: ModelSpec, d: DSequence, i: int, t: float) -> float:
    """Negated i-th column sum of D B(t) D^-1 for the untruncated chain."""
    _check_i(i)
    lam, mu = _rate_arrays(model, i + 1, float(model.lambda_base(t)), float(model.mu_base(t)))
    return float(_closed_forms(model.class_tag, model.S, lam, mu, d, i)[0][i - 1])


def chi_i(model: ModelSpec, d: DSequence, i: int, t: float) -> float:
    """Absolute i-th column sum of D B(t) D^-1 (valid as such when positivity holds)."""
    _check_i(i)
    lam, mu = _rate_arrays(model, i + 1, float(model.lambda_base(t)), float(model.mu_base(t)))
    return float(_closed_forms(model.class_tag, model.S, lam, mu, d, i)[1][i - 1])


def default_horizon(model: ModelSpec, d: DSequence) -> int:
    """Index past which alpha_i, chi_i no longer depend on i, plus a safety margin."""
    return max(d.m, model.settles_at) + model.S + 50


def log_norm(M: np.ndarray) -> float:
    """Column-sum logarithmic norm: max_j (m_jj + sum_{i != j} |m_ij|)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    diag = np.diag(M)
    off = np.abs(M).sum(axis=0) - np.abs(diag)
    return float(np.max(diag + off))


# ---------------------------------------------------------------------------
# Rate functions alpha(t), beta(t), chi(t)
# ---------------------------------------------------------------------------


class RateFunctions:
    """alpha(t) = inf_i alpha_i(t), beta(t) = sup_i alpha_i(t), chi(t) = sup_i chi_i(t)."""

    source: str = ""
    J_max: int = 0

    def __init__(self, model: ModelSpec):
        self.model = model
        self._breaks = sorted(set(model.lambda_base.breakpoints()) | set(model.mu_base.breakpoints()))

    def alpha(self, t):
        raise NotImplementedError

    def beta(self, t):
        raise NotImplementedError

    def chi(self, t):
        raise NotImplementedError

    def _fn(self, which: str) -> Callable:
        return {"alpha": self.alpha, "beta": self.beta, "chi": self.chi}[which]

    def _points_between(self, s: float, t: float) -> list[float]:
        if not self._breaks:
            return []
        pts = []
        for base in range(math.floor(s), math.ceil(t) + 1):
            pts.extend(base + b for b in self._breaks if s < base + b < t)
        return pts

    def integral(self, which: str, s: float, t: float, tol: float = 1e-11) -> float:
        """Integral of alpha/beta/chi over [s, t] by adaptive quadrature."""
        return self._integral(which, s, t, tol)[0]

    def _integral(self, which: str, s: float, t: float, tol: float) -> tuple[float, float]:
        if t < s:
            raise ValueError("integration bounds must satisfy s <= t")
        fn = self._fn(which)
        cuts = [s] + self._points_between(s, t) + [t]
        # unit pieces keep quad's subdivision budget ample for periodic integrands
        edges = sorted(set(cuts) | {float(x) for x in range(math.ceil(s), math.floor(t) + 1) if s < x < t})
        total = err = 0.0
        for a, b in zip(edges, edges[1:]):
            val, e = integrate.quad(lambda u: float(fn(u)), a, b, epsabs=tol, epsrel=tol, limit=400)
            total += val
            err += e
        return total, err

    def cumulative(self, which: str, times: np.ndarray, s: float = 0.0, tol: float = 1e-11) -> np.ndarray:
        """``[int_s^{t_k}]`` for non-decreasing times >= s."""
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) < 0) or (times.size and times[0] < s):
            raise ValueError("times must be non-decreasing and >= s")
        out = np.empty(times.size)
        acc, prev = 0.0, s
        for k, tk in enumerate(times):
            if tk > prev:
                acc += self.integral(which, prev, float(tk), tol)
                prev = float(tk)
            out[k] = acc
        return out


class ClosedFormRates(RateFunctions):
    """Rate functions from the per-class closed forms over i = 1..J_max."""

    source = "closed-form"

    def __init__(self, model: ModelSpec, d: DSequence, J_max: int | None = None):
        super().__init__(model)
        self.d = d
        self.J_max = int(J_max or default_horizon(model, d))
        J = self.J_max
        lam_w, _ = _rate_arrays(model, J + 1, 1.0, 0.0)
        _, mu_w = _rate_arrays(model, J + 1, 0.0, 1.0)
        zeros = np.zeros_like(lam_w)
        a_lam, c_lam = _closed_forms(model.class_tag, model.S, lam_w, zeros, d, J)
        a_mu, c_mu = _closed_forms(model.class_tag, model.S, zeros, mu_w, d, J)
        self.alpha_coef = np.column_stack([a_lam, a_mu])
        self.chi_coef = np.column_stack([c_lam, c_mu])
        tail = self.alpha_coef[-10:]
        scale = np.maximum(1.0, np.abs(tail).max(axis=0))
        self.tail_constant = bool(np.all(np.abs(tail - tail[-1]) <= 1e-12 * scale))
        self.tail_coef = self.alpha_coef[-1]
        self._a_rows = np.unique(np.round(self.alpha_coef, 14), axis=0)
        self._c_rows = np.unique(np.round(self.chi_coef, 14), axis=0)

    def _lin(self, rows: np.ndarray, t) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lam = np.asarray(self.model.lambda_base(t_arr))
        mu = np.asarray(self.model.mu_base(t_arr))
        return lam[:, None] * rows[None, :, 0] + mu[:, None] * rows[None, :, 1]

    @staticmethod
    def _shape(t, out):
        return float(out[0]) if np.ndim(t) == 0 else out

    def alpha(self, t):
        return self._shape(t, self._lin(self._a_rows, t).min(axis=1))

    def beta(self, t):
        return self._shape(t, self._lin(self._a_rows, t).max(axis=1))

    def chi(self, t):
        return self._shape(t, self._lin(self._c_rows, t).max(axis=1))

    def alpha_all(self, t: float) -> np.ndarray:
        """alpha_1(t) .. alpha_J(t)."""
        return float(self.model.lambda_base(t)) * self.alpha_coef[:, 0] + float(self.model.mu_base(t)) * self.alpha_coef[:, 1]

    def chi_all(self, t: float) -> np.ndarray:
        return float(self.model.lambda_base(t)) * self.chi_coef[:, 0] + float(self.model.mu_base(t)) * self.chi_coef[:, 1]

    def tail_value(self, t: float) -> float:
        return float(self.model.lambda_base(t) * self.tail_coef[0] + self.model.mu_base(t) * self.tail_coef[1])


class TruncatedRates(RateFunctions):
    """Rate functions from log norms of the truncated D B(t) D^-1.

    Valid for the truncated chain whatever the sign pattern: alpha(t) is
    ``-gamma(B*)`` and chi(t) is ``gamma(-B*)``.  beta(t) is the largest
    negated column sum, which bounds decay from below only under positivity.
    """

    source = "truncated"

    def __init__(self, model: ModelSpec, d: DSequence, N: int, overflow: str = "drop"):
        super().__init__(model)
        self.d = d
        self.N = self.J_max = int(N)
        self.structure = transition_structure(model, N, overflow)
        self.B_lam, self.B_mu = self.structure.Bstar_parts(d)

    def Bstar(self, t: float) -> np.ndarray:
        return float(self.model.lambda_base(t)) * self.B_lam + float(self.model.mu_base(t)) * self.B_mu

    def positivity(self, grid: int = 64) -> PositivityVerdict:
        """Positivity for all t: both parts suffice; otherwise scan one period."""
        v_lam, v_mu = check_positivity(self.B_lam), check_positivity(self.B_mu)
        if v_lam and v_mu:
            return v_lam if v_lam.min_entry <= v_mu.min_entry else v_mu
        worst = None
        for t in np.arange(grid) / grid:
            v = check_positivity(self.Bstar(t))
            if not v:
                return v
            worst = v if worst is None or v.min_entry < worst.min_entry else worst
        return worst

    def _each(self, t, fn):
        vals = np.array([fn(self.Bstar(float(u))) for u in np.atleast_1d(t)])
        return float(vals[0]) if np.ndim(t) == 0 else vals

    def alpha(self, t):
        return self._each(t, lambda M: -log_norm(M))

    def chi(self, t):
        return self._each(t, lambda M: log_norm(-M))

    def beta(self, t):
        return self._each(t, lambda M: float(np.max(-M.sum(axis=0))))


def aggregate(model: ModelSpec, d: DSequence, t: float, J_max: int | None = None) -> tuple[float, float, float]:
    """(alpha(t), beta(t), chi(t)) from the closed forms, tail included."""
    rf = ClosedFormRates(model, d, J_max)
    return rf.alpha(t), rf.beta(t), rf.chi(t)


# ---------------------------------------------------------------------------
# Periodic constants and ergodicity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicConstants:
    a: float
    K: float
    R: float
    F: float
    quadrature_error_estimate: float
    homogeneous: bool = False


def forcing_weights(model: ModelSpec) -> np.ndarray:
    """f(t) / lambda(t) for the untruncated chain: arrivals out of state 0."""
    w = model.lambda_weights(model.S)
    if model.batch_arrivals:
        return w[1 : model.S + 1].copy()
    return np.array([w[0]])


def forcing_sup(model: ModelSpec, d: DSequence) -> float:
    """F = sup_t ||f(t)||_1D (exact for leaf intensity forms, conservative otherwise)."""
    return float(model.lambda_base.sup() * norm_1D(forcing_weights(model), d))


def periodic_constants(
    model: ModelSpec,
    d: DSequence,
    quad_tol: float = 1e-10,
    rates: RateFunctions | None = None,
    grid: int = 2048,
) -> PeriodicConstants:
    """a = int_0^1 alpha, K, R = e^K and F for 1-periodic intensities.

    K is the smallest constant with ``exp(-int_s^t alpha) <= e^K exp(-a (t-s))``
    for all s <= t, i.e. the peak-to-trough range of ``G(t) = int_0^t alpha - a t``.
    """
    if not model.periodic:
        raise UnsupportedModeError(
            "intensities are not 1-periodic; use the raw rate integrals instead of periodic constants"
        )
    rf = rates or ClosedFormRates(model, d)
    F = forcing_sup(model, d)
    if model.homogeneous:
        a = float(rf.alpha(0.0))
        return PeriodicConstants(a, 0.0, 1.0, F, 0.0, homogeneous=True)
    a, err = rf._integral("alpha", 0.0, 1.0, quad_tol)
    ts = np.arange(grid + 1) / grid
    g = np.asarray(rf.alpha(ts)) - a
    candidates = {0.0, 1.0, *rf._points_between(0.0, 1.0)}
    for k in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        candidates.add(optimize.brentq(lambda u: float(rf.alpha(u)) - a, ts[k], ts[k + 1], xtol=1e-14))
    candidates.update(ts[np.nonzero(g == 0)[0]])
    pts = np.array(sorted(candidates))
    G = rf.cumulative("alpha", pts, tol=quad_tol) - a * pts
    K = float(max(G.max() - G.min(), 0.0))
    R = math.exp(K) if K < 700 else math.inf
    return PeriodicConstants(a, K, R, F, err)


class DecayBound(NamedTuple):
    alpha: float
    certified: bool


def decay_parameter_bound(model: ModelSpec, d: DSequence, J_max: int | None = None) -> DecayBound:
    """alpha for time-constant intensities: a lower bound on the decay parameter when > 0."""
    if not model.homogeneous:
        raise UnsupportedModeError("decay parameter bound needs time-constant intensities")
    alpha = float(ClosedFormRates(model, d, J_max).alpha(0.0))
    return DecayBound(alpha, alpha > 0)


def positivity_closed_form(model: ModelSpec, d: DSequence, J_max: int | None = None) -> PositivityVerdict:
    """Positivity of the untruncated D B D^-1 on its leading J x J block.

    The leading block of a truncation at N = J + S coincides with the
    untruncated matrix, whatever the overflow convention.
    """
    J = int(J_max or default_horizon(model, d))
    rates = TruncatedRates(model, d, J + model.S, overflow="lump")
    v_lam = check_positivity(rates.B_lam[:J, :J])
    v_mu = check_positivity(rates.B_mu[:J, :J])
    if v_lam and v_mu:
        return v_lam if v_lam.min_entry <= v_mu.min_entry else v_mu
    for t in np.arange(64) / 64:
        v = check_positivity(rates.Bstar(t)[:J, :J])
        if not v:
            return v
    return PositivityVerdict(True, min(v_lam.min_entry, v_mu.min_entry), None)


# ---------------------------------------------------------------------------
# Bound curves
# ---------------------------------------------------------------------------


def _as_z(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p[1:]


@dataclass
class BoundCurves:
    """Upper and lower envelopes for the distance between two solutions.

    ``p_a`` and ``p_b`` are the initial distributions at time ``s`` (length
    N + 1, state 0 first).
    """

    rates: RateFunctions
    d: DSequence
    p_a: np.ndarray
    p_b: np.ndarray
    s: float = 0.0
    norms: NormConstants | None = None
    positivity_ok: bool = True
    quad_tol: float = 1e-11
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.p_a = np.asarray(self.p_a, dtype=float)
        self.p_b = np.asarray(self.p_b, dtype=float)
        self.v0 = D_apply(_as_z(self.p_a) - _as_z(self.p_b), self.d)
        self.init_1D = float(np.abs(self.v0).sum())
        if self.norms is None:
            try:
                self.norms = compute_W(self.d)
            except ConfigError:
                self.norms = None

    @property
    def ordered(self) -> bool:
        """D (z_a(s) - z_b(s)) >= 0 componentwise."""
        return bool(np.all(self.v0 >= -1e-15))

    def _decay(self, which: str, t) -> np.ndarray:
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        order = np.argsort(t_arr)
        out = np.empty(t_arr.size)
        out[order] = np.exp(-self.rates.cumulative(which, t_arr[order], s=self.s, tol=self.quad_tol))
        return out

    def _ret(self, t, vals):
        return float(vals[0]) if np.ndim(t) == 0 else vals

    def upper_1D(self, t):
        return self._ret(t, self._decay("alpha", t) * self.init_1D)

    def lower_1D(self, t):
        return self._ret(t, self._decay("chi", t) * self.init_1D)

    def lower_1D_beta(self, t):
        if not (self.ordered and self.positivity_ok):
            raise PreconditionError(
                "the beta lower bound needs D(p*(s) - p**(s)) >= 0 componentwise and positivity of D B D^-1"
            )
        return self._ret(t, self._decay("beta", t) * self.init_1D)

    def upper_tv(self, t):
        return self._ret(t, 4.0 * self._decay("alpha", t) * self.init_1D)

    def upper_1E(self, t):
        if self.norms is None:
            raise ConfigError("W is zero for this d-sequence; no expectation-norm bound")
        return self._ret(t, 2.0 / self.norms.W * self._decay("alpha", t) * self.init_1D)

    def upper_mean_gap(self, t):
        """Bound on |E_a(t) - E_b(t)|; uses W* when the initial pair is ordered."""
        if self.ordered and self.positivity_ok and self.norms is not None:
            factor = 1.0 / self.norms.W_star
        else:
            factor = 2.0 / self.norms.W if self.norms else math.nan
        return self._ret(t, factor * self._decay("alpha", t) * self.init_1D)


def corollary_tv(pc: PeriodicConstants, t):
    """(4 F R / a) e^{-a t}: distance to the limiting regime from X(0) = 0."""
    return 4.0 * pc.F * pc.R / pc.a * np.exp(-pc.a * np.asarray(t, dtype=float))


def corollary_mean(pc: PeriodicConstants, W_star: float, t):
    """(F R / (a W*)) e^{-a t}: gap to the limiting mean from X(0) = 0."""
    return pc.F * pc.R / (pc.a * W_star) * np.exp(-pc.a * np.asarray(t, dtype=float))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class BoundsReport:
    verdict: str
    positivity: PositivityVerdict
    norms: NormConstants | None
    periodic: PeriodicConstants | None
    decay_lower_bound: float | None
    J_max: int
    tail_constant: bool
    horizon_limited: bool
    horizon_integral: float | None
    rates: ClosedFormRates = field(repr=False)
    notes: list[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict in ("weakly-ergodic", "strongly-ergodic")

    def curves(self, resolution: int = 201, t_max: float = 5.0) -> dict[str, np.ndarray]:
        """Sampled rate functions over one period and corollary curves over [0, t_max]."""
        tp = np.linspace(0.0, 1.0, resolution)
        out = {
            "t_period": tp,
            "alpha": np.asarray(self.rates.alpha(tp)),
            "beta": np.asarray(self.rates.beta(tp)),
            "chi": np.asarray(self.rates.chi(tp)),
        }
        if self.periodic is not None and self.periodic.a > 0 and self.norms is not None:
            tc = np.linspace(0.0, t_max, resolution)
            out["t_bound"] = tc
            out["corollary_tv"] = corollary_tv(self.periodic, tc)
            out["corollary_mean"] = corollary_mean(self.periodic, self.norms.W_star, tc)
        return out

    def to_dict(self) -> dict[str, Any]:
        pos = self.positivity
        out: dict[str, Any] = {
            "verdict": self.verdict,
            "positivity": {
                "ok": pos.ok,
                "min_offdiagonal": pos.min_entry,
                "witness": list(pos.index) if pos.index else None,
            },
            "J_max": self.J_max,
            "tail_constant": self.tail_constant,
            "horizon_limited": self.horizon_limited,
            "notes": list(self.notes),
        }
        if self.norms is not None:
            out["W"] = self.norms.W
            out["W_star"] = self.norms.W_star
            out["W_index"] = self.norms.attained_index_W
            out["W_star_index"] = self.norms.attained_index_Wstar
        if self.periodic is not None:
            pc = self.periodic
            out["periodic"] = {
                "a": pc.a,
                "K": pc.K,
                "R": pc.R,
                "F": pc.F,
                "quadrature_error_estimate": pc.quadrature_error_estimate,
                "homogeneous": pc.homogeneous,
            }
        if self.decay_lower_bound is not None:
            out["decay_lower_bound"] = self.decay_lower_bound
        if self.horizon_integral is not None:
            out["horizon_integral"] = self.horizon_integral
        return out


def analyze(
    model: ModelSpec,
    d: DSequence,
    J_max: int | None = None,
    quad_tol: float = 1e-10,
    horizon: float = 10.0,
) -> BoundsReport:
    """Positivity check, ergodicity verdict and constants for one model."""
    rates = ClosedFormRates(model, d, J_max)
    notes: list[str] = []
    positivity = positivity_closed_form(model, d, rates.J_max)
    try:
        norms = compute_W(d)
    except ConfigError:
        norms = None
        notes.append("W = 0 for a non-growing tail; expectation bounds unavailable")
    if not rates.tail_constant:
        notes.append(f"alpha_i not constant near i = {rates.J_max}; infimum covers the scanned range only")

    periodic = None
    decay = None
    horizon_limited = False
    horizon_integral = None
    if model.periodic:
        periodic = periodic_constants(model, d, quad_tol, rates)
    else:
        horizon_limited = True
        horizon_integral = rates.integral("alpha", 0.0, horizon)
    if model.homogeneous:
        decay = decay_parameter_bound(model, d, rates.J_max).alpha

    if not positivity.ok:
        verdict = "inconclusive"
        notes.append(f"positivity fails at {positivity.index} (entry {positivity.min_entry:.3e})")
    elif not rates.tail_constant:
        verdict = "inconclusive"
    elif model.homogeneous:
        verdict = "strongly-ergodic" if decay > 0 else "inconclusive"
    elif periodic is not None:
        verdict = "weakly-ergodic" if periodic.a > 0 else "inconclusive"
    else:
        last = rates.integral("alpha", horizon - 1.0, horizon)
        verdict = "weakly-ergodic" if horizon_integral > 0 and last > 0 else "inconclusive"
        notes.append(f"certified over [0, {horizon}] only")
    if verdict == "inconclusive" and positivity.ok:
        notes.append("alpha does not stay positive on average")
    return BoundsReport(
        verdict,
        positivity,
        norms,
        periodic,
        decay,
        rates.J_max,
        rates.tail_constant,
        horizon_limited,
        horizon_integral,
        rates,
        notes,
    )
