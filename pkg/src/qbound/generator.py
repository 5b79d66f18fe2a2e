"""Truncated generator A(t), reduced system (B(t), f(t)) and B*(t) = D B(t) D^-1.

Every rate is ``lambda_base(t) * weight`` or ``mu_base(t) * weight``, so the
truncated transposed intensity matrix splits as

    A(t) = lambda(t) * A_lam + mu(t) * A_mu

with constant sparse parts.  The same holds for B, f and B* by linearity;
``TransitionStructure`` keeps the constant parts and evaluates at any t.

Truncation to states {0..N}: with ``overflow="drop"`` an arrival that would
leave the state space is deleted and the diagonal compensates; with
``overflow="lump"`` the arrival lands in state N instead.  The two coincide
for single arrivals (classes I and III).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .dseq import DSequence
from .intensity import DomainError, ModelSpec

OVERFLOW_MODES = ("drop", "lump")


class InvalidGeneratorError(ValueError):
    """A matrix offered as a transposed intensity matrix has nonzero column sums."""


def _coo_part(rows, cols, vals, N: int) -> sp.csc_matrix:
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(N + 1, N + 1)).tocsc()
    off.sum_duplicates()
    off.eliminate_zeros()
    return off


def _arrival_offdiag(model: ModelSpec, N: int, overflow: str) -> sp.csc_matrix:
    w = model.lambda_weights(max(N, model.S))
    rows, cols, vals = [], [], []
    if model.batch_arrivals:
        for k in range(1, model.S + 1):
            src = np.arange(0, N - k + 1)
            rows.append(src + k)
            cols.append(src)
            vals.append(np.full(src.size, w[k]))
            if overflow == "lump":
                over = np.arange(max(0, N - k + 1), N)
                rows.append(np.full(over.size, N))
                cols.append(over)
                vals.append(np.full(over.size, w[k]))
    else:
        src = np.arange(0, N)
        rows.append(src + 1)
        cols.append(src)
        vals.append(w[:N])
    return _coo_part(rows, cols, vals, N)


def _service_offdiag(model: ModelSpec, N: int) -> sp.csc_matrix:
    w = model.mu_weights(max(N, model.S))
    rows, cols, vals = [], [], []
    if model.batch_service:
        for k in range(1, min(model.S, N) + 1):
            src = np.arange(k, N + 1)
            rows.append(src - k)
            cols.append(src)
            vals.append(np.full(src.size, w[k]))
    else:
        src = np.arange(1, N + 1)
        rows.append(src - 1)
        cols.append(src)
        vals.append(w[1 : N + 1])
    return _coo_part(rows, cols, vals, N)


def _with_diagonal(off: sp.csc_matrix) -> sp.csr_matrix:
    out = np.asarray(off.sum(axis=0)).ravel()
    return (off - sp.diags(out)).tocsr()


@dataclass(frozen=True)
class TransitionStructure:
    """Constant parts of the truncated chain: A(t) = lambda(t) A_lam + mu(t) A_mu."""

    model: ModelSpec
    N: int
    overflow: str
    lam_offdiag: sp.csc_matrix
    mu_offdiag: sp.csc_matrix

    @cached_property
    def A_lam(self) -> sp.csr_matrix:
        return _with_diagonal(self.lam_offdiag)

    @cached_property
    def A_mu(self) -> sp.csr_matrix:
        return _with_diagonal(self.mu_offdiag)

    def rates(self, t: float) -> tuple[float, float]:
        return float(self.model.lambda_base(t)), float(self.model.mu_base(t))

    def A(self, t: float) -> np.ndarray:
        lam, mu = self.rates(t)
        return (lam * self.A_lam + mu * self.A_mu).toarray()

    def matvec(self, t: float, p: np.ndarray) -> np.ndarray:
        lam, mu = self.rates(t)
        return lam * (self.A_lam @ p) + mu * (self.A_mu @ p)

    def outflow(self) -> tuple[np.ndarray, np.ndarray]:
        """Total outflow weights per state (lambda part, mu part) within the truncation."""
        return (
            np.asarray(self.lam_offdiag.sum(axis=0)).ravel(),
            np.asarray(self.mu_offdiag.sum(axis=0)).ravel(),
        )

    @cached_property
    def reduced_parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        B_lam, f_lam = build_reduced(self.A_lam.toarray())
        B_mu, f_mu = build_reduced(self.A_mu.toarray())
        return B_lam, f_lam, B_mu, f_mu

    def Bstar_parts(self, d: DSequence) -> tuple[np.ndarray, np.ndarray]:
        B_lam, _, B_mu, _ = self.reduced_parts
        return transform_Bstar(B_lam, d), transform_Bstar(B_mu, d)


def transition_structure(model: ModelSpec, N: int, overflow: str = "drop") -> TransitionStructure:
    if N < 1:
        raise DomainError("truncation size N must be >= 1")
    if overflow not in OVERFLOW_MODES:
        raise ValueError(f"overflow must be one of {OVERFLOW_MODES}, got {overflow!r}")
    return TransitionStructure(
        model, int(N), overflow, _arrival_offdiag(model, N, overflow), _service_offdiag(model, N)
    )


def build_A(model: ModelSpec, N: int, t: float, overflow: str = "drop") -> np.ndarray:
    """Dense truncated transposed intensity matrix on states 0..N at time t."""
    if not t >= 0:
        raise DomainError(f"time must be >= 0, got {t}")
    return transition_structure(model, N, overflow).A(t)


def build_reduced(A: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate state 0: ``b_ij = a_ij - a_i0`` and ``f_i = a_i0`` for i, j >= 1."""
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    colsum = A.sum(axis=0)
    bad = np.abs(colsum) > tol * scale
    if bad.any():
        j = int(np.argmax(np.abs(colsum)))
        raise InvalidGeneratorError(f"column {j} of A sums to {colsum[j]:.3e}, not 0")
    f = A[1:, 0].copy()
    B = A[1:, 1:] - f[:, None]
    return B, f


def build_D(d: DSequence, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangular ``D`` (row i filled with d_i from column i on) and its inverse."""
    if N < 1:
        raise DomainError("size must be >= 1")
    w = d.values(N)
    D = np.triu(np.ones((N, N))) * w[:, None]
    Dinv = np.diag(1.0 / w)
    Dinv[np.arange(N - 1), np.arange(1, N)] = -1.0 / w[1:]
    return D, Dinv


def transform_Bstar(B: np.ndarray, d: DSequence) -> np.ndarray:
    """``D B D^-1`` via tail sums and column differences (no dense inverse).

    ``(D B)_{kj} = d_k sum_{m>=k} b_mj`` and right-multiplying by the bidiagonal
    inverse gives ``(X_{kj} - X_{k,j-1}) / d_j``.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    w = d.values(n)
    tails = np.flip(np.cumsum(np.flip(B, axis=0), axis=0), axis=0)
    X = w[:, None] * tails
    out = X.copy()
    out[:, 1:] -= X[:, :-1]
    return out / w[None, :]


@dataclass(frozen=True)
class PositivityVerdict:
    ok: bool
    min_entry: float
    index: tuple[int, int] | None  # 1-based (row, column) of the most negative off-diagonal entry

    def __bool__(self) -> bool:
        return self.ok


def check_positivity(Bstar: np.ndarray, tol: float = 1e-12) -> PositivityVerdict:
    """Off-diagonal entries must be >= -tol * max(1, largest |entry| of their column)."""
    M = np.asarray(Bstar, dtype=float)
    n = M.shape[0]
    if n == 0:
        return PositivityVerdict(True, 0.0, None)
    off = M.copy()
    off[np.arange(n), np.arange(n)] = np.inf
    scale = np.maximum(1.0, np.abs(M).max(axis=0))
    rel = off / scale[None, :]
    r, c = np.unravel_index(int(np.argmin(rel)), rel.shape)
    worst = float(off[r, c]) if n > 1 else 0.0
    if n == 1 or rel[r, c] >= -tol:
        return PositivityVerdict(True, min(worst, 0.0) if n > 1 else 0.0, None)
    return PositivityVerdict(False, worst, (int(r) + 1, int(c) + 1))


@dataclass(frozen=True)
class RateMatrices:
    t: float
    N: int
    A: np.ndarray
    B: np.ndarray
    f: np.ndarray
    Bstar: np.ndarray


def rate_matrices(model: ModelSpec, d: DSequence, N: int, t: float, overflow: str = "drop") -> RateMatrices:
    A = build_A(model, N, t, overflow)
    B, f = build_reduced(A)
    return RateMatrices(float(t), int(N), A, B, f, transform_Bstar(B, d))


def dump_csv(mats: RateMatrices, model: ModelSpec, stream: TextIO | Path, which: str = "A") -> None:
    """Row-major CSV of one of A / B / Bstar with a small header."""
    M = {"A": mats.A, "B": mats.B, "Bstar": mats.Bstar}[which]
    if isinstance(stream, Path):
        with stream.open("w", newline="") as fh:
            dump_csv(mats, model, fh, which)
        return
    stream.write(f"# matrix: {which}\n# N: {mats.N}\n# t: {mats.t!r}\n# class: {model.class_tag}\n")
    writer = csv.writer(stream)
    for row in M:
        writer.writerow([format(x, ".17g") for x in row])
