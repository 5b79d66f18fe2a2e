"""Weight sequences {d_i}, the constants W and W*, and the weighted norms.

A sequence is an explicit head ``d_1..d_m`` (with ``d_1 = 1``) followed by a
geometric tail ``d_i = d_m * rho**(i - m)``.  Vectors passed to the norms are
indexed from state 1, i.e. ``z[0]`` holds the coordinate of state 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .intensity import ConfigError, DomainError


@dataclass(frozen=True)
class DSequence:
    head: tuple[float, ...]
    tail_ratio: float = 1.0

    def __post_init__(self) -> None:
        head = tuple(float(x) for x in self.head)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail_ratio", float(self.tail_ratio))
        if not head:
            raise ConfigError("d-sequence head must not be empty")
        if head[0] != 1.0:
            raise ConfigError(f"d_1 must equal 1, got {head[0]}")
        if any(not math.isfinite(x) or x <= 0 for x in head):
            raise ConfigError("d-sequence entries must be finite and positive")
        # non-decreasing only: the flat head of the S=100 preset rules out strict growth
        if any(b < a for a, b in zip(head, head[1:])):
            raise ConfigError("d-sequence must be non-decreasing")
        if not math.isfinite(self.tail_ratio) or self.tail_ratio < 1.0:
            raise ConfigError(f"tail_ratio must be >= 1, got {self.tail_ratio}")

    @property
    def m(self) -> int:
        return len(self.head)

    def value(self, i: int) -> float:
        if i < 1:
            raise DomainError(f"d-sequence index must be >= 1, got {i}")
        if i <= self.m:
            return self.head[i - 1]
        return self.head[-1] * self.tail_ratio ** (i - self.m)

    def values(self, n: int) -> np.ndarray:
        """Array ``[d_1, ..., d_n]``."""
        i = np.arange(1, n + 1)
        out = np.empty(n)
        k = min(n, self.m)
        out[:k] = self.head[:k]
        if n > self.m:
            out[self.m :] = self.head[-1] * self.tail_ratio ** (i[self.m :] - self.m)
        return out

    def ratios(self, n: int) -> np.ndarray:
        """``[d_{i+1}/d_i for i = 1..n]`` computed without forming huge tail values."""
        h = np.asarray(self.head)
        out = np.full(n, self.tail_ratio)
        k = min(n, self.m - 1)
        out[:k] = h[1 : k + 1] / h[:k]
        return out

    def to_spec(self) -> Any:
        for name, preset in PRESETS.items():
            if preset() == self:
                return name
        return {"head": list(self.head), "tail_ratio": self.tail_ratio}

    @classmethod
    def parse(cls, spec: Any) -> "DSequence":
        if isinstance(spec, DSequence):
            return spec
        if isinstance(spec, str):
            if spec not in PRESETS:
                raise ConfigError(f"unknown d-sequence preset {spec!r}; choose from {sorted(PRESETS)}")
            return PRESETS[spec]()
        if isinstance(spec, dict):
            extra = set(spec) - {"head", "tail_ratio"}
            if extra or "head" not in spec:
                raise ConfigError("d-sequence block needs 'head' and optional 'tail_ratio' only")
            return cls(tuple(spec["head"]), spec.get("tail_ratio", 1.0))
        raise ConfigError(f"cannot parse d-sequence {spec!r}")


def s100_sequence() -> DSequence:
    """d_i = 1 for i <= 100, then factors 1.05, 1.1, 1.3, 1.6, 2, then ratio 2.3."""
    head = [1.0] * 100
    for factor in (1.05, 1.1, 1.3, 1.6, 2.0):
        head.append(head[-1] * factor)
    return DSequence(tuple(head), 2.3)


def geometric(ratio: float) -> DSequence:
    """d_i = ratio**(i-1)."""
    return DSequence((1.0,), ratio)


PRESETS = {"paper-S100": s100_sequence}


@dataclass(frozen=True)
class NormConstants:
    W: float
    W_star: float
    attained_index_W: int
    attained_index_Wstar: int
    scanned_to: int


def _scan_limit(d: DSequence) -> int:
    # d_m rho^(i-m)/i is unimodal in i with its minimum near 1/log(rho)
    crossover = math.ceil(1.0 / math.log(d.tail_ratio)) if d.tail_ratio > 1 else 0
    return d.m + crossover + 50


def compute_W(d: DSequence) -> NormConstants:
    """W = inf_i d_i / i and W* = inf_k (d_1 + ... + d_k) / k with witnesses."""
    if d.tail_ratio <= 1.0:
        raise ConfigError("tail_ratio must exceed 1 for W = inf d_i/i to be positive")
    J = _scan_limit(d)
    while True:
        i = np.arange(1, J + 1)
        logd = np.log(d.values(J))
        ratio = np.exp(logd - np.log(i))
        j = int(np.argmin(ratio))
        # past the witness the tail term must already be rising and above the minimum
        if j < J - 1 and ratio[-1] > ratio[j] and ratio[-1] > ratio[-2]:
            break
        J *= 2
    running = np.cumsum(d.values(J)) / i
    k = int(np.argmin(running))
    return NormConstants(float(ratio[j]), float(running[k]), j + 1, k + 1, J)


def tail_sums(z: np.ndarray) -> np.ndarray:
    """``T_k = sum_{i >= k} z_i`` along the last axis."""
    z = np.asarray(z, dtype=float)
    return np.flip(np.cumsum(np.flip(z, axis=-1), axis=-1), axis=-1)


def norm_1D(z: np.ndarray, d: DSequence) -> float | np.ndarray:
    """``sum_k d_k |sum_{i >= k} z_i|``; rows of a 2-D input are separate vectors."""
    z = np.asarray(z, dtype=float)
    w = d.values(z.shape[-1])
    out = np.sum(w * np.abs(tail_sums(z)), axis=-1)
    return float(out) if out.ndim == 0 else out


def norm_1E(z: np.ndarray) -> float | np.ndarray:
    """``sum_k k |z_k|`` with ``z[0]`` the coordinate of state 1."""
    z = np.asarray(z, dtype=float)
    k = np.arange(1, z.shape[-1] + 1)
    out = np.sum(k * np.abs(z), axis=-1)
    return float(out) if out.ndim == 0 else out


def D_apply(z: np.ndarray, d: DSequence) -> np.ndarray:
    """``D z`` for the upper-triangular weight matrix, i.e. weighted tail sums."""
    z = np.asarray(z, dtype=float)
    return d.values(z.shape[-1]) * tail_sums(z)


__all__ = [
    "DSequence",
    "NormConstants",
    "PRESETS",
    "D_apply",
    "compute_W",
    "geometric",
    "norm_1D",
    "norm_1E",
    "s100_sequence",
    "tail_sums",
]
