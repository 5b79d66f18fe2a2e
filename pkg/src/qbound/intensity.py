"""Time-dependent intensity functions and the four queue classes.

Intensities are built from a small declarative grammar (constants, sinusoids,
piecewise-constant profiles, and non-negative sums / products / shifts of
those).  Every node is non-negative by construction, so a validated
``TimeFunction`` can never produce a negative rate.

The four model classes differ only in how the base functions ``lambda(t)`` and
``mu(t)`` are spread over states or batch sizes:

========  ==========================  ===========================
class     arrivals                    services
========  ==========================  ===========================
I         state n: lambda_n(t)        state n: mu_n(t)
II        batch k: lambda(t)/(S k)    state n: min(n, S) mu(t)
III       state n: lambda_n(t)        batch k: mu(t)/k
IV        batch k: lambda(t)/(S k)    batch k: mu(t)/k
========  ==========================  ===========================

Batch rates vanish for k > S.  State rules for classes I-III are multiplier
tables applied to the base functions, so every rate factors as
``base(t) * weight``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

CLASS_ALIASES = {
    "I": "I",
    "BD": "I",
    "II": "II",
    "BATCHARRIVAL": "II",
    "III": "III",
    "BATCHSERVICE": "III",
    "IV": "IV",
    "BATCHBOTH": "IV",
}


class DomainError(ValueError):
    """Raised for negative times or negative state / batch indices."""


class ConfigError(ValueError):
    """Raised when an intensity or model description fails validation."""


# ---------------------------------------------------------------------------
# Time functions
# ---------------------------------------------------------------------------


class TimeFunction:
    """Base class for non-negative intensity functions of time."""

    def __call__(self, t: ArrayLike) -> ArrayLike:
        arr = np.asarray(t, dtype=float)
        out = self._eval(arr)
        if arr.ndim == 0:
            return float(out)
        return out

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sup(self) -> float:
        """Upper bound of the function over t >= 0 (exact for leaf forms)."""
        raise NotImplementedError

    def inf(self) -> float:
        """Lower bound of the function over t >= 0 (exact for leaf forms)."""
        raise NotImplementedError

    @property
    def period_one(self) -> bool:
        raise NotImplementedError

    @property
    def is_constant(self) -> bool:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Discontinuity locations within one period [0, 1)."""
        return ()

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def scaled(self, c: float) -> "TimeFunction":
        return Shifted(self, scale=c)


@dataclass(frozen=True)
class Constant(TimeFunction):
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise ConfigError(f"constant intensity must be finite and >= 0, got {self.value}")

    def _eval(self, t):
        return np.full(t.shape, float(self.value))

    def sup(self) -> float:
        return float(self.value)

    def inf(self) -> float:
        return float(self.value)

    @property
    def period_one(self) -> bool:
        return True

    @property
    def is_constant(self) -> bool:
        return True

    def to_dict(self):
        return {"form": "constant", "value": self.value}


@dataclass(frozen=True)
class Sinusoid(TimeFunction):
    """``offset + amplitude * sin(2 pi frequency t)`` (or cos)."""

    offset: float
    amplitude: float
    kind: str = "sin"
    frequency: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("sin", "cos"):
            raise ConfigError(f"sinusoid kind must be 'sin' or 'cos', got {self.kind!r}")
        for name in ("offset", "amplitude", "frequency"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"sinusoid {name} must be finite")
        if self.frequency <= 0:
            raise ConfigError("sinusoid frequency must be positive")
        # rejected rather than clamped: a negative rate would corrupt every bound
        if self.offset < abs(self.amplitude):
            raise ConfigError(
                f"{self.offset} + {self.amplitude}*{self.kind}(...) takes negative values"
            )

    def _eval(self, t):
        phase = 2.0 * np.pi * self.frequency * t
        wave = np.sin(phase) if self.kind == "sin" else np.cos(phase)
        return self.offset + self.amplitude * wave

    def sup(self) -> float:
        return float(self.offset + abs(self.amplitude))

    def inf(self) -> float:
        return float(self.offset - abs(self.amplitude))

    @property
    def period_one(self) -> bool:
        return float(self.frequency).is_integer() or self.amplitude == 0

    @property
    def is_constant(self) -> bool:
        return self.amplitude == 0

    def to_dict(self):
        out = {"form": self.kind, "offset": self.offset, "amplitude": self.amplitude}
        if self.frequency != 1.0:
            out["frequency"] = self.frequency
        return out


@dataclass(frozen=True)
class PiecewiseConstant(TimeFunction):
    """Step profile on [0, 1) repeated with period one.

    ``breaks[j]`` is the left end of the piece carrying ``values[j]``.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        b, v = tuple(map(float, self.breaks)), tuple(map(float, self.values))
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)
        if len(b) != len(v) or not b:
            raise ConfigError("piecewise intensity needs matching non-empty breaks and values")
        if b[0] != 0.0 or any(x >= y for x, y in zip(b, b[1:])) or b[-1] >= 1.0:
            raise ConfigError("piecewise breaks must start at 0, increase strictly, and stay below 1")
        if any(not math.isfinite(x) or x < 0 for x in v):
            raise ConfigError("piecewise values must be finite and >= 0")

    def _eval(self, t):
        frac = np.mod(t, 1.0)
        idx = np.searchsorted(np.asarray(self.breaks), frac, side="right") - 1
        return np.asarray(self.values)[idx]

    def sup(self) -> float:
        return max(self.values)

    def inf(self) -> float:
        return min(self.values)

    @property
    def period_one(self) -> bool:
        return True

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    def breakpoints(self):
        return self.breaks[1:]

    def to_dict(self):
        return {"form": "piecewise", "breaks": list(self.breaks), "values": list(self.values)}


@dataclass(frozen=True)
class Sum(TimeFunction):
    terms: tuple[TimeFunction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ConfigError("sum needs at least one term")

    def _eval(self, t):
        return sum(f._eval(t) for f in self.terms)

    # conservative: sup of a sum <= sum of sups
    def sup(self) -> float:
        return float(sum(f.sup() for f in self.terms))

    def inf(self) -> float:
        return float(sum(f.inf() for f in self.terms))

    @property
    def period_one(self) -> bool:
        return all(f.period_one for f in self.terms)

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f in self.terms)

    def breakpoints(self):
        return tuple(sorted({b for f in self.terms for b in f.breakpoints()}))

    def to_dict(self):
        return {"form": "sum", "terms": [f.to_dict() for f in self.terms]}


@dataclass(frozen=True)
class Product(TimeFunction):
    factors: tuple[TimeFunction, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ConfigError("product needs at least one factor")

    def _eval(self, t):
        out = np.ones(t.shape)
        for f in self.factors:
            out = out * f._eval(t)
        return out

    def sup(self) -> float:
        return float(np.prod([f.sup() for f in self.factors]))

    def inf(self) -> float:
        return float(np.prod([f.inf() for f in self.factors]))

    @property
    def period_one(self) -> bool:
        return all(f.period_one for f in self.factors)

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f in self.factors)

    def breakpoints(self):
        return tuple(sorted({b for f in self.factors for b in f.breakpoints()}))

    def to_dict(self):
        return {"form": "product", "factors": [f.to_dict() for f in self.factors]}


@dataclass(frozen=True)
class Shifted(TimeFunction):
    """``scale * inner(t + shift)``."""

    inner: TimeFunction
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.scale) or self.scale < 0:
            raise ConfigError("scale must be finite and >= 0")
        if not math.isfinite(self.shift):
            raise ConfigError("shift must be finite")

    def _eval(self, t):
        return self.scale * self.inner._eval(t + self.shift)

    def sup(self) -> float:
        return self.scale * self.inner.sup()

    def inf(self) -> float:
        return self.scale * self.inner.inf()

    @property
    def period_one(self) -> bool:
        return self.inner.period_one

    @property
    def is_constant(self) -> bool:
        return self.inner.is_constant or self.scale == 0

    def breakpoints(self):
        return tuple(sorted({float(np.mod(b - self.shift, 1.0)) for b in self.inner.breakpoints()}))

    def to_dict(self):
        return {"form": "shifted", "of": self.inner.to_dict(), "scale": self.scale, "shift": self.shift}


def time_function(spec: Any) -> TimeFunction:
    """Parse a declarative intensity description (a number means a constant)."""
    if isinstance(spec, TimeFunction):
        return spec
    if isinstance(spec, bool):
        raise ConfigError("intensity must be a number or a mapping")
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if not isinstance(spec, dict) or "form" not in spec:
        raise ConfigError(f"cannot parse intensity {spec!r}")
    form = spec["form"]
    allowed = {
        "constant": {"value"},
        "sin": {"offset", "amplitude", "frequency"},
        "cos": {"offset", "amplitude", "frequency"},
        "piecewise": {"breaks", "values"},
        "sum": {"terms"},
        "product": {"factors"},
        "shifted": {"of", "scale", "shift"},
    }
    if form not in allowed:
        raise ConfigError(f"unknown intensity form {form!r}")
    extra = set(spec) - allowed[form] - {"form"}
    if extra:
        raise ConfigError(f"unknown fields for form {form!r}: {sorted(extra)}")
    try:
        if form == "constant":
            return Constant(float(spec["value"]))
        if form in ("sin", "cos"):
            return Sinusoid(
                float(spec["offset"]),
                float(spec["amplitude"]),
                kind=form,
                frequency=float(spec.get("frequency", 1.0)),
            )
        if form == "piecewise":
            return PiecewiseConstant(tuple(spec["breaks"]), tuple(spec["values"]))
        if form == "sum":
            return Sum(tuple(time_function(s) for s in spec["terms"]))
        if form == "product":
            return Product(tuple(time_function(s) for s in spec["factors"]))
        return Shifted(
            time_function(spec["of"]),
            scale=float(spec.get("scale", 1.0)),
            shift=float(spec.get("shift", 0.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"intensity form {form!r} is missing field {exc}") from None


# ---------------------------------------------------------------------------
# State rules and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateRule:
    """Multiplier n -> c_n applied to a base intensity.

    ``kind`` is ``"one"`` (c_n = 1), ``"min_n_S"`` (c_n = min(n, S)) or
    ``"table"``, in which case the last table entry persists beyond the table.
    """

    kind: str = "one"
    table: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("one", "min_n_S", "table"):
            raise ConfigError(f"unknown state rule {self.kind!r}")
        object.__setattr__(self, "table", tuple(float(x) for x in self.table))
        if self.kind == "table":
            if not self.table:
                raise ConfigError("table state rule needs at least one entry")
            if any(not math.isfinite(x) or x < 0 for x in self.table):
                raise ConfigError("state rule multipliers must be finite and >= 0")

    def weights(self, n_max: int, S: int) -> np.ndarray:
        n = np.arange(n_max + 1)
        if self.kind == "one":
            return np.ones(n_max + 1)
        if self.kind == "min_n_S":
            return np.minimum(n, S).astype(float)
        tab = np.asarray(self.table)
        return tab[np.minimum(n, len(tab) - 1)]

    @property
    def settles_at(self) -> int:
        """First index from which the multiplier no longer changes (given S)."""
        return len(self.table) if self.kind == "table" else 0

    def to_spec(self) -> Any:
        if self.kind == "table":
            return list(self.table)
        return "min(n,S)" if self.kind == "min_n_S" else "one"

    @classmethod
    def parse(cls, spec: Any) -> "StateRule":
        if isinstance(spec, StateRule):
            return spec
        if isinstance(spec, str):
            key = spec.replace(" ", "")
            if key in ("one", "1", "const"):
                return cls("one")
            if key in ("min(n,S)", "min_n_S"):
                return cls("min_n_S")
            raise ConfigError(f"unknown state rule {spec!r}")
        if isinstance(spec, (list, tuple)):
            return cls("table", tuple(spec))
        raise ConfigError(f"cannot parse state rule {spec!r}")


_RULE_KEYS = {"I": {"lambda", "mu"}, "II": {"mu"}, "III": {"lambda"}, "IV": set()}
_DEFAULT_LAMBDA_RULE = StateRule("one")
_DEFAULT_MU_RULE = StateRule("min_n_S")


@dataclass(frozen=True)
class ModelSpec:
    """One of the four queue classes with its base intensities."""

    class_tag: str
    S: int
    lambda_base: TimeFunction
    mu_base: TimeFunction
    lambda_rule: StateRule = field(default=_DEFAULT_LAMBDA_RULE)
    mu_rule: StateRule = field(default=_DEFAULT_MU_RULE)

    def __post_init__(self) -> None:
        tag = CLASS_ALIASES.get(str(self.class_tag).replace(" ", "").upper())
        if tag is None:
            raise ConfigError(f"unknown model class {self.class_tag!r}")
        object.__setattr__(self, "class_tag", tag)
        if isinstance(self.S, bool) or int(self.S) != self.S or self.S < 1:
            raise ConfigError(f"server count S must be a positive integer, got {self.S!r}")
        object.__setattr__(self, "S", int(self.S))
        object.__setattr__(self, "lambda_base", time_function(self.lambda_base))
        object.__setattr__(self, "mu_base", time_function(self.mu_base))
        object.__setattr__(self, "lambda_rule", StateRule.parse(self.lambda_rule))
        object.__setattr__(self, "mu_rule", StateRule.parse(self.mu_rule))
        if "lambda" not in _RULE_KEYS[tag] and self.lambda_rule != _DEFAULT_LAMBDA_RULE:
            raise ConfigError(f"class {tag} arrivals follow the batch rule; no lambda state rule allowed")
        if "mu" not in _RULE_KEYS[tag] and self.mu_rule != _DEFAULT_MU_RULE:
            raise ConfigError(f"class {tag} services follow the batch rule; no mu state rule allowed")

    @property
    def batch_arrivals(self) -> bool:
        return self.class_tag in ("II", "IV")

    @property
    def batch_service(self) -> bool:
        return self.class_tag in ("III", "IV")

    @property
    def periodic(self) -> bool:
        return self.lambda_base.period_one and self.mu_base.period_one

    @property
    def homogeneous(self) -> bool:
        return self.lambda_base.is_constant and self.mu_base.is_constant

    def lambda_weights(self, n_max: int) -> np.ndarray:
        """Weights w_k, k = 0..n_max, with lambda_k(t) = lambda_base(t) * w_k."""
        if self.batch_arrivals:
            k = np.arange(n_max + 1)
            w = np.zeros(n_max + 1)
            mask = (k >= 1) & (k <= self.S)
            w[mask] = 1.0 / (self.S * k[mask])
            return w
        return self.lambda_rule.weights(n_max, self.S)

    def mu_weights(self, n_max: int) -> np.ndarray:
        """Weights m_k, k = 0..n_max, with mu_k(t) = mu_base(t) * m_k (m_0 = 0)."""
        if self.batch_service:
            k = np.arange(n_max + 1)
            w = np.zeros(n_max + 1)
            mask = (k >= 1) & (k <= self.S)
            w[mask] = 1.0 / k[mask]
            return w
        w = self.mu_rule.weights(n_max, self.S).copy()
        w[0] = 0.0
        return w

    @property
    def settles_at(self) -> int:
        """Index beyond which per-state / per-batch weights stop changing."""
        return max(self.S, self.lambda_rule.settles_at, self.mu_rule.settles_at) + 1

    def scaled(self, c: float) -> "ModelSpec":
        """Same model with every intensity multiplied by ``c``."""
        return ModelSpec(
            self.class_tag,
            self.S,
            self.lambda_base.scaled(c),
            self.mu_base.scaled(c),
            self.lambda_rule,
            self.mu_rule,
        )

    def with_class(self, class_tag: str) -> "ModelSpec":
        """Same base intensities under another class, with that class's default rules."""
        return ModelSpec(class_tag, self.S, self.lambda_base, self.mu_base)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "class": self.class_tag,
            "S": self.S,
            "lambda": self.lambda_base.to_dict(),
            "mu": self.mu_base.to_dict(),
        }
        rules = {}
        if self.lambda_rule != _DEFAULT_LAMBDA_RULE:
            rules["lambda"] = self.lambda_rule.to_spec()
        if self.mu_rule != _DEFAULT_MU_RULE:
            rules["mu"] = self.mu_rule.to_spec()
        if rules:
            out["state_rules"] = rules
        return out

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> "ModelSpec":
        if not isinstance(spec, dict):
            raise ConfigError("model block must be a mapping")
        if "preset" in spec:
            extra = set(spec) - {"preset", "load"}
            if extra:
                raise ConfigError(f"unknown model fields: {sorted(extra)}")
            return preset_case(spec["preset"], spec.get("load", 10))
        extra = set(spec) - {"class", "S", "lambda", "mu", "state_rules"}
        if extra:
            raise ConfigError(f"unknown model fields: {sorted(extra)}")
        missing = {"class", "S", "lambda", "mu"} - set(spec)
        if missing:
            raise ConfigError(f"model block is missing {sorted(missing)}")
        rules = spec.get("state_rules") or {}
        if not isinstance(rules, dict) or set(rules) - {"lambda", "mu"}:
            raise ConfigError("state_rules accepts only 'lambda' and 'mu'")
        return cls(
            spec["class"],
            spec["S"],
            time_function(spec["lambda"]),
            time_function(spec["mu"]),
            StateRule.parse(rules.get("lambda", "one")),
            StateRule.parse(rules.get("mu", "min(n,S)")),
        )


def _check_index(k: int, t: float) -> None:
    if k < 0:
        raise DomainError(f"index must be >= 0, got {k}")
    if not t >= 0:
        raise DomainError(f"time must be >= 0, got {t}")


def eval_lambda(model: ModelSpec, k: int, t: float) -> float:
    """Arrival rate: batch size ``k`` (classes II/IV) or current state ``k`` (I/III)."""
    _check_index(k, t)
    return float(model.lambda_base(t) * model.lambda_weights(k)[k])


def eval_mu(model: ModelSpec, k: int, t: float) -> float:
    """Service rate: batch size ``k`` (classes III/IV) or current state ``k`` (I/II)."""
    _check_index(k, t)
    if k == 0:
        return 0.0
    return float(model.mu_base(t) * model.mu_weights(k)[k])


def outflow_weights(model: ModelSpec, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-state total outflow split as (lambda part, mu part) for states 0..N.

    The untruncated chain is used, so the result dominates the outflow of any
    truncated version.
    """
    lam_w = model.lambda_weights(max(N, model.S))
    mu_w = model.mu_weights(max(N, model.S))
    n = np.arange(N + 1)
    if model.batch_arrivals:
        lam_out = np.full(N + 1, lam_w[1 : model.S + 1].sum())
    else:
        lam_out = lam_w[: N + 1].copy()
    if model.batch_service:
        cum = np.concatenate([[0.0], np.cumsum(mu_w[1:])])
        mu_out = cum[np.minimum(n, len(cum) - 1)]
    else:
        mu_out = mu_w[: N + 1].copy()
    return lam_out, mu_out


def local_bound_L(model: ModelSpec, N: int) -> float:
    """Conservative sup of the total outflow |q_ii(t)| over states i <= N and all t.

    The base-function sups are taken separately, which can only overestimate.
    """
    if N < 1:
        raise DomainError("truncation size N must be >= 1")
    lam_out, mu_out = outflow_weights(model, N)
    return float(np.max(lam_out * model.lambda_base.sup() + mu_out * model.mu_base.sup()))


def preset_case(case: str, load: float = 10, S: int = 100) -> ModelSpec:
    """Model presets case-i .. case-iv with lambda(t) = load (1 + sin 2 pi t), mu(t) = 3 + cos 2 pi t."""
    classes = {"case-i": "I", "case-ii": "II", "case-iii": "III", "case-iv": "IV"}
    key = str(case).lower()
    if key not in classes:
        raise ConfigError(f"unknown model preset {case!r}; choose from {sorted(classes)}")
    if not load > 0:
        raise ConfigError("preset load must be positive")
    return ModelSpec(
        classes[key],
        S,
        Sinusoid(float(load), float(load), "sin"),
        Sinusoid(3.0, 1.0, "cos"),
    )


__all__ = [
    "Constant",
    "ConfigError",
    "DomainError",
    "ModelSpec",
    "PiecewiseConstant",
    "Product",
    "Shifted",
    "Sinusoid",
    "StateRule",
    "Sum",
    "TimeFunction",
    "eval_lambda",
    "eval_mu",
    "local_bound_L",
    "outflow_weights",
    "preset_case",
    "time_function",
]
