"""Run configuration: one JSON document per run, validated before any work."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .dseq import DSequence
from .generator import OVERFLOW_MODES
from .intensity import ConfigError, ModelSpec


def _block(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown fields in '{name}': {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad '{name}' block: {exc}") from None


def _positive(value, name: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")


@dataclass(frozen=True)
class TruncationConfig:
    N_initial: int = 155
    tolerance: float = 1e-4
    N_cap: int = 4096
    overflow: str = "drop"

    def __post_init__(self) -> None:
        _positive(self.N_initial, "truncation.N_initial", integer=True)
        _positive(self.N_cap, "truncation.N_cap", integer=True)
        _positive(self.tolerance, "truncation.tolerance")
        if self.overflow not in OVERFLOW_MODES:
            raise ConfigError(f"truncation.overflow must be one of {OVERFLOW_MODES}")
        if self.N_cap < self.N_initial:
            raise ConfigError("truncation.N_cap must be >= N_initial")


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    t_star: float = 5.0
    auto_t_star: bool = True

    def __post_init__(self) -> None:
        _positive(self.tol, "solver.tol")
        _positive(self.t_star, "solver.t_star")
        if self.t_star < 1:
            raise ConfigError("solver.t_star must be >= 1")
        if not isinstance(self.auto_t_star, bool):
            raise ConfigError("solver.auto_t_star must be true or false")


@dataclass(frozen=True)
class SimulationConfig:
    paths: int = 10000
    seed: int = 0
    grid: tuple[float, ...] | None = None
    threshold: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        _positive(self.paths, "simulation.paths", integer=True)
        _positive(self.workers, "simulation.workers", integer=True)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("simulation.seed must be a non-negative integer")
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(float(t) for t in self.grid))
        if self.threshold is not None:
            _positive(self.threshold, "simulation.threshold")


@dataclass(frozen=True)
class BoundsConfig:
    J_max: int | None = None
    quad_tol: float = 1e-10
    t_max: float = 5.0

    def __post_init__(self) -> None:
        if self.J_max is not None:
            _positive(self.J_max, "bounds.J_max", integer=True)
        _positive(self.quad_tol, "bounds.quad_tol")
        _positive(self.t_max, "bounds.t_max")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "qbound-out"
    formats: tuple[str, ...] = ("json", "csv")
    resolution: int = 201

    def __post_init__(self) -> None:
        object.__setattr__(self, "formats", tuple(self.formats))
        bad = set(self.formats) - {"json", "csv"}
        if bad:
            raise ConfigError(f"outputs.formats accepts 'json' and 'csv', got {sorted(bad)}")
        _positive(self.resolution, "outputs.resolution", integer=True)
        if self.resolution < 2:
            raise ConfigError("outputs.resolution must be >= 2")


_TOP = ("model", "dsequence", "truncation", "solver", "simulation", "bounds", "outputs")


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    dsequence: DSequence | None = None
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(data) - set(_TOP)
        if extra:
            raise ConfigError(f"unknown top-level fields: {sorted(extra)}")
        if "model" not in data:
            raise ConfigError("config needs a 'model' block")
        d = data.get("dsequence")
        return cls(
            ModelSpec.from_dict(data["model"]),
            None if d is None else DSequence.parse(d),
            _block(TruncationConfig, data.get("truncation"), "truncation"),
            _block(SolverConfig, data.get("solver"), "solver"),
            _block(SimulationConfig, data.get("simulation"), "simulation"),
            _block(BoundsConfig, data.get("bounds"), "bounds"),
            _block(OutputConfig, data.get("outputs"), "outputs"),
        )

    def to_dict(self) -> dict[str, Any]:
        def plain(block) -> dict[str, Any]:
            out = asdict(block)
            return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

        out: dict[str, Any] = {"model": self.model.to_dict()}
        if self.dsequence is not None:
            out["dsequence"] = self.dsequence.to_spec()
        out["truncation"] = plain(self.truncation)
        out["solver"] = plain(self.solver)
        out["simulation"] = plain(self.simulation)
        out["bounds"] = plain(self.bounds)
        out["outputs"] = plain(self.outputs)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def config_hash(self) -> str:
        """Digest of everything that affects results (the output directory does not)."""
        data = self.to_dict()
        data["outputs"].pop("directory")
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(
        self,
        N: int | None = None,
        t_star: float | None = None,
        seed: int | None = None,
        out: str | None = None,
        paths: int | None = None,
    ) -> "RunConfig":
        cfg = self
        if N is not None:
            cfg = replace(cfg, truncation=replace(cfg.truncation, N_initial=N, N_cap=max(cfg.truncation.N_cap, N)))
        if t_star is not None:
            cfg = replace(cfg, solver=replace(cfg.solver, t_star=t_star))
        if seed is not None:
            cfg = replace(cfg, simulation=replace(cfg.simulation, seed=seed))
        if paths is not None:
            cfg = replace(cfg, simulation=replace(cfg.simulation, paths=paths))
        if out is not None:
            cfg = replace(cfg, outputs=replace(cfg.outputs, directory=out))
        return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(data)
