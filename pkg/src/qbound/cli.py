"""Command-line front end.

Exit codes: 0 when the run certifies (or agrees), 2 when it is inconclusive
or an oracle disagrees, 1 on any error.  Output files are assembled in
memory and written only after the command has finished.
"""

from __future__ import annotations

import argparse
import io
import itertools
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bounds import UnsupportedModeError, analyze
from .config import RunConfig, load_config
from .dseq import DSequence
from .generator import dump_csv, rate_matrices
from .intensity import ConfigError, DomainError
from .kolmogorov import LimitingCharacteristics, SolverError, TruncationError, limiting_regime, solve
from .simulate import DominatingRateError, SimConfig, compare_to_ode, simulate

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2

MEAN_GAP_TOL = 1e-3
P0_GAP_MIN = 0.02


class Outputs:
    """Files collected in memory and committed together."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.files: dict[str, str] = {}

    def header(self) -> str:
        m = self.cfg.model
        return (
            f"# qbound {__version__}\n# command: {self.command}\n# config_hash: {self.cfg.config_hash}\n"
            f"# class: {m.class_tag}\n# S: {m.S}\n"
            f"# lambda: {json.dumps(m.lambda_base.to_dict(), sort_keys=True)}\n"
            f"# mu: {json.dumps(m.mu_base.to_dict(), sort_keys=True)}\n"
        )

    def csv(self, name: str, columns: Sequence[str], rows, extra: dict[str, Any] | None = None) -> None:
        if "csv" not in self.cfg.outputs.formats:
            return
        buf = io.StringIO()
        buf.write(self.header())
        for k, v in (extra or {}).items():
            buf.write(f"# {k}: {v}\n")
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(_fmt(x) for x in row) + "\n")
        self.files[name] = buf.getvalue()

    def json(self, name: str, payload: dict[str, Any]) -> None:
        if "json" not in self.cfg.outputs.formats:
            return
        doc = {
            "meta": {"version": __version__, "command": self.command, "config_hash": self.cfg.config_hash},
            "config": self.cfg.to_dict(),
            **payload,
        }
        self.files[name] = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"

    def raw(self, name: str, text: str) -> None:
        self.files[name] = text

    def commit(self) -> Path:
        out = Path(self.cfg.outputs.directory)
        out.mkdir(parents=True, exist_ok=True)
        staged = []
        try:
            for name, text in self.files.items():
                fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.")
                with os.fdopen(fd, "w") as fh:
                    fh.write(text)
                staged.append((tmp, out / name))
            for tmp, final in staged:
                os.replace(tmp, final)
        finally:
            for tmp, _ in staged:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        return out


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _need_d(cfg: RunConfig) -> DSequence:
    if cfg.dsequence is None:
        raise ConfigError("this command needs a 'dsequence' block (a preset name or {head, tail_ratio})")
    return cfg.dsequence


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_bounds(cfg: RunConfig, out: Outputs) -> int:
    d = _need_d(cfg)
    report = analyze(cfg.model, d, cfg.bounds.J_max, cfg.bounds.quad_tol)
    curves = report.curves(cfg.outputs.resolution, cfg.bounds.t_max)
    out.json("report.json", {"bounds": report.to_dict()})
    out.csv(
        "rates.csv",
        ["t", "alpha", "beta", "chi"],
        zip(curves["t_period"], curves["alpha"], curves["beta"], curves["chi"]),
        {"J_max": report.J_max},
    )
    if "t_bound" in curves:
        pc = report.periodic
        out.csv(
            "corollary_curves.csv",
            ["t", "tv_bound", "mean_bound"],
            zip(curves["t_bound"], curves["corollary_tv"], curves["corollary_mean"]),
            {"a": _fmt(pc.a), "R": _fmt(pc.R), "F": _fmt(pc.F)},
        )
    _say(f"verdict: {report.verdict}")
    if report.periodic is not None:
        pc = report.periodic
        _say(f"a = {pc.a:.10g}  K = {pc.K:.10g}  R = {pc.R:.10g}  F = {pc.F:.10g}")
    for note in report.notes:
        _say(f"note: {note}")
    return EXIT_OK if report.certified else EXIT_INCONCLUSIVE


def _limits(cfg: RunConfig) -> LimitingCharacteristics:
    tr, so = cfg.truncation, cfg.solver
    return limiting_regime(
        cfg.model,
        tol_truncation=tr.tolerance,
        t_star=so.t_star,
        solver_tol=so.tol,
        N_start=tr.N_initial,
        N_cap=tr.N_cap,
        samples=cfg.outputs.resolution,
        overflow=tr.overflow,
        auto_t_star=so.auto_t_star,
    )


def _limit_meta(lc: LimitingCharacteristics, cfg: RunConfig) -> dict[str, Any]:
    return {
        "N_used": lc.N_used,
        "N_compared": lc.N_compared,
        "window": f"[{_fmt(lc.window[0])}, {_fmt(lc.window[1])}]",
        "truncation_error_estimate": _fmt(lc.truncation_error_estimate),
        "truncation_tolerance": _fmt(cfg.truncation.tolerance),
        "solver_tol": _fmt(cfg.solver.tol),
    }


def cmd_limits(cfg: RunConfig, out: Outputs) -> int:
    lc = _limits(cfg)
    meta = _limit_meta(lc, cfg)
    out.csv("p0_curve.csv", ["t", "p0"], zip(lc.times, lc.p0_curve), meta)
    out.csv("mean_curve.csv", ["t", "mean"], zip(lc.times, lc.mean_curve), meta)
    out.json("limits.json", {"limits": lc.to_dict()})
    _say(f"window [{lc.window[0]:g}, {lc.window[1]:g}], N = {lc.N_used}, truncation error {lc.truncation_error_estimate:.3g}")
    return EXIT_OK if lc.within_tolerance else EXIT_INCONCLUSIVE


class ClassRunError(RuntimeError):
    """One class of a cross-class comparison failed."""


def _limits_for_class(args) -> tuple[str, LimitingCharacteristics]:
    cfg, tag = args
    try:
        return tag, _limits(replace(cfg, model=cfg.model.with_class(tag)))
    except Exception as exc:
        raise ClassRunError(f"class {tag}: {exc}") from None


def compare_classes(cfg: RunConfig, workers: int = 4) -> dict[str, Any]:
    """Limiting curves for classes I-IV on the same base intensities, pairwise sup gaps."""
    tags = ("I", "II", "III", "IV")
    jobs = [(cfg, t) for t in tags]
    results: dict[str, LimitingCharacteristics] = {}
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results.update(pool.map(_limits_for_class, jobs))
    else:
        results.update(map(_limits_for_class, jobs))
    pairs = []
    windows = {tuple(lc.window) for lc in results.values()}
    for a, b in itertools.combinations(tags, 2):
        A, B = results[a], results[b]
        level = float(np.mean(np.concatenate([A.mean_curve, B.mean_curve])))
        mean_gap = float(np.abs(A.mean_curve - B.mean_curve).max()) if len(windows) == 1 else math.nan
        p0_gap = float(np.abs(A.p0_curve - B.p0_curve).max()) if len(windows) == 1 else math.nan
        pairs.append(
            {
                "pair": f"{a}-{b}",
                "mean_gap": mean_gap,
                "mean_gap_relative": mean_gap / level if level > 0 else mean_gap,
                "p0_gap": p0_gap,
            }
        )
    rel = [p["mean_gap_relative"] for p in pairs]
    p0 = [p["p0_gap"] for p in pairs]
    return {
        "classes": {t: results[t].to_dict() for t in tags},
        "curves": {t: (results[t].times, results[t].p0_curve, results[t].mean_curve) for t in tags},
        "pairs": pairs,
        "means_coincide": bool(len(windows) == 1 and max(rel) < MEAN_GAP_TOL),
        "p0_diverge": bool(len(windows) == 1 and max(p0) > P0_GAP_MIN),
        "same_window": len(windows) == 1,
    }


def cmd_compare_classes(cfg: RunConfig, out: Outputs) -> int:
    res = compare_classes(cfg)
    rows = [(p["pair"], p["mean_gap"], p["mean_gap_relative"], p["p0_gap"]) for p in res["pairs"]]
    if "csv" in cfg.outputs.formats:
        buf = io.StringIO()
        buf.write(out.header())
        buf.write(f"# mean_gap_tolerance: {MEAN_GAP_TOL}\n# p0_gap_minimum: {P0_GAP_MIN}\n")
        buf.write("pair,mean_gap,mean_gap_relative,p0_gap\n")
        for r in rows:
            buf.write(r[0] + "," + ",".join(_fmt(x) for x in r[1:]) + "\n")
        out.raw("class_gaps.csv", buf.getvalue())
        for tag, (t, p0, mean) in res["curves"].items():
            out.csv(f"class_{tag}_curves.csv", ["t", "p0", "mean"], zip(t, p0, mean))
    payload = {k: v for k, v in res.items() if k != "curves"}
    payload["tolerances"] = {"mean_gap_relative": MEAN_GAP_TOL, "p0_gap_minimum": P0_GAP_MIN}
    out.json("compare_classes.json", payload)
    for r in rows:
        _say(f"{r[0]:>7}: mean gap {r[1]:.3e} (relative {r[2]:.3e}), p0 gap {r[3]:.3e}")
    _say(f"means coincide: {res['means_coincide']}, p0 curves diverge: {res['p0_diverge']}")
    return EXIT_OK if res["means_coincide"] and res["p0_diverge"] else EXIT_INCONCLUSIVE


def cmd_simulate(cfg: RunConfig, out: Outputs) -> int:
    sim = cfg.simulation
    t_star = cfg.solver.t_star
    grid = sim.grid or tuple(t_star + np.linspace(0.0, 1.0, 5))
    N = cfg.truncation.N_initial
    sc = SimConfig(sim.paths, sim.seed, grid, N, overflow=cfg.truncation.overflow, workers=sim.workers)
    emp = simulate(cfg.model, sc)
    traj = solve(cfg.model, N, None, (0.0, grid[-1]), cfg.solver.tol, np.asarray(grid), cfg.truncation.overflow)
    rep = compare_to_ode(emp, traj, sim.threshold)
    out.csv("empirical.csv", ["t", "state", "count", "p_hat", "se"], emp.rows(), {"paths": sim.paths, "seed": sim.seed, "N": N})
    out.json("simulation.json", {"comparison": rep.to_dict(), "sampler": emp.stats})
    _say(f"max |z| = {rep.max_abs_z:.3f} (threshold {rep.threshold:.3f}): {'agree' if rep.passed else 'MISMATCH'}")
    return EXIT_OK if rep.passed else EXIT_INCONCLUSIVE


def cmd_matrices(cfg: RunConfig, out: Outputs, t: float, which: Sequence[str]) -> int:
    d = cfg.dsequence or DSequence((1.0,), 1.0)
    mats = rate_matrices(cfg.model, d, cfg.truncation.N_initial, t, cfg.truncation.overflow)
    for name in which:
        buf = io.StringIO()
        buf.write(out.header())
        dump_csv(mats, cfg.model, buf, name)
        out.raw(f"{name}.csv", buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _say(msg: str) -> None:
    print(msg, flush=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbound", description="Ergodicity bounds and limiting regimes for inhomogeneous queues.")
    p.add_argument("--version", action="version", version=f"qbound {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("config", nargs="?", help="JSON run config (optional when --preset is given)")
        sp.add_argument("--preset", help="model preset case-i .. case-iv (used without a config file)")
        sp.add_argument("--load", type=float, default=10.0, help="preset arrival level i in lambda = i (1 + sin 2 pi t)")
        sp.add_argument("--dseq", help="d-sequence preset name, e.g. paper-S100")
        sp.add_argument("--N", type=int, help="initial truncation size")
        sp.add_argument("--t-star", type=float, dest="t_star", help="start of the limiting window")
        sp.add_argument("--seed", type=int, help="simulation seed")
        sp.add_argument("--paths", type=int, help="number of simulated paths")
        sp.add_argument("--out", help="output directory")

    for name, helptext in (
        ("bounds", "ergodicity verdict, periodic constants and bound curves"),
        ("limits", "limiting p0(t) and mean on [t*, t*+1]"),
        ("compare-classes", "limiting curves of classes I-IV on shared intensities"),
        ("simulate", "Monte-Carlo cross-check against the ODE solution"),
        ("matrices", "dump A(t), B(t) or D B(t) D^-1 as CSV"),
    ):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        if name == "matrices":
            sp.add_argument("--t", type=float, default=0.0, help="time at which to evaluate")
            sp.add_argument("--which", nargs="+", default=["A", "B", "Bstar"], choices=["A", "B", "Bstar"])
    return p


def _config_from_args(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.preset:
            raise ConfigError("give either a config file or --preset, not both")
    elif args.preset:
        data: dict[str, Any] = {"model": {"preset": args.preset, "load": args.load}}
        if args.dseq:
            data["dsequence"] = args.dseq
        cfg = RunConfig.from_dict(data)
    else:
        raise ConfigError("a config file or --preset is required")
    if args.config and args.dseq:
        cfg = replace(cfg, dsequence=DSequence.parse(args.dseq))
    return cfg.with_overrides(args.N, args.t_star, args.seed, args.out, args.paths)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        out = Outputs(cfg, args.command)
        if args.command == "bounds":
            code = cmd_bounds(cfg, out)
        elif args.command == "limits":
            code = cmd_limits(cfg, out)
        elif args.command == "compare-classes":
            code = cmd_compare_classes(cfg, out)
        elif args.command == "simulate":
            code = cmd_simulate(cfg, out)
        else:
            code = cmd_matrices(cfg, out, args.t, args.which)
        where = out.commit()
        _say(f"wrote {len(out.files)} file(s) to {where}")
        return code
    except (
        ConfigError,
        DomainError,
        UnsupportedModeError,
        SolverError,
        TruncationError,
        DominatingRateError,
        ClassRunError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
