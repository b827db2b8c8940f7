"""Command-line front end.

Every subcommand writes its data files plus ``manifest.json`` into
``--out``. Settings come from built-in defaults, then ``--config FILE``
(a JSON object), then explicit flags.

Exit codes: 0 success, 1 verification failure, 2 configuration or I/O
error, 3 numerical failure (step underflow).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analyze import (
    DEFAULT_SEED,
    bisect_heteroclinic,
    classify,
    sweep_unstable,
    verify_suite,
)
from .equilibria import DEFAULT_DELTA, unstable_local
from .integrate import Termination, Tolerances, Trajectory, integrate, integrate_both
from .phase_core import DomainError, PhasePoint, SolitonParams
from .reconstruct import hamilton_identity, reconstruct_profile

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class RunConfig:
    n: int = 2
    lam: float = 1.0
    steady: bool = False
    start: list[float] | None = None
    theta: float | None = None
    delta: float = DEFAULT_DELTA
    t0: float = 0.0
    t1: float = 10.0
    rtol: float = 1e-10
    atol: float = 1e-12
    seed: int = DEFAULT_SEED
    out: str = "."
    count: int = 31
    theta_range: list[float] | None = None
    iters: int = 60
    samples: int = 100
    points: int | None = None
    workers: int = 1
    gnuplot: bool = False
    defaulted: list[str] = field(default_factory=list, compare=False)

    # JSON key -> attribute
    ALIASES = {"lambda": "lam"}

    def params(self) -> SolitonParams:
        try:
            return SolitonParams(self.n, self.lam, self.steady)
        except DomainError as exc:
            key = "n" if "n must" in str(exc) else "lambda"
            raise ConfigError(key, str(exc)) from None

    def tolerances(self) -> Tolerances:
        try:
            return Tolerances(self.rtol, self.atol)
        except DomainError as exc:
            raise ConfigError("rtol" if "rtol" in str(exc) else "atol", str(exc)) from None

    def resolved(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("defaulted", "out")}
        d["lambda"] = d.pop("lam")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_TYPES: dict[str, tuple] = {
    "n": (int,),
    "lam": (int, float),
    "steady": (bool,),
    "start": (list,),
    "theta": (int, float),
    "delta": (int, float),
    "t0": (int, float),
    "t1": (int, float),
    "rtol": (int, float),
    "atol": (int, float),
    "seed": (int,),
    "out": (str,),
    "count": (int,),
    "theta_range": (list,),
    "iters": (int,),
    "samples": (int,),
    "points": (int,),
    "workers": (int,),
    "gnuplot": (bool,),
}


def _check_value(key: str, attr: str, value):
    if value is None and attr in ("start", "theta", "theta_range", "points"):
        return None
    types = _TYPES[attr]
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(key, f"expected {types[0].__name__}, got {value!r}")
    if not isinstance(value, types):
        raise ConfigError(key, f"expected {types[0].__name__}, got {value!r}")
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    if attr == "start":
        if len(value) != 3 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in value
        ):
            raise ConfigError(key, "expected three finite numbers [omega, x, y]")
        if value[0] < 0:
            raise ConfigError(key, "omega must be >= 0")
        return [float(v) for v in value]
    if attr == "theta_range":
        if len(value) != 2 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(key, "expected two numbers [lo, hi]")
        return [float(v) for v in value]
    if attr in ("count", "iters", "samples", "points", "workers") and value < 1:
        raise ConfigError(key, "must be >= 1")
    if attr == "delta" and not (0.0 < value <= 1e-4):
        raise ConfigError(key, "must lie in (0, 1e-4]")
    if attr in ("lam", "delta", "t0", "t1", "theta", "rtol", "atol"):
        return float(value)
    return value


def build_config(file_values: dict[str, Any] | None, flag_values: dict[str, Any]) -> RunConfig:
    """Defaults, overridden by the config file, overridden by flags."""
    cfg = RunConfig()
    given: set[str] = set()
    for source in (file_values or {}, flag_values):
        for key, value in source.items():
            attr = RunConfig.ALIASES.get(key, key)
            if attr not in _TYPES:
                raise ConfigError(key, "unknown setting")
            setattr(cfg, attr, _check_value(key, attr, value))
            given.add(attr)
    cfg.defaulted = sorted(f.name for f in fields(cfg) if f.name not in given and f.name != "defaulted")
    if cfg.t0 == cfg.t1:
        raise ConfigError("t1", "must differ from t0")
    cfg.params()
    cfg.tolerances()
    return cfg


def _load_file(path: str) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return data


# -- output ----------------------------------------------------------------------


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray], gnuplot: bool = False):
    cols = [np.asarray(c, dtype=float) for c in columns]
    sep = " " if gnuplot else ","
    lines = [("# " if gnuplot else "") + sep.join(header)]
    for row in zip(*cols):
        lines.append(sep.join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _manifest(cfg: RunConfig, command: str, extra: dict[str, Any]) -> dict[str, Any]:
    return {
        "tool": "solitonlab",
        "version": __version__,
        "command": command,
        "config": cfg.resolved(),
        "config_hash": cfg.digest(),
        "defaulted": cfg.defaulted,
        **extra,
    }


def _write_json(path: Path, data: dict[str, Any]):
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(f"not serialisable: {obj!r}")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("out", f"cannot write to {out}: {exc.strerror}") from None
    return out


def _traj_columns(traj: Trajectory):
    t, s = traj.sorted()
    return ["t", "omega", "x", "y", "r", "f"], [t, *s.T]


def _traj_meta(traj: Trajectory) -> dict[str, Any]:
    return {
        "termination": traj.termination.value,
        "start_termination": traj.start_termination.value if traj.start_termination else None,
        "t_span": list(traj.t_span),
        "samples": len(traj.t),
        "events": [{"t": e.t, "event": str(e.spec)} for e in traj.events],
    }


def _initial(cfg: RunConfig, params: SolitonParams):
    if cfg.start is not None:
        try:
            p = PhasePoint(*cfg.start)
        except DomainError as exc:
            raise ConfigError("start", str(exc)) from None
        if params.steady and p.omega != 0.0:
            raise ConfigError("start", "steady runs need omega = 0")
        return p
    if cfg.theta is not None:
        try:
            return unstable_local(params, cfg.theta, cfg.delta)
        except DomainError as exc:
            raise ConfigError("theta", str(exc)) from None
    raise ConfigError("start", "give a start point (--start) or a seed angle (--theta)")


def _numeric_status(*trajs: Trajectory) -> int:
    bad = any(
        t.termination is Termination.UNDERFLOW or t.start_termination is Termination.UNDERFLOW
        for t in trajs
    )
    return EXIT_NUMERIC if bad else EXIT_OK


# -- commands ----------------------------------------------------------------------


def cmd_integrate(cfg: RunConfig) -> int:
    params, tol = cfg.params(), cfg.tolerances()
    start = _initial(cfg, params)
    out = _out_dir(cfg)
    traj = integrate(params, start, (cfg.t0, cfg.t1), tol)
    header, cols = _traj_columns(traj)
    write_table(out / "trajectory.csv", header, cols, cfg.gnuplot)
    _write_json(out / "manifest.json", _manifest(cfg, "integrate", {"trajectory": _traj_meta(traj)}))
    return _numeric_status(traj)


def _two_sided(cfg: RunConfig, params, tol, start) -> Trajectory:
    horizon = max(abs(cfg.t0), abs(cfg.t1))
    return integrate_both(params, start, horizon, horizon, tol)


def cmd_classify(cfg: RunConfig) -> int:
    params, tol = cfg.params(), cfg.tolerances()
    start = _initial(cfg, params)
    out = _out_dir(cfg)
    traj = _two_sided(cfg, params, tol, start)
    c = classify(traj)
    result = {"tag": c.tag.value, "evidence": [[k, v] for k, v in c.evidence]}
    _write_json(
        out / "manifest.json",
        _manifest(cfg, "classify", {"classification": result, "trajectory": _traj_meta(traj)}),
    )
    print(c.tag.value)
    return _numeric_status(traj)


def cmd_reconstruct(cfg: RunConfig) -> int:
    params, tol = cfg.params(), cfg.tolerances()
    start = _initial(cfg, params)
    out = _out_dir(cfg)
    traj = integrate(params, start, (cfg.t0, cfg.t1), tol)
    try:
        prof = reconstruct_profile(traj, 0.0, points=cfg.points)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    ident = hamilton_identity(params, prof)
    cols = prof.columns()
    write_table(
        out / "profile.csv",
        [*cols.keys(), "identity"],
        [*cols.values(), ident],
        cfg.gnuplot,
    )
    _write_json(
        out / "manifest.json",
        _manifest(
            cfg,
            "reconstruct",
            {"trajectory": _traj_meta(traj), "identity_spread": float(np.ptp(ident))},
        ),
    )
    return _numeric_status(traj)


def cmd_sweep(cfg: RunConfig) -> int:
    params, tol = cfg.params(), cfg.tolerances()
    if cfg.count < 2:
        raise ConfigError("count", "sweep needs count >= 2")
    out = _out_dir(cfg)
    rng = tuple(cfg.theta_range) if cfg.theta_range else None
    results = sweep_unstable(
        params, rng, cfg.count, cfg.delta, horizon=max(cfg.t1, 1.0), tolerances=tol, workers=cfg.workers
    )
    lines = ["theta,tag"] + [f"{_fmt(th)},{c.tag.value}" for th, c in results]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    tags: dict[str, int] = {}
    for _, c in results:
        tags[c.tag.value] = tags.get(c.tag.value, 0) + 1
    _write_json(out / "manifest.json", _manifest(cfg, "sweep", {"tags": tags}))
    return EXIT_OK


def cmd_bisect(cfg: RunConfig) -> int:
    params, tol = cfg.params(), cfg.tolerances()
    out = _out_dir(cfg)
    lo, hi = (cfg.theta_range or [None, None])
    try:
        res = bisect_heteroclinic(params, lo, hi, cfg.iters, delta=cfg.delta, tolerances=tol)
    except DomainError as exc:
        raise ConfigError("theta_range", str(exc)) from None
    header, cols = _traj_columns(res.trajectory)
    write_table(out / "trajectory.csv", header, cols, cfg.gnuplot)
    result = {
        "theta": res.theta,
        "iterations": res.iterations,
        "bracket": list(res.bracket),
        "ellipse_deviation": res.ellipse_deviation,
        "ellipse_y_deviation": res.ellipse_y_deviation,
        "distance_to_p1": res.distance_to_p1,
    }
    _write_json(
        out / "manifest.json",
        _manifest(cfg, "bisect", {"bisection": result, "trajectory": _traj_meta(res.trajectory)}),
    )
    print(f"theta* = {res.theta!r}  ellipse deviation = {res.ellipse_deviation:.3g}")
    return _numeric_status(res.trajectory)


def cmd_verify(cfg: RunConfig) -> int:
    params, tol = cfg.params(), cfg.tolerances()
    out = _out_dir(cfg)
    reports = verify_suite(params, seed=cfg.seed, samples=cfg.samples, tolerances=tol, workers=cfg.workers)
    passed = all(r.passed for r in reports)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}")
    _write_json(
        out / "verify.json",
        _manifest(cfg, "verify", {"passed": passed, "checks": [r.as_dict() for r in reports]}),
    )
    return EXIT_OK if passed else EXIT_VERIFY


COMMANDS = {
    "integrate": cmd_integrate,
    "sweep": cmd_sweep,
    "bisect": cmd_bisect,
    "classify": cmd_classify,
    "reconstruct": cmd_reconstruct,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="solitonlab",
        description="Phase-space tools for rotationally symmetric shrinking Ricci solitons.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", metavar="FILE", help="JSON settings; flags override it")
    common.add_argument("--n", type=int, default=S, help="sphere dimension (>= 2)")
    common.add_argument("--lambda", dest="lambda", type=float, default=S, help="shrinking constant")
    common.add_argument("--steady", action="store_true", default=S, help="restrict to omega = 0, lambda = 0")
    common.add_argument("--start", nargs=3, type=float, metavar=("OMEGA", "X", "Y"), default=S)
    common.add_argument("--theta", type=float, default=S, help="seed angle at P0")
    common.add_argument("--delta", type=float, default=S, help="seed distance from P0")
    common.add_argument("--t0", type=float, default=S)
    common.add_argument("--t1", type=float, default=S)
    common.add_argument("--rtol", type=float, default=S)
    common.add_argument("--atol", type=float, default=S)
    common.add_argument("--seed", type=int, default=S, help="random seed for the verify suite")
    common.add_argument("--out", metavar="DIR", default=S, help="output directory")
    common.add_argument("--count", type=int, default=S, help="sweep size")
    common.add_argument("--theta-range", dest="theta_range", nargs=2, type=float, default=S)
    common.add_argument("--iters", type=int, default=S, help="bisection iterations")
    common.add_argument("--samples", type=int, default=S, help="random starts per verify check")
    common.add_argument("--points", type=int, default=S, help="uniform profile grid size")
    common.add_argument("--workers", type=int, default=S, help="worker processes")
    common.add_argument("--gnuplot", action="store_true", default=S, help="space-separated output")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    if "start" in args:
        args["start"] = list(args["start"])
    if "theta_range" in args:
        args["theta_range"] = list(args["theta_range"])
    try:
        file_values = _load_file(config_path) if config_path else None
        cfg = build_config(file_values, args)
        return COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
