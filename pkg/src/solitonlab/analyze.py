"""Numerical checks of the qualitative dynamics, classification and shooting.

Every check returns a :class:`CheckReport`. Randomised checks take a
``seed`` that is recorded in the report, and the ``workers`` knob fans
member runs out over a process pool (serial by default).
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .equilibria import (
    DEFAULT_DELTA,
    departure_angle,
    flat_departure,
    sphere_departure,
    unstable_local,
)
from .integrate import (
    EventSpec,
    Termination,
    Tolerances,
    Trajectory,
    integrate,
    integrate_both,
    join,
)
from .phase_core import (
    Atom,
    DomainError,
    PhasePoint,
    Region,
    SolitonParams,
    reflect,
    x_velocity,
)

__all__ = [
    "Tag",
    "Classification",
    "Verdict",
    "CompletenessVerdict",
    "CheckReport",
    "BisectionResult",
    "LEMMA_REGIONS",
    "lemma_regions",
    "sample_region",
    "random_trajectories",
    "classify_forward",
    "check_region_preserved",
    "check_Q_monotone",
    "check_x_sign_propagation",
    "check_blowup_bound",
    "check_y_divergence",
    "check_invariant_loci",
    "check_reflection_duality",
    "check_no_negative_tail",
    "estimate_completeness",
    "classify",
    "kappa_thetas",
    "seed_tolerances",
    "sweep_unstable",
    "bisect_heteroclinic",
    "verify_suite",
    "DEFAULT_SEED",
]

DEFAULT_SEED = 20240607
POLE_RADIUS = 1e-4
R_BOUND = 1e3


class Tag(str, Enum):
    ROUND_SPHERE = "RoundSphere"
    GAUSSIAN_FLAT = "GaussianFlat"
    REVERSED_GAUSSIAN = "ReversedGaussian"
    CYLINDER = "Cylinder"
    INCOMPLETE_BLOWUP = "IncompleteBlowup"
    INCOMPLETE_COLLAPSE = "IncompleteCollapse"
    UNDETERMINED = "Undetermined"

    def reflected(self) -> "Tag":
        """Image under reflection combined with time reversal."""
        swap = {
            Tag.GAUSSIAN_FLAT: Tag.REVERSED_GAUSSIAN,
            Tag.REVERSED_GAUSSIAN: Tag.GAUSSIAN_FLAT,
        }
        return swap.get(self, self)


@dataclass(frozen=True)
class Classification:
    tag: Tag
    evidence: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.tag is not Tag.UNDETERMINED and not self.evidence:
            raise DomainError("a definite classification needs evidence")


class Verdict(str, Enum):
    INFINITE = "InfiniteLength"
    POLE = "FiniteLengthPole"
    BLOWUP = "FiniteLengthBlowup"
    COLLAPSE = "FiniteLengthCollapse"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class CompletenessVerdict:
    direction: str
    verdict: Verdict
    r_estimate: float
    termination: Termination | None = None

    def __post_init__(self):
        if self.verdict is Verdict.BLOWUP and self.termination is not Termination.BLOWUP:
            raise DomainError("FiniteLengthBlowup requires a BlowupDetected termination")


@dataclass
class CheckReport:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    seed: int | None = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "seed": self.seed,
            "details": _jsonable(self.details),
            "failures": list(self.failures),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Map ``fn`` over ``items``, in worker processes when ``workers > 1``."""
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- regions -------------------------------------------------------------------


def lemma_regions() -> tuple[Region, ...]:
    """The three forward-invariant regions and their backward mirrors."""
    fwd = (
        Region(
            (Atom("x", ">=", 1.0), Atom("dxdt", ">=", 0.0)),
            1,
            "A",
            ((0.1, 2.0), (1.0, 3.0), (-5.0, 5.0)),
        ),
        Region(
            (Atom("x", "<=", -1.0), Atom("dxdt", "<=", 0.0)),
            1,
            "B",
            ((0.1, 2.0), (-3.0, -1.0), (-5.0, 5.0)),
        ),
        Region((Atom("y", "<=", 0.0),), 1, "C", ((0.1, 2.0), (-2.0, 2.0), (-5.0, 0.0))),
    )
    return fwd + tuple(r.reflect() for r in fwd)


LEMMA_REGIONS = lemma_regions()


def sample_region(
    params: SolitonParams, region: Region, count: int, rng: np.random.Generator
) -> np.ndarray:
    """``count`` uniform points of ``region.box`` satisfying all atoms (rejection)."""
    if region.box is None:
        raise DomainError(f"region {region} has no sampling box")
    lo = np.array([b[0] for b in region.box])
    hi = np.array([b[1] for b in region.box])
    out = np.empty((0, 3))
    for _ in range(1000):
        cand = rng.uniform(lo, hi, size=(4 * count, 3))
        keep = region.margin(params, cand[:, 0], cand[:, 1], cand[:, 2]) >= 0.0
        out = np.vstack([out, cand[keep]])
        if len(out) >= count:
            return out[:count]
    raise DomainError(f"region {region} is (nearly) empty inside its box")


def _atom_slack(params: SolitonParams, atom: Atom, omega, x, y):
    if atom.quantity == "dxdt":
        scale = 1.0 + x * x + np.abs(x * y) + params.lam * omega * omega + params.n
    else:
        scale = 1.0 + np.abs({"omega": omega, "x": x, "y": y}[atom.quantity])
    return 1e-9 * scale


def _region_run(args) -> dict:
    params, region, start, horizon, tolerances = args
    traj = integrate(params, start, (0.0, region.direction * horizon), tolerances)
    grid = traj.fine_grid()
    s = traj(grid)
    omega, x, y = s[:, 0], s[:, 1], s[:, 2]
    worst = np.inf
    exited = False
    for atom in region.atoms:
        vals = x_velocity(params, omega, x, y) if atom.quantity == "dxdt" else {
            "omega": omega, "x": x, "y": y}[atom.quantity]
        m = atom.margin(vals)
        slack = _atom_slack(params, atom, omega, x, y)
        exited |= bool(np.any(m < -slack))
        worst = min(worst, float(np.min(m / slack)))
    return {
        "start": tuple(float(v) for v in start),
        "exited": exited,
        "termination": traj.termination,
        "worst_scaled_margin": worst,
    }


def check_region_preserved(
    params: SolitonParams,
    region: Region,
    samples: int = 100,
    horizon: float = 5.0,
    *,
    seed: int = DEFAULT_SEED,
    tolerances: Tolerances | None = None,
    workers: int = 1,
) -> CheckReport:
    """Integrate ``samples`` random starts inside ``region`` in its direction.

    An exit is any point of the dense output (sampled eight times per
    step) whose margin falls below ``-1e-9`` times the size of the atom's
    terms.
    """
    rng = np.random.default_rng([seed, zlib.crc32(f"{region}{region.direction}".encode())])
    starts = sample_region(params, region, samples, rng)
    runs = _pmap(
        _region_run, [(params, region, s, horizon, tolerances) for s in starts], workers
    )
    exits = [r for r in runs if r["exited"]]
    terminations: dict[str, int] = {}
    for r in runs:
        terminations[r["termination"].value] = terminations.get(r["termination"].value, 0) + 1
    return CheckReport(
        name=f"region_preserved {region.name or ''} {region}".replace("  ", " "),
        passed=not exits,
        details={
            "direction": region.direction,
            "samples": samples,
            "horizon": horizon,
            "exits": len(exits),
            "terminations": terminations,
            "min_scaled_margin": min(r["worst_scaled_margin"] for r in runs),
        },
        failures=[f"exit from start {r['start']}" for r in exits],
        seed=seed,
    )


# -- Q monotonicity ------------------------------------------------------------


def check_Q_monotone(traj: Trajectory, slack: float = 1e-12) -> CheckReport:
    """``Q = y/omega`` strictly decreasing, with ``dQ/dt = -n x^2/omega - lam omega``.

    Monotonicity is checked on the sample table (a violation is an
    increase larger than ``slack * max(1, |Q|)``). The derivative formula
    is compared with a centred difference of the dense output at each step
    midpoint, using a spacing of 1% of the step.
    """
    params = traj.params
    t, s = traj.sorted()
    omega, x, y = s[:, 0], s[:, 1], s[:, 2]
    if np.any(~(omega > 0.0)):
        raise DomainError("Q is defined only where omega > 0")
    Q = y / omega
    dQ = np.diff(Q)
    allowed = slack * np.maximum(1.0, np.maximum(np.abs(Q[:-1]), np.abs(Q[1:])))
    violations = int(np.count_nonzero(dQ > allowed))

    dt = np.diff(t)
    mid = t[:-1] + dt / 2
    h = dt / 100.0
    plus, minus, centre = traj(mid + h), traj(mid - h), traj(mid)
    fd = (plus[:, 2] / plus[:, 0] - minus[:, 2] / minus[:, 0]) / (2 * h)
    w, xc = centre[:, 0], centre[:, 1]
    exact = -params.n * xc * xc / w - params.lam * w
    Qc = centre[:, 2] / w
    # Dense output carries an absolute error of about rtol*|Q| that varies
    # on the scale of a step.
    scale = np.abs(exact) + np.abs(Qc) / dt + 1.0
    fd_err = float(np.max(np.abs(fd - exact) / scale)) if len(fd) else 0.0
    fd_ok = fd_err < 1e-5
    failures = []
    if violations:
        failures.append(f"{violations} increases of Q")
    if not fd_ok:
        failures.append(f"dQ/dt mismatch {fd_err:.3g}")
    return CheckReport(
        name="Q_monotone",
        passed=violations == 0 and fd_ok,
        details={
            "samples": len(Q),
            "violations": violations,
            "max_increase": float(np.max(dQ / allowed)) if len(dQ) else 0.0,
            "dQdt_scaled_error": fd_err,
        },
        failures=failures,
    )


def _random_box_run(args) -> Trajectory:
    params, start, horizon, tolerances = args
    return integrate(params, start, (0.0, horizon), tolerances)


def random_trajectories(
    params: SolitonParams,
    count: int,
    horizon: float = 5.0,
    *,
    seed: int = DEFAULT_SEED,
    box=((0.1, 2.0), (-2.0, 2.0), (-5.0, 5.0)),
    tolerances: Tolerances | None = None,
    workers: int = 1,
) -> list[Trajectory]:
    """Forward runs from ``count`` uniform starts in ``box``."""
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    starts = rng.uniform(lo, hi, size=(count, 3))
    return _pmap(_random_box_run, [(params, s, horizon, tolerances) for s in starts], workers)


# -- x-sign propagation --------------------------------------------------------


def _xsign_run(args) -> dict:
    params, start, direction, horizon, tolerances = args
    target = 1.0 if direction > 0 else -1.0
    ev = EventSpec.x_crosses(target, 1, terminal=True)
    if direction < 0:
        ev = EventSpec.x_crosses(target, -1, terminal=True)
    traj = integrate(params, start, (0.0, direction * horizon), tolerances, [ev])
    hit = traj.events_of(ev)
    return {
        "start": tuple(float(v) for v in start),
        "reached": bool(hit),
        "t": hit[0].t if hit else None,
        "termination": traj.termination,
    }


def check_x_sign_propagation(
    params: SolitonParams,
    samples: int = 50,
    *,
    seed: int = DEFAULT_SEED,
    horizon: float = 50.0,
    tolerances: Tolerances | None = None,
    mirrored: bool = False,
    workers: int = 1,
) -> CheckReport:
    """Starts with ``x = 0``, ``y <= 0`` and ``dx/dt > 0`` must reach ``x > 1``.

    ``dx/dt = n - 1 - lam omega^2`` on ``x = 0``, so the starts take
    ``omega`` uniformly in ``(0.05, 0.95)`` times the cylinder radius and
    ``y`` in ``[-5, 0]``. With ``mirrored=True`` the reflected starts are
    run backward and must reach ``x < -1``.
    """
    rng = np.random.default_rng([seed, 3])
    w0 = params.cylinder_radius
    omega = rng.uniform(0.05 * w0, 0.95 * w0, samples)
    y = rng.uniform(-5.0, 0.0, samples)
    sign = -1.0 if mirrored else 1.0
    starts = np.column_stack([omega, np.zeros(samples), sign * y])
    direction = -1 if mirrored else 1
    runs = _pmap(
        _xsign_run, [(params, s, direction, horizon, tolerances) for s in starts], workers
    )
    missed = [r for r in runs if not r["reached"]]
    times = [r["t"] for r in runs if r["reached"]]
    return CheckReport(
        name="x_sign_propagation" + (" (mirrored, backward)" if mirrored else ""),
        passed=not missed,
        details={
            "samples": samples,
            "reached": samples - len(missed),
            "max_abs_time": max((abs(t) for t in times), default=None),
        },
        failures=[f"start {r['start']} ended {r['termination'].value}" for r in missed],
        seed=seed,
    )


# -- completeness --------------------------------------------------------------


def _end_of(traj: Trajectory, direction: str):
    """Samples ordered from the requested end inward, with that end's termination."""
    t, s = traj.sorted()
    if direction == "forward":
        term = traj.termination if traj.direction > 0 else None
        return t[::-1], s[::-1], term
    if direction == "backward":
        term = traj.termination if traj.direction < 0 else traj.start_termination
        return t, s, term
    raise DomainError(f"direction must be 'forward' or 'backward', got {direction!r}")


def _near_pole(params: SolitonParams, state, radius: float) -> int:
    """+1 near P0, -1 near P1, 0 otherwise (sup norm in omega, x, y)."""
    omega, x, y = state[0], state[1], state[2]
    for sigma in (1.0, -1.0):
        d = max(abs(omega), abs(x - sigma), abs(y - sigma * params.n))
        if d <= radius:
            return int(sigma)
    return 0


def estimate_completeness(
    traj: Trajectory,
    direction: str,
    r_bound: float = R_BOUND,
    pole_radius: float = 1e-3,
) -> CompletenessVerdict:
    """Is the length ``int omega dt`` finite towards one end of ``traj``?

    * BlowupDetected: ``r`` converges, FiniteLengthBlowup.
    * ending within ``pole_radius`` of P0 or P1: ``omega`` decays at unit
      exponential rate, so the remaining length is about the final
      ``omega``; FiniteLengthPole.
    * CollapseDetected elsewhere: ``omega`` decays faster than any
      exponential, FiniteLengthCollapse.
    * at the horizon with more than ``r_bound`` accumulated length and
      non-decaying increments over the final two units of t: InfiniteLength.
    """
    params = traj.params
    t, s, term = _end_of(traj, direction)
    r_end, r_start = float(s[0, 3]), float(s[-1, 3])
    length = abs(r_end - r_start)
    sgn = 1.0 if r_end >= r_start else -1.0
    if term is Termination.BLOWUP:
        return CompletenessVerdict(direction, Verdict.BLOWUP, r_end, term)
    pole = _near_pole(params, s[0], pole_radius)
    if pole:
        return CompletenessVerdict(direction, Verdict.POLE, r_end + sgn * float(s[0, 0]), term)
    if term is Termination.COLLAPSE:
        return CompletenessVerdict(direction, Verdict.COLLAPSE, r_end, term)
    if term is Termination.HORIZON and length > r_bound and abs(t[0] - t[-1]) > 2.0:
        t_end = float(t[0])
        back = -1.0 if direction == "forward" else 1.0
        r1, r2, r3 = traj(np.array([t_end, t_end + back, t_end + 2 * back]))[:, 3]
        inc_last, inc_prev = abs(r1 - r2), abs(r2 - r3)
        if inc_last >= 0.5 * inc_prev:
            return CompletenessVerdict(direction, Verdict.INFINITE, math.inf, term)
    return CompletenessVerdict(direction, Verdict.UNDETERMINED, r_end, term)


# -- blow-up -------------------------------------------------------------------


def check_blowup_bound(traj: Trajectory, fit_from: float = 1e3) -> CheckReport:
    """Rate of blow-up near the terminal time ``T`` of a BlowupDetected run.

    ``T`` comes from a least-squares line through ``1/x`` against ``t`` on
    the samples with ``x >= fit_from``; a relative fit residual above 1e-3
    makes the report Undetermined (failed). Over the final decade
    (``x >= x_end/10``) the report checks ``x (T-t) <= 0.9``, fits
    ``x ~ c/(T-t)`` and ``omega ~ (T-t)^(-a)``, and checks that
    ``omega (T-t)^(4/5)`` stays below twice its value at the start of the
    decade.
    """
    name = "blowup_bound"
    if traj.termination is not Termination.BLOWUP:
        return CheckReport(name, False, {"termination": traj.termination}, ["not a blow-up run"])
    t, s = traj.t, traj.states
    x, omega, r = s[:, 1], s[:, 0], s[:, 3]
    sel = x >= fit_from
    if np.count_nonzero(sel) < 4:
        return CheckReport(name, False, {"verdict": "Undetermined"}, ["too few terminal samples"])
    tt, inv = t[sel], 1.0 / x[sel]
    slope, icept = np.polyfit(tt, inv, 1)
    resid = float(np.max(np.abs(inv - (slope * tt + icept))) / np.max(inv))
    T = -icept / slope
    details: dict[str, Any] = {"T": float(T), "fit_residual": resid, "r_end": float(r[-1])}
    if resid > 1e-3 or not slope * traj.direction < 0:
        details["verdict"] = "Undetermined"
        return CheckReport(name, False, details, ["poor fit of the blow-up time"])
    gap = (T - t) * traj.direction
    dec = (x >= x[-1] / 10.0) & (gap > 0)
    prod = x[dec] * gap[dec]
    c_fit = float(np.exp(np.mean(np.log(prod))))
    a_fit = -float(np.polyfit(np.log(gap[dec]), np.log(omega[dec]), 1)[0])
    bound = omega[dec] * gap[dec] ** 0.8
    details.update(
        verdict="Checked",
        decade_samples=int(np.count_nonzero(dec)),
        max_x_gap=float(prod.max()),
        c_fit=c_fit,
        omega_exponent=a_fit,
        omega_bound_ratio=float(bound.max() / bound[0]),
    )
    failures = []
    if not math.isfinite(r[-1]):
        failures.append("r diverges")
    if prod.max() > 0.9:
        failures.append(f"x (T-t) reaches {prod.max():.4g} > 0.9")
    if not (0.0 < c_fit <= 0.9):
        failures.append(f"fitted c = {c_fit:.4g} outside (0, 0.9]")
    if bound.max() > 2.0 * bound[0]:
        failures.append("omega (T-t)^(4/5) grows over the final decade")
    return CheckReport(name, not failures, details, failures)


# -- y divergence, loci, negative tail ----------------------------------------


def check_y_divergence(
    traj: Trajectory, threshold: float = -50.0, direction: str = "forward"
) -> CheckReport:
    """On a run with ``-1 < x < 1`` throughout, ``y`` at the chosen end lies
    beyond ``threshold`` (below it forward; above ``-threshold`` backward)."""
    t, s = traj.sorted()
    x = s[:, 1]
    bounded = bool(np.all(np.abs(x) < 1.0))
    y_end = float(s[-1, 2] if direction == "forward" else s[0, 2])
    ok = y_end < threshold if direction == "forward" else y_end > -threshold
    failures = []
    if not bounded:
        failures.append("x leaves (-1, 1)")
    if not ok:
        failures.append(f"y ends at {y_end:.6g}")
    return CheckReport(
        f"y_divergence ({direction})",
        bounded and ok,
        {"y_end": y_end, "t_end": float(t[-1] if direction == "forward" else t[0]),
         "threshold": threshold, "max_abs_x": float(np.max(np.abs(x)))},
        failures,
    )


def check_invariant_loci(
    params: SolitonParams,
    samples: int = 10,
    *,
    seed: int = DEFAULT_SEED,
    horizon: float = 5.0,
    tol: float = 1e-8,
    tolerances: Tolerances | None = None,
) -> CheckReport:
    """Starts on ``{x = c, dx/dt = 0}`` stay on ``x = c`` for c in {-1, 0, 1}.

    For ``c = +-1`` the locus is ``y = +-(n - lam omega^2)``; for ``c = 0``
    it is the line ``omega = sqrt((n-1)/lam)``.
    """
    rng = np.random.default_rng([seed, 26])
    worst = {}
    failures = []
    for c in (-1.0, 0.0, 1.0):
        dev = 0.0
        for _ in range(samples):
            if c == 0.0:
                omega = params.cylinder_radius
                y = rng.uniform(-5.0, 5.0)
            else:
                omega = rng.uniform(0.1, 2.0)
                y = c * (params.n - params.lam * omega * omega)
            traj = integrate(params, [omega, c, y], (0.0, horizon), tolerances)
            s = traj(traj.fine_grid())
            d = np.max(np.abs(s[:, 1] - c))
            if c == 0.0:
                d = max(d, np.max(np.abs(s[:, 0] - omega)) / omega)
            dev = max(dev, float(d))
        worst[str(int(c))] = dev
        if dev > tol:
            failures.append(f"locus x = {c:g} drifts by {dev:.3g}")
    return CheckReport("invariant_loci", not failures, {"max_deviation": worst}, failures, seed)


def check_no_negative_tail(
    trajectories: Iterable[Trajectory], margin: float = 0.05
) -> CheckReport:
    """No forward-InfiniteLength run keeps ``x < -margin`` over its final unit of t."""
    considered, offenders = 0, []
    for k, traj in enumerate(trajectories):
        if estimate_completeness(traj, "forward").verdict is not Verdict.INFINITE:
            continue
        considered += 1
        t_end = traj.t_span[1]
        tail = traj(np.linspace(t_end - 1.0, t_end, 65))[:, 1]
        if np.all(tail < -margin):
            offenders.append(f"run {k}")
    return CheckReport(
        "negative_x_tail",
        not offenders,
        {"infinite_forward_runs": considered, "margin": margin},
        offenders,
    )


# -- classification ------------------------------------------------------------


def _end_kind(params: SolitonParams, state, term, rho: float) -> str:
    pole = _near_pole(params, state, rho)
    if pole:
        return "P0" if pole > 0 else "P1"
    if term is Termination.BLOWUP:
        return "blowup"
    if term is Termination.COLLAPSE:
        return "collapse"
    return "open"


def classify(traj: Trajectory, tol: float = 1e-6, rho: float = POLE_RADIUS) -> Classification:
    """Decision tree over the standard loci and the terminal behaviour.

    Tried in order, first match wins: Cylinder (sup distance to the line
    ``(sqrt((n-1)/lam), 0, .)`` below ``tol``), GaussianFlat /
    ReversedGaussian (``|x -+ 1| < tol`` throughout), RoundSphere (early
    end within ``rho`` of P0, late end within ``rho`` of P1, both
    curvatures positive wherever ``omega`` exceeds 1% of its maximum),
    IncompleteBlowup (either end BlowupDetected), IncompleteCollapse
    (either end CollapseDetected away from the poles), else Undetermined.
    """
    params = traj.params
    t, s = traj.sorted()
    omega, x, y = s[:, 0], s[:, 1], s[:, 2]
    cyl_dev = float(max(np.max(np.abs(omega - params.cylinder_radius)), np.max(np.abs(x))))
    if cyl_dev < tol:
        return Classification(Tag.CYLINDER, (("cylinder_sup_distance", cyl_dev),))
    for sigma, tag in ((1.0, Tag.GAUSSIAN_FLAT), (-1.0, Tag.REVERSED_GAUSSIAN)):
        dev = float(np.max(np.abs(x - sigma)))
        if dev < tol:
            return Classification(tag, ((f"max|x{'-' if sigma > 0 else '+'}1|", dev),))

    if traj.direction > 0:
        early_term, late_term = traj.start_termination, traj.termination
    else:
        early_term, late_term = traj.termination, None
    early = _end_kind(params, s[0], early_term, rho)
    late = _end_kind(params, s[-1], late_term, rho)
    evidence: list[tuple[str, Any]] = [("early_end", early), ("late_end", late)]
    if early == "P0" and late == "P1":
        away = omega >= 0.01 * omega.max()
        w2 = omega[away] ** 2
        nu1 = -x_velocity(params, omega[away], x[away], y[away]) / w2
        nu2 = (1.0 - x[away] ** 2) / w2
        if np.all(nu1 > 0) and np.all(nu2 > 0):
            evidence += [("min_nu1", float(nu1.min())), ("min_nu2", float(nu2.min()))]
            return Classification(Tag.ROUND_SPHERE, tuple(evidence))
        evidence.append(("curvature_sign", "not positive"))
    if "blowup" in (early, late):
        return Classification(Tag.INCOMPLETE_BLOWUP, tuple(evidence))
    if "collapse" in (early, late):
        return Classification(Tag.INCOMPLETE_COLLAPSE, tuple(evidence))
    return Classification(Tag.UNDETERMINED, tuple(evidence))


def _mirror_run(args) -> dict:
    params, p, t_back, t_fwd, tolerances = args
    fwd = integrate_both(params, p, t_back, t_fwd, tolerances)
    q = reflect(PhasePoint.from_array(p))
    mir = integrate_both(params, q, t_fwd, t_back, tolerances)
    # Forward branch of one is the backward branch of the other.
    f = integrate(params, p, (0.0, t_fwd), tolerances)
    b = integrate(params, q, (0.0, -t_fwd), tolerances)
    n = min(len(f.t), len(b.t))
    probe = np.linspace(0.0, min(f.t_end, -b.t_end), 41)
    fs, bs = f(probe), b(-probe)
    bs[:, 1:3] *= -1.0
    bs[:, 3] *= -1.0
    pointwise = float(np.max(np.abs(fs - bs)))
    samples = float(np.max(np.abs(f.t[:n] + b.t[:n]))) if n else 0.0
    return {
        "start": tuple(float(v) for v in p),
        "pointwise": max(pointwise, samples),
        "tag": classify(fwd).tag,
        "mirror_tag": classify(mir).tag,
    }


def check_reflection_duality(
    params: SolitonParams,
    samples: int = 50,
    *,
    seed: int = DEFAULT_SEED,
    horizon: float = 5.0,
    tol: float = 1e-7,
    tolerances: Tolerances | None = None,
    workers: int = 1,
) -> CheckReport:
    """Forward runs then reflection agree with reflection then backward runs.

    Also classifies each two-sided run and its mirror image; tags must
    correspond under ``Tag.reflected``.
    """
    rng = np.random.default_rng([seed, 22])
    starts = rng.uniform([0.1, -2.0, -5.0], [2.0, 2.0, 5.0], size=(samples, 3))
    runs = _pmap(
        _mirror_run, [(params, p, horizon, horizon, tolerances) for p in starts], workers
    )
    failures = []
    worst = 0.0
    tags: dict[str, int] = {}
    for r in runs:
        worst = max(worst, r["pointwise"])
        tags[r["tag"].value] = tags.get(r["tag"].value, 0) + 1
        if r["pointwise"] > tol:
            failures.append(f"start {r['start']}: mismatch {r['pointwise']:.3g}")
        if r["mirror_tag"] is not r["tag"].reflected():
            failures.append(f"start {r['start']}: {r['tag'].value} vs {r['mirror_tag'].value}")
    return CheckReport(
        "reflection_duality",
        not failures,
        {"samples": samples, "max_pointwise": worst, "tags": tags},
        failures,
        seed,
    )


# -- shooting from P0 ----------------------------------------------------------


def kappa_thetas(params: SolitonParams, kappas, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Seed angles labelling the same trajectories for any ``delta``.

    The unstable family near P0 is labelled by the curvature ``kappa`` of
    its departure (see :func:`departure_angle`); a fixed angle selects a
    different member for each ``delta``.
    """
    return np.array([departure_angle(params, float(k), delta) for k in kappas])


def seed_tolerances(tolerances: Tolerances | None, delta: float) -> Tolerances:
    """Tolerances for a run seeded at distance ``delta`` from an equilibrium.

    The family label sits in offsets of order ``delta**2``, so the absolute
    tolerance is scaled down with it; the relative one is kept.
    """
    tol = tolerances or Tolerances()
    return Tolerances(tol.rtol, min(tol.atol, 1e-6 * delta * delta))


def _seed_run(args) -> tuple[float, Classification, str]:
    params, theta, delta, horizon, tolerances = args
    seed = unstable_local(params, theta, delta)
    tol = seed_tolerances(tolerances, delta)
    traj = integrate(params, seed, (0.0, horizon), tol, [EventSpec.near_p1()])
    return theta, classify_forward(traj), traj.termination.value


def classify_forward(traj: Trajectory, rho: float = POLE_RADIUS) -> Classification:
    """:func:`classify` for a forward run started on the unstable manifold of P0."""
    if traj.params.steady:
        w = float(np.max(traj.omega))
        return Classification(Tag.UNDETERMINED, (("max_omega", w),))
    back_stub = integrate(traj.params, traj.states[0], (0.0, -1e-3), traj.tolerances)
    two_sided = join(back_stub, traj)
    c = classify(two_sided, rho=max(rho, 1e-3))
    return c


def sweep_unstable(
    params: SolitonParams,
    theta_range: tuple[float, float] | None = None,
    count: int = 31,
    delta: float = DEFAULT_DELTA,
    *,
    horizon: float = 100.0,
    tolerances: Tolerances | None = None,
    workers: int = 1,
) -> list[tuple[float, Classification]]:
    """Classify forward runs from ``count`` seeds around P0, ordered by angle.

    Without ``theta_range`` the angles correspond to departure curvatures
    ``kappa`` evenly spaced on ``[-1.5, 3]`` times the sphere value, which
    straddles both the sphere and the flat trajectory for every ``delta``.
    """
    if count < 2:
        raise DomainError("sweep needs count >= 2")
    if theta_range is None:
        ks = sphere_departure(params)
        thetas = kappa_thetas(params, np.linspace(-1.5 * ks, 3 * ks + 0.5 * flat_departure(params), count), delta)
    else:
        thetas = np.linspace(theta_range[0], theta_range[1], count)
    thetas = np.sort(thetas)
    out = _pmap(
        _seed_run, [(params, float(th), delta, horizon, tolerances) for th in thetas], workers
    )
    return [(th, c) for th, c, _ in out]


@dataclass(frozen=True, eq=False)
class BisectionResult:
    theta: float
    trajectory: Trajectory
    iterations: int
    bracket: tuple[float, float]
    ellipse_deviation: float
    ellipse_y_deviation: float
    distance_to_p1: float

    def __iter__(self):
        yield self.theta
        yield self.trajectory


def _side(params, theta, delta, horizon, tolerances) -> int:
    """-1 for collapse type (x falls through -1), +1 for blow-up type."""
    down = EventSpec.x_crosses(-1.0, -1, terminal=True)
    up = EventSpec.x_crosses(1.5, 1, terminal=True)
    traj = integrate(
        params,
        unstable_local(params, theta, delta),
        (0.0, horizon),
        seed_tolerances(tolerances, delta),
        [down, up],
    )
    if traj.events_of(down):
        return -1
    if traj.events_of(up) or traj.termination is Termination.BLOWUP:
        return 1
    return -1 if traj.states[-1, 1] < -1.0 else 1


def bisect_heteroclinic(
    params: SolitonParams,
    theta_lo: float | None = None,
    theta_hi: float | None = None,
    iters: int = 60,
    *,
    delta: float = DEFAULT_DELTA,
    horizon: float = 200.0,
    rho: float = POLE_RADIUS,
    tolerances: Tolerances | None = None,
) -> BisectionResult:
    """Bisect on the seed angle for the trajectory from P0 to P1.

    The default bracket runs from departure curvature 0 (blow-up side) to
    the midpoint between the sphere and flat curvatures (collapse side).
    Iteration stops when the midpoint is no longer representable between
    the endpoints or after ``iters`` halvings; the final run stops within
    ``rho`` of P1.
    """
    if theta_lo is None:
        theta_lo = departure_angle(params, 0.0, delta)
    if theta_hi is None:
        theta_hi = departure_angle(
            params, 0.5 * (sphere_departure(params) + flat_departure(params)), delta
        )
    run = partial(_side, params, delta=delta, horizon=horizon, tolerances=tolerances)
    s_lo, s_hi = run(theta_lo), run(theta_hi)
    if s_lo == s_hi:
        raise DomainError(
            f"bracket endpoints {theta_lo!r}, {theta_hi!r} have the same outcome"
        )
    lo, hi = theta_lo, theta_hi
    k = 0
    while k < iters:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        k += 1
        if run(mid) == s_lo:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    traj = integrate(
        params,
        unstable_local(params, theta, delta),
        (0.0, horizon),
        seed_tolerances(tolerances, delta),
        [EventSpec.near_p1(rho)],
    )
    n, lam = params.n, params.lam
    s = traj(traj.fine_grid())
    dev_y = float(np.max(np.abs(s[:, 2] - n * s[:, 1])))
    dev_e = float(np.max(np.abs(n * s[:, 1] ** 2 + lam * s[:, 0] ** 2 - n)))
    end = traj.states[-1]
    dist = float(max(abs(end[0]), abs(end[1] + 1.0), abs(end[2] + n)))
    return BisectionResult(theta, traj, k, (lo, hi), dev_e, dev_y, dist)


# -- suite ---------------------------------------------------------------------


def verify_suite(
    params: SolitonParams,
    *,
    seed: int = DEFAULT_SEED,
    samples: int = 100,
    tolerances: Tolerances | None = None,
    workers: int = 1,
) -> list[CheckReport]:
    """Run every qualitative check; each report carries its own pass flag."""
    tol = tolerances
    reports = [
        check_region_preserved(params, reg, samples, 5.0, seed=seed, tolerances=tol, workers=workers)
        for reg in LEMMA_REGIONS
    ]

    runs = random_trajectories(params, samples, seed=seed, tolerances=tol, workers=workers)
    q_reports = [check_Q_monotone(tr) for tr in runs]
    bad = [k for k, r in enumerate(q_reports) if not r.passed]
    reports.append(
        CheckReport(
            "Q_monotone (random runs)",
            not bad,
            {"runs": len(runs), "violating_runs": len(bad),
             "total_violations": sum(r.details["violations"] for r in q_reports)},
            [f"run {k}: {q_reports[k].failures}" for k in bad],
            seed,
        )
    )

    half = max(samples // 2, 1)
    reports.append(check_x_sign_propagation(params, half, seed=seed, tolerances=tol, workers=workers))
    reports.append(
        check_x_sign_propagation(params, half, seed=seed, tolerances=tol, mirrored=True, workers=workers)
    )

    rng = np.random.default_rng([seed, 36])
    blow_starts = sample_region(
        params,
        Region((Atom("x", ">=", 1.1), Atom("dxdt", ">=", 0.01)), 1, "", ((0.1, 2.0), (1.1, 3.0), (-5.0, 5.0))),
        20,
        rng,
    )
    blow_runs = _pmap(_random_box_run, [(params, p, 50.0, tol) for p in blow_starts], workers)
    blow = [check_blowup_bound(tr) for tr in blow_runs]
    reports.append(
        CheckReport(
            "blowup_bound",
            all(b.passed for b in blow),
            {"runs": len(blow),
             "max_x_gap": max(b.details.get("max_x_gap", math.inf) for b in blow),
             "c_fit": [b.details.get("c_fit") for b in blow],
             "r_end": [b.details.get("r_end") for b in blow]},
            [f"run {k}: {b.failures}" for k, b in enumerate(blow) if not b.passed],
            seed,
        )
    )
    comp = [estimate_completeness(tr, "forward") for tr in blow_runs]
    reports.append(
        CheckReport(
            "blowup_finite_length",
            all(c.verdict is Verdict.BLOWUP and math.isfinite(c.r_estimate) for c in comp),
            {"verdicts": [c.verdict for c in comp]},
        )
    )

    span = 100.0 / (params.n - 1)
    cyl = integrate_both(params, [params.cylinder_radius, 0.0, 0.0], span, span, tol)
    reports.append(check_y_divergence(cyl, -50.0, "forward"))
    reports.append(check_y_divergence(cyl, -50.0, "backward"))
    reports.append(check_Q_monotone(cyl))

    long_span = R_BOUND / params.cylinder_radius + 3.0
    complete = [
        integrate(params, [params.cylinder_radius, 0.0, 0.0], (0.0, long_span), tol),
        integrate(params, [1.0, 1.0, params.n - params.lam], (0.0, 10.0), tol),
    ]
    reports.append(check_no_negative_tail(complete + runs))
    reports.append(check_invariant_loci(params, seed=seed, tolerances=tol))
    reports.append(
        check_reflection_duality(params, max(samples // 2, 1), seed=seed, tolerances=tol, workers=workers)
    )
    return reports
