"""Adaptive integration of the phase system with events and quadratures.

The state carried by the integrator is ``(omega, x - s, v, r, f)`` where

    v = y - x (n - lam omega^2),
    dr/dt = omega,   df/dt = n x - y,

and ``s`` is the nearest of -1, 0, 1 to the initial ``x``. Shifting ``x``
keeps offsets from the equilibria above the rounding unit; a
:class:`LocalState` start passes those offsets in directly.

In these coordinates the flat loci ``{x = +-1, y = +-(n - lam omega^2)}``
are ``{x = +-1, v = 0}`` and the vector field vanishes identically in the
transverse components there, so the flat trajectories are reproduced to
rounding. They are violently unstable (transverse growth rate about
``lam omega^2``), and integrating ``y`` directly loses them after a few
units of t. For the same reason ``n - 1 - lam omega^2`` is evaluated as
``lam (w0 - omega)(w0 + omega)`` with ``w0`` the cylinder radius, which
makes the cylinder line exactly invariant.

Backward runs integrate the negated field forward in ``tau = t0 - t``.
Since ``-F(L u) = L F(u)`` holds bit for bit for the reflection ``L``, a
backward run from ``L(p)`` is the exact mirror of the forward run from ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from .phase_core import DomainError, LocalState, PhasePoint, SolitonParams

__all__ = [
    "Termination",
    "AugmentedState",
    "EventSpec",
    "EventRecord",
    "Tolerances",
    "Trajectory",
    "integrate",
    "integrate_both",
    "join",
    "locate_event",
    "BLOWUP_CEILING",
    "COLLAPSE_FLOOR",
]

BLOWUP_CEILING = 1e6
COLLAPSE_FLOOR = 1e-12
COLLAPSE_MIN_ABS_X = 0.5
MIN_STEP = 1e-15
_ROOT_XTOL = 1e-15
_ROOT_RTOL = 4 * np.finfo(float).eps


class Termination(str, Enum):
    HORIZON = "HorizonReached"
    EVENT = "EventStop"
    BLOWUP = "BlowupDetected"
    COLLAPSE = "CollapseDetected"
    UNDERFLOW = "StepUnderflow"


@dataclass(frozen=True)
class AugmentedState:
    p: PhasePoint
    r: float = 0.0
    f: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.p.omega, self.p.x, self.p.y, self.r, self.f])

    @classmethod
    def from_array(cls, a) -> "AugmentedState":
        return cls(PhasePoint.from_array(a[:3]), float(a[3]), float(a[4]))


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-10
    atol: float = 1e-12

    def __post_init__(self):
        if not (self.rtol >= 1e-13):
            raise DomainError(f"rtol must be >= 1e-13, got {self.rtol!r}")
        if not (self.atol > 0.0):
            raise DomainError(f"atol must be > 0, got {self.atol!r}")

    def halved(self) -> "Tolerances":
        return Tolerances(self.rtol / 2.0, self.atol / 2.0)


# -- events ------------------------------------------------------------------

_EVENT_KINDS = ("x", "dxdt", "y", "near_p0", "near_p1", "omega_floor", "x_ceiling")


@dataclass(frozen=True)
class EventSpec:
    """A scalar event function and the crossing direction that triggers it.

    ``direction`` is +1 (rising), -1 (falling) or 0 (any). ``value`` is the
    threshold for the crossing kinds, the radius for the proximity kinds and
    the floor / ceiling for the guards. Terminal events stop the run.
    """

    kind: str
    value: float = 0.0
    direction: int = 0
    terminal: bool = False

    def __post_init__(self):
        if self.kind not in _EVENT_KINDS:
            raise DomainError(f"unknown event kind {self.kind!r}")
        if not math.isfinite(self.value):
            raise DomainError("event threshold must be finite")
        if self.direction not in (-1, 0, 1):
            raise DomainError("direction must be -1, 0 or 1")

    @classmethod
    def x_crosses(cls, c: float, direction: int = 0, terminal: bool = False) -> "EventSpec":
        return cls("x", c, direction, terminal)

    @classmethod
    def dxdt_crosses_zero(cls, direction: int = 0, terminal: bool = False) -> "EventSpec":
        return cls("dxdt", 0.0, direction, terminal)

    @classmethod
    def y_crosses(cls, c: float = 0.0, direction: int = 0, terminal: bool = False) -> "EventSpec":
        return cls("y", c, direction, terminal)

    @classmethod
    def near_p1(cls, rho: float = 1e-4, terminal: bool = True) -> "EventSpec":
        return cls("near_p1", rho, -1, terminal)

    @classmethod
    def near_p0(cls, rho: float = 1e-4, terminal: bool = True) -> "EventSpec":
        return cls("near_p0", rho, -1, terminal)

    def function(self, params: SolitonParams) -> Callable[[np.ndarray], np.ndarray]:
        """Event function of user-coordinate states (last axis: omega, x, y, r, f)."""
        n, c = params.n, self.value
        lam = 0.0 if params.steady else params.lam
        if self.kind == "x":
            return lambda s: s[..., 1] - c
        if self.kind == "y":
            return lambda s: s[..., 2] - c
        if self.kind == "dxdt":
            return lambda s: (
                s[..., 1] ** 2 - s[..., 1] * s[..., 2] + n - 1 - lam * s[..., 0] ** 2
            )
        if self.kind in ("near_p0", "near_p1"):
            sign = 1.0 if self.kind == "near_p0" else -1.0
            return lambda s: (
                np.sqrt(s[..., 0] ** 2 + (s[..., 1] - sign) ** 2 + (s[..., 2] - sign * n) ** 2) - c
            )
        if self.kind == "omega_floor":
            return lambda s: s[..., 0] - c
        return lambda s: np.abs(s[..., 1]) - c

    def __str__(self) -> str:
        arrow = {1: "rising", -1: "falling", 0: "any"}[self.direction]
        return f"{self.kind}@{self.value:g}/{arrow}"


@dataclass(frozen=True)
class EventRecord:
    t: float
    spec: EventSpec
    state: np.ndarray = field(compare=False, repr=False)


# -- coordinates and field ---------------------------------------------------


def _shift_for(x: float) -> float:
    """Reference value subtracted from ``x`` in the integrator state."""
    if x > 0.5:
        return 1.0
    if x < -0.5:
        return -1.0
    return 0.0


def _to_internal(params: SolitonParams, s: np.ndarray, shift: float) -> np.ndarray:
    lam = 0.0 if params.steady else params.lam
    u = np.array(s, dtype=float)
    w, x = u[..., 0], u[..., 1]
    u[..., 2] = u[..., 2] - x * (params.n - lam * w * w)
    u[..., 1] = x - shift
    return u


def _local_to_internal(params: SolitonParams, loc: LocalState) -> np.ndarray:
    # v = dy - n dx + x lam omega^2, formed from the offsets without cancellation.
    lam = 0.0 if params.steady else params.lam
    x = loc.sigma + loc.dx
    v = loc.dy - params.n * loc.dx + x * lam * loc.omega**2
    return np.array([loc.omega, loc.dx, v, 0.0, 0.0])


def _to_user(params: SolitonParams, u: np.ndarray, shift: float) -> np.ndarray:
    lam = 0.0 if params.steady else params.lam
    s = np.array(u, dtype=float)
    s[..., 1] = s[..., 1] + shift
    w, x = s[..., 0], s[..., 1]
    s[..., 2] = s[..., 2] + x * (params.n - lam * w * w)
    return s


def _make_field(params: SolitonParams, sign: float, shift: float):
    # State (omega, xi, v, r, f) with x = shift + xi. 1 - x^2 is formed as
    # ((1 - shift) - xi)((1 + shift) + xi), which vanishes exactly on x = +-1
    # and is symmetric under (xi, shift) -> (-xi, -shift).
    n = float(params.n)
    lo, hi = 1.0 - shift, 1.0 + shift
    if params.steady:

        def fun(_t, u):
            xi, v = u[1], u[2]
            x = shift + xi
            dx = (n - 1.0) * ((lo - xi) * (hi + xi)) - x * v
            dv = x * v - n * dx
            return np.array([0.0, sign * dx, sign * dv, 0.0, -sign * v])

        return fun

    lam, w0 = params.lam, params.cylinder_radius

    def fun(_t, u):
        w, xi, v = u[0], u[1], u[2]
        x = shift + xi
        lw2 = lam * w * w
        q = (lo - xi) * (hi + xi)
        dx = lam * (w0 - w) * (w0 + w) * q - x * v
        dv = x * v - lw2 * q - (n - lw2) * dx
        return np.array([sign * x * w, sign * dx, sign * dv, sign * w, sign * (x * lw2 - v)])

    return fun


# -- trajectory ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Segment:
    t0: float
    direction: int
    tau_end: float
    solution: OdeSolution | None
    params: SolitonParams
    start: np.ndarray
    shift: float = 0.0

    def covers(self, t):
        # Half-line on this segment's side of t0; evaluation clips to the end.
        return (t - self.t0) * self.direction >= 0.0

    def internal(self, t):
        """Integrator state ``(omega, x - shift, v, r, f)`` at time(s) ``t``."""
        tau = (np.asarray(t, dtype=float) - self.t0) * self.direction
        if self.solution is None:
            u0 = _to_internal(self.params, self.start, self.shift)
            return np.broadcast_to(u0, np.shape(tau) + (5,)).copy()
        return np.moveaxis(self.solution(np.clip(tau, 0.0, self.tau_end)), 0, -1)

    def __call__(self, t):
        if self.solution is None:
            tau = np.asarray(t, dtype=float)
            return np.broadcast_to(self.start, np.shape(tau) + (5,)).copy()
        return _to_user(self.params, self.internal(t), self.shift)

    def pole_terms(self, t):
        """``(1 - x^2, dx/dt, n x - y)`` evaluated without cancellation."""
        u = self.internal(t)
        w, xi, v = u[..., 0], u[..., 1], u[..., 2]
        lam = 0.0 if self.params.steady else self.params.lam
        x = self.shift + xi
        q = ((1.0 - self.shift) - xi) * ((1.0 + self.shift) + xi)
        if self.params.steady:
            dx = (self.params.n - 1.0) * q - x * v
        else:
            w0 = self.params.cylinder_radius
            dx = lam * (w0 - w) * (w0 + w) * q - x * v
        return np.stack([q, dx, x * lam * w * w - v], axis=-1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Densely evaluable solution with its sample table and event log.

    ``t`` is strictly monotone in the integration direction; ``states``
    has columns ``(omega, x, y, r, f)``. ``termination`` is the cause at
    the end reached by the integration; for joined two-sided runs
    ``start_termination`` is the cause at the early end.
    """

    params: SolitonParams
    t: np.ndarray
    states: np.ndarray
    events: tuple[EventRecord, ...]
    termination: Termination
    direction: int
    tolerances: Tolerances
    segments: tuple[_Segment, ...] = field(repr=False)
    start_termination: Termination | None = None

    def _dispatch(self, t, method: str, width: int) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if len(self.segments) == 1:
            return getattr(self.segments[0], method)(t_arr)
        flat = np.atleast_1d(t_arr)
        out = getattr(self.segments[-1], method)(flat)
        for seg in self.segments[:-1]:
            mask = seg.covers(flat)
            if np.any(mask):
                out[mask] = getattr(seg, method)(flat[mask])
        return out.reshape(t_arr.shape + (width,))

    def __call__(self, t) -> np.ndarray:
        """User-coordinate state(s) at time(s) ``t`` from the dense output."""
        return self._dispatch(t, "__call__", 5)

    def pole_terms(self, t) -> np.ndarray:
        """Columns ``(1 - x^2, dx/dt, n x - y)`` at time(s) ``t``.

        Formed from the integrator's shifted state, so they keep full
        relative precision near the equilibria where the user coordinates
        round ``x`` to +-1. Curvatures divide these by ``omega^2``.
        """
        return self._dispatch(t, "pole_terms", 3)

    @property
    def omega(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def x(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def y(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def r(self) -> np.ndarray:
        return self.states[:, 3]

    @property
    def f(self) -> np.ndarray:
        return self.states[:, 4]

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.t.min()), float(self.t.max())

    def point(self, i: int) -> PhasePoint:
        return PhasePoint.from_array(self.states[i, :3])

    def final(self) -> AugmentedState:
        return AugmentedState.from_array(self.states[-1])

    def events_of(self, spec: EventSpec) -> list[EventRecord]:
        return [e for e in self.events if e.spec == spec]

    def fine_grid(self, per_step: int = 8) -> np.ndarray:
        """Sample times refined with ``per_step`` interior points per step."""
        t = np.sort(self.t)
        if len(t) < 2:
            return t
        frac = np.linspace(0.0, 1.0, per_step + 2)[:-1]
        grid = (t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel()
        return np.append(grid, t[-1])

    def sorted(self) -> tuple[np.ndarray, np.ndarray]:
        """Samples in increasing t."""
        if self.direction > 0:
            return self.t, self.states
        return self.t[::-1], self.states[::-1]


# -- integration ---------------------------------------------------------------


def _crossed(g_old: float, g_new: float, direction: int) -> bool:
    if g_old == 0.0 or not (np.isfinite(g_old) and np.isfinite(g_new)):
        return False
    if g_new == 0.0:
        rising = g_old < 0.0
    elif (g_old < 0.0) != (g_new < 0.0):
        rising = g_new > 0.0
    else:
        return False
    return direction == 0 or (direction > 0) == rising


def _as_state(initial) -> np.ndarray:
    if isinstance(initial, AugmentedState):
        s = initial.as_array()
    elif isinstance(initial, PhasePoint):
        s = np.array([initial.omega, initial.x, initial.y, 0.0, 0.0])
    else:
        s = np.asarray(initial, dtype=float)
        if s.shape == (3,):
            s = np.concatenate([s, [0.0, 0.0]])
    if s.shape != (5,) or not np.all(np.isfinite(s)):
        raise DomainError(f"initial state must be 5 finite numbers, got {initial!r}")
    PhasePoint.from_array(s)  # validates omega >= 0
    return s


def integrate(
    params: SolitonParams,
    initial,
    t_span: tuple[float, float],
    tolerances: Tolerances | None = None,
    events: Sequence[EventSpec] = (),
    *,
    blowup_ceiling: float = BLOWUP_CEILING,
    collapse_floor: float = COLLAPSE_FLOOR,
    first_step: float | None = None,
) -> Trajectory:
    """Integrate from ``initial`` over ``t_span = (t0, t1)``.

    ``t1 < t0`` integrates backward in time. The run stops at the horizon,
    at the first terminal event, when ``|x|`` exceeds ``blowup_ceiling``
    (BlowupDetected), when ``omega`` falls below ``collapse_floor`` while
    ``|x| >= 1/2`` (CollapseDetected), on a non-finite state (BlowupDetected,
    last valid sample kept) or when the step size underflows.
    """
    tol = tolerances or Tolerances()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1)) or t0 == t1:
        raise DomainError(f"t_span must be finite and nonempty, got {t_span!r}")
    if isinstance(initial, LocalState):
        s0 = _as_state(initial.point(params))
        shift = float(initial.sigma)
        u0 = _local_to_internal(params, initial)
    else:
        s0 = _as_state(initial)
        shift = _shift_for(s0[1])
        u0 = _to_internal(params, s0, shift)
    if params.steady and s0[0] != 0.0:
        raise DomainError("steady runs must start in the plane omega = 0")
    direction = 1 if t1 > t0 else -1
    span = abs(t1 - t0)

    specs = list(events)
    funcs = [spec.function(params) for spec in specs]
    guards = [
        ("blowup", EventSpec("x_ceiling", blowup_ceiling, 1, True)),
    ]
    if not params.steady:
        guards.append(("collapse", EventSpec("omega_floor", collapse_floor, -1, True)))
    guard_funcs = [g.function(params) for _, g in guards]

    fun = _make_field(params, float(direction), shift)
    solver = DOP853(fun, 0.0, u0, span, rtol=tol.rtol, atol=tol.atol, first_step=first_step)

    taus, user_states, interps = [0.0], [s0], []
    records: list[EventRecord] = []
    g_prev = [float(g(s0)) for g in funcs]
    guard_prev = [float(g(s0)) for g in guard_funcs]
    termination = Termination.HORIZON

    while solver.status == "running":
        tau_old = solver.t
        solver.step()
        if solver.status == "failed":
            termination = Termination.UNDERFLOW
            break
        u_new = solver.y
        if not np.all(np.isfinite(u_new)):
            termination = Termination.BLOWUP
            break
        interp = solver.dense_output()
        s_new = _to_user(params, u_new, shift)

        def at(tau, interp=interp):
            return _to_user(params, interp(tau), shift)

        hits = []  # (tau, kind, index)
        g_new = [float(g(s_new)) for g in funcs]
        for i, spec in enumerate(specs):
            if _crossed(g_prev[i], g_new[i], spec.direction):
                root = _root(funcs[i], at, tau_old, solver.t, g_new[i])
                hits.append((root, "event", i))
        guard_new = [float(g(s_new)) for g in guard_funcs]
        for j, (name, spec) in enumerate(guards):
            if _crossed(guard_prev[j], guard_new[j], spec.direction):
                root = _root(guard_funcs[j], at, tau_old, solver.t, guard_new[j])
                if name == "collapse" and abs(at(root)[1]) < COLLAPSE_MIN_ABS_X:
                    continue
                hits.append((root, name, j))
        if (
            not params.steady
            and s_new[0] < collapse_floor
            and abs(s_new[1]) >= COLLAPSE_MIN_ABS_X
            and not any(kind == "collapse" for _, kind, _ in hits)
        ):
            hits.append((solver.t, "collapse", -1))
        hits.sort(key=lambda h: (h[0], h[1] != "collapse"))

        stop_tau = None
        for root, kind, i in hits:
            if kind == "event":
                records.append(EventRecord(t0 + direction * root, specs[i], at(root)))
                if specs[i].terminal:
                    stop_tau, termination = root, Termination.EVENT
                    break
            else:
                stop_tau = root
                termination = Termination.COLLAPSE if kind == "collapse" else Termination.BLOWUP
                break

        interps.append(interp)
        if stop_tau is not None:
            if stop_tau > taus[-1]:
                taus.append(stop_tau)
                user_states.append(at(stop_tau))
            else:
                interps.pop()
            break
        taus.append(solver.t)
        user_states.append(s_new)
        g_prev, guard_prev = g_new, guard_new
        if solver.status == "running" and solver.step_size < MIN_STEP:
            termination = Termination.UNDERFLOW
            break

    taus_arr = np.asarray(taus)
    solution = OdeSolution(taus_arr, interps) if interps else None
    segment = _Segment(t0, direction, float(taus_arr[-1]), solution, params, s0, shift)
    return Trajectory(
        params=params,
        t=t0 + direction * taus_arr,
        states=np.asarray(user_states),
        events=tuple(records),
        termination=termination,
        direction=direction,
        tolerances=tol,
        segments=(segment,),
    )


def _root(g, at, a: float, b: float, g_b: float) -> float:
    if g_b == 0.0:
        return b
    return brentq(lambda tau: float(g(at(tau))), a, b, xtol=_ROOT_XTOL, rtol=_ROOT_RTOL)


def locate_event(traj: Trajectory, spec: EventSpec) -> float | None:
    """First crossing of ``spec`` along ``traj``, bracketed on the dense output.

    Scans consecutive samples for a sign change in the requested direction
    and refines it with Brent's method to ~1e-15 in t. Returns ``None`` when
    no bracket exists.
    """
    g = spec.function(traj.params)
    values = g(traj.states)
    for k in range(len(traj.t) - 1):
        if _crossed(float(values[k]), float(values[k + 1]), spec.direction):
            a, b = float(traj.t[k]), float(traj.t[k + 1])
            if values[k + 1] == 0.0:
                return b
            return brentq(
                lambda t: float(g(traj(t))), a, b, xtol=_ROOT_XTOL, rtol=_ROOT_RTOL
            )
    return None


def integrate_both(
    params: SolitonParams,
    initial,
    t_back: float,
    t_fwd: float,
    tolerances: Tolerances | None = None,
    events: Sequence[EventSpec] = (),
    backward_events: Sequence[EventSpec] | None = None,
    **kwargs,
) -> Trajectory:
    """Integrate from ``initial`` at t = 0 back to ``-t_back`` and forward to ``t_fwd``."""
    back = integrate(
        params,
        initial,
        (0.0, -abs(t_back)),
        tolerances,
        events if backward_events is None else backward_events,
        **kwargs,
    )
    fwd = integrate(params, initial, (0.0, abs(t_fwd)), tolerances, events, **kwargs)
    return join(back, fwd)


def join(backward: Trajectory, forward: Trajectory) -> Trajectory:
    """Two-sided trajectory from a backward and a forward run sharing their start."""
    if backward.direction != -1 or forward.direction != 1:
        raise DomainError("join expects a backward run and a forward run")
    if backward.t[0] != forward.t[0] or not np.array_equal(backward.states[0], forward.states[0]):
        raise DomainError("runs do not share an initial state")
    t = np.concatenate([backward.t[::-1], forward.t[1:]])
    states = np.concatenate([backward.states[::-1], forward.states[1:]])
    events = tuple(sorted(backward.events + forward.events, key=lambda e: e.t))
    return Trajectory(
        params=forward.params,
        t=t,
        states=states,
        events=events,
        termination=forward.termination,
        direction=1,
        tolerances=forward.tolerances,
        segments=backward.segments + forward.segments,
        start_termination=backward.termination,
    )
