"""Radial metric profiles recovered from phase trajectories.

A trajectory carries ``r`` and ``f`` as quadrature states, so a profile is a
re-tabulation (with the numerators taken from :meth:`Trajectory.pole_terms`): ``omega(r)``, ``omega'(r) = x``, ``f'(r) = (n x - y)/omega``
and the sectional curvatures

    nu1 = -(dx/dt) / omega^2     (radial planes)
    nu2 = (1 - x^2) / omega^2    (orbital planes).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .integrate import Trajectory
from .phase_core import DomainError, PhasePoint, SolitonParams, x_velocity

__all__ = [
    "MetricProfile",
    "PoleVerdict",
    "SmoothnessReport",
    "reconstruct_profile",
    "sectional_curvatures",
    "soliton_residual",
    "hamilton_identity",
    "smoothness_check",
]


@dataclass(frozen=True, eq=False)
class MetricProfile:
    params: SolitonParams
    t: np.ndarray
    r: np.ndarray
    omega: np.ndarray
    x: np.ndarray
    fprime: np.ndarray
    f: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    R: np.ndarray

    def __len__(self) -> int:
        return len(self.r)

    def perturbed(self, d_omega: float) -> "MetricProfile":
        """Copy with ``omega`` shifted by a constant, other columns untouched."""
        return MetricProfile(
            self.params, self.t, self.r, self.omega + d_omega, self.x,
            self.fprime, self.f, self.nu1, self.nu2, self.R,
        )

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "r": self.r,
            "omega": self.omega,
            "x": self.x,
            "fprime": self.fprime,
            "f": self.f,
            "nu1": self.nu1,
            "nu2": self.nu2,
            "R": self.R,
        }


def _curvatures(params: SolitonParams, omega, x, y):
    w2 = omega * omega
    nu1 = -x_velocity(params, omega, x, y) / w2
    nu2 = (1.0 - x * x) / w2
    return nu1, nu2


def sectional_curvatures(params: SolitonParams, p: PhasePoint) -> tuple[float, float]:
    """Radial and orbital sectional curvatures at a phase point."""
    if not p.omega > 0.0:
        raise DomainError(f"sectional curvatures need omega > 0, got {p.omega!r}")
    nu1, nu2 = _curvatures(params, p.omega, p.x, p.y)
    return float(nu1), float(nu2)


def reconstruct_profile(
    traj: Trajectory,
    r_anchor: float = 0.0,
    *,
    f_anchor: float = 0.0,
    points: int | None = None,
) -> MetricProfile:
    """Tabulate the metric and potential of ``traj`` against ``r``.

    The grid is the sample table, or ``points`` values of t spaced evenly
    over the run and read off the dense output. ``r`` is shifted so the
    earliest point sits at ``r_anchor`` and ``f`` so it equals ``f_anchor``
    there; the potential is only determined up to such a constant.
    """
    params = traj.params
    if points is None:
        t, states = traj.sorted()
    else:
        lo, hi = traj.t_span
        t = np.linspace(lo, hi, int(points))
        states = traj(t)
    omega, x, y, r_aug, f_aug = states.T
    if np.any(~(omega > 0.0)):
        raise DomainError("profile reconstruction needs omega > 0 at every point")
    r = r_aug - r_aug[0] + r_anchor
    f = f_aug - f_aug[0] + f_anchor
    # Numerators from the integrator's shifted state: near a pole omega^2 is
    # far below the rounding unit of x, so 1 - x^2 must not be formed from x.
    one_minus_x2, dxdt, nx_minus_y = traj.pole_terms(t).T
    w2 = omega * omega
    fprime = nx_minus_y / omega
    nu1 = -dxdt / w2
    nu2 = one_minus_x2 / w2
    n = params.n
    R = 2 * n * nu1 + n * (n - 1) * nu2
    return MetricProfile(params, t, r, omega, x, fprime, f, nu1, nu2, R)


def soliton_residual(params: SolitonParams, profile: MetricProfile) -> tuple[np.ndarray, np.ndarray]:
    """Residuals of the radial soliton equations at interior grid points.

    ``res1 = f'' - lam - n omega''/omega`` and
    ``res2 = omega omega' f' - lam omega^2 - omega omega'' - (n-1)(omega'^2 - 1)``,
    with ``omega''`` and ``f''`` taken as second-order centred differences of
    the ``x`` and ``fprime`` columns on the (nonuniform) ``r`` grid.
    """
    if len(profile.r) < 5:
        raise DomainError("residual needs at least 5 grid points")
    r = profile.r
    if np.any(np.diff(r) <= 0.0):
        raise DomainError("residual needs a strictly increasing r grid")
    omega_pp = np.gradient(profile.x, r)
    f_pp = np.gradient(profile.fprime, r)
    w, wp, fp = profile.omega, profile.x, profile.fprime
    lam, n = params.lam, params.n
    res1 = f_pp - lam - n * omega_pp / w
    res2 = w * wp * fp - lam * w * w - w * omega_pp - (n - 1) * (wp * wp - 1.0)
    return res1[1:-1], res2[1:-1]


def hamilton_identity(params: SolitonParams, profile: MetricProfile) -> np.ndarray:
    """``R + f'^2 - 2 lam f`` per grid point; constant on any shrinking soliton."""
    return profile.R + profile.fprime**2 - 2.0 * params.lam * profile.f


class PoleVerdict(str, Enum):
    ORIGIN = "SmoothPole(+1)"
    FAR = "SmoothPole(-1)"
    NONE = "NotAPole"


@dataclass(frozen=True)
class SmoothnessReport:
    end: str
    omega_limit: float
    x_limit: float
    verdict: PoleVerdict


def _aitken(q0: float, q1: float, q2: float) -> float:
    d1, d2 = q1 - q0, q2 - q1
    if d1 == 0.0 or d2 == 0.0:
        return q2
    ratio = d2 / d1
    if not (0.0 < ratio < 1.0):
        return q2
    return q2 + d2 * ratio / (1.0 - ratio)


def smoothness_check(traj: Trajectory, end: str, tol: float = 1e-6) -> SmoothnessReport:
    """Extrapolated ``(omega, x)`` at one end of ``traj`` against the pole conditions.

    ``end="backward"`` inspects the earliest times (the origin pole needs
    ``omega -> 0, x -> +1``); ``end="forward"`` the latest (the far pole
    needs ``omega -> 0, x -> -1``). Limits come from Aitken extrapolation of
    three equally spaced values over the final stretch of t, which is exact
    for the exponential approach to a hyperbolic equilibrium.
    """
    if end not in ("forward", "backward"):
        raise DomainError(f"end must be 'forward' or 'backward', got {end!r}")
    lo, hi = traj.t_span
    if end == "forward":
        t_end, sign, sigma = hi, -1.0, -1.0
    else:
        t_end, sign, sigma = lo, 1.0, 1.0
    h = min(1.0, (hi - lo) / 2.0)
    q = traj(np.array([t_end + 2 * sign * h, t_end + sign * h, t_end]))
    omega_lim = _aitken(*q[:, 0])
    x_lim = _aitken(*q[:, 1])
    verdict = PoleVerdict.NONE
    if abs(omega_lim) <= tol and abs(x_lim - sigma) <= tol:
        verdict = PoleVerdict.ORIGIN if sigma > 0 else PoleVerdict.FAR
    return SmoothnessReport(end, float(omega_lim), float(x_lim), verdict)
