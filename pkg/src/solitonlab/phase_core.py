"""Phase-space model of rotationally symmetric shrinking gradient solitons.

A warped product ``dr^2 + omega(r)^2 g_{S^n}`` with radial potential ``f``
is encoded by the phase variables

    x = omega',   y = n omega' - omega f',   dt = dr / omega,

in which the soliton equations become the autonomous system

    d omega/dt = x omega
    dx/dt      = x^2 - x y + n - 1 - lam omega^2
    dy/dt      = x y - n x^2 - lam omega^2.

This module holds the value types and the pointwise formulas: the vector
field, its Jacobian, the closed forms for the second and third time
derivatives of ``x``, the reflection symmetry and the steady (``lam = 0``)
restriction to the invariant plane ``omega = 0``.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "DomainError",
    "SolitonParams",
    "PhasePoint",
    "Velocity",
    "LocalState",
    "Atom",
    "Region",
    "phi",
    "jacobian",
    "x_velocity",
    "x_accel",
    "x_jerk",
    "reflect",
    "reflect_velocity",
    "steady_field",
    "P0",
    "P1",
]


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a formula."""


@dataclass(frozen=True)
class SolitonParams:
    """Dimension ``n`` of the sphere fibre and shrinking constant ``lam``.

    ``steady=True`` restricts the dynamics to the plane ``omega = 0``, where
    the ``lam * omega**2`` terms vanish and the x, y equations coincide with
    those of the steady soliton system.
    """

    n: int
    lam: float = 1.0
    steady: bool = False

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n:
            raise DomainError(f"n must be an integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0.0:
            raise DomainError(f"lam must be finite and > 0, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    @property
    def cylinder_radius(self) -> float:
        """Radius ``sqrt((n-1)/lam)`` of the standard cylinder."""
        return math.sqrt((self.n - 1) / self.lam)

    @property
    def sphere_radius(self) -> float:
        """Maximal warping ``sqrt(n/lam)`` of the round sphere."""
        return math.sqrt(self.n / self.lam)


@dataclass(frozen=True)
class PhasePoint:
    omega: float
    x: float
    y: float

    def __post_init__(self):
        for name in ("omega", "x", "y"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.omega < 0.0:
            raise DomainError(f"omega must be >= 0, got {self.omega!r}")

    def __iter__(self) -> Iterator[float]:
        yield self.omega
        yield self.x
        yield self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.omega, self.x, self.y])

    @classmethod
    def from_array(cls, a) -> "PhasePoint":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class LocalState:
    """Point written as an offset from ``P0`` (``sigma = 1``) or ``P1`` (``sigma = -1``).

    The point is ``(omega, sigma + dx, sigma*n + dy)``. Near an equilibrium
    the offsets carry information far below the rounding unit of ``x`` and
    ``y`` themselves, and the integrator consumes them without forming the
    sums.
    """

    sigma: int
    omega: float
    dx: float
    dy: float

    def __post_init__(self):
        if self.sigma not in (-1, 1):
            raise DomainError(f"sigma must be +1 or -1, got {self.sigma!r}")
        for name in ("omega", "dx", "dy"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.omega < 0.0:
            raise DomainError(f"omega must be >= 0, got {self.omega!r}")

    def point(self, params: "SolitonParams") -> "PhasePoint":
        return PhasePoint(self.omega, self.sigma + self.dx, self.sigma * params.n + self.dy)

    def reflect(self) -> "LocalState":
        return LocalState(-self.sigma, self.omega, -self.dx, -self.dy)


class Velocity(NamedTuple):
    d_omega: float
    d_x: float
    d_y: float


def P0(params: SolitonParams) -> PhasePoint:
    """Equilibrium ``(0, 1, n)``, the smooth pole at the origin."""
    return PhasePoint(0.0, 1.0, float(params.n))


def P1(params: SolitonParams) -> PhasePoint:
    """Equilibrium ``(0, -1, -n)``, the smooth pole at the far end."""
    return PhasePoint(0.0, -1.0, -float(params.n))


def _check_finite(p) -> None:
    for value in p:
        if not math.isfinite(value):
            raise DomainError(f"non-finite phase point {tuple(p)!r}")


def _lam(params: SolitonParams) -> float:
    return 0.0 if params.steady else params.lam


def phi(params: SolitonParams, p: PhasePoint) -> Velocity:
    """Right-hand side of the first-order system at ``p``."""
    _check_finite(p)
    omega, x, y = p
    n, lam = params.n, _lam(params)
    return Velocity(
        x * omega,
        x * x - x * y + n - 1 - lam * omega * omega,
        x * y - n * x * x - lam * omega * omega,
    )


def x_velocity(params: SolitonParams, omega, x, y):
    """``dx/dt``; accepts scalars or arrays."""
    return x * x - x * y + params.n - 1 - _lam(params) * omega * omega


def jacobian(params: SolitonParams, p: PhasePoint) -> np.ndarray:
    """Matrix of partial derivatives of :func:`phi`, rows ordered (omega, x, y)."""
    _check_finite(p)
    omega, x, y = p
    n, lam = params.n, _lam(params)
    return np.array(
        [
            [x, omega, 0.0],
            [-2.0 * lam * omega, 2.0 * x - y, -x],
            [-2.0 * lam * omega, y - 2.0 * n * x, x],
        ]
    )


def x_accel(params: SolitonParams, p: PhasePoint) -> float:
    """Second time derivative of ``x`` along the flow through ``p``."""
    _check_finite(p)
    omega, x, y = p
    xd = x_velocity(params, omega, x, y)
    return (params.n - 1) * x * (x * x - 1.0) + (3.0 * x - y) * xd


def x_jerk(params: SolitonParams, p: PhasePoint) -> float:
    """Third time derivative of ``x`` along the flow through ``p``."""
    _check_finite(p)
    omega, x, y = p
    n = params.n
    xd = x_velocity(params, omega, x, y)
    xdd = (n - 1) * x * (x * x - 1.0) + (3.0 * x - y) * xd
    return 2.0 * x * ((2 * n - 1) * x - y) * xd + 2.0 * xd * xd + (3.0 * x - y) * xdd


def reflect(p: PhasePoint) -> PhasePoint:
    """The involution ``(omega, x, y) -> (omega, -x, -y)``.

    Combined with reversal of time it maps solutions to solutions:
    ``phi(reflect(p)) == -reflect_velocity(phi(p))``.
    """
    return PhasePoint(p.omega, -p.x, -p.y)


def reflect_velocity(v: Velocity) -> Velocity:
    return Velocity(v.d_omega, -v.d_x, -v.d_y)


def steady_field(params: SolitonParams, p: PhasePoint) -> Velocity:
    """Vector field on the invariant plane ``omega = 0`` with ``lam = 0``."""
    _check_finite(p)
    if p.omega != 0.0:
        raise DomainError(f"steady field is defined on omega = 0 only, got omega={p.omega!r}")
    _, x, y = p
    n = params.n
    return Velocity(0.0, x * x - x * y + n - 1, x * y - n * x * x)


# -- regions ---------------------------------------------------------------

_QUANTITIES = ("omega", "x", "y", "dxdt")
_OPS = {"<=": operator.le, ">=": operator.ge}


@dataclass(frozen=True)
class Atom:
    """Inequality ``quantity op bound`` with quantity in omega, x, y, dxdt."""

    quantity: str
    op: str
    bound: float

    def __post_init__(self):
        if self.quantity not in _QUANTITIES:
            raise DomainError(f"unknown quantity {self.quantity!r}")
        if self.op not in _OPS:
            raise DomainError(f"op must be '<=' or '>=', got {self.op!r}")
        if not math.isfinite(self.bound):
            raise DomainError("atom bound must be finite")

    def margin(self, values):
        """Signed distance to the boundary, >= 0 inside."""
        return values - self.bound if self.op == ">=" else self.bound - values

    def reflect(self) -> "Atom":
        # L negates x and y; dx/dt at L(p) equals dx/dt at p.
        if self.quantity in ("x", "y"):
            flipped = "<=" if self.op == ">=" else ">="
            return Atom(self.quantity, flipped, 0.0 - self.bound)
        return self

    def __str__(self) -> str:
        return f"{self.quantity} {self.op} {self.bound:g}"


@dataclass(frozen=True)
class Region:
    """Conjunction of :class:`Atom` inequalities.

    ``direction`` is +1 if the region is claimed to be preserved for
    increasing t and -1 for decreasing t. ``box`` is an optional
    ``((lo, hi), (lo, hi), (lo, hi))`` sampling box in (omega, x, y).
    """

    atoms: tuple[Atom, ...]
    direction: int = 1
    name: str = ""
    box: tuple | None = field(default=None, compare=False)

    def _values(self, params, quantity, omega, x, y):
        if quantity == "omega":
            return omega
        if quantity == "x":
            return x
        if quantity == "y":
            return y
        return x_velocity(params, omega, x, y)

    def margin(self, params: SolitonParams, omega, x, y):
        """Smallest atom margin; vectorised over array inputs."""
        margins = [a.margin(self._values(params, a.quantity, omega, x, y)) for a in self.atoms]
        return np.minimum.reduce(np.broadcast_arrays(*margins)) if len(margins) > 1 else margins[0]

    def contains(self, params: SolitonParams, p: PhasePoint, slack: float = 0.0) -> bool:
        return bool(self.margin(params, *p) >= -slack)

    def reflect(self) -> "Region":
        box = None
        if self.box is not None:
            (w, (xl, xh), (yl, yh)) = self.box
            box = (w, (-xh, -xl), (-yh, -yl))
        name = self.name
        if name.startswith("L(") and name.endswith(")"):
            name = name[2:-1]
        elif name:
            name = f"L({name})"
        return Region(tuple(a.reflect() for a in self.atoms), -self.direction, name, box)

    def __str__(self) -> str:
        body = ", ".join(str(a) for a in self.atoms)
        return "{" + body + "}"
