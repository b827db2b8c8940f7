"""Equilibria of the phase system and seeds on their invariant manifolds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .phase_core import (
    P0,
    P1,
    DomainError,
    LocalState,
    PhasePoint,
    SolitonParams,
    jacobian,
    phi,
    reflect,
)

__all__ = [
    "EquilibriumData",
    "equilibrium_points",
    "unstable_seed",
    "stable_seed",
    "unstable_local",
    "stable_local",
    "departure_angle",
    "sphere_departure",
    "flat_departure",
    "DEFAULT_DELTA",
]

DEFAULT_DELTA = 1e-6
MAX_DELTA = 1e-4


@dataclass(frozen=True)
class EquilibriumData:
    point: PhasePoint
    jacobian: np.ndarray
    eigenvalues: tuple[float, float, float]
    eigenvectors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def residuals(self) -> list[float]:
        """``|A v - mu v|`` for each eigenpair."""
        return [
            float(np.linalg.norm(self.jacobian @ v - mu * v))
            for mu, v in zip(self.eigenvalues, self.eigenvectors)
        ]


def _eigendata(params: SolitonParams, point: PhasePoint) -> EquilibriumData:
    A = jacobian(params, point)
    # At omega = 0 the omega row/column decouple from the (x, y) block.
    a, b, c, d = A[1, 1], A[1, 2], A[2, 1], A[2, 2]
    tr, det = a + d, a * d - b * c
    root = math.sqrt(tr * tr - 4.0 * det)
    pairs = [(A[0, 0], np.array([1.0, 0.0, 0.0]))]
    for mu in ((tr + root) / 2.0, (tr - root) / 2.0):
        # (a - mu) v1 + b v2 = 0; pick the better conditioned row.
        if abs(b) + abs(a - mu) >= abs(c) + abs(d - mu):
            v = np.array([0.0, b, mu - a])
        else:
            v = np.array([0.0, mu - d, c])
        pairs.append((mu, v / np.linalg.norm(v)))
    pairs.sort(key=lambda pair: -pair[0])
    return EquilibriumData(
        point=point,
        jacobian=A,
        eigenvalues=tuple(float(mu) for mu, _ in pairs),
        eigenvectors=tuple(v for _, v in pairs),
    )


def equilibrium_points(params: SolitonParams) -> tuple[EquilibriumData, EquilibriumData]:
    """Eigendata at ``P0 = (0, 1, n)`` and ``P1 = (0, -1, -n)``.

    The spectrum is ``{2, 1, 1-n}`` at P0 and its negative at P1, for every
    ``lam``. Eigenvalues are sorted in descending order.
    """
    out = []
    for point in (P0(params), P1(params)):
        if any(phi(params, point)):
            raise AssertionError(f"{point} is not an equilibrium")  # pragma: no cover
        out.append(_eigendata(params, point))
    return out[0], out[1]


def _tangent_basis(params: SolitonParams) -> tuple[np.ndarray, np.ndarray]:
    n = params.n
    u1 = np.array([1.0, 0.0, 0.0])
    u2 = np.array([0.0, 1.0, -float(n)]) / math.sqrt(1.0 + n * n)
    return u1, u2


def unstable_local(params: SolitonParams, theta: float, delta: float = DEFAULT_DELTA) -> LocalState:
    """Seed of :func:`unstable_seed` as an exact offset from P0.

    Prefer this as an integration start: the offset in ``x`` is of order
    ``delta * theta``, which rounding of ``1 + dx`` would blur.
    """
    if not (-math.pi < theta <= math.pi):
        raise DomainError(f"theta must lie in (-pi, pi], got {theta!r}")
    if not (0.0 < delta <= MAX_DELTA):
        raise DomainError(f"delta must lie in (0, {MAX_DELTA:g}], got {delta!r}")
    n = params.n
    c, s = math.cos(theta), math.sin(theta)
    if params.steady:
        c = 0.0
    elif c < 0.0:
        raise DomainError(f"seed at theta={theta!r} has omega < 0")
    a = delta * s / math.sqrt(1.0 + n * n)
    return LocalState(1, delta * c, a, -n * a)


def unstable_seed(params: SolitonParams, theta: float, delta: float = DEFAULT_DELTA) -> PhasePoint:
    """Point at distance ``delta`` from P0 in its unstable tangent plane.

    The plane is spanned by ``u1 = (1, 0, 0)`` (eigenvalue 1) and
    ``u2 = (0, 1, -n)/sqrt(1+n^2)`` (eigenvalue 2); the seed is
    ``P0 + delta (cos(theta) u1 + sin(theta) u2)``. For steady params the
    omega component is dropped so the seed lies in the plane ``omega = 0``.
    """
    return unstable_local(params, theta, delta).point(params)


def stable_local(params: SolitonParams, theta: float, delta: float = DEFAULT_DELTA) -> LocalState:
    """Mirror of :func:`unstable_local` near P1."""
    return unstable_local(params, theta, delta).reflect()


def stable_seed(params: SolitonParams, theta: float, delta: float = DEFAULT_DELTA) -> PhasePoint:
    """Mirror of :func:`unstable_seed` near P1, for backward integration."""
    return reflect(unstable_seed(params, theta, delta))


def departure_angle(params: SolitonParams, kappa: float, delta: float = DEFAULT_DELTA) -> float:
    """Seed angle at which the (x, y) offset is ``kappa * omega**2 * (1, -n)``.

    Trajectories in the unstable manifold of P0 leave along ``u1``; to
    second order their component along ``(0, 1, -n)`` is ``kappa * omega**2`` with
    ``kappa`` constant along the trajectory, so ``kappa`` labels the
    family independently of ``delta``. Solves
    ``sin(theta) / cos(theta)**2 = kappa * delta * sqrt(1 + n^2)``.
    """
    c = kappa * delta * math.sqrt(1.0 + params.n**2)
    return math.asin(2.0 * c / (1.0 + math.sqrt(1.0 + 4.0 * c * c)))


def sphere_departure(params: SolitonParams) -> float:
    """``kappa`` of the round-sphere trajectory: ``lam (n-1) / (2 n (n+1))``."""
    n = params.n
    return params.lam * (n - 1) / (2.0 * n * (n + 1))


def flat_departure(params: SolitonParams) -> float:
    """``kappa`` of the flat trajectory ``x = 1``: ``lam / (n+1)``."""
    return params.lam / (params.n + 1)
