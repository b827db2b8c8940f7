"""Closed-form solutions for the standard solitons.

Each ``*_state`` function returns the exact augmented state
``(omega, x, y, r, f)`` at phase time ``t`` (arrays broadcast), with
``r = f = 0`` at ``t = 0``. The ``*_profile`` functions give the warping
function and potential as functions of the radial coordinate.
"""

from __future__ import annotations

import numpy as np

from .phase_core import SolitonParams


def sphere_state(params: SolitonParams, t):
    """Round sphere through ``(sqrt(n/lam), 0, 0)`` at t = 0.

    ``omega = sqrt(n/lam) sech t``, ``x = -tanh t``, ``y = n x``; the
    radial coordinate is ``sqrt(n/lam)`` times the Gudermannian of t.
    """
    t = np.asarray(t, dtype=float)
    a = params.sphere_radius
    x = -np.tanh(t)
    omega = a / np.cosh(t)
    r = a * 2.0 * np.arctan(np.tanh(t / 2.0))
    return np.stack([omega, x, params.n * x, r, np.zeros_like(t)], axis=-1)


def flat_state(params: SolitonParams, t, omega0: float = 1.0):
    """Gaussian soliton: ``x = 1``, ``omega = omega0 e^t``, ``y = n - lam omega^2``."""
    t = np.asarray(t, dtype=float)
    omega = omega0 * np.exp(t)
    lam = params.lam
    y = params.n - lam * omega * omega
    r = omega0 * np.expm1(t)
    f = 0.5 * lam * omega0**2 * np.expm1(2.0 * t)
    return np.stack([omega, np.ones_like(t), y, r, f], axis=-1)


def reversed_flat_state(params: SolitonParams, t, omega0: float = 1.0):
    """Mirror image of :func:`flat_state`: ``x = -1``, ``omega = omega0 e^{-t}``."""
    s = flat_state(params, -np.asarray(t, dtype=float), omega0)
    s[..., 1:3] *= -1.0
    s[..., 3] *= -1.0
    return s


def cylinder_state(params: SolitonParams, t, y0: float = 0.0):
    """Standard cylinder: ``omega = sqrt((n-1)/lam)``, ``x = 0``, ``y = y0 - (n-1) t``."""
    t = np.asarray(t, dtype=float)
    w0 = params.cylinder_radius
    n1 = params.n - 1
    return np.stack(
        [
            np.full_like(t, w0),
            np.zeros_like(t),
            y0 - n1 * t,
            w0 * t,
            -y0 * t + 0.5 * n1 * t * t,
        ],
        axis=-1,
    )


def sphere_profile(params: SolitonParams, r):
    """``omega(r) = sqrt(n/lam) sin(sqrt(lam/n) r)`` on ``0 < r < pi sqrt(n/lam)``."""
    a = params.sphere_radius
    return a * np.sin(np.asarray(r, dtype=float) / a)


def gaussian_potential(params: SolitonParams, r):
    """``lam r^2 / 2``, the potential of both the flat metric and the cylinder."""
    return 0.5 * params.lam * np.asarray(r, dtype=float) ** 2
