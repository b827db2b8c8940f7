import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from solitonlab.equilibria import (
    DEFAULT_DELTA,
    departure_angle,
    equilibrium_points,
    flat_departure,
    sphere_departure,
    stable_local,
    stable_seed,
    unstable_local,
    unstable_seed,
)
from solitonlab.integrate import integrate
from solitonlab.phase_core import DomainError, LocalState, PhasePoint, SolitonParams, phi, reflect

N2 = SolitonParams(2, 1.0)
GRID = [SolitonParams(n, lam) for n in range(2, 11) for lam in (0.25, 1.0, 4.0)]


@pytest.mark.parametrize("params", GRID, ids=lambda p: f"n{p.n}-lam{p.lam:g}")
def test_spectrum(params):
    e0, e1 = equilibrium_points(params)
    n = params.n
    assert np.allclose(e0.eigenvalues, sorted([2, 1, 1 - n], reverse=True), rtol=0, atol=1e-10)
    assert np.allclose(e1.eigenvalues, sorted([-2, -1, n - 1], reverse=True), rtol=0, atol=1e-10)
    for e in (e0, e1):
        assert phi(params, e.point) == (0, 0, 0)
        assert max(e.residuals()) < 1e-10
        assert all(abs(np.linalg.norm(v) - 1) < 1e-15 for v in e.eigenvectors)


def test_points_n2():
    e0, e1 = equilibrium_points(N2)
    assert e0.point == PhasePoint(0, 1, 2)
    assert e1.point == PhasePoint(0, -1, -2)


def test_n5_eigenvalues():
    e0, _ = equilibrium_points(SolitonParams(5))
    assert e0.eigenvalues == (2.0, 1.0, -4.0)


@pytest.mark.parametrize("n", [2, 3, 7])
def test_eigenvectors_at_p0(n):
    e0, _ = equilibrium_points(SolitonParams(n))
    expected = {2.0: (0, 1, -n), 1.0: (1, 0, 0), float(1 - n): (0, 1, 1)}
    for mu, v in zip(e0.eigenvalues, e0.eigenvectors):
        w = np.array(expected[mu], dtype=float)
        w /= np.linalg.norm(w)
        assert min(np.linalg.norm(v - w), np.linalg.norm(v + w)) < 1e-12


class TestSeeds:
    def test_theta_zero(self):
        assert unstable_seed(N2, 0.0, 1e-6) == PhasePoint(1e-6, 1, 2)

    def test_theta_half_pi(self):
        p = unstable_seed(N2, math.pi / 2, 1e-6)
        assert p.omega == pytest.approx(0, abs=1e-22)
        assert p.x == pytest.approx(1 + 1e-6 / math.sqrt(5), abs=1e-16)
        assert p.y == pytest.approx(2 - 2e-6 / math.sqrt(5), abs=1e-15)

    def test_stable_theta_zero(self):
        assert stable_seed(N2, 0.0, 1e-6) == PhasePoint(1e-6, -1, -2)

    @given(st.floats(-math.pi / 2, math.pi / 2), st.floats(1e-9, 1e-4))
    def test_stable_is_reflected_unstable(self, theta, delta):
        assert stable_seed(N2, theta, delta) == reflect(unstable_seed(N2, theta, delta))
        assert stable_local(N2, theta, delta) == unstable_local(N2, theta, delta).reflect()

    @given(st.floats(-math.pi / 2, math.pi / 2), st.floats(1e-9, 1e-4))
    def test_distance_is_delta(self, theta, delta):
        loc = unstable_local(N2, theta, delta)
        assert math.hypot(loc.omega, loc.dx, loc.dy) == pytest.approx(delta, rel=1e-14)

    @pytest.mark.parametrize("theta", [2.0, -2.5, math.pi])
    def test_negative_omega_rejected(self, theta):
        with pytest.raises(DomainError):
            unstable_seed(N2, theta)

    def test_steady_seed_in_plane(self):
        p = unstable_seed(SolitonParams(2, 1.0, steady=True), math.pi / 2)
        assert p.omega == 0.0

    @pytest.mark.parametrize("delta", [0.0, -1e-6, 2e-4])
    def test_bad_delta(self, delta):
        with pytest.raises(DomainError):
            unstable_seed(N2, 0.0, delta)

    @pytest.mark.parametrize("theta", [-4.0, math.pi + 1e-9])
    def test_bad_theta(self, theta):
        with pytest.raises(DomainError):
            unstable_seed(N2, theta)

    def test_stable_component_decays(self):
        # Offset along the stable eigenvector (0, 1, 1); omega starts small
        # enough that its growth does not feed back over the window.
        n = 3
        params = SolitonParams(n)
        traj = integrate(params, LocalState(1, 1e-10, 1e-8, 1e-8), (0.0, 3.0))
        t = np.linspace(0.5, 3.0, 11)
        s = traj(t)
        b = (n * (s[:, 1] - 1) + (s[:, 2] - n)) / (n + 1)
        rate = np.polyfit(t, np.log(b), 1)[0]
        assert rate == pytest.approx(1 - n, abs=1e-3)

    def test_backward_from_stable_seed_mirrors_forward(self):
        fwd = integrate(N2, unstable_local(N2, 0.3), (0.0, 8.0))
        back = integrate(N2, stable_local(N2, 0.3), (0.0, -8.0))
        assert np.array_equal(fwd.t, -back.t)
        assert np.array_equal(fwd.x, -back.x)
        assert np.array_equal(fwd.omega, back.omega)


class TestDeparture:
    def test_known_values(self):
        assert sphere_departure(N2) == pytest.approx(1 / 12)
        assert flat_departure(N2) == pytest.approx(1 / 3)
        assert sphere_departure(SolitonParams(3, 2.0)) == pytest.approx(2 * 2 / 24)

    @given(st.floats(-2, 2), st.floats(1e-8, 1e-4))
    def test_inverts_relation(self, kappa, delta):
        th = departure_angle(N2, kappa, delta)
        lhs = math.sin(th) / math.cos(th) ** 2
        assert lhs == pytest.approx(kappa * delta * math.sqrt(5), rel=1e-12, abs=1e-300)

    def test_sphere_offset_matches_closed_form(self):
        # On the sphere x - 1 = -lam omega^2 / (2n) + O(omega^4); its component
        # along (1, -n) in the basis {(1, -n), (1, 1)} is the sphere value.
        n, lam, w = 4, 1.5, 1e-3
        dx, dy = -lam * w * w / (2 * n), -lam * w * w / 2
        a = (dx - dy) / (n + 1)
        assert a / (w * w) == pytest.approx(sphere_departure(SolitonParams(n, lam)), rel=1e-12)

    def test_default_delta(self):
        assert DEFAULT_DELTA == 1e-6
