import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solitonlab import standard
from solitonlab.integrate import (
    AugmentedState,
    EventSpec,
    Termination,
    Tolerances,
    integrate,
    integrate_both,
    join,
    locate_event,
)
from solitonlab.phase_core import DomainError, LocalState, PhasePoint, SolitonParams

N2 = SolitonParams(2, 1.0)

# Taylor-series integration at 30 significant digits (mpmath.odefun), frozen.
ORACLES = [
    (
        SolitonParams(2, 1.0),
        (0.7, 0.3, 0.5),
        1.0,
        (
            1.2069789790498700525,
            0.88628259431710358267,
            -1.0308572202773642043,
            0.88949128463401905432,
            1.1084836953679946424,
        ),
    ),
    (
        SolitonParams(3, 2.0),
        (0.4, -0.2, 1.0),
        0.5,
        (
            0.44485396036491683716,
            0.59048735897350225923,
            0.77941603575442512432,
            0.20430463993037323855,
            -0.13377688700215925133,
        ),
    ),
    (
        SolitonParams(2, 1.0),
        (0.7, 0.3, 0.5),
        -1.0,
        (
            0.67415971072409586385,
            -0.29482156891691668164,
            0.98251611046853853175,
            -0.65484307845917662829,
            0.63987763435482226464,
        ),
    ),
]


@pytest.mark.parametrize("params, start, t1, expected", ORACLES)
def test_high_precision_oracle(params, start, t1, expected):
    traj = integrate(params, start, (0.0, t1))
    assert traj.termination is Termination.HORIZON
    assert traj.t[-1] == t1
    assert np.allclose(traj.states[-1], expected, rtol=1e-9, atol=1e-10)


class TestClosedForms:
    def test_cylinder(self):
        traj = integrate(N2, AugmentedState(PhasePoint(1, 0, 0)), (0.0, 10.0))
        assert np.max(np.abs(traj.states[-1, :3] - [1, 0, -10])) < 1e-8
        assert np.max(np.abs(traj.y + traj.t)) < 1e-8

    @pytest.mark.parametrize("n, lam", [(2, 1.0), (3, 1.0), (4, 0.5)])
    def test_cylinder_general(self, n, lam):
        params = SolitonParams(n, lam)
        traj = integrate(params, [params.cylinder_radius, 0, 1.5], (0.0, 20.0))
        exact = standard.cylinder_state(params, traj.t, y0=1.5)
        assert np.max(np.abs(traj.states - exact)) < 1e-6

    def test_flat(self):
        traj = integrate(N2, [1, 1, 1], (0.0, 3.0))
        t = traj.t
        assert np.max(np.abs(traj.omega / np.exp(t) - 1)) < 1e-7
        assert np.max(np.abs(traj.y / (2 - np.exp(2 * t)) - 1)) < 1e-7
        assert np.all(traj.x == 1.0)
        cols = [0, 2, 3, 4]
        np.testing.assert_allclose(traj.states[:, cols], standard.flat_state(N2, t)[:, cols], rtol=1e-7, atol=1e-12)

    def test_reversed_flat_backward(self):
        traj = integrate(N2, [1, -1, -1], (0.0, -3.0))
        exact = standard.reversed_flat_state(N2, traj.t)
        assert np.all(traj.x == -1.0)
        cols = [0, 2, 3, 4]
        np.testing.assert_allclose(traj.states[:, cols], exact[:, cols], rtol=1e-7, atol=1e-12)

    # The ellipse ends in a saddle whose unstable rate n - 1 amplifies any
    # transverse error by about exp((n - 1) t); n = 5 needs an atol floor
    # below the default to hold the invariants at 1e-7.
    @pytest.mark.parametrize(
        "n, tol",
        [(2, Tolerances()), (3, Tolerances()), (5, Tolerances(1e-10, 1e-16))],
    )
    def test_sphere_invariants(self, n, tol):
        params = SolitonParams(n, 1.0)
        traj = integrate(params, [params.sphere_radius, 0, 0], (0.0, 5.0), tol)
        s = traj(traj.fine_grid())
        assert np.max(np.abs(s[:, 2] - n * s[:, 1])) < 1e-7
        assert np.max(np.abs(n * s[:, 1] ** 2 + s[:, 0] ** 2 - n)) < 1e-7
        assert np.max(np.abs(s - standard.sphere_state(params, traj.fine_grid()))) < 1e-6


class TestQuadratures:
    def test_r_matches_quadrature_of_omega(self):
        traj = integrate(N2, [0.7, 0.3, 0.5], (0.0, 1.0))
        t = np.linspace(0.0, 1.0, 4001)
        s = traj(t)
        assert np.trapezoid(s[:, 0], t) == pytest.approx(s[-1, 3], rel=1e-6)

    def test_f_matches_quadrature(self):
        traj = integrate(N2, [0.7, 0.3, 0.5], (0.0, 1.0))
        t = np.linspace(0.0, 1.0, 4001)
        s = traj(t)
        integrand = N2.n * s[:, 1] - s[:, 2]
        assert np.trapezoid(integrand, t) == pytest.approx(s[-1, 4], rel=1e-6)

    def test_r_increasing(self):
        traj = integrate(N2, [0.7, 0.3, 0.5], (0.0, 2.0))
        assert np.all(np.diff(traj.r) > 0)


class TestEvents:
    def test_flat_never_crosses_one(self):
        ev = EventSpec.x_crosses(1.0)
        traj = integrate(N2, [1, 1, 1], (0.0, 3.0), events=[ev])
        assert traj.events == ()
        assert locate_event(traj, ev) is None

    def test_x_crosses_zero_falling(self):
        ev = EventSpec.x_crosses(0.0, -1)
        traj = integrate(N2, [1, 0.5, 5], (0.0, 10.0), events=[ev])
        (rec,) = traj.events_of(ev)
        assert rec.t > 0
        assert abs(rec.state[1]) < 1e-10
        assert abs(traj(rec.t)[1]) < 1e-10
        assert locate_event(traj, ev) == pytest.approx(rec.t, abs=1e-12)

    def test_bracketed_by_samples(self):
        ev = EventSpec.x_crosses(0.0, -1)
        traj = integrate(N2, [1, 0.5, 5], (0.0, 10.0), events=[ev])
        t_ev = traj.events[0].t
        k = np.searchsorted(traj.t, t_ev)
        assert traj.t[k - 1] <= t_ev <= traj.t[k]

    def test_cylinder_y_falls_through_zero_immediately(self):
        ev = EventSpec.y_crosses(0.0, -1)
        traj = integrate(N2, [1, 0, 1e-14], (0.0, 1.0), events=[ev])
        assert traj.events[0].t == pytest.approx(1e-14, abs=1e-15)

    def test_terminal_event_stops_run(self):
        ev = EventSpec.x_crosses(0.0, -1, terminal=True)
        traj = integrate(N2, [1, 0.5, 5], (0.0, 10.0), events=[ev])
        assert traj.termination is Termination.EVENT
        assert traj.t[-1] == traj.events[0].t

    def test_direction_filter(self):
        ev = EventSpec.x_crosses(0.0, 1)
        traj = integrate(N2, [1, 0.5, 5], (0.0, 0.8), events=[ev])
        assert traj.events == ()

    def test_dxdt_event(self):
        ev = EventSpec.dxdt_crosses_zero()
        traj = integrate(N2, [0.7, 0.3, 0.5], (0.0, 3.0), events=[ev])
        for rec in traj.events:
            w, x, y = rec.state[:3]
            assert abs(x * x - x * y + 1 - w * w) < 1e-9

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            EventSpec("z")

    def test_backward_event(self):
        # Mirror of the falling x = 0 crossing: rising crossing in backward time.
        fwd = integrate(N2, [1, 0.5, 5], (0.0, 10.0), events=[EventSpec.x_crosses(0.0, -1)])
        back = integrate(N2, [1, -0.5, -5], (0.0, -10.0), events=[EventSpec.x_crosses(0.0, 1)])
        assert back.events[0].t == -fwd.events[0].t


class TestGuards:
    def test_blowup(self):
        traj = integrate(N2, [0.1, 1.5, -1], (0.0, 10.0))
        assert traj.termination is Termination.BLOWUP
        assert traj.x[-1] == pytest.approx(1e6, rel=1e-9)
        assert traj.t[-1] == pytest.approx(0.3071, abs=1e-3)
        assert math.isfinite(traj.r[-1])

    def test_collapse(self):
        traj = integrate(N2, [0.5, -2.0, -3.0], (0.0, 50.0))
        assert traj.termination is Termination.COLLAPSE
        assert traj.omega[-1] == pytest.approx(1e-12, rel=1e-6)
        assert abs(traj.x[-1]) >= 0.5

    def test_collapse_near_p0_backward(self):
        traj = integrate(N2, [1, 1, 1], (0.0, -40.0))
        assert traj.termination is Termination.COLLAPSE
        assert np.allclose(traj.states[-1, :3], [0, 1, 2], atol=1e-11)

    def test_step_underflow_reported(self):
        # A ceiling far above what the step-size floor can resolve.
        traj = integrate(N2, [0.1, 1.5, -1], (0.0, 10.0), blowup_ceiling=1e300)
        assert traj.termination in (Termination.UNDERFLOW, Termination.BLOWUP)


class TestValidation:
    def test_empty_span(self):
        with pytest.raises(DomainError):
            integrate(N2, [1, 0, 0], (1.0, 1.0))

    def test_non_finite_start(self):
        with pytest.raises(DomainError):
            integrate(N2, [1, math.nan, 0], (0.0, 1.0))

    def test_negative_omega(self):
        with pytest.raises(DomainError):
            integrate(N2, [-1, 0, 0], (0.0, 1.0))

    def test_rtol_floor(self):
        with pytest.raises(DomainError):
            Tolerances(rtol=1e-14)

    def test_steady_off_plane(self):
        with pytest.raises(DomainError):
            integrate(SolitonParams(2, steady=True), [0.5, 0, 0], (0.0, 1.0))


class TestTrajectory:
    def test_dense_output_hits_samples(self):
        traj = integrate(N2, [0.7, 0.3, 0.5], (0.0, 2.0))
        assert np.allclose(traj(traj.t), traj.states, rtol=1e-13, atol=1e-13)

    def test_sample_times_monotone(self):
        for t1 in (3.0, -3.0):
            traj = integrate(N2, [0.7, 0.3, 0.5], (0.0, t1))
            assert np.all(np.diff(traj.t) * np.sign(t1) > 0)

    def test_join_evaluates_both_sides(self):
        b = integrate(N2, [0.7, 0.3, 0.5], (0.0, -3.0))
        f = integrate(N2, [0.7, 0.3, 0.5], (0.0, 3.0))
        j = join(b, f)
        assert np.all(np.diff(j.t) > 0)
        assert np.array_equal(j(-1.0), b(-1.0))
        assert np.array_equal(j(np.array([-2.5, 2.5])), np.stack([b(-2.5), f(2.5)]))
        assert j.start_termination is b.termination

    def test_join_rejects_mismatch(self):
        b = integrate(N2, [0.7, 0.3, 0.5], (0.0, -1.0))
        f = integrate(N2, [0.7, 0.3, 0.6], (0.0, 1.0))
        with pytest.raises(DomainError):
            join(b, f)

    def test_local_start_matches_point_start(self):
        loc = LocalState(1, 0.2, 0.01, -0.02)
        a = integrate(N2, loc, (0.0, 2.0))
        b = integrate(N2, loc.point(N2), (0.0, 2.0))
        assert np.allclose(a.states[-1], b.states[-1], rtol=1e-8)

    def test_halved_tolerances(self):
        tol = Tolerances().halved()
        assert tol == Tolerances(5e-11, 5e-13)
        a = integrate(N2, [0.7, 0.3, 0.5], (0.0, 1.0), tol)
        assert np.allclose(a.states[-1], ORACLES[0][3], rtol=1e-9, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.1, 2.0),
    st.floats(-2.0, 2.0),
    st.floats(-5.0, 5.0),
)
def test_reflection_duality_exact(w, x, y):
    f = integrate(N2, [w, x, y], (0.0, 2.0))
    b = integrate(N2, [w, -x, -y], (0.0, -2.0))
    assert np.array_equal(f.t, -b.t)
    assert np.array_equal(f.states[:, [0, 4]], b.states[:, [0, 4]])
    assert np.array_equal(f.states[:, 1:4], -b.states[:, 1:4])


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(-5.0, 5.0))
def test_plane_x_zero_cylinder_only(w, y):
    # x = 0 is invariant only where dx/dt = n - 1 - lam omega^2 vanishes.
    traj = integrate_both(N2, [1.0, 0.0, y], 3.0, 3.0)
    assert np.all(traj.x == 0.0)
    other = integrate(N2, [w, 0.0, y], (0.0, 0.5))
    if abs(w - 1.0) > 1e-3:
        assert np.max(np.abs(other.x)) > 0
