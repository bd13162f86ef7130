import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cslab import curve as cv
from cslab import flow as fl
from cslab import knot as kn
from cslab import metric as mt

SPHERE = mt.fermi_sphere()


class TestCurvature:
    def test_equator_is_geodesic(self):
        assert np.abs(fl.geodesic_curvature(SPHERE, cv.equator())).max() < 1e-6

    def test_flat_circle(self):
        k = fl.geodesic_curvature(mt.flat(), cv.circle((1, 0), 0.5, n=256))
        assert np.allclose(np.abs(k), 2.0, rtol=1e-3)

    @pytest.mark.parametrize("y0", [0.3, -0.7, 1.1])
    def test_latitude_circles(self, y0):
        # a latitude circle at height y0 has geodesic curvature tan(latitude)
        lat = cv.equator(n=256).translated(0.0, y0)
        k = fl.geodesic_curvature(SPHERE, lat)
        assert np.allclose(np.abs(k), abs(math.tan(y0)), rtol=1e-3)
        merc = fl.geodesic_curvature(mt.mercator_sphere(), lat)
        assert np.allclose(np.abs(merc), abs(math.sinh(y0)), rtol=1e-3)

    def test_fourth_order_is_sharper(self):
        c = cv.circle((1, 0), 0.5, n=64)
        e2 = np.abs(np.abs(fl.geodesic_curvature(mt.flat(), c, order=2)) - 2).max()
        e4 = np.abs(np.abs(fl.geodesic_curvature(mt.flat(), c, order=4)) - 2).max()
        assert e4 < e2


class TestPolylineStep:
    def test_equator_stationary(self):
        e = cv.equator(n=256)
        c = e
        for _ in range(50):
            c = fl.step_polyline_flow(SPHERE, c, fl.polyline_dt(SPHERE, c, 0.5))
        assert np.abs(c.points - e.points).max() < 1e-10

    def test_circle_moves_inward(self):
        c = cv.circle((math.pi, 0.0), 1.0, n=128)
        dt = fl.polyline_dt(mt.flat(), c, 0.5)
        r = np.hypot(*(fl.step_polyline_flow(mt.flat(), c, dt).points - [math.pi, 0.0]).T)
        assert np.allclose(r, 1.0 - dt, atol=1e-3 * dt)

    def test_resample_uniform_spacing(self):
        c = fl.resample_uniform(mt.flat(), cv.limacon(300), 200)
        seg = np.hypot(*np.diff(c.closed_points(), axis=0).T)
        assert c.n == 200 and seg.std() / seg.mean() < 1e-2


class TestGraphStep:
    def test_zero_is_fixed(self):
        u = np.zeros(128)
        assert np.abs(fl.step_graph_flow(SPHERE, u, 1e-3)).max() <= 1e-14

    @pytest.mark.parametrize("period", [2 * math.pi, 3.0])
    def test_heat_mode_decay(self, period):
        chart = mt.flat(period)
        n = 128
        x = (np.arange(n) + 0.5) * period / n
        u = 1e-4 * np.sin(2 * math.pi * x / period)
        dt = 0.2 * (period / n) ** 2
        t, ts, amps = 0.0, [], []
        for k in range(2000):
            u = fl.step_graph_flow(chart, u, dt, x0=x[0])
            t += dt
            ts.append(t)
            amps.append(np.abs(u).max())
        rate = fl.fit_decay_rate(ts, amps)
        assert rate == pytest.approx(-(2 * math.pi / period) ** 2, rel=0.05)


class TestRunFlow:
    def test_equator_converged_immediately(self):
        tr = fl.run_flow(SPHERE, cv.equator(), [], fl.FlowOptions())
        assert tr.stop_reason == "converged" and tr.times[-1] == 0.0

    def test_stationary_monitor_and_residual(self):
        tr = fl.run_flow(SPHERE, cv.equator(n=128), [], fl.FlowOptions(t_max=0.05))
        assert fl.energy_identity_residual(tr) == 0.0
        assert kn.class_exit_monitor(kn.KnotSignature((), 0, ()), tr) is None

    def test_options_validated(self):
        with pytest.raises(ValueError):
            fl.FlowOptions(dt_safety=2.0)
        with pytest.raises(ValueError):
            fl.FlowOptions(monitors={"nonsense"})

    def test_length_decreases_and_counts_settle(self):
        s = cv.make_satellite(SPHERE, 1, 2, 0.3, n_per_period=96)
        tr = fl.run_flow(SPHERE, s, [cv.equator()], fl.FlowOptions(t_max=0.3, sample_every=10))
        L = np.array(tr.lengths)
        assert np.all(np.diff(L) <= 1e-12)
        counts = [c for c in tr.self_int if c is not None]
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_convex_corner_loop_rate(self):
        tr = fl.run_flow(mt.flat(), cv.figure_eight(256, scale=(1.0, 0.6)), [],
                         fl.FlowOptions(t_max=0.02, sample_every=10, monitors=frozenset({"loops"})))
        rates = [m for _, m, _ in fl.loop_area_rate_check(tr)]
        assert rates and all(-2 * math.pi < m < -math.pi for m in rates)

    def test_csv_outputs(self, tmp_path):
        tr = fl.run_flow(SPHERE, cv.make_satellite(SPHERE, 1, 1, 0.1, n_per_period=64),
                         [cv.equator()], fl.FlowOptions(t_max=0.05, snapshot_every=1))
        tr.write_csv(tmp_path / "trace.csv")
        tr.write_events(tmp_path / "events.csv")
        head = (tmp_path / "trace.csv").read_text().splitlines()[0]
        assert head == "t,L,kappa_sup,bending,bending_s,self_int,cross_1,min_loop_area"
        assert fl.write_snapshots(tr, tmp_path / "snaps")


@settings(max_examples=10, deadline=None)
@given(eps=st.floats(0.01, 0.3), phase=st.floats(0, 2 * math.pi))
def test_graph_length_non_increasing(eps, phase):
    n = 128
    x = (np.arange(n) + 0.5) * 2 * math.pi / n
    u = eps * np.sin(x + phase) + 0.5 * eps * np.cos(3 * x)
    chart = SPHERE

    def length(v):
        return mt.length(chart, cv.DiscreteCurve(np.stack([x, v], 1), 2 * math.pi, 1))

    before = length(u)
    dt = fl.graph_dt(chart, u, x[0], x[1] - x[0], 0.5)
    for _ in range(20):
        u = fl.step_graph_flow(chart, u, dt, x0=x[0])
    assert length(u) <= before + 1e-12


def test_fit_decay_rate_exact():
    t = np.linspace(0, 2, 20)
    assert fl.fit_decay_rate(t, 3 * np.exp(-1.5 * t)) == pytest.approx(-1.5)
    with pytest.raises(ValueError):
        fl.fit_decay_rate([0.0], [1.0])
