import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from cslab import curve as cv
from cslab import metric as mt


def square(side=1.0, corner=(1.0, 0.2), n_side=8):
    t = np.arange(n_side) / n_side * side
    x0, y0 = corner
    pts = np.concatenate([
        np.stack([x0 + t, np.full(n_side, y0)], 1),
        np.stack([np.full(n_side, x0 + side), y0 + t], 1),
        np.stack([x0 + side - t, np.full(n_side, y0 + side)], 1),
        np.stack([np.full(n_side, x0), y0 + side - t], 1),
    ])
    return cv.DiscreteCurve(pts, 2 * math.pi)


class TestGaussCurvature:
    def test_mercator_sphere_is_unit(self):
        ch = mt.mercator_sphere()
        ys = np.linspace(-3, 3, 13)
        assert np.allclose(mt.gauss_curvature(ch, 0.3 + 0 * ys, ys), 1.0, atol=1e-12)

    def test_flat_is_zero(self):
        assert mt.gauss_curvature(mt.flat(), 1.0, 2.0) == 0.0

    def test_neck_waist(self):
        assert mt.gauss_curvature(mt.hyperbolic_neck(), 0.0, 0.0) == pytest.approx(-1.0, abs=1e-14)

    def test_scalar_in_scalar_out(self):
        assert isinstance(mt.gauss_curvature(mt.fermi_sphere(), 0.0, 0.1), float)

    def test_outside_band(self):
        with pytest.raises(mt.ChartDomainError):
            mt.gauss_curvature(mt.fermi_sphere(), 0.0, 2.0)

    @pytest.mark.parametrize("chart", [mt.mercator_sphere((-3, 3)), mt.fermi_sphere(1.3),
                                       mt.hyperbolic_neck(), mt.paper_waist()],
                             ids=lambda c: c.name)
    def test_brioschi_matches_closed_form(self, chart):
        lo, hi = chart.y_band
        ys = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 9)
        xs = np.linspace(0, chart.period_x, 9)
        X, Y = np.meshgrid(xs, ys)
        closed = mt.gauss_curvature(chart, X, Y)
        general = mt.gauss_curvature(chart.as_general(), X, Y)
        assert np.max(np.abs(closed - general)) < 1e-6

    @pytest.mark.parametrize("c", [0.5, 0.6, 0.8, 1.25])
    def test_spheroid_equator(self, c):
        assert mt.gauss_curvature(mt.spheroid(c), 1.0, 0.0) == pytest.approx(1 / c ** 2, rel=1e-6)

    def test_epsilon_g(self):
        assert mt.epsilon_g(mt.fermi_sphere()) == pytest.approx(math.pi / 2, rel=1e-12)
        assert mt.epsilon_g(mt.flat()) == math.inf
        assert mt.epsilon_g(mt.hyperbolic_neck()) == math.inf


class TestGraphCoefficients:
    def test_flat(self):
        g = mt.graph_coefficients(mt.flat(), 0.4, 1.3)
        assert (g.P, g.Q, g.R, g.S, g.E, g.F, g.G) == (0, 0, 0, 0, 1, 0, 1)

    @pytest.mark.parametrize("chart", [mt.fermi_sphere(), mt.fermi_sphere(0.7), mt.hyperbolic_neck(),
                                       mt.spheroid(0.6), mt.paper_waist()], ids=lambda c: c.name)
    def test_geodesic_base_line(self, chart):
        for x in np.linspace(0, chart.period_x, 7):
            g = mt.graph_coefficients(chart, x, 0.0)
            assert abs(g.P) <= 1e-10 and abs(g.Q) <= 1e-10

    @pytest.mark.parametrize("chart", [mt.fermi_sphere(), mt.hyperbolic_neck(), mt.spheroid(0.8)],
                             ids=lambda c: c.name)
    def test_dP_du_is_gauss_curvature(self, chart):
        h = 1e-5
        x = 0.7
        dP = (mt.graph_coefficients(chart, x, h).P - mt.graph_coefficients(chart, x, -h).P) / (2 * h)
        assert dP == pytest.approx(mt.gauss_curvature(chart, x, 0.0), abs=1e-5)

    def test_outside_band(self):
        with pytest.raises(mt.ChartDomainError):
            mt.graph_coefficients(mt.fermi_sphere(), 0.0, -1.7)


class TestLengthArea:
    def test_equator_length(self):
        assert mt.length(mt.fermi_sphere(), cv.equator(n=512)) == pytest.approx(2 * math.pi, abs=1e-4)

    def test_cover_length(self):
        c3 = cv.q_cover(cv.equator(n=512), 3)
        assert mt.length(mt.fermi_sphere(), c3) == pytest.approx(6 * math.pi, abs=1e-3)

    def test_square(self):
        sq = square()
        assert mt.length(mt.flat(), sq) == 4.0
        assert mt.signed_chart_area(mt.flat(), sq) == pytest.approx(1.0, abs=1e-14)

    def test_circle_area(self):
        r = 0.7
        c = cv.circle((2.0, 0.3), r, n=512)
        assert mt.signed_chart_area(mt.flat(), c) == pytest.approx(math.pi * r * r, abs=1e-4 * 5)

    def test_mercator_circle_matches_2d_quadrature(self):
        ch = mt.mercator_sphere()
        cx, cy, r = 1.0, 0.8, 0.5
        c = cv.circle((cx, cy), r, n=2048)
        exact, _ = dblquad(lambda y, x: math.cosh(y) ** -2, cx - r, cx + r,
                           lambda x: cy - math.sqrt(max(r * r - (x - cx) ** 2, 0)),
                           lambda x: cy + math.sqrt(max(r * r - (x - cx) ** 2, 0)),
                           epsabs=1e-12, epsrel=1e-12)
        assert mt.signed_chart_area(ch, c) == pytest.approx(exact, abs=1e-4)

    def test_orientation_reversal(self):
        ch = mt.mercator_sphere()
        c = cv.circle((1.0, 0.4), 0.6, n=256)
        assert mt.signed_chart_area(ch, c.reversed()) == pytest.approx(-mt.signed_chart_area(ch, c), abs=1e-14)

    def test_additive_under_splitting(self):
        ch = mt.fermi_sphere()
        whole = square(1.0, (1.0, -0.5), 16)

        def rect(x0, x1, y0, y1, n=16):
            t = np.arange(n) / n
            pts = np.concatenate([np.stack([x0 + (x1 - x0) * t, np.full(n, y0)], 1),
                                  np.stack([np.full(n, x1), y0 + (y1 - y0) * t], 1),
                                  np.stack([x1 - (x1 - x0) * t, np.full(n, y1)], 1),
                                  np.stack([np.full(n, x0), y1 - (y1 - y0) * t], 1)])
            return cv.DiscreteCurve(pts, 2 * math.pi)
        a = mt.signed_chart_area(ch, rect(1.0, 1.5, -0.5, 0.5))
        b = mt.signed_chart_area(ch, rect(1.5, 2.0, -0.5, 0.5))
        assert a + b == pytest.approx(mt.signed_chart_area(ch, whole), abs=1e-12)

    def test_winding_boundary_rejected(self):
        with pytest.raises(ValueError):
            mt.signed_chart_area(mt.flat(), cv.equator())


class TestCharts:
    def test_non_positive_metric_rejected(self):
        with pytest.raises(ValueError):
            mt.MetricChart("general", 1.0, (-2.0, 2.0), efg_fn=lambda x, y: (y, 0.0 * y, 1.0 + 0.0 * y))

    def test_named_chart(self):
        assert mt.named_chart("spheroid", c=0.6).params["c"] == 0.6
        with pytest.raises(ValueError):
            mt.named_chart("torus")

    def test_tabulated_matches_profile(self):
        ys = np.linspace(-1.4, 1.4, 400)
        tab = mt.tabulated("fermi", ys, np.cos(ys))
        assert mt.gauss_curvature(tab, 0.0, 0.3) == pytest.approx(1.0, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0, 2 * math.pi), y=st.floats(-1.2, 1.2))
def test_spheroid_curvature_positive_and_bounded(x, y):
    K = mt.gauss_curvature(mt.spheroid(0.6), x, y)
    # oblate spheroid: curvature is largest on the equator
    assert 0 < K <= 1 / 0.36 + 1e-6


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0.05, 1.0), cx=st.floats(0, 6), cy=st.floats(-3, 3))
def test_flat_circle_area_property(r, cx, cy):
    c = cv.circle((cx, cy), r, n=512)
    assert mt.signed_chart_area(mt.flat(), c) == pytest.approx(math.pi * r * r, rel=1e-4)
