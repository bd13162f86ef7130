"""Surface metrics on cylinder charts (R / L_x Z) x (y_min, y_max).

Three kinds of chart are supported:

* ``conformal``: e^{2 phi(y)} (dx^2 + dy^2)
* ``fermi``:     f(y)^2 dx^2 + dy^2
* ``general``:   E dx^2 + 2 F dx dy + G dy^2 with E, F, G functions of (x, y)

Conformal and Fermi charts carry closed-form Christoffel symbols and Gauss
curvature.  General charts are handled with central finite differences of
step ``1e-4 * band width``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

ProfileFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]
EFGFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]

KINDS = ("conformal", "fermi", "general")

# Gauss-Legendre rules used by the boundary-integral area formula.
_GL_SEG = np.polynomial.legendre.leggauss(4)
_GL_ETA = np.polynomial.legendre.leggauss(24)


class ChartDomainError(ValueError):
    """A point lies outside the open band of a chart."""


class Christoffel(NamedTuple):
    """Christoffel symbols; ``x_xy`` stands for Gamma^x_{xy} and so on."""

    x_xx: np.ndarray
    x_xy: np.ndarray
    x_yy: np.ndarray
    y_xx: np.ndarray
    y_xy: np.ndarray
    y_yy: np.ndarray


@dataclass(frozen=True)
class GraphCoefficients:
    """Coefficients of the graph form of curve shortening at a point (x, u).

    With lam = sqrt(E + 2 F u_x + G u_x^2) the flow of a graph y = u(x) reads
    u_t = (u_xx + P + Q u_x + R u_x^2 + S u_x^3) / lam^2.
    """

    P: float
    Q: float
    R: float
    S: float
    E: float
    F: float
    G: float


@dataclass(frozen=True, eq=False)
class MetricChart:
    """A metric on a single cylinder band.

    ``profile`` is phi (conformal) or f (fermi) and returns value, first and
    second derivative.  ``efg`` is only used by the general kind.
    """

    kind: str
    period_x: float
    y_band: tuple[float, float]
    profile: ProfileFn | None = None
    efg_fn: EFGFn | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown chart kind {self.kind!r}")
        if not self.period_x > 0:
            raise ValueError("period_x must be positive")
        lo, hi = self.y_band
        if not lo < hi:
            raise ValueError("empty y band")
        if self.kind == "general":
            if self.efg_fn is None:
                raise ValueError("general chart needs efg_fn")
        elif self.profile is None:
            raise ValueError(f"{self.kind} chart needs a profile")
        self._check_positive()

    # -- basic queries -------------------------------------------------
    @property
    def band_width(self) -> float:
        return self.y_band[1] - self.y_band[0]

    @property
    def fd_step(self) -> float:
        return 1e-4 * self.band_width

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y > self.y_band[0]) & (y < self.y_band[1])

    def check(self, y) -> None:
        if not np.all(self.contains(y)):
            bad = np.asarray(y, dtype=float)[~self.contains(y)]
            raise ChartDomainError(
                f"y={bad.flat[0]!r} outside band {self.y_band} of chart {self.name}"
            )

    def _check_positive(self, n: int = 41) -> None:
        lo, hi = self.y_band
        margin = 1e-6 * (hi - lo)
        ys = np.linspace(lo + margin, hi - margin, n)
        xs = np.linspace(0.0, self.period_x, 7)
        X, Y = np.meshgrid(xs, ys)
        E, F, G = self.efg(X, Y)
        if not (np.all(E > 0) and np.all(G > 0) and np.all(E * G - F * F > 0)):
            raise ValueError(f"metric {self.name} is not positive definite on its band")

    # -- metric coefficients -------------------------------------------
    def efg(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "conformal":
            phi, _, _ = self.profile(y)
            e = np.exp(2.0 * phi) + 0.0 * x
            return e, np.zeros_like(e), e.copy()
        if self.kind == "fermi":
            f, _, _ = self.profile(y)
            E = f * f + 0.0 * x
            return E, np.zeros_like(E), np.ones_like(E)
        E, F, G = self.efg_fn(x, y)
        shape = np.broadcast(x, y).shape
        return (np.broadcast_to(E, shape).astype(float),
                np.broadcast_to(F, shape).astype(float),
                np.broadcast_to(G, shape).astype(float))

    def sqrt_det(self, x, y) -> np.ndarray:
        E, F, G = self.efg(x, y)
        return np.sqrt(E * G - F * F)

    def _efg_derivatives(self, x, y):
        """First derivatives of E, F, G by fourth-order central differences."""
        h = self.fd_step
        p1x, m1x = self.efg(x + h, y), self.efg(x - h, y)
        p2x, m2x = self.efg(x + 2 * h, y), self.efg(x - 2 * h, y)
        p1y, m1y = self.efg(x, y + h), self.efg(x, y - h)
        p2y, m2y = self.efg(x, y + 2 * h), self.efg(x, y - 2 * h)
        s = 1.0 / (12.0 * h)
        dx = [(8 * (a - b) - (c - d)) * s for a, b, c, d in zip(p1x, m1x, p2x, m2x)]
        dy = [(8 * (a - b) - (c - d)) * s for a, b, c, d in zip(p1y, m1y, p2y, m2y)]
        return dx[0], dy[0], dx[1], dy[1], dx[2], dy[2]

    def christoffel(self, x, y) -> Christoffel:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        zero = np.zeros(np.broadcast(x, y).shape)
        if self.kind == "conformal":
            _, d1, _ = self.profile(y)
            d1 = d1 + zero
            return Christoffel(zero, d1, zero, -d1, zero, d1)
        if self.kind == "fermi":
            f, d1, _ = self.profile(y)
            f = f + zero
            d1 = d1 + zero
            return Christoffel(zero, d1 / f, zero, -f * d1, zero, zero)
        E, F, G = self.efg(x, y)
        Ex, Ey, Fx, Fy, Gx, Gy = self._efg_derivatives(x, y)
        det = E * G - F * F
        # lowered symbols Gamma_{ij,l} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
        xx_x = 0.5 * Ex
        xx_y = Fx - 0.5 * Ey
        xy_x = 0.5 * Ey
        xy_y = 0.5 * Gx
        yy_x = Fy - 0.5 * Gx
        yy_y = 0.5 * Gy
        ixx, ixy, iyy = G / det, -F / det, E / det

        def raise_(lx, ly):
            return ixx * lx + ixy * ly, ixy * lx + iyy * ly

        a, b = raise_(xx_x, xx_y)
        c, d = raise_(xy_x, xy_y)
        e, g = raise_(yy_x, yy_y)
        return Christoffel(a, c, e, b, d, g)

    def as_general(self) -> "MetricChart":
        """Same metric re-expressed as a general (finite-difference) chart."""
        return MetricChart("general", self.period_x, self.y_band,
                           efg_fn=lambda x, y: self.efg(x, y),
                           name=self.name + "[general]", params=dict(self.params))

    def sup_gauss_curvature(self, n: int = 401) -> float:
        lo, hi = self.y_band
        margin = 1e-3 * (hi - lo)
        ys = np.linspace(lo + margin, hi - margin, n)
        nx = 1 if self.kind != "general" else 16
        xs = np.linspace(0.0, self.period_x, nx, endpoint=False)
        X, Y = np.meshgrid(xs, ys)
        return float(np.max(gauss_curvature(self, X, Y)))


# ---------------------------------------------------------------------------
# curvature and graph coefficients

def gauss_curvature(chart: MetricChart, x, y):
    """Gauss curvature K(x, y); scalar in, scalar out."""
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    chart.check(y)
    if chart.kind == "conformal":
        phi, _, d2 = chart.profile(y)
        K = -np.exp(-2.0 * phi) * d2 + 0.0 * x
    elif chart.kind == "fermi":
        f, _, d2 = chart.profile(y)
        K = -d2 / f + 0.0 * x
    else:
        K = _brioschi(chart, x, y)
    return float(K) if scalar else K


def _second_difference(fn, h):
    """Fourth-order central second difference of fn(t) at t = 0."""
    return (-fn(2 * h) + 16 * fn(h) - 30 * fn(0.0) + 16 * fn(-h) - fn(-2 * h)) / (12 * h * h)


def _brioschi(chart: MetricChart, x, y):
    h = chart.fd_step
    E, F, G = chart.efg(x, y)
    Ex, Ey, Fx, Fy, Gx, Gy = chart._efg_derivatives(x, y)
    Eyy = _second_difference(lambda t: chart.efg(x, y + t)[0], h)
    Gxx = _second_difference(lambda t: chart.efg(x + t, y)[2], h)

    def Fx_at(t):
        return (8 * (chart.efg(x + h, y + t)[1] - chart.efg(x - h, y + t)[1])
                - (chart.efg(x + 2 * h, y + t)[1] - chart.efg(x - 2 * h, y + t)[1])) / (12 * h)
    Fxy = (8 * (Fx_at(h) - Fx_at(-h)) - (Fx_at(2 * h) - Fx_at(-2 * h))) / (12 * h)

    a11 = -0.5 * Eyy + Fxy - 0.5 * Gxx
    a12, a13 = 0.5 * Ex, Fx - 0.5 * Ey
    a21, a31 = Fy - 0.5 * Gx, 0.5 * Gy
    det1 = (a11 * (E * G - F * F) - a12 * (a21 * G - F * a31) + a13 * (a21 * F - E * a31))
    b12, b13 = 0.5 * Ey, 0.5 * Gx
    det2 = -b12 * (b12 * G - F * b13) + b13 * (b12 * F - E * b13)
    return (det1 - det2) / (E * G - F * F) ** 2


def graph_coefficient_arrays(chart: MetricChart, x, u):
    """Vectorized P, Q, R, S, E, F, G at points (x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    chart.check(u)
    gam = chart.christoffel(x, u)
    E, F, G = chart.efg(x, u)
    P = gam.y_xx
    Q = 2.0 * gam.y_xy - gam.x_xx
    R = gam.y_yy - 2.0 * gam.x_xy
    S = -gam.x_yy
    return P, Q, R, S, E, F, G


def graph_coefficients(chart: MetricChart, x: float, u: float) -> GraphCoefficients:
    vals = graph_coefficient_arrays(chart, float(x), float(u))
    return GraphCoefficients(*(float(v) for v in vals))


# ---------------------------------------------------------------------------
# length and area

def length(chart: MetricChart, curve) -> float:
    """Metric length of a closed polyline with midpoint coefficients."""
    P = curve.closed_points()
    d = np.diff(P, axis=0)
    mid = 0.5 * (P[1:] + P[:-1])
    chart.check(P[:, 1])
    E, F, G = chart.efg(mid[:, 0], mid[:, 1])
    return float(np.sum(np.sqrt(E * d[:, 0] ** 2 + 2 * F * d[:, 0] * d[:, 1] + G * d[:, 1] ** 2)))


def chart_integral(chart: MetricChart, closed_boundary, density=None) -> float:
    """Integral of ``density * dA`` over the region bounded by a contractible loop.

    Uses the boundary form -\\oint A(x, y) dx with A(x, y) = int_0^y density*sqrt(det g) d eta.
    Counterclockwise boundaries give positive values.
    """
    if closed_boundary.x_winding != 0:
        raise ValueError("boundary has nonzero x-winding; it does not enclose a region")
    return chart_integral_points(chart, closed_boundary.closed_points(), density)


def chart_integral_points(chart: MetricChart, P: np.ndarray, density=None) -> float:
    """Boundary integral over a closed point array (last point is the closing vertex).

    For arcs that wind around the cylinder this is the signed integral over the
    region between the arc and the line y = 0.
    """
    chart.check(P[:, 1])
    a, b = P[:-1], P[1:]
    ts, ws = _GL_SEG
    ts = 0.5 * (ts + 1.0)
    ws = 0.5 * ws
    px = a[:, 0, None] + (b[:, 0] - a[:, 0])[:, None] * ts[None, :]
    py = a[:, 1, None] + (b[:, 1] - a[:, 1])[:, None] * ts[None, :]
    A = _antiderivative(chart, px, py, density)
    dx = (b[:, 0] - a[:, 0])[:, None]
    return float(-np.sum(A * dx * ws[None, :]))


def _antiderivative(chart, px, py, density):
    s, w = _GL_ETA
    s = 0.5 * (s + 1.0)
    w = 0.5 * w
    eta = py[..., None] * s
    xx = np.broadcast_to(px[..., None], eta.shape)
    integrand = chart.sqrt_det(xx, eta)
    if density is not None:
        integrand = integrand * density(xx, eta)
    return py * np.sum(integrand * w, axis=-1)


def signed_chart_area(chart: MetricChart, closed_boundary) -> float:
    return chart_integral(chart, closed_boundary)


def curvature_integral(chart: MetricChart, closed_boundary) -> float:
    """Signed integral of K dS over the enclosed region."""
    return chart_integral(chart, closed_boundary,
                          density=lambda x, y: gauss_curvature(chart, x, y))


def epsilon_g(chart: MetricChart) -> float:
    """pi / (2 sup K) when sup K > 0, otherwise infinity."""
    k = chart.sup_gauss_curvature()
    return math.pi / (2.0 * k) if k > 0 else math.inf


# ---------------------------------------------------------------------------
# named families

def _const_profile(c: float) -> ProfileFn:
    def prof(y):
        y = np.asarray(y, dtype=float)
        return np.full_like(y, c), np.zeros_like(y), np.zeros_like(y)
    return prof


def flat(period_x: float = 2 * math.pi, y_band=(-10.0, 10.0)) -> MetricChart:
    return MetricChart("conformal", period_x, tuple(y_band), profile=_const_profile(0.0),
                       name="flat", params={"period_x": period_x})


def mercator_sphere(y_band=(-4.0, 4.0)) -> MetricChart:
    """Unit sphere in Mercator coordinates, phi = -log cosh y."""
    def prof(y):
        y = np.asarray(y, dtype=float)
        t = np.tanh(y)
        return -np.log(np.cosh(y)), -t, -(1.0 - t * t)
    return MetricChart("conformal", 2 * math.pi, tuple(y_band), profile=prof,
                       name="mercator_sphere")


def fermi_sphere(omega: float = 1.0) -> MetricChart:
    """Sphere of curvature omega^2 in latitude coordinates, f = cos(omega y)."""
    def prof(y):
        y = np.asarray(y, dtype=float)
        c, s = np.cos(omega * y), np.sin(omega * y)
        return c, -omega * s, -omega * omega * c
    half = 0.5 * math.pi / omega
    return MetricChart("fermi", 2 * math.pi, (-half, half), profile=prof,
                       name="fermi_sphere", params={"omega": omega})


def hyperbolic_neck(y_band=(-3.0, 3.0), period_x: float = 2 * math.pi) -> MetricChart:
    """Catenoid-like neck f = cosh y with K = -1 and a stable waist at y = 0."""
    def prof(y):
        y = np.asarray(y, dtype=float)
        c, s = np.cosh(y), np.sinh(y)
        return c, s, c
    return MetricChart("fermi", period_x, tuple(y_band), profile=prof,
                       name="hyperbolic_neck")


def spheroid(c: float) -> MetricChart:
    """Oblate (c < 1) or prolate spheroid (cos y cos x, cos y sin x, c sin y)."""
    if not c > 0:
        raise ValueError("spheroid axis ratio must be positive")

    def efg(x, y):
        cy, sy = np.cos(y), np.sin(y)
        E = cy * cy + 0.0 * x
        G = sy * sy + c * c * cy * cy + 0.0 * x
        return E, np.zeros_like(E), G
    half = 0.5 * math.pi
    return MetricChart("general", 2 * math.pi, (-half, half), efg_fn=efg,
                       name="spheroid", params={"c": c})


def paper_waist(a: float = 0.5, period_x: float = 1.0, y_band=(-2.0, 2.0)) -> MetricChart:
    """Conformal waist e^{a y^2}(dx^2 + dy^2) on (R/period_x Z) x band.

    ``a = 1/2`` is the literal waist metric; its Jacobi operator has K(0) = -a.
    """
    def prof(y):
        y = np.asarray(y, dtype=float)
        return 0.5 * a * y * y, a * y, np.full_like(y, a)
    return MetricChart("conformal", period_x, tuple(y_band), profile=prof,
                       name="paper_waist", params={"a": a, "period_x": period_x})


def tabulated(kind: str, y_samples, values, period_x: float = 2 * math.pi,
              y_band=None) -> MetricChart:
    """Conformal or fermi chart from samples of phi or f, cubic-spline interpolated."""
    if kind not in ("conformal", "fermi"):
        raise ValueError("tabulated charts are conformal or fermi")
    ys = np.asarray(y_samples, dtype=float)
    spl = CubicSpline(ys, np.asarray(values, dtype=float))
    d1, d2 = spl.derivative(1), spl.derivative(2)

    def prof(y):
        y = np.asarray(y, dtype=float)
        return spl(y), d1(y), d2(y)
    band = tuple(y_band) if y_band is not None else (float(ys[0]), float(ys[-1]))
    return MetricChart(kind, period_x, band, profile=prof, name="tabulated")


FAMILIES = {
    "flat": flat,
    "mercator_sphere": mercator_sphere,
    "fermi_sphere": fermi_sphere,
    "hyperbolic_neck": hyperbolic_neck,
    "spheroid": spheroid,
    "paper_waist": paper_waist,
}


def named_chart(name: str, **params) -> MetricChart:
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown metric family {name!r}; known: {sorted(FAMILIES)}") from None
    return factory(**params)
