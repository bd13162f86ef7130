"""Closed geodesics on surfaces of revolution f(y)^2 dx^2 + h(y)^2 dy^2.

Along a geodesic the Clairaut constant nu = f^2 dx/ds is conserved, so a
non-meridian geodesic through the equator oscillates between the two
heights where f = nu.  Writing y = m + a sin(phi), with the turning heights
at phi = -pi/2 and pi/2, gives

    dx/dphi = nu h(y) a |cos phi| / (f(y) sqrt(f(y)^2 - nu^2)),

which is smooth and 2 pi periodic in phi.  One full oscillation advances
the longitude by Delta x(nu); a (p, q) satellite geodesic closes when
p Delta x(nu) = 2 pi q.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import metric as mt
from .curve import DiscreteCurve, count_intersections, count_self_intersections, equator
from .flow import geodesic_curvature
from .hill import HillProblem
from .metric import MetricChart, gauss_curvature, length

GL_NODES = 256
RANGE_GRID = 64
DEGENERATE_WIDTH = 1e-9
CLOSURE_TOL = 1e-6
RESIDUAL_TOL = 1e-4
NU_TOP = 1.0 - 1e-9

_gl_x, _gl_w = np.polynomial.legendre.leggauss(GL_NODES)


@dataclass(frozen=True, eq=False)
class RevolutionSurface:
    """Profiles f, h (vectorised callables) on the band (y_lo, y_hi)."""

    f: Callable
    h: Callable
    fprime: Callable | None = None
    y_band: tuple[float, float] = (-0.5 * math.pi, 0.5 * math.pi)
    period_x: float = 2 * math.pi
    name: str = "revolution"
    params: dict | None = None

    def __post_init__(self):
        f0 = float(self.f(np.array(0.0)))
        d = 1e-6
        slope = (float(self.f(np.array(d))) - float(self.f(np.array(-d)))) / (2 * d)
        if not f0 > 0:
            raise ValueError("f(0) must be positive")
        if abs(slope) > 1e-6 * f0:
            raise ValueError("f'(0) must vanish so that y = 0 is a geodesic")

    def df(self, y):
        if self.fprime is not None:
            return self.fprime(y)
        d = 1e-5
        return (self.f(y + d) - self.f(y - d)) / (2 * d)

    @property
    def f0(self) -> float:
        return float(self.f(np.array(0.0)))

    def chart(self) -> MetricChart:
        if self.name == "spheroid":
            return mt.spheroid(self.params["c"])
        f, h = self.f, self.h

        def efg(x, y):
            fy, hy = f(y), h(y)
            E = fy * fy + 0.0 * x
            return E, np.zeros_like(E), hy * hy + 0.0 * x
        margin = 1e-9 * (self.y_band[1] - self.y_band[0])
        return MetricChart("general", self.period_x,
                           (self.y_band[0] + margin, self.y_band[1] - margin),
                           efg_fn=efg, name=self.name, params=dict(self.params or {}))


def spheroid(c: float) -> RevolutionSurface:
    """Embedded (cos y cos x, cos y sin x, c sin y); K = 1/c^2 on the equator."""
    if not c > 0:
        raise ValueError("axis ratio must be positive")
    return RevolutionSurface(np.cos, lambda y: np.sqrt(np.sin(y) ** 2 + c * c * np.cos(y) ** 2),
                             lambda y: -np.sin(y), name="spheroid", params={"c": c})


def round_sphere() -> RevolutionSurface:
    return RevolutionSurface(np.cos, np.ones_like, lambda y: -np.sin(y), name="round_sphere")


def flat_cylinder(period_x: float = 2 * math.pi, half_width: float = 10.0) -> RevolutionSurface:
    return RevolutionSurface(np.ones_like, np.ones_like, np.zeros_like, (-half_width, half_width),
                             period_x, name="flat_cylinder")


@dataclass(frozen=True, eq=False)
class ClairautGeodesic:
    nu: float
    y_turn: tuple[float, float]
    advance: float
    curve: DiscreteCurve
    p: int
    q: int
    closure_gap: float
    degenerate: bool = False


# ---------------------------------------------------------------------------
# turning points and longitude advance

def turning_points(surface: RevolutionSurface, nu: float) -> tuple[float, float]:
    """Heights below and above the equator where f = nu."""
    f0 = surface.f0
    if not 0 < nu < f0 * (1 - 1e-12):
        raise ValueError(f"Clairaut constant {nu!r} outside (0, f(0))")
    lo, hi = surface.y_band

    def side(end):
        ys = np.linspace(0.0, end, 2049)[1:]
        g = surface.f(ys) - nu
        bad = np.nonzero(g <= 0)[0]
        if len(bad) == 0:
            raise ValueError("no turning point in band (f does not drop to nu)")
        j = bad[0]
        a = 0.0 if j == 0 else ys[j - 1]
        return brentq(lambda y: float(surface.f(np.array(y))) - nu, a, ys[j], xtol=1e-15,
                      rtol=4 * np.finfo(float).eps)

    return side(lo), side(hi)


_diff_x, _diff_w = np.polynomial.legendre.leggauss(16)


def _drop_from_turn(surface, y_t, delta):
    """f(y_t + delta) - f(y_t) by quadrature of f', free of cancellation near the turn."""
    nodes = np.asarray(y_t)[..., None] + np.multiply.outer(delta, 0.5 * (_diff_x + 1.0))
    return delta * (surface.df(nodes) @ (0.5 * _diff_w))


def _dx_dphi(surface, nu, y_lo, y_hi, phi):
    """Integrand of the longitude advance in the oscillation angle phi (any real phi)."""
    m, a = 0.5 * (y_hi + y_lo), 0.5 * (y_hi - y_lo)
    phi = np.asarray(phi, dtype=float)
    s = np.sin(phi)
    upper = s >= 0
    # distance to the nearer turning height, written without subtraction
    delta = np.where(upper, -2 * a * np.sin(0.25 * math.pi - 0.5 * phi) ** 2,
                     2 * a * np.sin(0.25 * math.pi + 0.5 * phi) ** 2)
    y_t = np.where(upper, y_hi, y_lo)
    y = y_t + delta
    fy = surface.f(y)
    drop = _drop_from_turn(surface, y_t, delta)          # f(y) - nu
    gap = drop * (fy + nu)                               # f(y)^2 - nu^2
    return nu * surface.h(y) * a * np.abs(np.cos(phi)) / (fy * np.sqrt(gap))


def clairaut_advance(surface: RevolutionSurface, nu: float) -> float:
    """Longitude advance over one full oscillation of the geodesic with Clairaut constant nu."""
    y_lo, y_hi = turning_points(surface, nu)
    phi = 0.5 * math.pi * _gl_x
    return float(math.pi * np.dot(_gl_w, _dx_dphi(surface, nu, y_lo, y_hi, phi)))


def advance_limit(surface: RevolutionSurface) -> float:
    """Delta x as nu -> f(0): 2 pi f(0) / sqrt(-f''(0) f(0)) h(0) for the linearised oscillation."""
    d = 1e-4
    f0 = surface.f0
    f2 = (float(surface.f(np.array(d))) - 2 * f0 + float(surface.f(np.array(-d)))) / (d * d)
    if f2 >= 0:
        return math.inf
    return 2 * math.pi * float(surface.h(np.array(0.0))) / math.sqrt(-f2 / f0) / f0


# ---------------------------------------------------------------------------
# search

def _nu_grid(surface):
    f0 = surface.f0
    return f0 * np.linspace(0.05, NU_TOP, RANGE_GRID)


def advance_range(surface: RevolutionSurface) -> tuple[np.ndarray, np.ndarray]:
    nus = _nu_grid(surface)
    return nus, np.array([clairaut_advance(surface, v) for v in nus])


def satellite_window_status(surface: RevolutionSurface, p: int, q: int) -> str:
    """One of 'found', 'none', 'resonant', 'degenerate' for the equation p Delta x = 2 pi q."""
    if p < 1 or q < 1 or math.gcd(p, q) != 1:
        raise ValueError("need coprime positive p, q")
    target = 2 * math.pi * q / p
    nus, adv = advance_range(surface)
    if np.ptp(adv) < DEGENERATE_WIDTH:
        return "degenerate" if abs(adv.mean() - target) < 1e-6 else "none"
    lim = advance_limit(surface)
    if abs(lim - target) < 1e-6 * target:
        return "resonant"
    lo, hi = adv.min(), adv.max()
    return "found" if lo < target < hi else "none"


def find_satellite_geodesic(surface: RevolutionSurface, p: int, q: int,
                            n_points: int = 4096) -> ClairautGeodesic | None:
    """Closed (p, q) satellite geodesic of the equator, or None outside the advance range."""
    if p < 1 or q < 1 or math.gcd(p, q) != 1:
        raise ValueError("need coprime positive p, q")
    target = 2 * math.pi * q / p
    nus, adv = advance_range(surface)
    degenerate = False
    if np.ptp(adv) < DEGENERATE_WIDTH:
        if abs(adv.mean() - target) >= 1e-6:
            return None
        nu = surface.f0 * math.cos(0.1)
        degenerate = True
    else:
        if abs(advance_limit(surface) - target) < 1e-6 * target:
            return None
        g = adv - target
        idx = np.nonzero(np.signbit(g[:-1]) != np.signbit(g[1:]))[0]
        if len(idx) == 0:
            return None
        j = idx[0]
        nu = brentq(lambda v: clairaut_advance(surface, v) - target, nus[j], nus[j + 1],
                    xtol=1e-15, rtol=4 * np.finfo(float).eps)
    curve, gap = _assemble(surface, nu, p, n_points)
    if gap > CLOSURE_TOL:
        raise RuntimeError(f"closure gap {gap!r} exceeds {CLOSURE_TOL}")
    yt = turning_points(surface, nu)
    return ClairautGeodesic(nu, yt, clairaut_advance(surface, nu), curve, p, q, gap, degenerate)


def _assemble(surface, nu, p, n_points):
    """Vertices on a half-offset phi grid over p oscillations; x from spectral integration."""
    # a multiple of 4 per oscillation keeps vertices off the turning points and zeros
    unit = 4 * p
    if n_points % unit:
        n_points += unit - n_points % unit
    y_lo, y_hi = turning_points(surface, nu)
    m, a = 0.5 * (y_hi + y_lo), 0.5 * (y_hi - y_lo)
    per = n_points // p
    # one oscillation: x = mean drift + periodic antiderivative, both spectral on the vertex grid
    phi = 2 * math.pi * (np.arange(per) + 0.5) / per
    g = _dx_dphi(surface, nu, y_lo, y_hi, phi)
    coef = np.fft.fft(g)
    mean = coef[0].real / per
    k = np.fft.fftfreq(per, 1.0 / per)
    anti = np.zeros_like(coef)
    nz = k != 0
    anti[nz] = coef[nz] / (1j * k[nz])
    if per % 2 == 0:
        anti[per // 2] = 0.0
    osc = np.fft.ifft(anti).real
    adv = 2 * math.pi * mean
    xs = np.concatenate([mean * phi + osc + j * adv for j in range(p)])
    ys = np.tile(m + a * np.sin(phi), p)
    drift = 2 * math.pi * mean * p
    q_est = drift / surface.period_x
    w = int(round(q_est))
    if w < 1:
        raise RuntimeError("geodesic does not advance in x")
    # the closing chord uses the ideal shift w L; the residual mismatch is the closure gap
    gap = abs(drift - w * surface.period_x)
    c = DiscreteCurve(np.stack([xs, ys], axis=1), surface.period_x, w, 1)
    return c, gap


# ---------------------------------------------------------------------------
# verification and linearisation

def verify_geodesic(chart: MetricChart, c: DiscreteCurve) -> float:
    """max |kappa| * L over vertices (five-point stencils in the vertex index)."""
    k = geodesic_curvature(chart, c, order=4)
    return float(np.max(np.abs(k)) * length(chart, c))


def clairaut_drift(surface: RevolutionSurface, c: DiscreteCurve) -> float:
    """Spread of f^2 dx/ds over the vertices (five-point stencils in the vertex index)."""
    P = c.points
    n = len(P)
    idx = np.arange(n)
    lift = lambda k: P[(idx + k) % n] + np.outer(((idx + k) // n) * c.shift, [1.0, 0.0])
    d = (-lift(2) + 8 * lift(1) - 8 * lift(-1) + lift(-2)) / 12.0
    f, h = surface.f(P[:, 1]), surface.h(P[:, 1])
    nu = f * f * d[:, 0] / np.sqrt((f * d[:, 0]) ** 2 + (h * d[:, 1]) ** 2)
    return float(np.ptp(nu))


def geodesic_report(g: ClairautGeodesic, chart: MetricChart) -> str:
    """Report line ``p q nu advance residual crossings self_intersections``."""
    eq = equator(chart.period_x, n=512)
    cross, _ = count_intersections(g.curve, eq)
    selfs, _ = count_self_intersections(g.curve)
    res = verify_geodesic(chart, g.curve)
    return f"{g.p} {g.q} {g.nu!r} {g.advance!r} {res!r} {cross} {selfs}"


def hill_problem_along(chart_or_surface, c: DiscreteCurve, n: int = 1024,
                       check: bool = True) -> HillProblem:
    """Hill problem with Q = K sampled by arclength over one traversal of the primitive geodesic."""
    chart = chart_or_surface.chart() if isinstance(chart_or_surface, RevolutionSurface) \
        else chart_or_surface
    if check:
        res = verify_geodesic(chart, c)
        if res > RESIDUAL_TOL:
            raise ValueError(f"curve is not a geodesic (residual {res!r})")
    P = c.closed_points()
    E, F, G = chart.efg(0.5 * (P[1:, 0] + P[:-1, 0]), 0.5 * (P[1:, 1] + P[:-1, 1]))
    d = np.diff(P, axis=0)
    seg = np.sqrt(E * d[:, 0] ** 2 + 2 * F * d[:, 0] * d[:, 1] + G * d[:, 1] ** 2)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    K = np.asarray(gauss_curvature(chart, P[:, 0], P[:, 1]), dtype=float)
    K[-1] = K[0]
    total = s[-1]
    L = total / c.cover_degree
    spl = CubicSpline(s, K, bc_type="periodic")
    return HillProblem(spl(np.arange(n) * (L / n)), L)
