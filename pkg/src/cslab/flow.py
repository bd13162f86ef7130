"""Curve shortening flow on a cylinder chart.

Two schemes share one driver:

* polyline: explicit normal motion ``P += dt * kappa * N`` with periodic
  spline resampling to uniform metric arclength;
* graph: ``u_t = (u_xx + P + Q u_x + R u_x^2 + S u_x^3) / lam^2`` with u_xx
  implicit (cyclic tridiagonal solve) and the rest explicit.

The driver hands a run over to the graph scheme when the curve is a graph
over y = 0 with |u_x| < 2 and back when |u_x| exceeds 2.5.  At each sample
it records length, curvature energies, intersection counts and loop areas,
and emits events for count drops, small loops, blowup, convergence and
chart exit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from . import curve as cv
from .curve import DiscreteCurve
from .knot import KnotSignature
from .metric import (ChartDomainError, MetricChart, chart_integral_points, epsilon_g,
                     gauss_curvature, graph_coefficient_arrays, length)

MONITORS = frozenset({"curvature", "intersections", "loops", "deviation"})
EVENT_KINDS = ("intersection_drop", "tangency_suspect", "small_loop", "blowup",
               "left_chart", "converged", "class_exit", "loop_lost")
GRAPH_ENTER_SLOPE = 2.0
GRAPH_LEAVE_SLOPE = 2.5
BENDING_TOL = 1e-8


@dataclass(frozen=True)
class FlowOptions:
    dt_safety: float = 0.5
    t_max: float = 10.0
    kappa_blowup: float | None = None  # default 1e3 / L(0)
    convergence_tol: float = 1e-4
    resample_every: int = 10
    sample_every: int = 20
    monitors: frozenset = MONITORS
    graph_handoff: bool = True
    blowup_samples: int = 3
    stop_on_class_exit: bool = False
    snapshot_every: int = 0
    max_steps: int = 5_000_000
    coarsen: bool = True  # drop points as the curve shrinks, keeping the initial spacing
    min_points: int = 64

    def __post_init__(self):
        if not 0 < self.dt_safety <= 1:
            raise ValueError("dt_safety must lie in (0, 1]")
        if not self.t_max > 0 or not self.convergence_tol > 0:
            raise ValueError("t_max and convergence_tol must be positive")
        if self.kappa_blowup is not None and not self.kappa_blowup > 0:
            raise ValueError("kappa_blowup must be positive")
        if self.resample_every < 1 or self.sample_every < 1 or self.blowup_samples < 1:
            raise ValueError("step counts must be >= 1")
        unknown = set(self.monitors) - MONITORS
        if unknown:
            raise ValueError(f"unknown monitors {sorted(unknown)}")
        object.__setattr__(self, "monitors", frozenset(self.monitors))


@dataclass(frozen=True)
class FlowEvent:
    t: float
    kind: str
    detail: str = ""


@dataclass
class FlowTrace:
    times: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    kappa_sup: list = field(default_factory=list)
    bending: list = field(default_factory=list)
    bending_s: list = field(default_factory=list)
    self_int: list = field(default_factory=list)
    crossings: list = field(default_factory=list)
    signatures: list = field(default_factory=list)
    min_loop_area: list = field(default_factory=list)
    deviation: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    loop_area: list = field(default_factory=list)
    loop_theta_ext: list = field(default_factory=list)
    loop_curvature: list = field(default_factory=list)
    loop_id: list = field(default_factory=list)
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_curve: DiscreteCurve | None = None
    stop_reason: str = ""
    L0: float = math.nan
    eps_g: float = math.nan
    n_refs: int = 0
    steps: int = 0

    def kinds(self) -> list[str]:
        return [e.kind for e in self.events]

    def first(self, kind: str) -> FlowEvent | None:
        return next((e for e in self.events if e.kind == kind), None)

    def write_csv(self, path) -> None:
        head = ["t", "L", "kappa_sup", "bending", "bending_s", "self_int"]
        head += [f"cross_{i + 1}" for i in range(self.n_refs)] + ["min_loop_area"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            for k in range(len(self.times)):
                cross = self.crossings[k] if self.crossings[k] is not None \
                    else (None,) * self.n_refs
                row = [self.times[k], self.lengths[k], self.kappa_sup[k], self.bending[k],
                       self.bending_s[k], self.self_int[k], *cross, self.min_loop_area[k]]
                w.writerow([_fmt(v) for v in row])

    def write_events(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "kind", "detail"])
            for e in self.events:
                w.writerow([_fmt(e.t), e.kind, e.detail])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# geometry of polylines

def _neighbours(P: np.ndarray, shift: float, k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    nxt = np.roll(P, -k, axis=0)
    nxt[-k:, 0] += shift
    prv = np.roll(P, k, axis=0)
    prv[:k, 0] -= shift
    return prv, nxt


def _metric_norm(chart, at: np.ndarray, v: np.ndarray) -> np.ndarray:
    E, F, G = chart.efg(at[:, 0], at[:, 1])
    return np.sqrt(E * v[:, 0] ** 2 + 2 * F * v[:, 0] * v[:, 1] + G * v[:, 1] ** 2)


def _kappa_normal(chart: MetricChart, P, f1, f2):
    """Signed geodesic curvature and metric unit left normal from parameter derivatives."""
    x, y = P[:, 0], P[:, 1]
    if chart.kind == "conformal":
        phi, dphi, _ = chart.profile(y)
        speed = np.hypot(f1[:, 0], f1[:, 1])
        k_euc = (f1[:, 0] * f2[:, 1] - f1[:, 1] * f2[:, 0]) / speed ** 3
        n_e = np.stack([-f1[:, 1], f1[:, 0]], axis=1) / speed[:, None]
        scale = np.exp(-phi)
        return scale * (k_euc - dphi * n_e[:, 1]), n_e * scale[:, None]
    g = chart.christoffel(x, y)
    ax = f2[:, 0] + g.x_xx * f1[:, 0] ** 2 + 2 * g.x_xy * f1[:, 0] * f1[:, 1] \
        + g.x_yy * f1[:, 1] ** 2
    ay = f2[:, 1] + g.y_xx * f1[:, 0] ** 2 + 2 * g.y_xy * f1[:, 0] * f1[:, 1] \
        + g.y_yy * f1[:, 1] ** 2
    E, F, G = chart.efg(x, y)
    sq = np.sqrt(E * G - F * F)
    speed = np.sqrt(E * f1[:, 0] ** 2 + 2 * F * f1[:, 0] * f1[:, 1] + G * f1[:, 1] ** 2)
    kappa = sq * (f1[:, 0] * ay - f1[:, 1] * ax) / speed ** 3
    nrm = np.stack([-(F * f1[:, 0] + G * f1[:, 1]), E * f1[:, 0] + F * f1[:, 1]], axis=1)
    return kappa, nrm / (sq * speed)[:, None]


@dataclass(frozen=True)
class PolylineGeometry:
    kappa: np.ndarray
    normal: np.ndarray
    seg: np.ndarray      # metric length of segment i -> i+1
    ds: np.ndarray       # dual length at vertex i


def polyline_geometry(chart: MetricChart, c: DiscreteCurve) -> PolylineGeometry:
    P = c.points
    chart.check(P[:, 1])
    prv, nxt = _neighbours(P, c.shift)
    hp = _metric_norm(chart, 0.5 * (P + nxt), nxt - P)
    if np.any(hp == 0):
        raise ValueError("degenerate segment")
    hm = np.roll(hp, 1)
    den = (hm * hp * (hm + hp))[:, None]
    f1 = (hm[:, None] ** 2 * (nxt - P) + hp[:, None] ** 2 * (P - prv)) / den
    f2 = 2.0 * (hm[:, None] * (nxt - P) - hp[:, None] * (P - prv)) / den
    kappa, normal = _kappa_normal(chart, P, f1, f2)
    return PolylineGeometry(kappa, normal, hp, 0.5 * (hm + hp))


def geodesic_curvature(chart: MetricChart, c: DiscreteCurve, order: int = 2) -> np.ndarray:
    """Per-vertex signed geodesic curvature (positive when turning left).

    ``order=2`` uses three-point stencils in metric chord length; ``order=4``
    uses five-point stencils in the vertex index, which suits smooth curves
    sampled uniformly in some parameter.
    """
    if order == 2:
        return polyline_geometry(chart, c).kappa
    if order != 4:
        raise ValueError("order must be 2 or 4")
    P = c.points
    chart.check(P[:, 1])
    p1m, p1p = _neighbours(P, c.shift, 1)
    p2m, p2p = _neighbours(P, c.shift, 2)
    f1 = (-p2p + 8 * p1p - 8 * p1m + p2m) / 12.0
    f2 = (-p2p + 16 * p1p - 30 * P + 16 * p1m - p2m) / 12.0
    return _kappa_normal(chart, P, f1, f2)[0]


def graph_curvature(chart: MetricChart, u: np.ndarray, x0: float, dx: float,
                    sigma: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Curvature of the graph y = u(x) and the metric line element lam per unit x."""
    x = x0 + dx * np.arange(len(u))
    up, um = np.roll(u, -1), np.roll(u, 1)
    ux = (up - um) / (2 * dx)
    uxx = (up - 2 * u + um) / (dx * dx)
    P, Q, R, S, E, F, G = graph_coefficient_arrays(chart, x, u)
    lam = np.sqrt(E + 2 * F * ux + G * ux * ux)
    num = uxx + P + Q * ux + R * ux ** 2 + S * ux ** 3
    return sigma * np.sqrt(E * G - F * F) * num / lam ** 3, lam


# ---------------------------------------------------------------------------
# single steps

def step_polyline_flow(chart: MetricChart, c: DiscreteCurve, dt: float) -> DiscreteCurve:
    """Move every vertex by dt * kappa * N (no resampling)."""
    geo = polyline_geometry(chart, c)
    pts = c.points + dt * geo.kappa[:, None] * geo.normal
    chart.check(pts[:, 1])
    return c.with_points(pts)


def polyline_dt(chart: MetricChart, c: DiscreteCurve, safety: float) -> float:
    geo = polyline_geometry(chart, c)
    return safety * float(geo.seg.min()) ** 2 / 4.0


def resample_uniform(chart: MetricChart, c: DiscreteCurve, n: int | None = None) -> DiscreteCurve:
    """Resample to ``n`` points equally spaced in metric arclength (first point kept)."""
    n = n or c.n
    P = c.closed_points()
    mid = 0.5 * (P[1:] + P[:-1])
    seg = _metric_norm(chart, mid, np.diff(P, axis=0))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    drift = c.shift * s / total
    sx = CubicSpline(s, P[:, 0] - drift, bc_type="periodic")
    sy = CubicSpline(s, P[:, 1], bc_type="periodic")
    t = np.arange(n) * (total / n)
    pts = np.stack([sx(t) + c.shift * t / total, sy(t)], axis=1)
    return c.with_points(pts)


def _solve_cyclic(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve (1 + 2 a_j) v_j - a_j v_{j-1} - a_j v_{j+1} = rhs_j with periodic wrap."""
    m = len(a)
    diag = 1.0 + 2.0 * a
    top = -a[0]       # A[0, m-1]
    bottom = -a[-1]   # A[m-1, 0]
    gamma = -diag[0]
    ab = np.zeros((3, m))
    ab[0, 1:] = -a[:-1]
    ab[1] = diag
    ab[2, :-1] = -a[1:]
    ab[1, 0] -= gamma
    ab[1, -1] -= bottom * top / gamma
    uvec = np.zeros(m)
    uvec[0] = gamma
    uvec[-1] = bottom
    y = solve_banded((1, 1), ab, rhs)
    z = solve_banded((1, 1), ab, uvec)
    vfac = (y[0] + top * y[-1] / gamma) / (1.0 + z[0] + top * z[-1] / gamma)
    return y - vfac * z


def _graph_terms(chart, u, x0, dx):
    x = x0 + dx * np.arange(len(u))
    up, um = np.roll(u, -1), np.roll(u, 1)
    ux = (up - um) / (2 * dx)
    P, Q, R, S, E, F, G = graph_coefficient_arrays(chart, x, u)
    den = E + 2 * F * ux + G * ux * ux
    if np.any(den <= 0):
        raise ValueError("non-positive graph denominator (metric degeneracy)")
    return ux, (P + Q * ux + R * ux ** 2 + S * ux ** 3) / den, den


def graph_dt(chart, u, x0, dx, safety) -> float:
    _, _, den = _graph_terms(chart, u, x0, dx)
    return safety * dx * dx * float(den.min())


def step_graph_flow(chart: MetricChart, u, dt: float, q: int = 1, x0: float = 0.0) -> np.ndarray:
    """One semi-implicit step of the graph equation on the grid x_j = x0 + j q L / M."""
    u = np.asarray(u, dtype=float)
    dx = q * chart.period_x / len(u)
    _, explicit, den = _graph_terms(chart, u, x0, dx)
    a = dt / (den * dx * dx)
    new = _solve_cyclic(a, u + dt * explicit)
    chart.check(new)
    return new


# ---------------------------------------------------------------------------
# driver state

@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    step: int
    mode: str
    curve: DiscreteCurve | None = None
    u: np.ndarray | None = None
    x0: float = 0.0
    dx: float = 0.0
    q: int = 1
    sigma: int = 1
    period_x: float = 2 * math.pi
    cover_degree: int = 1
    h0: float = 0.0  # target metric spacing for coarsening

    def to_curve(self) -> DiscreteCurve:
        if self.mode == "polyline":
            return self.curve
        x = self.x0 + self.dx * np.arange(len(self.u))
        c = DiscreteCurve(np.stack([x, self.u], axis=1), self.period_x, self.q,
                          self.cover_degree)
        return c if self.sigma > 0 else c.reversed()


def as_graph(chart: MetricChart, c: DiscreteCurve, max_slope: float = GRAPH_ENTER_SLOPE):
    """Graph data (u, x0, dx, q, sigma) if ``c`` is an x-monotone graph, else None."""
    w = c.x_winding
    if w == 0:
        return None
    sigma = 1 if w > 0 else -1
    e = c if sigma > 0 else c.reversed()
    P = e.closed_points()
    d = np.diff(P, axis=0)
    if np.any(d[:, 0] <= 0) or np.max(np.abs(d[:, 1] / d[:, 0])) >= max_slope:
        return None
    q = abs(w)
    m = e.n
    dx = q * c.period_x / m
    x0 = float(P[0, 0])
    spl = CubicSpline(P[:, 0], P[:, 1], bc_type="periodic")
    u = spl(x0 + dx * np.arange(m))
    return u, x0, dx, q, sigma


def _graph_state(state: FlowState, chart, c: DiscreteCurve) -> FlowState | None:
    g = as_graph(chart, c)
    if g is None:
        return None
    u, x0, dx, q, sigma = g
    return FlowState(state.t, state.step, "graph", None, u, x0, dx, q, sigma,
                     c.period_x, c.cover_degree, state.h0)


def _advance(chart, state: FlowState, opts: FlowOptions, t_end: float) -> FlowState:
    if state.mode == "graph":
        dt = min(graph_dt(chart, state.u, state.x0, state.dx, opts.dt_safety), t_end - state.t)
        u = step_graph_flow(chart, state.u, dt, state.q, state.x0)
        new = replace(state, t=state.t + dt, step=state.step + 1, u=u)
        ux = (np.roll(u, -1) - np.roll(u, 1)) / (2 * state.dx)
        if np.max(np.abs(ux)) > GRAPH_LEAVE_SLOPE:
            new = replace(new, mode="polyline", curve=new.to_curve(), u=None)
        return new
    c = state.curve
    geo = polyline_geometry(chart, c)
    dt = min(opts.dt_safety * float(geo.seg.min()) ** 2 / 4.0, t_end - state.t)
    pts = c.points + dt * geo.kappa[:, None] * geo.normal
    chart.check(pts[:, 1])
    c = c.with_points(pts)
    step = state.step + 1
    if step % opts.resample_every == 0:
        n = c.n
        if opts.coarsen and state.h0 > 0:
            floor = max(opts.min_points, 16 * abs(c.x_winding), 3)
            want = int(round(float(geo.seg.sum()) / state.h0))
            if want < 0.75 * n:
                n = max(floor, min(n, want))
        c = resample_uniform(chart, c, n)
    new = replace(state, t=state.t + dt, step=step, curve=c)
    if opts.graph_handoff and step % opts.resample_every == 0:
        g = _graph_state(new, chart, c)
        if g is not None:
            return g
    return new


# ---------------------------------------------------------------------------
# sampling

@dataclass
class _Sample:
    curve: DiscreteCurve
    L: float
    kappa_sup: float
    bending: float
    bending_s: float
    deviation: float
    self_int: int | None
    crossings: tuple | None
    determinate: bool
    loops: list
    self_crossings: list


def _sample(chart, state: FlowState, gammas, opts) -> _Sample:
    c = state.to_curve()
    L = length(chart, c)
    if state.mode == "graph":
        kappa, lam = graph_curvature(chart, state.u, state.x0, state.dx, state.sigma)
        ds = lam * state.dx
        seg = ds
    else:
        geo = polyline_geometry(chart, c)
        kappa, ds, seg = geo.kappa, geo.ds, geo.seg
    bending = float(np.sum(kappa ** 2 * ds))
    bending_s = float(np.sum((np.roll(kappa, -1) - kappa) ** 2 / seg))
    P = c.closed_points()
    ymid = 0.5 * (P[1:, 1] + P[:-1, 1])
    deviation = float(np.sqrt(np.sum(ymid ** 2 * np.abs(np.diff(P[:, 0])))))
    self_int, crossings, det, loops, xs = None, None, True, [], []
    if "intersections" in opts.monitors or "loops" in opts.monitors:
        xs, ok = cv.self_crossings(c)
        det = ok
        self_int = len(xs) if ok else None
        raw = []
        for g in gammas:
            n, ok_g = cv.count_intersections(c, g)
            det = det and ok_g
            raw.append(n if ok_g else None)
        crossings = tuple(raw)
        if "loops" in opts.monitors:
            loops = cv.find_loops(c, chart, xs)
    return _Sample(c, L, float(np.max(np.abs(kappa))), bending, bending_s, deviation,
                   self_int, crossings, det, loops, xs)


def _loop_candidates(chart, s: _Sample):
    """Contractible simple convex loops as (area, theta_ext, boundary, key)."""
    c = s.curve
    out = []
    if c.x_winding == 0 and s.self_int == 0:
        P = c.closed_points()
        out.append((abs(chart_integral_points(chart, P)), 0.0, P, "whole"))
    for lp in s.loops:
        if lp.contractible and lp.is_simple and lp.corner_convex:
            out.append((abs(lp.area), lp.exterior_angle, cv.loop_boundary(c, lp),
                        f"loop{lp.crossing}"))
    return out


def _lifetime_bound(kappa: float, sup_k: float) -> float:
    k = max(sup_k, 0.0)
    if k == 0.0:
        return 1.0 / (2.0 * kappa * kappa)
    return math.log1p(k / (kappa * kappa)) / (2.0 * k)


# ---------------------------------------------------------------------------
# driver

def run_flow(chart: MetricChart, c0: DiscreteCurve, gammas: Sequence[DiscreteCurve] = (),
             opts: FlowOptions = FlowOptions()) -> FlowTrace:
    gammas = list(gammas)
    trace = FlowTrace(n_refs=len(gammas))
    L0 = length(chart, c0)
    trace.L0 = L0
    kb = opts.kappa_blowup or 1e3 / L0
    sup_k = chart.sup_gauss_curvature()
    eps_g = math.pi / (2 * sup_k) if sup_k > 0 else math.inf
    trace.eps_g = eps_g
    ref_self = []
    for g in gammas:
        n, _ = cv.count_self_intersections(g)
        ref_self.append(n)

    state = FlowState(0.0, 0, "polyline", c0, period_x=c0.period_x,
                      cover_degree=c0.cover_degree, h0=L0 / c0.n)
    if opts.graph_handoff:
        state = _graph_state(state, chart, c0) or state

    prev_det: tuple[FlowState, int, tuple] | None = None
    baseline = None
    exited = False
    small_reported = False
    over = 0
    n_samples = 0
    tracked_key, tracked_area = None, None

    def stop(reason):
        trace.stop_reason = reason
        trace.final_curve = state.to_curve()
        trace.steps = state.step

    while True:
        s = _sample(chart, state, gammas, opts)
        t = state.t
        trace.times.append(t)
        trace.lengths.append(s.L)
        trace.kappa_sup.append(s.kappa_sup)
        trace.bending.append(s.bending)
        trace.bending_s.append(s.bending_s)
        trace.deviation.append(s.deviation)
        trace.modes.append(state.mode)
        trace.self_int.append(s.self_int)
        trace.crossings.append(s.crossings if s.determinate else None)
        sig = None
        if s.determinate and s.crossings is not None and all(v % 2 == 0 for v in s.crossings):
            sig = KnotSignature.from_counts(s.crossings, s.self_int, ref_self)
        trace.signatures.append(sig)
        if opts.snapshot_every and n_samples % opts.snapshot_every == 0:
            trace.snapshots.append((t, s.curve))
        n_samples += 1

        # Sturm bookkeeping between determinate samples
        if s.determinate and s.self_int is not None:
            counts = (s.self_int,) + tuple(s.crossings)
            if prev_det is not None:
                _compare_counts(chart, prev_det, state, counts, gammas, opts, trace)
            if baseline is None:
                baseline = counts
            elif not exited and any(a < b for a, b in zip(counts, baseline)):
                exited = True
                names = _count_names(len(gammas))
                what = ",".join(f"{nm} {b}->{a}" for nm, a, b in zip(names, counts, baseline)
                                if a < b)
                trace.events.append(FlowEvent(t, "class_exit", what))
                if opts.stop_on_class_exit:
                    _record_loops(trace, None)
                    stop("class_exit")
                    return trace
            prev_det = (state, counts)

        # loops
        cands = _loop_candidates(chart, s) if "loops" in opts.monitors else []
        trace.min_loop_area.append(min((c[0] for c in cands), default=math.nan))
        pick = None
        if cands:
            if tracked_key is None:
                pick = _initial_loop(chart, s, cands)
            else:
                same = [c for c in cands if c[3] == tracked_key]
                if same:
                    pick = min(same, key=lambda c: abs(c[0] - tracked_area))
                else:
                    best = min(cands, key=lambda c: abs(c[0] - tracked_area))
                    if abs(best[0] - tracked_area) <= 0.25 * tracked_area:
                        pick = best
        if tracked_key is not None and pick is None:
            trace.events.append(FlowEvent(t, "loop_lost", f"last_area={tracked_area!r}"))
            tracked_key = None
        if pick is not None:
            tracked_key, tracked_area = pick[3], pick[0]
            kint = chart_integral_points(chart, pick[2],
                                         density=lambda x, y: gauss_curvature(chart, x, y))
            if chart_integral_points(chart, pick[2]) < 0:
                kint = -kint
            _record_loops(trace, (pick[0], pick[1], kint, pick[3]))
            if pick[0] < eps_g and not small_reported:
                small_reported = True
                trace.events.append(FlowEvent(
                    t, "small_loop",
                    f"area={pick[0]!r};collapse_by={t + 2 * pick[0] / math.pi!r}"))
        else:
            _record_loops(trace, None)

        # stopping rules
        if s.kappa_sup < opts.convergence_tol:
            trace.events.append(FlowEvent(t, "converged", f"kappa_sup={s.kappa_sup!r}"))
            stop("converged")
            return trace
        over = over + 1 if s.kappa_sup > kb else 0
        if over >= opts.blowup_samples:
            bound = _lifetime_bound(s.kappa_sup, sup_k)
            trace.events.append(FlowEvent(
                t, "blowup", f"kappa_sup={s.kappa_sup!r};lifetime_bound={bound!r}"))
            stop("blowup")
            return trace
        if t >= opts.t_max:
            stop("t_max")
            return trace
        if state.step >= opts.max_steps:
            stop("max_steps")
            return trace

        for _ in range(opts.sample_every):
            try:
                nxt = _advance(chart, state, opts, opts.t_max)
            except ChartDomainError as exc:
                trace.events.append(FlowEvent(state.t, "left_chart", str(exc)))
                stop("left_chart")
                return trace
            except ValueError as exc:
                # a segment collapsed: the polyline can no longer carry the flow
                trace.events.append(FlowEvent(state.t, "blowup", f"degenerate:{exc}"))
                stop("blowup")
                return trace
            if not np.all(np.isfinite(nxt.to_curve().points)):
                trace.events.append(FlowEvent(state.t, "blowup", "non-finite coordinates"))
                stop("blowup")
                return trace
            state = nxt
            if state.t >= opts.t_max:
                break


def _count_names(n_refs: int) -> list[str]:
    return ["self"] + [f"cross_{i + 1}" for i in range(n_refs)]


def _record_loops(trace: FlowTrace, rec):
    if rec is None:
        trace.loop_area.append(math.nan)
        trace.loop_theta_ext.append(math.nan)
        trace.loop_curvature.append(math.nan)
        trace.loop_id.append(None)
    else:
        trace.loop_area.append(rec[0])
        trace.loop_theta_ext.append(rec[1])
        trace.loop_curvature.append(rec[2])
        trace.loop_id.append(rec[3])


def _initial_loop(chart, s: _Sample, cands):
    lp = cv.extract_convex_simple_loop(s.curve, chart, s.loops) if s.loops else None
    if lp is not None and lp.contractible:
        key = f"loop{lp.crossing}"
        for c in cands:
            if c[3] == key and abs(c[0] - abs(lp.area)) < 1e-12 * max(1.0, c[0]):
                return c
    return min(cands, key=lambda c: c[0])


def _counts_at(state, gammas):
    c = state.to_curve()
    xs, ok = cv.self_crossings(c)
    counts = [len(xs)]
    for g in gammas:
        n, ok_g = cv.count_intersections(c, g)
        ok = ok and ok_g
        counts.append(n)
    return tuple(counts), ok


def _compare_counts(chart, prev, state, counts, gammas, opts, trace):
    prev_state, prev_counts = prev
    names = _count_names(len(gammas))
    ups = [i for i, (a, b) in enumerate(zip(counts, prev_counts)) if a > b]
    downs = [i for i, (a, b) in enumerate(zip(counts, prev_counts)) if a < b]
    for i in ups:
        trace.events.append(FlowEvent(state.t, "tangency_suspect",
                                      f"{names[i]} {prev_counts[i]}->{counts[i]}"))
    if not downs:
        return
    # re-run from the previous determinate sample, counting after every step
    brackets = {}
    st = prev_state
    last_t = {i: st.t for i in downs}
    while st.t < state.t and len(brackets) < len(downs):
        st = _advance(chart, st, opts, state.t)
        cnt, ok = _counts_at(st, gammas)
        if not ok:
            continue
        for i in downs:
            if i in brackets:
                continue
            if cnt[i] < prev_counts[i]:
                brackets[i] = (last_t[i], st.t)
            else:
                last_t[i] = st.t
    for i in sorted(downs, key=lambda i: brackets.get(i, (0.0, state.t))[1]):
        lo, hi = brackets.get(i, (prev_state.t, state.t))
        trace.events.append(FlowEvent(
            hi, "intersection_drop",
            f"{names[i]} {prev_counts[i]}->{counts[i]};bracket=[{lo!r},{hi!r}]"))


# ---------------------------------------------------------------------------
# diagnostics

def energy_identity_residual(trace: FlowTrace, tol: float = BENDING_TOL) -> float:
    """max |dL/dt + int kappa^2 ds| / int kappa^2 ds over interior samples (central differences)."""
    t = np.asarray(trace.times)
    L = np.asarray(trace.lengths)
    b = np.asarray(trace.bending)
    if len(b) and np.all(b < tol):
        return 0.0  # a numerical geodesic: the identity holds trivially
    if len(t) < 3:
        raise ValueError("need at least three samples")
    worst = 0.0
    for i in range(1, len(t) - 1):
        if b[i] < tol or t[i + 1] == t[i - 1]:
            continue
        dL = (L[i + 1] - L[i - 1]) / (t[i + 1] - t[i - 1])
        worst = max(worst, abs(dL + b[i]) / b[i])
    return worst


def loop_area_rate_check(trace: FlowTrace) -> list[tuple[float, float, float]]:
    """(t_mid, measured dA/dt, -2 pi + theta_ext + int K dA) on intervals where one loop is tracked."""
    out = []
    for i in range(len(trace.times) - 1):
        a, b = trace.loop_id[i], trace.loop_id[i + 1]
        if a is None or a != b:
            continue
        dt = trace.times[i + 1] - trace.times[i]
        if dt <= 0:
            continue
        measured = (trace.loop_area[i + 1] - trace.loop_area[i]) / dt
        pred = -2 * math.pi + 0.5 * (trace.loop_theta_ext[i] + trace.loop_theta_ext[i + 1]) \
            + 0.5 * (trace.loop_curvature[i] + trace.loop_curvature[i + 1])
        out.append((0.5 * (trace.times[i] + trace.times[i + 1]), measured, pred))
    return out


def smoothing_constant(trace: FlowTrace, t_lo: float, t_hi: float) -> float:
    """max of t * int kappa_s^2 ds over samples with t_lo <= t <= t_hi."""
    vals = [t * b for t, b in zip(trace.times, trace.bending_s) if t_lo <= t <= t_hi]
    return max(vals) if vals else math.nan


def fit_decay_rate(times, values, t_min: float = 0.0, t_max: float = math.inf) -> float:
    """Least-squares slope of log(values) against time."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (t >= t_min) & (t <= t_max) & (v > 0)
    if keep.sum() < 2:
        raise ValueError("not enough positive samples to fit a rate")
    return float(np.polyfit(t[keep], np.log(v[keep]), 1)[0])


def write_snapshots(trace: FlowTrace, directory) -> list[Path]:
    out = []
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, (t, c) in enumerate(trace.snapshots):
        p = d / f"snapshot_{k:04d}.curve"
        cv.write_curve(p, c, comment=f"t={t!r}")
        out.append(p)
    return out
