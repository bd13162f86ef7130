"""Closed polylines on a cylinder chart, with covers, satellites and crossing counts.

Points are stored with a *lifted* x coordinate: the last point is followed by
the first point shifted by ``x_winding * period_x``.  Crossings are counted
between segments of one lift and every x-translate of the other curve that
can overlap it, so curves winding several times around the cylinder are
handled without reducing coordinates mod ``period_x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

# Degeneracy band for orientation predicates, relative to |a| |b|.
EPS_GEO = 1e-12
# Crossings flatter than this (sine of the angle) are treated as near-tangent.
ANGLE_TOL = 1e-8
# Crossings this close to a segment end (in segment parameter) are flagged.
PARAM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    points: np.ndarray
    period_x: float
    x_winding: int = 0
    cover_degree: int = 1
    orientation: int = 1

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (N, 2)")
        object.__setattr__(self, "points", pts)
        pts.flags.writeable = False
        if self.cover_degree < 1:
            raise ValueError("cover_degree must be >= 1")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        n = len(pts)
        if n < 3 or n < 16 * abs(self.x_winding):
            raise ValueError(f"too few points ({n}) for x-winding {self.x_winding}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        seg = np.diff(self.closed_points(), axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) == 0.0):
            raise ValueError("curve has a zero-length segment (not immersed)")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def shift(self) -> float:
        return self.x_winding * self.period_x

    def closed_points(self) -> np.ndarray:
        """Points with the closing vertex (first point shifted by the winding) appended."""
        last = self.points[:1].copy()
        last[0, 0] += self.shift
        return np.vstack([self.points, last])

    def with_points(self, pts) -> "DiscreteCurve":
        return replace(self, points=np.asarray(pts, dtype=float))

    def reversed(self) -> "DiscreteCurve":
        pts = self.points[::-1].copy()
        return DiscreteCurve(pts, self.period_x, -self.x_winding, self.cover_degree,
                             -self.orientation)

    def rolled(self, r: int) -> "DiscreteCurve":
        """Start the point sequence at index ``r`` (same geometric curve)."""
        r %= self.n
        pts = np.vstack([self.points[r:], self.points[:r] + [self.shift, 0.0]])
        return self.with_points(pts)

    def refined(self) -> "DiscreteCurve":
        """Insert segment midpoints; the polyline itself is unchanged."""
        closed = self.closed_points()
        mid = 0.5 * (closed[1:] + closed[:-1])
        pts = np.empty((2 * self.n, 2))
        pts[0::2] = self.points
        pts[1::2] = mid
        return self.with_points(pts)

    def translated(self, dx: float = 0.0, dy: float = 0.0) -> "DiscreteCurve":
        return self.with_points(self.points + [dx, dy])


@dataclass(frozen=True)
class Crossing:
    """A transverse crossing of segment ``i`` of one curve with segment ``j`` of
    the other, the latter shifted by ``k * period_x``."""

    i: int
    j: int
    k: int
    t: float
    u: float
    sin_angle: float
    point: tuple[float, float]


@dataclass(frozen=True)
class Loop:
    """Sub-arc between two visits of a self-crossing.

    ``start_index`` and ``end_index`` are fractional vertex positions along the
    curve; ``end_index`` may exceed N when the arc wraps past the start vertex.
    """

    start_index: float
    end_index: float
    is_simple: bool
    corner_convex: bool
    area: float
    exterior_angle: float
    winding: int
    crossing: int

    @property
    def contractible(self) -> bool:
        return self.winding == 0



# ---------------------------------------------------------------------------
# crossing kernel

@njit(cache=True)
def _scan(A, B, shift_vals, shift_ks, self_mode, w, eps, ang_tol, par_tol,
          out_i, out_j, out_k, out_tu):
    """Segment-pair sweep between polylines A and B (closed point arrays).

    Pairs touching the degeneracy band are never counted; they only raise the
    bad counter when they could hide a crossing.  Returns (count, nbad).
    """
    na = A.shape[0] - 1
    nb = B.shape[0] - 1
    count = 0
    nbad = 0
    cap = out_i.shape[0]
    for kk in range(shift_vals.shape[0]):
        s = shift_vals[kk]
        k = shift_ks[kk]
        for i in range(na):
            a0x = A[i, 0]
            a0y = A[i, 1]
            a1x = A[i + 1, 0]
            a1y = A[i + 1, 1]
            axmin = min(a0x, a1x)
            axmax = max(a0x, a1x)
            aymin = min(a0y, a1y)
            aymax = max(a0y, a1y)
            dax = a1x - a0x
            day = a1y - a0y
            la = math.sqrt(dax * dax + day * day)
            j0 = i + 1 if self_mode else 0
            for j in range(j0, nb):
                if self_mode:
                    if k == 0 and j == i + 1:
                        continue
                    if i == 0 and j == nb - 1 and k == -w:
                        continue
                b0x = B[j, 0] + s
                b1x = B[j + 1, 0] + s
                if max(b0x, b1x) < axmin or min(b0x, b1x) > axmax:
                    continue
                b0y = B[j, 1]
                b1y = B[j + 1, 1]
                if max(b0y, b1y) < aymin or min(b0y, b1y) > aymax:
                    continue
                dbx = b1x - b0x
                dby = b1y - b0y
                lb = math.sqrt(dbx * dbx + dby * dby)
                band = eps * la * lb
                d1 = dax * (b0y - a0y) - day * (b0x - a0x)
                d2 = dax * (b1y - a0y) - day * (b1x - a0x)
                d3 = dbx * (a0y - b0y) - dby * (a0x - b0x)
                d4 = dbx * (a1y - b0y) - dby * (a1x - b0x)
                n1 = abs(d1) <= band
                n2 = abs(d2) <= band
                n3 = abs(d3) <= band
                n4 = abs(d4) <= band
                if n1 or n2 or n3 or n4:
                    st1 = (d1 >= 0.0) != (d2 >= 0.0)
                    st2 = (d3 >= 0.0) != (d4 >= 0.0)
                    if st1 or st2 or (n1 and n2 and n3 and n4):
                        nbad += 1
                    continue
                if ((d1 > 0.0) != (d2 > 0.0)) and ((d3 > 0.0) != (d4 > 0.0)):
                    t = d3 / (d3 - d4)
                    u = d1 / (d1 - d2)
                    sn = abs(dax * dby - day * dbx) / (la * lb)
                    if (sn < ang_tol or t < par_tol or t > 1.0 - par_tol
                            or u < par_tol or u > 1.0 - par_tol):
                        nbad += 1
                    if count < cap:
                        out_i[count] = i
                        out_j[count] = j
                        out_k[count] = k
                        out_tu[count, 0] = t
                        out_tu[count, 1] = u
                        out_tu[count, 2] = sn
                    count += 1
    return count, nbad


def _scan_periodic(A, B, period, self_mode, w):
    amin, amax = A[:, 0].min(), A[:, 0].max()
    bmin, bmax = B[:, 0].min(), B[:, 0].max()
    ks = np.arange(math.floor((amin - bmax) / period) - 1,
                   math.ceil((amax - bmin) / period) + 2, dtype=np.int64)
    vals = ks * float(period)
    cap = 256
    while True:
        oi = np.empty(cap, np.int64)
        oj = np.empty(cap, np.int64)
        ok = np.empty(cap, np.int64)
        otu = np.empty((cap, 3))
        count, nbad = _scan(A, B, vals, ks, self_mode, w, EPS_GEO, ANGLE_TOL, PARAM_TOL,
                            oi, oj, ok, otu)
        if count <= cap:
            break
        cap = count
    out = []
    for n in range(count):
        i, j, k = int(oi[n]), int(oj[n]), int(ok[n])
        t, u, sn = otu[n]
        p = A[i] + t * (A[i + 1] - A[i])
        out.append(Crossing(i, j, k, float(t), float(u), float(sn), (float(p[0]), float(p[1]))))
    return out, nbad == 0


def crossings_between(a: DiscreteCurve, b: DiscreteCurve) -> tuple[list[Crossing], bool]:
    """Crossings of ``a`` with all x-translates of ``b``; flag is False on any degeneracy."""
    if a.period_x != b.period_x:
        raise ValueError("curves belong to charts with different x-periods")
    return _scan_periodic(a.closed_points(), b.closed_points(), a.period_x, False, 0)


def self_crossings(c: DiscreteCurve) -> tuple[list[Crossing], bool]:
    """Self-crossings with ``i < j``; adjacent segments (including the closing pair) skipped."""
    P = c.closed_points()
    return _scan_periodic(P, P, c.period_x, True, c.x_winding)


def count_intersections(a: DiscreteCurve, b: DiscreteCurve) -> tuple[int, bool]:
    xs, ok = crossings_between(a, b)
    return len(xs), ok


def count_self_intersections(c: DiscreteCurve) -> tuple[int, bool]:
    xs, ok = self_crossings(c)
    return len(xs), ok


def _is_clean(x: Crossing) -> bool:
    return (x.sin_angle >= ANGLE_TOL and PARAM_TOL <= x.t <= 1 - PARAM_TOL
            and PARAM_TOL <= x.u <= 1 - PARAM_TOL)


# ---------------------------------------------------------------------------
# loops

def _lifted_point(c: DiscreteCurve, pos: float) -> np.ndarray:
    """Point at fractional position ``pos`` (any real) on the lifted curve."""
    n = c.n
    m = math.floor(pos)
    frac = pos - m
    P = c.closed_points()
    base = m % n
    sheet = (m - base) // n
    p = P[base] + frac * (P[base + 1] - P[base])
    return p + [sheet * c.shift, 0.0]


def arc_polygon(c: DiscreteCurve, start: float, end: float) -> np.ndarray:
    """Vertices of the sub-arc from position ``start`` to ``end`` (end point omitted)."""
    n = c.n
    idx = np.arange(math.floor(start) + 1, math.ceil(end))
    sheet = np.floor_divide(idx, n)
    pts = c.points[idx % n] + np.stack([sheet * c.shift, np.zeros(len(idx))], axis=1)
    return np.vstack([_lifted_point(c, start)[None, :], pts])


def _polygon_area(pts: np.ndarray, winding_shift: float, chart) -> float:
    closed = np.vstack([pts, pts[:1] + [winding_shift, 0.0]])
    if chart is None:
        a, b = closed[:-1], closed[1:]
        return float(-np.sum(0.5 * (a[:, 1] + b[:, 1]) * (b[:, 0] - a[:, 0])))
    from .metric import chart_integral_points
    return chart_integral_points(chart, closed)


def _metric_turn(chart, point, v_in, v_out) -> float:
    """Signed angle from ``v_in`` to ``v_out`` measured in the metric at ``point``."""
    if chart is None:
        E, F, G = 1.0, 0.0, 1.0
    else:
        E, F, G = (float(v) for v in chart.efg(point[0], point[1]))
    sq = math.sqrt(E * G - F * F)
    cross = sq * (v_in[0] * v_out[1] - v_in[1] * v_out[0])
    dot = E * v_in[0] * v_out[0] + F * (v_in[0] * v_out[1] + v_in[1] * v_out[0]) \
        + G * v_in[1] * v_out[1]
    return math.atan2(cross, dot)


def _inside_arc(pos: float, start: float, end: float, n: int) -> bool:
    d = (pos - start) % n
    return 0.0 < d < end - start


def find_loops(c: DiscreteCurve, chart=None, crossings=None) -> list[Loop]:
    """Two loops per clean self-crossing: the arc from the first visit to the
    second, and the complementary arc.  Degenerate crossings are skipped.

    Loops that wind around the cylinder get their area measured against the
    line y = 0 and report a nonzero ``winding``.
    """
    if crossings is None:
        crossings, _ = self_crossings(c)
    n = c.n
    P = c.closed_points()
    d = np.diff(P, axis=0)
    positions = [(x.i + x.t, x.j + x.u) for x in crossings]
    clean = [_is_clean(x) for x in crossings]
    loops = []
    for ci, x in enumerate(crossings):
        if not clean[ci]:
            continue
        pa, pb = positions[ci]
        arcs = ((pa, pb, -x.k, d[x.i], d[x.j]),
                (pb, pa + n, c.x_winding + x.k, d[x.j], d[x.i]))
        for start, end, wind, v_out, v_in in arcs:
            simple = True
            for cj, (qa, qb) in enumerate(positions):
                if cj != ci and _inside_arc(qa, start, end, n) and _inside_arc(qb, start, end, n):
                    simple = False
                    break
            pts = arc_polygon(c, start, end)
            area = _polygon_area(pts, wind * c.period_x, chart) if len(pts) >= 2 else 0.0
            turn = _metric_turn(chart, x.point, v_in, v_out)
            convex = bool(area != 0.0 and np.sign(area) * turn > 0.0)
            loops.append(Loop(float(start), float(end), simple, convex, float(area),
                              abs(turn), int(wind), ci))
    return loops


def _nested(inner: Loop, outer: tuple[float, float], n: int) -> bool:
    off = (inner.start_index - outer[0]) % n
    return off + (inner.end_index - inner.start_index) <= (outer[1] - outer[0]) + 1e-12 \
        and (inner.start_index, inner.end_index) != outer


def extract_convex_simple_loop(c: DiscreteCurve, chart=None, loops=None) -> Loop | None:
    """Descend through nested loops until a simple loop with a convex corner is found.

    Start from the longest loop.  A non-simple loop contains a smaller loop in
    its own parameter interval and we move there.  A simple loop whose corner is
    concave has the continuing strand entering its disc; the loops it produces
    lie in the complementary interval, so we move into that one.
    """
    if loops is None:
        loops = find_loops(c, chart)
    if not loops:
        return None
    n = c.n
    length = lambda lp: lp.end_index - lp.start_index  # noqa: E731
    visited: set[int] = set()
    current = max(range(len(loops)), key=lambda k: length(loops[k]))
    while True:
        visited.add(current)
        lp = loops[current]
        if lp.is_simple and lp.corner_convex:
            return lp
        span = (lp.start_index, lp.end_index)
        if lp.is_simple:
            span = (lp.end_index, lp.start_index + n)
        cands = [k for k in range(len(loops)) if k not in visited and _nested(loops[k], span, n)]
        if not cands:
            cands = [k for k in range(len(loops)) if k not in visited]
        if not cands:
            return None
        current = max(cands, key=lambda k: length(loops[k]))


# ---------------------------------------------------------------------------
# constructors

def _offset_grid(n: int, span: float) -> np.ndarray:
    # half-cell offset keeps vertices off the zeros of sin(2 pi p x / span)
    return (np.arange(n) + 0.5) * (span / n)


def equator(period_x: float = 2 * math.pi, n: int = 512, cover: int = 1) -> DiscreteCurve:
    x = _offset_grid(n * cover, cover * period_x)
    pts = np.stack([x, np.zeros_like(x)], axis=1)
    return DiscreteCurve(pts, period_x, cover, cover)


def circle(center=(0.0, 0.0), radius: float = 1.0, n: int = 256,
           period_x: float = 2 * math.pi) -> DiscreteCurve:
    th = 2 * math.pi * np.arange(n) / n
    pts = np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)
    return DiscreteCurve(pts, period_x)


def lissajous(m: int, n: int = 512, center=(math.pi, 0.0), scale=(1.0, 1.0),
              period_x: float = 2 * math.pi) -> DiscreteCurve:
    """(cos t, sin((m+1) t)): an ellipse for m=0 and a curve with m double points otherwise."""
    t = 2 * math.pi * (np.arange(n) + 0.25) / n
    pts = np.stack([center[0] + scale[0] * np.cos(t),
                    center[1] + scale[1] * np.sin((m + 1) * t)], axis=1)
    return DiscreteCurve(pts, period_x)


def figure_eight(n: int = 512, **kw) -> DiscreteCurve:
    return lissajous(1, n, **kw)


def limacon(n: int = 512, a: float = 2.0, b: float = 1.0, scale: float = 0.4,
            center=(math.pi, 0.0), period_x: float = 2 * math.pi) -> DiscreteCurve:
    """r = b + a cos(theta); for a > b an inner lobe sits inside the outer one."""
    th = 2 * math.pi * (np.arange(n) + 0.25) / n
    r = scale * (b + a * np.cos(th))
    pts = np.stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)], axis=1)
    return DiscreteCurve(pts, period_x)


def q_cover(base: DiscreteCurve, q: int) -> DiscreteCurve:
    """Traverse ``base`` q times."""
    if q < 1:
        raise ValueError("cover degree must be >= 1")
    pts = np.vstack([base.points + [m * base.shift, 0.0] for m in range(q)])
    return DiscreteCurve(pts, base.period_x, q * base.x_winding, q * base.cover_degree,
                         base.orientation)


def make_satellite(chart, p: int, q: int, eps: float, phase: float = 0.0,
                   n_per_period: int = 256) -> DiscreteCurve:
    """Graph y = eps sin(2 pi p (x - phase) / (q L)) over [0, qL) around the line y = 0.

    ``p = 0`` gives the parallel curve y = eps.
    """
    if p < 0 or q < 1:
        raise ValueError("need p >= 0 and q >= 1")
    if math.gcd(p, q) != 1:
        raise ValueError(f"p={p} and q={q} are not coprime")
    lo, hi = chart.y_band
    if not 0 < eps < min(-lo, hi):
        raise ValueError(f"eps={eps} does not fit in the band {chart.y_band}")
    L = chart.period_x
    n = n_per_period * q
    x = _offset_grid(n, q * L)
    y = eps * np.sin(2 * math.pi * p * (x - phase) / (q * L)) if p else np.full(n, eps)
    return DiscreteCurve(np.stack([x, y], axis=1), L, q, q)


def satellite_of(base: DiscreteCurve, p: int, q: int, eps: float,
                 phase: float = 0.123) -> DiscreteCurve:
    """(p, q) satellite of an arbitrary base polyline.

    Vertex j of the q-fold cover is pushed by eps sin(2 pi p (s_j - phase) / q)
    along the averaged Euclidean chart normal, where s_j = j / N counts base
    turns.  Offsetting the base's own vertices keeps each satellite chord on
    the side of the matching base chord given by the sign of the offset, so
    crossings with the base occur exactly at sign changes.  Choose ``phase``
    so that no offset vanishes at a vertex.
    """
    if q < 1 or p < 0 or math.gcd(p, q) != 1:
        raise ValueError(f"p={p} and q={q} are not coprime")
    cover = q_cover(base, q)
    P = cover.closed_points()
    seg = np.diff(P, axis=0)
    seg /= np.hypot(seg[:, 0], seg[:, 1])[:, None]
    tang = seg + np.roll(seg, 1, axis=0)
    tang /= np.hypot(tang[:, 0], tang[:, 1])[:, None]
    normal = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    s = np.arange(cover.n) / base.n
    off = eps * np.sin(2 * math.pi * p * (s - phase) / q)
    return cover.with_points(cover.points + off[:, None] * normal)


# ---------------------------------------------------------------------------
# file format

def write_curve(path, c: DiscreteCurve, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines += [f"# {ln}" for ln in comment.splitlines()]
    lines += [f"period_x={c.period_x!r}", f"cover_degree={c.cover_degree}",
              f"x_winding={c.x_winding}", f"orientation={c.orientation}"]
    lines += [f"{x!r} {y!r}" for x, y in c.points.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_curve(path) -> DiscreteCurve:
    header: dict[str, str] = {}
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, val = (s.strip() for s in line.split("=", 1))
            header[key] = val
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"bad curve row: {raw!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if "period_x" not in header:
        raise ValueError("curve file lacks period_x")
    unknown = set(header) - {"period_x", "cover_degree", "x_winding", "orientation"}
    if unknown:
        raise ValueError(f"unknown curve header keys: {sorted(unknown)}")
    L = float(header["period_x"])
    pts = np.array(rows, dtype=float)
    if len(pts) < 3:
        raise ValueError("curve file has fewer than 3 points")
    if "x_winding" in header:
        w = int(header["x_winding"])
    else:
        step = pts[1, 0] - pts[0, 0]
        w = int(round((pts[-1, 0] - pts[0, 0] + step) / L))
    return DiscreteCurve(pts, L, w, int(header.get("cover_degree", 1)),
                         int(header.get("orientation", 1)))


def loop_boundary(c: DiscreteCurve, loop: Loop) -> np.ndarray:
    """Closed point array of a loop (last point repeats the corner, shifted by its winding)."""
    pts = arc_polygon(c, loop.start_index, loop.end_index)
    return np.vstack([pts, pts[:1] + [loop.winding * c.period_x, 0.0]])
