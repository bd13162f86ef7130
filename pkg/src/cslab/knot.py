"""Flat-knot bookkeeping for curves near a reference geodesic.

A satellite signature records, for a curve alpha and references gamma_i,
k_i = (#alpha cap gamma_i) / 2, l = #self-crossings of alpha and
m_i = #self-crossings of gamma_i.  For a (p, q) satellite of gamma with m
double points one has k = p + m q and l = p (q - 1) + m q^2, which inverts to
q = (k + l) / (k + m) and p = k - m q.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .curve import DiscreteCurve, count_intersections, count_self_intersections


class InvalidSignatureError(ValueError):
    """Counts are not determinate (tangency or odd crossing count)."""


@dataclass(frozen=True)
class KnotSignature:
    k: tuple[int, ...]
    l: int
    m: tuple[int, ...]

    def __post_init__(self):
        if len(self.k) != len(self.m):
            raise ValueError("k and m must have one entry per reference")
        if self.l < 0 or any(v < 0 for v in self.k + self.m):
            raise ValueError("signature entries must be non-negative")

    @classmethod
    def from_counts(cls, raw_crossings: Sequence[int], self_int: int,
                    ref_self: Sequence[int]) -> "KnotSignature":
        if any(r % 2 for r in raw_crossings):
            raise InvalidSignatureError(f"odd crossing count in {tuple(raw_crossings)}")
        return cls(tuple(int(r) // 2 for r in raw_crossings), int(self_int),
                   tuple(int(v) for v in ref_self))


@dataclass(frozen=True)
class EulerInvariants:
    delta_theta: float
    delta_phi: float
    orientation: int

    @property
    def theta_turns(self) -> int:
        return round(self.delta_theta / (2 * math.pi))

    @property
    def phi_turns(self) -> int:
        return round(self.delta_phi / (2 * math.pi))


def signature_of(c: DiscreteCurve, refs: Sequence[DiscreteCurve]) -> KnotSignature:
    raw = []
    for r in refs:
        n, ok = count_intersections(c, r)
        if not ok:
            raise InvalidSignatureError("tangency or degenerate crossing with a reference")
        raw.append(n)
    l, ok = count_self_intersections(c)
    if not ok:
        raise InvalidSignatureError("degenerate self-crossing")
    m = []
    for r in refs:
        mi, ok = count_self_intersections(r)
        if not ok:
            raise InvalidSignatureError("degenerate self-crossing of a reference")
        m.append(mi)
    return KnotSignature.from_counts(raw, l, m)


def satellite_counts(p: int, q: int, m: int) -> tuple[int, int]:
    """Raw base crossings and self-crossings of a (p, q) satellite of a base with m double points."""
    return 2 * p + 2 * m * q, p * (q - 1) + m * q * q


def infer_pq(sig: KnotSignature, i: int = 0) -> tuple[int, int] | None:
    k, l, m = sig.k[i], sig.l, sig.m[i]
    if k + m <= 0:
        return None
    q, rem = divmod(k + l, k + m)
    if rem or q < 1:
        return None
    p = k - m * q
    if p <= 0 or math.gcd(p, q) != 1:
        return None
    return p, q


# ---------------------------------------------------------------------------
# Euler-angle invariants

def _graph_data(c: DiscreteCurve) -> tuple[np.ndarray, np.ndarray]:
    """Samples of u and du/dx along a curve that is a graph over y = 0."""
    P = c.closed_points()
    dx = np.diff(P[:, 0])
    s = np.sign(c.x_winding)
    if s == 0 or np.any(dx * s <= 0):
        raise ValueError("curve is not a graph over the reference line")
    u = c.points[:, 1]
    # centred slope on the nonuniform grid
    d_prev = np.roll(dx, 1)
    up = np.roll(u, -1)
    um = np.roll(u, 1)
    slope = (d_prev ** 2 * (up - u) + dx ** 2 * (u - um)) / (d_prev * dx * (d_prev + dx))
    return u, slope


def _winding(a: np.ndarray, b: np.ndarray) -> float:
    """Total unwrapped angle of the closed planar polygon t -> (a, b) about the origin."""
    ang = np.arctan2(b, a)
    d = np.diff(np.append(ang, ang[0]))
    d = (d + math.pi) % (2 * math.pi) - math.pi
    if np.any(np.abs(d) > 0.5 * math.pi):
        raise ValueError("winding steps too coarse; refine the curve")
    return float(d.sum())


def euler_invariants(c: DiscreteCurve, rel_tol: float = 1e-9) -> EulerInvariants:
    """Euler-angle increments of a satellite-type graph curve relative to the equator.

    With s = sign(x_winding), theta = arg(s u' + i u) turns once per pair of
    zeros of u, so delta_theta = 2 pi p.  The other increment is
    delta_phi = 2 pi w - s delta_theta, which gives
    delta_theta + s delta_phi = 2 pi |w| in both orientations.
    """
    u, du = _graph_data(c)
    s = int(np.sign(c.x_winding))
    scale = max(np.abs(u).max(), 1e-300)
    r = np.hypot(u / scale, du / scale)
    if np.any(r < rel_tol):
        raise ValueError("(u, u') passes through the origin: curve is tangent to the reference")
    dtheta = abs(_winding(s * du, u))
    dphi = 2 * math.pi * c.x_winding - s * dtheta
    return EulerInvariants(dtheta, dphi, s)


# ---------------------------------------------------------------------------
# exit detection

@dataclass(frozen=True)
class ExitReport:
    time: float
    kind: str
    detail: str
    bracket: tuple[float, float]


def class_exit_monitor(baseline: KnotSignature, trace, eps_g: float | None = None):
    """First departure from the baseline flat-knot class along a flow trace.

    Count drops below the baseline are exits through self-tangency (l) or
    tangency with a reference (k_i).  A tracked small loop (area under eps_g)
    that ends in a blowup is reported as a small_loop exit.
    """
    prev_t = None
    for t, sig in zip(trace.times, trace.signatures):
        if sig is None:
            continue
        if sig.l < baseline.l:
            return ExitReport(t, "self_tangency", f"l {baseline.l}->{sig.l}",
                              (prev_t if prev_t is not None else t, t))
        for i, (k0, k1) in enumerate(zip(baseline.k, sig.k)):
            if k1 < k0:
                return ExitReport(t, "reference_tangency", f"k{i + 1} {k0}->{k1}",
                                  (prev_t if prev_t is not None else t, t))
        prev_t = t
    kinds = [e.kind for e in trace.events]
    if "blowup" in kinds:
        ev = trace.events[kinds.index("blowup")]
        small = [e for e in trace.events if e.kind == "small_loop"]
        areas = np.asarray(trace.min_loop_area, dtype=float)
        tiny = eps_g is not None and np.any(areas[np.isfinite(areas)] < eps_g)
        if small or tiny:
            return ExitReport(ev.t, "small_loop", ev.detail, (ev.t, ev.t))
        return ExitReport(ev.t, "blowup", ev.detail, (ev.t, ev.t))
    return None


def format_report(**fields) -> str:
    """``key=value`` lines in the given order; floats printed in shortest round-trip form."""
    out = []
    for key, val in fields.items():
        if isinstance(val, float):
            val = repr(val)
        out.append(f"{key}={val}")
    return "\n".join(out) + "\n"
