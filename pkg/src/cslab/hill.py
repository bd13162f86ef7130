"""Hill's equation y'' + (Q(x) + lam) y = 0 with L-periodic Q.

Rotation numbers are measured in turns of the Pruefer angle
theta = atan2(y, y'), so that Q = 1 on a period of 2 pi gives exactly 1 at
lam = 0.  The integer part of the rotation number comes from the tracked
phase of one solution; the fractional part comes from the conjugacy class
of the monodromy matrix, which makes rho(lam, qL) = q rho(lam, L) hold up to
round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

MAX_STEPS = 50_000_000
SCAN_POINTS = 64
BISECTIONS = 80
RHO_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HillProblem:
    """Periodic potential sampled on a uniform grid of [0, L)."""

    Q: np.ndarray
    L: float
    q: int = 1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float).ravel()
        if len(Q) < 1 or not np.all(np.isfinite(Q)):
            raise ValueError("potential samples must be finite and non-empty")
        if not self.L > 0:
            raise ValueError("period must be positive")
        if self.q < 1:
            raise ValueError("cover degree q must be >= 1")
        object.__setattr__(self, "Q", Q)

    @classmethod
    def constant(cls, value: float, L: float, q: int = 1) -> "HillProblem":
        return cls(np.full(8, float(value)), L, q)

    @classmethod
    def from_function(cls, fn, L: float, n: int = 512, q: int = 1) -> "HillProblem":
        x = np.arange(n) * (L / n)
        return cls(np.asarray(fn(x), dtype=float), L, q)

    @classmethod
    def from_file(cls, path, q: int = 1) -> "HillProblem":
        """Rows ``s Q`` on a uniform grid from s = 0 to s = L inclusive (closing row)."""
        rows = [ln.split() for ln in Path(path).read_text().splitlines()
                if ln.strip() and not ln.lstrip().startswith("#")]
        data = np.array(rows, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2 or len(data) < 3:
            raise ValueError("potential file needs at least three 's Q' rows")
        s, Q = data[:, 0], data[:, 1]
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise ValueError("potential grid must start at 0 and increase")
        if not np.allclose(np.diff(s), s[1] - s[0], rtol=1e-8, atol=1e-12):
            raise ValueError("potential grid must be uniform")
        if abs(Q[-1] - Q[0]) > 1e-9 * max(1.0, np.abs(Q).max()):
            raise ValueError("potential samples do not close (Q(L) != Q(0))")
        return cls(Q[:-1], float(s[-1]), q)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.Q).max())

    @property
    def steps_per_period(self) -> int:
        return max(2048, 512 * math.ceil(self.q * self.L))

    def _spline(self) -> CubicSpline:
        spl = self._cache.get("spline")
        if spl is None:
            n = len(self.Q)
            x = np.arange(n + 1) * (self.L / n)
            spl = CubicSpline(x, np.append(self.Q, self.Q[0]), bc_type="periodic")
            self._cache["spline"] = spl
        return spl

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.all(self.Q == self.Q[0]):
            return np.full_like(x, self.Q[0])
        return self._spline()(np.mod(x, self.L))

    def half_step_samples(self, n_steps: int, x_end: float) -> np.ndarray:
        """Q at the 2 n + 1 RK4 stage points of a uniform grid on [0, x_end]."""
        key = ("nodes", n_steps, x_end)
        vals = self._cache.get(key)
        if vals is None:
            vals = self(np.arange(2 * n_steps + 1) * (0.5 * x_end / n_steps))
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = vals
        return vals


@dataclass(frozen=True)
class Monodromy:
    M: np.ndarray
    rho: float
    lam: float
    x: float
    phase: float = 0.0


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True)
def _rk4_fundamental(qv, h, n, lam):
    """Fundamental matrix over n steps and the unwrapped Pruefer phase of column 0."""
    y0, v0, y1, v1 = 1.0, 0.0, 0.0, 1.0
    prev = math.atan2(y0, v0)
    total = 0.0
    hh = 0.5 * h
    for k in range(n):
        qa = qv[2 * k] + lam
        qm = qv[2 * k + 1] + lam
        qb = qv[2 * k + 2] + lam
        # column 0
        k1y, k1v = v0, -qa * y0
        k2y, k2v = v0 + hh * k1v, -qm * (y0 + hh * k1y)
        k3y, k3v = v0 + hh * k2v, -qm * (y0 + hh * k2y)
        k4y, k4v = v0 + h * k3v, -qb * (y0 + h * k3y)
        y0 += h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v0 += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        # column 1
        k1y, k1v = v1, -qa * y1
        k2y, k2v = v1 + hh * k1v, -qm * (y1 + hh * k1y)
        k3y, k3v = v1 + hh * k2v, -qm * (y1 + hh * k2y)
        k4y, k4v = v1 + h * k3v, -qb * (y1 + h * k3y)
        y1 += h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v1 += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        th = math.atan2(y0, v0)
        d = th - prev
        if d > math.pi:
            d -= 2 * math.pi
        elif d < -math.pi:
            d += 2 * math.pi
        total += d
        prev = th
        # keep the columns O(1) in hyperbolic regimes without changing the phase
        s = abs(y0) + abs(v0) + abs(y1) + abs(v1)
        if s > 1e150:
            raise OverflowError("solution overflow")
    return y0, v0, y1, v1, total


@njit(cache=True)
def _rk4_trajectory(qv, h, n, lam, ya, va, renorm=False):
    ys = np.empty(n + 1)
    vs = np.empty(n + 1)
    y, v = ya, va
    ys[0] = y
    vs[0] = v
    hh = 0.5 * h
    for k in range(n):
        qa = qv[2 * k] + lam
        qm = qv[2 * k + 1] + lam
        qb = qv[2 * k + 2] + lam
        k1y, k1v = v, -qa * y
        k2y, k2v = v + hh * k1v, -qm * (y + hh * k1y)
        k3y, k3v = v + hh * k2v, -qm * (y + hh * k2y)
        k4y, k4v = v + h * k3v, -qb * (y + h * k3y)
        y += h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if renorm and abs(y) + abs(v) > 1e100:
            # only signs matter to the caller; rescaling keeps them
            y *= 1e-100
            v *= 1e-100
        ys[k + 1] = y
        vs[k + 1] = v
    return ys, vs


# ---------------------------------------------------------------------------
# monodromy and rotation numbers

def _grid(hp: HillProblem, x_end: float) -> tuple[int, float]:
    n = max(1, round(x_end / hp.L * hp.steps_per_period))
    if n > MAX_STEPS:
        raise OverflowError(f"{n} integration steps exceed the limit {MAX_STEPS}")
    return n, x_end / n


def rotation_from_phase(M: np.ndarray, phase: float) -> float:
    """Rotation number in turns from a monodromy matrix and the tracked phase of M e_1."""
    a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    tr = a + d
    # tr^2 - 4 = (a - d)^2 + 4 b c for det M = 1, without cancellation near |tr| = 2
    disc = (a - d) ** 2 + 4.0 * b * c
    if disc >= 0.0:
        base = 0.0 if tr > 0 else math.pi
    else:
        ang = math.atan2(0.5 * math.sqrt(-disc), 0.5 * tr)
        base = ang if b > 0 else 2 * math.pi - ang
    n = round((phase - base) / (2 * math.pi))
    return (base + 2 * math.pi * n) / (2 * math.pi)


def solution_matrix(hp: HillProblem, lam: float, x_end: float) -> Monodromy:
    """Fundamental matrix [[phi0, phi1], [phi0', phi1']] at ``x_end`` and rho(lam, x_end)."""
    if x_end < 0:
        raise ValueError("x_end must be non-negative")
    if x_end == 0:
        return Monodromy(np.eye(2), 0.0, lam, 0.0)
    n, h = _grid(hp, x_end)
    qv = hp.half_step_samples(n, x_end)
    y0, v0, y1, v1, phase = _rk4_fundamental(qv, h, n, float(lam))
    M = np.array([[y0, y1], [v0, v1]])
    return Monodromy(M, rotation_from_phase(M, phase), lam, x_end, phase)


def rho(hp: HillProblem, lam: float, x_end: float | None = None) -> float:
    return solution_matrix(hp, lam, hp.L if x_end is None else x_end).rho


def inverse_rotation_number(hp: HillProblem, lam: float = 0.0) -> float:
    """rho(lam, L); at lam = 0 this is the inverse rotation number of the geodesic."""
    return rho(hp, lam)


def rho_periodicity_check(hp: HillProblem, lam: float, q: int) -> tuple[float, float]:
    return rho(hp, lam, q * hp.L), q * rho(hp, lam)


def omega_from_zeros(hp: HillProblem, lam: float = 0.0, n_periods: int = 512) -> float:
    """Zero-spacing estimate s_{2n} / (n L) from the solution with y(0) = 0, y'(0) = 1.

    Returns ``math.inf`` when fewer than two zeros follow the one at x = 0.
    """
    if n_periods < 8:
        raise ValueError("n_periods must be at least 8")
    x_end = n_periods * hp.L
    n, h = _grid(hp, x_end)
    ys, _ = _rk4_trajectory(hp.half_step_samples(n, x_end), h, n, float(lam), 0.0, 1.0, True)
    y = ys[1:]
    sign_change = np.nonzero(np.signbit(y[:-1]) != np.signbit(y[1:]))[0]
    if len(sign_change) < 2:
        return math.inf
    a, b = y[sign_change], y[sign_change + 1]
    zeros = (sign_change + 1 + a / (a - b)) * h
    m = len(zeros) // 2
    return float(zeros[2 * m - 1] / (m * hp.L))


# ---------------------------------------------------------------------------
# lambda intervals

def _scan_range(hp: HillProblem, p: int, q: int) -> tuple[float, float]:
    r = (2 * math.pi * (p + 1) / (q * hp.L)) ** 2
    return -r - hp.sup_norm, r + hp.sup_norm


def _edge(hp, target, lo, hi, strict: bool) -> float:
    """Boundary between {rho < target} and {rho >= target} (or <= / > when strict)."""
    def above(lam):
        r = rho(hp, lam)
        return r > target + RHO_TOL if strict else r >= target - RHO_TOL
    for _ in range(BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if above(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def lambda_interval(hp: HillProblem, p: int, q: int) -> tuple[float, float]:
    """[lam_minus, lam_plus] = {lam : rho(lam, L) = p / q}."""
    if q < 1 or p < 0 or math.gcd(p, q) != 1:
        raise ValueError(f"p={p}, q={q} must be coprime with q >= 1")
    target = p / q
    a, b = _scan_range(hp, p, q)
    grid = np.linspace(a, b, SCAN_POINTS)
    rhos = np.array([rho(hp, lam) for lam in grid])
    below = np.nonzero(rhos < target - RHO_TOL)[0]
    over = np.nonzero(rhos > target + RHO_TOL)[0]
    if len(below) == 0 or len(over) == 0:
        raise ValueError(
            f"no bracket for rho = {p}/{q} on [{a:.6g}, {b:.6g}]: "
            f"rho ranges over [{rhos.min():.6g}, {rhos.max():.6g}]")
    # rho is monotone, so "below" is a prefix and "over" a suffix of the grid
    i_lo, i_hi = below[-1], over[0]
    if i_hi <= i_lo:
        raise ValueError("rotation number is not monotone on the scan grid")
    lam_minus = _edge(hp, target, grid[i_lo], grid[i_lo + 1], strict=False)
    lam_plus = _edge(hp, target, grid[i_hi - 1], grid[i_hi], strict=True)
    return float(lam_minus), float(max(lam_plus, lam_minus))


# ---------------------------------------------------------------------------
# eigenfunctions

@dataclass(frozen=True)
class EigenBasis:
    """Sampled basis of E_{p/q} on the grid ``x`` of [0, qL)."""

    x: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    lambda_minus: float
    lambda_plus: float
    coexistence: bool

    def element(self, c_plus: float, c_minus: float) -> np.ndarray:
        return c_plus * self.phi_plus + c_minus * self.phi_minus


def _propagate(hp: HillProblem, lam: float, q: int, v) -> tuple[np.ndarray, np.ndarray]:
    x_end = q * hp.L
    n, h = _grid(hp, x_end)
    ys, _ = _rk4_trajectory(hp.half_step_samples(n, x_end), h, n, float(lam),
                            float(v[0]), float(v[1]))
    return np.arange(n) * h, ys[:-1]


def _unit_eigenvector(Mq: np.ndarray) -> np.ndarray:
    _, s, vt = np.linalg.svd(Mq - np.eye(2))
    scale = max(1.0, float(np.abs(Mq).max()))
    if s[-1] > 1e-6 * scale:
        raise ValueError(f"monodromy has no eigenvalue 1 (smallest singular value {s[-1]:.3g})")
    return vt[-1]


def periodic_eigenfunctions(hp: HillProblem, p: int, q: int) -> EigenBasis:
    lam_m, lam_p = lambda_interval(hp, p, q)
    M_p = np.linalg.matrix_power(solution_matrix(hp, lam_p, hp.L).M, q)
    M_m = np.linalg.matrix_power(solution_matrix(hp, lam_m, hp.L).M, q)
    if np.abs(M_p - np.eye(2)).max() < 1e-6 and np.abs(M_m - np.eye(2)).max() < 1e-6:
        lam = 0.5 * (lam_m + lam_p)
        x, f0 = _propagate(hp, lam, q, (1.0, 0.0))
        _, f1 = _propagate(hp, lam, q, (0.0, 1.0))
        return EigenBasis(x, f0, f1, lam_m, lam_p, True)
    x, fp = _propagate(hp, lam_p, q, _unit_eigenvector(M_p))
    _, fm = _propagate(hp, lam_m, q, _unit_eigenvector(M_m))
    return EigenBasis(x, fp, fm, lam_m, lam_p, False)


# ---------------------------------------------------------------------------
# satellite conditions for sampled functions

SLOPE_TOL = 1e-6
TOUCH_TOL = 1e-9


def _zeros_simple(v: np.ndarray, scale: float, period: float) -> bool:
    n = len(v)
    h = period / n
    if np.any(v == 0.0):
        # re-test on a shifted refined grid
        spl = _periodic_spline(v, period)
        fine = spl((np.arange(8 * n) + 0.5) * (h / 8))
        if np.any(fine == 0.0):
            return False
        return _zeros_simple(fine, scale, period)
    nxt = np.roll(v, -1)
    change = np.signbit(v) != np.signbit(nxt)
    if np.any(np.abs(nxt[change] - v[change]) < SLOPE_TOL * scale):
        return False
    # touching zeros: local minima of |v| with no sign change nearby
    av = np.abs(v)
    prev_change = np.roll(change, 1)
    cand = (av <= np.roll(av, 1)) & (av <= np.roll(av, -1)) & ~change & ~prev_change \
        & (av < 1e-2 * scale)
    if np.any(cand):
        spl = _periodic_spline(v, period)
        for j in np.nonzero(cand)[0]:
            res = minimize_scalar(lambda t: abs(float(spl(t % period))),
                                  bounds=((j - 1) * h, (j + 1) * h), method="bounded",
                                  options={"xatol": 1e-12 * period})
            if res.fun < TOUCH_TOL * scale:
                return False
    return True


def _periodic_spline(v: np.ndarray, period: float) -> CubicSpline:
    n = len(v)
    x = np.arange(n + 1) * (period / n)
    return CubicSpline(x, np.append(v, v[0]), bc_type="periodic")


def check_satellite_conditions(u, q: int, period: float | None = None) -> bool:
    """True iff u and every difference u(x) - u(x - kL), 0 < k < q, have only simple zeros.

    ``u`` is sampled uniformly on [0, qL); ``period`` (= qL) only matters for
    the refined re-tests and defaults to the sample count.
    """
    u = np.asarray(u, dtype=float)
    n = len(u)
    if n < 8 or q < 1:
        return False
    scale = float(np.abs(u).max())
    if scale == 0.0 or not np.isfinite(scale):
        return False
    period = float(n) if period is None else float(period)
    if not _zeros_simple(u, scale, period):
        return False
    for k in range(1, q):
        if (k * n) % q == 0:
            shifted = np.roll(u, k * n // q)
        else:
            spl = _periodic_spline(u, period)
            shifted = spl((np.arange(n) * (period / n) - k * period / q) % period)
        v = u - shifted
        vs = float(np.abs(v).max())
        if vs == 0.0 or not _zeros_simple(v, scale, period):
            return False
    return True


def sign_changes(u) -> int:
    u = np.asarray(u, dtype=float)
    return int(np.count_nonzero(np.signbit(u) != np.signbit(np.roll(u, -1))))
