"""Acceptance criteria, one test per criterion, each printing a pass/fail line.

Run ``pytest tests/test_acceptance.py -v`` (the verdicts are repeated in the
terminal summary) or ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import time
from itertools import product

import numpy as np
import pytest

from cslab import curve as cv
from cslab import flow as fl
from cslab import geodesic as gd
from cslab import hill as hl
from cslab import knot as kn
from cslab import metric as mt

PQ_SWEEP = [(p, q) for p, q in product(range(1, 6), repeat=2) if math.gcd(p, q) == 1]


def _base(m: int) -> cv.DiscreteCurve:
    return cv.equator(n=512) if m == 0 else cv.lissajous(m, n=512)


def _satellite(m: int, p: int, q: int) -> cv.DiscreteCurve:
    if m == 0:
        return cv.make_satellite(mt.fermi_sphere(), p, q, 0.1)
    return cv.satellite_of(_base(m), p, q, 0.01)


def _random_potential(rng, n_modes=4, amplitude=None, L=2 * math.pi, n=256):
    x = np.arange(n) * (L / n)
    Q = rng.normal() * 0.2 + np.zeros(n)
    for k in range(1, n_modes + 1):
        Q += rng.normal() / k * np.cos(k * 2 * math.pi * x / L + rng.uniform(0, 2 * math.pi))
    if amplitude is not None:
        Q *= amplitude / np.abs(Q).max()
    return hl.HillProblem(Q, L)


# ---------------------------------------------------------------------------

def test_01_satellite_combinatorics(report):
    t0 = time.perf_counter()
    bad = []
    for m in (0, 1, 2):
        base = _base(m)
        for p, q in PQ_SWEEP:
            sat = _satellite(m, p, q)
            cross, ok1 = cv.count_intersections(sat, base)
            selfs, ok2 = cv.count_self_intersections(sat)
            if (cross, selfs) != kn.satellite_counts(p, q, m) or not (ok1 and ok2):
                bad.append((m, p, q, cross, selfs))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 10
    report(1, "satellite combinatorics", ok, f"{3 * len(PQ_SWEEP)} cases, {dt:.1f}s, bad={bad[:3]}")
    assert ok


def _satellite_signature_table(pmax=60, qmax=60, ms=(0, 1, 2)):
    table = {}
    for m in ms:
        for p in range(1, pmax + 1):
            for q in range(1, qmax + 1):
                if math.gcd(p, q) == 1:
                    raw, l = kn.satellite_counts(p, q, m)
                    table[(raw // 2, l, m)] = (p, q)
    return table


def test_02_signature_inversion(report):
    sigs = {}
    for m in (0, 1, 2):
        base = _base(m)
        for p, q in PQ_SWEEP:
            sigs[(m, p, q)] = kn.signature_of(_satellite(m, p, q), [base])
    table = _satellite_signature_table()
    t0 = time.perf_counter()
    wrong = [key for key, s in sigs.items() if kn.infer_pq(s) != key[1:]]
    false_pos = 0
    for s in sigs.values():
        for dk, dl in ((1, 0), (0, 1), (1, 1), (0, -1), (-1, 0), (2, 1)):
            k, l = s.k[0] + dk, s.l + dl
            if k < 0 or l < 0:
                continue
            pert = kn.KnotSignature((k,), l, s.m)
            expected = table.get((k, l, s.m[0]))  # None unless it is itself a satellite
            if kn.infer_pq(pert) != expected:
                false_pos += 1
    dt = time.perf_counter() - t0
    ok = not wrong and false_pos == 0 and dt < 1
    report(2, "signature inversion", ok, f"wrong={wrong[:3]} perturbed mismatches={false_pos} {dt:.3f}s")
    assert ok


def test_03_hill_closed_forms(report):
    t0 = time.perf_counter()
    worst = 0.0
    for L in (2 * math.pi, 1.0, 3.7):
        hp = hl.HillProblem.constant(0.0, L)
        for p, q in ((1, 1), (1, 2), (3, 2), (2, 3), (5, 4)):
            lo, hi = hl.lambda_interval(hp, p, q)
            exact = (2 * math.pi * p / (q * L)) ** 2
            worst = max(worst, abs(lo - exact) / exact, abs(hi - exact) / exact)
    one = hl.HillProblem.constant(1.0, 2 * math.pi)
    rho0 = hl.inverse_rotation_number(one, 0.0)
    lm, lp = hl.lambda_interval(one, 1, 1)
    dt = time.perf_counter() - t0
    ok = worst < 1e-7 and abs(rho0 - 1) < 1e-6 and abs(lm) < 1e-7 and abs(lp) < 1e-7 and dt < 30
    report(3, "Hill closed forms", ok,
           f"Q=0 rel err {worst:.1e}; rho(0)-1={rho0 - 1:.1e}; lambda11=({lm:.1e},{lp:.1e}); {dt:.1f}s")
    assert ok


def test_04_rotation_number_laws(report):
    rng = np.random.default_rng(20240401)
    t0 = time.perf_counter()
    worst_period, violations = 0.0, 0
    for _ in range(100):
        hp = _random_potential(rng, amplitude=rng.uniform(0.1, 2.0))
        lam = rng.uniform(-1.0, 4.0)
        q = int(rng.integers(2, 5))
        a, b = hl.rho_periodicity_check(hp, lam, q)
        worst_period = max(worst_period, abs(a - b))
        lam2 = lam + rng.uniform(1e-3, 1.0)
        if hl.rho(hp, lam2) < hl.rho(hp, lam) - 1e-12:
            violations += 1
    dt = time.perf_counter() - t0
    ok = worst_period < 1e-6 and violations == 0 and dt < 120
    report(4, "rotation-number laws", ok,
           f"max|rho(qL)-q rho(L)|={worst_period:.1e}; monotonicity violations={violations}; {dt:.1f}s")
    assert ok


def test_05_rho_times_omega(report):
    t0 = time.perf_counter()
    rows = []
    for c in (0.6, 0.8, 1.25):
        hp = hl.HillProblem.constant(1 / c ** 2, 2 * math.pi)
        r = hl.inverse_rotation_number(hp)
        w = hl.omega_from_zeros(hp)
        rows.append((c, abs(r - 1 / c), abs(w - c)))
    dt = time.perf_counter() - t0
    ok = all(er < 1e-4 and ew < 1e-3 for _, er, ew in rows) and dt < 30
    report(5, "rho * omega = 1", ok,
           "; ".join(f"c={c}: drho={er:.1e} domega={ew:.1e}" for c, er, ew in rows) + f"; {dt:.1f}s")
    assert ok


def _circle_run(n, t_max, sample_every=50):
    chart = mt.flat()
    c0 = cv.circle((math.pi, 0.0), 1.0, n=n)
    opts = fl.FlowOptions(t_max=t_max, sample_every=sample_every,
                          monitors=frozenset({"curvature", "loops"}))
    return fl.run_flow(chart, c0, (), opts)


def _waist_run(n, t_max, sample_every=200):
    chart = mt.hyperbolic_neck()
    c0 = cv.make_satellite(chart, 0, 1, 0.05, n_per_period=n)
    return fl.run_flow(chart, c0, (), fl.FlowOptions(t_max=t_max, sample_every=sample_every,
                                                      monitors=frozenset({"curvature"})))


def test_06_energy_identity(report):
    t0 = time.perf_counter()
    circ = _circle_run(512, 0.2)
    waist = _waist_run(512, 2.0)
    r1, r2 = fl.energy_identity_residual(circ), fl.energy_identity_residual(waist)
    dt = time.perf_counter() - t0
    ok = r1 <= 0.02 and r2 <= 0.02 and dt < 120
    report(6, "energy identity", ok, f"circle {r1:.2e}, waist {r2:.2e} at N=512; {dt:.1f}s")
    assert ok


def _perturbed_satellite(rng, chart, p, q, n_per_period=128):
    L = chart.period_x
    n = n_per_period * q
    x = (np.arange(n) + 0.5) * (q * L / n)
    u = 0.2 * np.sin(p * 2 * math.pi * x / (q * L) + rng.uniform(0, 2 * math.pi))
    for k in range(p + 1, 3 * p + 3):
        u += rng.normal(0, 0.06) * np.sin(k * 2 * math.pi * x / (q * L) + rng.uniform(0, 2 * math.pi))
    return cv.DiscreteCurve(np.stack([x, u], axis=1), L, q)


def sturm_violations(trace) -> tuple[int, int]:
    """(count increases, drops without a matching event) between determinate samples."""
    det = [(t, (s,) + tuple(c)) for t, s, c in zip(trace.times, trace.self_int, trace.crossings)
           if s is not None and c is not None]
    drops = [e for e in trace.events if e.kind == "intersection_drop"]
    increases = unlogged = 0
    for (t0, a), (t1, b) in zip(det, det[1:]):
        for i, (x, y) in enumerate(zip(a, b)):
            if y > x:
                increases += 1
            elif y < x:
                name = "self" if i == 0 else f"cross_{i}"
                if not any(e.detail.startswith(f"{name} {x}->{y}") and t0 <= e.t <= t1 for e in drops):
                    unlogged += 1
    return increases, unlogged


def test_07_sturm_monotonicity(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    charts = [mt.fermi_sphere(), mt.hyperbolic_neck()]
    pqs = [(1, 2), (3, 2), (2, 3), (1, 3), (3, 4)]
    increases = unlogged = n_drops = 0
    for k in range(50):
        chart = charts[k % 2]
        p, q = pqs[(k // 2) % len(pqs)]
        c0 = _perturbed_satellite(rng, chart, p, q)
        eq = cv.equator(chart.period_x, 256)
        tr = fl.run_flow(chart, c0, [eq], fl.FlowOptions(t_max=0.3, sample_every=10))
        a, b = sturm_violations(tr)
        increases += a
        unlogged += b
        n_drops += tr.kinds().count("intersection_drop")
    dt = time.perf_counter() - t0
    ok = increases == 0 and unlogged == 0 and n_drops > 0 and dt < 600
    report(7, "Sturm monotonicity", ok,
           f"50 runs: increases={increases}, unlogged drops={unlogged}, logged drops={n_drops}; {dt:.0f}s")
    assert ok


def test_08_shrinking_circle(report):
    t0 = time.perf_counter()
    tr = _circle_run(256, 1.0)
    t = np.array(tr.times)
    r = np.array(tr.lengths) / (2 * math.pi)
    exact = np.sqrt(np.clip(1 - 2 * t, 0, None))
    keep = exact >= 0.2
    r_err = float(np.max(np.abs(r[keep] - exact[keep]) / exact[keep]))
    rates = [(tm, meas) for tm, meas, _ in fl.loop_area_rate_check(tr) if 1 - 2 * tm >= 0.04]
    rate_err = max(abs(meas / (-2 * math.pi) - 1) for _, meas in rates)
    blow = tr.first("blowup")
    t_ext = blow.t if blow else math.nan
    dt = time.perf_counter() - t0
    ok = r_err < 0.01 and rate_err < 0.02 and abs(t_ext - 0.5) < 0.01 and dt < 60
    report(8, "exact shrinking circle", ok,
           f"radius err {r_err:.1e}; dA/dt err {rate_err:.1e}; extinction {t_ext:.5f} vs 0.5; {dt:.1f}s")
    assert ok


def test_09_waist_convergence(report):
    t0 = time.perf_counter()
    tr = _waist_run(128, 20.0, sample_every=50)
    rate = fl.fit_decay_rate(tr.times, tr.deviation, t_min=1.0)
    dt = time.perf_counter() - t0
    ok = tr.stop_reason == "converged" and tr.kappa_sup[-1] < 1e-4 and abs(rate + 1) < 0.05 and dt < 60
    report(9, "stable convergence to the waist", ok,
           f"stop={tr.stop_reason} final kappa={tr.kappa_sup[-1]:.1e} rate={rate:.4f}; {dt:.1f}s")
    assert ok


def test_10_loop_area_law(report):
    chart = mt.fermi_sphere()
    t0 = time.perf_counter()
    c0 = cv.limacon(512, a=2.0, b=1.0, scale=0.4, center=(math.pi, 0.0))
    eps_g = mt.epsilon_g(chart)
    tr = fl.run_flow(chart, c0, [], fl.FlowOptions(t_max=1.5, sample_every=10))
    areas = np.array(tr.loop_area)
    tracked = areas[np.isfinite(areas)]
    start_small = tracked[0] < eps_g
    monotone = bool(np.all(np.diff(tracked) < 0))
    ends = [e for e in tr.events if e.kind in ("blowup", "class_exit")]
    deadline = 2 * eps_g / math.pi
    t_end = ends[0].t if ends else math.inf
    dt = time.perf_counter() - t0
    ok = start_small and monotone and t_end < 1.1 * deadline and dt < 120
    report(10, "loop-area law", ok,
           f"A0={tracked[0]:.4f} < eps(g)={eps_g:.4f}; monotone={monotone}; "
           f"ended ({ends[0].kind if ends else 'none'}) at t={t_end:.4f} < {1.1 * deadline:.3f}; {dt:.1f}s")
    assert ok


def test_11_theorem_window(report):
    t0 = time.perf_counter()
    problems = []
    cases = [(0.6, (3, 2), True), (0.6, (4, 3), True), (0.6, (5, 4), True), (0.6, (6, 5), True),
             (0.6, (5, 3), False), (0.6, (2, 1), False), (0.8, (6, 5), True), (0.8, (3, 2), False)]
    for c, (p, q), expect in cases:
        surface = gd.spheroid(c)
        chart = surface.chart()
        g = gd.find_satellite_geodesic(surface, p, q)
        if (g is not None) != expect:
            problems.append(f"c={c} {p}/{q} found={g is not None}")
            continue
        if g is None:
            continue
        res = gd.verify_geodesic(chart, g.curve)
        cross, ok1 = cv.count_intersections(g.curve, cv.equator(n=512))
        selfs, ok2 = cv.count_self_intersections(g.curve)
        if not (g.closure_gap < 1e-6 and res < 1e-4 and cross == 2 * p and selfs == p * (q - 1)
                and ok1 and ok2):
            problems.append(f"c={c} {p}/{q} gap={g.closure_gap:.1e} res={res:.1e} {cross} {selfs}")
    dt = time.perf_counter() - t0
    ok = not problems and dt < 300
    report(11, "satellite geodesics on spheroids", ok, f"{len(cases)} cases; {problems}; {dt:.1f}s")
    assert ok


def test_12_euler_invariants(report):
    t0 = time.perf_counter()
    bad = []
    for p, q in PQ_SWEEP:
        ev = kn.euler_invariants(_satellite(0, p, q))
        th = ev.delta_theta / (2 * math.pi)
        tot = (ev.delta_theta + ev.delta_phi) / (2 * math.pi)
        if round(th) != p or round(tot) != q or abs(th - round(th)) > 1e-6 or abs(tot - round(tot)) > 1e-6:
            bad.append((p, q, th, tot))
    dt = time.perf_counter() - t0
    ok = not bad and dt < 30
    report(12, "Euler invariants", ok, f"{len(PQ_SWEEP)} satellites; bad={bad[:3]}; {dt:.1f}s")
    assert ok


def test_13_eigenfunction_satellites(report):
    rng = np.random.default_rng(13)
    t0 = time.perf_counter()
    failures = total = 0
    for _ in range(20):
        hp = _random_potential(rng, amplitude=rng.uniform(0.05, 1.0))
        for p, q in ((1, 2), (2, 3), (3, 2)):
            basis = hl.periodic_eigenfunctions(hp, p, q)
            for _ in range(50):
                a, b = rng.normal(size=2)
                total += 1
                if not hl.check_satellite_conditions(basis.element(a, b), q, q * hp.L):
                    failures += 1
    dt = time.perf_counter() - t0
    ok = failures == 0 and dt < 300
    report(13, "eigenfunction satellites", ok, f"{total - failures}/{total} pass; {dt:.1f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
