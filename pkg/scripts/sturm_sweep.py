"""Flow randomly perturbed satellites and check that intersection counts never increase."""
import argparse
import math

import numpy as np

from cslab import curve as cv
from cslab import flow as fl
from cslab import metric as mt


def perturbed(rng, chart, p, q, n_per_period=128, noise=0.06):
    L = chart.period_x
    n = n_per_period * q
    x = (np.arange(n) + 0.5) * (q * L / n)
    u = 0.2 * np.sin(2 * math.pi * p * x / (q * L) + rng.uniform(0, 2 * math.pi))
    for k in range(p + 1, 3 * p + 3):
        u += rng.normal(0, noise) * np.sin(2 * math.pi * k * x / (q * L) + rng.uniform(0, 2 * math.pi))
    return cv.DiscreteCurve(np.stack([x, u], axis=1), L, q)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--t-max", type=float, default=1.0)
    args = ap.parse_args(argv)

    chart = mt.fermi_sphere()
    rng = np.random.default_rng(args.seed)
    eq = cv.equator()
    print("run,p,q,drops,increases,stop")
    for run in range(args.runs):
        p, q = 1, 1
        while math.gcd(p, q) != 1 or p == q == 1:
            p, q = rng.integers(1, 4, size=2)
        c0 = perturbed(rng, chart, int(p), int(q))
        tr = fl.run_flow(chart, c0, [eq], fl.FlowOptions(t_max=args.t_max))
        det = [(s, *c) for s, c in zip(tr.self_int, tr.crossings) if s is not None and c is not None]
        inc = sum(b > a for r0, r1 in zip(det, det[1:]) for a, b in zip(r0, r1))
        drops = len([e for e in tr.events if e.kind == "intersection_drop"])
        print(f"{run},{p},{q},{drops},{inc},{tr.stop_reason}", flush=True)


if __name__ == "__main__":
    main()
