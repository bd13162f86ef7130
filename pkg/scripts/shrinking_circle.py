"""Flat shrinking circle: compare radius, area rate and extinction time with r(t) = sqrt(r0^2 - 2t)."""
import argparse
import math

import numpy as np

from cslab import curve as cv
from cslab import flow as fl
from cslab import metric as mt


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--radius", type=float, default=1.0)
    args = ap.parse_args(argv)

    r0 = args.radius
    print("n,extinction,exact,radius_err,area_rate_err,energy_residual")
    for n in args.n:
        c0 = cv.circle((math.pi, 0.0), r0, n=n)
        opts = fl.FlowOptions(t_max=r0 * r0, sample_every=50,
                              monitors=frozenset({"curvature", "loops"}))
        tr = fl.run_flow(mt.flat(), c0, (), opts)
        t = np.array(tr.times)
        exact = np.sqrt(np.clip(r0 * r0 - 2 * t, 0, None))
        keep = exact >= 0.2 * r0
        r = np.array(tr.lengths) / (2 * math.pi)
        r_err = float(np.max(np.abs(r[keep] - exact[keep]) / exact[keep]))
        rates = [m for tm, m, _ in fl.loop_area_rate_check(tr) if r0 * r0 - 2 * tm >= 0.04 * r0 * r0]
        a_err = max(abs(m / (-2 * math.pi) - 1) for m in rates) if rates else math.nan
        blow = tr.first("blowup")
        t_end = blow.t if blow else math.nan
        res = fl.energy_identity_residual(tr)
        print(f"{n},{t_end!r},{r0 * r0 / 2!r},{r_err:.3e},{a_err:.3e},{res:.3e}")


if __name__ == "__main__":
    main()
