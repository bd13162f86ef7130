"""Sweep (p, q) over a grid of spheroids and tabulate which satellite geodesics exist."""
import argparse
import csv
import math
import sys

from cslab import curve as cv
from cslab import geodesic as gd


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c", type=float, nargs="+", default=[0.6, 0.8])
    ap.add_argument("--max-pq", type=int, default=6)
    ap.add_argument("--n-points", type=int, default=2048)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["c", "p", "q", "ratio", "status", "nu", "residual", "crossings", "self_int"])
    equator = cv.equator()
    for c in args.c:
        s = gd.spheroid(c)
        chart = s.chart()
        for q in range(1, args.max_pq + 1):
            for p in range(1, args.max_pq + 1):
                if math.gcd(p, q) != 1:
                    continue
                status = gd.satellite_window_status(s, p, q)
                row = [c, p, q, p / q, status, "", "", "", ""]
                if status == "found":
                    g = gd.find_satellite_geodesic(s, p, q, args.n_points)
                    row[5:] = [g.nu, gd.verify_geodesic(chart, g.curve),
                               cv.count_intersections(g.curve, equator)[0],
                               cv.count_self_intersections(g.curve)[0]]
                w.writerow(row)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
