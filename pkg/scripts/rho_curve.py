"""Rotation number rho(lambda, L) of a Hill problem with a few Fourier modes, plus its plateaus."""
import argparse
import math

import numpy as np

from cslab import hill as hl


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mean", type=float, default=1.0)
    ap.add_argument("--cos", type=float, nargs="*", default=[0.8, 0.3])
    ap.add_argument("--lambda-range", type=float, nargs=2, default=[-2.0, 4.0])
    ap.add_argument("--points", type=int, default=121)
    ap.add_argument("--max-q", type=int, default=3)
    args = ap.parse_args(argv)

    L = 2 * math.pi

    def Q(x):
        return args.mean + sum(a * np.cos((k + 1) * x) for k, a in enumerate(args.cos))

    hp = hl.HillProblem.from_function(Q, L)
    print("# lambda,rho")
    for lam in np.linspace(*args.lambda_range, args.points).tolist():
        print(f"{lam!r},{hl.rho(hp, lam)!r}")
    lo, hi = (hl.rho(hp, v) for v in args.lambda_range)
    print("# p,q,lambda_minus,lambda_plus,width")
    for q in range(1, args.max_q + 1):
        for p in range(math.ceil(lo * q), math.floor(hi * q) + 1):
            if p < 1 or math.gcd(p, q) != 1:
                continue
            try:
                a, b = hl.lambda_interval(hp, p, q)
            except ValueError:
                continue
            print(f"{p},{q},{a!r},{b!r},{b - a:.3e}")


if __name__ == "__main__":
    main()
