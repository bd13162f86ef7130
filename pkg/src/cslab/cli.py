"""Command-line experiment driver.

    cslab <command> --config run.cfg --out results/ [--seed N] [--quiet]

Commands: hill, flow, satellite, invariants, find-geodesics.  Config files
hold flat ``key = value`` lines with ``#`` comments.  Exit codes: 0 on
success, 2 for usage, config or input errors, 3 when a flow ends in a
singularity.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import curve as cv
from . import flow as fl
from . import geodesic as gd
from . import hill as hl
from . import knot as kn
from . import metric as mt

log = logging.getLogger("cslab")

EXIT_OK, EXIT_USAGE, EXIT_SINGULAR = 0, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config parsing

def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _pairs(s: str) -> list[tuple[int, int]]:
    out = []
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        p, _, q = item.partition("/")
        out.append((int(p), int(q or 1)))
    if not out:
        raise ValueError("empty p/q list")
    return out


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _words(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


METRIC_KEYS = {"metric": str, "metric.c": float, "metric.omega": float, "metric.a": float,
               "metric.period_x": float, "metric.y_lo": float, "metric.y_hi": float}
CURVE_KEYS = {"curve": str, "curve.path": str, "curve.n": int, "curve.radius": float,
              "curve.center_x": float, "curve.center_y": float, "curve.p": int, "curve.q": int,
              "curve.eps": float, "curve.phase": float, "curve.m": int, "curve.a": float,
              "curve.b": float, "curve.scale": float, "curve.offset": float}
FLOW_KEYS = {"dt_safety": float, "t_max": float, "kappa_blowup": float,
             "convergence_tol": float, "resample_every": int, "sample_every": int,
             "monitors": _words, "graph_handoff": _bool, "blowup_samples": int,
             "stop_on_class_exit": _bool, "snapshot_every": int, "max_steps": int,
             "coarsen": _bool, "min_points": int}
SCHEMAS = {
    "hill": {"potential": str, "Q": float, "L": float, "potential.path": str,
             "fourier_cos": _floats, "fourier_sin": _floats, "modes": int, "amplitude": float,
             "samples": int, "lambda_min": float, "lambda_max": float, "lambda_points": int,
             "pq": _pairs, "cover": int},
    "flow": {**METRIC_KEYS, **CURVE_KEYS, **FLOW_KEYS, "references": _words},
    "satellite": {**METRIC_KEYS, **CURVE_KEYS, "p": int, "q": int, "eps": float,
                  "phase": float, "n_per_period": int},
    "invariants": {**METRIC_KEYS, **CURVE_KEYS, "references": _words},
    "find-geodesics": {"surface": str, "surface.c": float, "pq": _pairs, "n_points": int},
}
REQUIRED = {
    "hill": ("potential",),
    "flow": ("metric", "curve"),
    "satellite": ("p", "q", "eps"),
    "invariants": ("curve",),
    "find-geodesics": ("surface", "pq"),
}


def typed_config(command: str, raw: dict[str, str]) -> dict:
    schema = SCHEMAS[command]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {', '.join(unknown)}")
    missing = [k for k in REQUIRED[command] if k not in raw]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    out = {}
    for k, v in raw.items():
        try:
            out[k] = schema[k](v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# builders

def build_chart(cfg: dict) -> mt.MetricChart:
    name = cfg.get("metric", "fermi_sphere")
    params = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("metric.")}
    lo, hi = params.pop("y_lo", None), params.pop("y_hi", None)
    if lo is not None or hi is not None:
        if lo is None or hi is None:
            raise ConfigError("metric.y_lo and metric.y_hi go together")
        params["y_band"] = (lo, hi)
    try:
        return mt.named_chart(name, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for metric {name}: {exc}") from None


def build_curve(cfg: dict, chart: mt.MetricChart) -> cv.DiscreteCurve:
    kind = cfg["curve"]
    g = lambda k, d: cfg.get(f"curve.{k}", d)
    L = chart.period_x
    if kind == "file":
        path = Path(g("path", ""))
        if not path.is_file():
            raise ConfigError(f"curve file not found: {path}")
        return cv.read_curve(path)
    if kind == "circle":
        return cv.circle((g("center_x", L / 2), g("center_y", 0.0)), g("radius", 0.5),
                         g("n", 256), L)
    if kind == "equator":
        return cv.equator(L, g("n", 512))
    if kind == "parallel":
        return cv.make_satellite(chart, 0, 1, g("offset", 0.05), n_per_period=g("n", 512))
    if kind == "satellite":
        return cv.make_satellite(chart, g("p", 1), g("q", 2), g("eps", 0.1), g("phase", 0.0),
                                 g("n", 256))
    if kind == "limacon":
        return cv.limacon(g("n", 512), g("a", 2.0), g("b", 1.0), g("scale", 0.4),
                          (g("center_x", L / 2), g("center_y", 0.0)), L)
    if kind == "lissajous":
        s = g("scale", 1.0)
        return cv.lissajous(g("m", 1), g("n", 512), (g("center_x", L / 2), g("center_y", 0.0)),
                            (s, s), L)
    raise ConfigError(f"unknown curve generator {kind!r}")


def build_references(cfg: dict, chart: mt.MetricChart) -> list[cv.DiscreteCurve]:
    refs = []
    for item in cfg.get("references", ["equator"]):
        if item == "none":
            continue
        if item == "equator":
            refs.append(cv.equator(chart.period_x, 512))
        else:
            p = Path(item)
            if not p.is_file():
                raise ConfigError(f"reference file not found: {p}")
            refs.append(cv.read_curve(p))
    return refs


def build_potential(cfg: dict, seed: int) -> hl.HillProblem:
    kind = cfg["potential"]
    L = cfg.get("L", 2 * math.pi)
    n = cfg.get("samples", 512)
    q = cfg.get("cover", 1)
    if kind == "constant":
        return hl.HillProblem.constant(cfg.get("Q", 0.0), L, q)
    if kind == "file":
        path = Path(cfg.get("potential.path", ""))
        if not path.is_file():
            raise ConfigError(f"potential file not found: {path}")
        return hl.HillProblem.from_file(path, q)
    if kind in ("fourier", "random"):
        if kind == "fourier":
            a = np.array(cfg.get("fourier_cos", []))
            b = np.array(cfg.get("fourier_sin", []))
            q0 = cfg.get("Q", 0.0)
        else:
            rng = np.random.default_rng(seed)
            modes = cfg.get("modes", 4)
            a, b = rng.normal(size=modes), rng.normal(size=modes)
            q0 = 0.0
        x = np.arange(n) * (L / n)
        Q = np.full(n, q0)
        for k, ak in enumerate(a, 1):
            Q += ak * np.cos(2 * math.pi * k * x / L)
        for k, bk in enumerate(b, 1):
            Q += bk * np.sin(2 * math.pi * k * x / L)
        if kind == "random":
            Q *= cfg.get("amplitude", 1.0) / max(np.abs(Q).max(), 1e-300)
        return hl.HillProblem(Q, L, q)
    raise ConfigError(f"unknown potential {kind!r}")


def build_flow_options(cfg: dict) -> fl.FlowOptions:
    kw = {k: v for k, v in cfg.items() if k in FLOW_KEYS}
    if "monitors" in kw:
        kw["monitors"] = frozenset(kw["monitors"])
    return fl.FlowOptions(**kw)


def build_surface(cfg: dict) -> gd.RevolutionSurface:
    name = cfg["surface"]
    if name == "spheroid":
        return gd.spheroid(cfg.get("surface.c", 0.6))
    if name == "round_sphere":
        return gd.round_sphere()
    raise ConfigError(f"unknown surface {name!r}")


# ---------------------------------------------------------------------------
# commands

def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _num(v) -> str:
    return repr(float(v))


def cmd_hill(cfg: dict, out: Path, seed: int) -> int:
    hp = build_potential(cfg, seed)
    lam = np.linspace(cfg.get("lambda_min", -1.0), cfg.get("lambda_max", 3.0),
                      cfg.get("lambda_points", 81))
    fh, w = _writer(out / "rho_vs_lambda.csv")
    with fh:
        w.writerow(["lambda", "rho"])
        for v in lam:
            w.writerow([_num(v), _num(hl.rho(hp, float(v)))])
    fh, w = _writer(out / "lambda_pq.csv")
    with fh:
        w.writerow(["p", "q", "lambda_minus", "lambda_plus"])
        for p, q in cfg.get("pq", []):
            lo, hi = hl.lambda_interval(hp, p, q)
            w.writerow([p, q, _num(lo), _num(hi)])
    log.info("hill: wrote %d rho samples and %d intervals", len(lam), len(cfg.get("pq", [])))
    return EXIT_OK


def cmd_flow(cfg: dict, out: Path, seed: int) -> int:
    chart = build_chart(cfg)
    c0 = build_curve(cfg, chart)
    refs = build_references(cfg, chart)
    opts = build_flow_options(cfg)
    tr = fl.run_flow(chart, c0, refs, opts)
    tr.write_csv(out / "trace.csv")
    tr.write_events(out / "events.csv")
    if tr.snapshots:
        fl.write_snapshots(tr, out / "snapshots")
    cv.write_curve(out / "final.curve", tr.final_curve, comment=f"t={tr.times[-1]!r}")
    (out / "summary.txt").write_text(kn.format_report(
        stop_reason=tr.stop_reason, t_final=float(tr.times[-1]), steps=tr.steps,
        L0=float(tr.L0), L_final=float(tr.lengths[-1]), kappa_sup=float(tr.kappa_sup[-1]),
        eps_g=float(tr.eps_g), events=len(tr.events)))
    log.info("flow: %s at t=%r after %d steps", tr.stop_reason, tr.times[-1], tr.steps)
    return EXIT_SINGULAR if tr.stop_reason == "blowup" else EXIT_OK


def cmd_satellite(cfg: dict, out: Path, seed: int) -> int:
    chart = build_chart(cfg)
    p, q, eps = cfg["p"], cfg["q"], cfg["eps"]
    if "curve" in cfg:
        base = build_curve(cfg, chart)
        sat = cv.satellite_of(base, p, q, eps, cfg.get("phase", 0.123))
        cv.write_curve(out / "base.curve", base)
    else:
        sat = cv.make_satellite(chart, p, q, eps, cfg.get("phase", 0.0),
                                cfg.get("n_per_period", 256))
        base = cv.equator(chart.period_x, 512)
    cv.write_curve(out / "satellite.curve", sat, comment=f"p={p} q={q} eps={eps!r}")
    cross, ok1 = cv.count_intersections(sat, base)
    selfs, ok2 = cv.count_self_intersections(sat)
    (out / "satellite_report.txt").write_text(kn.format_report(
        p=p, q=q, eps=eps, crossings=cross, self_intersections=selfs,
        transverse=ok1 and ok2))
    log.info("satellite: %d crossings, %d self-intersections", cross, selfs)
    return EXIT_OK


def cmd_invariants(cfg: dict, out: Path, seed: int) -> int:
    chart = build_chart(cfg)
    c = build_curve(cfg, chart)
    refs = build_references(cfg, chart)
    sig = kn.signature_of(c, refs)
    fields = {"k": ",".join(map(str, sig.k)), "l": sig.l, "m": ",".join(map(str, sig.m))}
    pq = kn.infer_pq(sig) if refs else None
    fields["p"] = pq[0] if pq else "none"
    fields["q"] = pq[1] if pq else "none"
    if c.x_winding != 0:
        ev = kn.euler_invariants(c)
        fields.update(delta_theta=ev.delta_theta, delta_phi=ev.delta_phi,
                      delta_theta_turns=ev.theta_turns, delta_phi_turns=ev.phi_turns,
                      orientation=ev.orientation)
    (out / "invariants.txt").write_text(kn.format_report(**fields))
    log.info("invariants: %s", fields)
    return EXIT_OK


def cmd_find_geodesics(cfg: dict, out: Path, seed: int) -> int:
    surface = build_surface(cfg)
    chart = surface.chart()
    lines, status_rows = [], []
    for p, q in cfg["pq"]:
        status = gd.satellite_window_status(surface, p, q)
        g = gd.find_satellite_geodesic(surface, p, q, cfg.get("n_points", 4096))
        if g is not None:
            lines.append(gd.geodesic_report(g, chart))
            cv.write_curve(out / f"geodesic_{p}_{q}.curve", g.curve,
                           comment=f"p={p} q={q} nu={g.nu!r}")
        status_rows.append((p, q, status))
        log.info("find-geodesics: %d/%d %s", p, q, status)
    (out / "geodesics.txt").write_text("".join(ln + "\n" for ln in lines))
    fh, w = _writer(out / "geodesic_status.csv")
    with fh:
        w.writerow(["p", "q", "status"])
        w.writerows(status_rows)
    return EXIT_OK


COMMANDS = {"hill": cmd_hill, "flow": cmd_flow, "satellite": cmd_satellite,
            "invariants": cmd_invariants, "find-geodesics": cmd_find_geodesics}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cslab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", type=Path, default=Path("."))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    if not 0 <= args.seed < 2 ** 64:
        print("error: seed must fit in an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        if not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        cfg = typed_config(args.command, parse_config(args.config.read_text()))
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.seed)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
