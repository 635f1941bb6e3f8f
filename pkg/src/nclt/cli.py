"""Batch front end: JSON in, JSON/CSV out, deterministic formatting.

One command runs one computation.  Floating-point output carries 17
significant digits and keys are sorted, so identical inputs (and seeds)
produce identical bytes.  Exit codes: 0 success, 2 usage error, 3
numerical-domain error (reported as a one-line JSON error object).
The environment variable ``NCLT_THREADS`` caps worker parallelism; all
current computations run on a single thread, which trivially honors any
cap.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import capacity as cap
from . import hemigroups as hg
from . import loewner as lw
from .convolutions import ConvKind, boolean_convolve, free_convolve, monotone_convolve
from .errors import NcltError
from .measures import classical_convolve, measure_from_json, measure_to_json
from .transforms import (
    PickFunction,
    cauchy_eval,
    pick_eval,
    stieltjes_invert,
    voiculescu_eval,
)

__all__ = ["main"]


def _fmt(value) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, complex):
        return f"[{_fmt(value.real)},{_fmt(value.imag)}]"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(k)}:{_fmt(value[k])}" for k in sorted(value))
        return "{" + inner + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)}")


def _emit(obj, path: str | None):
    text = _fmt(obj) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _parse_zlist(text: str) -> list[complex]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "," in part:
            re_s, im_s = part.split(",")
            out.append(complex(float(re_s), float(im_s)))
        else:
            out.append(complex(float(part), 0.0))
    return out


def _parse_window(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def _hull_from_json(data: dict):
    kind = data["type"]
    if kind == "half_disk":
        return cap.HalfDisk(float(data["radius"]))
    if kind == "vertical_slit":
        return cap.VerticalSlit(float(data.get("foot", 0.0)), float(data["length"]))
    if kind == "sampled":
        pts = [complex(p[0], p[1]) for p in data["points"]]
        return cap.Sampled(tuple(pts), inflate=float(data.get("inflate", 1e-3)))
    raise ValueError(f"unknown hull type {kind!r}")


def _points_from_json(data) -> list[complex]:
    if isinstance(data, dict):
        data = data["points"]
    return [complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p, 0.0) for p in data]


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nclt", description=__doc__)
    ap.add_argument("--out", help="write the JSON result to this file instead of stdout")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convolve", help="convolve two measures")
    p.add_argument("--kind", required=True, choices=[k.value for k in ConvKind])
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--window")
    p.add_argument("--n-grid", type=int, default=4096)

    p = sub.add_parser("transform", help="evaluate G/F/K/phi of a measure, or its cf")
    p.add_argument("--kind", required=True, choices=["G", "F", "K", "phi", "cf"])
    p.add_argument("--measure", required=True)
    p.add_argument("--z", required=True, help="semicolon list re,im;re,im;...")

    p = sub.add_parser("hemigroup", help="increment law of a hemigroup")
    p.add_argument("--kind", required=True, choices=[k.value for k in ConvKind])
    p.add_argument("--family", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--window")
    p.add_argument("--n-grid", type=int, default=2048)

    p = sub.add_parser("loewner", help="Loewner chain operations")
    p.add_argument("action", choices=["flow", "analyze", "residual", "extend"])
    p.add_argument("--spec", required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--z")
    p.add_argument("--window")
    p.add_argument("--n-grid", type=int, default=2048)
    p.add_argument("--trace", help="write a u,Re,Im CSV of the solution path here")

    p = sub.add_parser("capacity", help="capacity functionals")
    p.add_argument("action", choices=["exact", "mc", "tfd", "lln"])
    p.add_argument("--hull")
    p.add_argument("--points")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--n-walks", type=int, default=100_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--strip-b", type=float)
    p.add_argument("--raster-dx", type=float, default=0.01)
    p.add_argument("--csv", help="write a k,d_k CSV table here (tfd)")
    p.add_argument("--pgm", help="write the raster mask as PGM here (lln)")

    p = sub.add_parser("invert", help="Stieltjes inversion of a measure-backed transform")
    p.add_argument("--g", required=True, help="measure JSON whose Cauchy transform to invert")
    p.add_argument("--window", required=True)
    p.add_argument("--n-grid", type=int, default=2048)

    return ap


def _run(args) -> dict:
    if args.command == "convolve":
        a = measure_from_json(_load_json(args.a))
        b = measure_from_json(_load_json(args.b))
        kind = ConvKind(args.kind)
        if kind is ConvKind.CLASSICAL:
            out = classical_convolve(a, b)
        elif kind is ConvKind.BOOLEAN:
            out = boolean_convolve(a, b)
        elif kind is ConvKind.MONOTONE:
            out = monotone_convolve(a, b)
        else:
            window = _parse_window(args.window) if args.window else None
            _, out = free_convolve(a, b, window=window, n_grid=args.n_grid)
        return measure_to_json(out)

    if args.command == "transform":
        m = measure_from_json(_load_json(args.measure))
        zs = _parse_zlist(args.z)
        if args.kind == "G":
            vals = [cauchy_eval(m, z) for z in zs]
        elif args.kind in ("F", "K"):
            pf = PickFunction.from_measure_f(m)
            kind = "F_of" if args.kind == "F" else "K_of"
            vals = [pick_eval(pf, kind, z) for z in zs]
        elif args.kind == "phi":
            vals = [voiculescu_eval(m, z) for z in zs]
        else:  # cf of the measure itself
            xs, ws = m.atom_arrays()
            vals = []
            for z in zs:
                xi = z.real
                v = complex(np.sum(ws * np.exp(1j * xi * xs))) if len(xs) else 0.0
                if m.density is not None:
                    g = m.density.grid
                    v += complex(np.trapz(np.exp(1j * xi * g) * m.density.values, dx=m.density.dx))
                vals.append(v)
        return {"values": [[v.real, v.imag] for v in vals]}

    if args.command == "hemigroup":
        fam = hg.family_from_json(_load_json(args.family))
        handle = hg.CHHandle(fam, ConvKind(args.kind))
        window = _parse_window(args.window) if args.window else None
        out = hg.ch_measure(handle, args.s, args.t, window=window, n_grid=args.n_grid)
        return measure_to_json(out)

    if args.command == "loewner":
        chain = lw.LoewnerChain(lw.spec_from_json(_load_json(args.spec)))
        if args.action == "flow":
            z = _parse_zlist(args.z)[0]
            w = lw.reverse_flow(chain, args.s, args.t, z)
            if args.trace:
                with open(args.trace, "w") as fh:
                    fh.write(lw.trace_csv(chain, args.s, args.t, z))
            return {"value": [w.real, w.imag]}
        if args.action == "analyze":
            window = _parse_window(args.window) if args.window else None
            m, r, measure = lw.chain_analysis(chain, args.t, window=window, n_grid=args.n_grid)
            return {"m": m, "r": r, "measure": measure_to_json(measure)}
        if args.action == "residual":
            z = _parse_zlist(args.z)[0]
            return {"residual": lw.lie_residual(chain, args.s, args.t, z)}
        z = _parse_zlist(args.z)[0]
        w = lw.picard_extend(chain, args.s, args.t, z)
        return {"value": [w.real, w.imag]}

    if args.command == "capacity":
        if args.action == "exact":
            hull = _hull_from_json(_load_json(args.hull))
            return {"hcap": cap.hcap_exact(hull)}
        if args.action == "mc":
            if args.seed is None:
                raise SystemExit("--seed is mandatory for Monte Carlo commands")
            hull = _hull_from_json(_load_json(args.hull))
            est, err = cap.hcap_mc(
                hull, step=args.step, n_walks=args.n_walks, b=args.strip_b, seed=args.seed
            )
            return {"estimate": est, "stderr": err}
        if args.action == "tfd":
            pts = _points_from_json(_load_json(args.points))
            d_n, d_inf = cap.transfinite_diameter(pts, args.n)
            if args.csv:
                with open(args.csv, "w") as fh:
                    fh.write(cap.tfd_csv(pts, args.n))
            return {"d_n": d_n, "d_inf": d_inf}
        hull = _hull_from_json(_load_json(args.hull))
        area, lower_ok, upper_ok = cap.lln_bounds_check(hull, raster_dx=args.raster_dx)
        if args.pgm:
            with open(args.pgm, "w") as fh:
                fh.write(cap.raster_pgm(hull, raster_dx=args.raster_dx))
        return {"area": area, "lower_ok": lower_ok, "upper_ok": upper_ok}

    if args.command == "invert":
        m = measure_from_json(_load_json(args.g))
        window = _parse_window(args.window)

        def g(z):
            return cauchy_eval(m, z)

        out = stieltjes_invert(g, window, n_grid=args.n_grid)
        return measure_to_json(out)

    raise SystemExit(2)  # pragma: no cover


def main(argv=None) -> int:
    os.environ.setdefault("NCLT_THREADS", "1")
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        result = _run(args)
    except NcltError as exc:
        _emit({"error": {"type": type(exc).__name__, "message": str(exc)}}, args.out)
        return 3
    _emit(result, args.out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
