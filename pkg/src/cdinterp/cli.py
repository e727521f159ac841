"""Command-line entry point: benchmarks, snapshot interpolation and registration.

Exit status is 0 on success, 2 for configuration errors (bad options or
files) and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import studies
from .errors import CdiError, ConfigError, InvalidField, NumericalError
from .fields import StructuredField, load_snapshot, save_snapshot
from .interpolation import CdiOperator, project_s
from .registration import DELTA_MIN, DEFAULT_DEGREE, rectangle_patch, save_markers

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _alpha_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError("alpha values must lie in [0, 1]")
    return values


def _grid_shape(text: str) -> tuple[int, ...]:
    try:
        shape = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or N1xN2, got {text!r}") from None
    if not 1 <= len(shape) <= 2 or min(shape) < 3:
        raise argparse.ArgumentTypeError("grid needs one or two sizes, each at least 3")
    return shape


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _add_detection(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detection")
    g.add_argument(
        "--testing",
        choices=("gradient", "jump", "ducros"),
        default="gradient",
        help="testing function: |grad U| > threshold, forward jump > threshold, or top fraction "
        "of the shock sensor on (rho, u1, u2, p) fields (default: gradient)",
    )
    g.add_argument("--threshold", type=float, default=1.0, help="threshold for gradient/jump testing (default: 1)")
    g.add_argument(
        "--top-fraction", type=float, default=0.005, help="fraction kept by the ducros testing (default: 0.005)"
    )
    g.add_argument("--component", type=int, default=0, help="field component used for detection (default: 0)")
    g.add_argument("--axis", type=int, default=0, help="axis of the forward jump (default: 0)")


def _detect_options(args) -> studies.DetectOptions:
    return studies.DetectOptions(args.testing, args.threshold, args.top_fraction, args.component, args.axis)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdinterp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run a benchmark study and write a CSV table")
    bench.add_argument("problem", choices=("heat", "zkb", "simplewave", "sod", "wedge"))
    bench.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    bench.add_argument("--dim", type=int, choices=(1, 2), default=1, help="space dimension for heat/zkb (default: 1)")
    bench.add_argument("--t0", type=_positive, help="first snapshot time")
    bench.add_argument("--t1", type=_positive, help="second snapshot time")
    bench.add_argument("--count", type=int, default=5, help="interior times for heat/zkb/sod (default: 5)")
    bench.add_argument("--m", type=int, default=2, help="porous-medium exponent for zkb (default: 2)")
    bench.add_argument("--grid", type=_grid_shape, help="nodes per axis, N or N1xN2 (wedge default: 151x101)")
    bench.add_argument(
        "--alpha", type=_alpha_list, default=list(studies.DEFAULT_ALPHAS), help="comma-separated alpha values"
    )
    bench.add_argument("--mode", choices=("extension", "registration"), default="extension", help="wedge strategy")
    bench.add_argument(
        "--snapshots", action="store_true", help="wedge: also write the alpha=0 and alpha=1 snapshots"
    )

    ip = sub.add_parser("interp", help="interpolate two snapshot files")
    ip.add_argument("snap0", type=Path)
    ip.add_argument("snap1", type=Path)
    ip.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    ip.add_argument("--alpha", type=_alpha_list, default=[0.5], help="parameters; s = alpha unless --project-s")
    ip.add_argument("--project-s", action="store_true", help="set s by L2 projection of --targets")
    ip.add_argument("--targets", type=Path, nargs="+", help="target snapshots, one per alpha, for --project-s")
    _add_detection(ip)

    rg = sub.add_parser("register", help="boundary-aware interpolation of two 2D snapshot files")
    rg.add_argument("snap0", type=Path)
    rg.add_argument("snap1", type=Path)
    rg.add_argument(
        "--patch",
        required=True,
        help="patch: 'x1lo,x1hi,x2lo,x2hi' for a rectangle or 'wedge:DEG' for the flow region above a wedge",
    )
    rg.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    rg.add_argument("--alpha", type=_alpha_list, default=[0.0, 0.25, 0.5, 0.75, 1.0], help="interpolation parameters")
    rg.add_argument("--degree", type=int, default=DEFAULT_DEGREE, help=f"polynomial degree J (default: {DEFAULT_DEGREE})")
    rg.add_argument(
        "--lambda", dest="lam", type=float, default=None, help="H2 penalty weight (default: 1e-5 * markers * diam^2)"
    )
    rg.add_argument("--delta-min", type=float, default=DELTA_MIN, help=f"Jacobian lower bound (default: {DELTA_MIN})")
    rg.add_argument("--cluster-axis", type=int, choices=(0, 1), help="split structures by the sign of this coordinate")
    _add_detection(rg)

    fg = sub.add_parser("fit-gaussian", help="print the Gaussian model of a snapshot as JSON")
    fg.add_argument("snap", type=Path)
    fg.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    _add_detection(fg)
    return parser


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _bench(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    times = {k: v for k, v in (("t0", args.t0), ("t1", args.t1)) if v is not None}
    nodes = args.grid[0] if args.grid else None
    if args.problem == "heat":
        table = studies.bench_heat(args.dim, count=args.count, nodes=nodes, **times)
    elif args.problem == "zkb":
        table = studies.bench_zkb(args.dim, args.m, count=args.count, nodes=nodes, **times)
    elif args.problem == "sod":
        table = studies.bench_sod(count=args.count, **({"nodes": nodes} if nodes else {}), **times)
    elif args.problem == "simplewave":
        table = studies.bench_simplewave(args.alpha, studies.SimpleWaveSetup(**times))
    else:
        setup = studies.WedgeSetup(shape=args.grid) if args.grid else studies.WedgeSetup()
        if len(setup.shape) != 2:
            raise InvalidField("the wedge grid needs two sizes, e.g. 151x101")
        table = studies.bench_wedge(args.mode, args.alpha, setup)
        if args.snapshots:
            for a in (0.0, 1.0):
                f = StructuredField.from_function(studies.wedge_snapshot(setup, a, args.mode), setup.grid)
                save_snapshot(f, args.out / f"wedge_{args.mode}_alpha{a:g}.snap")
    stem = f"bench_{args.problem}" + (f"_{args.mode}" if args.problem == "wedge" else "")
    studies.write_csv(table, args.out / f"{stem}.csv")
    _write_json(args.out / f"{stem}.json", {"schema": table.schema, "meta": table.meta})
    print(args.out / f"{stem}.csv")


def _interp(args) -> None:
    f0, f1 = load_snapshot(args.snap0), load_snapshot(args.snap1)
    opts = _detect_options(args)
    s_values = list(args.alpha)
    projected = []
    if args.project_s:
        if not args.targets or len(args.targets) != len(args.alpha):
            raise InvalidField("--project-s needs one --targets file per alpha value")
        g0, _ = studies.fit_gaussian(f0, opts)
        g1, _ = studies.fit_gaussian(f1, opts)
        op = CdiOperator.from_models(f0, f1, g0, g1)
        s_values = []
        for path in args.targets:
            s, err = project_s(op, load_snapshot(path), f0.grid)
            s_values.append(s)
            projected.append({"target": str(path), "s": s, "rel_err": err})
    snaps, sidecar = studies.interp_snapshots(f0, f1, s_values, opts)
    args.out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, (a, f) in enumerate(zip(args.alpha, snaps)):
        path = args.out / f"interp_{k:03d}.snap"
        save_snapshot(f, path)
        files.append({"alpha": a, "s": s_values[k], "file": path.name})
    sidecar.update(outputs=files, projection=projected, testing=opts.method)
    _write_json(args.out / "interp.json", sidecar)


def _parse_patch(text: str):
    if text.startswith("wedge:"):
        deg = float(text.split(":", 1)[1])
        if not 0.0 < deg < 90.0:
            raise InvalidField(f"wedge angle must lie in (0, 90) degrees, got {deg}")
        return studies.wedge_patch(math.radians(deg))
    try:
        a, b, c, d = (float(v) for v in text.split(","))
    except ValueError:
        raise InvalidField(f"cannot parse patch {text!r}") from None
    return rectangle_patch(((a, b), (c, d)))


def _register(args) -> None:
    f0, f1 = load_snapshot(args.snap0), load_snapshot(args.snap1)
    if f0.dim != 2:
        raise InvalidField("registration needs 2D snapshots")
    patch = _parse_patch(args.patch)
    res = studies.register_snapshots(
        f0,
        f1,
        patch,
        args.alpha,
        _detect_options(args),
        degree=args.degree,
        lam=args.lam,
        delta_min=args.delta_min,
        cluster_axis=args.cluster_axis,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    save_markers(res.markers01, args.out / "markers01.txt")
    save_markers(res.markers10, args.out / "markers10.txt")
    files = []
    for k, (a, f) in enumerate(zip(args.alpha, res.snapshots)):
        path = args.out / f"ba_{k:03d}.snap"
        save_snapshot(f, path)
        files.append({"alpha": a, "s": a, "file": path.name})
    sidecar = res.sidecar()
    sidecar["outputs"] = files
    _write_json(args.out / "register.json", sidecar)
    for r, name in ((res.r01, "0->1"), (res.r10, "1->0")):
        rep = r.report
        if rep.warning:
            print(f"warning: map {name}: {rep.warning} (min det {rep.min_det:.4g})", file=sys.stderr)
        print(f"map {name}: marker rms {rep.pre_rms:.6g} -> {rep.post_rms:.6g}, min det {rep.min_det:.6g}")


def _fit_gaussian(args) -> None:
    f = load_snapshot(args.snap)
    g, cloud = studies.fit_gaussian(f, _detect_options(args))
    data = {"gaussian": g.to_dict(), "selected": len(cloud), "testing": args.testing}
    if args.out:
        _write_json(args.out, data)
    else:
        print(json.dumps(data, indent=2, sort_keys=True))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    handlers = {"bench": _bench, "interp": _interp, "register": _register, "fit-gaussian": _fit_gaussian}
    try:
        handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CdiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
