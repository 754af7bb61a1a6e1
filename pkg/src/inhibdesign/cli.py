"""
Command-line entry point.

    inhibdesign design      generate a design on a region or candidate file
    inhibdesign fit         ML fit of the Gaussian model to x,y,value data
    inhibdesign experiment  run a Monte Carlo experiment from a TOML spec
    inhibdesign candidates  write a synthetic clustered candidate file

Coordinates must be planar (projected). Inputs whose coordinates all fall in
lon/lat ranges are refused unless ``--force-planar`` is given.

Exit codes: 0 success, 2 validation error, 3 feasibility error,
4 numerical error. Errors are also reported as one JSON object on stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import design as designs
from . import io
from .errors import InhibDesignError, ValidationError
from .estimation import fit_gaussian_ml
from .gaussian_field import PredictionGrid, apv, krige
from .geometry import Region, min_pairwise_distance

logger = logging.getLogger("inhibdesign")


def _region(text):
    if text == "unit":
        return Region.unit()
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad region {text!r}") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("region is 'unit' or 'xmin,ymin,xmax,ymax'")
    return Region(*vals)


def _seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**31))
        print(f"seed: {args.seed}")
    return args.seed


def _guard_planar(points, args, what):
    if io.looks_geographic(points) and not args.force_planar:
        raise ValidationError(
            f"{what} coordinates look like degrees of longitude/latitude; project them "
            f"to a planar system (e.g. UTM) or pass --force-planar"
        )


def cmd_design(args):
    seed = _seed(args)
    fam = args.family
    cands = None
    if args.candidates:
        cands = io.read_candidates(args.candidates)
        _guard_planar(cands.points, args, "candidate")
        print(f"candidates: {len(cands)}")
    region = args.region or (cands.region if cands is not None else Region.unit())
    need = {"si": ["delta"], "icp": ["k", "delta0"], "lattice_cp": ["k"]}.get(fam, [])
    missing = [f"--{m.replace('_', '-')}" for m in need if getattr(args, m) is None]
    if missing:
        raise ValidationError(f"family {fam} needs {', '.join(missing)}")
    if cands is not None and fam not in ("si", "icp"):
        raise ValidationError("candidate files are supported for si and icp only")

    if fam == "si" and cands is not None:
        d = designs.generate_si_finite(args.n, args.delta, cands, seed, args.max_iter)
    elif fam == "si":
        d = designs.generate_si(args.n, args.delta, region, seed, args.max_iter)
    elif fam == "icp" and cands is not None:
        d = designs.generate_icp_finite(args.n, args.k, args.delta0, args.zeta, cands,
                                        seed, args.max_iter)
    elif fam == "icp":
        d = designs.generate_icp(args.n, args.k, args.delta0, args.zeta, region, seed,
                                 args.max_iter)
    elif fam == "crd":
        d = designs.generate_crd(args.n, region, seed)
    elif fam == "lattice":
        d = designs.generate_lattice(args.n, region, seed, not args.fixed_origin)
    else:
        d = designs.generate_lattice_cp(args.n, args.k, args.spacing, args.zeta, region, seed)

    problems = designs.verify_design(d)
    if problems:
        raise InhibDesignError("generated design failed verification: " + "; ".join(problems))

    summary = {"family": d.family, "n": len(d), "close_pairs": d.n_close_pairs, "seed": seed}
    for key in ("packing_density", "delta", "zeta", "spacing"):
        if key in d.params:
            summary[key] = d.params[key]
    if len(d) > 1:
        summary["min_distance"] = min_pairwise_distance(d.points)
        if d.n_close_pairs:
            summary["min_distance_inhibitory"] = min_pairwise_distance(d.primary_points)
    if args.params_file:
        params, intercept = io.read_params_file(args.params_file)
        grid = PredictionGrid(region, args.grid_resolution, args.grid_resolution)
        surface = krige(d, np.zeros(len(d)), grid, params)
        summary["apv_known_params"] = apv(surface, grid)
        summary["covariance_params"] = dict(params.to_dict(), intercept=intercept)

    out = Path(args.out)
    extra = {k: summary[k] for k in ("covariance_params", "apv_known_params") if k in summary}
    io.write_design(d, out, extra=extra)
    if args.plot:
        from .plotting import plot_design

        plot_design(d, args.plot, cands, region)
    for k, v in summary.items():
        print(f"{k}: {v}")
    print(f"wrote {out} and {out.with_suffix('.json')}")
    return 0


def cmd_fit(args):
    pts, y, _ = io.read_data(args.data)
    _guard_planar(pts, args, "data")
    fit = fit_gaussian_ml(pts, y, args.kappa, estimate_mean=not args.zero_mean)
    if not fit.converged:
        logger.warning("fit did not converge; estimates may be unreliable")
    text = fit.to_json()
    if args.out:
        io.atomic_write(args.out, text + "\n")
    print(text)
    return 0


def cmd_experiment(args):
    spec = io.load_experiment_spec(args.spec)
    out_dir = Path(args.out_dir)
    stem = spec.name
    ckpt_path = out_dir / f"{stem}_raw.partial.csv"
    completed = io.read_raw(ckpt_path, spec) if args.resume else []
    if not args.resume and ckpt_path.exists():
        ckpt_path.unlink()
    if completed:
        print(f"resuming: {len(completed)} replicate(s) already done")
    from .harness import run_experiment

    ckpt = io.RawCheckpoint(ckpt_path, spec)
    try:
        report = run_experiment(spec, workers=args.workers, completed=completed, on_row=ckpt)
    finally:
        ckpt.close()
    cells_path, raw_path = io.write_report(report, out_dir, stem)
    ckpt_path.unlink()
    print(f"spec_hash: {spec.spec_hash}  base_seed: {spec.base_seed}")
    for c in report.cells:
        key = f"delta={c['delta']}" if spec.family == "si" else f"k={c.get('k')}"
        print(f"{key} phi={c['phi']} tau2={c['tau2']}: mean APV {c['mean_apv']:.5f} "
              f"(se {c['se_apv']:.5f}, ok {c['n_ok']}/{c['replicates']})")
    print(f"wrote {cells_path} and {raw_path}")
    if not args.no_figures:
        from .plotting import plot_report

        fig_path = out_dir / f"{stem}_apv.png"
        plot_report(report, fig_path)
        print(f"wrote {fig_path}")
    return 0


def cmd_candidates(args):
    seed = _seed(args)
    cands = io.synthetic_candidates(args.n, seed)
    io.write_candidates(cands, args.out)
    print(f"wrote {len(cands)} synthetic candidate locations to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="inhibdesign", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="generate a sampling design")
    d.add_argument("--family", required=True,
                   choices=["si", "icp", "crd", "lattice", "lattice_cp"])
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--k", type=int)
    d.add_argument("--delta", type=float, help="inhibition distance (si)")
    d.add_argument("--delta0", type=float, help="base inhibition distance (icp)")
    d.add_argument("--zeta", type=float, help="close-pair radius; default delta_k/2")
    d.add_argument("--spacing", type=float, help="lattice spacing (lattice_cp)")
    d.add_argument("--fixed-origin", action="store_true", help="do not jitter the lattice")
    d.add_argument("--region", type=_region, help="'unit' or xmin,ymin,xmax,ymax")
    d.add_argument("--candidates", help="CSV (id,x,y) or GeoJSON points")
    d.add_argument("--params-file", help="JSON with sigma2, phi, tau2[, kappa, intercept]")
    d.add_argument("--grid-resolution", type=int, default=64)
    d.add_argument("--seed", type=int)
    d.add_argument("--max-iter", type=int, default=designs.DEFAULT_MAX_ITER)
    d.add_argument("--out", default="design.csv")
    d.add_argument("--plot", help="write a PNG of the design here")
    d.add_argument("--force-planar", action="store_true")
    d.set_defaults(func=cmd_design)

    f = sub.add_parser("fit", help="ML fit of the Gaussian model")
    f.add_argument("--data", required=True, help="CSV with id,x,y,value")
    f.add_argument("--kappa", type=float, default=1.5)
    f.add_argument("--zero-mean", action="store_true", help="fix the mean at zero")
    f.add_argument("--out", help="write FitResult JSON here")
    f.add_argument("--force-planar", action="store_true")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    e.add_argument("spec", help="TOML experiment spec")
    e.add_argument("--out-dir", default="results")
    e.add_argument("--workers", type=int,
                   help="worker processes (default: $INHIBDESIGN_WORKERS or 1)")
    e.add_argument("--resume", action="store_true",
                   help="continue from a partial run with the same spec")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("candidates", help="write synthetic clustered candidates")
    c.add_argument("--n", type=int, default=857)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", default="candidates.csv")
    c.set_defaults(func=cmd_candidates)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InhibDesignError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if getattr(exc, "packing_density", None) is not None:
            err["packing_density"] = exc.packing_density
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": 2}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
