"""Command-line interface.

Exit codes: 0 success, 1 computational error, 2 hypothesis refusal.
Set ``BESOVTRACE_THREADS`` to cap the numba thread pool.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .errors import HypothesisError
from .reports import dumps, envelope, schema_document, write_csv


# ---------------------------------------------------------------- file helpers


def read_function(path, n: int | None = None) -> np.ndarray:
    """Read a ``point_id,value`` CSV (header optional) into a dense vector."""
    ids, vals = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split(",")[:2]
            try:
                ids.append(int(a))
                vals.append(float(b))
            except ValueError:
                continue  # header
    ids = np.asarray(ids, dtype=np.int64)
    size = n if n is not None else (ids.max() + 1 if ids.size else 0)
    if ids.size != size or np.any(np.sort(ids) != np.arange(size)):
        raise ValueError(f"function file must list every point id 0..{size - 1} once")
    out = np.empty(size)
    out[ids] = vals
    return out


def function_csv(values) -> str:
    return write_csv([(i, float(v)) for i, v in enumerate(values)], ["point_id", "value"])


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_space(args):
    from .space import load_space

    if not args.space:
        raise ValueError("--space FILE is required")
    return load_space(args.space)


def _load_subset(args, X):
    import json

    from .space import subset_from_json

    if not args.subset:
        raise ValueError("--subset FILE is required")
    with open(args.subset) as fh:
        return subset_from_json(X, json.load(fh))


def _config(args):
    from .calculus import CalculusConfig

    return CalculusConfig(t_min=args.tmin, t_max=args.tmax, t_nodes=args.tnodes)


def _levels(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


# ---------------------------------------------------------------- commands


def cmd_space(args):
    from . import generators as g
    from .space import estimate_regularity, quotient_exponent, save_space, subset_to_json

    if args.action == "build":
        spec = g.GeneratorSpec(args.kind, args.level, args.dimension, args.dilations, args.seed)
        X = g.build_space(spec)
        if not args.out:
            raise ValueError("space build needs --out FILE")
        save_space(X, args.out)
        args.out = None  # the space file is the artifact; the summary goes to stdout
        return {"points": X.n, "resolution": X.resolution, "diameter": X.diameter, "name": X.name}, "Space"
    X = _load_space(args)
    if args.action == "subset":
        if args.select == "axis":
            emb = g.axis_segment(X, args.offset)
        elif args.select == "diagonal":
            emb = g.diagonal_segment(X)
        else:
            emb = g.embed_subset(X, [int(v) for v in args.indices.split(",")], "uniform")
        if not args.out:
            raise ValueError("space subset needs --out FILE")
        import json

        with open(args.out, "w") as fh:
            json.dump(subset_to_json(emb), fh, sort_keys=True)
        args.out = None
        return {"subset_size": emb.size}, "Subset"
    if args.action == "regularity":
        return estimate_regularity(X, seed=args.seed).to_dict(), "RegularityReport"
    emb = _load_subset(args, X)
    return quotient_exponent(emb, seed=args.seed).to_dict(), "RegularityReport"


def cmd_besov(args):
    from .besov import BesovParams, DiscreteFunction, besov_norm, besov_profile, besov_seminorms, lp_norm

    X = _load_space(args)
    f = DiscreteFunction(X, read_function(args.function, X.n))
    prof = besov_profile(f, args.p)
    out = {"profile": prof.to_dict()["profile"]}
    if args.action == "norm":
        prm = BesovParams(args.alpha, args.p, args.q)
        out["norm"] = besov_norm(f, prm, args.mode)
        out["seminorm"] = float(besov_seminorms(X, f.values, prm, args.mode))
        out["lp_norm"] = float(lp_norm(X, f.values, args.p))
    return out, "BesovReport"


def cmd_whitney(args):
    from .whitney import partition_of_unity, whitney_cover

    X = _load_space(args)
    emb = _load_subset(args, X)
    cover = whitney_cover(X, emb.subset, args.scale_unit)
    out = cover.to_dict()
    if args.action == "partition":
        out["partition"] = partition_of_unity(cover).to_dict()
    return out, "WhitneyReport"


def cmd_trace(args):
    from . import trace as tr

    if args.action == "harness":
        if args.mode == "extension" and args.gamma is not None:
            tr.check_extension_window(args.beta, args.p, args.gamma)
        if args.mode != "extension" and args.N is not None and args.d is not None:
            a0 = _config(args).alpha_0 if args.mode == "besov-restriction" else None
            tr.check_restriction_window(args.alpha, args.p, args.N, args.d, a0)
        if args.levels:
            return _trace_levels(args)
    X = _load_space(args)
    emb = _load_subset(args, X)
    return _trace_run(args, X, emb)


def _trace_run(args, X, emb):
    from . import trace as tr

    if args.action == "extend":
        op = tr.extension_operator(emb, args.scale_unit)
        return function_csv(op(read_function(args.function, emb.size))), None
    if args.action == "restrict":
        v = read_function(args.function, X.n)
        radii = sorted((float(r) for r in args.radii.split(",")), reverse=True) if args.radii else None
        vals, rep = tr.restrict(v, emb, radii)
        if args.format == "csv":
            return function_csv(vals), None
        return {"values": vals.tolist(), "convergence": rep.to_dict() if rep else None}, "Restriction"
    if args.mode == "extension":
        rep = tr.extension_harness(emb, args.beta, args.p, args.q, args.size, args.seed,
                                   args.scale_unit, args.gamma)
    elif args.mode == "restriction":
        rep = tr.restriction_harness(emb, args.alpha, args.p, args.size, args.seed,
                                     config=_config(args), N=args.N, d=args.d)
    else:
        rep = tr.besov_restriction_harness(emb, args.alpha, args.p, args.q, args.size, args.seed,
                                           config=_config(args), N=args.N, d=args.d)
    if args.format == "csv" and args.mode == "extension":
        rec = rep.recovery_errors
        rows = [(r, float(np.mean(v))) for r, v in zip(rec["radii"], rec["per_point"])]
        return write_csv(rows, ["r", "mean_recovery_error"]), None
    return rep.to_dict(), "TraceReport"


def _trace_levels(args):
    """Harness on the demo geometry (2-D grid; diagonal F for extension, mid-line F otherwise)."""
    from . import generators as g
    from .trace import drift

    reports = []
    for L in args.levels:
        X = g.grid_space(2, L)
        emb = g.diagonal_segment(X) if args.mode == "extension" else g.axis_segment(X, 0.5)
        rep, _ = _trace_run(argparse.Namespace(**{**vars(args), "format": "json"}), X, emb)
        reports.append(rep)
    key = "lp_ratio_max" if args.mode == "extension" else "besov_ratio_max"
    if args.mode == "restriction":
        key = "lp_ratio_max"
    series = [r[key] for r in reports]
    if args.format == "csv":
        return write_csv(list(zip(args.levels, series)), ["level", key]), None
    out = {"levels": args.levels, "reports": reports, "drift": {key: drift(series)}}
    if args.mode == "extension":
        out["drift"]["besov_ratio_max"] = drift([r["besov_ratio_max"] for r in reports])
    return out, "TraceLevels"


def cmd_kernel(args):
    from .calculus import bessel_kernel, build_aoi, kernel_bound_checks, q_operator, save_kernel

    X = _load_space(args)
    cfg = _config(args)
    if args.action == "build":
        K = bessel_kernel(X, args.alpha, cfg)
        if args.out_kernel:
            save_kernel(K, args.out_kernel)
        return {"alpha": K.alpha, "quadrature_residual": K.quadrature_residual,
                "dense": K.matrix is not None}, "Kernel"
    if args.action == "aoi":
        return {"s": build_aoi(X, args.t, cfg).checks, "q": q_operator(X, args.t, cfg).checks}, "Kernel"
    emb = _load_subset(args, X)
    K = bessel_kernel(X, args.alpha, cfg)
    return kernel_bound_checks(K, emb, args.q_exp, N=args.N, d=args.d, seed=args.seed), "Kernel"


def cmd_calculus(args):
    from .calculus import (bessel_kernel, check_potential_window, fractional_derivative, potential,
                           potential_norm)

    cfg = _config(args)
    if args.action == "pnorm":
        check_potential_window(args.alpha, args.p, cfg)
    X = _load_space(args)
    f = read_function(args.function, X.n)
    if args.action == "dalpha":
        return function_csv(fractional_derivative(X, f, args.alpha, cfg)), None
    if args.action == "jalpha":
        return function_csv(potential(bessel_kernel(X, args.alpha, cfg), f)), None
    return {"potential_norm": potential_norm(X, f, args.alpha, args.p, cfg)}, "Calculus"


def cmd_interp(args):
    from . import interpolation as it
    from .calculus import check_potential_window

    cfg = _config(args)
    for a in (args.alpha, args.beta):
        check_potential_window(a, args.p, cfg, it.INTERPOLATION)
    if args.action == "harness":
        if args.levels:
            from .generators import grid_space
            from .trace import drift

            reps = [it.interpolation_theorem_harness(grid_space(1, L), args.alpha, args.beta, args.theta,
                                                     args.p, args.q, config=cfg,
                                                     ensemble_size=args.size, seed=args.seed)
                    for L in args.levels]
            return {"levels": args.levels, "reports": reps,
                    "drift": {"spread_K": drift([r["spread_K"] for r in reps]),
                              "spread_J": drift([r["spread_J"] for r in reps])}}, "InterpolationLevels"
        X = _load_space(args)
        rep = it.interpolation_theorem_harness(X, args.alpha, args.beta, args.theta, args.p, args.q,
                                               config=cfg, ensemble_size=args.size, seed=args.seed)
        return rep, "Interpolation"
    X = _load_space(args)
    f = read_function(args.function, X.n)
    pair = it.potential_pair(X, args.alpha, args.beta, args.p, cfg)
    fam = it.SmoothingFamily.build(X, f)
    if args.action == "kcurve":
        t = np.geomspace(args.tmin_k, args.tmax_k, args.tcount)
        kc = it.k_curve(pair, f, t, fam)
        return (kc.to_csv(), None) if args.format == "csv" else (kc.to_dict(), "KCurve")
    return it.interpolation_norm_K(pair, f, args.theta, args.q, fam), "Interpolation"


def demo_suite(seed: int = 0) -> dict:
    """Small-scale run of every check suite on the bundled demo geometries."""
    from . import generators as g
    from .besov import BesovParams, besov_norm, DiscreteFunction
    from .calculus import bessel_kernel, build_aoi, fractional_derivative, kernel_bound_checks, q_operator
    from .ensembles import ensemble
    from .interpolation import fuerte_hypothesis_check, interpolation_theorem_harness
    from .space import estimate_regularity, quotient_exponent
    from .trace import extension_harness, restriction_harness
    from .whitney import partition_of_unity, whitney_cover

    out = {}
    X1, X2 = g.grid_space(1, 6), g.grid_space(2, 5)
    out["geometry"] = {
        "grid1": estimate_regularity(X1, seed=seed).fitted_exponent,
        "grid2": estimate_regularity(X2, seed=seed).fitted_exponent,
        "gasket": estimate_regularity(g.sierpinski_gasket(5), seed=seed).fitted_exponent,
        "segment_gamma": quotient_exponent(g.axis_segment(X2), seed=seed).fitted_exponent,
    }
    diag = g.diagonal_segment(X2)
    cover = whitney_cover(X2, diag.subset)
    pou = partition_of_unity(cover, seed=seed)
    out["whitney"] = {"balls": cover.size, "overlap_bound": cover.overlap_bound,
                      "cover_checks": cover.checks, "partition_checks": pou.checks}
    out["extension"] = extension_harness(diag, 0.4, 2, 2, ensemble_size=8, seed=seed).to_dict()
    K1 = bessel_kernel(X1, 0.5)
    mid = g.axis_segment(X2, 0.5)
    out["kernel"] = {"residual": K1.quadrature_residual,
                     "s": build_aoi(X1, 0.1).checks, "q": q_operator(X1, 0.1, seed=seed).checks,
                     "lemma": kernel_bound_checks(bessel_kernel(X2, 0.5), mid, 0.5, N=2.0, d=1.0, seed=seed)}
    F1, _ = ensemble(X1, 0.3, 6, seed)
    out["calculus"] = {
        "dalpha_const_max": float(np.abs(fractional_derivative(X1, np.full(X1.n, 2.0), 0.3)).max()),
        "decomposition": fuerte_hypothesis_check(X1, F1, 0.3, 2.0),
    }
    out["interpolation"] = interpolation_theorem_harness(X1, 0.2, 0.4, 0.5, 2, 2, ensemble_size=6, seed=seed)
    out["restriction"] = restriction_harness(mid, 0.8, 2.0, ensemble_size=6, seed=seed,
                                             N=2.0, d=1.0).to_dict()
    f = DiscreteFunction(X1, np.sin(2 * np.pi * X1.coords[:, 0]))
    out["besov"] = {"smooth_bump_norm": besov_norm(f, BesovParams(0.5, 2, 2))}
    return out


def cmd_report(args):
    if args.action == "schema":
        return schema_document(), None
    return demo_suite(args.seed), "Suite"


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--space", help="space JSON file")
    common.add_argument("--subset", help="subset JSON file")
    common.add_argument("--function", help="function CSV file (point_id,value)")
    common.add_argument("--p", type=float, default=2.0)
    common.add_argument("--q", type=float, default=2.0)
    common.add_argument("--alpha", type=float, default=0.3)
    common.add_argument("--beta", type=float, default=0.4)
    common.add_argument("--theta", type=float, default=0.5)
    common.add_argument("--gamma", type=float, default=None)
    common.add_argument("--levels", type=_levels, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tmin", type=float, default=1e-3)
    common.add_argument("--tmax", type=float, default=1e3)
    common.add_argument("--tnodes", type=int, default=200)
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=["json", "csv"], default="json")

    p = argparse.ArgumentParser(prog="besovtrace", description="Besov spaces, traces and potentials on point clouds.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("space", parents=[common])
    s.add_argument("action", choices=["build", "regularity", "quotient", "subset"])
    s.add_argument("--kind", default="grid", choices=["grid", "gasket", "dilated_gasket", "cantor"])
    s.add_argument("--level", type=int, default=5)
    s.add_argument("--dimension", type=int, default=1)
    s.add_argument("--dilations", type=int, default=1)
    s.add_argument("--select", choices=["axis", "diagonal", "indices"], default="axis")
    s.add_argument("--offset", type=float, default=0.0)
    s.add_argument("--indices", default="")
    s.set_defaults(func=cmd_space)

    b = sub.add_parser("besov", parents=[common])
    b.add_argument("action", choices=["norm", "profile"])
    b.add_argument("--mode", choices=["dyadic", "quadrature"], default="dyadic")
    b.set_defaults(func=cmd_besov)

    w = sub.add_parser("whitney", parents=[common])
    w.add_argument("action", choices=["cover", "partition"])
    w.add_argument("--scale-unit", type=float, default=1.0)
    w.set_defaults(func=cmd_whitney)

    t = sub.add_parser("trace", parents=[common])
    t.add_argument("action", choices=["extend", "restrict", "harness"])
    t.add_argument("--mode", choices=["extension", "restriction", "besov-restriction"], default="extension")
    t.add_argument("--scale-unit", type=float, default=1.0)
    t.add_argument("--radii", default=None, help="comma-separated radii for restrict")
    t.add_argument("--size", type=int, default=50, help="ensemble size")
    t.add_argument("--N", type=float, default=None, help="regularity of X (default: fitted)")
    t.add_argument("--d", type=float, default=None, help="regularity of F (default: fitted)")
    t.set_defaults(func=cmd_trace)

    k = sub.add_parser("kernel", parents=[common])
    k.add_argument("action", choices=["build", "check", "aoi"])
    k.add_argument("--t", type=float, default=0.1)
    k.add_argument("--q-exp", type=float, default=0.5)
    k.add_argument("--N", type=float, default=None)
    k.add_argument("--d", type=float, default=None)
    k.add_argument("--out-kernel", default=None, help="write the dense kernel to this .npz file")
    k.set_defaults(func=cmd_kernel)

    c = sub.add_parser("calculus", parents=[common])
    c.add_argument("action", choices=["dalpha", "jalpha", "pnorm"])
    c.set_defaults(func=cmd_calculus)

    i = sub.add_parser("interp", parents=[common])
    i.add_argument("action", choices=["kcurve", "knorm", "harness"])
    i.add_argument("--size", type=int, default=20)
    i.add_argument("--tmin-k", type=float, default=1e-3)
    i.add_argument("--tmax-k", type=float, default=1e3)
    i.add_argument("--tcount", type=int, default=61)
    i.set_defaults(func=cmd_interp)

    r = sub.add_parser("report", parents=[common])
    r.add_argument("action", choices=["all", "schema"])
    r.set_defaults(func=cmd_report)
    return p


def _params(args) -> dict:
    skip = {"func", "out", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None) -> int:
    threads = os.environ.get("BESOVTRACE_THREADS")
    if threads:
        import numba

        numba.set_num_threads(int(threads))
    args = build_parser().parse_args(argv)
    try:
        result, kind = args.func(args)
    except HypothesisError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, MemoryError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, str):
        _emit(result, args.out)
    elif kind is None:
        _emit(dumps(result), args.out)
    else:
        _emit(dumps(envelope(kind, _params(args), result)), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
