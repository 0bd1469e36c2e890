"""Command-line entry point: gen, segment, merge, features, query, bench, serve."""

from __future__ import annotations

import argparse
import json
import platform
import sys

from . import artifacts, ingest, pipeline
from .model import ClusterParams, ParameterError
from .postproc import QueryError


def _add_cluster_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", default="2,2,2,2",
                   help="cluster counts per dimension x,y,z,t (default 2,2,2,2)")
    p.add_argument("--cf", type=float, default=1.0,
                   help="temporal conversion factor, length units per time unit")
    p.add_argument("--wd", type=float, default=1.0, help="space-time distance weight")
    p.add_argument("--wp", type=float, default=1.0, help="point value weight")
    p.add_argument("--wf", type=float, default=1.0, help="field value weight")
    p.add_argument("--eps-c", type=float, default=0.01, help="convergence threshold")
    p.add_argument("--eps-m", type=float, default=0.0, help="merge threshold")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--normalize", choices=["on", "off"], default="on",
                   help="min-max normalize v_p/v_f before clustering")


def _add_exec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk-size", type=int, default=None,
                   help="assignment batch size; default processes all at once")


def _params_from_args(args) -> ClusterParams:
    k = tuple(int(v) for v in args.k.split(","))
    return ClusterParams(k=k, c_f=args.cf, w_d=args.wd, w_p=args.wp, w_f=args.wf,
                         eps_c=args.eps_c, eps_m=args.eps_m,
                         max_iterations=args.max_iters,
                         normalize=args.normalize == "on")


def cmd_gen(args) -> int:
    with open(args.spec) as f:
        spec = ingest.SyntheticSpec.from_dict(json.load(f))
    if args.seed is not None:
        spec = ingest.SyntheticSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    paths = ingest.write_synthetic(args.out, spec)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def cmd_segment(args) -> int:
    params = _params_from_args(args)
    seg = pipeline.segment_to_dir(
        args.out, args.field, args.points, params,
        workers=args.workers, chunk_size=args.chunk_size, derive=args.derive,
        progress=lambda it, d: print(f"iteration {it}: max center delta {d:.3g}"),
    )
    if not seg.converged:
        print(f"warning: stopped at max_iterations={params.max_iterations} "
              "without converging")
    print(f"done: {seg.iterations_used} iterations, {len(seg.centers)} live clusters")
    return 0


def cmd_merge(args) -> int:
    merge_map, merged = pipeline.merge_to_dir(args.out, args.eps_m)
    n_orig = len(merge_map)
    print(f"merged {n_orig} clusters into {len(merged)} features (eps_m={args.eps_m})")
    return 0


def cmd_features(args) -> int:
    feats, _, _ = pipeline.features_to_dir(args.out, args.field, args.points,
                                           args.derive if args.derive != "v" else None)
    print(f"wrote {len(feats)} features to {args.out}/{artifacts.FEATURES_JSON}")
    return 0


def cmd_query(args) -> int:
    for fid in pipeline.query_dir(args.out, args.predicates):
        print(fid)
    return 0


def cmd_bench(args) -> int:
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    params = _params_from_args(args)
    print(f"# machine: {platform.processor() or platform.machine()}, "
          f"python {platform.python_version()}, workers={args.workers}")
    print("n_samples,k_total,seconds")
    for n in sizes:
        points, fields = pipeline.bench_synthetic(n, seed=args.seed or 0)
        t = pipeline.bench_iteration(points, fields, params,
                                     workers=args.workers, chunk_size=args.chunk_size,
                                     repeats=args.repeats)
        actual = len(points) + len(fields)
        print(f"{actual},{params.k_total},{t:.6f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(args.out, field_path=args.field, points_path=args.points,
                     derive=args.derive)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfseg",
                                 description="4D multifaceted feature segmentation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic ground-truth dataset")
    p.add_argument("--spec", required=True, help="synthetic spec JSON document")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("segment", help="run the full clustering")
    p.add_argument("--field", default=None, help="field metadata document")
    p.add_argument("--points", default=None, help="point file")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--derive", default="v", help="v_p derivation expression")
    _add_cluster_flags(p)
    _add_exec_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("merge", help="re-merge saved clusters at a new eps_m")
    p.add_argument("--out", required=True)
    p.add_argument("--eps-m", type=float, required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("features", help="materialize the feature export document")
    p.add_argument("--out", required=True)
    p.add_argument("--field", default=None)
    p.add_argument("--points", default=None)
    p.add_argument("--derive", default="v")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("query", help="range-query the center table")
    p.add_argument("--out", required=True)
    p.add_argument("predicates", nargs="*",
                   help="conjunctive predicates, each prop=min:max")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="time single clustering iterations")
    p.add_argument("--sizes", default="1e5,2e5,4e5,8e5",
                   help="comma list of total sample counts")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    _add_cluster_flags(p)
    _add_exec_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="serve saved artifacts over HTTP")
    p.add_argument("--out", required=True)
    p.add_argument("--field", default=None)
    p.add_argument("--points", default=None)
    p.add_argument("--derive", default="v")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8731)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename or e}", file=sys.stderr)
        return 2
    except (ingest.IngestError, ingest.SyntheticSpecError, ParameterError,
            artifacts.ArtifactError, QueryError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
