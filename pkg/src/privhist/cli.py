"""Command-line entry point: generation, sanitization, certification,
attacks, and measurements as reproducible file-based runs.

Exit codes: 0 success, 1 input/configuration error, 2 resource or
degenerate-geometry error, 3 internal error.  Outputs are written
atomically (temp file + rename) and embed a manifest with the normalized
command line, seed, input digests and tool version; wall-clock duration
goes to stderr so reruns stay byte-identical.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__
from .adversary import STRATEGIES, IsolationParams, attack
from .datagen import sample
from .documents import (
    build_manifest,
    dataset_from_doc,
    dataset_to_doc,
    histogram_from_doc,
    histogram_to_doc,
    read_json,
    report_doc,
    sha256_file,
    spec_from_doc,
    write_json_atomic,
)
from .errors import (
    DegenerateGeometryError,
    InputError,
    InternalError,
    PrivhistError,
    ResourceError,
)
from .experiments import SUITES, run_suite
from .geometry import Ball, Box, Dataset
from .metrics import cut_probability, measure_diameters, mst_compare
from .roundness import certify_roundness, check_privacy_condition
from .rng import substream
from .sanitizer import build_recursive_cube, build_shifted_grid, build_voronoi


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _emit(doc: dict, out: str | None, argv: list[str], seed: int | None,
          inputs: list[str]):
    doc = _jsonable(doc)
    doc["manifest"] = build_manifest(_normalized_command(argv), seed, inputs)
    if out:
        write_json_atomic(out, doc)
    else:
        import json

        sys.stdout.write(json.dumps(doc, indent=1) + "\n")


def _normalized_command(argv: list[str]) -> list[str]:
    """Drop the --threads flag: it must not influence output bytes."""
    out = []
    skip = False
    for token in argv:
        if skip:
            skip = False
            continue
        if token == "--threads":
            skip = True
            continue
        if token.startswith("--threads="):
            continue
        out.append(token)
    return out


def _region_from_arg(arg: str, d: int | None):
    if arg == "unit-ball":
        if d is None:
            raise InputError("--support unit-ball needs a dataset to infer d")
        return Ball(np.zeros(d), 1.0)
    if arg == "unit-cube":
        if d is None:
            raise InputError("--support unit-cube needs a dataset to infer d")
        return Box(-np.ones(d), np.ones(d), closed_high=np.ones(d, dtype=bool))
    from .documents import _region_from_doc

    return _region_from_doc(read_json(arg), None)


def _auto_support(data: Dataset):
    """Enclosing ball: unit ball when the data fits, else a centered hull ball."""
    unit = Ball(np.zeros(data.d), 1.0)
    if data.n and bool(unit.contains_many(data.points).all()):
        return unit
    center = 0.5 * (data.points.min(axis=0) + data.points.max(axis=0))
    radius = float(np.linalg.norm(data.points - center, axis=1).max()) * 1.0001
    return Ball(center, radius)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_generate(args, argv):
    spec = spec_from_doc(read_json(args.dist))
    if args.d is not None and args.d != spec.d:
        raise InputError(f"--d {args.d} does not match the distribution dimension {spec.d}")
    data, labels = sample(spec, args.n, args.seed)
    doc = dataset_to_doc(data)
    _emit(doc, args.out, argv, args.seed, [args.dist])
    if args.labels_out:
        _emit(report_doc("labels", {"labels": labels.tolist()}), args.labels_out,
              argv, args.seed, [args.dist])
    return 0


def _cmd_sanitize(args, argv):
    data = dataset_from_doc(read_json(args.input))
    if args.method == "cube":
        hist = build_recursive_cube(data, t=args.t, max_depth=args.max_depth or 8)
    elif args.method == "grid":
        hist = build_shifted_grid(data, t=args.t, max_depth=args.max_depth or 8,
                                  seed=args.seed)
    elif args.method == "voronoi":
        support = (_auto_support(data) if args.support == "auto"
                   else _region_from_arg(args.support, data.d))
        if args.centers == "uniform" and data.d >= 6 and args.override_m is None:
            raise InputError(
                "uniform centers at d >= 6 need an explicit --override-m "
                "(the default center-count rule is infeasible there)"
            )
        hist = build_voronoi(
            data, support, t=args.t, max_depth=args.max_depth or 3,
            method=args.centers, centers_budget=args.centers_budget,
            override_m=args.override_m, probe_samples=args.probe_samples,
            seed=args.seed,
        )
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown method {args.method!r}")
    _emit(histogram_to_doc(hist), args.out, argv, args.seed, [args.input])
    return 0


def _cmd_certify(args, argv):
    hist = histogram_from_doc(read_json(args.input))
    cells = []
    for i, node in enumerate(hist.root.walk()):
        cert = certify_roundness(node.region, samples=args.samples,
                                 seed=args.seed + i)
        cells.append({
            "cell": i,
            "level": node.level,
            "count": node.count,
            "k": cert.k,
            "radius": cert.radius,
            "witness": cert.witness.tolist(),
        })
    _emit(report_doc("roundness_certificates", {"cells": cells}), args.out, argv,
          args.seed, [args.input])
    return 0


def _cmd_check_privacy(args, argv):
    hist = histogram_from_doc(read_json(args.input))
    report = check_privacy_condition(
        hist.root, c=args.c, q_probes=args.q_probes, r_grid_size=args.r_grid,
        volume_samples=args.vol_samples, seed=args.seed, max_cells=args.max_cells,
    )
    _emit(report_doc("privacy_condition_report", report.to_dict()), args.out, argv,
          args.seed, [args.input])
    return 0


def _cmd_attack(args, argv):
    hist = histogram_from_doc(read_json(args.hist))
    data = dataset_from_doc(read_json(args.data))
    aux = None
    if args.strategy == "aux-informed":
        k = int(args.aux_frac * data.n)
        aux = substream(args.seed, "aux-subset").choice(data.n, size=k, replace=False)
    report = attack(hist, data, IsolationParams(c=args.c, t=args.t), args.strategy,
                    queries=args.queries, seed=args.seed, aux_indices=aux)
    _emit(report_doc("isolation_report", report.to_dict()), args.out, argv,
          args.seed, [args.hist, args.data])
    return 0


def _cmd_measure_diameters(args, argv):
    data = dataset_from_doc(read_json(args.data))
    support = None
    if args.method.startswith("voronoi"):
        support = (_auto_support(data) if args.support == "auto"
                   else _region_from_arg(args.support, data.d))
    stats = measure_diameters(
        data, t=args.t, trials=args.trials, seed=args.seed, method=args.method,
        max_depth=args.max_depth or (8 if args.method == "grid" else 3),
        support=support,
    )
    _emit(report_doc("diameter_stats", stats.to_dict()), args.out, argv,
          args.seed, [args.data])
    return 0


def _cmd_cut_prob(args, argv):
    x = np.array([float(v) for v in args.x.split(",")])
    support = _region_from_arg(args.support, x.size)
    rs = [float(v) for v in args.r_list.split(",")]
    rows = cut_probability(support, x, rs, m=args.m, trials=args.trials,
                           seed=args.seed)
    body = {
        "m": args.m,
        "trials": args.trials,
        "x": x.tolist(),
        "rows": [{"r": r, "probability": p, "stderr": s} for r, p, s in rows],
        "note": "probe-based cut detection can only miss cuts (estimates biased down)",
    }
    inputs = [args.support] if args.support not in ("unit-ball", "unit-cube") else []
    _emit(report_doc("cut_probability", body), args.out, argv, args.seed, inputs)
    return 0


def _cmd_mst_compare(args, argv):
    hist = histogram_from_doc(read_json(args.hist))
    data = dataset_from_doc(read_json(args.data))
    cmp_ = mst_compare(hist, data)
    _emit(report_doc("mst_comparison", cmp_.to_dict()), args.out, argv, None,
          [args.hist, args.data])
    return 0


def _cmd_repro(args, argv):
    if args.manifest:
        doc = read_json(args.manifest)
        manifest = doc.get("manifest")
        if not manifest:
            raise InputError("document carries no manifest to replay")
        for path, digest in manifest["inputs"].items():
            if sha256_file(path) != digest:
                raise InputError(f"input {path} no longer matches its manifest digest")
        return main(manifest["command"])
    report = run_suite(args.suite, seed=args.seed)
    _emit(report_doc("repro_suite", report), args.out, argv, args.seed, [])
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privhist",
        description="Privacy-preserving spatial histograms: sanitize, certify, attack, measure.",
    )
    parser.add_argument("--version", action="version", version=f"privhist {__version__}")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = auto); never changes output bytes")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a dataset from a distribution spec")
    p.add_argument("--dist", required=True, help="distribution spec document")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, default=None, help="expected dimension (validated)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out", default=None, help="write mixture labels here")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sanitize", help="build a sanitized histogram")
    p.add_argument("--method", choices=["cube", "grid", "voronoi"], required=True)
    p.add_argument("--centers", choices=["greedy", "uniform"], default="greedy")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--support", default="auto",
                   help="voronoi support: auto, unit-ball, unit-cube, or a region JSON path")
    p.add_argument("--override-m", type=int, default=None)
    p.add_argument("--centers-budget", type=int, default=1_000_000)
    p.add_argument("--probe-samples", type=int, default=100_000)
    p.set_defaults(func=_cmd_sanitize)

    p = sub.add_parser("certify", help="emit roundness certificates for every cell")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("check-privacy", help="probe the volume-ratio privacy condition")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--q-probes", type=int, default=8)
    p.add_argument("--r-grid", type=int, default=8)
    p.add_argument("--vol-samples", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-cells", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_check_privacy)

    p = sub.add_parser("attack", help="run an isolation attack against a histogram")
    p.add_argument("--hist", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--strategy", choices=list(STRATEGIES), required=True)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--aux-frac", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("measure-diameters", help="mean smallest-cell diameters vs t-radius bounds")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["grid", "voronoi-greedy", "voronoi-uniform"],
                   required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--support", default="auto")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_measure_diameters)

    p = sub.add_parser("cut-prob", help="cut probability of balls under random Voronoi partitions")
    p.add_argument("--support", required=True,
                   help="unit-ball, unit-cube, or a region JSON path")
    p.add_argument("--x", required=True, help="comma-separated coordinates")
    p.add_argument("--r-list", required=True, help="comma-separated radii")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cut_prob)

    p = sub.add_parser("mst-compare", help="exact vs histogram-distance MST cost")
    p.add_argument("--hist", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mst_compare)

    p = sub.add_parser("repro", help="run a pinned experiment suite or replay a manifest")
    p.add_argument("--suite", choices=list(SUITES), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None, help="replay the command embedded in a document")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_repro)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.command == "repro" and not args.suite and not args.manifest:
        sys.stderr.write("error: repro needs --suite or --manifest\n")
        return 1
    start = time.monotonic()
    try:
        code = args.func(args, argv)
    except (InputError,) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (ResourceError, DegenerateGeometryError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except InternalError as exc:
        sys.stderr.write(f"internal error: {exc}\n")
        return 3
    except PrivhistError as exc:  # pragma: no cover - catch-all for new subclasses
        sys.stderr.write(f"error: {exc}\n")
        return 1
    sys.stderr.write(f"{args.command} completed in {time.monotonic() - start:.3f}s\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
