"""Command-line front end.

Verbs: reference, train, experiment, heatmap, compare, bench.
Exit codes: 0 success, 1 validation problem, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import fd, metrics, training
from .benchmarks import BENCHMARKS, DEFAULTS, builtin_benchmark
from .geometry import GeometryError, load_domain
from .network import DegenerateStateError
from .training import TrainConfig, TrainingDiverged

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _resolve_domain(args):
    if getattr(args, "benchmark", None):
        return builtin_benchmark(args.benchmark)
    if getattr(args, "domain", None):
        return load_domain(args.domain)
    raise GeometryError("need --benchmark or --domain")


def _spacing(args, domain):
    if args.spacing:
        vals = [float(x) for x in args.spacing.split(",")]
        return vals[0] if len(vals) == 1 else vals
    if getattr(args, "benchmark", None):
        return DEFAULTS[args.benchmark]["resolution"]
    return domain.default_resolution


def cmd_reference(args) -> int:
    domain = _resolve_domain(args)
    spacing = _spacing(args, domain)
    sol = fd.solve_benchmark(domain, spacing, sigma=args.shift)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    training.write_flux_csv(out / "reference.csv", sol.grid.points,
                            sol.grid.node_region, sol.phi1, sol.phi2)
    meta = dict(sol.meta)
    meta.update({"k_eff": sol.k_eff, "domain": domain.name})
    with open(out / "reference_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1)
    print(f"k_eff = {sol.k_eff:.6f} "
          f"({sol.meta['iterations']} source iterations)")
    return EXIT_OK


def _reference_for(domain, spacing, cache_dir=None):
    if cache_dir:
        cache = Path(cache_dir) / "reference.csv"
        meta = Path(cache_dir) / "reference_meta.json"
        if cache.exists() and meta.exists():
            with open(meta, encoding="utf-8") as fh:
                doc = json.load(fh)
            saved = doc.get("spacing")
            want = list(np.broadcast_to(np.asarray(spacing, dtype=float),
                                        (domain.dimension,)))
            if saved == want:
                pts, region, p1, p2 = training.read_flux_csv(cache)
                grid = fd.Grid(domain, spacing)
                sol = fd.EigenSolution(grid, doc["k_eff"], p1, p2, doc)
                return sol
    return fd.solve_benchmark(domain, spacing)


def cmd_train(args) -> int:
    if args.config:
        config = TrainConfig.from_file(args.config)
    else:
        config = TrainConfig(benchmark=args.benchmark)
    if args.benchmark:
        config.benchmark = args.benchmark
    if args.seed is not None:
        config.rng_seed = args.seed
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.deterministic:
        config.deterministic = True
    out = Path(args.out)
    result, history = training.train(config, out_dir=out,
                                     log_every=args.log_every)
    domain = result.domain
    spacing = config.resolution or (
        DEFAULTS[config.benchmark]["resolution"] if config.benchmark
        else domain.default_resolution)
    ref = _reference_for(domain, spacing, cache_dir=args.reference)
    report = metrics.report_against_reference(result, ref)
    with open(out / "errors.json", "w", encoding="utf-8") as fh:
        json.dump({"k_nn": result.k_eff, "k_ref": ref.k_eff,
                   **report.as_dict()}, fh, indent=1)
    print(f"k_nn = {result.k_eff:.6f}  k_ref = {ref.k_eff:.6f}")
    for k, v in report.as_dict().items():
        print(f"{k} = {v:.6e}" if isinstance(v, float) else f"{k} = {v}")
    return EXIT_OK


def _run_cell(payload):
    """One experiment cell (executed in a worker process)."""
    cell, out_root = payload
    t0 = time.time()
    config = TrainConfig(**cell["config"])
    out_dir = Path(out_root) / cell["name"]
    try:
        result, history = training.train(config, out_dir=out_dir)
        domain = result.domain
        spacing = config.resolution or (
            DEFAULTS[config.benchmark]["resolution"] if config.benchmark
            else domain.default_resolution)
        ref = fd.solve_benchmark(domain, spacing)
        report = metrics.report_against_reference(result, ref)
        row = {"cell": cell["name"], **cell["params"],
               "status": "ok", "k_nn": result.k_eff, "k_ref": ref.k_eff,
               **report.as_dict(), "seconds": time.time() - t0}
    except (TrainingDiverged, DegenerateStateError, fd.SolverError) as e:
        row = {"cell": cell["name"], **cell["params"],
               "status": f"failed: {e}", "seconds": time.time() - t0}
    return row


def build_plan_cells(plan: dict) -> list:
    """Expand an experiment plan into runnable cells."""
    kind = plan["kind"]
    benchmark = plan["benchmark"]
    seeds = plan.get("seeds", [0])
    base = dict(plan.get("config", {}))
    base["benchmark"] = benchmark
    cells = []

    def cell(name, params, **overrides):
        cfg = dict(base)
        cfg.update(overrides)
        cells.append({"name": name, "params": params, "config": cfg})

    if kind == "sampling_sweep":
        for rate in plan.get("rates", (0.1, 0.25, 0.5, 0.75, 1.0)):
            for seed in seeds:
                cell(f"rate{rate:g}_seed{seed}",
                     {"sample_rate": rate, "seed": seed},
                     sample_rate=rate, rng_seed=seed)
    elif kind == "interface_sweep":
        for prop in plan.get("proportions", (0.0, 0.25, 0.5, 0.75, 1.0)):
            for seed in seeds:
                cell(f"int{prop:g}_seed{seed}",
                     {"interface_proportion": prop, "seed": seed},
                     interface_proportion=prop, rng_seed=seed)
    elif kind == "loss_compare":
        variants = plan.get("losses", [
            {"loss": "ipm", "sigma": 0.0},
            {"loss": "de", "sigma": 0.0},
            {"loss": "di", "sigma": 1.0},
            {"loss": "de", "sigma": 1.0},
        ])
        for var in variants:
            for seed in seeds:
                cell(f"{var['loss']}_s{var['sigma']:g}_seed{seed}",
                     {"loss": var["loss"], "sigma": var["sigma"],
                      "seed": seed},
                     loss=var["loss"], sigma=var["sigma"], rng_seed=seed)
    elif kind in ("train", "reference"):
        for seed in seeds:
            cell(f"seed{seed}", {"seed": seed}, rng_seed=seed)
    else:
        raise ValueError(f"unknown plan kind {kind!r}")
    return cells


def cmd_experiment(args) -> int:
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = json.load(fh)
    cells = build_plan_cells(plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(c, str(out)) for c in cells]
    rows = []
    if args.threads > 1:
        with cf.ProcessPoolExecutor(max_workers=args.threads) as pool:
            for row in pool.map(_run_cell, payloads):
                rows.append(row)
                print(f"cell {row['cell']}: {row['status']}", flush=True)
    else:
        for payload in payloads:
            row = _run_cell(payload)
            rows.append(row)
            print(f"cell {row['cell']}: {row['status']}", flush=True)
    fields = sorted({k for row in rows for k in row})
    head = ["cell", "status"] + [f for f in fields
                                 if f not in ("cell", "status")]
    with open(out / "results.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=head, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    n_fail = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows) - n_fail}/{len(rows)} cells succeeded; "
          f"results in {out / 'results.csv'}")
    return EXIT_NUMERICAL if n_fail else EXIT_OK


def cmd_heatmap(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pts, region, phi1, phi2 = training.read_flux_csv(args.csv)
    field = phi1 if args.group == 1 else phi2
    d = pts.shape[1]
    if d == 3:
        if args.slice_axis is None or args.slice_coord is None:
            print("3-D data needs --slice-axis and --slice-coord",
                  file=sys.stderr)
            return EXIT_VALIDATION
        axis = "xyz".index(args.slice_axis)
        sel = np.isclose(pts[:, axis], args.slice_coord)
        if not sel.any():
            print("no points on the requested slice", file=sys.stderr)
            return EXIT_VALIDATION
        keep = [a for a in range(3) if a != axis]
        pts = pts[sel][:, keep]
        field = field[sel]
    elif d != 2:
        print("heatmap needs 2-D data or a 3-D slice", file=sys.stderr)
        return EXIT_VALIDATION
    xu = np.unique(pts[:, 0])
    yu = np.unique(pts[:, 1])
    img = np.full((yu.size, xu.size), np.nan)
    ix = np.searchsorted(xu, pts[:, 0])
    iy = np.searchsorted(yu, pts[:, 1])
    img[iy, ix] = field
    fig, ax = plt.subplots(figsize=(6, 5))
    pc = ax.pcolormesh(xu, yu, img, shading="nearest")
    fig.colorbar(pc, ax=ax, label=f"phi{args.group}")
    ax.set_xlabel("x (cm)")
    ax.set_ylabel("y (cm)")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    pts_a, region, a1, a2 = training.read_flux_csv(args.solution)
    pts_b, _, b1, b2 = training.read_flux_csv(args.reference_csv)
    if pts_a.shape != pts_b.shape or not np.allclose(pts_a, pts_b):
        print("flux files are on different lattices", file=sys.stderr)
        return EXIT_VALIDATION
    domain = _resolve_domain(args)
    k_a = args.k_solution if args.k_solution is not None else 1.0
    k_b = args.k_reference if args.k_reference is not None else 1.0
    report = metrics.compare_fields(pts_a, region, a1, a2, b1, b2, k_a, k_b,
                                    domain)
    for k, v in report.as_dict().items():
        print(f"{k} = {v:.6e}" if isinstance(v, float) else f"{k} = {v}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .kernels import bench
    bench.run(n_points=args.points, repeats=args.repeats)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neutdiff",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("reference", help="run the finite-difference solver")
    r.add_argument("--benchmark", choices=BENCHMARKS)
    r.add_argument("--domain", help="domain description JSON")
    r.add_argument("--spacing", help="lattice spacing, e.g. 1 or 2,2,10")
    r.add_argument("--shift", type=float, default=0.0)
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_reference)

    t = sub.add_parser("train", help="train the network solver")
    t.add_argument("--config", help="training config JSON")
    t.add_argument("--benchmark", choices=BENCHMARKS)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--deterministic", action="store_true")
    t.add_argument("--reference", help="directory with a cached reference")
    t.add_argument("--log-every", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("experiment", help="run a sweep plan")
    e.add_argument("--plan", required=True)
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_experiment)

    h = sub.add_parser("heatmap", help="render a flux CSV as an SVG/PDF")
    h.add_argument("--csv", required=True)
    h.add_argument("--group", type=int, choices=(1, 2), default=1)
    h.add_argument("--slice-axis", choices=("x", "y", "z"))
    h.add_argument("--slice-coord", type=float)
    h.add_argument("--out", required=True)
    h.set_defaults(fn=cmd_heatmap)

    c = sub.add_parser("compare", help="error report between two flux CSVs")
    c.add_argument("--solution", required=True)
    c.add_argument("--reference-csv", required=True)
    c.add_argument("--benchmark", choices=BENCHMARKS)
    c.add_argument("--domain")
    c.add_argument("--k-solution", type=float)
    c.add_argument("--k-reference", type=float)
    c.set_defaults(fn=cmd_compare)

    b = sub.add_parser("bench", help="compare evaluation-kernel backends")
    b.add_argument("--points", type=int, default=8192)
    b.add_argument("--repeats", type=int, default=5)
    b.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (GeometryError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingDiverged, DegenerateStateError, fd.SolverError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
