"""Command-line interface.

Subcommands: analyze, simulate, reproduce, bounds, build-matrix.
Exit codes: 0 ok, 2 configuration, 3 numerical integrity, 4 no-root/unstable.
All flags override the corresponding config keys; every emitted file carries
the config hash (and the seed for Monte-Carlo outputs) in its header.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import augment, errbounds, kernel, pipeline, sim
from .errors import EXIT_NUMERIC, EXIT_OK, QtailError


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


def main(argv) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except QtailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:  # pragma: no cover - defensive
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtail",
                                description="Queue-tail analysis for buffer-aware scheduling")
    sub = p.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="analytic tail curves from a config")
    pa.add_argument("-c", "--config", required=True)
    pa.add_argument("-o", "--outdir", default=".")
    pa.add_argument("--prefix", default="analyze")
    pa.add_argument("--q-max", type=float, default=None)
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("simulate", help="Monte-Carlo tail estimation")
    ps.add_argument("-c", "--config", required=True)
    ps.add_argument("-o", "--outdir", default=".")
    ps.add_argument("--prefix", default="simulate")
    ps.add_argument("--slots", type=int, default=None)
    ps.add_argument("--hybrid", type=float, default=None, metavar="CUTOFF",
                    help="splice the analytic tail below this probability")
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("reproduce", help="materialize a case-study figure bundle")
    pr.add_argument("--figure", required=True, choices=sorted(pipeline.FIGURES))
    pr.add_argument("--scale", type=float, default=1e-2,
                    help="fraction of the full 1e9 Monte-Carlo slots")
    pr.add_argument("-o", "--outdir", default=".")
    pr.set_defaults(func=cmd_reproduce)

    pb = sub.add_parser("bounds", help="closed-form accumulated-error bounds")
    pb.add_argument("--ldt-theta", type=float, default=None)
    pb.add_argument("--ldt-p", type=float, default=0.0)
    pb.add_argument("--gpd-xi", type=float, default=None)
    pb.add_argument("--gpd-sigma", type=float, default=1.0)
    pb.add_argument("--gev-xi", type=float, default=None)
    pb.add_argument("--gev-mu", type=float, default=0.0)
    pb.add_argument("--gev-sigma", type=float, default=1.0)
    pb.set_defaults(func=cmd_bounds)

    pm = sub.add_parser("build-matrix", help="emit the truncated kernel as CSV")
    pm.add_argument("-c", "--config", required=True)
    pm.add_argument("-o", "--output", required=True)
    pm.add_argument("--augment", default="raw",
                    choices=["raw", "lca", "fca", "sub", "slb"])
    pm.set_defaults(func=cmd_build_matrix)
    return p


def cmd_analyze(args) -> int:
    cfg = pipeline.load_config(args.config)
    if args.q_max is not None:
        doc = dict(cfg.raw)
        doc["analysis"] = dict(doc["analysis"], q_max=args.q_max)
        cfg = pipeline.parse_config(doc)
    t0 = time.perf_counter()
    res = pipeline.run_analysis(cfg)
    total = time.perf_counter() - t0

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cols = pipeline.analysis_rows(res)
    curves_path = outdir / f"{args.prefix}_curves.csv"
    pipeline.write_csv(curves_path, cols, {"config_hash": cfg.config_hash})

    summary = res.summary()
    summary["total_s"] = total
    summary_path = outdir / f"{args.prefix}_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"wrote {curves_path} and {summary_path}")
    return EXIT_OK


def _qvp_columns(est: sim.QvpEstimate, q_values) -> dict:
    return {
        "q_th": np.asarray(q_values, dtype=float),
        "qvp": np.array([est.prob_gt(q) for q in q_values]),
        "stderr": np.array([est.stderr_gt(q) for q in q_values]),
        "hits": np.array([est.hits_geq(q + est.bin_unit) for q in q_values], dtype=int),
    }


def cmd_simulate(args) -> int:
    cfg = pipeline.load_config(args.config)
    scfg = pipeline.sim_config(cfg, slots=args.slots)
    est = sim.simulate_queue(scfg)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    qs = pipeline.q_grid(cfg)
    header = {"config_hash": cfg.config_hash, "seed": scfg.seed,
              "generator": sim.GENERATOR_NAME, "slots": scfg.slots_per_replica * scfg.replicas}
    qvp_path = outdir / f"{args.prefix}_qvp.csv"
    pipeline.write_csv(qvp_path, _qvp_columns(est, qs), header)
    print(f"wrote {qvp_path}")

    if args.hybrid is not None:
        res = pipeline.run_analysis(cfg)
        curve = sim.splice_hybrid(est, args.hybrid, res.tails["bounds_pair"], q_grid=qs)
        hybrid_path = outdir / f"{args.prefix}_hybrid.csv"
        pipeline.write_csv(
            hybrid_path,
            {"q_th": curve.q, "qvp": curve.prob, "source": curve.source},
            dict(header, splice_q=curve.splice_q, cutoff=args.hybrid))
        print(f"wrote {hybrid_path} (splice at q={curve.splice_q})")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    v_param, alpha = pipeline.FIGURES[args.figure]
    slots = max(1000, int(round(1e9 * args.scale)))
    doc = pipeline.default_drift_config(v_param, alpha, slots=slots)
    cfg = pipeline.parse_config(doc)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    res = pipeline.run_analysis(cfg)
    est = sim.simulate_queue(pipeline.sim_config(cfg))
    qs = pipeline.q_grid(cfg)
    header = {"config_hash": cfg.config_hash, "figure": args.figure,
              "seed": cfg.sim_section["seed"], "scale": args.scale}

    mc_cols = _qvp_columns(est, qs)
    paths = []
    p = outdir / f"{args.figure}_mc.csv"
    pipeline.write_csv(p, mc_cols, header)
    paths.append(p)
    combined = {"q_th": qs, "mc_qvp": mc_cols["qvp"], "mc_stderr": mc_cols["stderr"],
                "hits": mc_cols["hits"]}
    for name in ("lca", "fca", "sub", "slb"):
        col = np.array([res.tails[name].eval_upper(q) for q in qs])
        combined[f"eps_{name}"] = col
        p = outdir / f"{args.figure}_{name}_ec.csv"
        pipeline.write_csv(p, {"q_th": qs, f"eps_{name}": col}, header)
        paths.append(p)
    p = outdir / f"{args.figure}_combined.csv"
    pipeline.write_csv(p, combined, header)
    paths.append(p)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    reports = []
    if args.ldt_theta is not None:
        reports.append(errbounds.ldt_bounds(args.ldt_theta, args.ldt_p))
    if args.gpd_xi is not None:
        reports.append(errbounds.gpd_bounds(args.gpd_xi, args.gpd_sigma))
    if args.gev_xi is not None:
        reports.append(errbounds.gev_bounds(args.gev_xi, args.gev_mu, args.gev_sigma))
    if not reports:
        print("error: supply --ldt-theta, --gpd-xi, or --gev-xi", file=sys.stderr)
        return 2
    print(f"{'regime':<14} {'lower':>12} {'upper':>12}")
    for rep in reports:
        upper = "unbounded" if rep.unbounded else f"{rep.upper:.6g}"
        print(f"{rep.regime.value:<14} {rep.lower:>12.6g} {upper:>12}")
    return EXIT_OK


def cmd_build_matrix(args) -> int:
    cfg = pipeline.load_config(args.config)
    res = pipeline.run_analysis(cfg)
    chosen = res.kernel_raw if args.augment == "raw" else res.kernels[args.augment]
    Path(args.output).write_text(kernel.kernel_to_csv(chosen), encoding="utf-8")
    print(f"wrote {args.output}")
    return EXIT_OK
