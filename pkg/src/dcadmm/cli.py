"""Command-line entry point: ``dcadmm {generate,run,export,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .experiment import (
    SCENARIOS,
    ConfigError,
    build_graph,
    build_instance,
    load_config,
    plot_data_export,
    preset,
    report,
    run_experiment,
    save_config,
)
from .graphs import equal_neighbor_weights, write_edge_list, write_weights_csv


def _config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.scale, args.scenario)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    return cfg.replace(**overrides) if overrides else cfg


def cmd_generate(args) -> int:
    """Write the config, graph, weights and instance data (npz) to the output directory."""
    cfg = _config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    graph = build_graph(cfg, 0)
    write_edge_list(graph, out / "graph.txt")
    write_weights_csv(equal_neighbor_weights(graph), out / "weights.csv")
    problem, oracle = build_instance(cfg)
    arrays = {"x_star": oracle.x_star}
    for i, obj in enumerate(problem.objectives):
        if hasattr(obj, "A"):
            arrays[f"A_{i}"], arrays[f"b_{i}"] = obj.A, obj.b
        else:
            arrays[f"features_{i}"], arrays[f"labels_{i}"] = obj.features, obj.labels
    np.savez(out / "instance.npz", **arrays)
    print(json.dumps({"output_dir": str(out), "n": cfg.n, "diameter": graph.diameter,
                      "edges": graph.num_edges, "f_star": oracle.f_star, "oracle": oracle.method}))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    out = run_experiment(cfg)
    print(report(out))
    return 0


def cmd_export(args) -> int:
    path = plot_data_export(Path(args.dir) / "metrics", args.out)
    print(path)
    return 0


def cmd_report(args) -> int:
    print(report(args.dir, tol=args.tol))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcadmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, help_text in (
        ("generate", cmd_generate, "write instance data, graph and config"),
        ("run", cmd_run, "run the configured algorithms and write metrics"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment config (defaults to the scale preset)")
        p.add_argument("--scale", choices=("desk", "paper"), default="desk", help="preset used without --config")
        p.add_argument("--scenario", choices=SCENARIOS, default="least_squares", help="preset scenario")
        p.add_argument("--seed", type=int, help="instance seed (graph seed follows unless set in the config)")
        p.add_argument("--out", help="output directory")
        if name == "run":
            p.add_argument("--trials", type=int, help="number of random graphs for the communication histogram")
        p.set_defaults(func=fn)

    p = sub.add_parser("export", help="long-format plot data from a run directory")
    p.add_argument("dir", help="run directory")
    p.add_argument("--out", help="output CSV (default <dir>/plot_data.csv)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("dir", help="run directory")
    p.add_argument("--tol", type=float, default=1e-6, help="residual threshold for the k@tol column")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
