"""Command-line entry point.

Subcommands: ``gap`` (spectral gap of a topology), ``run`` (single run to a
trace CSV), ``grid-search``, ``sweep``, ``bound-check``, and ``theory``
(closed-form formula evaluation).  Diagnostics go to stderr; data goes to
files or stdout.  All randomness comes from seeds in flags or config files.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, metrics, optim, theory, topology
from .errors import GossipGradError

TOPOLOGY_KINDS = ("ring", "torus", "complete", "onepeer")


def _topology_from_flags(args) -> topology.TopologySpec:
    if args.topology == "torus":
        if args.rows is not None or args.cols is not None:
            if args.rows is None or args.cols is None:
                raise GossipGradError("torus needs both --rows and --cols (or --machines)")
            return topology.Torus(args.rows, args.cols)
        if args.machines is None:
            raise GossipGradError("torus needs --rows/--cols or a square --machines")
        return harness.make_topology("torus", args.machines)
    if args.machines is None:
        raise GossipGradError(f"{args.topology} requires --machines")
    return harness.make_topology(args.topology, args.machines)


def _cmd_gap(args) -> int:
    spec = _topology_from_flags(args)
    seq = topology.build(spec)
    if seq.is_static:
        print(f"{topology.spectral_gap(seq.matrix_at(1)):.9f}")
    else:
        # Per-matrix report: each one-peer pairing matrix alone is
        # disconnected, so the strict gap is zero by definition.
        for t in range(1, seq.period + 1):
            gap = 1.0 - topology.second_eigenvalue_magnitude(seq.matrix_at(t))
            print(f"t={t} {gap:.9f}")
    return 0


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _apply_overrides(config: optim.RunConfig, args) -> optim.RunConfig:
    # flags > file > defaults
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "eta", None) is not None:
        overrides["learning_rate"] = args.eta
    if getattr(args, "rounds", None) is not None:
        overrides["rounds"] = args.rounds
    if getattr(args, "stride", None) is not None:
        overrides["metric_stride"] = args.stride
    return config.with_overrides(**overrides) if overrides else config


def _cmd_run(args) -> int:
    config = _apply_overrides(harness.load_run_config(_load_json(args.config)), args)
    result = optim.run(config, backend=args.backend)
    result.trace.to_csv(args.output)
    print(
        f"final_excess_loss={result.final_excess_loss():.12g} "
        f"final_per_node_error={result.final_per_node_error():.12g}"
    )
    return 0


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise GossipGradError(f"malformed seed list {text!r}") from exc


def _cmd_grid_search(args) -> int:
    config = _apply_overrides(harness.load_run_config(_load_json(args.config)), args)
    grid = tuple(float(tok) for tok in args.grid.split(",")) if args.grid else harness.DEFAULT_ETA_GRID
    best, table = harness.grid_search(
        config, grid, seeds=_parse_seeds(args.seeds), backend=args.backend, workers=args.workers
    )
    if args.output:
        table.to_csv(args.output)
    print(f"best_eta={best!r}")
    return 0


def _cmd_sweep(args) -> int:
    spec = harness.load_sweep_spec(_load_json(args.config))
    table = harness.sweep_machines(spec, backend=args.backend, workers=args.workers)
    table.to_csv(args.output)
    print(f"rows={len(table.rows)}")
    return 0


def _cmd_bound_check(args) -> int:
    config = _apply_overrides(harness.load_run_config(_load_json(args.config)), args)
    report = harness.bound_check(config, _parse_seeds(args.seeds), backend=args.backend)
    for line in report.summary_lines():
        print(line)
    return 0


def _cmd_theory(args) -> int:
    inputs = theory.TheoryInputs(
        smoothness=args.L,
        rounds=args.T,
        rho=args.rho,
        machines=args.M,
        sigma=args.sigma,
        zeta=args.zeta,
        initial_distance=args.D1,
    )
    lr = theory.theoretical_lr(inputs)
    print(f"lr = {lr:.12g}")
    print(f"bound = {theory.convergence_bound(inputs):.12g}")
    print(f"gamma_bound = {theory.gamma_bound(lr, args.rho, args.sigma, args.zeta):.12g}")
    print(f"transient = {theory.transient_complexity(args.M, args.rho):.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gossipgrad",
        description="Decentralized SGD simulation toolkit over gossip networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gap", help="print the spectral gap of a topology", formatter_class=fmt)
    p.add_argument("--topology", required=True, choices=TOPOLOGY_KINDS)
    p.add_argument("--machines", type=int, default=None, help="machine count")
    p.add_argument("--rows", type=int, default=None, help="torus rows")
    p.add_argument("--cols", type=int, default=None, help="torus columns")
    p.set_defaults(func=_cmd_gap)

    def common_run_flags(p, output_required=True):
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--eta", type=float, default=None, help="override learning rate")
        p.add_argument("--rounds", type=int, default=None, help="override round count")
        p.add_argument("--backend", default=None, help="kernel backend (python/compiled)")

    p = sub.add_parser("run", help="run one configuration and write its trace CSV", formatter_class=fmt)
    common_run_flags(p)
    p.add_argument("--stride", type=int, default=None, help="override metric stride")
    p.add_argument("--output", required=True, help="trace CSV path")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("grid-search", help="select the best learning rate on a grid", formatter_class=fmt)
    common_run_flags(p)
    p.add_argument("--grid", default=None, help="comma-separated rates (default: the 7-value grid)")
    p.add_argument("--seeds", default="1,2,3", help="comma-separated noise seeds")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--output", default=None, help="results CSV path")
    p.set_defaults(func=_cmd_grid_search)

    p = sub.add_parser("sweep", help="machine-count sweep with per-cell grid search", formatter_class=fmt)
    p.add_argument("--config", required=True, help="sweep-spec JSON path")
    p.add_argument("--backend", default=None, help="kernel backend (python/compiled)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--output", required=True, help="results CSV path")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bound-check", help="compare a run against its theory bounds", formatter_class=fmt)
    common_run_flags(p)
    p.add_argument("--seeds", default="1,2,3", help="comma-separated noise seeds")
    p.set_defaults(func=_cmd_bound_check)

    p = sub.add_parser("theory", help="evaluate the closed-form tuning and bound formulas", formatter_class=fmt)
    p.add_argument("--L", type=float, required=True, help="smoothness constant")
    p.add_argument("--T", type=int, required=True, help="round count")
    p.add_argument("--rho", type=float, required=True, help="spectral gap")
    p.add_argument("--M", type=int, required=True, help="machine count")
    p.add_argument("--sigma", type=float, default=0.0, help="gradient noise std")
    p.add_argument("--zeta", type=float, default=0.0, help="heterogeneity bound")
    p.add_argument("--D1", type=float, required=True, help="initial distance ||w1 - x*||")
    p.set_defaults(func=_cmd_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GossipGradError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
