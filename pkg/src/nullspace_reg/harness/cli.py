"""``nullspace-reg`` command line.

Every subcommand accepts ``--config file.json``; keys use the long option
names with dashes replaced by underscores, and explicit flags override the
file. The exit status is 0 only when every pass flag in the output is true.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path


from .. import filters
from ..errors import ConfigError, ContractViolation, IntegrityError, ParameterError, TrainingStalled
from ..filters import FilterSpec
from ..linop import DenseOperator
from ..network import ApproximateProjector, FeedForwardNet, NullSpaceNetwork
from ..regpipeline import ParamChoice
from ..training import TrainConfig, TrainingSet, piecewise_constant_phantoms, train
from . import reports
from .experiments import (
    CONVERGENCE_DELTAS,
    DEFAULT_DELTAS,
    RateExperimentConfig,
    run_consistency_check,
    run_convergence_experiment,
    run_rate_experiment,
)
from .problems import ProblemSpec, make_problem

log = logging.getLogger("nullspace_reg")

DEFAULTS = {
    "problem": "random:64,96,48",
    "operator_csv": None,
    "seed": 0,
    "out_dir": "out",
    # train
    "epochs": 500,
    "lr": 0.01,
    "reg_weight": 1e-3,
    "mode": "exact",
    "phantoms": 20,
    "depth": 3,
    "out": None,
    # rates / converge
    "filter": "tsvd",
    "mu": 0.5,
    "rho": 1.0,
    "deltas": None,
    "trials": 20,
    "network": None,
    "projector": "exact",
    "q_filter": "tikhonov",
    "phi_exponent": 2.0,
    "constant_d": 1.0,
    "slope_tol": 0.1,
    # consistency
    "samples": 1000,
    "phi_alpha": None,
    # verify-filters
    "lambda_max": 1.0,
}


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--problem", help="random:<m>,<n>,<rank> or deconv:<n>,<width>,<keep_rows>")
    p.add_argument("--operator-csv", help="load the operator from a CSV matrix instead of --problem")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nullspace-reg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a null-space network on piecewise-constant phantoms")
    _add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--reg-weight", type=float)
    p.add_argument("--mode", help="exact or regularized:<alpha>[:<filter>]")
    p.add_argument("--phantoms", type=int, help="number of training phantoms")
    p.add_argument("--depth", type=int)
    p.add_argument("--out", help="network JSON path (default <out-dir>/net.json)")

    p = sub.add_parser("rates", help="convergence-rate experiment")
    _add_common(p)
    p.add_argument("--filter", help="tikhonov, tsvd, landweber or landweber:<step>")
    p.add_argument("--mu", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--deltas", help="comma-separated decreasing noise levels")
    p.add_argument("--trials", type=int)
    p.add_argument("--network", help="network JSON from 'train' (default: zero network)")
    p.add_argument("--projector", choices=["exact", "approximate"])
    p.add_argument("--q-filter", help="filter for the approximate projector")
    p.add_argument("--phi-exponent", type=float, help="approximate projector uses phi(alpha) = alpha**p")
    p.add_argument("--constant-d", type=float)
    p.add_argument("--slope-tol", type=float)

    p = sub.add_parser("converge", help="convergence toward the M-generalized inverse as delta -> 0")
    _add_common(p)
    p.add_argument("--filter")
    p.add_argument("--mu", type=float, help="smoothness used by the parameter choice")
    p.add_argument("--rho", type=float)
    p.add_argument("--constant-d", type=float)
    p.add_argument("--deltas")
    p.add_argument("--trials", type=int)
    p.add_argument("--network")

    p = sub.add_parser("consistency", help="data-consistency check of a null-space network")
    _add_common(p)
    p.add_argument("--network")
    p.add_argument("--samples", type=int)
    p.add_argument("--projector", choices=["exact", "approximate"])
    p.add_argument("--q-filter")
    p.add_argument("--phi-alpha", type=float)

    p = sub.add_parser("verify-filters", help="check filter axioms and rate conditions, JSON to stdout")
    p.add_argument("--config")
    p.add_argument("--filter")
    p.add_argument("--mu", type=float)
    p.add_argument("--lambda-max", type=float)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        opts.update(cfg)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            opts[key] = value
    return opts


def _deltas(value, fallback):
    if value is None:
        return tuple(fallback)
    if isinstance(value, str):
        return tuple(float(v) for v in value.split(",") if v.strip())
    return tuple(float(v) for v in value)


def _problem(opts):
    if opts["operator_csv"]:
        return None, DenseOperator.from_csv(opts["operator_csv"])
    spec = opts["problem"]
    spec = ProblemSpec.from_dict(spec) if isinstance(spec, dict) else ProblemSpec.parse(spec, seed=opts["seed"])
    return spec, make_problem(spec)


# ------------------------------------------------------------------ commands
def cmd_train(opts) -> bool:
    _, op = _problem(opts)
    out_dir = Path(opts["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = TrainConfig.parse_mode(opts["mode"])
    config = TrainConfig(opts["lr"], opts["epochs"], opts["reg_weight"], opts["seed"], mode)
    phantoms = piecewise_constant_phantoms(op.cols, opts["phantoms"], seed=opts["seed"])
    net0 = FeedForwardNet.default(op.cols, depth=opts["depth"], seed=opts["seed"])
    started = time.perf_counter()
    try:
        net, history = train(net0, op, TrainingSet(phantoms), config)
    except TrainingStalled as exc:
        reports.write_csv(out_dir / "loss_history.csv", ["epoch", "data_term", "reg_term", "total"],
                          [(i, h.data_term, h.reg_term, h.total) for i, h in enumerate(exc.history)])
        raise
    phi = NullSpaceNetwork(net, op)
    net_path = Path(opts["out"]) if opts["out"] else out_dir / "net.json"
    net_path.parent.mkdir(parents=True, exist_ok=True)
    phi.save(net_path)
    reports.write_csv(out_dir / "loss_history.csv", ["epoch", "data_term", "reg_term", "total"],
                      [(i, h.data_term, h.reg_term, h.total) for i, h in enumerate(history)])
    ok = history[-1].total <= history[0].total
    summary = {"network": str(net_path), "initial": history[0].total, "final": history[-1].total,
               "final_data_term": history[-1].data_term, "seconds": time.perf_counter() - started, "pass": ok}
    reports.write_json(out_dir / "train.json", summary)
    print(json.dumps(summary, indent=2))
    return ok


def cmd_rates(opts) -> bool:
    spec, op = _problem(opts)
    config = RateExperimentConfig(
        problem=spec if spec is not None else RateExperimentConfig().problem,
        filter=FilterSpec.parse(opts["filter"]),
        smoothness_mu=opts["mu"],
        source_radius_rho=opts["rho"],
        delta_grid=_deltas(opts["deltas"], DEFAULT_DELTAS),
        trials_per_delta=opts["trials"],
        network_path=opts["network"],
        projector_mode=opts["projector"],
        q_filter=FilterSpec.parse(opts["q_filter"]),
        phi_exponent=opts["phi_exponent"],
        constant_d=opts["constant_d"],
        slope_tolerance=opts["slope_tol"],
        seed=opts["seed"],
    )
    report = run_rate_experiment(config, operator=op)
    paths = reports.write_rate_report(report, opts["out_dir"], config.to_dict())
    print(json.dumps({**report.summary(), "files": paths}, indent=2))
    return report.all_passed


def cmd_converge(opts) -> bool:
    _, op = _problem(opts)
    table = run_convergence_experiment(
        op,
        FilterSpec.parse(opts["filter"]),
        network=opts["network"],
        delta_grid=_deltas(opts["deltas"], CONVERGENCE_DELTAS),
        trials=opts["trials"],
        seed=opts["seed"],
        choice=ParamChoice(opts["mu"], opts["rho"], opts["constant_d"]),
    )
    out_dir = Path(opts["out_dir"])
    reports.write_csv(out_dir / "converge.csv", ["delta", "alpha", "sup_error"],
                      zip(table.deltas, table.alphas, table.sup_errors))
    reports.write_json(out_dir / "converge.json", table.summary())
    reports.write_loglog_svg(out_dir / "converge.svg", table.deltas, {"sup error": table.sup_errors},
                             title="sup error vs delta")
    print(json.dumps(table.summary(), indent=2))
    return table.passed


def cmd_consistency(opts) -> bool:
    _, op = _problem(opts)
    if opts["network"] is None:
        raise ConfigError("consistency needs --network")
    phi = NullSpaceNetwork.load(opts["network"], op)
    if opts["projector"] == "approximate":
        if opts["phi_alpha"] is None:
            raise ConfigError("approximate projector needs --phi-alpha")
        phi = phi.with_projector(ApproximateProjector(FilterSpec.parse(opts["q_filter"]), opts["phi_alpha"]))
    report = run_consistency_check(op, phi, samples=opts["samples"], seed=opts["seed"])
    reports.write_json(Path(opts["out_dir"]) / "consistency.json", report.summary())
    print(json.dumps(report.summary(), indent=2))
    return report.passed or not report.required


def cmd_verify_filters(opts) -> bool:
    spec = FilterSpec.parse(opts["filter"])
    lam_max = opts["lambda_max"]
    alpha_grid, lam_grid = filters.axiom_grids(lam_max)
    axioms = filters.verify_filter_axioms(spec, lam_max, alpha_grid, lam_grid)
    rates = filters.verify_rate_conditions(spec, opts["mu"], lam_max)
    payload = {"axioms": axioms.to_dict(), "rate_conditions": rates.to_dict()}
    print(json.dumps(payload, indent=2))
    return axioms.passed and rates.passed


COMMANDS = {
    "train": cmd_train,
    "rates": cmd_rates,
    "converge": cmd_converge,
    "consistency": cmd_consistency,
    "verify-filters": cmd_verify_filters,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        ok = COMMANDS[args.command](opts)
    except (ConfigError, ContractViolation, ParameterError, IntegrityError, TrainingStalled) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
