"""Command-line interface: fit one model, run a benchmark, or simulate data.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench as bench_mod
from . import data as data_mod
from . import models as models_mod
from . import optim as optim_mod


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hmmopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="estimate one model with one optimizer")
    fit.add_argument("--model", required=True, choices=sorted(models_mod.MODELS))
    fit.add_argument("--optimizer", default="qnem", choices=sorted(optim_mod.OPTIMIZERS))
    fit.add_argument("--seed", type=int, default=0, help="seed for the random start")
    fit.add_argument("--data", help="sequence file (default: the model's bundled/simulated data)")
    fit.add_argument("--sim-seed", type=int, default=1, help="seed for default simulated datasets")
    fit.add_argument("--reltol", type=float, default=1.49e-8)
    fit.add_argument("--max-iter", type=int, default=500)
    fit.add_argument("--config", help="optimizer config file (key = value lines)")

    brun = sub.add_parser("bench", help="multi-start benchmark, all optimizers paired")
    brun.add_argument("--model", required=True, choices=sorted(models_mod.MODELS))
    brun.add_argument("--optimizer", action="append", choices=sorted(optim_mod.OPTIMIZERS),
                      help="repeatable; default: all four")
    brun.add_argument("--n-starts", type=int, default=1000)
    brun.add_argument("--seed", type=int, default=0, help="master seed for the shared starts")
    brun.add_argument("--data", help="sequence file (default: the model's bundled/simulated data)")
    brun.add_argument("--sim-seed", type=int, default=1)
    brun.add_argument("--reltol", type=float, default=1.49e-8)
    brun.add_argument("--max-iter", type=int, default=500)
    brun.add_argument("--config", help="optimizer config file (key = value lines)")
    brun.add_argument("--out", help="report file prefix (default: <model>_<timestamp>)")
    brun.add_argument("--no-timing", action="store_true",
                      help="zero the timing column so reports hash identically")

    sim = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    sim.add_argument("--model", required=True, choices=sorted(models_mod.MODELS))
    sim.add_argument("--length", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--theta", help="comma-separated parameter values (model order)")
    sim.add_argument("--f", type=float, help="HBD fraction (hbd model)")
    sim.add_argument("--a", type=float, help="transition parameter (umbrella/hbd)")
    sim.add_argument("--b", type=float, help="emission error (umbrella)")
    sim.add_argument("--spacing", type=float, default=0.1, help="position spacing in cM (hbd)")
    sim.add_argument("--eps", type=float, default=1e-3, help="genotyping error rate (hbd)")
    return parser


def _optimizer_config(args) -> optim_mod.OptimizerConfig:
    cfg = optim_mod.load_config(args.config) if args.config else optim_mod.OptimizerConfig()
    if args.reltol != 1.49e-8 or not args.config:
        cfg.reltol = args.reltol
    if args.max_iter != 500 or not args.config:
        cfg.max_iter = args.max_iter
    return cfg


def _cmd_fit(args) -> int:
    model = models_mod.get_model(args.model)
    seq = (data_mod.read_sequence(args.data, model) if args.data
           else data_mod.default_sequence(model, sim_seed=args.sim_seed))
    ocfg = _optimizer_config(args)
    start = model.start_sampler(np.random.default_rng(args.seed))
    kwargs = {"crit": ocfg.stop(), "max_iter": ocfg.max_iter}
    if args.optimizer in ("qn", "qnem"):
        kwargs["armijo"] = ocfg.armijo()
    if args.optimizer == "squarem":
        kwargs["max_halvings"] = ocfg.squarem_max_halvings
    rec = optim_mod.run_optimizer(args.optimizer, model, seq, start, **kwargs)
    print(f"model      : {args.model}")
    print(f"optimizer  : {args.optimizer}")
    print(f"converged  : {rec.converged}" + (f" (error: {rec.error})" if rec.error else ""))
    print(f"iterations : {rec.iterations}")
    print(f"loglik     : {rec.final_loglik:.6f}")
    print(f"NLL        : {-rec.final_loglik:.1f}")
    for name, value in zip(model.param_names, rec.final_theta.values):
        print(f"  {name:<10s} {value:.6g}")
    return 0


def _cmd_bench(args) -> int:
    cfg = bench_mod.BenchConfig(
        model=args.model,
        optimizers=tuple(args.optimizer) if args.optimizer else ("baum-welch", "squarem", "qn", "qnem"),
        n_starts=args.n_starts,
        master_seed=args.seed,
        dataset=args.data if args.data else "default",
        sim_seed=args.sim_seed,
        optimizer_config=_optimizer_config(args),
    )
    report = bench_mod.run_bench(cfg)
    paths = bench_mod.write_reports(report, args.out, zero_timing=args.no_timing)
    print(bench_mod.emit_report(report, "markdown", zero_timing=args.no_timing))
    print("wrote: " + ", ".join(paths))
    return 0


def _cmd_simulate(args) -> int:
    model = models_mod.get_model(args.model)
    if args.theta:
        theta = np.array([float(v) for v in args.theta.split(",")], dtype=float)
    elif args.model == "hbd":
        theta = np.array([args.f if args.f is not None else 0.0625,
                          args.a if args.a is not None else 0.064])
    elif args.model == "umbrella":
        theta = np.array([args.a if args.a is not None else 0.3,
                          args.b if args.b is not None else 0.2])
    else:
        raise SystemExit("--theta is required for geyser models")
    if theta.size != model.param_dim:
        print(f"error: {args.model} takes {model.param_dim} parameters, got {theta.size}",
              file=sys.stderr)
        return 1
    if args.model == "hbd":
        sim = data_mod.SimConfig(model="hbd", theta=theta, length=args.length,
                                 seed=args.seed, spacing_cm=args.spacing, eps=args.eps)
        seq = data_mod.simulate_hbd(sim)
    else:
        seq = data_mod.simulate_discrete(model, theta, args.length, args.seed)
    data_mod.write_sequence(args.out, seq, model)
    print(f"wrote {len(seq)} observations to {args.out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"fit": _cmd_fit, "bench": _cmd_bench, "simulate": _cmd_simulate}
    try:
        code = handlers[args.command](args)
    except (data_mod.DataCorrupt, models_mod.MissingPositions, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
