"""Command-line driver.

Subcommands ``fit``, ``estimate`` and ``uq`` work on user files; ``table1``,
``table2``, ``av-demo`` and ``var-check`` run the stock experiments.  Every
subcommand writes UTF-8 CSV plus a metadata JSON into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import lane_change as lc
from .bootstrap_uq import Scheme, lr_reuse_estimates, resample_params
from .errors import ConfigError, InputUQError
from .experiments.config import EXPERIMENTS, ExperimentConfig, default_config
from .experiments.runner import fmt, substream, write_csv, write_metadata
from .input_models import (
    Exponential,
    FittedModel,
    Gaussian,
    fit_mle,
    model_from_dict,
    model_to_dict,
    read_points_csv,
)
from .monte_carlo import ExperimentBatch, PerformanceFunction, crude_estimate, is_estimate, run_batch

log = logging.getLogger("inputuq")

FAMILIES = {"exponential": Exponential, "gaussian": Gaussian}
ESTIMATE_COLUMNS = ["kind", "point", "stderr", "lower", "upper", "width", "alpha"]


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    g.add_argument("--config", type=Path, default=None, help="JSON experiment config")
    g.add_argument("--out", type=Path, default=None, help="output directory")
    g.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    g.add_argument("--paper-scale", action="store_true", help="use the published run sizes")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="inputuq", description="Rare-event simulation with input-uncertainty intervals.", parents=[common]
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="MLE fit of a points or lane-change CSV")
    p.add_argument("csv", type=Path)
    p.add_argument(
        "--family", nargs="+", choices=sorted(FAMILIES), default=None,
        help="one family per column (default: exponential for every column)",
    )

    p = sub.add_parser("estimate", parents=[common], help="run one batch and report the SU interval")
    p.add_argument("--model", type=Path, required=True, help="nominal model JSON (from fit)")
    p.add_argument("--sampling", type=Path, default=None, help="sampling model JSON; default: crude MC")
    p.add_argument("--perf", choices=["tail", "crash"], default="tail")
    p.add_argument("--beta", type=float, default=5.0, help="threshold of the tail performance function")
    p.add_argument("-n", "--n", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("uq", parents=[common], help="bootstrap + likelihood-ratio reuse of a saved batch")
    p.add_argument("--batch", type=Path, required=True, help="batch CSV written by estimate")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="parametric")
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--data", type=Path, default=None, help="original data CSV (needed for plain/asym-empirical)")
    p.add_argument("--alpha", type=float, default=0.05)

    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def _points(path: Path) -> tuple[list[str], np.ndarray]:
    header, arr = read_points_csv(path)
    if tuple(header) == lc.DATASET_COLUMNS:
        return list(lc.DATASET_COLUMNS[1:]), lc.to_points(lc.read_dataset_csv(path))
    return header, arr


def _family(names, columns: int):
    if names is None:
        names = ["exponential"] * columns
    if len(names) != columns:
        raise ConfigError(f"--family needs {columns} entries, got {len(names)}")
    fams = tuple(FAMILIES[n] for n in names)
    return fams[0] if columns == 1 else fams


def _out(args, fallback: str) -> Path:
    out = args.out if args.out is not None else Path(fallback)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _perf(kind: str, beta: float) -> PerformanceFunction:
    if kind == "crash":
        return lc.crash_performance()
    return PerformanceFunction(lambda x: (x[:, 0] > beta).astype(float), name=f"tail>{beta:g}")


def _load_model(path: Path):
    d = json.loads(path.read_text(encoding="utf-8"))
    return model_from_dict(d.get("model_spec", d))


def _estimate_row(kind: str, est) -> list:
    return [kind, est.point, est.stderr, est.lower, est.upper, est.width, est.alpha]


def cmd_fit(args) -> int:
    header, data = _points(args.csv)
    fitted = fit_mle(_family(args.family, data.shape[1]), data)
    out = _out(args, "results")
    spec = model_to_dict(fitted)
    doc = {"source": str(args.csv), "columns": header, "param_names": fitted.model.param_names,
           "params": fitted.params.tolist(), "model_spec": spec}
    (out / "fit.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_csv(out / "fit.csv", ["param", "value"], zip(fitted.model.param_names, fitted.params))
    for name, v in zip(fitted.model.param_names, fitted.params):
        print(f"{name} = {fmt(v)}")
    return 0


def cmd_estimate(args) -> int:
    nominal = _load_model(args.model)
    base = nominal.model if isinstance(nominal, FittedModel) else nominal
    sampling = _load_model(args.sampling) if args.sampling else base
    if isinstance(sampling, FittedModel):
        sampling = sampling.model
    seed = 0 if args.seed is None else args.seed
    perf = _perf(args.perf, args.beta)
    batch = run_batch(sampling, nominal, perf, args.n, substream(seed, "estimate"), threads=args.threads)
    crude = args.sampling is None
    est = crude_estimate(batch, args.alpha) if crude else is_estimate(batch, alpha=args.alpha)
    out = _out(args, "results")
    batch.save(out / "batch.csv", {"seed": seed, "perf": perf.name})
    write_csv(out / "estimate.csv", ESTIMATE_COLUMNS, [_estimate_row("crude" if crude else "is", est)])
    print(f"estimate {fmt(est.point)}  stderr {fmt(est.stderr)}  CI [{fmt(est.lower)}, {fmt(est.upper)}]")
    return 0


def cmd_uq(args) -> int:
    batch = ExperimentBatch.load(args.batch)
    if not isinstance(batch.nominal_model, FittedModel):
        raise ConfigError("the batch nominal model is not a fitted model; run fit first")
    data = _points(args.data)[1] if args.data else None
    seed = 0 if args.seed is None else args.seed
    params = resample_params(Scheme(args.scheme), batch.nominal_model, args.replicates,
                             substream(seed, "uq/bootstrap"), data=data)
    reps = lr_reuse_estimates(params, batch)
    su = is_estimate(batch, alpha=args.alpha)
    iu = reps.interval(args.alpha, point=su.point)
    out = _out(args, "results")
    reps.to_csv(out / "replicates.csv", batch.nominal.param_names)
    write_csv(out / "uq.csv", ESTIMATE_COLUMNS, [_estimate_row("simulation", su), _estimate_row("input", iu)])
    print(f"SU [{fmt(su.lower)}, {fmt(su.upper)}]  input [{fmt(iu.lower)}, {fmt(iu.upper)}]"
          f"  min ESS {fmt(float(np.min(reps.ess)))}")
    return 0


def experiment_config(args) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.load(args.config)
        if config.experiment != args.command:
            raise ConfigError(f"config is for {config.experiment!r}, not {args.command!r}")
    else:
        config = default_config(args.command, paper_scale=args.paper_scale)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.out is not None:
        config = config.replace(out_dir=str(args.out))
    return config


def cmd_experiment(args) -> int:
    from .experiments.av_demo import run_av_demo, write_av_demo
    from .experiments.tables import run_table1, run_table2, write_coverage
    from .experiments.variance import run_variance_decomposition_check, write_variance

    config = experiment_config(args)
    out = Path(config.out_dir)
    if config.experiment == "table1":
        path = write_coverage(run_table1(config, args.threads), config, out)
    elif config.experiment == "table2":
        res = run_table2(config, args.threads)
        path = write_coverage(res.reports, config, out, {
            "truth": res.truth, "perf_calls": res.perf_calls, "lr_extra_perf_calls": res.lr_extra_calls,
        })
    elif config.experiment == "av-demo":
        path = write_av_demo(run_av_demo(config, args.threads), config, out)
    else:
        path = write_variance(run_variance_decomposition_check(config, args.threads), config, out)
    print(path.read_text(encoding="utf-8"), end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    handlers = {"fit": cmd_fit, "estimate": cmd_estimate, "uq": cmd_uq}
    try:
        return handlers.get(args.command, cmd_experiment)(args)
    except (InputUQError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
