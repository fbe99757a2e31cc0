"""Lane-change demo: estimate, simulation-only interval and input-uncertainty
interval as the number of experiments grows."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import lane_change as lc
from ..acceleration import CEConfig, CEResult, cross_entropy_tilt
from ..bootstrap_uq import BootstrapReplicates, Scheme, lr_reuse_estimates, quantile_ci, resample_params
from ..input_models import Exponential, FittedModel, fit_mle
from ..monte_carlo import ExperimentBatch, is_estimate, run_batch
from .config import ExperimentConfig
from .runner import substream, write_csv, write_metadata

CURVE_COLUMNS = [
    "n", "estimate", "stderr", "su_lower", "su_upper", "su_width",
    "iu_lower", "iu_upper", "iu_width", "min_ess", "max_ratio",
]

CE_SETTINGS = CEConfig(severity=lc.relative_closure_margin)

SURROGATE_NOTE = (
    "surrogate AV model and synthetic data: reaction time, deceleration and "
    "generator means are artifact defaults, not field values"
)


@dataclass
class AVDemoResult:
    dataset: list
    fitted: FittedModel
    ce: CEResult
    batch: ExperimentBatch
    replicates: BootstrapReplicates
    rows: list[dict] = field(default_factory=list)
    lr_extra_calls: int = 0


def run_av_demo(
    config: ExperimentConfig,
    threads: int = 1,
    surrogate: lc.SurrogateAVConfig = lc.SurrogateAVConfig(),
    generator=None,
) -> AVDemoResult:
    seed = config.seed
    dataset = lc.synthesize_dataset(config.dataset_size, generator, substream(seed, "av-demo/data"))
    points = lc.to_points(dataset)
    fitted = fit_mle((Exponential, Exponential), points)
    ce = cross_entropy_tilt(
        fitted.model,
        dataclasses.replace(CE_SETTINGS, severity=lambda x: lc.relative_closure_margin(x, surrogate)),
        substream(seed, "av-demo/ce"),
    )
    perf = lc.crash_performance(surrogate)
    n_max = max(config.n_grid) if config.n_grid else config.n
    batch = run_batch(ce.model, fitted, perf, n_max, substream(seed, "av-demo/batch"), threads=threads)
    params = resample_params(
        Scheme(config.schemes[0]), fitted, config.replicates, substream(seed, "av-demo/bootstrap"), data=points
    )
    result = AVDemoResult(dataset, fitted, ce, batch, None)
    grid = config.n_grid or (n_max,)
    for n in grid:
        sub = batch.head(n)
        su = is_estimate(sub, alpha=config.alpha)
        before = perf.calls
        reps = lr_reuse_estimates(params, sub)
        result.lr_extra_calls += perf.calls - before
        lo, hi = quantile_ci(reps.estimates, config.alpha)
        result.rows.append(
            {
                "n": n, "estimate": su.point, "stderr": su.stderr,
                "su_lower": su.lower, "su_upper": su.upper, "su_width": su.width,
                "iu_lower": lo, "iu_upper": hi, "iu_width": hi - lo,
                "min_ess": float(reps.ess.min()), "max_ratio": float(reps.max_ratio.max()),
            }
        )
        if n == n_max:
            result.replicates = reps
    return result


def write_av_demo(result: AVDemoResult, config: ExperimentConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_csv(
        out_dir / "av-demo_curve.csv", CURVE_COLUMNS, [[r[c] for c in CURVE_COLUMNS] for r in result.rows]
    )
    result.ce.trajectory_to_csv(out_dir / "av-demo_ce_trajectory.csv")
    names = ["inv_range_mean", "inv_ttc_mean"]
    result.replicates.to_csv(out_dir / "av-demo_replicates.csv", names)
    lc.write_dataset_csv(result.dataset, out_dir / "av-demo_dataset.csv")
    write_metadata(
        out_dir,
        config,
        {
            "note": SURROGATE_NOTE,
            "fitted_means": [float(v) for v in result.fitted.params],
            "ce_tilt": [float(v) for v in result.ce.tilt],
            "ce_iterations": len(result.ce.trajectory),
            "ce_converged": result.ce.converged,
            "ce_settings": {
                "samples_per_iter": CE_SETTINGS.samples_per_iter,
                "elite_fraction": CE_SETTINGS.elite_fraction,
                "max_iters": CE_SETTINGS.max_iters,
                "smoothing": CE_SETTINGS.smoothing,
                "severity": "relative closure margin",
            },
            "lr_extra_perf_calls": result.lr_extra_calls,
        },
    )
    return path
