"""Coverage studies: bootstrap schemes on an exponential mean, and the
Gaussian-tail problem with closed-form, likelihood-ratio and
simulation-only intervals."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..bootstrap_uq import Scheme, lr_reuse_estimates, quantile_ci, resample_params
from ..input_models import Exponential, Gaussian, fit_mle
from ..monte_carlo import PerformanceFunction, is_estimate, normal_sf, run_batch
from .config import ExperimentConfig
from .runner import COVERAGE_COLUMNS, CoverageReport, map_replications, write_csv, write_metadata

TABLE1_TRUE_MEAN = 1.0


def run_table1(config: ExperimentConfig, threads: int = 1) -> list[CoverageReport]:
    """Coverage of the true exponential mean by replicate-quantile intervals.

    Within one replication every scheme sees the same data set.
    """
    truth = Exponential.from_mean(TABLE1_TRUE_MEAN)
    schemes = [Scheme(s) for s in config.schemes]
    reports = []
    for k in config.k_values:

        def one(i, rng, k=k):
            data = truth.sample(k, rng)
            fitted = fit_mle(Exponential, data)
            out = []
            for scheme, sub in zip(schemes, rng.spawn(len(schemes))):
                params = resample_params(scheme, fitted, config.replicates, sub, data=data)
                lo, hi = quantile_ci(params[:, 0], config.alpha)
                out.append((lo <= TABLE1_TRUE_MEAN <= hi, hi - lo))
            return out

        results = map_replications(one, config.reps, config.seed, f"table1/k={k}", threads)
        for j, scheme in enumerate(schemes):
            reports.append(
                CoverageReport.from_hits(
                    scheme.value, k, [r[j][0] for r in results], [r[j][1] for r in results]
                )
            )
    return reports


@dataclass(frozen=True)
class Table2Result:
    reports: list[CoverageReport]
    truth: float
    perf_calls: int
    lr_extra_calls: int


def gaussian_tail_perf(beta: float) -> PerformanceFunction:
    return PerformanceFunction(lambda x: (x[:, 0] > beta).astype(float), name=f"tail>{beta:g}")


def run_table2(config: ExperimentConfig, threads: int = 1) -> Table2Result:
    """Coverage and width of CF, LR and SU intervals for P(xi > beta), xi ~ N(0, 1).

    Per replication: fit (mu, sigma) to k draws, draw bootstrap replicates,
    run one importance-sampling batch of n experiments from N(beta, sigma_hat),
    then form

    * CF: replicate quantiles of the exact tail probability per replicate,
    * LR: replicate quantiles of likelihood-ratio reuse of the batch,
    * SU: the CLT interval of the batch estimate alone.

    CF and LR share the replicate parameters.
    """
    beta = config.beta
    truth = float(normal_sf(beta))
    scheme = Scheme(config.schemes[0])
    reports = []
    perf_calls = 0
    lr_extra = 0
    for k in config.k_values:

        def one(i, rng, k=k):
            s_data, s_boot, s_batch = rng.spawn(3)
            data = Gaussian(0.0, 1.0).sample(k, s_data)
            fitted = fit_mle(Gaussian, data)
            params = resample_params(scheme, fitted, config.replicates, s_boot, data=data)
            perf = gaussian_tail_perf(beta)
            sampling = Gaussian(beta, fitted.model.sigma)
            batch = run_batch(sampling, fitted, perf, config.n, s_batch)
            su = is_estimate(batch, alpha=config.alpha)
            cf = quantile_ci(normal_sf((beta - params[:, 0]) / params[:, 1]), config.alpha)
            before = perf.calls
            lr_reps = lr_reuse_estimates(params, batch, diagnostics=False)
            extra = perf.calls - before
            lr = quantile_ci(lr_reps.estimates, config.alpha)
            return {
                "CF": (cf[0] <= truth <= cf[1], cf[1] - cf[0]),
                "LR": (lr[0] <= truth <= lr[1], lr[1] - lr[0]),
                "SU": (su.covers(truth), su.width),
                "calls": perf.calls,
                "extra": extra,
            }

        results = map_replications(one, config.reps, config.seed, f"table2/k={k}", threads)
        for method in ("CF", "LR", "SU"):
            reports.append(
                CoverageReport.from_hits(
                    method, k, [r[method][0] for r in results], [r[method][1] for r in results]
                )
            )
        perf_calls += sum(r["calls"] for r in results)
        lr_extra += sum(r["extra"] for r in results)
    return Table2Result(reports, truth, perf_calls, lr_extra)


def write_coverage(reports: list[CoverageReport], config: ExperimentConfig, out_dir: Path, extra=None) -> Path:
    path = write_csv(out_dir / f"{config.experiment}.csv", COVERAGE_COLUMNS, [r.row() for r in reports])
    write_metadata(out_dir, config, extra)
    return path
