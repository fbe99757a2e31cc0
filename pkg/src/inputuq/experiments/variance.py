"""Nested Monte Carlo check of the total-variance split into input and
simulation terms, on the Gaussian tail P(xi > beta) with crude sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..input_models import Gaussian, fit_mle
from .config import ExperimentConfig
from .runner import map_replications, write_csv, write_metadata
from .tables import gaussian_tail_perf

COLUMNS = ["section", "k", "n", "outer", "inner", "total", "input_term", "simulation_term", "gap", "simulation_share"]
_LHS_BLOCK = 1000


@dataclass(frozen=True)
class DecompositionRow:
    section: str
    k: int
    n: int
    outer: int
    inner: int
    total: float  # NaN when not measured independently
    input_term: float
    simulation_term: float

    @property
    def gap(self) -> float:
        return abs(self.total - (self.input_term + self.simulation_term)) / self.total

    @property
    def simulation_share(self) -> float:
        return self.simulation_term / (self.input_term + self.simulation_term)

    def row(self) -> list:
        return [
            self.section, self.k, self.n, self.outer, self.inner, self.total,
            self.input_term, self.simulation_term, self.gap, self.simulation_share,
        ]


@dataclass
class VarianceReport:
    main: DecompositionRow
    n_trend: list[DecompositionRow] = field(default_factory=list)
    k_trend: list[DecompositionRow] = field(default_factory=list)

    def rows(self) -> list[DecompositionRow]:
        return [self.main, *self.n_trend, *self.k_trend]


def _nested_terms(beta, k, n, outer, inner, seed, label, threads) -> tuple[float, float]:
    """Input and simulation terms from ``outer`` fits times ``inner`` re-estimates."""
    truth = Gaussian(0.0, 1.0)

    def one(i, rng):
        fitted = fit_mle(Gaussian, truth.sample(k, rng))
        perf = gaussian_tail_perf(beta)
        g = perf(fitted.model.sample(inner * n, rng)).reshape(inner, n).mean(axis=1)
        return g.mean(), g.var(ddof=1)

    res = np.array(map_replications(one, outer, seed, label, threads))
    sim = float(res[:, 1].mean())
    # the variance of inner means still carries sim/inner of simulation noise
    inp = float(res[:, 0].var(ddof=1) - sim / inner)
    return inp, sim


def _total_variance(beta, k, n, pairs, seed, label, threads) -> float:
    """Variance of the plug-in estimate over independent (data, simulation) pairs."""
    truth = Gaussian(0.0, 1.0)
    blocks = -(-pairs // _LHS_BLOCK)

    def one(i, rng):
        size = min(_LHS_BLOCK, pairs - i * _LHS_BLOCK)
        data = truth.sample(size * k, rng).reshape(size, k, 1)
        theta = truth.mle_params(data)
        z = rng.standard_normal((size, n))
        xi = theta[:, :1] + theta[:, 1:] * z
        perf = gaussian_tail_perf(beta)
        return perf(xi.reshape(-1, 1)).reshape(size, n).mean(axis=1)

    g = np.concatenate(map_replications(one, blocks, seed, label, threads))
    return float(g.var(ddof=1))


def run_variance_decomposition_check(config: ExperimentConfig, threads: int = 1) -> VarianceReport:
    beta, seed = config.beta, config.seed
    k0, n0 = config.k_values[0], config.n
    inp, sim = _nested_terms(beta, k0, n0, config.reps, config.inner, seed, "var-check/main", threads)
    total = _total_variance(beta, k0, n0, config.lhs_pairs, seed, "var-check/total", threads)
    report = VarianceReport(DecompositionRow("main", k0, n0, config.reps, config.inner, total, inp, sim))
    nan = float("nan")
    for n in config.n_grid:
        inp, sim = _nested_terms(
            beta, k0, n, config.trend_reps, config.trend_inner, seed, f"var-check/n={n}", threads
        )
        report.n_trend.append(DecompositionRow("n_trend", k0, n, config.trend_reps, config.trend_inner, nan, inp, sim))
    n_fixed = max(config.n_grid) if config.n_grid else n0
    for k in config.k_values:
        inp, sim = _nested_terms(
            beta, k, n_fixed, config.trend_reps, config.trend_inner, seed, f"var-check/k={k}", threads
        )
        report.k_trend.append(
            DecompositionRow("k_trend", k, n_fixed, config.trend_reps, config.trend_inner, nan, inp, sim)
        )
    return report


def write_variance(report: VarianceReport, config: ExperimentConfig, out_dir: Path) -> Path:
    path = write_csv(out_dir / "var-check.csv", COLUMNS, [r.row() for r in report.rows()])
    write_metadata(out_dir, config)
    return path
