"""Cross-entropy search for an exponentially tilted accelerating distribution."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import CrossEntropyError
from .input_models import ParametricModel
from .monte_carlo import ExperimentBatch, _nominal

logger = logging.getLogger(__name__)

CLAMP_FRACTION = 0.95


@dataclass(frozen=True)
class CEConfig:
    """Cross-entropy settings.

    ``severity`` maps an ``(N, d)`` array to ``N`` reals, nonnegative exactly
    on the event set.
    """

    severity: Callable[[np.ndarray], np.ndarray]
    samples_per_iter: int = 2000
    elite_fraction: float = 0.1
    max_iters: int = 50
    smoothing: float = 0.7
    stall_limit: int = 10

    def __post_init__(self):
        if not 0 < self.elite_fraction < 1:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.samples_per_iter * self.elite_fraction < 10:
            raise ValueError("samples_per_iter * elite_fraction must be at least 10")
        if not 0 < self.smoothing <= 1:
            raise ValueError("smoothing must lie in (0, 1]")
        if self.max_iters < 1 or self.stall_limit < 1:
            raise ValueError("max_iters and stall_limit must be positive")


@dataclass(frozen=True)
class CEIteration:
    iteration: int
    level: float
    tilt: np.ndarray
    elite_count: int
    clamped: bool


@dataclass(frozen=True)
class CEResult:
    tilt: np.ndarray
    model: ParametricModel
    trajectory: list[CEIteration] = field(default_factory=list)
    converged: bool = False

    def __iter__(self):
        # allows ``tilt, model = cross_entropy_tilt(...)``
        yield self.tilt
        yield self.model

    def trajectory_to_csv(self, path: str | Path) -> None:
        write_trajectory(self.trajectory, path)


def write_trajectory(trajectory: list[CEIteration], path: str | Path) -> None:
    dim = len(trajectory[0].tilt) if trajectory else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "level", *(f"tilt{i}" for i in range(dim)), "elite_count", "clamped"])
        for it in trajectory:
            w.writerow(
                [it.iteration, repr(float(it.level)), *(repr(float(v)) for v in it.tilt), it.elite_count, int(it.clamped)]
            )


def _clamp(tilt: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, bool]:
    over = tilt >= upper
    if not over.any():
        return tilt, False
    return np.where(over, CLAMP_FRACTION * upper, tilt), True


def cross_entropy_tilt(
    nominal: ParametricModel,
    config: CEConfig,
    rng: np.random.Generator,
) -> CEResult:
    """Tilt ``nominal`` toward the event ``severity >= 0``.

    The level tracked per iteration is the distance to the event,
    ``max(rho-quantile of -severity, 0)``; samples within that distance are
    elites.  The tilt is refit by likelihood-ratio weighted moment matching of
    the elites and smoothed with the previous tilt.  The iteration that first
    reaches level 0 still performs its update, so the result is fitted to
    samples inside the event.  Raises :class:`CrossEntropyError` when the
    level fails to improve ``stall_limit`` times in a row.
    """
    nominal = _nominal(nominal)
    tilt = np.zeros(nominal.dim)
    upper = nominal.tilt_upper_bound()
    best = np.inf
    stall = 0
    trajectory: list[CEIteration] = []
    converged = False
    for it in range(1, config.max_iters + 1):
        current = nominal.tilt(tilt)
        x = current.sample(config.samples_per_iter, rng)
        s = np.asarray(config.severity(x), dtype=float).reshape(len(x))
        level = max(float(np.quantile(-s, config.elite_fraction)), 0.0)
        elite = -s <= level
        xe = x[elite]
        log_w = nominal.log_density(xe) - current.log_density(xe)
        w = np.exp(log_w - log_w.max())
        target_mean = (w[:, None] * xe).sum(axis=0) / w.sum()
        update = nominal.tilt_for_mean(target_mean)
        new_tilt, clamped = _clamp(config.smoothing * update + (1 - config.smoothing) * tilt, upper)
        if clamped:
            logger.warning("cross-entropy iterate %d clamped to %.0f%% of the tilt bound", it, 100 * CLAMP_FRACTION)
        trajectory.append(CEIteration(it, level, new_tilt, int(elite.sum()), clamped))
        tilt = new_tilt
        if level == 0.0:
            converged = True
            break
        if level < best:
            best, stall = level, 0
        else:
            stall += 1
            if stall >= config.stall_limit:
                raise CrossEntropyError(
                    f"level stuck at {best:g} for {stall} iterations", trajectory
                )
    if not converged:
        logger.warning("cross-entropy stopped after %d iterations at level %g", config.max_iters, level)
    return CEResult(tilt, nominal.tilt(tilt), trajectory, converged)


def is_second_moment(batch: ExperimentBatch, target_model: ParametricModel | None = None) -> float:
    """``mean((w * f)^2)``, the quantity a good accelerating distribution keeps small."""
    target = _nominal(target_model) if target_model is not None else batch.nominal
    hit = batch.outputs != 0
    if not hit.any():
        return 0.0
    lw = target.log_density(batch.samples[hit]) - batch.sampling_logdensity[hit]
    log_terms = 2.0 * lw + 2.0 * np.log(np.abs(batch.outputs[hit]))
    m = log_terms.max()
    return float(np.exp(m) * np.exp(log_terms - m).sum() / batch.size)
