"""Crude and importance-sampling estimators with CLT confidence intervals.

:func:`run_batch` is the only place a :class:`PerformanceFunction` is ever
evaluated.  The resulting :class:`ExperimentBatch` stores everything needed
to reweight the same outputs later under other input models.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.special import ndtr

from .errors import DataFormatError, DimensionMismatchError, ModelMismatchError, PerformanceEvaluationError
from .input_models import FittedModel, ParametricModel, model_from_dict, model_to_dict

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)


class PerformanceFunction:
    """Deterministic map from an input point to a real output.

    ``func`` receives an ``(n, d)`` array when ``vectorized`` is true and a
    single length-``d`` point otherwise.  ``calls`` counts individual point
    evaluations, so a test can assert that some code path never ran an
    experiment.
    """

    def __init__(
        self,
        func: Callable,
        name: str = "perf",
        expensive: bool = False,
        vectorized: bool = True,
    ):
        self.func = func
        self.name = name
        self.expensive = expensive
        self.vectorized = vectorized
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def reset_calls(self) -> None:
        with self._lock:
            self._calls = 0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        with self._lock:
            self._calls += len(points)
        if self.vectorized:
            try:
                out = np.asarray(self.func(points), dtype=float).reshape(len(points))
            except Exception as exc:
                raise PerformanceEvaluationError(
                    f"{self.name} failed on a chunk of {len(points)} points: {exc}", points
                ) from exc
            bad = ~np.isfinite(out)
            if bad.any():
                raise PerformanceEvaluationError(
                    f"{self.name} returned a non-finite output", points[np.argmax(bad)]
                )
            return out
        out = np.empty(len(points))
        for i, p in enumerate(points):
            try:
                out[i] = float(self.func(p))
            except Exception as exc:
                raise PerformanceEvaluationError(f"{self.name} failed: {exc}", p) from exc
            if not math.isfinite(out[i]):
                raise PerformanceEvaluationError(f"{self.name} returned a non-finite output", p)
        return out

    def __repr__(self) -> str:
        return f"PerformanceFunction({self.name!r}, calls={self._calls})"


class IntervalKind(str, enum.Enum):
    CLT_SIMULATION_ONLY = "clt_simulation_only"
    BOOTSTRAP_QUANTILE = "bootstrap_quantile"


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    stderr: float
    lower: float
    upper: float
    alpha: float
    kind: IntervalKind

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


NominalModel = Union[ParametricModel, FittedModel]


def _nominal(model: NominalModel) -> ParametricModel:
    return model.model if isinstance(model, FittedModel) else model


@dataclass(frozen=True, eq=False)
class ExperimentBatch:
    """Sampled inputs, their outputs, and the sampling log densities."""

    samples: np.ndarray
    outputs: np.ndarray
    sampling_model: ParametricModel
    sampling_logdensity: np.ndarray
    nominal_model: NominalModel

    def __post_init__(self):
        n = len(self.samples)
        if n < 1:
            raise ValueError("an experiment batch needs at least one sample")
        if len(self.outputs) != n or len(self.sampling_logdensity) != n:
            raise ValueError("samples, outputs and log densities must have equal length")
        if self.samples.ndim != 2 or self.samples.shape[1] != self.sampling_model.dim:
            raise DimensionMismatchError(self.sampling_model.dim, self.samples.shape[-1])
        for arr in (self.samples, self.outputs, self.sampling_logdensity):
            arr.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self.samples)

    @property
    def nominal(self) -> ParametricModel:
        return _nominal(self.nominal_model)

    def head(self, n: int) -> "ExperimentBatch":
        """The first ``n`` experiments, as if the batch had stopped there."""
        if not 1 <= n <= self.size:
            raise ValueError(f"prefix length must be in [1, {self.size}], got {n}")
        return ExperimentBatch(
            self.samples[:n].copy(),
            self.outputs[:n].copy(),
            self.sampling_model,
            self.sampling_logdensity[:n].copy(),
            self.nominal_model,
        )

    def logdensity_consistent(self, rtol: float = 1e-12) -> bool:
        recomputed = self.sampling_model.log_density(self.samples)
        return bool(np.allclose(recomputed, self.sampling_logdensity, rtol=rtol, atol=0))

    def save(self, csv_path: str | Path, metadata: dict | None = None) -> Path:
        """Write the batch CSV plus a ``.json`` sidecar; returns the sidecar path."""
        csv_path = Path(csv_path)
        d = self.samples.shape[1]
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i}" for i in range(d)] + ["output", "log_sampling_density"])
            for x, f, lq in zip(self.samples, self.outputs, self.sampling_logdensity):
                w.writerow([repr(float(v)) for v in x] + [repr(float(f)), repr(float(lq))])
        meta = {
            "n": self.size,
            "dim": d,
            "sampling_model": model_to_dict(self.sampling_model),
            "nominal_model": model_to_dict(self.nominal_model),
        }
        if metadata:
            meta.update(metadata)
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return sidecar

    @classmethod
    def load(cls, csv_path: str | Path) -> "ExperimentBatch":
        csv_path = Path(csv_path)
        meta = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
        d = int(meta["dim"])
        rows = []
        with csv_path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if len(header) != d + 2:
                raise DataFormatError(f"expected {d + 2} columns, got {len(header)}", row=1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise DataFormatError("not a number", row=lineno) from None
        arr = np.array(rows, dtype=float).reshape(-1, d + 2)
        if len(arr) != int(meta["n"]):
            raise DataFormatError(f"sidecar says n={meta['n']}, CSV has {len(arr)} rows")
        return cls(
            samples=arr[:, :d].copy(),
            outputs=arr[:, d].copy(),
            sampling_model=model_from_dict(meta["sampling_model"]),
            sampling_logdensity=arr[:, d + 1].copy(),
            nominal_model=model_from_dict(meta["nominal_model"]),
        )


def run_batch(
    sampling_model: ParametricModel,
    nominal_model: NominalModel,
    perf: PerformanceFunction,
    n: int,
    rng: np.random.Generator,
    threads: int = 1,
    chunk_size: int = 8192,
) -> ExperimentBatch:
    """Draw ``n`` inputs from ``sampling_model`` and run ``perf`` on each.

    Inputs are drawn up front from ``rng``; only the evaluation of ``perf`` is
    split into fixed-size chunks (optionally on a thread pool), so the batch
    is identical for any ``threads``.
    """
    if n < 1:
        raise ValueError(f"batch size must be >= 1, got {n}")
    if _nominal(nominal_model).dim != sampling_model.dim:
        raise DimensionMismatchError(sampling_model.dim, _nominal(nominal_model).dim)
    samples = sampling_model.sample(n, rng)
    logq = sampling_model.log_density(samples)
    chunks = [samples[i : i + chunk_size] for i in range(0, n, chunk_size)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(perf, chunks))
    else:
        parts = [perf(c) for c in chunks]
    outputs = np.concatenate(parts)
    if perf.expensive:
        logger.info("ran %d experiments of %s", n, perf.name)
    return ExperimentBatch(samples, outputs, sampling_model, logq, nominal_model)


def _row_sums(a: np.ndarray) -> np.ndarray:
    return np.fromiter((row.sum() for row in a), dtype=float, count=len(a))


def weighted_moments(lw_hits: np.ndarray, f_hits: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Means and sample variances of ``w * f`` over ``n`` samples.

    ``lw_hits`` holds log weights (shape ``(B, h)``) for the ``h`` samples
    with nonzero output ``f_hits``; the other ``n - h`` terms are zero.  Each
    row is rescaled by its largest log weight before exponentiating.
    """
    lw_hits = np.atleast_2d(lw_hits)
    B, h = lw_hits.shape
    if h == 0:
        return np.zeros(B), np.zeros(B)
    m = lw_hits.max(axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    scaled = np.exp(lw_hits - m) * f_hits
    # row by row, so a row's result does not depend on how many rows came with it
    mean_scaled = _row_sums(scaled) / n
    if n > 1:
        # each zero-output sample contributes (0 - mean)^2
        ss = _row_sums((scaled - mean_scaled[:, None]) ** 2) + (n - h) * mean_scaled**2
        var_scaled = ss / (n - 1)
    else:
        var_scaled = np.zeros(B)
    scale = np.exp(m[:, 0])
    with np.errstate(over="ignore", invalid="ignore"):
        return mean_scaled * scale, var_scaled * scale * scale


def weighted_means(log_target: np.ndarray, batch: ExperimentBatch) -> tuple[np.ndarray, np.ndarray]:
    """Row means and variances of ``exp(log_target - log q) * f`` over a batch.

    ``log_target`` has shape ``(B, n)``.
    """
    log_target = np.atleast_2d(log_target)
    hit = batch.outputs != 0
    lw = log_target[:, hit] - batch.sampling_logdensity[hit]
    return weighted_moments(lw, batch.outputs[hit], batch.size)


def clt_ci(point: float, variance_of_mean: float, alpha: float = 0.05) -> tuple[float, float]:
    """Symmetric two-sided CLT interval ``point -/+ z_{1-alpha/2} * sqrt(var)``."""
    if variance_of_mean < 0:
        raise ValueError("variance must be nonnegative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    half = normal_quantile(1.0 - alpha / 2.0) * math.sqrt(variance_of_mean)
    return point - half, point + half


def _clt_estimate(mean: float, var: float, n: int, alpha: float) -> EstimateWithCI:
    var_of_mean = var / n
    lo, hi = clt_ci(mean, var_of_mean, alpha)
    return EstimateWithCI(mean, math.sqrt(var_of_mean), lo, hi, alpha, IntervalKind.CLT_SIMULATION_ONLY)


def is_estimate(
    batch: ExperimentBatch,
    target_model: ParametricModel | None = None,
    alpha: float = 0.05,
) -> EstimateWithCI:
    """Importance-sampling estimate of E[f] under ``target_model``.

    Defaults to the batch's nominal model.  The interval accounts for
    simulation noise only.
    """
    target = _nominal(target_model) if target_model is not None else batch.nominal
    if target.dim != batch.samples.shape[1]:
        raise DimensionMismatchError(target.dim, batch.samples.shape[1])
    logp = target.log_density(batch.samples)[None, :]
    mean, var = weighted_means(logp, batch)
    return _clt_estimate(float(mean[0]), float(var[0]), batch.size, alpha)


def crude_estimate(batch: ExperimentBatch, alpha: float = 0.05) -> EstimateWithCI:
    """Plain sample mean; the batch must have been drawn from its nominal model."""
    if batch.sampling_model != batch.nominal:
        raise ModelMismatchError(
            f"crude estimate needs sampling model == nominal model, "
            f"got {batch.sampling_model!r} vs {batch.nominal!r}"
        )
    f = batch.outputs
    var = float(f.var(ddof=1)) if batch.size > 1 else 0.0
    return _clt_estimate(float(f.mean()), var, batch.size, alpha)


# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(q: float) -> float:
    # valid for 0 < q <= 0.5
    if q < _P_LOW:
        r = math.sqrt(-2.0 * math.log(q))
        x = (((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]) / (
            (((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0
        )
    else:
        s = q - 0.5
        r = s * s
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    # one Halley step against the exact CDF
    e = 0.5 * math.erfc(-x / SQRT2) - q
    u = e * SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_quantile(u: float) -> float:
    """Inverse standard-normal CDF for ``0 < u < 1``."""
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValueError(f"normal_quantile needs 0 < u < 1, got {u}")
    if u > 0.5:
        # 1 - u is exact here, so the upper tail keeps full accuracy
        return -_lower_quantile(1.0 - u)
    return _lower_quantile(u)


def normal_sf(x):
    """Upper-tail probability of the standard normal, accurate far in the tail."""
    return ndtr(-np.asarray(x, dtype=float))
