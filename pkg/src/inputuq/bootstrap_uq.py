"""Bootstrap quantification of input uncertainty.

Parameter replicates come from one of four schemes (plain, parametric, and
two asymptotic-normal variants).  Each replicate is turned into an estimate
either the classic way, with fresh experiments per replicate, or by
reweighting one existing :class:`~inputuq.monte_carlo.ExperimentBatch`
with likelihood ratios, which costs no experiments at all.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import BootstrapError, DimensionMismatchError, ModelMismatchError, SingularFisherError
from .input_models import Exponential, FittedModel, ParametricModel, Product, as_points
from .monte_carlo import (
    EstimateWithCI,
    ExperimentBatch,
    IntervalKind,
    PerformanceFunction,
    crude_estimate,
    is_estimate,
    run_batch,
    weighted_moments,
)

MAX_REJECTIONS = 1000
# keep (replicates x samples) work arrays around this many elements
_CHUNK_ELEMS = 2_000_000


class Scheme(str, enum.Enum):
    PLAIN = "plain"
    PARAMETRIC = "parametric"
    ASYMPTOTIC_CLOSED = "asym-closed"
    ASYMPTOTIC_EMPIRICAL = "asym-empirical"


class LikelihoodRatioWarning(RuntimeWarning):
    """Likelihood ratios concentrate on very few samples (low ESS)."""


@dataclass(frozen=True, eq=False)
class BootstrapReplicates:
    params: np.ndarray
    estimates: np.ndarray
    ess: np.ndarray
    max_ratio: np.ndarray

    def __post_init__(self):
        B = len(self.params)
        if not (len(self.estimates) == len(self.ess) == len(self.max_ratio) == B):
            raise ValueError("replicate arrays must have equal length")

    def __len__(self) -> int:
        return len(self.params)

    def interval(self, alpha: float = 0.05, point: float | None = None) -> EstimateWithCI:
        """Input-uncertainty interval from the replicate quantiles.

        ``point`` defaults to the replicate median.
        """
        lo, hi = quantile_ci(self.estimates, alpha)
        if point is None:
            point = float(np.median(self.estimates))
        stderr = float(self.estimates.std(ddof=1)) if len(self) > 1 else 0.0
        return EstimateWithCI(point, stderr, lo, hi, alpha, IntervalKind.BOOTSTRAP_QUANTILE)

    def to_csv(self, path: str | Path, param_names: Sequence[str] | None = None) -> None:
        m = self.params.shape[1]
        names = list(param_names) if param_names is not None else [f"theta{i}" for i in range(m)]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", *names, "estimate", "ess", "max_ratio"])
            for i in range(len(self)):
                w.writerow(
                    [i, *(repr(float(v)) for v in self.params[i])]
                    + [repr(float(self.estimates[i])), repr(float(self.ess[i])), repr(float(self.max_ratio[i]))]
                )


def quantile_ci(values, alpha: float = 0.05) -> tuple[float, float]:
    """Empirical ``alpha/2`` and ``1 - alpha/2`` quantiles (Hyndman-Fan type 7)."""
    values = np.asarray(values, dtype=float).ravel()
    if len(values) == 0:
        raise BootstrapError("no replicate values")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0], method="linear")
    return float(lo), float(hi)


def ess(weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    s = w.sum()
    if s == 0:
        raise ValueError("ESS is undefined for all-zero weights")
    w = w / w.max()
    return float(w.sum() ** 2 / (w * w).sum())


def _log_ess(log_w: np.ndarray) -> np.ndarray:
    return 2.0 * logsumexp(log_w, axis=-1) - logsumexp(2.0 * log_w, axis=-1)


def _exponential_coords(model: ParametricModel) -> np.ndarray:
    """Mask over ``model.params`` marking exponential means."""
    if isinstance(model, Exponential):
        return np.array([True])
    if isinstance(model, Product):
        return np.concatenate([_exponential_coords(c) for c in model.components])
    return np.zeros(model.n_params, dtype=bool)


def _redraw_invalid(model: ParametricModel, draw, B: int) -> np.ndarray:
    """Call ``draw(count)`` until ``B`` valid parameter rows are collected."""
    out = draw(B)
    bad = ~model.valid_params(out)
    tries = 0
    while bad.any():
        tries += 1
        if tries > MAX_REJECTIONS:
            raise BootstrapError(
                f"{int(bad.sum())} replicates still invalid after {MAX_REJECTIONS} redraws"
            )
        out[bad] = draw(int(bad.sum()))
        bad = ~model.valid_params(out)
    return out


def _chunked(draw_one_chunk, B: int, k: int) -> np.ndarray:
    rows = max(1, _CHUNK_ELEMS // max(k, 1))
    return np.concatenate([draw_one_chunk(min(rows, B - s)) for s in range(0, B, rows)])


def resample_params(
    scheme: Scheme | str,
    fitted: FittedModel,
    replicates: int,
    rng: np.random.Generator,
    data=None,
    parametrization: str = "mean",
) -> np.ndarray:
    """Draw ``replicates`` bootstrap parameter vectors, shape ``(B, m)``.

    Resampling always uses the original sample size ``k``.  ``data`` is
    required for :attr:`Scheme.PLAIN` and for
    :attr:`Scheme.ASYMPTOTIC_EMPIRICAL` with ``parametrization="rate"``.
    ``parametrization`` only affects the asymptotic schemes: with ``"rate"``
    exponential components are drawn as rates and mapped back to means.
    Asymptotic draws outside the parameter space are redrawn.
    """
    scheme = Scheme(scheme)
    B = int(replicates)
    if B < 2:
        raise BootstrapError(f"need at least 2 replicates, got {B}")
    model = fitted.model
    k = fitted.sample_count

    if scheme is Scheme.PLAIN:
        if data is None:
            raise BootstrapError("plain bootstrap needs the original data")
        x, _ = as_points(data, model.dim)
        if len(x) != k:
            raise BootstrapError(f"data has {len(x)} rows but the fit used {k}")

        def draw(count):
            return _chunked(lambda c: model.mle_params(x[rng.integers(0, k, size=(c, k))]), count, k)

        return _redraw_invalid(model, draw, B)

    if scheme is Scheme.PARAMETRIC:

        def draw(count):
            return _chunked(
                lambda c: model.mle_params(model.sample(c * k, rng).reshape(c, k, model.dim)), count, k
            )

        return _redraw_invalid(model, draw, B)

    # asymptotic normal schemes
    if parametrization not in ("mean", "rate"):
        raise ValueError(f"unknown parametrization {parametrization!r}")
    fisher = fitted.fisher_closed if scheme is Scheme.ASYMPTOTIC_CLOSED else fitted.fisher_empirical
    center = model.params.copy()
    expo = _exponential_coords(model) if parametrization == "rate" else np.zeros(len(center), bool)
    if expo.any():
        # d mean / d rate = -mean^2; transform the information accordingly
        jac = np.where(expo, -center**2, 1.0)
        fisher = fisher * np.outer(jac, jac)
        center = np.where(expo, 1.0 / center, center)
    cov = np.linalg.inv(_check_fisher(fisher)) / k
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularFisherError("inverse Fisher information is not positive definite") from None

    def draw(count):
        z = center + rng.standard_normal((count, len(center))) @ chol.T
        if expo.any():
            with np.errstate(divide="ignore"):
                inv = np.where(z > 0, 1.0 / np.where(z > 0, z, 1.0), -1.0)
            z = np.where(expo, inv, z)
        return z

    return _redraw_invalid(model, draw, B)


def _check_fisher(fisher: np.ndarray) -> np.ndarray:
    fisher = np.asarray(fisher, dtype=float)
    if not np.isfinite(fisher).all():
        raise SingularFisherError("Fisher information has non-finite entries")
    if np.linalg.matrix_rank(fisher) < fisher.shape[0]:
        raise SingularFisherError(f"Fisher information is singular: {fisher.tolist()}")
    return fisher


def _as_model(nominal) -> ParametricModel:
    return nominal.model if isinstance(nominal, FittedModel) else nominal


def classic_replicate_estimates(
    params,
    nominal,
    perf: PerformanceFunction,
    r: int,
    rng: np.random.Generator,
    sampling_model: ParametricModel | None = None,
) -> BootstrapReplicates:
    """Fresh experiments for every replicate: ``r * B`` calls to ``perf``.

    Each replicate samples from its own model, or from ``sampling_model``
    with importance weights when one is given.  Replicate ``i`` uses the
    ``i``-th child stream spawned from ``rng``.  Diagnostics describe the
    importance weights (all ones for crude sampling).
    """
    if r < 1:
        raise ValueError(f"need r >= 1 experiments per replicate, got {r}")
    base = _as_model(nominal)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    streams = rng.spawn(len(params))
    est = np.empty(len(params))
    ess_out = np.empty(len(params))
    max_ratio = np.empty(len(params))
    for i, (theta, sub) in enumerate(zip(params, streams)):
        target = base.with_params(theta)
        if sampling_model is None:
            batch = run_batch(target, target, perf, r, sub)
            est[i] = crude_estimate(batch).point
            ess_out[i], max_ratio[i] = r, 1.0
        else:
            batch = run_batch(sampling_model, target, perf, r, sub)
            est[i] = is_estimate(batch).point
            lw = target.log_density(batch.samples) - batch.sampling_logdensity
            ess_out[i] = float(np.exp(_log_ess(lw)))
            max_ratio[i] = float(np.exp(lw.max()))
    return BootstrapReplicates(params, est, ess_out, max_ratio)


def lr_reuse_estimates(
    params,
    batch: ExperimentBatch,
    warn_ess_fraction: float = 0.01,
    diagnostics: bool = True,
) -> BootstrapReplicates:
    """Reweight one batch to every replicate parameter; no new experiments.

    Replicate ``i`` gets ``mean_j exp(log p(x_j | theta_i) - log q(x_j)) f(x_j)``.
    Diagnostics are taken over the ratios ``p(x_j | theta_i) / p(x_j | theta_hat)``
    to the nominal fit: their effective sample size and their maximum.  A
    :class:`LikelihoodRatioWarning` is issued when some replicate's ESS drops
    below ``warn_ess_fraction * n``; ratios are never clipped.  With
    ``diagnostics=False`` only samples with nonzero output are touched and
    the diagnostic arrays are NaN.
    """
    nominal = batch.nominal
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[1] != nominal.n_params:
        raise ModelMismatchError(
            f"replicates have {params.shape[1]} parameters, nominal model has {nominal.n_params}"
        )
    if batch.samples.shape[1] != nominal.dim:
        raise DimensionMismatchError(nominal.dim, batch.samples.shape[1])
    if not nominal.valid_params(params).all():
        raise BootstrapError("some replicate parameters are outside the parameter space")
    B, n = len(params), batch.size
    hit = batch.outputs != 0
    f_hits = batch.outputs[hit]
    logq_hits = batch.sampling_logdensity[hit]
    est = np.empty(B)
    ess_out = np.full(B, np.nan)
    max_ratio = np.full(B, np.nan)
    cols = batch.samples if diagnostics else batch.samples[hit]
    log_nom = nominal.log_density(cols)
    # rows equal to the fit reuse its own log density, so unit ratios are exact
    at_nominal = (params == nominal.params).all(axis=1)
    rows = max(1, _CHUNK_ELEMS // max(len(cols), 1))
    for s in range(0, B, rows):
        block = params[s : s + rows]
        if len(cols) == 0:
            est[s : s + rows] = 0.0
            continue
        logp = nominal.log_density_batch(block, cols)
        logp[at_nominal[s : s + rows]] = log_nom
        lp_hits = logp[:, hit] if diagnostics else logp
        est[s : s + rows] = weighted_moments(lp_hits - logq_hits, f_hits, n)[0]
        if diagnostics:
            log_ratio = logp - log_nom
            ess_out[s : s + rows] = np.exp(_log_ess(log_ratio))
            max_ratio[s : s + rows] = np.exp(log_ratio.max(axis=1))
    if diagnostics:
        low = ess_out < warn_ess_fraction * n
        if low.any():
            warnings.warn(
                f"{int(low.sum())} of {B} replicates have likelihood-ratio ESS below "
                f"{warn_ess_fraction:g}*n (min {ess_out.min():.3g} of n={n}); "
                "the fitted input model may be unreliable",
                LikelihoodRatioWarning,
                stacklevel=2,
            )
    return BootstrapReplicates(params, est, ess_out, max_ratio)
