"""Parametric input models: densities, sampling, MLE, Fisher information, tilting.

Three families are supported: :class:`Exponential`, :class:`Gaussian`, and
:class:`Product` (independent univariate components stacked into a vector).
Every model exposes a user-facing parameter vector ``params``:

=============  ==========================
family         params
=============  ==========================
Exponential    ``[mean]``
Gaussian       ``[mean, stdev]``
Product        concatenation of the components' params
=============  ==========================

Exponential models are stored by rate internally; the mean is what is
reported, fitted and bootstrapped.

Points are handled as ``(n, d)`` float arrays.  For ``d == 1`` a flat array of
length ``n`` is accepted as ``n`` points.
"""

from __future__ import annotations

import abc
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.linalg import block_diag

from .errors import (
    DataFormatError,
    DimensionMismatchError,
    FitError,
    InvalidParameterError,
    TiltError,
    UnsupportedFamilyError,
)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def as_points(points, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce ``points`` to an ``(n, dim)`` array.

    Returns the array and a flag telling whether a single point was given.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise DimensionMismatchError(dim, 1)
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if dim == 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != dim:
            raise DimensionMismatchError(dim, arr.shape[0])
        return arr.reshape(1, dim), True
    if arr.ndim != 2:
        raise ValueError(f"points must be at most 2-dimensional, got shape {arr.shape}")
    if arr.shape[1] != dim:
        raise DimensionMismatchError(dim, arr.shape[1])
    return arr, False


class ParametricModel(abc.ABC):
    """A distribution p(x | theta) over R^d."""

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @property
    @abc.abstractmethod
    def params(self) -> np.ndarray: ...

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    @property
    @abc.abstractmethod
    def param_names(self) -> list[str]: ...

    @property
    @abc.abstractmethod
    def mean(self) -> np.ndarray: ...

    @abc.abstractmethod
    def with_params(self, theta) -> "ParametricModel":
        """Same family and structure, new parameter vector."""

    @abc.abstractmethod
    def valid_params(self, thetas: np.ndarray) -> np.ndarray:
        """Boolean mask over the leading axes of ``thetas`` (shape ``(..., m)``)."""

    @abc.abstractmethod
    def _logpdf(self, x: np.ndarray) -> np.ndarray:
        """Log density at an ``(n, d)`` array; -inf outside the support."""

    @abc.abstractmethod
    def _features(self, x: np.ndarray) -> np.ndarray:
        """Sufficient statistics plus a constant column, shape ``(n, f)``."""

    @abc.abstractmethod
    def _natural(self, thetas: np.ndarray) -> np.ndarray:
        """Coefficients matching :meth:`_features`, shape ``(B, f)``."""

    @abc.abstractmethod
    def _in_support(self, x: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. points, returned as an ``(n, d)`` array."""

    @abc.abstractmethod
    def mle_params(self, data: np.ndarray) -> np.ndarray:
        """Vectorized MLE: data ``(..., k, d)`` to parameters ``(..., m)``.

        Degenerate batches (e.g. zero spread for a Gaussian) yield parameters
        that fail :meth:`valid_params` instead of raising.
        """

    @abc.abstractmethod
    def fisher_information(self) -> np.ndarray: ...

    @abc.abstractmethod
    def empirical_fisher(self, data) -> np.ndarray: ...

    @abc.abstractmethod
    def tilt(self, t) -> "ParametricModel": ...

    @abc.abstractmethod
    def tilt_for_mean(self, target_mean) -> np.ndarray:
        """Tilt vector whose tilted model has the given mean."""

    @abc.abstractmethod
    def tilt_upper_bound(self) -> np.ndarray:
        """Exclusive upper bound on each tilt coordinate (``inf`` if none)."""

    def log_density(self, points):
        """log p(points | theta); a float for a single point, else an array."""
        x, single = as_points(points, self.dim)
        if np.isnan(x).any():
            raise ValueError("log_density is undefined at NaN points")
        out = self._logpdf(x)
        return float(out[0]) if single else out

    def log_density_batch(self, thetas, points) -> np.ndarray:
        """Log densities for many parameter vectors at once.

        ``thetas`` has shape ``(B, m)``; the result has shape ``(B, n)``.
        Evaluated as one matrix product of natural parameters against
        sufficient statistics, which is what makes likelihood-ratio reuse
        over large batches cheap.
        """
        x, _ = as_points(points, self.dim)
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = self._natural(thetas) @ self._features(x).T
        support = self._in_support(x)
        if not support.all():
            out[:, ~support] = -np.inf
        return out


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value}")
    return value


@dataclass(frozen=True)
class Exponential(ParametricModel):
    """Exponential distribution on [0, inf), stored by rate."""

    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", _check_positive("rate", self.rate))

    @classmethod
    def from_mean(cls, mean: float) -> "Exponential":
        return cls(1.0 / _check_positive("mean", mean))

    @property
    def scale(self) -> float:
        return 1.0 / self.rate

    @property
    def dim(self) -> int:
        return 1

    @property
    def params(self) -> np.ndarray:
        return np.array([1.0 / self.rate])

    @property
    def param_names(self) -> list[str]:
        return ["mean"]

    @property
    def mean(self) -> np.ndarray:
        return np.array([1.0 / self.rate])

    def with_params(self, theta) -> "Exponential":
        (mu,) = np.asarray(theta, dtype=float).reshape(1)
        return Exponential.from_mean(mu)

    def valid_params(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        return np.isfinite(thetas[..., 0]) & (thetas[..., 0] > 0)

    def _in_support(self, x):
        return x[:, 0] >= 0

    def _logpdf(self, x):
        x = x[:, 0]
        with np.errstate(invalid="ignore"):
            out = math.log(self.rate) - self.rate * x
        return np.where(x >= 0, out, -np.inf)

    def _features(self, x):
        return np.column_stack([x[:, 0], np.ones(len(x))])

    def _natural(self, thetas):
        rate = 1.0 / thetas[:, 0]
        return np.column_stack([-rate, np.log(rate)])

    def sample(self, n, rng):
        if n < 1:
            raise ValueError(f"sample count must be >= 1, got {n}")
        return rng.exponential(self.scale, size=(n, 1))

    @classmethod
    def _fit(cls, x: np.ndarray) -> "Exponential":
        if (x < 0).any():
            raise FitError("exponential data must be nonnegative")
        mu = float(x.mean())
        if mu <= 0:
            raise FitError("exponential MLE needs at least one positive value")
        return cls.from_mean(mu)

    def mle_params(self, data):
        return np.asarray(data, dtype=float).mean(axis=-2)

    def fisher_information(self, parametrization: str = "mean") -> np.ndarray:
        if parametrization == "mean":
            return np.array([[self.rate**2]])
        if parametrization == "rate":
            return np.array([[1.0 / self.rate**2]])
        raise ValueError(f"unknown parametrization {parametrization!r}")

    def empirical_fisher(self, data, parametrization: str = "mean") -> np.ndarray:
        x, _ = as_points(data, 1)
        if len(x) == 0:
            raise FitError("empirical Fisher information needs data")
        if parametrization == "rate":
            return np.array([[1.0 / self.rate**2]])
        if parametrization != "mean":
            raise ValueError(f"unknown parametrization {parametrization!r}")
        mu = 1.0 / self.rate
        # -d2/dmu2 of (-log mu - x/mu) = 2x/mu^3 - 1/mu^2
        return np.array([[2.0 * x[:, 0].mean() / mu**3 - 1.0 / mu**2]])

    def tilt(self, t) -> "Exponential":
        (t,) = np.asarray(t, dtype=float).reshape(1)
        if not t < self.rate:
            raise TiltError(f"tilt {t} must be below the rate {self.rate}")
        return Exponential(self.rate - t)

    def tilt_for_mean(self, target_mean):
        (m,) = np.asarray(target_mean, dtype=float).reshape(1)
        return np.array([self.rate - 1.0 / _check_positive("target mean", m)])

    def tilt_upper_bound(self):
        return np.array([self.rate])


@dataclass(frozen=True)
class Gaussian(ParametricModel):
    """Univariate normal distribution, parametrized by mean and stdev."""

    mu: float
    sigma: float

    def __post_init__(self):
        mu = float(self.mu)
        if not math.isfinite(mu):
            raise InvalidParameterError(f"mean must be finite, got {mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", _check_positive("stdev", self.sigma))

    @property
    def dim(self) -> int:
        return 1

    @property
    def params(self) -> np.ndarray:
        return np.array([self.mu, self.sigma])

    @property
    def param_names(self) -> list[str]:
        return ["mean", "stdev"]

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mu])

    def with_params(self, theta) -> "Gaussian":
        mu, sigma = np.asarray(theta, dtype=float).reshape(2)
        return Gaussian(mu, sigma)

    def valid_params(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        return np.isfinite(thetas[..., 0]) & np.isfinite(thetas[..., 1]) & (thetas[..., 1] > 0)

    def _in_support(self, x):
        return np.ones(len(x), dtype=bool)

    def _logpdf(self, x):
        z = (x[:, 0] - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - LOG_SQRT_2PI

    def _features(self, x):
        x = x[:, 0]
        return np.column_stack([x * x, x, np.ones(len(x))])

    def _natural(self, thetas):
        mu, sigma = thetas[:, 0], thetas[:, 1]
        prec = 1.0 / (sigma * sigma)
        return np.column_stack(
            [-0.5 * prec, mu * prec, -0.5 * mu * mu * prec - np.log(sigma) - LOG_SQRT_2PI]
        )

    def sample(self, n, rng):
        if n < 1:
            raise ValueError(f"sample count must be >= 1, got {n}")
        return rng.normal(self.mu, self.sigma, size=(n, 1))

    @classmethod
    def _fit(cls, x: np.ndarray) -> "Gaussian":
        if len(np.unique(x)) < 2:
            raise FitError("Gaussian MLE needs at least two distinct values")
        return cls(float(x.mean()), float(x.std()))

    def mle_params(self, data):
        data = np.asarray(data, dtype=float)[..., 0]
        # divisor k: the true MLE
        return np.stack([data.mean(axis=-1), data.std(axis=-1)], axis=-1)

    def fisher_information(self) -> np.ndarray:
        s2 = self.sigma**2
        return np.array([[1.0 / s2, 0.0], [0.0, 2.0 / s2]])

    def empirical_fisher(self, data) -> np.ndarray:
        x, _ = as_points(data, 1)
        if len(x) == 0:
            raise FitError("empirical Fisher information needs data")
        r = x[:, 0] - self.mu
        s = self.sigma
        cross = 2.0 * r.mean() / s**3
        return np.array(
            [[1.0 / s**2, cross], [cross, 3.0 * (r * r).mean() / s**4 - 1.0 / s**2]]
        )

    def tilt(self, t) -> "Gaussian":
        (t,) = np.asarray(t, dtype=float).reshape(1)
        return Gaussian(self.mu + t * self.sigma**2, self.sigma)

    def tilt_for_mean(self, target_mean):
        (m,) = np.asarray(target_mean, dtype=float).reshape(1)
        return np.array([(m - self.mu) / self.sigma**2])

    def tilt_upper_bound(self):
        return np.array([np.inf])


@dataclass(frozen=True)
class Product(ParametricModel):
    """Independent components; coordinates are the components' in order."""

    components: tuple[ParametricModel, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidParameterError("a product model needs at least one component")
        for c in comps:
            if not isinstance(c, ParametricModel):
                raise InvalidParameterError(f"not a ParametricModel: {c!r}")
        object.__setattr__(self, "components", comps)

    def _slices(self, attr: str) -> list[slice]:
        out, start = [], 0
        for c in self.components:
            size = getattr(c, attr)
            out.append(slice(start, start + size))
            start += size
        return out

    @property
    def dim(self) -> int:
        return sum(c.dim for c in self.components)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([c.params for c in self.components])

    @property
    def param_names(self) -> list[str]:
        return [f"{i}.{name}" for i, c in enumerate(self.components) for name in c.param_names]

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([c.mean for c in self.components])

    def with_params(self, theta) -> "Product":
        theta = np.asarray(theta, dtype=float).reshape(self.n_params)
        return Product(
            tuple(c.with_params(theta[s]) for c, s in zip(self.components, self._slices("n_params")))
        )

    def valid_params(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        ok = np.ones(thetas.shape[:-1], dtype=bool)
        for c, s in zip(self.components, self._slices("n_params")):
            ok &= c.valid_params(thetas[..., s])
        return ok

    def _in_support(self, x):
        ok = np.ones(len(x), dtype=bool)
        for c, s in zip(self.components, self._slices("dim")):
            ok &= c._in_support(x[:, s])
        return ok

    def _logpdf(self, x):
        return sum(c._logpdf(x[:, s]) for c, s in zip(self.components, self._slices("dim")))

    def _features(self, x):
        return np.hstack([c._features(x[:, s]) for c, s in zip(self.components, self._slices("dim"))])

    def _natural(self, thetas):
        return np.hstack(
            [c._natural(thetas[:, s]) for c, s in zip(self.components, self._slices("n_params"))]
        )

    def sample(self, n, rng):
        if n < 1:
            raise ValueError(f"sample count must be >= 1, got {n}")
        return np.hstack([c.sample(n, rng) for c in self.components])

    def mle_params(self, data):
        data = np.asarray(data, dtype=float)
        return np.concatenate(
            [c.mle_params(data[..., s]) for c, s in zip(self.components, self._slices("dim"))],
            axis=-1,
        )

    def fisher_information(self) -> np.ndarray:
        return block_diag(*[c.fisher_information() for c in self.components])

    def empirical_fisher(self, data) -> np.ndarray:
        x, _ = as_points(data, self.dim)
        return block_diag(
            *[c.empirical_fisher(x[:, s]) for c, s in zip(self.components, self._slices("dim"))]
        )

    def tilt(self, t) -> "Product":
        t = np.asarray(t, dtype=float).reshape(self.dim)
        return Product(tuple(c.tilt(t[s]) for c, s in zip(self.components, self._slices("dim"))))

    def tilt_for_mean(self, target_mean):
        m = np.asarray(target_mean, dtype=float).reshape(self.dim)
        return np.concatenate(
            [c.tilt_for_mean(m[s]) for c, s in zip(self.components, self._slices("dim"))]
        )

    def tilt_upper_bound(self):
        return np.concatenate([c.tilt_upper_bound() for c in self.components])


Family = Union[type, Sequence[type]]


@dataclass(frozen=True)
class FittedModel:
    """An MLE fit together with both Fisher information estimates."""

    model: ParametricModel
    sample_count: int
    fisher_closed: np.ndarray
    fisher_empirical: np.ndarray

    def __post_init__(self):
        if self.sample_count < 1:
            raise FitError("a fitted model needs at least one data point")

    @property
    def params(self) -> np.ndarray:
        return self.model.params


def _fit_family(family: Family, x: np.ndarray) -> ParametricModel:
    if isinstance(family, type) and issubclass(family, (Exponential, Gaussian)):
        return family._fit(x[:, 0])
    if isinstance(family, (list, tuple)):
        if len(family) != x.shape[1]:
            raise DimensionMismatchError(len(family), x.shape[1])
        return Product(tuple(_fit_family(f, x[:, [i]]) for i, f in enumerate(family)))
    raise UnsupportedFamilyError(f"cannot fit family {family!r}")


def fit_mle(family: Family, data) -> FittedModel:
    """Maximum-likelihood fit.

    ``family`` is :class:`Exponential`, :class:`Gaussian`, or a sequence of
    those for a product model with one univariate component per column.
    """
    dim = len(family) if isinstance(family, (list, tuple)) else 1
    x, _ = as_points(data, dim)
    if len(x) == 0:
        raise FitError("cannot fit a model to empty data")
    if not np.isfinite(x).all():
        raise FitError("data contains non-finite values")
    model = _fit_family(family, x)
    return FittedModel(
        model=model,
        sample_count=len(x),
        fisher_closed=model.fisher_information(),
        fisher_empirical=model.empirical_fisher(x),
    )


def family_of(model: ParametricModel) -> Family:
    if isinstance(model, Product):
        return tuple(family_of(c) for c in model.components)
    return type(model)


# Free-function spellings of the model methods.

def log_density(model: ParametricModel, point):
    return model.log_density(point)


def sample(model: ParametricModel, count: int, rng: np.random.Generator) -> np.ndarray:
    return model.sample(count, rng)


def fisher_information(model: ParametricModel) -> np.ndarray:
    return model.fisher_information()


def empirical_fisher(model: ParametricModel, data) -> np.ndarray:
    return model.empirical_fisher(data)


def exponential_tilt(model: ParametricModel, tilt) -> ParametricModel:
    return model.tilt(tilt)


def model_to_dict(model) -> dict:
    """JSON-ready description of a model or fitted model; floats kept exact."""
    if isinstance(model, FittedModel):
        return {
            "family": "fitted",
            "model": model_to_dict(model.model),
            "sample_count": model.sample_count,
            "fisher_closed": model.fisher_closed.tolist(),
            "fisher_empirical": model.fisher_empirical.tolist(),
        }
    if isinstance(model, Exponential):
        return {"family": "exponential", "rate": model.rate}
    if isinstance(model, Gaussian):
        return {"family": "gaussian", "mu": model.mu, "sigma": model.sigma}
    if isinstance(model, Product):
        return {"family": "product", "components": [model_to_dict(c) for c in model.components]}
    raise UnsupportedFamilyError(f"cannot serialize {model!r}")


def model_from_dict(d: dict):
    kind = d.get("family")
    if kind == "exponential":
        return Exponential(d["rate"])
    if kind == "gaussian":
        return Gaussian(d["mu"], d["sigma"])
    if kind == "product":
        return Product(tuple(model_from_dict(c) for c in d["components"]))
    if kind == "fitted":
        return FittedModel(
            model=model_from_dict(d["model"]),
            sample_count=int(d["sample_count"]),
            fisher_closed=np.array(d["fisher_closed"], dtype=float),
            fisher_empirical=np.array(d["fisher_empirical"], dtype=float),
        )
    raise UnsupportedFamilyError(f"unknown model family {kind!r}")


def read_points_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read one-point-per-row CSV with a header naming each coordinate."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if not header or any(not h for h in header):
            raise DataFormatError("header has empty column names", row=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, got {len(row)}", row=lineno
                )
            values = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(f"not a number: {cell!r}", row=lineno, column=name) from None
                if not math.isfinite(v):
                    raise DataFormatError(f"non-finite value {cell!r}", row=lineno, column=name)
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path} has a header but no data rows")
    return header, np.array(rows, dtype=float)
