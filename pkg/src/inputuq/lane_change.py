"""Cut-in (lane change) scenario with a kinematic crash surrogate.

The AV under test is replaced by a constant-deceleration-after-delay
model: after the cut-in, the follower closes at speed ``u = R / TTC`` for the
reaction time, then brakes at a fixed deceleration.  A crash happens when the
distance closed before stopping reaches the initial range ``R``.

All numbers here (reaction time, deceleration, generator means) are
surrogate defaults and not measured values.  The input model is two
independent exponentials on ``1/R`` and ``1/TTC``; the lead-vehicle speed is
a fixed constant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InvalidParameterError
from .input_models import Exponential, Product
from .monte_carlo import PerformanceFunction

LEAD_SPEED = 30.0  # m/s
DATASET_SIZE = 12304
DEFAULT_INV_RANGE_MEAN = 0.025  # 1/m
DEFAULT_INV_TTC_MEAN = 0.002  # 1/s
DATASET_COLUMNS = ("v_mps", "inv_range_per_m", "inv_ttc_per_s")


@dataclass(frozen=True)
class LaneChangeSample:
    v: float
    inv_range: float
    inv_ttc: float

    def __post_init__(self):
        if not self.v > 0:
            raise InvalidParameterError(f"velocity must be > 0, got {self.v}")
        if not self.inv_range > 0:
            raise InvalidParameterError(f"inverse range must be > 0, got {self.inv_range}")
        if not self.inv_ttc >= 0:
            raise InvalidParameterError(f"inverse TTC must be >= 0, got {self.inv_ttc}")

    @property
    def range_m(self) -> float:
        return 1.0 / self.inv_range

    @property
    def closing_speed(self) -> float:
        return self.inv_ttc / self.inv_range


@dataclass(frozen=True)
class SurrogateAVConfig:
    reaction_time: float = 0.4  # s
    braking_decel: float = 6.0  # m/s^2

    def __post_init__(self):
        if not self.reaction_time >= 0:
            raise InvalidParameterError("reaction time must be >= 0")
        if not self.braking_decel > 0:
            raise InvalidParameterError("braking deceleration must be > 0")


def default_generator() -> Product:
    return Product(
        (Exponential.from_mean(DEFAULT_INV_RANGE_MEAN), Exponential.from_mean(DEFAULT_INV_TTC_MEAN))
    )


def closure_margin(points, config: SurrogateAVConfig = SurrogateAVConfig()) -> np.ndarray:
    """Distance closed before stopping minus initial range, per ``(1/R, 1/TTC)`` row."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    inv_range, inv_ttc = points[:, 0], points[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rng_m = 1.0 / inv_range
        u = rng_m * inv_ttc
        closed = u * config.reaction_time + u * u / (2.0 * config.braking_decel)
        margin = closed - rng_m
    # infinite range: closure grows like R^2 when closing at all
    at_inf = np.isinf(rng_m)
    if at_inf.any():
        margin[at_inf] = np.where(inv_ttc[at_inf] > 0, np.inf, -np.inf)
    return margin


def relative_closure_margin(points, config: SurrogateAVConfig = SurrogateAVConfig()) -> np.ndarray:
    """Closure margin divided by the initial range: ``tau/TTC + R/(2a TTC^2) - 1``.

    Same sign as :func:`closure_margin` but scale free, which keeps the
    cross-entropy search from chasing vanishing ranges where the absolute
    margin tends to zero without ever crossing into the event.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    inv_range, inv_ttc = points[:, 0], points[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = inv_ttc * config.reaction_time + inv_ttc * inv_ttc / (2.0 * config.braking_decel * inv_range) - 1.0
    zero = inv_range == 0
    if zero.any():
        out[zero] = np.where(inv_ttc[zero] > 0, np.inf, -1.0)
    return out


def crash_array(points, config: SurrogateAVConfig = SurrogateAVConfig()) -> np.ndarray:
    return (closure_margin(points, config) >= 0).astype(float)


def severity(sample: LaneChangeSample, config: SurrogateAVConfig = SurrogateAVConfig()) -> float:
    return float(closure_margin([[sample.inv_range, sample.inv_ttc]], config)[0])


def crash_indicator(sample: LaneChangeSample, config: SurrogateAVConfig = SurrogateAVConfig()) -> int:
    return int(severity(sample, config) >= 0)


def crash_performance(config: SurrogateAVConfig = SurrogateAVConfig()) -> PerformanceFunction:
    return PerformanceFunction(lambda x: crash_array(x, config), name="lane-change-crash", expensive=True)


def synthesize_dataset(
    count: int = DATASET_SIZE,
    generator: Product | None = None,
    rng: np.random.Generator | None = None,
    v: float = LEAD_SPEED,
) -> list[LaneChangeSample]:
    """Synthetic stand-in for field-observed cut-ins."""
    if count < 1:
        raise ValueError("count must be >= 1")
    generator = generator if generator is not None else default_generator()
    rng = rng if rng is not None else np.random.default_rng()
    pts = generator.sample(count, rng)
    # an exact zero inverse range is a probability-zero draw but would break R = 1/x
    pts[:, 0] = np.maximum(pts[:, 0], np.finfo(float).tiny)
    return [LaneChangeSample(v, float(a), float(b)) for a, b in pts]


def to_points(samples: list[LaneChangeSample]) -> np.ndarray:
    """``(n, 2)`` array of ``(1/R, 1/TTC)``, the input-model coordinates."""
    return np.array([[s.inv_range, s.inv_ttc] for s in samples], dtype=float).reshape(-1, 2)


def write_dataset_csv(samples: list[LaneChangeSample], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for s in samples:
            w.writerow([repr(s.v), repr(s.inv_range), repr(s.inv_ttc)])


def read_dataset_csv(path: str | Path) -> list[LaneChangeSample]:
    """Load a dataset CSV, validating units-bearing columns row by row."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in DATASET_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataFormatError(f"missing columns {missing}", row=1)
        for lineno, row in enumerate(reader, start=2):
            vals = {}
            for col in DATASET_COLUMNS:
                try:
                    vals[col] = float(row[col])
                except (TypeError, ValueError):
                    raise DataFormatError(f"not a number: {row[col]!r}", row=lineno, column=col) from None
                if not math.isfinite(vals[col]):
                    raise DataFormatError("non-finite value", row=lineno, column=col)
            for col, ok in (
                ("v_mps", vals["v_mps"] > 0),
                ("inv_range_per_m", vals["inv_range_per_m"] > 0),
                ("inv_ttc_per_s", vals["inv_ttc_per_s"] >= 0),
            ):
                if not ok:
                    raise DataFormatError(f"value {vals[col]} out of range", row=lineno, column=col)
            out.append(LaneChangeSample(vals["v_mps"], vals["inv_range_per_m"], vals["inv_ttc_per_s"]))
    if not out:
        raise DataFormatError(f"{path} contains no samples")
    return out
