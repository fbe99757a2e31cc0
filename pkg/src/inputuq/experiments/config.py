"""Experiment configuration: defaults per experiment, JSON round trip."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..bootstrap_uq import Scheme
from ..errors import ConfigError

EXPERIMENTS = ("table1", "table2", "av-demo", "var-check")
ALL_SCHEMES = [s.value for s in Scheme]


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run.

    Fields an experiment does not use are carried along but ignored.
    ``reps`` is the meta-replication count (outer loop size for var-check).
    """

    experiment: str
    seed: int = 20190
    reps: int = 1000
    k_values: tuple[int, ...] = (10, 20, 100)
    replicates: int = 1000
    n: int = 10_000
    alpha: float = 0.05
    beta: float = 5.0
    schemes: tuple[str, ...] = tuple(ALL_SCHEMES)
    n_grid: tuple[int, ...] = ()
    dataset_size: int = 12304
    inner: int = 2000
    lhs_pairs: int = 200_000
    trend_reps: int = 300
    trend_inner: int = 100
    out_dir: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        for name in ("reps", "replicates", "n", "dataset_size", "inner", "lhs_pairs", "trend_reps", "trend_inner"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "n_grid", tuple(int(v) for v in self.n_grid))
        object.__setattr__(self, "schemes", tuple(str(s) for s in self.schemes))
        if not self.k_values or min(self.k_values) < 1:
            raise ConfigError("k_values must be a nonempty list of positive counts")
        if self.n_grid and min(self.n_grid) < 1:
            raise ConfigError("n_grid entries must be positive")
        for s in self.schemes:
            if s not in ALL_SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; expected one of {ALL_SCHEMES}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("k_values", "n_grid", "schemes"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "experiment" not in d:
            raise ConfigError("config needs an 'experiment' key")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        base = default_config(d["experiment"]).to_dict()
        base.update(d)
        return cls(**base)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def default_config(experiment: str, paper_scale: bool = False) -> ExperimentConfig:
    """Desk-scale defaults; ``paper_scale`` restores the published run sizes."""
    if experiment == "table1":
        return ExperimentConfig(
            experiment, reps=1000, k_values=(10, 20, 100), replicates=1000, schemes=tuple(ALL_SCHEMES)
        )
    if experiment == "table2":
        if paper_scale:
            return ExperimentConfig(
                experiment, reps=10_000, k_values=(100, 1000, 10_000), replicates=1000, n=10_000,
                beta=5.0, schemes=("parametric",),
            )
        return ExperimentConfig(
            experiment, reps=2000, k_values=(100, 1000), replicates=500, n=10_000, beta=5.0,
            schemes=("parametric",),
        )
    if experiment == "av-demo":
        return ExperimentConfig(
            experiment, reps=1, k_values=(12304,), replicates=500, n=100_000,
            n_grid=(1000, 3000, 10_000, 30_000, 100_000), schemes=("parametric",), dataset_size=12304,
        )
    if experiment == "var-check":
        return ExperimentConfig(
            experiment, reps=2000, inner=2000, k_values=(100, 10_000), n=100, beta=2.0,
            n_grid=(100, 1000, 10_000), schemes=("parametric",),
        )
    raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
