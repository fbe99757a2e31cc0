"""Seeded meta-replication runner and output writers.

Every replication gets its own generator, seeded from
``(master seed, sha256(label) as 64-bit int, replication index)`` through a
:class:`numpy.random.SeedSequence`.  Results are collected by index, so the
output does not depend on how many threads ran them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np
import scipy

from .. import __version__
from .config import ExperimentConfig

T = TypeVar("T")


def label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")


def substream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, label_key(label), index]))


def map_replications(
    fn: Callable[[int, np.random.Generator], T],
    reps: int,
    seed: int,
    label: str,
    threads: int = 1,
) -> list[T]:
    """Run ``fn(index, rng)`` for every replication index, in index order."""

    def one(i: int) -> T:
        return fn(i, substream(seed, label, i))

    if threads <= 1:
        return [one(i) for i in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(reps)))


@dataclass(frozen=True)
class CoverageReport:
    method: str
    k: int
    coverage: float
    mean_width: float
    reps: int

    @property
    def coverage_se(self) -> float:
        c = self.coverage
        return math.sqrt(c * (1.0 - c) / self.reps)

    @classmethod
    def from_hits(cls, method: str, k: int, hits: Sequence[bool], widths: Sequence[float]) -> "CoverageReport":
        hits = np.asarray(hits, dtype=bool)
        return cls(method, k, float(hits.mean()), float(np.mean(widths)), len(hits))

    def row(self) -> list:
        return [self.method, self.k, fmt(self.coverage), fmt(self.coverage_se), fmt(self.mean_width), self.reps]


COVERAGE_COLUMNS = ["method", "k", "coverage", "coverage_se", "mean_width", "reps"]


def fmt(x) -> str:
    """Shortest round-tripping text for a float; ints pass through."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def write_metadata(out_dir: Path, config: ExperimentConfig, extra: dict | None = None) -> Path:
    meta = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config": config.to_dict(),
        "config_sha256": config.digest(),
        "versions": {
            "inputuq": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        meta.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{config.experiment}_metadata.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
