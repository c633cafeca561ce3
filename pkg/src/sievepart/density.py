"""Piecewise-constant densities on binary partitions and distances between them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import BinaryPartition, DyadicRegion, _overlaps, clamp_points

__all__ = [
    "HistogramDensity",
    "DensityOracle",
    "evaluate",
    "hellinger",
    "kullback_leibler",
    "hellinger_vs_oracle",
    "log_likelihood",
    "NORMALIZATION_TOL",
]

NORMALIZATION_TOL = 1e-12
# heights within this of integrating to one are renormalized, beyond it rejected
_RENORMALIZE_TOL = 1e-9


class HistogramDensity:
    """``f = sum_i heights[i] * 1{leaves[i]}`` with ``sum_i heights[i] * vol_i == 1``."""

    def __init__(self, partition: BinaryPartition, heights):
        heights = np.array(heights, dtype=float).reshape(-1)
        if heights.shape[0] != partition.size:
            raise ValueError(f"{heights.shape[0]} heights for {partition.size} leaves")
        if not np.all(np.isfinite(heights)) or np.any(heights < 0):
            raise ValueError("heights must be finite and nonnegative")
        mass = float(np.dot(heights, partition.volumes))
        if abs(mass - 1.0) > _RENORMALIZE_TOL:
            raise ValueError(f"heights integrate to {mass!r}, not 1")
        if mass != 1.0:
            heights = heights / mass
        self.partition = partition
        self.heights = heights
        self.heights.setflags(write=False)

    @property
    def p(self) -> int:
        return self.partition.p

    @property
    def size(self) -> int:
        return self.partition.size

    @classmethod
    def uniform(cls, p: int) -> "HistogramDensity":
        return cls(BinaryPartition.trivial(p), [1.0])

    def mass(self) -> float:
        return float(np.dot(self.heights, self.partition.volumes))

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)

    def refined(self, partition: BinaryPartition) -> "HistogramDensity":
        """The same function expressed on a refinement of its partition."""
        ii, jj, _ = _overlaps(self.partition, partition)
        heights = np.empty(partition.size)
        heights[jj] = self.heights[ii]
        counts = np.bincount(jj, minlength=partition.size)
        if np.any(counts != 1):
            raise ValueError("target partition is not a refinement")
        return HistogramDensity(partition, heights)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "leaves": [leaf.to_text() for leaf in self.partition.leaves],
            "heights": [float(h) for h in self.heights],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HistogramDensity":
        leaves = [DyadicRegion.from_text(s) for s in data["leaves"]]
        if any(leaf.p != data["p"] for leaf in leaves):
            raise ValueError("leaf dimension does not match 'p'")
        order = sorted(range(len(leaves)), key=lambda i: leaves[i])
        partition = BinaryPartition.from_leaves(leaves)
        heights = [data["heights"][i] for i in order]
        return cls(partition, heights)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "HistogramDensity":
        return cls.from_dict(json.loads(text))


@dataclass
class DensityOracle:
    """A reference density on the unit cube.

    ``evaluate`` maps an ``(n, p)`` array to ``n`` nonnegative values;
    ``sampler(n, seed)`` optionally returns exact draws.
    """

    p: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    sampler: Optional[Callable[[int, int], np.ndarray]] = None
    name: str = "oracle"

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(np.atleast_2d(np.asarray(points, dtype=float)))

    @classmethod
    def from_histogram(cls, f: HistogramDensity, name: str = "histogram") -> "DensityOracle":
        return cls(f.p, f.__call__, name=name)


def evaluate(f: HistogramDensity, points) -> np.ndarray:
    """Density value at each point; cell boundaries belong to the upper cell."""
    x = clamp_points(points)
    return f.heights[f.partition.locate(x)]


def _check_same_dim(f, g):
    if f.p != g.p:
        raise ValueError(f"dimension mismatch: {f.p} vs {g.p}")


def hellinger(f: HistogramDensity, g: HistogramDensity) -> float:
    """Hellinger distance, summed exactly over the common refinement."""
    _check_same_dim(f, g)
    ii, jj, vol = _overlaps(f.partition, g.partition)
    diff = np.sqrt(f.heights[ii]) - np.sqrt(g.heights[jj])
    rho2 = float(np.dot(diff * diff, vol))
    return min(math.sqrt(max(rho2, 0.0)), math.sqrt(2.0))


def kullback_leibler(f: HistogramDensity, g: HistogramDensity) -> float:
    """``K(f, g) = E_f log(f/g)``; ``inf`` when ``f`` charges a cell where ``g`` is zero."""
    _check_same_dim(f, g)
    ii, jj, vol = _overlaps(f.partition, g.partition)
    bf = f.heights[ii]
    bg = g.heights[jj]
    charged = bf > 0
    if np.any(bg[charged] == 0):
        return math.inf
    terms = np.zeros_like(bf)
    terms[charged] = bf[charged] * np.log(bf[charged] / bg[charged]) * vol[charged]
    return max(float(terms.sum()), 0.0)


def _leaf_allocation(volumes: np.ndarray, n_mc: int, floor: int = 10) -> np.ndarray:
    return np.maximum(np.floor(volumes * n_mc).astype(int), floor)


def hellinger_vs_oracle(f: HistogramDensity, f0, n_mc: int = 100_000, seed: int = 0):
    """Monte Carlo Hellinger distance between a histogram and a reference density.

    Stratified by the leaves of ``f``: each leaf receives points in proportion
    to its volume (at least 10), drawn uniformly inside the leaf from its own
    Philox stream.

    Returns
    -------
    (rho, se)
        the distance estimate and the standard error of the estimate of
        ``rho**2``.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    f0_eval = f0.evaluate if isinstance(f0, DensityOracle) else f0
    lo, hi = f.partition.bounds()
    vols = f.partition.volumes
    alloc = _leaf_allocation(vols, n_mc)
    children = np.random.SeedSequence(seed).spawn(f.size)
    rho2 = 0.0
    var = 0.0
    sqrt_h = np.sqrt(f.heights)
    for i in range(f.size):
        rng = np.random.Generator(np.random.Philox(children[i]))
        u = lo[i] + (hi[i] - lo[i]) * rng.random((alloc[i], f.p))
        vals = np.asarray(f0_eval(u), dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            bad = u[np.argmin(np.where(np.isfinite(vals), vals, -np.inf))]
            raise ValueError(f"oracle returned an invalid density value near {bad.tolist()}")
        sq = (sqrt_h[i] - np.sqrt(vals)) ** 2
        rho2 += vols[i] * sq.mean()
        var += vols[i] ** 2 * sq.var(ddof=1) / alloc[i]
    return math.sqrt(max(rho2, 0.0)), math.sqrt(var)


def log_likelihood(f: HistogramDensity, points) -> float:
    """``sum_j log f(Y_j)``; ``-inf`` when a point falls where ``f`` is zero."""
    vals = evaluate(f, points)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(vals)))

