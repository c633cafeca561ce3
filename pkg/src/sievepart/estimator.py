"""Sieve maximum-likelihood histograms on binary partitions.

The score of a partition is the largest log-likelihood any histogram on it
can reach, ``sum_i N_i log(N_i / (n vol_i))``.  The estimator is the
histogram on the highest-scoring partition of a fixed size; two searches
are provided, an exhaustive one over every partition (small problems only)
and a greedy one that adds the best single cut at each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .density import HistogramDensity
from .geometry import (
    MAX_DEPTH,
    BinaryPartition,
    Cut,
    DyadicRegion,
    clamp_points,
    enumerate_partitions,
    split_region,
    split_region_at,
)

__all__ = [
    "RateParameters",
    "GreedyOptions",
    "CutRecord",
    "FitResult",
    "as_samples",
    "tabulate_counts",
    "mle_weights",
    "score_from_counts",
    "partition_score",
    "exhaustive_fit",
    "greedy_fit",
    "select_sieve_size",
    "theoretical_rate",
    "rate_curve",
]


@dataclass(frozen=True)
class RateParameters:
    """Approximation constant ``A``, complexity index ``r`` and ``c1`` in (0, 1)."""

    A: float = 1.0
    r: float = 1.0
    c1: float = 0.5

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")


@dataclass
class GreedyOptions:
    min_gain: float = 0.0
    min_leaf_count: int = 0
    grid_depth: Optional[int] = None
    max_depth: int = MAX_DEPTH
    # 1 = plain best-gain search; d > 1 ranks each cut by its gain plus the
    # best gain reachable in the next d - 1 cuts below it
    lookahead: int = 1


@dataclass(frozen=True)
class CutRecord:
    region: DyadicRegion
    dim: int
    position: Fraction
    gain: float
    counts: tuple


@dataclass
class FitResult:
    density: HistogramDensity
    score: float
    trace: list = field(default_factory=list)

    def __iter__(self):
        # allows ``density, score, trace = greedy_fit(...)``
        return iter((self.density, self.score, self.trace))

    @property
    def partition(self) -> BinaryPartition:
        return self.density.partition


def as_samples(data, p: Optional[int] = None) -> np.ndarray:
    """Validate a sample set: an ``(n, p)`` float array with entries in [0, 1]."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        if p is None:
            raise ValueError("1-d sample arrays need an explicit dimension")
        x = x.reshape(-1, p)
    if x.ndim != 2:
        raise ValueError("samples must be a 2-d array")
    if p is not None and x.shape[1] != p:
        raise ValueError(f"samples have dimension {x.shape[1]}, expected {p}")
    return clamp_points(x) if x.size else x.reshape(0, x.shape[1])


def tabulate_counts(partition: BinaryPartition, data) -> np.ndarray:
    """Number of points falling in each leaf."""
    x = as_samples(data, partition.p)
    if x.shape[0] == 0:
        return np.zeros(partition.size, dtype=np.int64)
    return np.bincount(partition.locate(x), minlength=partition.size).astype(np.int64)


def mle_weights(counts, volumes, n: Optional[int] = None) -> np.ndarray:
    """Multinomial MLE heights ``N_i / (n vol_i)``."""
    counts = np.asarray(counts, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    total = counts.sum()
    if n is None:
        n = total
    if n <= 0:
        raise ValueError("cannot fit heights to an empty sample")
    if total != n:
        raise ValueError(f"counts sum to {total}, not n={n}")
    return counts / (n * volumes)


def score_from_counts(counts, volumes, n) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(xlogy(counts, counts / (n * np.asarray(volumes, dtype=float)))))


def partition_score(partition: BinaryPartition, data) -> float:
    """Maximized histogram log-likelihood on ``partition``; 0 for the trivial partition."""
    counts = tabulate_counts(partition, data)
    n = int(counts.sum())
    if n < 1:
        raise ValueError("score needs at least one sample")
    return score_from_counts(counts, partition.volumes, n)


def _fit_on(partition: BinaryPartition, counts, n) -> HistogramDensity:
    return HistogramDensity(partition, mle_weights(counts, partition.volumes, n))


def exhaustive_fit(data, size: int, budget: int = 10**6) -> FitResult:
    """Best histogram over every partition with ``size`` leaves.

    Ties go to the partition whose canonical text sorts first.
    """
    x = as_samples(data)
    n, p = x.shape
    if n < 1:
        raise ValueError("need at least one sample")
    candidates = enumerate_partitions(p, size, budget=budget)
    leaf_counts: dict = {}

    def count(leaf):
        if leaf not in leaf_counts:
            lo, hi = leaf.float_bounds()
            leaf_counts[leaf] = int(np.count_nonzero(np.all((x >= lo) & (x < hi), axis=1)))
        return leaf_counts[leaf]

    best = None
    best_score = -math.inf
    best_counts = None
    for part in candidates:
        counts = np.array([count(leaf) for leaf in part.leaves])
        s = score_from_counts(counts, part.volumes, n)
        if s > best_score:
            best, best_score, best_counts = part, s, counts
    return FitResult(_fit_on(best, best_counts, n), best_score, [])


def _split_gain(n_total, n_leaf, vol, n_lo, vol_lo, vol_hi):
    n_hi = n_leaf - n_lo
    return (
        xlogy(n_lo, n_lo / (n_total * vol_lo))
        + xlogy(n_hi, n_hi / (n_total * vol_hi))
        - xlogy(n_leaf, n_leaf / (n_total * vol))
    )


class _Leaf:
    __slots__ = ("region", "index", "best")

    def __init__(self, region, index):
        self.region = region
        self.index = index
        self.best = None


def greedy_fit(data, size: int, options: Optional[GreedyOptions] = None, **kwargs) -> FitResult:
    """Grow a partition one cut at a time, always taking the largest score gain.

    Starting from the whole cube, each step evaluates every admissible cut
    of every leaf and applies the best one.  Stops after ``size - 1`` cuts
    or when no cut gains more than ``options.min_gain``.  Ties go to the
    lowest dimension, then the leaf that sorts first, then the lowest cut
    point (grid mode).

    With ``options.lookahead = d > 1`` the ranking (and the stopping test)
    uses the gain of a cut plus the best total gain of up to ``d - 1``
    further cuts inside its two halves, which lets the search split a leaf
    whose mass is centred on the midpoint.  The applied cuts and the score
    are still single cuts and plain log-likelihoods.

    Keyword arguments override fields of ``options``.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    opts = options if options is not None else GreedyOptions()
    if kwargs:
        opts = GreedyOptions(**{**opts.__dict__, **kwargs})
    if opts.min_leaf_count < 0:
        raise ValueError("min_leaf_count must be >= 0")
    if opts.lookahead < 1:
        raise ValueError("lookahead must be >= 1")
    x = as_samples(data)
    n, p = x.shape
    if n < 1:
        raise ValueError("need at least one sample")

    leaves = [_Leaf(DyadicRegion.unit(p), np.arange(n))]
    trace: list = []
    for _ in range(size - 1):
        choice = None
        for leaf in leaves:
            if leaf.best is None:
                leaf.best = _best_cut(x, n, leaf.region, leaf.index, opts, opts.lookahead)
            cand = leaf.best
            if cand is None:
                continue
            rank, dim = cand[0], cand[2]
            if choice is None:
                choice = (leaf, cand)
                continue
            cur_rank, cur_dim = choice[1][0], choice[1][2]
            if rank > cur_rank or (rank == cur_rank and (dim, leaf.region) < (cur_dim, choice[0].region)):
                choice = (leaf, cand)
        if choice is None or not choice[1][0] > opts.min_gain:
            break
        leaf, (_, gain, dim, cut, lower, upper, mask) = choice
        leaves.remove(leaf)
        lo_leaf = _Leaf(lower, leaf.index[mask])
        hi_leaf = _Leaf(upper, leaf.index[~mask])
        leaves.extend([lo_leaf, hi_leaf])
        trace.append(CutRecord(leaf.region, dim, cut, float(gain),
                               (lo_leaf.index.size, hi_leaf.index.size)))

    leaves.sort(key=lambda lf: lf.region)
    cuts = [Cut(rec.region, rec.dim, rec.position) for rec in trace]
    partition = BinaryPartition([lf.region for lf in leaves], cuts)
    counts = np.array([lf.index.size for lf in leaves])
    score = score_from_counts(counts, partition.volumes, n)
    return FitResult(_fit_on(partition, counts, n), score, trace)


def _candidate_cuts(region: DyadicRegion, dim: int, opts: GreedyOptions):
    """Yield ``(position, lower, upper)`` for every admissible cut along ``dim``."""
    if opts.grid_depth is None:
        try:
            lower, upper = split_region(region, dim, opts.max_depth)
        except ValueError:
            return
        yield Fraction(lower.offsets[dim] + lower.widths[dim], 1 << lower.levels[dim]), lower, upper
        return
    g = opts.grid_depth
    lev = region.levels[dim]
    if lev > g:
        return
    a = region.offsets[dim] << (g - lev)
    b = (region.offsets[dim] + region.widths[dim]) << (g - lev)
    for c in range(a + 1, b):
        lower, upper = split_region_at(region, dim, c, g)
        yield Fraction(c, 1 << g), lower, upper


def _best_cut(x, n, region: DyadicRegion, index, opts: GreedyOptions, depth: int):
    """Best admissible cut of one leaf as ``(rank, gain, dim, pos, lower, upper, mask)``.

    ``rank`` equals ``gain`` when ``depth == 1``.
    """
    pts = x[index]
    n_leaf = pts.shape[0]
    vol = float(region.volume)
    best = None
    for dim in range(region.p):
        col = pts[:, dim]
        for pos, lower, upper in _candidate_cuts(region, dim, opts):
            mask = col < float(pos)
            n_lo = int(np.count_nonzero(mask))
            if min(n_lo, n_leaf - n_lo) < opts.min_leaf_count:
                continue
            gain = float(_split_gain(n, n_leaf, vol, n_lo, float(lower.volume), float(upper.volume)))
            rank = gain
            if depth > 1 and n_leaf > 1:
                follow = 0.0
                for child, sub in ((lower, index[mask]), (upper, index[~mask])):
                    if sub.size > 1:
                        nxt = _best_cut(x, n, child, sub, opts, depth - 1)
                        if nxt is not None:
                            follow = max(follow, nxt[0])
                rank = gain + follow
            # strict ">" keeps the lowest dimension and lowest cut point on ties
            if best is None or rank > best[0]:
                best = (rank, gain, dim, pos, lower, upper, mask)
    return best


def select_sieve_size(n: int, params: RateParameters = RateParameters()) -> int:
    """Partition size balancing bias and variance for ``n`` samples.

    ``I = ((2**8 A**2 r / c1) * n / log n) ** (1 / (2r + 1))``, rounded to the
    nearest integer and at least 1.
    """
    if n < 3:
        raise ValueError("need n >= 3 so that log n > 1")
    base = (2 ** 8) * params.A ** 2 * params.r / params.c1 * n / math.log(n)
    return max(1, int(math.floor(base ** (1.0 / (2.0 * params.r + 1.0)) + 0.5)))


def theoretical_rate(n: int, size: int, r: float):
    """Return ``(delta, exponent)``: ``sqrt(I log I / (n / log n))`` and ``r / (2r + 1)``."""
    if n < 3 or size < 2:
        raise ValueError("need n >= 3 and size >= 2")
    delta = math.sqrt(size * math.log(size) / (n / math.log(n)))
    return delta, r / (2.0 * r + 1.0)


def rate_curve(n, r: float) -> np.ndarray:
    """Reference curve ``n**(-r/(2r+1)) * (log n)**(1/2 + r/(2r+1))``."""
    n = np.asarray(n, dtype=float)
    e = r / (2.0 * r + 1.0)
    return n ** (-e) * np.log(n) ** (0.5 + e)
