"""Exact dyadic geometry on the unit cube.

Regions are axis-aligned boxes whose sides are intervals
``[offset / 2**level, (offset + width) / 2**level)``.  Midpoint cuts only ever
produce ``width == 1`` (a dyadic rectangle); grid cuts at ``k / 2**G`` may
produce wider intervals, which are kept in reduced form so that every box has
exactly one representation.

All geometry is stored as integers.  Volumes are exact ``Fraction`` objects
(and exact floats, because they are dyadic rationals with small numerators).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MAX_DEPTH",
    "BudgetExceeded",
    "DyadicRegion",
    "Cut",
    "BinaryPartition",
    "split_region",
    "split_region_at",
    "merge_regions",
    "enumerate_partitions",
    "partition_count_bound",
    "common_refinement",
    "clamp_points",
]

MAX_DEPTH = 30

# largest float strictly below 1.0; every cell at depth <= 52 that touches the
# upper face contains it
_BELOW_ONE = np.nextafter(1.0, 0.0)


class BudgetExceeded(RuntimeError):
    """Raised when a combinatorial search would exceed its configured budget."""


@dataclass(frozen=True, order=True)
class DyadicRegion:
    """Box ``prod_d [offsets[d], offsets[d] + widths[d]) / 2**levels[d]``.

    ``widths`` defaults to all ones, which is the dyadic rectangle case.
    """

    levels: tuple
    offsets: tuple
    widths: tuple = None

    def __post_init__(self):
        levels = tuple(int(v) for v in self.levels)
        offsets = tuple(int(v) for v in self.offsets)
        widths = (1,) * len(levels) if self.widths is None else tuple(int(v) for v in self.widths)
        if not (len(levels) == len(offsets) == len(widths)) or not levels:
            raise ValueError("levels, offsets and widths must have the same nonzero length")
        for lev, off, wid in zip(levels, offsets, widths):
            if lev < 0 or off < 0 or wid < 1 or off + wid > (1 << lev):
                raise ValueError(f"invalid interval: level={lev} offset={off} width={wid}")
            if wid > 1 and lev > 0 and off % 2 == 0 and wid % 2 == 0:
                raise ValueError("interval is not in reduced form")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "widths", widths)

    @classmethod
    def unit(cls, p: int) -> "DyadicRegion":
        if p < 1:
            raise ValueError("dimension must be >= 1")
        return cls((0,) * p, (0,) * p)

    @classmethod
    def from_interval(cls, lo: Sequence[int], hi: Sequence[int], level: Sequence[int]) -> "DyadicRegion":
        """Build from per-dimension integer bounds ``[lo, hi) / 2**level``, reducing."""
        levels, offsets, widths = [], [], []
        for a, b, lev in zip(lo, hi, level):
            a, b, lev = int(a), int(b), int(lev)
            if not 0 <= a < b <= (1 << lev):
                raise ValueError("empty or out-of-range interval")
            while lev > 0 and a % 2 == 0 and b % 2 == 0:
                a, b, lev = a // 2, b // 2, lev - 1
            levels.append(lev)
            offsets.append(a)
            widths.append(b - a)
        return cls(tuple(levels), tuple(offsets), tuple(widths))

    @property
    def p(self) -> int:
        return len(self.levels)

    @property
    def is_dyadic(self) -> bool:
        return all(w == 1 for w in self.widths)

    @property
    def volume(self) -> Fraction:
        num = 1
        for w in self.widths:
            num *= w
        return Fraction(num, 1 << sum(self.levels))

    def int_bounds(self, depth: int):
        """Integer bounds at the common denominator ``2**depth`` (depth >= every level)."""
        lo = tuple(o << (depth - lev) for o, lev in zip(self.offsets, self.levels))
        hi = tuple((o + w) << (depth - lev) for o, w, lev in zip(self.offsets, self.widths, self.levels))
        return lo, hi

    def float_bounds(self):
        lo = np.array([math.ldexp(o, -lev) for o, lev in zip(self.offsets, self.levels)])
        hi = np.array([math.ldexp(o + w, -lev) for o, w, lev in zip(self.offsets, self.widths, self.levels)])
        return lo, hi

    def contains(self, other: "DyadicRegion") -> bool:
        depth = max(max(self.levels), max(other.levels))
        lo_a, hi_a = self.int_bounds(depth)
        lo_b, hi_b = other.int_bounds(depth)
        return all(a <= b and d <= c for a, c, b, d in zip(lo_a, hi_a, lo_b, hi_b))

    def to_text(self) -> str:
        parts = []
        for lev, off, wid in zip(self.levels, self.offsets, self.widths):
            parts.append(f"{lev}:{off}" if wid == 1 else f"{lev}:{off}+{wid}")
        return ",".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "DyadicRegion":
        levels, offsets, widths = [], [], []
        for token in text.strip().split(","):
            lev, rest = token.split(":")
            off, _, wid = rest.partition("+")
            levels.append(int(lev))
            offsets.append(int(off))
            widths.append(int(wid) if wid else 1)
        return cls(tuple(levels), tuple(offsets), tuple(widths))

    def __str__(self) -> str:
        return self.to_text()


def split_region(region: DyadicRegion, dim: int, max_depth: int = MAX_DEPTH):
    """Cut ``region`` at the midpoint of coordinate ``dim``.

    Returns the lower and upper halves.  For a dyadic interval at level ``l``
    and offset ``k`` the children sit at level ``l + 1`` with offsets ``2k``
    and ``2k + 1``.
    """
    if not 0 <= dim < region.p:
        raise IndexError(f"dimension {dim} out of range for p={region.p}")
    lev, off, wid = region.levels[dim], region.offsets[dim], region.widths[dim]
    if wid % 2 == 0:
        # wide grid interval with an even width: the midpoint is on the same level
        lo_child = (lev, off, wid // 2)
        hi_child = (lev, off + wid // 2, wid // 2)
    else:
        if lev + 1 > max_depth:
            raise ValueError(f"cut exceeds max depth {max_depth} along dimension {dim}")
        lo_child = (lev + 1, 2 * off, wid)
        hi_child = (lev + 1, 2 * off + wid, wid)
    return _replace_dim(region, dim, *lo_child), _replace_dim(region, dim, *hi_child)


def split_region_at(region: DyadicRegion, dim: int, cut: int, grid_depth: int):
    """Cut ``region`` along ``dim`` at the grid point ``cut / 2**grid_depth``.

    The cut point must lie strictly inside the region's side.
    """
    if not 0 <= dim < region.p:
        raise IndexError(f"dimension {dim} out of range for p={region.p}")
    lev = region.levels[dim]
    if grid_depth < lev:
        raise ValueError("grid depth is coarser than the region's side")
    a = region.offsets[dim] << (grid_depth - lev)
    b = (region.offsets[dim] + region.widths[dim]) << (grid_depth - lev)
    if not a < cut < b:
        raise ValueError("cut point is not interior to the region")
    lower = DyadicRegion.from_interval([a], [cut], [grid_depth])
    upper = DyadicRegion.from_interval([cut], [b], [grid_depth])
    return (
        _replace_dim(region, dim, lower.levels[0], lower.offsets[0], lower.widths[0]),
        _replace_dim(region, dim, upper.levels[0], upper.offsets[0], upper.widths[0]),
    )


def merge_regions(a: DyadicRegion, b: DyadicRegion) -> DyadicRegion:
    """Inverse of a cut: join two boxes that differ in one adjacent side."""
    if a.p != b.p:
        raise ValueError("dimension mismatch")
    depth = max(max(a.levels), max(b.levels))
    lo_a, hi_a = a.int_bounds(depth)
    lo_b, hi_b = b.int_bounds(depth)
    diff = [d for d in range(a.p) if (lo_a[d], hi_a[d]) != (lo_b[d], hi_b[d])]
    if len(diff) != 1:
        raise ValueError("regions do not share all but one side")
    d = diff[0]
    if hi_a[d] == lo_b[d]:
        lo, hi = lo_a[d], hi_b[d]
    elif hi_b[d] == lo_a[d]:
        lo, hi = lo_b[d], hi_a[d]
    else:
        raise ValueError("regions are not adjacent")
    joined = DyadicRegion.from_interval([lo], [hi], [depth])
    return _replace_dim(a, d, joined.levels[0], joined.offsets[0], joined.widths[0])


def _replace_dim(region, dim, level, offset, width):
    levels = list(region.levels)
    offsets = list(region.offsets)
    widths = list(region.widths)
    levels[dim], offsets[dim], widths[dim] = level, offset, width
    # reduce if possible (keeps the representation canonical)
    lo = offset
    hi = offset + width
    while level > 0 and width > 1 and lo % 2 == 0 and hi % 2 == 0:
        lo, hi, level = lo // 2, hi // 2, level - 1
        width = hi - lo
    levels[dim], offsets[dim], widths[dim] = level, lo, width
    return DyadicRegion(tuple(levels), tuple(offsets), tuple(widths))


def clamp_points(points) -> np.ndarray:
    """Validate points in ``[0, 1]^p`` and move coordinates equal to 1 into the last cell."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.size and (not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("points must lie in the closed unit cube")
    return np.where(x >= 1.0, _BELOW_ONE, x)


@dataclass(frozen=True)
class Cut:
    """One step of the recursion: ``region`` was cut along ``dim`` at ``position``."""

    region: DyadicRegion
    dim: int
    position: Fraction


class BinaryPartition:
    """A tiling of the unit cube built by recursive cuts.

    Leaves are held in canonical order (sorted by ``(levels, offsets,
    widths)``); two partitions compare equal when their leaf sets are equal,
    regardless of the cut sequence that produced them.
    """

    def __init__(self, leaves: Iterable[DyadicRegion], cuts: Sequence[Cut] = ()):
        leaves = tuple(sorted(leaves))
        if not leaves:
            raise ValueError("a partition needs at least one leaf")
        p = leaves[0].p
        if any(leaf.p != p for leaf in leaves):
            raise ValueError("leaves have mixed dimensions")
        self.leaves = leaves
        self.cuts = tuple(cuts)
        self.p = p
        self._bounds = None

    @classmethod
    def trivial(cls, p: int) -> "BinaryPartition":
        return cls([DyadicRegion.unit(p)])

    @classmethod
    def from_leaves(cls, leaves: Iterable[DyadicRegion]) -> "BinaryPartition":
        """Build from a leaf set, checking that a cut tree producing it exists."""
        leaves = list(leaves)
        cuts: list = []
        if not _rebuild(DyadicRegion.unit(leaves[0].p), leaves, cuts):
            raise ValueError("leaf set is not a binary partition of the unit cube")
        return cls(leaves, cuts)

    @property
    def size(self) -> int:
        return len(self.leaves)

    def __len__(self) -> int:
        return len(self.leaves)

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryPartition) and self.leaves == other.leaves

    def __hash__(self) -> int:
        return hash(self.leaves)

    def __repr__(self) -> str:
        return f"BinaryPartition(p={self.p}, size={self.size})"

    @property
    def volumes(self) -> np.ndarray:
        return np.array([float(leaf.volume) for leaf in self.leaves])

    def exact_volumes(self):
        return [leaf.volume for leaf in self.leaves]

    def refine(self, leaf_index: int, dim: int, max_depth: int = MAX_DEPTH) -> "BinaryPartition":
        """Return the partition obtained by a midpoint cut of one leaf."""
        region = self.leaves[leaf_index]
        lo, hi = split_region(region, dim, max_depth)
        pos = Fraction(lo.offsets[dim] + lo.widths[dim], 1 << lo.levels[dim])
        leaves = self.leaves[:leaf_index] + (lo, hi) + self.leaves[leaf_index + 1:]
        return BinaryPartition(leaves, self.cuts + (Cut(region, dim, pos),))

    def refine_at(self, leaf_index: int, dim: int, cut: int, grid_depth: int) -> "BinaryPartition":
        region = self.leaves[leaf_index]
        lo, hi = split_region_at(region, dim, cut, grid_depth)
        leaves = self.leaves[:leaf_index] + (lo, hi) + self.leaves[leaf_index + 1:]
        return BinaryPartition(leaves, self.cuts + (Cut(region, dim, Fraction(cut, 1 << grid_depth)),))

    def bounds(self):
        """Float lower/upper corner arrays, shape ``(size, p)``."""
        if self._bounds is None:
            pairs = [leaf.float_bounds() for leaf in self.leaves]
            self._bounds = (np.array([a for a, _ in pairs]), np.array([b for _, b in pairs]))
        return self._bounds

    def locate(self, points) -> np.ndarray:
        """Index of the leaf containing each point (half-open cells, 1.0 clamped)."""
        x = clamp_points(points)
        if x.shape[1] != self.p:
            raise ValueError(f"points have dimension {x.shape[1]}, partition has {self.p}")
        lo, hi = self.bounds()
        out = np.full(x.shape[0], -1, dtype=np.intp)
        for i in range(self.size):
            inside = np.all((x >= lo[i]) & (x < hi[i]), axis=1)
            out[inside] = i
        if x.shape[0] and out.min() < 0:
            raise RuntimeError("leaves do not cover the unit cube")
        return out

    def to_text(self) -> str:
        return "\n".join(leaf.to_text() for leaf in self.leaves)

    @classmethod
    def from_text(cls, text: str) -> "BinaryPartition":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        return cls.from_leaves(DyadicRegion.from_text(ln) for ln in lines)

    def canonical_key(self) -> str:
        return self.to_text()

    def check(self) -> None:
        """Exact validity check: disjoint leaves whose volumes sum to one."""
        if sum(self.exact_volumes()) != 1:
            raise AssertionError("leaf volumes do not sum to one")
        ii, jj, _ = _overlaps(self, self)
        if np.any(ii != jj):
            raise AssertionError("leaves overlap")


def _rebuild(region, leaves, cuts) -> bool:
    # Any cut line crossing no leaf works: halves of a guillotine tiling are
    # guillotine tilings themselves, so no backtracking is needed.
    inside = [leaf for leaf in leaves if region.contains(leaf)]
    if len(inside) == 1 and inside[0] == region:
        return True
    if len(inside) < 2 or sum(leaf.volume for leaf in inside) != region.volume:
        return False
    depth = max(max(region.levels), max(max(leaf.levels) for leaf in inside))
    rlo, rhi = region.int_bounds(depth)
    bounds = [leaf.int_bounds(depth) for leaf in inside]
    for d in range(region.p):
        candidates = sorted({c for lo, hi in bounds for c in (lo[d], hi[d]) if rlo[d] < c < rhi[d]})
        for c in candidates:
            if all(hi[d] <= c or lo[d] >= c for lo, hi in bounds):
                lower, upper = split_region_at(region, d, c, depth)
                cuts.append(Cut(region, d, Fraction(c, 1 << depth)))
                return _rebuild(lower, inside, cuts) and _rebuild(upper, inside, cuts)
    return False


def partition_count_bound(p: int, size: int) -> int:
    """Upper bound ``p**I * I!`` on the number of size-``I`` partitions."""
    return p ** size * math.factorial(size)


def enumerate_partitions(p: int, size: int, budget: int = 10**6, max_depth: int = MAX_DEPTH):
    """All distinct midpoint-cut partitions of ``[0,1)^p`` with ``size`` leaves.

    Cut sequences reaching the same leaf set are identified.  Returns a list
    sorted by canonical text.

    Raises
    ------
    BudgetExceeded
        if ``p**size * size!`` exceeds ``budget``.
    """
    if p < 1 or size < 1:
        raise ValueError("need p >= 1 and size >= 1")
    bound = partition_count_bound(p, size)
    if bound > budget:
        raise BudgetExceeded(f"p^I*I! = {bound} exceeds the enumeration budget {budget}")
    level = {BinaryPartition.trivial(p)}
    for _ in range(size - 1):
        nxt = set()
        for part in level:
            for i, leaf in enumerate(part.leaves):
                for d in range(p):
                    if leaf.levels[d] < max_depth:
                        nxt.add(part.refine(i, d, max_depth))
        level = nxt
    return sorted(level, key=BinaryPartition.canonical_key)


def _overlaps(a: BinaryPartition, b: BinaryPartition):
    """Nonzero-volume leaf intersections as arrays ``(i, j, volume)``."""
    if a.p != b.p:
        raise ValueError(f"dimension mismatch: {a.p} vs {b.p}")
    depth = max(max(max(leaf.levels) for leaf in part.leaves) for part in (a, b))
    if depth > 62:
        raise ValueError("partition too deep for integer overlap arithmetic")
    la = np.array([leaf.int_bounds(depth) for leaf in a.leaves], dtype=np.int64)
    lb = np.array([leaf.int_bounds(depth) for leaf in b.leaves], dtype=np.int64)
    # la[:, 0] lower corners, la[:, 1] upper corners; shapes (I, p)
    lo = np.maximum(la[:, None, 0, :], lb[None, :, 0, :])
    hi = np.minimum(la[:, None, 1, :], lb[None, :, 1, :])
    ii, jj = np.nonzero(np.all(hi > lo, axis=2))
    lengths = (hi[ii, jj] - lo[ii, jj]).astype(float)
    vol = np.prod(np.ldexp(lengths, -depth), axis=1)
    return ii, jj, vol


def common_refinement(a: BinaryPartition, b: BinaryPartition):
    """Nonempty intersections of leaves of ``a`` and ``b``.

    Returns a list of ``(i, j, volume)`` triples where ``volume`` is the exact
    ``Fraction`` volume of ``a.leaves[i] & b.leaves[j]``.
    """
    ii, jj, vol = _overlaps(a, b)
    return [(int(i), int(j), Fraction(float(v))) for i, j, v in zip(ii, jj, vol)]
