"""Multidimensional Haar analysis of densities sampled on a regular dyadic grid.

Two orthonormal bases of ``L2([0,1]^p)`` are supported:

``isotropic``
    one scale per basis function: ``2**(p*l/2) prod_d h_d(2**l y_d - k_d)``
    with each ``h_d`` either the scaling function ``phi`` or the mother
    wavelet ``psi`` and at least one ``psi``.  Plus the constant function.
``tensor``
    products of one-dimensional Haar functions with independent scales,
    ``prod_d psi_{l_d, k_d}(y_d)`` where a factor may also be ``phi``.

A grid function holds the values of a piecewise-constant function on the
``2**L`` per side regular grid (``values[i_1, ..., i_p]`` is the value on
the cell with lower corner ``i / 2**L``).
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .density import HistogramDensity
from .geometry import BinaryPartition, DyadicRegion

__all__ = [
    "HaarIndex",
    "HaarSpectrum",
    "haar_analyze",
    "haar_reconstruct",
    "basis_function",
    "all_indices",
    "top_k_density",
    "estimate_decay_exponent",
    "mixed_holder_constant",
    "grid_to_histogram",
    "histogram_to_grid",
    "grid_hellinger",
    "grid_level",
]

MODES = ("isotropic", "tensor")
_SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class HaarIndex:
    """One basis function.

    ``types[d]`` is 1 for a ``psi`` factor and 0 for ``phi``.  In isotropic
    mode all levels are equal; in tensor mode ``phi`` factors sit at level 0,
    offset 0.
    """

    mode: str
    levels: tuple
    offsets: tuple
    types: tuple

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not len(self.levels) == len(self.offsets) == len(self.types):
            raise ValueError("levels, offsets and types must have equal length")
        for lev, off, t in zip(self.levels, self.offsets, self.types):
            if lev < 0 or not 0 <= off < (1 << lev) or t not in (0, 1):
                raise ValueError(f"malformed Haar index {self}")
            if self.mode == "tensor" and t == 0 and (lev, off) != (0, 0):
                raise ValueError("tensor scaling factors must sit at level 0")
        if self.mode == "isotropic":
            if len(set(self.levels)) != 1:
                raise ValueError("isotropic indices share one level across dimensions")
            if not any(self.types) and (self.levels[0], *self.offsets) != (0,) * (len(self.levels) + 1):
                raise ValueError("the constant function has level 0 and offset 0")

    @property
    def is_constant(self) -> bool:
        return not any(self.types)

    @property
    def support_volume(self) -> float:
        return 2.0 ** -sum(self.levels)

    @property
    def typebits(self) -> str:
        return "".join(str(t) for t in self.types)


class HaarSpectrum:
    """Sparse set of Haar coefficients.

    Entries are stored as parallel arrays (``levels``, ``offsets``, ``types``
    of shape ``(m, p)`` and ``coeffs`` of shape ``(m,)``), ordered from coarse
    to fine resolution.
    """

    def __init__(self, mode, L, p, levels, offsets, types, coeffs, target="f"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.L = int(L)
        self.p = int(p)
        self.target = target
        self.levels = np.asarray(levels, dtype=np.int64).reshape(-1, self.p)
        self.offsets = np.asarray(offsets, dtype=np.int64).reshape(-1, self.p)
        self.types = np.asarray(types, dtype=np.int8).reshape(-1, self.p)
        self.coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        m = self.coeffs.shape[0]
        if not self.levels.shape[0] == self.offsets.shape[0] == self.types.shape[0] == m:
            raise ValueError("index arrays and coefficients differ in length")

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def __repr__(self) -> str:
        return f"HaarSpectrum(mode={self.mode!r}, L={self.L}, p={self.p}, nnz={len(self)}, target={self.target!r})"

    def index(self, i: int) -> HaarIndex:
        return HaarIndex(self.mode, tuple(int(v) for v in self.levels[i]),
                         tuple(int(v) for v in self.offsets[i]), tuple(int(v) for v in self.types[i]))

    def items(self):
        for i in range(len(self)):
            yield self.index(i), float(self.coeffs[i])

    def as_dict(self) -> dict:
        return dict(self.items())

    @property
    def constant_mask(self) -> np.ndarray:
        return ~self.types.any(axis=1)

    @property
    def support_volumes(self) -> np.ndarray:
        return np.ldexp(1.0, -self.levels.sum(axis=1))

    def energy(self) -> float:
        return float(np.dot(self.coeffs, self.coeffs))

    def subset(self, keep) -> "HaarSpectrum":
        return HaarSpectrum(self.mode, self.L, self.p, self.levels[keep], self.offsets[keep],
                            self.types[keep], self.coeffs[keep], self.target)

    def scaled(self, factor: float) -> "HaarSpectrum":
        return HaarSpectrum(self.mode, self.L, self.p, self.levels, self.offsets, self.types,
                            self.coeffs * factor, self.target)

    @classmethod
    def from_items(cls, items, mode, L, p, target="f") -> "HaarSpectrum":
        items = list(items)
        if not items:
            return cls(mode, L, p, np.zeros((0, p)), np.zeros((0, p)), np.zeros((0, p)), [], target)
        for idx, _ in items:
            if idx.mode != mode or len(idx.levels) != p:
                raise ValueError(f"index {idx} does not match mode={mode} p={p}")
        return cls(mode, L, p,
                   [idx.levels for idx, _ in items], [idx.offsets for idx, _ in items],
                   [idx.types for idx, _ in items], [c for _, c in items], target)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mode"] + [f"l_{d + 1}" for d in range(self.p)]
                        + [f"k_{d + 1}" for d in range(self.p)] + ["typebits", "coeff"])
        for i in range(len(self)):
            writer.writerow([self.mode] + self.levels[i].tolist() + self.offsets[i].tolist()
                            + ["".join(str(int(t)) for t in self.types[i]), repr(float(self.coeffs[i]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, L: Optional[int] = None, target: str = "f") -> "HaarSpectrum":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        p = sum(1 for h in header if h.startswith("l_"))
        items = []
        for r in body:
            idx = HaarIndex(r[0], tuple(int(v) for v in r[1:1 + p]), tuple(int(v) for v in r[1 + p:1 + 2 * p]),
                            tuple(int(ch) for ch in r[1 + 2 * p]))
            items.append((idx, float(r[2 + 2 * p])))
        mode = body[0][0] if body else "isotropic"
        if L is None:
            top = max((max(idx.levels) for idx, _ in items), default=0)
            L = top + 1
        return cls.from_items(items, mode, L, p, target)


def grid_level(values: np.ndarray) -> int:
    """Resolution ``L`` of a grid with side ``2**L`` in every dimension."""
    values = np.asarray(values)
    if values.ndim < 1:
        raise ValueError("grid must have at least one dimension")
    side = values.shape[0]
    if any(s != side for s in values.shape) or side < 1 or side & (side - 1):
        raise ValueError(f"grid shape {values.shape} is not a power-of-two hypercube")
    return side.bit_length() - 1


# ---------------------------------------------------------------------------
# dense transforms


def _iso_forward(values, L, p):
    s = np.asarray(values, dtype=float) * 2.0 ** (-p * L / 2.0)
    bands = []
    for j in range(L - 1, -1, -1):
        t = s.reshape(_pair_shape(j, p))
        for d in range(p):
            ax = 2 * d + 1
            a = np.take(t, 0, axis=ax)
            b = np.take(t, 1, axis=ax)
            t = np.stack([(a + b) * _SQRT_HALF, (a - b) * _SQRT_HALF], axis=ax)
        # reorder to (types..., offsets...)
        t = t.transpose([2 * d + 1 for d in range(p)] + [2 * d for d in range(p)])
        bands.append(t)
        s = t[(0,) * p]
    bands.reverse()
    return float(s.reshape(-1)[0]) if s.size == 1 else s, bands


def _pair_shape(j, p):
    shape = []
    for _ in range(p):
        shape.extend([1 << j, 2])
    return tuple(shape)


def _iso_inverse(constant, bands, p):
    s = np.full((1,) * p, constant, dtype=float)
    for j, band in enumerate(bands):
        t = band.copy()
        t[(0,) * p] = s
        # back to interleaved (offset, type) axes
        order = []
        for d in range(p):
            order.extend([p + d, d])
        t = t.transpose(order)
        for d in range(p):
            ax = 2 * d + 1
            a = np.take(t, 0, axis=ax)
            b = np.take(t, 1, axis=ax)
            t = np.stack([(a + b) * _SQRT_HALF, (a - b) * _SQRT_HALF], axis=ax)
        s = t.reshape((2 << j,) * p)
    return s


def _haar1d(x, axis):
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    parts = []
    cur = x
    while cur.shape[0] > 1:
        a, b = cur[0::2], cur[1::2]
        parts.append((a - b) * _SQRT_HALF)
        cur = (a + b) * _SQRT_HALF
    out = np.concatenate([cur] + parts[::-1], axis=0)
    return np.moveaxis(out, 0, axis)


def _ihaar1d(c, axis):
    c = np.moveaxis(np.asarray(c, dtype=float), axis, 0)
    cur = c[:1]
    pos = 1
    while pos < c.shape[0]:
        d = c[pos:2 * pos]
        nxt = np.empty((2 * pos,) + c.shape[1:])
        nxt[0::2] = (cur + d) * _SQRT_HALF
        nxt[1::2] = (cur - d) * _SQRT_HALF
        cur = nxt
        pos *= 2
    return np.moveaxis(cur, 0, axis)


def _tensor_forward(values, L, p):
    c = np.asarray(values, dtype=float) * 2.0 ** (-p * L / 2.0)
    for d in range(p):
        c = _haar1d(c, d)
    return c


def _tensor_inverse(coeffs, L, p):
    v = np.asarray(coeffs, dtype=float)
    for d in range(p):
        v = _ihaar1d(v, d)
    return v * 2.0 ** (p * L / 2.0)


def _split_1d_index(i):
    i = np.asarray(i, dtype=np.int64)
    lev = np.zeros_like(i)
    nz = i > 0
    lev[nz] = np.floor(np.log2(i[nz])).astype(np.int64)
    # guard against floating log2 rounding at exact powers of two
    lev[nz & ((1 << (lev + 1)) <= i)] += 1
    lev[nz & ((1 << lev) > i)] -= 1
    off = np.where(nz, i - (1 << lev), 0)
    return lev, off, nz.astype(np.int8)


def haar_analyze(values, mode: str = "isotropic", target: str = "f", tol: float = 1e-14) -> HaarSpectrum:
    """Haar coefficients of a grid function, keeping entries with ``|c| > tol``.

    Each coefficient is the exact inner product of the piecewise-constant
    function with a basis element of level below ``L``; the transform is
    orthonormal, so the grid function is recovered by ``haar_reconstruct``.
    """
    values = np.asarray(values, dtype=float)
    L = grid_level(values)
    p = values.ndim
    if mode == "isotropic":
        const, bands = _iso_forward(values, L, p)
        levels, offsets, types, coeffs = [np.zeros((1, p), np.int64)], [np.zeros((1, p), np.int64)], \
            [np.zeros((1, p), np.int8)], [np.array([const], dtype=float)]
        for j, band in enumerate(bands):
            flat = band.reshape(-1)
            idx = np.indices(band.shape).reshape(2 * p, -1).T
            keep = idx[:, :p].any(axis=1) & (np.abs(flat) > tol)
            idx = idx[keep]
            types.append(idx[:, :p].astype(np.int8))
            offsets.append(idx[:, p:])
            levels.append(np.full((idx.shape[0], p), j, dtype=np.int64))
            coeffs.append(flat[keep])
        levels = np.concatenate(levels)
        offsets = np.concatenate(offsets)
        types = np.concatenate(types)
        coeffs = np.concatenate(coeffs)
        if not abs(coeffs[0]) > tol:
            levels, offsets, types, coeffs = levels[1:], offsets[1:], types[1:], coeffs[1:]
    elif mode == "tensor":
        dense = _tensor_forward(values, L, p)
        idx = np.indices(dense.shape).reshape(p, -1).T
        flat = dense.reshape(-1)
        keep = np.abs(flat) > tol
        idx, coeffs = idx[keep], flat[keep]
        lev, off, typ = _split_1d_index(idx)
        order = np.lexsort(tuple(idx.T[::-1]) + (lev.sum(axis=1),))
        levels, offsets, types, coeffs = lev[order], off[order], typ[order], coeffs[order]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return HaarSpectrum(mode, L, p, levels, offsets, types, coeffs, target)


def haar_reconstruct(spectrum: HaarSpectrum) -> np.ndarray:
    """Grid function with the given Haar coefficients (inverse of ``haar_analyze``)."""
    L, p = spectrum.L, spectrum.p
    lev, off, typ, c = spectrum.levels, spectrum.offsets, spectrum.types, spectrum.coeffs
    if len(spectrum) and (np.any(lev < 0) or np.any(lev >= max(L, 1)) or np.any(off < 0)
                          or np.any(off >= (1 << lev)) or np.any((typ != 0) & (typ != 1))):
        raise ValueError("spectrum contains an index outside the level range")
    if spectrum.mode == "isotropic":
        if len(spectrum) and np.any(lev.min(axis=1) != lev.max(axis=1)):
            raise ValueError("isotropic index with unequal levels")
        const_mask = ~typ.any(axis=1)
        if np.any(lev[const_mask] != 0) or np.any(off[const_mask] != 0):
            raise ValueError("malformed constant index")
        constant = float(c[const_mask].sum())
        bands = [np.zeros((2,) * p + (1 << j,) * p) for j in range(L)]
        wav = ~const_mask
        for j in range(L):
            sel = wav & (lev[:, 0] == j)
            if np.any(sel):
                np.add.at(bands[j], tuple(typ[sel].T) + tuple(off[sel].T), c[sel])
        if L == 0:
            return np.full((1,) * p, constant)
        return _iso_inverse(constant, bands, p) * 2.0 ** (p * L / 2.0)
    if spectrum.mode == "tensor":
        if np.any((typ == 0) & ((lev != 0) | (off != 0))):
            raise ValueError("tensor scaling factor away from level 0")
        dense = np.zeros((1 << L,) * p)
        flat_idx = np.where(typ == 1, (1 << lev) + off, 0)
        np.add.at(dense, tuple(flat_idx.T), c)
        return _tensor_inverse(dense, L, p)
    raise ValueError(f"unknown mode {spectrum.mode!r}")


def basis_function(index: HaarIndex, L: int) -> np.ndarray:
    """Values of one basis function on the ``2**L`` grid (needs every level < ``L``)."""
    p = len(index.levels)
    n = 1 << L
    grid = np.ones((n,) * p)
    centers = (np.arange(n) + 0.5) / n
    for d in range(p):
        lev, off, t = index.levels[d], index.offsets[d], index.types[d]
        if lev >= L and t == 1:
            raise ValueError("basis function is finer than the grid")
        u = centers * (1 << lev) - off
        inside = (u >= 0) & (u < 1)
        if t == 0:
            h = inside.astype(float)
        else:
            h = np.where(inside, np.where(u < 0.5, 1.0, -1.0), 0.0)
        shape = [1] * p
        shape[d] = n
        grid = grid * (h * 2.0 ** (lev / 2.0)).reshape(shape)
    return grid


def all_indices(mode: str, L: int, p: int):
    """Every basis index with levels below ``L``, coarse to fine."""
    out = [HaarIndex(mode, (0,) * p, (0,) * p, (0,) * p)]
    if mode == "isotropic":
        for j in range(L):
            for t in np.ndindex(*(2,) * p):
                if not any(t):
                    continue
                for k in np.ndindex(*((1 << j),) * p):
                    out.append(HaarIndex(mode, (j,) * p, tuple(k), tuple(t)))
    else:
        for flat in np.ndindex(*((1 << L),) * p):
            if not any(flat):
                continue
            lev, off, typ = _split_1d_index(np.array(flat))
            out.append(HaarIndex(mode, tuple(int(v) for v in lev), tuple(int(v) for v in off),
                                 tuple(int(v) for v in typ)))
    return out


# ---------------------------------------------------------------------------
# grid <-> histogram


def histogram_to_grid(f: HistogramDensity, L: int) -> np.ndarray:
    """Rasterize a histogram whose cells are all unions of ``2**L`` grid cells."""
    p = f.p
    grid = np.full((1 << L,) * p, np.nan)
    for leaf, h in zip(f.partition.leaves, f.heights):
        if max(leaf.levels) > L:
            raise ValueError("histogram is finer than the grid")
        lo, hi = leaf.int_bounds(L)
        grid[tuple(slice(a, b) for a, b in zip(lo, hi))] = h
    return grid


def grid_to_histogram(grid, rtol: float = 1e-12) -> HistogramDensity:
    """Histogram on the coarsest midpoint-cut partition on which ``grid`` is constant.

    A region is kept whole when its values agree to ``rtol`` relative to the
    grid's largest magnitude; otherwise the cut direction minimizing the
    final number of leaves is chosen (lowest dimension on ties).
    """
    grid = np.asarray(grid, dtype=float)
    L = grid_level(grid)
    p = grid.ndim
    scale = float(np.abs(grid).max()) if grid.size else 0.0
    atol = rtol * max(scale, 1.0)

    @functools.lru_cache(maxsize=None)
    def best(levels, offsets):
        block = grid[tuple(slice(o << (L - lv), (o + 1) << (L - lv)) for lv, o in zip(levels, offsets))]
        if float(block.max() - block.min()) <= atol:
            return 1, None
        choice = None
        for d in range(p):
            if levels[d] >= L:
                continue
            lv = levels[:d] + (levels[d] + 1,) + levels[d + 1:]
            lo_off = offsets[:d] + (2 * offsets[d],) + offsets[d + 1:]
            hi_off = offsets[:d] + (2 * offsets[d] + 1,) + offsets[d + 1:]
            total = best(lv, lo_off)[0] + best(lv, hi_off)[0]
            if choice is None or total < choice[0]:
                choice = (total, d)
        return choice

    leaves, heights = [], []

    def collect(levels, offsets):
        _, d = best(levels, offsets)
        if d is None:
            block = grid[tuple(slice(o << (L - lv), (o + 1) << (L - lv)) for lv, o in zip(levels, offsets))]
            leaves.append(DyadicRegion(levels, offsets))
            heights.append(float(block.mean()))
            return
        lv = levels[:d] + (levels[d] + 1,) + levels[d + 1:]
        collect(lv, offsets[:d] + (2 * offsets[d],) + offsets[d + 1:])
        collect(lv, offsets[:d] + (2 * offsets[d] + 1,) + offsets[d + 1:])

    collect((0,) * p, (0,) * p)
    best.cache_clear()
    order = sorted(range(len(leaves)), key=lambda i: leaves[i])
    partition = BinaryPartition([leaves[i] for i in order])
    return HistogramDensity(partition, [heights[i] for i in order])


def grid_hellinger(a, b) -> float:
    """Hellinger distance between two densities given on the same regular grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("grids differ in shape")
    rho2 = float(np.mean((np.sqrt(a) - np.sqrt(b)) ** 2))
    return math.sqrt(max(rho2, 0.0))


# ---------------------------------------------------------------------------
# sparsity tools


def _top_k(spectrum: HaarSpectrum, K: int) -> HaarSpectrum:
    order = np.argsort(-np.abs(spectrum.coeffs), kind="stable")
    return spectrum.subset(np.sort(order[:K]))


def top_k_density(f0_grid, K: int, mode: str = "isotropic", return_grid: bool = False):
    """Density built from the ``K`` largest Haar coefficients of ``sqrt(f0)``.

    The truncated expansion ``g_K`` is rescaled to unit L2 norm and squared,
    which gives a piecewise-constant density; it is returned as a histogram
    on the coarsest partition on which it is constant.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    f0_grid = np.asarray(f0_grid, dtype=float)
    if np.any(f0_grid < 0) or not np.all(np.isfinite(f0_grid)):
        raise ValueError("f0 grid must be finite and nonnegative")
    spectrum = haar_analyze(np.sqrt(f0_grid), mode=mode, target="sqrt_f", tol=0.0)
    kept = _top_k(spectrum, K)
    norm = math.sqrt(kept.energy())
    if norm == 0.0:
        raise ValueError("the kept coefficients are all zero; no density can be formed")
    g = haar_reconstruct(kept) / norm
    grid = g * g
    f = grid_to_histogram(grid)
    return (f, grid) if return_grid else f


def estimate_decay_exponent(spectrum, rank_range=(10, 1000)):
    """Fit ``|c_(k)| ~ C k**(-beta)`` to sorted coefficient magnitudes.

    ``spectrum`` is a ``HaarSpectrum`` (its constant term is excluded) or a
    plain array of coefficients.  Ranks are 1-based and the range is
    inclusive, clipped to the number of nonzero coefficients.

    Returns ``(beta_hat, C_hat, diagnostics)``.
    """
    if isinstance(spectrum, HaarSpectrum):
        mags = np.abs(spectrum.coeffs[~spectrum.constant_mask])
    else:
        mags = np.abs(np.asarray(spectrum, dtype=float).reshape(-1))
    mags = np.sort(mags[mags > 0])[::-1]
    lo, hi = rank_range
    lo = max(int(lo), 1)
    hi = min(int(hi), mags.shape[0])
    if hi - lo + 1 < 10:
        raise ValueError(f"need at least 10 nonzero coefficients in ranks {rank_range}, have {max(hi - lo + 1, 0)}")
    ranks = np.arange(lo, hi + 1, dtype=float)
    logk = np.log(ranks)
    logc = np.log(mags[lo - 1:hi])
    slope, intercept = np.polyfit(logk, logc, 1)
    resid = logc - (slope * logk + intercept)
    ss_tot = float(np.sum((logc - logc.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    diagnostics = {
        "rank_lo": lo,
        "rank_hi": hi,
        "n_points": int(ranks.size),
        "r_squared": r2,
        "residual_std": float(resid.std()),
    }
    return -float(slope), math.exp(intercept), diagnostics


def mixed_holder_constant(spectrum: HaarSpectrum, alpha: float) -> float:
    """Smallest ``C`` with ``|<sqrt f, psi>| <= C |R(psi)|**(alpha + 1/2)`` on the spectrum.

    Only defined for tensor spectra; the constant term is excluded.
    """
    if spectrum.mode != "tensor":
        raise ValueError("the mixed-Holder condition is stated for the tensor basis")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    wav = ~spectrum.constant_mask
    if not np.any(wav):
        return 0.0
    ratios = np.abs(spectrum.coeffs[wav]) * np.exp2((alpha + 0.5) * spectrum.levels[wav].sum(axis=1))
    return float(ratios.max())
