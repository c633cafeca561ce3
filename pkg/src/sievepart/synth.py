"""Reference densities on the unit cube, with exact cell masses and samplers.

Gaussian mixtures are truncated to the cube and renormalized.  Draws use
numpy's counter-based ``Philox`` bit generator keyed by the 64-bit seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy.special import ndtr

from .density import DensityOracle
from .geometry import DyadicRegion, clamp_points

__all__ = [
    "Uniform",
    "DyadicCube",
    "GaussianMixture",
    "ProductEmbedding",
    "DensitySpec",
    "eval_density",
    "sample_density",
    "cell_probabilities",
    "grid_density",
    "oracle",
    "builtin",
    "spec_from_dict",
    "spec_to_dict",
    "SamplingError",
    "make_rng",
]

_GL_NODES = 64


class SamplingError(RuntimeError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator for a 64-bit seed (or a ``SeedSequence``)."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Uniform:
    p: int = 2

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")


@dataclass(frozen=True)
class DyadicCube:
    """Uniform density on one dyadic region: ``1/vol`` inside, 0 outside."""

    region: DyadicRegion

    @property
    def p(self) -> int:
        return self.region.p


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    weights: tuple
    means: tuple
    covariances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        c = np.asarray(self.covariances, dtype=float)
        if w.ndim != 1 or m.ndim != 2 or c.ndim != 3 or not (w.shape[0] == m.shape[0] == c.shape[0]):
            raise ValueError("weights (k,), means (k, p), covariances (k, p, p) required")
        if c.shape[1:] != (m.shape[1], m.shape[1]):
            raise ValueError("covariance shape does not match the means")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        for cov in c:
            if not np.allclose(cov, cov.T, rtol=0, atol=0):
                raise ValueError("covariances must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise ValueError("covariances must be positive definite")

    @property
    def p(self) -> int:
        return len(self.means[0])

    @cached_property
    def _arrays(self):
        return (np.asarray(self.weights, float), np.asarray(self.means, float),
                np.asarray(self.covariances, float))

    @cached_property
    def component_masses(self) -> np.ndarray:
        """Probability each component puts on the unit cube."""
        _, means, covs = self._arrays
        return np.array([_box_mass(m, c, np.zeros(len(m)), np.ones(len(m))) for m, c in zip(means, covs)])

    @cached_property
    def cube_mass(self) -> float:
        w, _, _ = self._arrays
        return float(np.dot(w, self.component_masses))

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Untruncated mixture density."""
        w, means, covs = self._arrays
        out = np.zeros(x.shape[0])
        for wk, m, c in zip(w, means, covs):
            out += wk * _normal_pdf(x, m, c)
        return out


@dataclass(frozen=True)
class ProductEmbedding:
    """``inner`` on the coordinates ``coords`` of a ``p``-cube, uniform on the others."""

    inner: object
    p: int
    coords: tuple

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coords)
        object.__setattr__(self, "coords", coords)
        if len(set(coords)) != len(coords) or any(not 0 <= c < self.p for c in coords):
            raise ValueError("coords must be distinct indices below p")
        if len(coords) != self.inner.p:
            raise ValueError(f"inner density has {self.inner.p} coordinates, got {len(coords)}")


DensitySpec = Union[Uniform, DyadicCube, GaussianMixture, ProductEmbedding]


def _normal_pdf(x, mean, cov):
    diff = x - mean
    prec = np.linalg.inv(cov)
    q = np.einsum("ij,jk,ik->i", diff, prec, diff)
    norm = math.sqrt((2 * math.pi) ** len(mean) * np.linalg.det(cov))
    return np.exp(-0.5 * q) / norm


def _blocks(cov):
    """Connected groups of coordinates under nonzero covariance."""
    p = cov.shape[0]
    seen, groups = set(), []
    for start in range(p):
        if start in seen:
            continue
        stack, group = [start], []
        seen.add(start)
        while stack:
            i = stack.pop()
            group.append(i)
            for j in range(p):
                if j not in seen and cov[i, j] != 0:
                    seen.add(j)
                    stack.append(j)
        groups.append(sorted(group))
    return groups


def _bivariate_box_masses(mean, cov, edges_x, edges_y, nodes=16):
    """Mass of a correlated 2-d normal on every rectangle of a tensor grid.

    Integrates the x-marginal times the conditional y-probability with
    Gauss-Legendre nodes inside each x-interval.
    """
    sx = math.sqrt(cov[0, 0])
    sy = math.sqrt(cov[1, 1])
    rho = cov[0, 1] / (sx * sy)
    cond_sd = sy * math.sqrt(1.0 - rho * rho)
    t, w = np.polynomial.legendre.leggauss(nodes)
    a, b = edges_x[:-1], edges_x[1:]
    half = 0.5 * (b - a)
    xs = (0.5 * (a + b))[:, None] + half[:, None] * t[None, :]
    wx = half[:, None] * w[None, :]
    dens = np.exp(-0.5 * ((xs - mean[0]) / sx) ** 2) / (sx * math.sqrt(2 * math.pi))
    cond_mean = mean[1] + rho * sy / sx * (xs - mean[0])
    cdf = ndtr((edges_y[None, None, :] - cond_mean[..., None]) / cond_sd)
    py = np.diff(cdf, axis=2)
    return np.einsum("in,in,inj->ij", wx, dens, py)


def _box_mass(mean, cov, lo, hi):
    """Normal probability of the box ``[lo, hi]``: erf products for independent
    coordinates, 64x64 Gauss-Legendre for correlated pairs."""
    mass = 1.0
    for group in _blocks(cov):
        if len(group) == 1:
            i = group[0]
            s = math.sqrt(cov[i, i])
            mass *= float(ndtr((hi[i] - mean[i]) / s) - ndtr((lo[i] - mean[i]) / s))
        elif len(group) == 2:
            i, j = group
            sub = cov[np.ix_(group, group)]
            mass *= float(_bivariate_box_masses(mean[group], sub, np.array([lo[i], hi[i]]),
                                                np.array([lo[j], hi[j]]), nodes=_GL_NODES)[0, 0])
        else:
            raise NotImplementedError("correlated blocks of more than two coordinates")
    return mass


def eval_density(spec: DensitySpec, y) -> np.ndarray:
    """Density of ``spec`` at points in the closed unit cube."""
    x = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.p:
        raise ValueError(f"points have dimension {x.shape[1]}, spec has {spec.p}")
    x = clamp_points(x)
    if isinstance(spec, Uniform):
        return np.ones(x.shape[0])
    if isinstance(spec, DyadicCube):
        lo, hi = spec.region.float_bounds()
        inside = np.all((x >= lo) & (x < hi), axis=1)
        return np.where(inside, 1.0 / float(spec.region.volume), 0.0)
    if isinstance(spec, GaussianMixture):
        return spec.pdf(x) / spec.cube_mass
    if isinstance(spec, ProductEmbedding):
        return eval_density(spec.inner, x[:, list(spec.coords)])
    raise TypeError(f"unknown density spec {spec!r}")


def sample_density(spec: DensitySpec, n: int, seed: int = 0) -> np.ndarray:
    """``n`` independent draws from ``spec`` as an ``(n, p)`` array."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return _sample(spec, n, make_rng(seed))


def _sample(spec, n, rng):
    if isinstance(spec, Uniform):
        return rng.random((n, spec.p))
    if isinstance(spec, DyadicCube):
        lo, hi = spec.region.float_bounds()
        return lo + (hi - lo) * rng.random((n, spec.p))
    if isinstance(spec, GaussianMixture):
        w, means, covs = spec._arrays
        # truncated mixture weights: w_k * mass_k / Z
        tw = w * spec.component_masses
        if not tw.sum() > 0:
            raise SamplingError("the mixture puts no mass on the unit cube (acceptance rate 0)")
        tw = tw / tw.sum()
        labels = rng.choice(len(tw), size=n, p=tw)
        out = np.empty((n, spec.p))
        for k in range(len(tw)):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = _truncated_normal(means[k], covs[k], idx.size, rng)
        return out
    if isinstance(spec, ProductEmbedding):
        out = rng.random((n, spec.p))
        out[:, list(spec.coords)] = _sample(spec.inner, n, rng)
        return out
    raise TypeError(f"unknown density spec {spec!r}")


def _truncated_normal(mean, cov, n, rng):
    chol = np.linalg.cholesky(cov)
    got = []
    have = 0
    drawn = 0
    while have < n:
        batch = max(2 * (n - have), 64)
        z = mean + rng.standard_normal((batch, len(mean))) @ chol.T
        ok = z[np.all((z >= 0.0) & (z < 1.0), axis=1)]
        drawn += batch
        got.append(ok)
        have += ok.shape[0]
        if drawn >= 10_000 and have / drawn < 1e-3:
            raise SamplingError(f"rejection acceptance rate {have / drawn:.2e} is below 1e-3")
    return np.concatenate(got)[:n]


def cell_probabilities(spec: DensitySpec, L: int) -> np.ndarray:
    """Probability of every cell of the ``2**L`` per side grid, shape ``(2**L,)*p``."""
    p = spec.p
    m = 1 << L
    if isinstance(spec, Uniform):
        return np.full((m,) * p, 1.0 / m ** p)
    if isinstance(spec, DyadicCube):
        out = np.zeros((m,) * p)
        region = spec.region
        depth = max(L, max(region.levels))
        lo, hi = region.int_bounds(depth)
        # exact overlap lengths per dimension, in units of 2**-depth
        factors = []
        for d in range(p):
            cell_lo = np.arange(m) << (depth - L)
            cell_hi = (np.arange(m) + 1) << (depth - L)
            ov = np.clip(np.minimum(cell_hi, hi[d]) - np.maximum(cell_lo, lo[d]), 0, None)
            factors.append(np.ldexp(ov.astype(float), -depth))
        vol = np.ones(())
        for fct in factors:
            vol = np.multiply.outer(vol, fct)
        return vol / float(region.volume)
    if isinstance(spec, GaussianMixture):
        w, means, covs = spec._arrays
        edges = np.linspace(0.0, 1.0, m + 1)
        total = np.zeros((m,) * p)
        for wk, mean, cov in zip(w, means, covs):
            comp = np.ones(())
            axes = []
            for group in _blocks(cov):
                if len(group) == 1:
                    i = group[0]
                    s = math.sqrt(cov[i, i])
                    piece = np.diff(ndtr((edges - mean[i]) / s))
                elif len(group) == 2:
                    piece = _bivariate_box_masses(mean[group], cov[np.ix_(group, group)], edges, edges)
                else:
                    raise NotImplementedError("correlated blocks of more than two coordinates")
                comp = np.multiply.outer(comp, piece)
                axes.extend(group)
            total += wk * np.transpose(comp, np.argsort(axes))
        return total / spec.cube_mass
    if isinstance(spec, ProductEmbedding):
        inner = cell_probabilities(spec.inner, L)
        others = [d for d in range(p) if d not in spec.coords]
        out = inner
        for _ in others:
            out = np.multiply.outer(out, np.full(m, 1.0 / m))
        axes = list(spec.coords) + others
        return np.transpose(out, np.argsort(axes))
    raise TypeError(f"unknown density spec {spec!r}")


def grid_density(spec: DensitySpec, L: int) -> np.ndarray:
    """Cell averages of the density on the ``2**L`` grid (its L2 projection)."""
    return cell_probabilities(spec, L) * float(1 << (L * spec.p))


def oracle(spec: DensitySpec, name: str = None) -> DensityOracle:
    return DensityOracle(
        spec.p,
        lambda x: eval_density(spec, x),
        lambda n, seed: sample_density(spec, n, seed),
        name=name or type(spec).__name__,
    )


# ---------------------------------------------------------------------------
# built-in examples

_S2 = 0.05 ** 2


def _mix2d():
    cov = ((_S2, 0.0), (0.0, _S2))
    return GaussianMixture((0.4, 0.6), ((0.25, 0.25), (0.75, 0.75)), (cov, cov))


def _mix3d():
    # off-diagonal "0.03^2" read literally as 0.0009
    c1 = ((_S2, 0.03 ** 2, 0.0), (0.03 ** 2, _S2, 0.0), (0.0, 0.0, _S2))
    c2 = ((_S2, 0.0, 0.0), (0.0, _S2, 0.0), (0.0, 0.0, _S2))
    return GaussianMixture((0.4, 0.6), ((0.25, 0.25, 0.25), (0.75, 0.75, 0.75)), (c1, c2))


def _cube3d():
    return DyadicCube(DyadicRegion((2, 2, 2), (0, 0, 0)))


_BUILTINS = {"cube3d": _cube3d, "mix2d": _mix2d, "mix3d": _mix3d}


def builtin(name: str) -> DensitySpec:
    """Parse a built-in spec name.

    ``uniform`` (p=2), ``uniform:<p>``, ``cube3d``, ``mix2d``, ``mix3d`` and
    ``embed:<inner>:<p>:<c1,c2,...>``.
    """
    parts = name.split(":")
    head = parts[0]
    if head == "uniform":
        return Uniform(int(parts[1]) if len(parts) > 1 else 2)
    if head in _BUILTINS and len(parts) == 1:
        return _BUILTINS[head]()
    if head == "embed" and len(parts) == 4:
        inner = builtin(parts[1])
        coords = tuple(int(c) for c in parts[3].split(",")) if parts[3] else ()
        return ProductEmbedding(inner, int(parts[2]), coords)
    raise ValueError(f"unknown built-in density {name!r}")


def spec_to_dict(spec: DensitySpec) -> dict:
    if isinstance(spec, Uniform):
        return {"variant": "uniform", "p": spec.p}
    if isinstance(spec, DyadicCube):
        return {"variant": "dyadic-cube", "p": spec.p, "region": spec.region.to_text()}
    if isinstance(spec, GaussianMixture):
        return {
            "variant": "gaussian-mixture",
            "p": spec.p,
            "weights": [float(v) for v in spec.weights],
            "means": [[float(v) for v in m] for m in spec.means],
            "covariances": [[[float(v) for v in row] for row in c] for c in spec.covariances],
        }
    if isinstance(spec, ProductEmbedding):
        return {"variant": "product-embedding", "p": spec.p, "coords": list(spec.coords),
                "inner": spec_to_dict(spec.inner)}
    raise TypeError(f"unknown density spec {spec!r}")


def spec_from_dict(data: dict) -> DensitySpec:
    variant = data["variant"]
    if variant == "uniform":
        return Uniform(int(data["p"]))
    if variant == "dyadic-cube":
        return DyadicCube(DyadicRegion.from_text(data["region"]))
    if variant == "gaussian-mixture":
        return GaussianMixture(tuple(data["weights"]), tuple(tuple(m) for m in data["means"]),
                               tuple(tuple(tuple(r) for r in c) for c in data["covariances"]))
    if variant == "product-embedding":
        return ProductEmbedding(spec_from_dict(data["inner"]), int(data["p"]), tuple(data["coords"]))
    raise ValueError(f"unknown variant {variant!r}")


def resolve(spec) -> DensitySpec:
    """Accept a spec object, a built-in name, a JSON string or a dict."""
    if isinstance(spec, (Uniform, DyadicCube, GaussianMixture, ProductEmbedding)):
        return spec
    if isinstance(spec, dict):
        return spec_from_dict(spec)
    if isinstance(spec, str):
        text = spec.strip()
        if text.startswith("{"):
            return spec_from_dict(json.loads(text))
        return builtin(text)
    raise TypeError(f"cannot interpret {spec!r} as a density spec")
