"""Haar spectra and their power-law decay.

The uniform density on a corner cube of side 1/4 has a finite Haar
expansion.  The Gaussian mixtures do not, but their sorted coefficients
decay like a power of the rank.  Keeping only the largest coefficients of
sqrt(f) gives a histogram approximation.
"""

import numpy as np

from sievepart import estimate_decay_exponent, haar_analyze, top_k_density
from sievepart.haar import grid_hellinger
from sievepart.synth import builtin, grid_density

# %% a finite expansion
cube = grid_density(builtin("cube3d"), 3)
for idx, c in haar_analyze(cube, "isotropic").items():
    kind = "constant" if idx.is_constant else f"level {idx.levels[0]} type {idx.typebits}"
    print(f"{kind:>22}: {c: .6f}")

# %% power-law decay of the mixtures
for name, L in (("mix2d", 10), ("mix3d", 6)):
    f = grid_density(builtin(name), L)
    for mode in ("isotropic", "tensor"):
        spec = haar_analyze(np.sqrt(f), mode, target="sqrt_f")
        beta, C, diag = estimate_decay_exponent(spec)
        print(f"{name} {mode:>9}: {len(spec):7d} coefficients, beta_hat {beta:.3f}, C_hat {C:.3g}, "
              f"R^2 {diag['r_squared']:.3f}")

# %% top-K approximations of the 2-d mixture
f = grid_density(builtin("mix2d"), 7)
for K in (4, 16, 64, 256):
    approx, grid = top_k_density(f, K, return_grid=True)
    print(f"K={K:4d}: {approx.size:5d} leaves, Hellinger {grid_hellinger(f, grid):.4f}")
