"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (and immediately, with ``pytest -s``).
"""

import json
import math
import re
import time

import numpy as np

from sievepart.cli import main
from sievepart.density import HistogramDensity, hellinger, kullback_leibler
from sievepart.estimator import (
    exhaustive_fit,
    greedy_fit,
    mle_weights,
    partition_score,
    tabulate_counts,
)
from sievepart.geometry import (
    BinaryPartition,
    DyadicRegion,
    common_refinement,
    enumerate_partitions,
    partition_count_bound,
    split_region,
)
from sievepart.haar import estimate_decay_exponent, haar_analyze
from sievepart.harness import run_convergence_study, run_sparsity_diagnostic, run_variable_selection_study

# measured on the first run of this suite (46 of 50 instances tie), then frozen
EQUALITY_FLOOR = 0.6


def random_partition(rng, p, size):
    part = BinaryPartition.trivial(p)
    for _ in range(size - 1):
        part = part.refine(int(rng.integers(part.size)), int(rng.integers(p)))
    return part


def random_histogram(rng, zeros):
    part = random_partition(rng, 2, int(rng.integers(1, 9)))
    w = rng.random(part.size) + 0.05
    if zeros:
        w[rng.random(part.size) < 0.3] = 0.0
        if not np.any(w > 0):
            w[0] = 1.0
    return HistogramDensity(part, w / np.dot(w, part.volumes))


def brute_force_count(p, size):
    frontier = {frozenset([DyadicRegion.unit(p)])}
    for _ in range(size - 1):
        frontier = {
            (leaves - {leaf}) | set(split_region(leaf, d))
            for leaves in frontier for leaf in leaves for d in range(p)
        }
    return len(frontier)


def test_criterion_1_haar_golden(record_criterion):
    start = time.perf_counter()
    worst = 0.0
    ok = True
    for L in (2, 3, 4):
        grid = np.zeros((1 << L,) * 3)
        q = 1 << (L - 2)
        grid[:q, :q, :q] = 64.0
        spec = haar_analyze(grid, "isotropic")
        got = spec.as_dict()
        seen = {"const": 0, 0: 0, 1: 0}
        for idx, c in got.items():
            if idx.is_constant:
                want, key = 1.0, "const"
            elif idx.levels[0] == 0 and idx.offsets == (0, 0, 0):
                want, key = 1.0, 0
            elif idx.levels[0] == 1 and idx.offsets == (0, 0, 0):
                want, key = 2 * math.sqrt(2), 1
            else:
                want, key = 0.0, None
            worst = max(worst, abs(c - want))
            if key is not None:
                seen[key] += 1
        ok &= seen == {"const": 1, 0: 7, 1: 7}
    elapsed = time.perf_counter() - start
    ok &= worst <= 1e-12 and elapsed < 1.0
    record_criterion(1, ok, f"max |error| {worst:.1e}, 1+7+7 terms, {elapsed:.3f}s")
    assert ok


def test_criterion_2_partition_counts(record_criterion):
    start = time.perf_counter()
    rows = []
    ok = True
    for p in (1, 2, 3):
        for size in (1, 2, 3, 4):
            got = len(enumerate_partitions(p, size))
            want = brute_force_count(p, size)
            ok &= got == want and got <= partition_count_bound(p, size)
            rows.append(f"({p},{size})={got}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10.0
    record_criterion(2, ok, " ".join(rows) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_3_oracle_equivalence(record_criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(20240601)
    equal = 0
    dominated = True
    for _ in range(50):
        size = int(rng.integers(1, 5))
        n = int(rng.integers(1, 201))
        a, b = rng.uniform(0.5, 4, size=2)
        x = rng.beta(a, b, size=(n, 2))
        e = exhaustive_fit(x, size).score
        g = greedy_fit(x, size).score
        dominated &= e >= g - 1e-12
        equal += abs(e - g) <= 1e-9
    elapsed = time.perf_counter() - start
    ok = dominated and equal / 50 >= EQUALITY_FLOOR and elapsed < 30.0
    record_criterion(3, ok, f"exhaustive >= greedy on all: {dominated}, equal on {equal}/50, {elapsed:.2f}s")
    assert ok


def test_criterion_4_score_identities(record_criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    nonneg = monotone = True
    for _ in range(1000):
        p = int(rng.integers(1, 4))
        part = random_partition(rng, p, int(rng.integers(1, 12)))
        x = rng.beta(rng.uniform(0.5, 3), rng.uniform(0.5, 3), size=(int(rng.integers(1, 300)), p))
        score = partition_score(part, x)
        counts = tabulate_counts(part, x)
        beta = mle_weights(counts, part.volumes)
        charged = counts > 0
        loglik = float(np.sum(counts[charged] * np.log(beta[charged])))
        worst = max(worst, abs(score - loglik))
        nonneg &= score >= -1e-12
        finer = part.refine(int(rng.integers(part.size)), int(rng.integers(p)))
        monotone &= partition_score(finer, x) >= score - 1e-12
    ok = worst <= 1e-10 and nonneg and monotone
    record_criterion(4, ok, f"max |score - loglik| {worst:.1e}, nonnegative {nonneg}, monotone {monotone}")
    assert ok


def test_criterion_5_metric_suite(record_criterion):
    rng = np.random.default_rng(5)
    axioms = bounded = dominance = True
    shared = 0
    for _ in range(1000):
        f, g, h = (random_histogram(rng, zeros=True) for _ in range(3))
        fg = hellinger(f, g)
        bounded &= 0.0 <= fg <= math.sqrt(2)
        axioms &= hellinger(f, f) == 0.0
        axioms &= abs(fg - hellinger(g, f)) <= 1e-14
        equal_ae = all(f.heights[i] == g.heights[j] for i, j, _ in common_refinement(f.partition, g.partition))
        axioms &= (fg == 0.0) == equal_ae
        axioms &= hellinger(f, h) <= fg + hellinger(g, h) + 1e-12
        kl = kullback_leibler(f, g)
        if math.isfinite(kl):
            shared += 1
            dominance &= fg ** 2 <= kl + 1e-12
        # equal a.e. but written on a finer partition
        fine = f.partition.refine(0, int(rng.integers(2)))
        axioms &= hellinger(f, f.refined(fine)) <= 1e-12
        a, b = random_histogram(rng, zeros=False), random_histogram(rng, zeros=False)
        shared += 1
        dominance &= hellinger(a, b) ** 2 <= kullback_leibler(a, b) + 1e-12
    halves = BinaryPartition.trivial(1).refine(0, 0)
    closed = abs(hellinger(HistogramDensity.uniform(1), HistogramDensity(halves, [2.0, 0.0]))
                 - math.sqrt(2 - math.sqrt(2)))
    ok = axioms and bounded and dominance and closed <= 1e-12
    record_criterion(5, ok, f"axioms {axioms}, bounded {bounded}, rho^2 <= K on {shared} shared-support "
                            f"pairs {dominance}, closed form error {closed:.1e}")
    assert ok


def test_criterion_6_convergence(record_criterion):
    start = time.perf_counter()
    report = run_convergence_study("mix2d", [2 ** k for k in range(9, 15)], replications=5, seed=0)
    elapsed = time.perf_counter() - start
    s = report.summary
    medians = [row["median_hellinger"] for row in s["per_n"]]
    lo, hi = s["slope_band_90"]
    ok = s["strictly_decreasing"] and s["slope"] <= -0.15 and (hi < 0 or lo > 0) and elapsed < 600
    record_criterion(6, ok, "medians " + ", ".join(f"{m:.3f}" for m in medians)
                     + f"; slope {s['slope']:.3f}, band [{lo:.3f}, {hi:.3f}], {elapsed:.1f}s")
    assert ok


def test_criterion_7_sparsity(record_criterion):
    betas = {}
    for name in ("mix2d", "mix3d"):
        for mode in ("isotropic", "tensor"):
            for target in ("sqrt_f", "f"):
                betas[(name, mode, target)] = run_sparsity_diagnostic(name, mode=mode, target=target).summary["beta_hat"]
    synthetic, _, _ = estimate_decay_exponent(np.arange(1, 5001, dtype=float) ** -0.9)
    ok = all(b is not None and b > 0.5 for b in betas.values()) and abs(synthetic - 0.9) <= 1e-6
    low = min(betas, key=betas.get)
    default = ", ".join(f"{n} {betas[(n, 'isotropic', 'sqrt_f')]:.3f}" for n in ("mix2d", "mix3d"))
    record_criterion(7, ok, f"beta_hat (isotropic, sqrt f): {default}; smallest over modes/targets "
                            f"{betas[low]:.3f} {low}; synthetic {synthetic:.9f}")
    assert ok


def test_criterion_8_variable_selection(record_criterion):
    start = time.perf_counter()
    report = run_variable_selection_study("mix2d", 10, (0, 1), n=10_000, size=32, replications=5, seed=0)
    elapsed = time.perf_counter() - start
    frac = report.summary["median_relevant_fraction"]
    ok = frac is not None and frac >= 0.9 and elapsed < 180
    per_rep = ", ".join(f"{r['relevant_fraction']:.2f}" for r in report.records)
    record_criterion(8, ok, f"median relevant fraction {frac:.3f} (runs {per_rep}), {elapsed:.1f}s")
    assert ok


STUDIES = {
    "convergence": ["study", "convergence", "--spec", "mix2d", "--n-grid", "256,512,1024,2048",
                    "--replications", "3", "--n-mc", "5000", "--bootstrap", "100"],
    "varsel": ["study", "varsel", "--inner", "mix2d", "--p", "6", "--relevant", "0,1", "--n", "2000",
               "--size", "16", "--replications", "3"],
    "sparsity": ["study", "sparsity", "--spec", "mix2d", "--level", "7", "--alpha", "0.5"],
}


def _strip_timing(text):
    return re.sub(r'\n\s*"wall_time": [^\n]*', "", text).replace(",\n    }", "\n    }")


def test_criterion_9_determinism(record_criterion, tmp_path):
    ok = True
    details = []
    for kind, argv in STUDIES.items():
        texts = []
        for run in ("a", "b"):
            out = tmp_path / run / kind
            assert main(argv + ["--seed", "17", "--output-dir", str(out)]) == 0
            texts.append((out / f"{kind}.json").read_text())
        parsed = [json.loads(t) for t in texts]
        for d in parsed:
            for r in d["records"]:
                r.pop("wall_time", None)
        same = parsed[0] == parsed[1] and _strip_timing(texts[0]) == _strip_timing(texts[1])
        ok &= same
        details.append(f"{kind} {'identical' if same else 'DIFFERENT'}")
    record_criterion(9, ok, ", ".join(details) + " (timing fields excluded)")
    assert ok
