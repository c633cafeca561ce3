import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sievepart.density import (
    DensityOracle,
    HistogramDensity,
    evaluate,
    hellinger,
    hellinger_vs_oracle,
    kullback_leibler,
)
from sievepart.geometry import BinaryPartition

HALVES = BinaryPartition.trivial(1).refine(0, 0)
UNIFORM1 = HistogramDensity.uniform(1)
LEFT = HistogramDensity(HALVES, [2.0, 0.0])
RIGHT = HistogramDensity(HALVES, [0.0, 2.0])


def random_histogram(rng, p=2, max_size=8, zeros=False):
    part = BinaryPartition.trivial(p)
    for _ in range(int(rng.integers(0, max_size))):
        part = part.refine(int(rng.integers(part.size)), int(rng.integers(p)))
    w = rng.random(part.size) + (0.0 if zeros else 0.05)
    if zeros:
        w[rng.random(part.size) < 0.3] = 0.0
        if not np.any(w > 0):
            w[0] = 1.0
    h = w / np.dot(w, part.volumes)
    return HistogramDensity(part, h)


def left_half_oracle(x):
    return np.where(np.asarray(x)[:, 0] < 0.5, 2.0, 0.0)


class TestHistogramDensity:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            HistogramDensity(HALVES, [2.5, -0.5])

    def test_rejects_bad_mass(self):
        with pytest.raises(ValueError):
            HistogramDensity(HALVES, [1.0, 0.5])

    def test_renormalizes_small_drift(self):
        f = HistogramDensity(HALVES, [1.5 + 1e-10, 0.5])
        assert abs(f.mass() - 1.0) <= 1e-12

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            HistogramDensity(HALVES, [1.0])

    def test_json_roundtrip(self):
        part = BinaryPartition.trivial(2).refine(0, 1).refine(0, 0)
        w = np.array([2.0, 1.0, 0.5])
        f = HistogramDensity(part, w / np.dot(w, part.volumes))
        data = json.loads(f.to_json())
        assert set(data) == {"p", "leaves", "heights"}
        g = HistogramDensity.from_json(f.to_json())
        assert g.partition == f.partition
        np.testing.assert_array_equal(g.heights, f.heights)

    def test_from_dict_reorders(self):
        data = {"p": 1, "leaves": ["1:1", "1:0"], "heights": [0.5, 1.5]}
        f = HistogramDensity.from_dict(data)
        assert f(np.array([[0.2]]))[0] == 1.5

    def test_refined_keeps_function(self):
        f = HistogramDensity(HALVES, [1.5, 0.5])
        fine = HALVES.refine(1, 0)
        g = f.refined(fine)
        assert hellinger(f, g) == 0.0
        np.testing.assert_array_equal(g.heights, [1.5, 0.5, 0.5])


class TestEvaluate:
    def test_uniform(self):
        x = np.random.default_rng(0).random((10, 3))
        np.testing.assert_array_equal(evaluate(HistogramDensity.uniform(3), x), 1.0)

    def test_leaf_lookup(self):
        part = BinaryPartition.trivial(2).refine(0, 0)
        f = HistogramDensity(part, [1.5, 0.5])
        assert evaluate(f, [[0.2, 0.9]])[0] == 1.5

    def test_boundary_goes_up(self):
        f = HistogramDensity(HALVES, [1.5, 0.5])
        assert evaluate(f, [[0.5]])[0] == 0.5
        assert evaluate(f, [[1.0]])[0] == 0.5

    def test_outside_rejected(self):
        with pytest.raises(ValueError):
            evaluate(UNIFORM1, [[1.2]])


class TestHellinger:
    def test_identity(self):
        assert hellinger(LEFT, LEFT) == 0.0

    def test_closed_form(self):
        assert hellinger(UNIFORM1, LEFT) == pytest.approx(math.sqrt(2 - math.sqrt(2)), abs=1e-12)

    def test_disjoint_supports(self):
        assert hellinger(LEFT, RIGHT) == pytest.approx(math.sqrt(2), abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hellinger(UNIFORM1, HistogramDensity.uniform(2))

    def test_metric_axioms(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            f, g, h = (random_histogram(rng, zeros=True) for _ in range(3))
            fg = hellinger(f, g)
            assert 0.0 <= fg <= math.sqrt(2)
            assert fg == pytest.approx(hellinger(g, f), abs=1e-14)
            assert hellinger(f, h) <= fg + hellinger(g, h) + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_refinement_invariance(self, seed):
        rng = np.random.default_rng(seed)
        f = random_histogram(rng)
        g = random_histogram(rng)
        fine = f.partition
        for _ in range(4):
            fine = fine.refine(int(rng.integers(fine.size)), int(rng.integers(2)))
        assert hellinger(f.refined(fine), g) == pytest.approx(hellinger(f, g), abs=1e-12)


class TestKullbackLeibler:
    def test_identity(self):
        assert kullback_leibler(LEFT, LEFT) == 0.0

    def test_hand_value(self):
        assert kullback_leibler(LEFT, UNIFORM1) == pytest.approx(math.log(2), abs=1e-15)

    def test_support_mismatch(self):
        assert kullback_leibler(UNIFORM1, LEFT) == math.inf

    def test_dominates_squared_hellinger(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            f, g = random_histogram(rng), random_histogram(rng)
            assert hellinger(f, g) ** 2 <= kullback_leibler(f, g) + 1e-12


class TestHellingerVsOracle:
    def test_uniform_vs_uniform(self):
        oracle = DensityOracle(1, lambda x: np.ones(len(x)))
        rho, se = hellinger_vs_oracle(UNIFORM1, oracle, n_mc=2000, seed=3)
        assert rho == 0.0 and se == 0.0

    def test_closed_form(self):
        oracle = DensityOracle(1, left_half_oracle)
        rho, se = hellinger_vs_oracle(UNIFORM1, oracle, n_mc=20000, seed=4)
        target = 2 - math.sqrt(2)
        assert abs(rho**2 - target) <= 3 * se

    def test_deterministic(self):
        oracle = DensityOracle(1, left_half_oracle)
        assert hellinger_vs_oracle(UNIFORM1, oracle, 5000, 7) == hellinger_vs_oracle(UNIFORM1, oracle, 5000, 7)

    def test_se_scaling(self):
        # uses a smooth oracle so that the estimate has nonzero variance
        f = HistogramDensity(HALVES, [1.2, 0.8])
        oracle = DensityOracle(1, lambda x: 1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0]))
        se1 = np.mean([hellinger_vs_oracle(f, oracle, 4000, s)[1] for s in range(20)])
        se2 = np.mean([hellinger_vs_oracle(f, oracle, 8000, s)[1] for s in range(20)])
        assert se2 / se1 == pytest.approx(1 / math.sqrt(2), rel=0.25)

    def test_negative_oracle(self):
        oracle = DensityOracle(1, lambda x: -np.ones(len(x)))
        with pytest.raises(ValueError, match="invalid density"):
            hellinger_vs_oracle(UNIFORM1, oracle, 1000)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            hellinger_vs_oracle(UNIFORM1, DensityOracle(1, left_half_oracle), n_mc=999)

    def test_matches_exact_for_histogram_oracle(self):
        rng = np.random.default_rng(5)
        f, g = random_histogram(rng), random_histogram(rng)
        rho, se = hellinger_vs_oracle(f, DensityOracle.from_histogram(g), n_mc=50000, seed=1)
        assert abs(rho**2 - hellinger(f, g) ** 2) <= 4 * se + 1e-12
