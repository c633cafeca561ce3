import json
import math

import numpy as np
import pytest

from sievepart import harness
from sievepart.estimator import RateParameters, select_sieve_size
from sievepart.harness import (
    ExperimentReport,
    StudyError,
    fit_loglog_slope,
    run_convergence_study,
    run_sparsity_diagnostic,
    run_variable_selection_study,
)

SMALL_GRID = [256, 512, 1024, 2048]


@pytest.fixture(scope="module")
def cube_study():
    return run_convergence_study("cube3d", SMALL_GRID, replications=3, n_mc=10_000, bootstrap=200, seed=1)


class TestReport:
    def test_json_is_sorted_and_complete(self):
        rep = ExperimentReport("demo", {"b": 1, "a": 2}, [{"x": 1.5, "wall_time": 0.1}], {"s": np.float64(2.0)})
        data = json.loads(rep.to_json())
        assert data["version"] == rep.version
        assert data["config"] == {"a": 2, "b": 1}
        assert "wall_time" not in json.loads(rep.to_json(include_timing=False))["records"][0]

    def test_nan_becomes_null(self):
        rep = ExperimentReport("demo", {}, [], {"v": float("nan")})
        assert json.loads(rep.to_json())["summary"]["v"] is None

    def test_write_both(self, tmp_path):
        rep = ExperimentReport("demo", {}, [{"a": 1, "b": [1, 2]}], {}, tables={"t": [{"k": 1}]})
        paths = rep.write(tmp_path, "both")
        names = sorted(p.name for p in paths)
        assert names == ["demo.csv", "demo.json", "demo_t.csv"]
        assert (tmp_path / "demo.csv").read_text() == "a,b\n1,1 2\n"

    def test_slope(self):
        x = np.array([10.0, 100.0, 1000.0])
        assert fit_loglog_slope(x, 3 * x ** -0.5) == pytest.approx(-0.5)


class TestConvergence:
    def test_records_and_summary(self, cube_study):
        assert len(cube_study.records) == 4 * 3
        for rec in cube_study.records:
            assert {"spec", "n", "I", "method", "seed", "score", "hellinger", "se", "wall_time"} <= set(rec)
        per_n = cube_study.summary["per_n"]
        assert [row["I"] for row in per_n] == [select_sieve_size(n) for n in SMALL_GRID]
        assert cube_study.summary["reference_exponent"] == pytest.approx(-1 / 3)
        lo, hi = cube_study.summary["slope_band_90"]
        assert lo <= cube_study.summary["slope"] <= hi or lo <= hi

    def test_cube_errors_decrease(self, cube_study):
        assert cube_study.summary["strictly_decreasing"]

    def test_uniform_small_and_nonincreasing(self):
        rep = run_convergence_study("uniform", [2**16, 2**17, 2**18, 2**19], replications=3,
                                    n_mc=10_000, bootstrap=200)
        assert all(row["median_hellinger"] < 0.05 for row in rep.summary["per_n"])
        assert rep.summary["slope_band_90"][1] <= 0

    def test_deterministic(self):
        a = run_convergence_study("mix2d", SMALL_GRID, replications=3, n_mc=2000, bootstrap=50, seed=9)
        b = run_convergence_study("mix2d", SMALL_GRID, replications=3, n_mc=2000, bootstrap=50, seed=9)
        assert a.to_json(include_timing=False) == b.to_json(include_timing=False)

    def test_seed_changes_data(self):
        a = run_convergence_study("mix2d", SMALL_GRID, replications=3, n_mc=2000, bootstrap=10, seed=1)
        b = run_convergence_study("mix2d", SMALL_GRID, replications=3, n_mc=2000, bootstrap=10, seed=2)
        assert a.records[0]["seed"] != b.records[0]["seed"]

    def test_threads_match_serial(self):
        kw = dict(replications=3, n_mc=2000, bootstrap=20, seed=4)
        a = run_convergence_study("mix2d", SMALL_GRID, threads=1, **kw)
        b = run_convergence_study("mix2d", SMALL_GRID, threads=2, **kw)
        assert a.to_json(include_timing=False) == b.to_json(include_timing=False)

    @pytest.mark.parametrize("grid,reps", [([100, 200, 300], 3), ([100, 50, 300, 400], 3), (SMALL_GRID, 2)])
    def test_preconditions(self, grid, reps):
        with pytest.raises(ValueError):
            run_convergence_study("uniform", grid, replications=reps)

    def test_partial_failure_keeps_records(self, monkeypatch):
        calls = {"n": 0}
        real = harness.hellinger_vs_oracle

        def flaky(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 4:
                raise FloatingPointError("boom")
            return real(*args, **kwargs)

        monkeypatch.setattr(harness, "hellinger_vs_oracle", flaky)
        with pytest.raises(StudyError) as info:
            run_convergence_study("uniform", SMALL_GRID, replications=3, n_mc=1000)
        assert len(info.value.records) == 3
        assert isinstance(info.value.__cause__, FloatingPointError)

    def test_config_echo(self):
        rep = run_convergence_study("uniform", SMALL_GRID, RateParameters(2.0, 1.5, 0.25), replications=3,
                                    n_mc=1000, bootstrap=10)
        cfg = rep.config
        assert (cfg["A"], cfg["r"], cfg["c1"]) == (2.0, 1.5, 0.25)
        assert cfg["n_grid"] == SMALL_GRID
        assert rep.summary["reference_exponent"] == pytest.approx(-1.5 / 4)


class TestVariableSelection:
    @pytest.mark.parametrize("lookahead,min_gain", [(1, 2.0), (2, 10.0)])
    def test_uniform_stops_early(self, lookahead, min_gain):
        # a two-cut lookahead ranks by the gain of both cuts, so it needs a larger threshold
        rep = run_variable_selection_study("uniform", 10, (0, 1), n=10_000, size=32, replications=3,
                                           min_gain=min_gain, lookahead=lookahead)
        assert rep.summary["max_cuts"] <= 2

    def test_all_relevant(self):
        rep = run_variable_selection_study("mix2d", 2, (0, 1), n=2000, size=8, replications=3)
        assert rep.summary["median_relevant_fraction"] == 1.0

    def test_records(self):
        rep = run_variable_selection_study("mix2d", 5, (1, 3), n=3000, size=10, replications=3, seed=2)
        assert len(rep.records) == 3
        for rec in rep.records:
            assert rec["cuts"] == len(rec["cut_dims"]) <= 9
            assert rec["relevant_cuts"] == sum(d in (1, 3) for d in rec["cut_dims"])
        assert rep.summary["median_relevant_fraction"] >= 0.9


class TestSparsity:
    def test_cube_expansion(self):
        rep = run_sparsity_diagnostic("cube3d", level=3, target="f")
        coeffs = rep.summary["coefficients"]
        assert len(coeffs) == 15
        values = sorted(round(c["coeff"], 12) for c in coeffs)
        assert values == [1.0] * 8 + [round(2 * math.sqrt(2), 12)] * 7
        assert rep.summary["beta_hat"] is None

    def test_mix2d_decay(self):
        rep = run_sparsity_diagnostic("mix2d", level=8)
        assert rep.summary["beta_hat"] > 0.5
        rows = rep.tables["sorted"]
        assert rows[0]["rank"] == 1
        mags = [r["abs_coeff"] for r in rows]
        assert mags == sorted(mags, reverse=True)

    def test_holder_constant_reported(self):
        rep = run_sparsity_diagnostic("mix2d", level=6, alpha=0.5)
        assert rep.summary["holder_C_hat"] > 0

    def test_default_levels(self):
        assert run_sparsity_diagnostic("mix3d").summary["L"] == 6

    def test_grid_budget(self):
        with pytest.raises(MemoryError):
            run_sparsity_diagnostic("uniform:3", level=9)

    def test_write(self, tmp_path):
        rep = run_sparsity_diagnostic("mix2d", level=5)
        names = sorted(p.name for p in rep.write(tmp_path, "both"))
        assert names == ["sparsity.csv", "sparsity.json", "sparsity_by_level.csv", "sparsity_sorted.csv"]
