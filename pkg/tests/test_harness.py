"""Probe-set scoring, convergence tracking, sweeps, and CSV emission."""

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtplace import ddl
from dtplace.ddl import TrainConfig, build_ensemble
from dtplace.errors import ContractError, DomainError, InvalidConfigError
from dtplace.harness import (
    ComparisonRow,
    EvalPoint,
    ExperimentReport,
    convergence_rate,
    ensemble_probe_costs,
    make_probe,
    run_comparison,
    run_training_experiment,
    scheme_means,
    with_alpha,
    write_comparison_csv,
    write_config_sidecar,
    write_trace_csv,
)
from dtplace.scenario import GeneratorConfig

MINI = GeneratorConfig(num_devices=8, num_dts=3, num_edge_servers=2, server_seed=5)

FULL_SHAPE = GeneratorConfig(server_seed=5)  # 4^15 assignments, over the cap


def points_equal(a, b):
    """Tuple equality except NaN convergence values compare equal."""
    return len(a) == len(b) and all(
        p.iteration == q.iteration
        and np.array_equal(p.convergence, q.convergence, equal_nan=True)
        and p.mean_probe_q == q.mean_probe_q
        for p, q in zip(a, b)
    )


def mini_train(iterations=40, **kw):
    kw.setdefault("num_dnns", 3)
    kw.setdefault("db_capacity", 16)
    kw.setdefault("batch_size", 8)
    kw.setdefault("hidden_sizes", (8,))
    kw.setdefault("generator", MINI)
    kw.setdefault("seed", 1)
    return TrainConfig(iterations=iterations, **kw)


class TestConvergenceRate:
    def test_identical_vectors_give_one(self):
        assert convergence_rate([3.0, 7.0, 1.5], [3.0, 7.0, 1.5]) == 1.0

    def test_halved_cost_gives_half(self):
        assert convergence_rate([2.0], [1.0]) == 0.5

    def test_symmetric(self):
        old = np.array([1.0, 5.0, 2.0])
        new = np.array([4.0, 5.0, 0.5])
        assert convergence_rate(old, new) == convergence_rate(new, old)

    def test_length_mismatch_rejected(self):
        with pytest.raises(DomainError):
            convergence_rate([1.0, 2.0], [1.0])

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            convergence_rate([], [])

    def test_nonpositive_rejected(self):
        with pytest.raises(DomainError):
            convergence_rate([1.0, 0.0], [1.0, 1.0])
        with pytest.raises(DomainError):
            convergence_rate([1.0], [-2.0])

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0.1, max_value=1e6),
                st.floats(min_value=0.1, max_value=1e6),
            ),
            min_size=1,
            max_size=30,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_bounded_and_tight_only_at_equality(self, pairs):
        old = np.array([p[0] for p in pairs])
        new = np.array([p[1] for p in pairs])
        c = convergence_rate(old, new)
        assert 0.0 < c <= 1.0
        assert (c == 1.0) == bool(np.all(old == new))


class TestProbeSet:
    def test_reproducible(self):
        a = make_probe(100, 5, MINI)
        b = make_probe(100, 5, MINI)
        assert np.array_equal(a.tables, b.tables)
        assert len(a) == 5

    def test_count_must_be_positive(self):
        with pytest.raises(ContractError):
            make_probe(100, 0, MINI)

    def test_batched_costs_match_per_scenario_choice(self):
        probe = make_probe(300, 6, MINI)
        ens = build_ensemble(mini_train())
        batched = ensemble_probe_costs(ens, probe)
        singles = [ddl.best_of_k(ens, s).cost for s in probe.scenarios]
        assert np.allclose(batched, singles, rtol=1e-9)

    def test_scheme_means_ordering_and_cache(self):
        probe = make_probe(40, 8, MINI)
        means = scheme_means(probe)
        assert set(means) == {"exact", "ro", "co", "ad"}
        for name in ("ro", "co", "ad"):
            assert means["exact"] <= means[name]
        assert scheme_means(probe) == means

    def test_scheme_means_skips_infeasible_exact(self):
        probe = make_probe(40, 2, FULL_SHAPE)
        assert "exact" not in scheme_means(probe)


class TestTrainingExperiment:
    def test_zero_iterations_yields_empty_series(self):
        probe = make_probe(200, 4, MINI)
        (report,) = run_training_experiment([("blank", mini_train(0))], probe)
        assert report.eval_points == ()
        assert report.traces == ()
        raws = probe.raw_inputs(report.config.feature)
        assert ddl.propose_batch(report.ensemble, raws).shape == (3, 4, 3)

    def test_snapshot_cadence_and_series_shape(self):
        probe = make_probe(200, 4, MINI)
        cfg = mini_train(25)
        (report,) = run_training_experiment([("run", cfg)], probe, cadence=10)
        iters = [p.iteration for p in report.eval_points]
        assert iters == [0, 10, 20, 25]
        assert math.isnan(report.eval_points[0].convergence)
        for p in report.eval_points[1:]:
            assert 0.0 < p.convergence <= 1.0
        assert len(report.traces) == 25
        assert report.label == "run"
        assert report.scheme_means["exact"] > 0

    def test_grid_order_and_determinism(self):
        probe = make_probe(200, 4, MINI)
        grid = [
            ("slow", mini_train(20, learning_rate=1e-3)),
            ("fast", mini_train(20, learning_rate=1e-2)),
        ]
        first = run_training_experiment(grid, probe)
        second = run_training_experiment(grid, probe)
        assert [r.label for r in first] == ["slow", "fast"]
        for a, b in zip(first, second):
            assert points_equal(a.eval_points, b.eval_points)

    def test_threads_do_not_change_results(self):
        probe = make_probe(200, 4, MINI)
        grid = [
            ("a", mini_train(20, seed=1)),
            ("b", mini_train(20, seed=2)),
            ("c", mini_train(20, seed=3)),
        ]
        serial = run_training_experiment(grid, probe, threads=1)
        parallel = run_training_experiment(grid, probe, threads=2)
        for a, b in zip(serial, parallel):
            assert a.label == b.label
            assert points_equal(a.eval_points, b.eval_points)

    def test_empty_grid_rejected(self):
        probe = make_probe(200, 2, MINI)
        with pytest.raises(ContractError):
            run_training_experiment([], probe)

    def test_errors_carry_grid_point_context(self):
        probe = make_probe(200, 2, MINI)
        bad = mini_train(5, db_capacity=4, batch_size=8)
        with pytest.raises(InvalidConfigError, match="grid point 'broken'"):
            run_training_experiment([("broken", bad)], probe)


class TestIterationsToConverge:
    @staticmethod
    def report_with(points, db_capacity=100):
        cfg = TrainConfig(iterations=0, db_capacity=db_capacity, generator=MINI)
        return ExperimentReport(
            label="synthetic",
            config=cfg,
            eval_points=tuple(EvalPoint(*p) for p in points),
            traces=(),
            ensemble=None,
            scheme_means={},
            elapsed=0.0,
        )

    def test_first_stable_crossing_wins(self):
        report = self.report_with(
            [
                (0, float("nan"), 5.0),
                (110, 0.995, 4.9),
                (120, 0.950, 4.8),
                (130, 0.992, 4.8),
                (140, 0.999, 4.8),
            ]
        )
        assert report.iterations_to_converge() == 130

    def test_prefill_points_do_not_count(self):
        report = self.report_with(
            [(0, float("nan"), 5.0), (90, 1.0, 5.0), (110, 0.995, 4.9)]
        )
        assert report.iterations_to_converge() == 110

    def test_never_stable_is_none(self):
        report = self.report_with([(0, float("nan"), 5.0), (110, 0.8, 4.0)])
        assert report.iterations_to_converge() is None
        assert self.report_with([]).iterations_to_converge() is None


class TestComparison:
    def test_alpha_reweighting(self):
        probe = make_probe(100, 3, MINI)
        shifted = with_alpha(probe, 0.25)
        assert all(s.params.alpha == 0.25 for s in shifted.scenarios)
        assert not np.array_equal(shifted.tables, probe.tables)

    def test_rows_cover_schemes_and_exact_is_minimum(self):
        probe = make_probe(100, 4, MINI)
        alphas = [0.0, 0.5, 1.0]
        ensembles = {a: build_ensemble(mini_train(0, seed=9)) for a in alphas}
        rows = run_comparison(probe, alphas, ensembles)
        assert len(rows) == len(alphas) * 5
        for alpha in alphas:
            group = {r.scheme: r for r in rows if r.alpha == alpha}
            assert list(group) == ["exact", "ro", "co", "ad", "ddl"]
            for name, row in group.items():
                assert group["exact"].mean_q <= row.mean_q + 1e-12

    def test_alpha_endpoints_reduce_to_time_and_energy(self):
        probe = make_probe(100, 4, MINI)
        ensembles = {a: build_ensemble(mini_train(0, seed=9)) for a in (0.0, 1.0)}
        rows = run_comparison(probe, [0.0, 1.0], ensembles)
        for r in rows:
            target = r.mean_e if r.alpha == 0.0 else r.mean_t
            assert r.mean_q == pytest.approx(target, rel=1e-12)

    def test_missing_ensemble_rejected(self):
        probe = make_probe(100, 2, MINI)
        with pytest.raises(ContractError):
            run_comparison(probe, [0.5], {})


class TestCsvOutput:
    def test_trace_csv_layout(self, tmp_path):
        probe = make_probe(200, 4, MINI)
        (report,) = run_training_experiment([("run", mini_train(25))], probe, cadence=10)
        path = tmp_path / "trace.csv"
        write_trace_csv(path, report)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "chosen_q", "convergence", "mean_probe_q"] + [
            f"loss_{i}" for i in range(3)
        ]
        assert len(rows) == 1 + 1 + 25  # header, snapshot-only row 0, one per iteration
        assert rows[1][0] == "0" and rows[1][1] == "" and rows[1][3] != ""
        # database fills at iteration 16; losses are blank before, present after
        by_iter = {r[0]: r for r in rows[1:]}
        assert by_iter["10"][4] == ""
        assert float(by_iter["20"][4]) > 0
        assert float(by_iter["20"][2]) <= 1.0

    def test_trace_csv_byte_identical_across_runs(self, tmp_path):
        probe = make_probe(200, 4, MINI)
        paths = []
        for name in ("one.csv", "two.csv"):
            (report,) = run_training_experiment([("run", mini_train(25))], probe)
            path = tmp_path / name
            write_trace_csv(path, report)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_comparison_csv_round_trip(self, tmp_path):
        row = ComparisonRow(0.5, "co", 12.25, 20.5, 4.0, 0.125)
        path = tmp_path / "comparison.csv"
        write_comparison_csv(path, [row])
        with open(path, newline="") as fh:
            header, data = list(csv.reader(fh))
        assert header == ["alpha", "scheme", "mean_q", "mean_t", "mean_e", "elapsed"]
        assert data[1] == "co"
        assert [float(data[i]) for i in (0, 2, 3, 4, 5)] == [0.5, 12.25, 20.5, 4.0, 0.125]

    def test_config_sidecar_is_json(self, tmp_path):
        path = tmp_path / "run.json"
        write_config_sidecar(path, mini_train(25), extra={"probe_seed": 200})
        doc = json.loads(path.read_text())
        assert doc["iterations"] == 25
        assert doc["probe_seed"] == 200
        assert doc["generator"]["num_dts"] == 3
