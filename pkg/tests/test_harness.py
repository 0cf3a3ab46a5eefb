import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import Delaunay

from barprop import (
    BarpropConfig, ExperimentSpec, Measurement, builtin_layout, crlb, empirical_cdf,
    ingest_measurements, noise_sweep, rmse, run_experiment, write_measurements,
)
from barprop import harness
from barprop.harness import (
    IngestError, RunAbort, anchor_count_sweep, cdf_at, is_degenerate, random_layout, stream,
    write_csv,
)

SMALL = dict(runs=12, master_seed=7)


def small_spec(**kwargs):
    return ExperimentSpec(**{**SMALL, **kwargs})


class TestLayouts:
    @pytest.mark.parametrize("name,first", [("homogeneous_12", (40, 40)), ("nonhomogeneous_12", (32, 4))])
    def test_verbatim(self, name, first):
        anchors = builtin_layout(name)
        assert anchors.shape == (12, 2)
        assert tuple(anchors[0]) == first

    def test_nonhomogeneous_last(self):
        assert tuple(builtin_layout("nonhomogeneous_12")[-1]) == (37, 6)

    def test_unknown(self):
        with pytest.raises(KeyError, match="unknown layout"):
            builtin_layout("ring_8")

    def test_hull_membership(self):
        assert Delaunay(builtin_layout("homogeneous_12")).find_simplex([20, 20]) >= 0
        assert Delaunay(builtin_layout("nonhomogeneous_12")).find_simplex([20, 35]) < 0


class TestDegenerate:
    @pytest.mark.parametrize("anchors,expected", [
        ([[0, 0], [0.5, 0.5]], True),
        ([[0, 0], [5, 5]], False),
        ([[0, 0], [10, 0], [20, 0]], True),
        ([[0, 0], [10, 0], [20, 1]], False),
        ([[3, 3]], False),
    ])
    def test_rule(self, anchors, expected):
        assert is_degenerate(np.array(anchors, dtype=float)) is expected

    def test_random_layout_redraws(self):
        layout = random_layout(2, stream(0, 99), (0, 0), (1.2, 1.2))
        assert not is_degenerate(layout)


class TestMetrics:
    def test_three_four_five(self):
        assert rmse(np.array([[3.0, 4.0]])) == 5.0

    def test_two_runs(self):
        assert rmse([0.0, 10.0]) == pytest.approx(math.sqrt(50))

    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 100), min_size=1, max_size=200))
    def test_cdf_valid(self, errors):
        cdf = empirical_cdf(errors)
        assert len(cdf) == len(errors)
        assert np.all(np.diff(cdf[:, 0]) >= 0) and np.all(np.diff(cdf[:, 1]) > 0)
        assert cdf[-1, 1] == 1.0

    def test_cdf_at(self):
        assert cdf_at([1.0, 2.0, 3.0, 7.0], 6.5) == 0.75


class TestSpec:
    @pytest.mark.parametrize("kwargs", [
        {"runs": 0}, {"noise_levels": (0.0,)}, {"algorithms": ("sgd",)}, {"layout": "ring"},
        {"layout": "custom"}, {"layout": "file"},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentSpec(**kwargs)


class TestRunExperiment:
    def test_report_shape(self):
        rep = run_experiment(small_spec())
        assert rep.runs == 12 and set(rep.results) == {"barprop", "rmsprop", "lm", "de"}
        for r in rep.results.values():
            assert r.rmse == rmse(r.errors)
            assert len(r.cdf) == 12 and r.cdf[-1, 1] == 1.0
            assert np.all(r.iterations >= 1)
        assert rep.crlb_kind == "mean" and rep.crlb_ref > 0

    def test_workers_do_not_change_results(self):
        spec = small_spec(runs=9)
        a, b = run_experiment(spec, workers=1), run_experiment(spec, workers=3)
        for name in spec.algorithms:
            assert a.results[name].errors.tobytes() == b.results[name].errors.tobytes()
            assert a.results[name].iterations.tobytes() == b.results[name].iterations.tobytes()

    def test_same_measurement_for_all_algorithms(self, monkeypatch):
        seen = {}

        def spy(spec, scenario, measurement, target, index):
            seen[index] = measurement
            return real(spec, scenario, measurement, target, index)

        real = harness.evaluate_case
        monkeypatch.setattr(harness, "evaluate_case", spy)
        spec = small_spec(runs=3)
        run_experiment(spec)
        for m in range(3):
            rng = stream(spec.master_seed, 1, m)
            sc = spec.scenario(3.0)
            target = harness.random_target(sc, rng)
            expected = harness.generate_rss(sc, target, rng)
            assert seen[m].rss_dbm.tobytes() == expected.rss_dbm.tobytes()

    def test_adding_algorithm_leaves_others_unchanged(self):
        a = run_experiment(small_spec(algorithms=("barprop",)))
        b = run_experiment(small_spec(algorithms=("barprop", "de", "rmsprop")))
        assert a.results["barprop"].errors.tobytes() == b.results["barprop"].errors.tobytes()

    def test_fixed_target_crlb(self, homogeneous):
        rep = run_experiment(small_spec(target=(20.0, 20.0), algorithms=("lm",)))
        assert rep.crlb_kind == "fixed"
        assert rep.crlb_ref == pytest.approx(crlb(homogeneous, [20, 20]))

    def test_abort_names_run(self, monkeypatch):
        from barprop.optim import NumericalAbort

        def boom(*a, **k):
            raise NumericalAbort("non-finite gradient")

        monkeypatch.setattr(harness, "solve", boom)
        with pytest.raises(RunAbort, match="run 0, algorithm barprop"):
            run_experiment(small_spec(runs=2, algorithms=("barprop",)))

    def test_rejects_several_levels(self):
        with pytest.raises(ValueError):
            run_experiment(small_spec(noise_levels=(1.0, 2.0)))


class TestSweeps:
    def test_single_level_equals_run_experiment(self):
        spec = small_spec(noise_levels=(2.0,), algorithms=("barprop", "lm"))
        (swept,) = noise_sweep(spec, [2.0])
        direct = run_experiment(spec)
        for name in spec.algorithms:
            assert swept.results[name].errors.tobytes() == direct.results[name].errors.tobytes()

    def test_crlb_linear_in_sigma(self):
        spec = small_spec(target=(13.0, 27.0), algorithms=("lm",), runs=2)
        reps = noise_sweep(spec, [1.0, 2.0, 5.0])
        base = reps[0].crlb_ref
        for rep, s in zip(reps, [1.0, 2.0, 5.0]):
            assert rep.crlb_ref == pytest.approx(s * base)

    def test_anchor_sweep_layout_fixed_per_count(self):
        spec = small_spec(runs=4, algorithms=("lm",))
        reps = anchor_count_sweep(spec, [5, 9])
        assert [r.n_anchors for r in reps] == [5, 9]
        assert [r.sweep for r in reps] == ["n_anchors", "n_anchors"]
        sub = dataclasses.replace(spec, layout="random", n_anchors=5)
        np.testing.assert_array_equal(sub.scenario(3.0).anchors, sub.scenario(3.0).anchors)

    def test_anchors_per_run_differ(self):
        spec = small_spec(layout="random", n_anchors=6, anchors_per_run=True)
        assert not np.array_equal(spec.scenario(3.0, run=0).anchors, spec.scenario(3.0, run=1).anchors)

    def test_csv_rows(self, tmp_path):
        reps = noise_sweep(small_spec(runs=2, algorithms=("lm", "barprop")), [1.0, 2.0, 3.0])
        write_csv(reps, tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "algorithm,sweep,sweep_value,rmse,crlb,mean_iters"
        assert len(lines) == 1 + 3 * 2


def synthetic_records(rng, n_positions=3, samples=4, n_anchors=5):
    records = []
    for _ in range(n_positions):
        pos = rng.uniform(0, 10, 2)
        for _ in range(samples):
            records.append((Measurement(rng.normal(-50, 5, n_anchors), [3.0] * n_anchors), pos))
    return records


class TestIngest:
    def test_round_trip(self, tmp_path):
        recs = synthetic_records(np.random.default_rng(0))
        write_measurements(tmp_path / "d.csv", recs)
        back = ingest_measurements(tmp_path / "d.csv")
        assert len(back) == len(recs)
        for (m0, p0), (m1, p1) in zip(recs, back):
            assert m0.rss_dbm.tolist() == m1.rss_dbm.tolist()
            assert p0.tolist() == p1.tolist()

    def test_dataset_shape(self, tmp_path):
        recs = synthetic_records(np.random.default_rng(1), n_positions=27, samples=1000)
        write_measurements(tmp_path / "d.csv", recs)
        back = ingest_measurements(tmp_path / "d.csv", n_anchors=5)
        assert len(back) == 27000
        assert all(len(m.rss_dbm) == 5 for m, _ in back)

    @pytest.mark.parametrize("header,missing", [
        ("x1,rss_1,rss_2", "x2"),
        ("x1,x2,rss_1,rss_3", "rss_2"),
    ])
    def test_missing_column_named(self, tmp_path, header, missing):
        path = tmp_path / "bad.csv"
        path.write_text(header + "\n" + ",".join(["1"] * len(header.split(","))) + "\n")
        with pytest.raises(IngestError, match=f"missing column '{missing}'"):
            ingest_measurements(path, n_anchors=2 if "rss_3" not in header else 3)

    @pytest.mark.parametrize("row", ["1,2,nan", "1,2,inf", "1,2,abc", "1,2"])
    def test_bad_row_reports_line(self, tmp_path, row):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,rss_1\n1,2,-40\n" + row + "\n")
        with pytest.raises(IngestError, match=r"bad\.csv:3"):
            ingest_measurements(path)

    def test_dataset_run(self, tmp_path):
        from barprop import Scenario, run_dataset

        sc = Scenario([0, 0], [10, 10], [[0, 0], [10, 0], [0, 10], [10, 10], [5, 5]], noise_std_db=3.0)
        recs = synthetic_records(np.random.default_rng(3))
        spec = small_spec(algorithms=("barprop", "rmsprop"), barprop=BarpropConfig())
        rep = run_dataset(spec, sc, recs, trials=10)
        assert rep.runs == 10 and rep.sweep == "dataset"
        again = run_dataset(spec, sc, recs, trials=10, workers=2)
        assert rep.results["barprop"].errors.tobytes() == again.results["barprop"].errors.tobytes()
