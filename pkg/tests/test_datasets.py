from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radloc import datasets as D
from radloc.errors import CellError, ConfigError, DataError, HeaderError, NumericError, WidthError


@pytest.fixture(scope="module")
def small():
    grid, scene = D.preset("L1")
    return D.generate(grid, scene)


class TestFdBins:
    def test_uniform_72000(self):
        spec = D.fd_bin_spec(np.linspace(1.0, 15.0, 72_000))
        assert spec.n_bins == 42
        assert spec.width == pytest.approx(0.3365, abs=1e-3)
        assert spec.edges[0] == 1.0 and spec.edges[-1] == 15.0

    def test_one_to_eight(self):
        spec = D.fd_bin_spec(np.arange(1.0, 9.0))
        # Q1 = 2.75, Q3 = 6.25 (linear interpolation), width = 2 * 3.5 / 8^(1/3)
        assert spec.width == pytest.approx(3.5, rel=1e-12)
        assert spec.n_bins == 2

    def test_degenerate(self):
        with pytest.raises(NumericError):
            D.fd_bin_spec(np.full(10, 3.0))
        with pytest.raises(DataError):
            D.fd_bin_spec([1.0, 2.0, 3.0])

    @given(st.lists(st.floats(0.0, 100.0), min_size=4, max_size=300))
    @settings(max_examples=60)
    def test_closed_form_and_coverage(self, values):
        v = np.asarray(values)
        q1, q3 = np.percentile(v, [25, 75])
        if q3 - q1 <= 0:
            return
        spec = D.fd_bin_spec(v)
        assert spec.width == pytest.approx(2 * (q3 - q1) / len(v) ** (1 / 3), rel=1e-12)
        assert np.all(np.diff(spec.edges) > 0)
        assert spec.edges[0] == v.min() and spec.edges[-1] == v.max()
        idx = spec.bin_index(v)
        assert np.all((idx >= 0) & (idx < spec.n_bins))
        lo = np.asarray(spec.edges)[idx]
        hi = np.asarray(spec.edges)[idx + 1]
        assert np.all((v >= lo) & (v <= hi))


class TestGenerate:
    def test_s1_small_cardinality(self):
        grid, _ = D.preset("S1-small")
        assert grid.size == 72 * 29 * 5 == 10_440

    def test_labels_consistent(self, small):
        assert len(small) == 7 * 6 * 3
        np.testing.assert_array_equal(small.angle_classes[small.angle_label], small.true_angle)
        np.testing.assert_array_equal(small.bin_spec.bin_index(small.true_distance), small.distance_label)
        assert small.n_features == 4
        assert small.counts.dtype == np.int64 and np.all(small.counts >= 0)

    def test_deterministic_and_thread_independent(self):
        grid, scene = D.preset("L2", seed=3)
        a = D.generate(grid, scene)
        b = D.generate(grid, scene, n_workers=4)
        assert a == b

    def test_seed_changes_counts(self):
        g1, scene = D.preset("L1", seed=1)
        g2, _ = D.preset("L1", seed=2)
        assert not np.array_equal(D.generate(g1, scene).counts, D.generate(g2, scene).counts)

    def test_moving_obstruction_visits_all_candidates(self):
        grid, scene = D.preset("S3-small", replicates=2)
        ds = D.generate(grid, scene)
        assert set(np.unique(ds.obstruction_id)) == set(range(10))

    def test_expected_mode_is_noiseless(self):
        grid, scene = D.preset("L1")
        grid = D.ScenarioGrid(grid.angles, grid.distances, replicates=2, transport_mode="expected")
        ds = D.generate(grid, scene)
        np.testing.assert_array_equal(ds.counts[0::2], ds.counts[1::2])

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            D.preset("S9")

    def test_grid_invariants(self):
        with pytest.raises(ConfigError):
            D.ScenarioGrid((), (1.0,))
        with pytest.raises(ConfigError):
            D.ScenarioGrid((0.0,), (1.0,), replicates=0)


class TestSplit:
    def test_partition_and_determinism(self, small):
        tr, te = D.split(small, 0.2, seed=42)
        assert len(tr) + len(te) == len(small)
        assert len(te) == round(0.2 * len(small))
        tr2, te2 = D.split(small, 0.2, seed=42)
        assert tr == tr2 and te == te2

    def test_stratified_proportions(self):
        grid, scene = D.preset("L1", replicates=5)  # 7 classes x 30 samples
        ds = D.generate(grid, scene)
        tr, te = D.split(ds, 0.2, seed=0)
        per_class = np.bincount(te.angle_label, minlength=7)
        assert np.all(np.abs(per_class - 0.2 * 30) <= 1)

    def test_indices_disjoint(self, small):
        tagged = small.subset(np.arange(len(small)))
        tagged.obstruction_id = np.arange(len(small))  # unique tag per row
        tr, te = D.split(tagged, 0.25, seed=1)
        assert not set(tr.obstruction_id) & set(te.obstruction_id)
        assert set(tr.obstruction_id) | set(te.obstruction_id) == set(range(len(small)))

    def test_bad_fraction_and_tiny_class(self, small):
        with pytest.raises(ConfigError):
            D.split(small, 1.0)
        with pytest.raises(DataError):
            D.split(small.subset([0, 50]), 0.5)


class TestCsv:
    def test_round_trip(self, small, tmp_path):
        p = tmp_path / "d.csv"
        D.write_csv(small, p)
        assert D.read_csv(p) == small
        assert b"\r\n" not in p.read_bytes()

    def test_header_row(self, small, tmp_path):
        p = tmp_path / "d.csv"
        D.write_csv(small, p)
        header = p.read_text().split("\n")[1]
        assert header == "det_0,det_1,det_2,det_3,true_angle_deg,true_distance_m,angle_class,distance_bin,obstruction_id"

    def test_empty_dataset(self, small, tmp_path):
        p = tmp_path / "e.csv"
        empty = small.subset([])
        D.write_csv(empty, p)
        back = D.read_csv(p)
        assert len(back) == 0 and back.n_features == 4

    def test_obstruction_ids_round_trip(self, tmp_path):
        grid, scene = D.preset("S3-small", replicates=1)
        ds = D.generate(grid, scene).subset(range(40))
        D.write_csv(ds, tmp_path / "m.csv")
        assert D.read_csv(tmp_path / "m.csv") == ds

    def _corrupt(self, small, tmp_path, edit):
        p = tmp_path / "c.csv"
        D.write_csv(small, p)
        lines = p.read_text().split("\n")
        edit(lines)
        p.write_text("\n".join(lines))
        return p

    def test_header_error(self, small, tmp_path):
        def edit(lines):
            lines[1] = lines[1].replace("true_angle_deg", "angle")

        with pytest.raises(HeaderError):
            D.read_csv(self._corrupt(small, tmp_path, edit))

    def test_width_error(self, small, tmp_path):
        def edit(lines):
            lines[3] = lines[3] + ",7"

        with pytest.raises(WidthError):
            D.read_csv(self._corrupt(small, tmp_path, edit))

    def test_cell_error(self, small, tmp_path):
        def edit(lines):
            lines[2] = "x" + lines[2][1:]

        with pytest.raises(CellError):
            D.read_csv(self._corrupt(small, tmp_path, edit))

    def test_distinct_error_types(self):
        assert len({HeaderError, WidthError, CellError}) == 3
        assert not issubclass(HeaderError, WidthError) and not issubclass(WidthError, HeaderError)
