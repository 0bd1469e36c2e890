import numpy as np
import pytest

from mfseg import (ClusterCenter, ClusterParams, DomainExtent, FieldSet,
                   PointSet, field_distance, generate_synthetic,
                   initial_assignment, point_distance, run, seed_centers)
from mfseg.engine import (CenterGrid, CenterState, accumulate, assign_iteration,
                          has_converged, update_centers)
from mfseg.model import interval_distances

from conftest import brute_force_assign, rand_agreement, slab_spec, two_blob_spec


def center(cid=0, loc=(0, 0, 0, 0), p_c=None, f_c=None, n_p=0, n_f=0):
    return ClusterCenter(cid, loc[0], loc[1], loc[2], loc[3], p_c, f_c, n_p, n_f)


class TestDistanceMetrics:
    def test_point_value_only(self):
        params = ClusterParams(w_p=1, w_d=0, w_f=1)
        c = center(p_c=1.0)
        assert point_distance([0, 0, 0, 0], 1.5, c, params) == pytest.approx(0.5)

    def test_point_reduces_to_spatial(self):
        params = ClusterParams(w_p=0, w_d=1)
        c = center(loc=(3, 4, 0, 0), p_c=9.0)
        assert point_distance([0, 0, 0, 0], 1.0, c, params) == pytest.approx(5.0)

    def test_point_direct_substitution(self):
        params = ClusterParams(w_p=2, w_d=0.5)
        c = center(loc=(4, 0, 0, 0), p_c=0.3)
        # |dv| = 0.3, S_st = 4 -> 2*0.3 + 0.5*4 = 2.6
        assert point_distance([0, 0, 0, 0], 0.6, c, params) == pytest.approx(2.6)

    def test_point_absent_average_spatial_only(self):
        params = ClusterParams(w_p=5, w_d=1)
        c = center(loc=(3, 4, 0, 0), p_c=None)
        assert point_distance([0, 0, 0, 0], 123.0, c, params) == pytest.approx(5.0)

    def test_field_value_only(self):
        params = ClusterParams(w_f=1, w_d=0, w_p=1)
        c = center(f_c=1.0)
        assert field_distance([0, 0, 0, 0], 0.75, c, params) == pytest.approx(0.25)

    def test_field_pure_spatial(self):
        params = ClusterParams(w_f=0, w_d=1)
        c = center(loc=(0, 0, 0, 2), f_c=5.0)
        assert field_distance([0, 0, 0, 0], 0.0, c, params) == pytest.approx(2.0)

    def test_field_combined(self):
        params = ClusterParams(w_f=1, w_d=1)
        c = center(loc=(0, 0, 2, 0), f_c=0.4)
        assert field_distance([0, 0, 0, 0], 0.5, c, params) == pytest.approx(2.1)


def make_points(xyz_t, values):
    arr = np.asarray(xyz_t, dtype=float)
    return PointSet(np.arange(len(arr)), arr[:, 3], arr[:, :3].copy(),
                    np.asarray(values, dtype=float))


class TestInitialAssignment:
    def test_sample_at_seed_location(self, extent):
        params = ClusterParams(k=(2, 2, 2, 2))
        seeds = seed_centers(extent, params.k)
        pts = make_points(np.column_stack([seeds[:3, :3], seeds[:3, 3]]), np.zeros(3))
        pl, _ = initial_assignment(pts, FieldSet.empty(), extent, params)
        assert list(pl) == [0, 1, 2]

    def test_equidistant_tie_goes_to_lower_id(self, extent):
        params = ClusterParams(k=(2, 1, 1, 1))
        # exactly halfway between the two seeds in x
        pts = make_points([[5.0, 5, 5, 2]], [0.0])
        pl, _ = initial_assignment(pts, FieldSet.empty(), extent, params)
        assert pl[0] == 0

    def test_matches_exhaustive_search(self, extent):
        rng = np.random.default_rng(4)
        params = ClusterParams(k=(3, 2, 2, 2), c_f=2.0)
        n = 300
        loc = rng.random((n, 4)) * [10, 10, 10, 4]
        pts = make_points(loc, rng.random(n))
        pl, _ = initial_assignment(pts, FieldSet.empty(), extent, params)
        seeds = seed_centers(extent, params.k)
        K = len(seeds)
        expected = brute_force_assign(pts.loc4, pts.value, seeds,
                                      np.full(K, np.nan), np.zeros(K, bool),
                                      0.0, 1.0, params.c_f)
        assert np.array_equal(pl, expected)


def windowed_setup(extent, params, cloc, pval=None, fval=None):
    K = len(cloc)
    cs = CenterState.from_seeds(np.asarray(cloc, dtype=float))
    if pval is not None:
        cs.pval = np.asarray(pval, dtype=float)
        cs.has_p = ~np.isnan(cs.pval)
    if fval is not None:
        cs.fval = np.asarray(fval, dtype=float)
        cs.has_f = ~np.isnan(cs.fval)
    C = interval_distances(extent, params.k)
    grid = CenterGrid(cs.loc, extent, C, params.k)
    return cs, grid, C


class TestAssignIteration:
    def test_single_center_takes_all(self, extent):
        params = ClusterParams(k=(1, 1, 1, 1))
        rng = np.random.default_rng(0)
        pts = make_points(rng.random((20, 4)) * [10, 10, 10, 4], rng.random(20))
        cs, grid, C = windowed_setup(extent, params, [[5, 5, 5, 2]], pval=[0.5])
        pl, _ = assign_iteration(pts, FieldSet.empty(), np.empty((0, 4)), cs, grid,
                                 params, C)
        assert np.all(pl == 0)

    def test_matches_global_argmin_when_windows_cover(self, extent):
        # centers stay near their seeds and the value term is mild, so every
        # sample's global best center lies inside that sample's +-C window;
        # the windowed search must then reproduce the exhaustive argmin exactly
        params = ClusterParams(k=(2, 2, 2, 2), w_d=1.0, w_p=0.1)
        rng = np.random.default_rng(9)
        n = 500
        pts = make_points(rng.random((n, 4)) * [10, 10, 10, 4], rng.random(n))
        C = interval_distances(extent, params.k)
        cloc = seed_centers(extent, params.k) + rng.uniform(-1, 1, (16, 4)) * C / 16
        pval = rng.random(16)
        cs, grid, C = windowed_setup(extent, params, cloc, pval=pval)
        expected = brute_force_assign(pts.loc4, pts.value, cs.loc, cs.pval, cs.has_p,
                                      params.w_p, params.w_d, params.c_f)
        # the premise itself: each global argmin center is within the window
        assert np.all(np.abs(pts.loc4 - cs.loc[expected]) <= C)
        pl, _ = assign_iteration(pts, FieldSet.empty(), np.empty((0, 4)), cs, grid,
                                 params, C)
        assert np.array_equal(pl, expected)

    def test_stranded_sample_uses_doubled_window(self):
        # two centers drifted into a corner; a far-away sample is outside both
        # +-C windows and must fall back to the doubling search
        ext = DomainExtent(0, 16, 0, 1, 0, 1, 0, 1)
        params = ClusterParams(k=(8, 1, 1, 1), w_d=1.0, w_p=1.0)
        cloc = [[1.0, 0.5, 0.5, 0.5], [3.0, 0.5, 0.5, 0.5]]
        pval = [0.9, 0.1]
        pts = make_points([[15.0, 0.5, 0.5, 0.5]], [0.1])
        cs, grid, C = windowed_setup(ext, params, cloc, pval=pval)
        pl, _ = assign_iteration(pts, FieldSet.empty(), np.empty((0, 4)), cs, grid,
                                 params, C)
        # hand-computed: D(c0) = 1*|0.1-0.9| + 14 = 14.8; D(c1) = 0 + 12 = 12
        assert pl[0] == 1

    def test_field_and_point_labels_both_assigned(self, two_blob_dataset, extent):
        fs, pts, _, _ = two_blob_dataset
        params = ClusterParams(k=(2, 2, 2, 2))
        cs, grid, C = windowed_setup(extent, params, seed_centers(extent, params.k))
        pl, fl = assign_iteration(pts, fs, fs.loc4(), cs, grid, params, C)
        assert len(pl) == len(pts) and len(fl) == len(fs)
        assert np.all(pl >= 0) and np.all(fl >= 0)


class TestUpdateCenters:
    def test_mixed_kind_means(self):
        # points {1,3} at x=0,2; field {2} at x=1 -> loc mean 1, p_c=2, f_c=2
        pts = make_points([[0, 0, 0, 0], [2, 0, 0, 0]], [1.0, 3.0])
        fs = FieldSet((1, 1, 1), np.array([0.5, -0.5, -0.5]), np.ones(3),
                      np.array([0.0]), np.array([[2.0]]))
        cs = CenterState.from_seeds(np.zeros((1, 4)))
        sums = accumulate(np.zeros(2, np.int64), pts, np.zeros(1, np.int64), fs,
                          fs.loc4(), 1)
        new = update_centers(cs, *sums)
        assert np.allclose(new.loc[0], [1, 0, 0, 0])
        assert new.pval[0] == pytest.approx(2.0)
        assert new.fval[0] == pytest.approx(2.0)
        assert new.n_points[0] == 2 and new.n_fields[0] == 1

    def test_empty_cluster_freezes_and_goes_dormant(self):
        pts = make_points([[1, 1, 1, 1]], [5.0])
        cs = CenterState.from_seeds(np.array([[0.0, 0, 0, 0], [9.0, 9, 9, 9]]))
        sums = accumulate(np.zeros(1, np.int64), pts, np.empty(0, np.int64),
                          FieldSet.empty(), np.empty((0, 4)), 2)
        new = update_centers(cs, *sums)
        assert np.allclose(new.loc[1], [9, 9, 9, 9])
        assert new.dormant[1] and not new.dormant[0]

    def test_single_member_equals_sample(self):
        pts = make_points([[3, 4, 5, 6]], [7.0])
        cs = CenterState.from_seeds(np.zeros((1, 4)))
        sums = accumulate(np.zeros(1, np.int64), pts, np.empty(0, np.int64),
                          FieldSet.empty(), np.empty((0, 4)), 1)
        new = update_centers(cs, *sums)
        assert np.allclose(new.loc[0], [3, 4, 5, 6])
        assert new.pval[0] == 7.0
        assert not new.has_f[0]


class TestConvergence:
    def _state(self, loc, pval=None):
        cs = CenterState.from_seeds(np.asarray(loc, dtype=float))
        if pval is not None:
            cs.pval = np.asarray(pval, dtype=float)
            cs.has_p = ~np.isnan(cs.pval)
        cs.n_points = np.ones(len(cs.loc), np.int64)
        cs.dormant = np.zeros(len(cs.loc), bool)
        return cs

    def test_identical_converged(self):
        a = self._state([[1, 2, 3, 4]], [0.5])
        b = self._state([[1, 2, 3, 4]], [0.5])
        assert has_converged(a, b, 0.01)

    def test_five_percent_change_fails_at_one_percent(self):
        a = self._state([[1, 2, 3, 4]], [1.0])
        b = self._state([[1, 2, 3, 4]], [1.05])
        assert not has_converged(a, b, 0.01)

    def test_zero_to_zero_converges(self):
        a = self._state([[0, 0, 0, 0]], [0.0])
        b = self._state([[0, 0, 0, 0]], [0.0])
        assert has_converged(a, b, 0.01)

    def test_absence_change_is_not_converged(self):
        a = self._state([[1, 1, 1, 1]], [np.nan])
        b = self._state([[1, 1, 1, 1]], [0.5])
        assert not has_converged(a, b, 0.01)


class TestRun:
    def test_single_cluster_fixed_point(self, extent):
        rng = np.random.default_rng(2)
        pts = make_points(rng.random((50, 4)) * [10, 10, 10, 4], rng.random(50))
        params = ClusterParams(k=(1, 1, 1, 1), normalize=False)
        seg = run(pts, None, extent, params)
        assert seg.iterations_used <= 2
        assert seg.converged
        c = seg.centers[0]
        assert np.allclose(c.loc4, pts.loc4.mean(axis=0))
        assert c.p_c == pytest.approx(pts.value.mean())
        assert c.f_c is None

    def test_two_blob_ground_truth(self, extent):
        fs, pts, ft, ptt = generate_synthetic(slab_spec(2))
        params = ClusterParams(k=(3, 1, 1, 1), w_d=0.05, w_p=1, w_f=1,
                               c_f=1.0, normalize=False)
        seg = run(pts, fs, extent, params)
        truth = np.concatenate([ptt, ft])
        got = np.concatenate([seg.point_labels, seg.field_labels])
        assert rand_agreement(truth, got) >= 0.99

    def test_empty_both_kinds_rejected(self, extent):
        with pytest.raises(ValueError):
            run(None, None, extent, ClusterParams())

    def test_field_only_dataset(self, two_blob_dataset, extent):
        fs, _, _, _ = two_blob_dataset
        seg = run(None, fs, extent, ClusterParams(k=(2, 1, 1, 1), normalize=False))
        assert len(seg.point_labels) == 0
        assert len(seg.field_labels) == len(fs)
        assert all(c.p_c is None for c in seg.centers)

    def test_point_only_dataset(self, two_blob_dataset, extent):
        _, pts, _, _ = two_blob_dataset
        seg = run(pts, None, extent, ClusterParams(k=(2, 1, 1, 1), normalize=False))
        assert len(seg.field_labels) == 0
        assert all(c.f_c is None for c in seg.centers)

    def test_deterministic_across_workers_and_chunks(self, two_blob_dataset, extent):
        fs, pts, _, _ = two_blob_dataset
        params = ClusterParams(k=(2, 2, 2, 2), w_d=0.2)
        base = run(pts, fs, extent, params, workers=1, chunk_size=None)
        for workers, chunk in [(2, None), (8, None), (1, 1000), (2, 137)]:
            other = run(pts, fs, extent, params, workers=workers, chunk_size=chunk)
            assert np.array_equal(base.point_labels, other.point_labels)
            assert np.array_equal(base.field_labels, other.field_labels)
            assert base.iterations_used == other.iterations_used

    def test_progress_callback_invoked(self, two_blob_dataset, extent):
        fs, pts, _, _ = two_blob_dataset
        calls = []
        run(pts, fs, extent, ClusterParams(k=(2, 1, 1, 1)),
            progress=lambda it, d: calls.append((it, d)))
        assert calls and calls[0][0] == 1
        assert all(d >= 0 for _, d in calls)

    def test_nonconvergence_reported_not_raised(self, two_blob_dataset, extent):
        fs, pts, _, _ = two_blob_dataset
        params = ClusterParams(k=(2, 2, 2, 2), eps_c=1e-9, max_iterations=2)
        seg = run(pts, fs, extent, params)
        assert not seg.converged
        assert seg.iterations_used == 2

    def test_dormant_center_in_dense_region_reactivates(self):
        # center 1 starts dormant on top of a dense value-matched region and
        # must win members back within a single iteration
        ext = DomainExtent(0, 10, 0, 1, 0, 1, 0, 1)
        params = ClusterParams(k=(2, 1, 1, 1), w_d=1.0, w_p=1.0)
        rng = np.random.default_rng(5)
        xyz_t = np.column_stack([rng.random(40) * 2 + 6.5, np.full(40, 0.5),
                                 np.full(40, 0.5), np.full(40, 0.5)])
        pts = make_points(xyz_t, np.full(40, 0.3))
        cs = CenterState.from_seeds(np.array([[2.0, 0.5, 0.5, 0.5],
                                              [7.5, 0.5, 0.5, 0.5]]))
        cs.dormant = np.array([False, True])
        cs.pval = np.array([0.3, 0.3])
        cs.has_p = np.array([True, True])
        C = interval_distances(ext, params.k)
        grid = CenterGrid(cs.loc, ext, C, params.k)
        pl, _ = assign_iteration(pts, FieldSet.empty(), np.empty((0, 4)), cs, grid,
                                 params, C)
        assert np.sum(pl == 1) > 0


class TestWeightEffects:
    def test_compactness_tradeoff_on_striped_field(self):
        # stripes of alternating value along x; small w_d should track values,
        # large w_d should stay spatially compact
        ext = DomainExtent(0, 8, 0, 4, 0, 1, 0, 1)
        nx, ny, nz, nt = 32, 16, 2, 2
        xs = (np.arange(nx) + 0.5) * 8 / nx
        # 0.9-wide stripes are incommensurate with the 2.0-wide seed slabs, so
        # initial clusters see different value mixes and can specialize
        stripe = (np.floor(xs / 0.9) % 2).astype(float)
        vals = np.tile(stripe, ny * nz)
        fs = FieldSet((nx, ny, nz), np.zeros(3), np.array([8 / nx, 4 / ny, 1 / nz]),
                      np.array([0.0, 1.0]), np.vstack([vals, vals]))

        def cluster_quality(w_d):
            params = ClusterParams(k=(4, 2, 1, 1), w_d=w_d, w_f=1.0,
                                   normalize=False, max_iterations=30)
            seg = run(None, fs, ext, params)
            loc4 = fs.loc4()
            v = fs.flat_values()
            stds, radii = [], []
            for c in seg.centers:
                m = seg.field_labels == c.id
                stds.append(v[m].std())
                d = loc4[m, :3] - loc4[m, :3].mean(axis=0)
                radii.append(np.sqrt((d ** 2).sum(axis=1)).mean())
            return np.mean(stds), np.mean(radii)

        std_lo, rad_lo = cluster_quality(0.01)
        std_hi, rad_hi = cluster_quality(10.0)
        assert std_lo < std_hi
        assert rad_hi < rad_lo
