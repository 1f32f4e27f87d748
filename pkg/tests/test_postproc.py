import numpy as np
import pytest

from anomseg import postproc
from anomseg.postproc import PostprocParams

import oracles


class TestThreshold:
    def test_zero_map_empty(self):
        assert postproc.threshold(np.zeros((5, 5)), 0.1).sum() == 0

    def test_below_min_all_ones(self):
        u = np.full((4, 6), 0.3)
        assert postproc.threshold(u, 0.05).all()

    def test_single_pixel(self):
        u = np.zeros((5, 5))
        u[2, 3] = 0.2
        mask = postproc.threshold(u, 0.10)
        assert mask.sum() == 1 and mask[2, 3] == 1

    def test_comparison_is_geq(self):
        u = np.array([[0.1]])
        assert postproc.threshold(u, 0.1)[0, 0] == 1

    def test_antitone_in_t(self, rng):
        for _ in range(50):
            u = rng.random((12, 12)) * 0.3
            t1, t2 = sorted(rng.uniform(0.01, 0.3, 2))
            m1 = postproc.threshold(u, t1)
            m2 = postproc.threshold(u, t2)
            assert (m2 <= m1).all()

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            postproc.threshold(np.zeros((2, 2)), 0.0)


class TestRemoveSmallComponents:
    def test_area_boundary(self):
        mask = np.zeros((6, 6), np.uint8)
        mask[0, 0:3] = 1  # area 3
        assert postproc.remove_small_components(mask, 4).sum() == 0
        assert postproc.remove_small_components(mask, 3).sum() == 3

    def test_zero_min_area_identity(self, rng):
        mask = (rng.random((9, 9)) < 0.4).astype(np.uint8)
        assert (postproc.remove_small_components(mask, 0) == mask).all()

    def test_matches_flood_fill_oracle(self, rng):
        for conn in (8, 4):
            for _ in range(30):
                mask = (rng.random((14, 14)) < rng.uniform(0.1, 0.5)).astype(np.uint8)
                s = int(rng.integers(1, 6))
                got = postproc.remove_small_components(mask, s, connectivity=conn)
                want = oracles.remove_small_flood(mask, s, connectivity=conn)
                assert (got == want).all()


class TestCastVotes:
    def test_all_zero(self):
        assert (postproc.cast_votes(np.zeros((4, 5), np.uint8)) == 0).all()

    def test_single_row_fixture(self):
        votes = postproc.cast_votes(np.array([[1, 0, 1]], np.uint8))
        assert votes.tolist() == [[4, 2, 4]]

    def test_hollow_rectangle_interior_sees_four(self):
        mask = np.zeros((7, 9), np.uint8)
        mask[1, 1:8] = 1
        mask[5, 1:8] = 1
        mask[1:6, 1] = 1
        mask[1:6, 7] = 1
        votes = postproc.cast_votes(mask)
        assert (votes[2:5, 2:7] == 4).all()
        assert votes[0, 0] == 0      # row 0 and col 0 are empty
        assert votes[0, 3] == 1      # only the downward ray hits
        assert (votes[0] <= 1).all()

    def test_matches_ray_walk_oracle(self, rng):
        for _ in range(100):
            h, w = rng.integers(1, 24, 2)
            mask = (rng.random((h, w)) < rng.uniform(0.02, 0.4)).astype(np.uint8)
            assert (postproc.cast_votes(mask) == oracles.votes_ray_walk(mask)).all()


class TestMajorityRayCast:
    def test_hollow_rectangle_fills(self):
        mask = np.zeros((7, 9), np.uint8)
        mask[1, 1:8] = 1
        mask[5, 1:8] = 1
        mask[1:6, 1] = 1
        mask[1:6, 7] = 1
        out = postproc.majority_ray_cast(mask, [4])
        assert (out[1:6, 1:8] == 1).all()
        assert out.sum() == 5 * 7

    def test_all_zero_stays_zero(self):
        assert postproc.majority_ray_cast(np.zeros((6, 6), np.uint8), [3, 4]).sum() == 0

    def test_matches_composed_oracle(self, rng):
        for _ in range(40):
            mask = (rng.random((10, 12)) < 0.25).astype(np.uint8)
            thresholds = rng.integers(1, 5, size=int(rng.integers(1, 3))).tolist()
            got = postproc.majority_ray_cast(mask, thresholds)
            want = mask
            for v in thresholds:
                want = oracles.majority_pass(want, v)
            assert (got == want).all()

    def test_growth(self, rng):
        for _ in range(50):
            mask = (rng.random((10, 10)) < 0.3).astype(np.uint8)
            out = postproc.majority_ray_cast(mask, [3, 4])
            assert (out >= mask).all()

    def test_monotone_in_mask(self, rng):
        for _ in range(50):
            a = (rng.random((10, 10)) < 0.2).astype(np.uint8)
            extra = (rng.random((10, 10)) < 0.1).astype(np.uint8)
            b = (a | extra).astype(np.uint8)
            out_a = postproc.majority_ray_cast(a, [3, 4])
            out_b = postproc.majority_ray_cast(b, [3, 4])
            assert (out_a <= out_b).all()


class TestMorphology:
    def test_zero_radii_identity(self, rng):
        mask = (rng.random((8, 8)) < 0.3).astype(np.uint8)
        assert (postproc.close_open(mask, 0, 0) == mask).all()

    def test_disk_offsets_radius_one_is_cross(self):
        offs = {tuple(o) for o in postproc.disk_offsets(1)}
        assert offs == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}

    def test_closing_two_points_direct_evaluation(self):
        # direct dilate/erode evaluation on the 5x5 neighborhood: with the
        # strict Euclidean disk of radius 1 the two pixels survive unchanged
        # and the midpoint is not added (its vertical neighbors are missing
        # from the dilation)
        mask = np.zeros((5, 7), np.uint8)
        mask[2, 2] = 1
        mask[2, 4] = 1
        dil = postproc.dilate(mask, 1)
        assert dil[2, 3] == 1 and dil[1, 3] == 0 and dil[3, 3] == 0
        closed = postproc.close_open(mask, 1, 0)
        assert (closed == mask).all()

    def test_closing_bridges_dense_gap(self):
        # two thick vertical bars one column apart are merged by closing
        mask = np.zeros((9, 9), np.uint8)
        mask[2:7, 2:4] = 1
        mask[2:7, 5:7] = 1
        closed = postproc.close_open(mask, 1, 0)
        assert closed[4, 4] == 1

    def test_opening_removes_isolated_pixel(self):
        mask = np.zeros((9, 9), np.uint8)
        mask[4, 4] = 1
        assert postproc.close_open(mask, 0, 2).sum() == 0

    def test_border_is_background_for_erosion(self):
        mask = np.ones((5, 5), np.uint8)
        eroded = postproc.erode(mask, 1)
        assert eroded[0].sum() == 0 and eroded[:, 0].sum() == 0
        assert eroded[2, 2] == 1


class TestFlatten:
    def test_horizontal_boundary_identity(self, rng):
        mask = (rng.random((10, 6)) < 0.3).astype(np.uint8)
        bottom = np.full(6, 7)
        (out,), shifts = postproc.flatten_maps([mask], bottom)
        assert (shifts == 0).all()
        assert (out == mask).all()

    def test_roundtrip_exact(self, rng):
        bottom = rng.integers(6, 12, size=8)
        mask = np.zeros((16, 8), np.uint8)
        mask[6:9, 2:7] = 1
        (flat,), shifts = postproc.flatten_maps([mask], bottom)
        assert (postproc.unflatten_mask(flat, shifts) == mask).all()

    def test_flattened_boundary_variance_zero(self, rng):
        bottom = rng.integers(8, 14, size=10)
        rows = np.zeros((20, 10))
        (out,), shifts = postproc.flatten_maps([rows], bottom)
        flattened_rows = bottom + shifts
        assert np.var(flattened_rows) == 0


class TestConvexHull:
    def test_empty(self):
        assert postproc.convex_hull_mask(np.zeros((4, 4), np.uint8)).sum() == 0

    def test_single_pixel(self):
        mask = np.zeros((5, 5), np.uint8)
        mask[1, 3] = 1
        assert (postproc.convex_hull_mask(mask) == mask).all()

    def test_triangle_contains_and_idempotent(self):
        mask = np.zeros((12, 12), np.uint8)
        for r, c in ((2, 2), (9, 3), (4, 10)):
            mask[r, c] = 1
        hull = postproc.convex_hull_mask(mask)
        assert hull[2, 2] and hull[9, 3] and hull[4, 10]
        assert hull.sum() > 3
        assert (postproc.convex_hull_mask(hull) == hull).all()

    def test_idempotent_on_random(self, rng):
        for _ in range(20):
            mask = (rng.random((10, 10)) < 0.1).astype(np.uint8)
            hull = postproc.convex_hull_mask(mask)
            assert (postproc.convex_hull_mask(hull) == hull).all()
            assert (hull >= mask).all()


class TestPipeline:
    def test_zero_map_empty_for_all_variants(self):
        u = np.zeros((16, 16))
        for variant in postproc.VARIANTS:
            params = PostprocParams(variant=variant)
            assert postproc.pipeline(u, params).sum() == 0

    def test_full_equals_staged_composition(self, rng):
        u = rng.random((24, 24)) * 0.2
        params = PostprocParams(threshold=0.10, min_component_area=10,
                                vote_thresholds=(3, 4), closing_radius=4,
                                opening_radius=2)
        got = postproc.pipeline(u, params)
        staged = postproc.threshold(u, 0.10)
        staged = postproc.remove_small_components(staged, 10, 8)
        staged = postproc.majority_ray_cast(staged, (3, 4))
        staged = postproc.close_open(staged, 4, 2)
        assert (got == staged).all()

    def test_voting_only_adds_pixels(self, rng):
        u = rng.random((20, 20)) * 0.25
        params = PostprocParams(threshold=0.08, min_component_area=2,
                                vote_thresholds=(3, 4), variant="no_morphology")
        got = postproc.pipeline(u, params)
        cleaned = postproc.remove_small_components(postproc.threshold(u, 0.08), 2, 8)
        assert (got >= cleaned).all()

    def test_flatten_variant_requires_bottom(self):
        params = PostprocParams(flatten=True)
        with pytest.raises(ValueError, match="bottom"):
            postproc.pipeline(np.zeros((8, 8)), params)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PostprocParams(vote_thresholds=(5,)).validate()
        with pytest.raises(ValueError):
            PostprocParams(variant="bogus").validate()
        with pytest.raises(ValueError):
            PostprocParams(connectivity=6).validate()
