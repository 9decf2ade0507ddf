import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svdphat.kdtree import KdTree, brute_force_nearest, build_index, complex_to_real, query_nearest


def unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestEmbedding:
    def test_interleaved(self):
        np.testing.assert_array_equal(complex_to_real(np.array([1 + 2j, 3 - 4j])), [1, 2, 3, -4])

    def test_isometry(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((20, 7)) + 1j * rng.standard_normal((20, 7))
        b = rng.standard_normal((20, 7)) + 1j * rng.standard_normal((20, 7))
        np.testing.assert_allclose(
            np.linalg.norm(a - b, axis=1), np.linalg.norm(complex_to_real(a) - complex_to_real(b), axis=1), rtol=1e-13
        )


class TestBuild:
    def test_single_point(self):
        tree = build_index(np.array([[0.3, -0.2]]))
        for z in ([0, 0], [10, 10], [-3, 1]):
            assert query_nearest(tree, np.array(z, float))[0] == 0

    def test_insertion_order_independent(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        perm = [2, 0, 1]
        a = KdTree(pts, leaf_size=1)
        b = KdTree(pts[perm], leaf_size=1)
        remap = np.array(perm)
        as_sets = lambda nodes, m: [(d, l, r, None if s is None else tuple(sorted(m[list(s)]))) for d, l, r, s in nodes]  # noqa: E731
        assert as_sets(a.nodes(), np.arange(3)) == as_sets(b.nodes(), remap)

    def test_deterministic(self):
        pts = unit_rows(np.random.default_rng(1), 300, 6)
        assert KdTree(pts).nodes() == KdTree(pts).nodes()

    @pytest.mark.parametrize("bad", [np.zeros((0, 3)), np.array([[np.nan, 0.0]]), np.zeros(3)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            KdTree(bad)

    def test_balanced(self):
        tree = KdTree(unit_rows(np.random.default_rng(2), 1000, 4), leaf_size=8)
        leaves = [len(s) for d, _, _, s in tree.nodes() if d < 0]
        assert sum(leaves) == 1000 and max(leaves) <= 8 and min(leaves) >= 4


class TestQuery:
    def test_self_query(self):
        pts = unit_rows(np.random.default_rng(3), 500, 10)
        tree = KdTree(pts)
        for q in range(0, 500, 7):
            idx, d2 = tree.query(pts[q])
            assert idx == q and d2 == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        pts = unit_rows(rng, 2000, 12)
        tree = KdTree(pts)
        for z in unit_rows(rng, 500, 12):
            idx, d2 = tree.query(z)
            ref, ref_d2 = brute_force_nearest(pts, z)
            assert idx == ref
            assert d2 == pytest.approx(ref_d2, abs=1e-12)

    def test_tie_goes_to_lowest_index(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        for leaf in (1, 2, 4):
            assert KdTree(pts, leaf_size=leaf).query(np.zeros(2))[0] == 0
            assert KdTree(pts[::-1], leaf_size=leaf).query(np.zeros(2))[0] == 0

    def test_duplicate_points(self):
        pts = np.array([[0.5, 0.5]] * 5 + [[0.0, 0.0]])
        tree = KdTree(pts, leaf_size=1)
        assert tree.query(np.array([0.6, 0.6]))[0] == 0

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            KdTree(np.eye(3)).query(np.zeros(2))

    def test_query_many(self):
        rng = np.random.default_rng(5)
        pts = unit_rows(rng, 100, 3)
        zs = unit_rows(rng, 10, 3)
        idx, _ = KdTree(pts).query_many(zs)
        assert idx.tolist() == [brute_force_nearest(pts, z)[0] for z in zs]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 300), st.integers(1, 9), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_exact_property(self, n, dim, leaf, seed):
        rng = np.random.default_rng(seed)
        # coarse coordinates create many exact ties
        pts = np.round(rng.standard_normal((n, dim)), 1)
        tree = KdTree(pts, leaf_size=leaf)
        for z in np.round(rng.standard_normal((5, dim)), 1):
            assert tree.query(z)[0] == brute_force_nearest(pts, z)[0]
