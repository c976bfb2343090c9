import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemcov.geometry import AxisBox, BoxSet, Cube, CubeUnion
from riemcov.partition import (
    CubePartition,
    DottedPartition,
    JordanPartition,
    partition_norm,
    tag_centers,
    uniform_grid,
    validate,
    validate_jordan,
)

UNIT2 = AxisBox([0, 0], [1, 1])


class TestUniformGrid:
    def test_single_cell(self):
        p = uniform_grid(UNIT2, 1)
        assert len(p) == 1
        np.testing.assert_array_equal(p.lo[0], [0, 0])
        np.testing.assert_array_equal(p.hi[0], [1, 1])

    def test_quarters(self):
        p = uniform_grid(UNIT2, 2)
        np.testing.assert_allclose(p.volumes, 0.25)

    def test_cube_27(self):
        p = uniform_grid(AxisBox([0] * 3, [1] * 3), 3)
        assert len(p) == 27
        assert p.volumes.sum() == pytest.approx(1.0, abs=1e-15)

    def test_accepts_cube(self):
        p = uniform_grid(Cube([0.5, 0.5], 0.5), 4)
        assert partition_norm(p) == 0.25

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            uniform_grid(UNIT2, 0)


class TestNorm:
    def test_examples(self):
        assert partition_norm(uniform_grid(UNIT2, 2)) == 0.5
        assert partition_norm(uniform_grid(UNIT2, 1)) == 1.0
        assert partition_norm(uniform_grid(UNIT2, [4, 2])) == 0.5

    @given(side=st.floats(0.1, 10), n=st.integers(1, 40))
    def test_norm_is_side_over_n(self, side, n):
        p = uniform_grid(Cube([0.0, 1.0], side / 2), n)
        assert partition_norm(p) == pytest.approx(side / n, rel=1e-12)

    def test_jordan_norm_uses_bounding_box(self):
        jp = JordanPartition([BoxSet(AxisBox([0, 0], [0.5, 1])), BoxSet(AxisBox([0.5, 0], [1, 1]))], BoxSet(UNIT2))
        assert partition_norm(jp) == 1.0


class TestTags:
    def test_examples(self):
        assert tag_centers(uniform_grid(AxisBox([0], [1]), 1)).tags.ravel().tolist() == [0.5]
        tags = {tuple(t) for t in tag_centers(uniform_grid(UNIT2, 2)).tags}
        assert tags == {(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)}
        assert tag_centers(uniform_grid(AxisBox([0], [2]), 4)).tags.ravel().tolist() == [0.25, 0.75, 1.25, 1.75]

    def test_tag_count_must_match(self):
        with pytest.raises(ValueError):
            DottedPartition(uniform_grid(UNIT2, 2), [[0.5, 0.5]])


class TestValidate:
    def test_valid(self):
        assert validate(tag_centers(uniform_grid(UNIT2, 2))) == []

    def test_tag_outside(self):
        p = uniform_grid(UNIT2, 2)
        tags = p.centers.copy()
        tags[1] = [0.9, 0.9]
        report = validate(DottedPartition(p, tags))
        assert any(r.startswith("tag outside cell: cell 1") for r in report)

    def test_overlap(self):
        p = CubePartition([[0, 0], [0.5, 0], [0.25, 0]], [[0.5, 1], [1, 1], [0.75, 1]], UNIT2)
        report = validate(p)
        assert any(r.startswith("overlap") for r in report)
        assert any(r.startswith("volume mismatch") for r in report)

    def test_cell_outside_parent(self):
        p = CubePartition([[0, 0], [0.5, 0]], [[0.5, 1], [1.5, 1]], UNIT2)
        assert any("outside parent" in r for r in validate(p))

    def test_gap_shows_as_volume_mismatch(self):
        p = CubePartition([[0, 0]], [[0.5, 1]], UNIT2)
        assert validate(p) == ["volume mismatch: cells sum to 0.5, parent has 1.0"]

    def test_large_partition_is_fast(self):
        p = uniform_grid(AxisBox([0] * 3, [1] * 3), 64)
        assert validate(tag_centers(p)) == []

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(1, 5), k=st.integers(1, 4), m=st.integers(1, 3), seed=st.integers(0, 1000))
    def test_refinement_and_random_tags_stay_valid(self, n, k, m, seed):
        rng = np.random.default_rng(seed)
        lo = rng.uniform(-1, 1, m)
        parent = AxisBox(lo, lo + rng.uniform(0.5, 2, m))
        p = uniform_grid(parent, n).refine(k)
        assert len(p) == (n * k) ** m
        tags = p.lo + (p.hi - p.lo) * rng.random(p.lo.shape)
        assert validate(DottedPartition(p, tags)) == []
        assert validate(tag_centers(p)) == []


class TestJordanPartition:
    def test_halves_of_square(self):
        jp = JordanPartition([BoxSet(AxisBox([0, 0], [0.5, 1])), BoxSet(AxisBox([0.5, 0], [1, 1]))], BoxSet(UNIT2))
        assert validate_jordan(jp) == []

    def test_missing_part(self):
        jp = JordanPartition([BoxSet(AxisBox([0, 0], [0.5, 1]))], BoxSet(UNIT2))
        assert validate_jordan(jp)

    def test_overlapping_parts(self):
        parts = [CubeUnion([AxisBox([0, 0], [0.75, 1])], UNIT2), CubeUnion([AxisBox([0.25, 0], [1, 1])], UNIT2)]
        assert any("overlap" in r for r in validate_jordan(JordanPartition(parts, BoxSet(UNIT2))))
