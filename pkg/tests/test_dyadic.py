import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlsq import dyadic
from mlsq.dyadic import DyadicCube, smallest_containing, subcubes, whitney


def oracle_smallest(x: float, t: float) -> DyadicCube:
    # Enumerate dyadic ancestors of a fine cell containing x and pick the
    # minimal generation with side > t.
    g = 40
    cube = DyadicCube(g, (math.floor(x * 2.0**g),))
    while cube.side <= t:
        cube = cube.parent()
    return cube


class TestSmallestContaining:
    def test_parent_forced_by_strict_inequality(self):
        Q = smallest_containing(0.3, 1.0)
        assert Q.key() == (-1, 0)  # [0, 2)

    def test_negative_coordinate(self):
        Q = smallest_containing(-0.1, 0.2)
        assert Q.key() == (2, -1)  # [-0.25, 0)
        assert Q == oracle_smallest(-0.1, 0.2)

    def test_unit_cube(self):
        assert smallest_containing(0.3, 0.6).key() == (0, 0)  # [0, 1)

    @given(
        st.floats(-100, 100, allow_nan=False),
        st.floats(1e-9, 1e6),
    )
    @settings(max_examples=300)
    def test_postconditions(self, x, t):
        Q = smallest_containing(x, t)
        assert Q.contains([x])
        assert Q.side > t
        assert Q.side / 2.0 <= t

    @given(
        st.floats(-10, 10, allow_nan=False),
        st.floats(1e-6, 10),
        st.floats(1.0, 8.0),
    )
    @settings(max_examples=200)
    def test_nesting(self, x, t, factor):
        small = smallest_containing(x, t)
        big = smallest_containing(x, t * factor)
        assert big.contains_cube(small)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            smallest_containing(0.0, 0.0)
        with pytest.raises(ValueError):
            smallest_containing(float("nan"), 1.0)
        with pytest.raises(dyadic.GenerationRangeError):
            smallest_containing(0.0, 2.0**-120)


class TestCubeBasics:
    def test_children_partition(self):
        Q = DyadicCube(0, (0, 0))
        kids = Q.children()
        assert len(kids) == 4
        assert sum(k.volume for k in kids) == Q.volume
        for k in kids:
            assert Q.contains_cube(k)
            assert k.parent() == Q

    @given(st.integers(-4, 8), st.integers(-50, 50), st.integers(-50, 50))
    @settings(max_examples=100)
    def test_same_generation_disjoint_or_equal(self, g, k1, k2):
        a = DyadicCube(g, (k1,))
        b = DyadicCube(g, (k2,))
        if a != b:
            assert not (a.lo[0] < b.hi[0] and b.lo[0] < a.hi[0])

    def test_key_roundtrip(self):
        Q = DyadicCube(3, (-5, 7))
        assert dyadic.cube_from_key(Q.key()) == Q


class TestSubcubes:
    def test_depth_one_interval(self):
        out = subcubes(DyadicCube(0, (0,)), 1)
        assert [c.key() for c in out] == [(0, 0), (1, 0), (1, 1)]

    def test_depth_one_square(self):
        out = subcubes(DyadicCube(0, (0, 0)), 1)
        assert len(out) == 5

    def test_count_geometric_series(self):
        assert len(subcubes(DyadicCube(0, (0,)), 10)) == 2047

    def test_partition_at_each_level(self):
        Q = DyadicCube(1, (3,))
        out = subcubes(Q, 3)
        for g in range(Q.generation, Q.generation + 4):
            level = [c for c in out if c.generation == g]
            assert sum(c.volume for c in level) == pytest.approx(Q.volume)

    def test_cap(self):
        with pytest.raises(dyadic.SubcubeCapError):
            subcubes(DyadicCube(0, (0, 0)), 15, cap=1000)

    def test_negative_depth(self):
        with pytest.raises(ValueError):
            subcubes(DyadicCube(0, (0,)), -1)


def interval_mask(pieces, g, lo_cell, n_cells):
    """Cell mask on [lo_cell, lo_cell + n_cells) * 2^-g from (a, b) intervals."""
    mask = np.zeros(n_cells, dtype=bool)
    h = 2.0**-g
    for a, b in pieces:
        i0 = max(int(math.ceil(a / h)) - lo_cell, 0)
        i1 = min(int(math.floor(b / h)) - lo_cell, n_cells)
        mask[i0:i1] = True
    return mask


class TestWhitney:
    def test_empty(self):
        assert whitney(np.zeros(64, dtype=bool), 5, corner0=[0]) == []

    def test_unit_interval_properties(self):
        g = 6
        mask = interval_mask([(0.0, 1.0)], g, -(2**g), 3 * 2**g)
        cubes = whitney(mask, g, corner0=[-(2**g)])
        rep = dyadic.whitney_properties(cubes, mask, g, corner0=[-(2**g)])
        assert rep["all"], rep

    def test_two_components_independent(self):
        g = 6
        lo = -(2**g)
        mask = interval_mask([(0.0, 1.0), (2.0, 3.0)], g, lo, 5 * 2**g)
        cubes = whitney(mask, g, corner0=[lo])
        rep = dyadic.whitney_properties(cubes, mask, g, corner0=[lo])
        assert rep["all"], rep
        # No cube meets both components: each is inside one interval.
        for Q in cubes:
            inside_first = 0.0 <= Q.lo[0] and Q.hi[0] <= 1.0
            inside_second = 2.0 <= Q.lo[0] and Q.hi[0] <= 3.0
            assert inside_first or inside_second

    def test_boundary_touch_rejected(self):
        mask = np.ones(8, dtype=bool)
        with pytest.raises(dyadic.WhitneyInputError):
            whitney(mask, 3, corner0=[0])

    @given(st.lists(st.integers(0, 61), min_size=1, max_size=25, unique=True))
    @settings(max_examples=60, deadline=None)
    def test_random_open_sets_1d(self, cells):
        mask = np.zeros(64, dtype=bool)
        for c in cells:
            mask[1 + c] = True
        cubes = whitney(mask, 6, corner0=[-32])
        rep = dyadic.whitney_properties(cubes, mask, 6, corner0=[-32])
        assert rep["all"], rep

    def test_random_open_sets_2d(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            mask = np.zeros((34, 34), dtype=bool)
            blocks = rng.integers(1, 5)
            for _ in range(blocks):
                i, j = rng.integers(1, 25, size=2)
                w, v = rng.integers(1, 9, size=2)
                mask[i : min(i + w, 33), j : min(j + v, 33)] = True
            cubes = whitney(mask, 5, corner0=[-17, -17])
            rep = dyadic.whitney_properties(cubes, mask, 5, corner0=[-17, -17])
            assert rep["all"], rep
