import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlsq import gridfn
from mlsq.dyadic import DyadicCube
from mlsq.gridfn import (
    GridAlignmentError,
    SampledFunction,
    average,
    bmo_norm,
    bmo_report,
    from_callable,
    lp_norm,
)


def indicator(lo, hi):
    def fn(x):
        return ((x >= lo) & (x < hi)).astype(float)

    return fn


class TestConstruction:
    def test_misaligned_window_rejected(self):
        with pytest.raises(GridAlignmentError):
            from_callable(lambda x: x, [0.1], [1.0], -3)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            SampledFunction(-2, (0,), np.array([1.0, np.nan]))

    def test_immutable(self):
        f = from_callable(lambda x: x, [0.0], [1.0], -3)
        with pytest.raises(ValueError):
            f.values[0] = 5.0

    def test_algebra_new_instances(self):
        f = from_callable(lambda x: x, [0.0], [1.0], -3)
        g = f + f
        assert g is not f
        assert np.allclose(g.values, 2 * f.values)
        assert np.allclose(abs(-f).values, np.abs(f.values))


class TestLpNorm:
    def test_constant_unit_cube(self):
        f = from_callable(lambda x: np.ones_like(x), [0.0], [1.0], -5)
        assert lp_norm(f, 2) == pytest.approx(1.0)

    def test_indicator_cube_root(self):
        f = from_callable(indicator(0.0, 2.0), [-1.0], [3.0], -5)
        assert lp_norm(f, 3) == pytest.approx(2.0 ** (1 / 3))

    def test_gaussian_against_exact_integral(self):
        f = from_callable(lambda x: np.exp(-(x**2)), [-8.0], [8.0], -8)
        assert abs(lp_norm(f, 2) - (math.pi / 2) ** 0.25) < 1e-4

    def test_sup_norm(self):
        f = from_callable(lambda x: x, [0.0], [1.0], -4)
        assert lp_norm(f, np.inf) == pytest.approx(1.0 - 2.0**-5)

    def test_invalid_exponent(self):
        f = from_callable(lambda x: x, [0.0], [1.0], -3)
        with pytest.raises(ValueError):
            lp_norm(f, 0.5)

    @given(st.floats(-1e3, 1e3), st.floats(1, 20))
    @settings(max_examples=100)
    def test_homogeneity(self, c, p):
        f = from_callable(lambda x: np.cos(3 * x) + 0.2, [0.0], [2.0], -5)
        assert lp_norm(c * f, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12)

    def test_discrete_cauchy_schwarz(self):
        f = from_callable(lambda x: np.sin(x) + 1.1, [0.0], [4.0], -5)
        g = from_callable(lambda x: np.exp(-x), [0.0], [4.0], -5)
        assert lp_norm(f * g, 1) <= lp_norm(f, 2) * lp_norm(g, 2) + 1e-14


class TestAverage:
    def test_constant(self):
        f = from_callable(lambda x: np.full_like(x, 2.5), [0.0], [1.0], -5)
        for key in [(0, 0), (1, 0), (3, 5)]:
            assert average(f, DyadicCube(*key[:1], key[1:])) == pytest.approx(2.5)

    def test_alternating_slot_one_mean(self):
        # +1 on the first three quarters, -1 on the last: mean 1/2.
        f = from_callable(
            lambda x: np.where(x < 0.75, 1.0, -1.0), [0.0], [1.0], -5
        )
        assert average(f, DyadicCube(0, (0,))) == pytest.approx(0.5)

    def test_linear_function_on_two_cube(self):
        f = from_callable(lambda x: x - 0.5, [0.0], [2.0], -6)
        # Midpoint rule is exact on linear functions.
        assert average(f, DyadicCube(-1, (0,))) == pytest.approx(0.5)
        assert abs(average(f, DyadicCube(-1, (0,))) * 2.0) == pytest.approx(1.0)

    def test_misalignment(self):
        f = from_callable(lambda x: x, [0.0], [1.0], -3)
        with pytest.raises(gridfn.ResolutionError):
            average(f, DyadicCube(5, (0,)))  # below grid spacing
        with pytest.raises(GridAlignmentError):
            average(f, DyadicCube(0, (1,)))  # outside window

    def test_zero_extension(self):
        f = from_callable(lambda x: np.ones_like(x), [0.0], [1.0], -3)
        assert average(f, DyadicCube(-1, (0,)), zero_extend=True) == pytest.approx(0.5)


def brute_bmo(f: SampledFunction) -> float:
    # Independent enumeration: all cell-aligned dyadic cubes inside the
    # window, mean oscillation by direct loops.
    best = 0.0
    h = f.h
    g = -f.h_log2
    while 2.0**-g <= min(hi - lo for lo, hi in zip(f.window_lo, f.window_hi)):
        s = int(round(2.0**-g / h))
        k_lo = math.ceil(f.lo[0] / s)
        k_hi = f.lo[0] + f.shape[0]
        k = k_lo
        while (k + 1) * s <= k_hi:
            block = f.values[k * s - f.lo[0] : (k + 1) * s - f.lo[0]]
            best = max(best, float(np.mean(np.abs(block - block.mean()))))
            k += 1
        g -= 1
    return best


class TestBmo:
    def test_constant_zero(self):
        f = from_callable(lambda x: np.full_like(x, 3.3), [-1.0], [1.0], -4)
        assert bmo_norm(f) == 0.0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_bounded_by_sup(self, seed):
        rng = np.random.default_rng(seed)
        vals = rng.normal(size=32)
        f = SampledFunction(-4, (-16,), vals)
        assert bmo_norm(f) <= 2.0 * lp_norm(f, np.inf) + 1e-12

    def test_indicator_against_brute_force(self):
        f = from_callable(indicator(0.0, 1.0), [-2.0], [2.0], -4)
        assert bmo_norm(f) == pytest.approx(brute_bmo(f), rel=1e-12)

    def test_brute_force_random(self):
        rng = np.random.default_rng(3)
        f = SampledFunction(-3, (-4,), rng.normal(size=24))
        assert bmo_norm(f) == pytest.approx(brute_bmo(f), rel=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=32)
        f = SampledFunction(-4, (0,), vals)
        g = SampledFunction(-4, (16,), vals)  # shifted by a whole cube side
        assert bmo_norm(f) == pytest.approx(bmo_norm(g), rel=1e-12)

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(6)
        f = SampledFunction(-4, (0,), rng.normal(size=32))
        assert bmo_norm(f + 7.5) == pytest.approx(bmo_norm(f), rel=1e-10)

    def test_report_names_family(self):
        f = from_callable(indicator(0.0, 1.0), [-2.0], [2.0], -4)
        rep = bmo_report(f)
        assert rep["generations"]
        assert rep["cube_count"] > 0
        assert rep["witness"] is not None


class TestIO:
    def test_binary_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        f = SampledFunction(-5, (-8, 4), rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6)))
        path = os.path.join(tmp_path, "f.grid")
        gridfn.save_binary(f, path)
        g = gridfn.load_binary(path)
        assert g.h_log2 == f.h_log2 and g.lo == f.lo
        assert np.array_equal(g.values, f.values)

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        f = SampledFunction(-3, (2,), rng.normal(size=10))
        path = os.path.join(tmp_path, "f.csv")
        gridfn.save_csv(f, path)
        g = gridfn.load_csv(path)
        assert g.h_log2 == f.h_log2 and g.lo == f.lo
        assert np.allclose(g.values, f.values)
