import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import identity, polar, spiral
from riemcov.diff import (
    FAIL,
    PASS,
    DensityField,
    inverse_inclusion_check,
    jacobian_fd,
    lipschitz_estimate,
    mcshane_extension,
    setfn_derivative,
    strong_diff_test,
    strong_partial_quotient_range,
)
from riemcov.errors import SingularDerivative
from riemcov.geometry import AxisBox, Cube


class TestQuotientRange:
    def test_projection(self):
        lo, hi = strong_partial_quotient_range(lambda P: P[:, 1], 1, [0.3, 0.4], 0.1)
        assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)

    def test_square(self):
        lo, hi = strong_partial_quotient_range(lambda P: P[:, 0] ** 2, 0, [1.0], 0.1)
        assert 1.8 <= lo <= 2 <= hi <= 2.2

    def test_abs_at_kink(self):
        lo, hi = strong_partial_quotient_range(lambda P: np.abs(P[:, 0]), 0, [0.0], 0.1)
        assert lo == pytest.approx(-1.0) and hi == pytest.approx(1.0)


class TestDensityField:
    def test_identity(self):
        F = DensityField(identity, AxisBox([-1, -1], [1, 1]))
        np.testing.assert_allclose(F.gbar([0.2, -0.3]), np.eye(2))
        assert F.density([0.1, 0.1]) == pytest.approx(1.0)

    def test_quadratic_map(self):
        G = lambda P: np.stack([P[:, 0] ** 2 + P[:, 1], P[:, 0] * P[:, 1]], 1)
        F = DensityField(G, AxisBox([0, 0], [2, 2]), radii=(1e-2, 1e-3))
        np.testing.assert_allclose(F.gbar([1.0, 1.0]), [[2, 1], [1, 1]], atol=1e-2)

    def test_affine_exact(self, rng):
        A = rng.normal(size=(3, 3))
        b = rng.normal(size=3)
        F = DensityField(lambda P: P @ A.T + b, AxisBox([-1] * 3, [1] * 3))
        for x in rng.uniform(-0.5, 0.5, (5, 3)):
            np.testing.assert_allclose(F.gbar(x), A, atol=1e-9)

    def test_polar_and_spiral_values(self):
        F = DensityField(polar, AxisBox([0, 0], [1, 2 * math.pi]))
        assert F.density([0.5, 1.0]) == pytest.approx(0.5, abs=1e-2)
        S = DensityField(spiral, AxisBox([0, 0], [2, 2 * math.pi]))
        assert S.density([1.0, math.pi]) == pytest.approx(math.e**2, abs=1e-2)

    def test_boundary_is_zero(self):
        F = DensityField(identity, AxisBox([0, 0], [1, 1]))
        np.testing.assert_array_equal(F.gbar([0.0, 0.5]), np.zeros((2, 2)))

    def test_entries_bounded_by_lipschitz(self, rng):
        F = DensityField(polar, AxisBox([0, 0], [1, 2 * math.pi]))
        pts = rng.uniform([0.05, 0.05], [0.95, 6.2], (50, 2))
        # max-norm Lipschitz constant of polar on the domain is max|cos|+|sin| * ... <= sqrt(2) * max(1, r)
        assert np.abs(F.gbar_many(pts)).max() <= math.sqrt(2) + 1e-9

    def test_agrees_with_finite_differences(self, rng):
        pts = rng.uniform([0.2, 0.2], [0.8, 6.0], (20, 2))
        fd = jacobian_fd(polar, pts)
        for r0, tol in [(1e-2, 2e-2), (1e-3, 2e-3)]:
            F = DensityField(polar, AxisBox([0, 0], [1, 2 * math.pi]), radii=(r0, r0 / 10), estimator="min")
            assert np.abs(F.gbar_many(pts) - fd).max() < tol

    def test_rejects_bad_radii(self):
        with pytest.raises(ValueError):
            DensityField(identity, AxisBox([0], [1]), radii=(1e-3, 1e-2))
        with pytest.raises(ValueError):
            DensityField(identity, AxisBox([0], [1]), estimator="mean")

    def test_cache_returns_copies(self):
        F = DensityField(identity, AxisBox([0, 0], [1, 1]))
        g = F.gbar([0.5, 0.5])
        g[0, 0] = 99
        assert F.gbar([0.5, 0.5])[0, 0] == pytest.approx(1.0)


class TestStrongDiff:
    def test_affine_passes(self, rng):
        A = rng.normal(size=(2, 2))
        rep = strong_diff_test(lambda P: P @ A.T, [0.3, -0.2], radii=(1e-1, 1e-2))
        assert rep.verdict == PASS
        assert max(d for _, d in rep.defect_by_radius) < 1e-12

    def test_square_passes(self):
        rep = strong_diff_test(lambda P: P**2, [1.0], tol=1e-3)
        assert rep.verdict == PASS
        d = [v for _, v in rep.defect_by_radius]
        assert d == sorted(d, reverse=True)

    def test_abs_fails(self):
        rep = strong_diff_test(np.abs, [0.0])
        assert rep.verdict == FAIL
        assert all(v > 0.5 for _, v in rep.defect_by_radius)


class TestSetFnDerivative:
    def test_volume(self):
        est = setfn_derivative(lambda c: c.volume, [0.3, 0.4], (0.1, 0.01))
        assert all(q == pytest.approx(1.0) for _, q, _, _ in est.trace)

    def test_integral_of_x(self):
        Phi = lambda c: c.volume * c.center[0]
        est = setfn_derivative(Phi, [0.5], (0.1, 0.01, 0.001))
        assert est.estimate == pytest.approx(0.5)
        _, _, lo, hi = est.trace[-1]
        assert lo == pytest.approx(0.5, abs=1e-3) and hi == pytest.approx(0.5, abs=1e-3)


class TestInverseInclusion:
    def test_affine(self):
        A = np.array([[2.0, 1.0], [0.5, 1.5]])
        assert inverse_inclusion_check(lambda P: P @ A.T, [0.1, 0.2], eps=0.3).passed

    def test_spiral(self):
        rep = inverse_inclusion_check(spiral, [1.0, 0.0], eps=0.5)
        assert rep.passed

    def test_singular(self):
        with pytest.raises(SingularDerivative):
            inverse_inclusion_check(lambda P: P**3, [0.0])


class TestLipschitz:
    def test_identity(self):
        assert lipschitz_estimate(identity, AxisBox([0, 0], [1, 1])) == pytest.approx(1.25)

    def test_scaling(self):
        assert lipschitz_estimate(lambda P: 3 * P, AxisBox([0], [1])) == pytest.approx(3.75)

    def test_spiral(self):
        L = lipschitz_estimate(spiral, AxisBox([1, 0], [2, 4 * math.pi]))
        assert L >= 7.38
        # true max-norm constant is e^2 * sqrt(2)
        assert L <= 1.25 * math.e**2 * math.sqrt(2) * (1 + 1e-6)

    def test_deterministic(self):
        box = AxisBox([1, 0], [2, 4 * math.pi])
        assert lipschitz_estimate(spiral, box, seed=3) == lipschitz_estimate(spiral, box, seed=3)


class TestMcShane:
    def test_examples(self):
        F = mcshane_extension([[0.0], [1.0]], [0.0, 1.0], 1.0)
        assert F(np.array([[0.5]]))[0] == 0.5
        one = mcshane_extension([[0.2, 0.3]], [[1.0, -1.0]], 2.0)
        np.testing.assert_allclose(one(np.array([[0.7, 0.3]])), [[2.0, 0.0]], atol=1e-12)

    def test_exact_at_samples(self, rng):
        S = rng.random((30, 2))
        V = np.sin(S[:, 0]) + S[:, 1]
        F = mcshane_extension(S, V, 2.0)
        np.testing.assert_array_equal(F(S), V)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_lipschitz_inequality(self, seed):
        rng = np.random.default_rng(seed)
        S = rng.random((20, 2))
        V = S.sum(axis=1)  # 2-Lipschitz in the max norm
        F = mcshane_extension(S, V, 2.0)
        P = rng.uniform(-1, 2, (50, 2))
        FP = F(P)
        gap = np.abs(FP[:, None] - V[None, :])
        dist = np.max(np.abs(P[:, None, :] - S[None, :, :]), axis=2)
        assert np.all(gap <= 2.0 * dist + 1e-12)
