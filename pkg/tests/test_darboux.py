import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riemcov.darboux import (
    Bracket,
    Modulus,
    Sampled,
    cell_inf_sup,
    darboux_sums,
    integral_bracket,
    integrate_matrix,
    lower_sum,
    oscillation_sum,
    riemann_sum,
    upper_sum,
)
from riemcov.errors import NonFiniteValue
from riemcov.geometry import AxisBox, BoxSet, ClassifiedSet, Cube
from riemcov.partition import DottedPartition, tag_centers, uniform_grid

UNIT1 = AxisBox([0], [1])
UNIT2 = AxisBox([0, 0], [1, 1])


def x1(P):
    return P[:, 0]


def step(P):
    return (P[:, 0] <= 0.5).astype(float)


class TestCellBounds:
    def test_constant(self):
        c = Cube([0.5, 0.5], 0.25)
        assert cell_inf_sup(lambda P: np.full(len(P), 3.0), c) == (3.0, 3.0)
        assert cell_inf_sup(lambda P: np.full(len(P), 3.0), c, Modulus(2.0)) == (2.5, 3.5)

    def test_linear_modulus(self):
        assert cell_inf_sup(x1, UNIT1, Modulus(1.0)) == (-0.5, 1.5)

    def test_square_sampled(self):
        assert cell_inf_sup(lambda P: P[:, 0] ** 2, UNIT1, Sampled(3)) == (0.0, 1.0)

    def test_non_finite_is_reported(self):
        with pytest.raises(NonFiniteValue), np.errstate(divide="ignore"):
            cell_inf_sup(lambda P: 1 / P[:, 0], UNIT1)


class TestSums:
    def test_constant(self):
        p = uniform_grid(UNIT2, 3)
        lo, hi = darboux_sums(lambda P: np.full(len(P), 2.0), p)
        assert lo == pytest.approx(2.0) and hi == pytest.approx(2.0)

    def test_linear_n4(self):
        p = uniform_grid(UNIT1, 4)
        assert lower_sum(x1, p) == pytest.approx(0.375)
        assert upper_sum(x1, p) == pytest.approx(0.625)

    def test_step_n3(self):
        p = uniform_grid(UNIT1, 3)
        assert lower_sum(step, p) == pytest.approx(1 / 3)
        assert upper_sum(step, p) == pytest.approx(2 / 3)
        assert oscillation_sum(step, p) == pytest.approx(1 / 3)

    def test_step_n2_closed_indicator(self):
        # 0.5 is a corner of the second cell, so that cell sees both values
        p = uniform_grid(UNIT1, 2)
        assert lower_sum(step, p) == pytest.approx(0.5)
        assert upper_sum(step, p) == pytest.approx(1.0)

    @pytest.mark.parametrize("n", [1, 2, 7, 16])
    def test_oscillation_linear(self, n):
        assert oscillation_sum(x1, uniform_grid(UNIT1, n)) == pytest.approx(1 / n)

    def test_riemann_examples(self):
        p = uniform_grid(UNIT2, 2)
        assert riemann_sum(lambda P: np.ones(len(P)), tag_centers(p)) == pytest.approx(1.0)
        assert riemann_sum(x1, tag_centers(uniform_grid(UNIT1, 2))) == pytest.approx(0.5)
        assert riemann_sum(lambda P: P.sum(axis=1), tag_centers(p)) == pytest.approx(1.0)


class TestIntegralBracket:
    def test_one_on_square(self):
        r = integral_bracket(lambda P: np.ones(len(P)), BoxSet(UNIT2), [1])
        assert (r.lower, r.upper) == (1.0, 1.0)
        assert r.converged
        assert r.bracket.label == "estimate"

    def test_sqrt(self):
        r = integral_bracket(lambda P: np.sqrt(P[:, 0]), BoxSet(UNIT1), [8, 12])
        assert r.bracket.contains(2 / 3)
        assert r.bracket.width < 1e-3

    def test_disk_area(self):
        S = ClassifiedSet(AxisBox([-1, -1], [1, 1]), lambda P: np.sum(P * P, axis=1) <= 1, convex_safe=True)
        r = integral_bracket(lambda P: np.ones(len(P)), S, [10])
        assert r.bracket.contains(math.pi)
        assert r.bracket.width < 0.05
        assert r.bracket.label == "estimate/convex-inner"

    def test_f_never_evaluated_outside(self):
        S = ClassifiedSet(AxisBox([-1, -1], [1, 1]), lambda P: np.sum(P * P, axis=1) <= 1, convex_safe=True)
        seen = []

        def f(P):
            seen.append(P.copy())
            return np.ones(len(P))

        integral_bracket(f, S, [4, 6])
        pts = np.concatenate(seen)
        assert np.all(np.sum(pts * pts, axis=1) <= 1 + 1e-12)

    def test_extension_by_zero_signs(self):
        # negative integrand over a disk: boundary slack goes below, never above 0
        S = ClassifiedSet(AxisBox([-1, -1], [1, 1]), lambda P: np.sum(P * P, axis=1) <= 1, convex_safe=True)
        r = integral_bracket(lambda P: -np.ones(len(P)), S, [8])
        assert r.bracket.contains(-math.pi)
        assert r.upper <= 0

    def test_schedule_checks(self):
        with pytest.raises(ValueError):
            integral_bracket(x1, BoxSet(UNIT1), [3, 3])
        with pytest.raises(ValueError):
            integral_bracket(x1, BoxSet(UNIT1), [])

    def test_modulus_label_and_enclosure(self):
        r = integral_bracket(lambda P: np.sin(3 * P[:, 0]), BoxSet(UNIT1), [4, 6, 8], Modulus(3.0))
        assert r.bracket.label == "enclosure"
        assert r.bracket.contains((1 - math.cos(3)) / 3)

    def test_bracket_rejects_inverted(self):
        with pytest.raises(ValueError):
            Bracket(1.0, 0.0, 0)


class TestIntegrateMatrix:
    def test_constant_identity(self):
        h = lambda P: np.broadcast_to(np.eye(2), (len(P), 2, 2))
        res = integrate_matrix(h, BoxSet(UNIT2), [2])
        assert [[(e.lower, e.upper) for e in row] for row in res] == [[(1, 1), (0, 0)], [(0, 0), (1, 1)]]

    def test_symmetric_linear(self):
        def h(P):
            x, y = P[:, 0], P[:, 1]
            return np.stack([np.stack([x, y], 1), np.stack([y, x], 1)], 1)

        res = integrate_matrix(h, BoxSet(UNIT2), [6])
        assert all(e.bracket.contains(0.5) for row in res for e in row)

    def test_diagonal_1d(self):
        h = lambda P: np.stack([np.stack([P[:, 0], 0 * P[:, 0]], 1), np.stack([0 * P[:, 0], P[:, 0]], 1)], 1)
        res = integrate_matrix(h, BoxSet(UNIT1), [8])
        assert res[0][0].bracket.contains(0.5) and res[1][1].bracket.contains(0.5)


def _poly(coeffs, powers):
    def f(P):
        return np.sum(coeffs[None, :] * np.prod(P[:, None, :] ** powers[None], axis=2), axis=1)

    # max-norm Lipschitz bound on [0,1]^m: sum |c| * total degree
    L = float(np.sum(np.abs(coeffs) * powers.sum(axis=1)))
    return f, L


class TestProperties:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6), m=st.integers(1, 2))
    def test_riemann_sum_inside_modulus_bracket(self, seed, m):
        rng = np.random.default_rng(seed)
        f, L = _poly(rng.normal(size=4), rng.integers(0, 4, (4, m)))
        p = uniform_grid(AxisBox([0] * m, [1] * m), int(rng.integers(1, 6))).refine(int(rng.integers(1, 3)))
        tags = p.lo + (p.hi - p.lo) * rng.random(p.lo.shape)
        lo, hi = darboux_sums(f, p, Modulus(L))
        s = riemann_sum(f, DottedPartition(p, tags))
        assert lo - 1e-12 <= s <= hi + 1e-12

    def test_riemann_within_width_plus_oscillation(self, rng):
        f, L = _poly(rng.normal(size=5), rng.integers(0, 4, (5, 2)))
        d = 4
        p = uniform_grid(UNIT2, 2**d)
        br = integral_bracket(f, BoxSet(UNIT2), [d]).bracket
        osc = oscillation_sum(f, p)
        for _ in range(20):
            tags = p.lo + (p.hi - p.lo) * rng.random(p.lo.shape)
            s = riemann_sum(f, DottedPartition(p, tags))
            assert abs(s - br.midpoint) <= br.width + osc + 1e-12
