import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lzmeasure.antiadiabatic import (
    FRESNEL_GRID,
    TABLE1_ERRATA,
    TABLE1_REFERENCE,
    dp_min_fresnel,
    first_order_objective,
    first_order_population,
    first_order_row,
    optimize_antiadiabatic,
    pattern_search,
    refine,
    table1,
    table1_deviation,
)
from lzmeasure.dp_exact import GridSpec, optimize_dp
from lzmeasure.errors import InvalidInputError
from lzmeasure.lz_core import population_matrix
from lzmeasure.objective import MeasurementSchedule, transition_probability
from oracles import ode_populations

schedules = st.lists(st.floats(-8, 8, allow_nan=False), min_size=1, max_size=6).map(sorted)


@pytest.fixture(scope="module")
def rows():
    return table1(15)


class TestFirstOrderObjective:
    def test_no_measurement(self):
        assert first_order_objective([]) == pytest.approx(1.0, abs=1e-14)

    def test_single_at_crossing(self):
        assert first_order_objective([0.0]) == pytest.approx(0.5, abs=1e-14)

    @pytest.mark.parametrize("t", [-10.0, 10.0])
    def test_crossing_beats_far(self, t):
        assert first_order_objective([0.0]) < first_order_objective([t])

    @settings(max_examples=50)
    @given(schedules)
    def test_mirror_degeneracy(self, ts):
        assert first_order_objective(ts) == pytest.approx(first_order_objective(sorted(-t for t in ts)), abs=1e-10)

    @settings(max_examples=50)
    @given(schedules)
    def test_nonnegative(self, ts):
        assert first_order_objective(ts) >= -1e-12

    @pytest.mark.xfail(strict=True, reason="one measurement at t=2 gives S=1.38: it destroys coherence that would interfere later")
    def test_at_most_one(self):
        assert first_order_objective([2.0]) <= 1 + 1e-12

    def test_off_crossing_measurement_can_hurt(self):
        # the exact objective agrees that a lone measurement at t=2 loses to none at all
        for g in (0.01, 0.001):
            p = transition_probability(MeasurementSchedule.of(g, [2.0]))
            assert p < math.exp(-2 * math.pi * g)
            assert p == pytest.approx(1 - 2 * math.pi * g * first_order_objective([2.0]), abs=50 * g * g)

    @pytest.mark.parametrize("ts", [(0.0,), (-3.31, 0.12), (-1.0, 0.5, 2.0)])
    def test_second_order_scaling(self, ts):
        def err(g):
            exact = transition_probability(MeasurementSchedule.of(g, ts))
            return abs(exact - (1 - 2 * math.pi * g * first_order_objective(ts)))

        assert 2.5 <= err(0.02) / err(0.01) <= 6


class TestFirstOrderPopulation:
    def test_zero_coupling(self):
        for t0, t1 in [(-math.inf, 1.0), (-2.0, 3.0), (0.5, math.inf), (-math.inf, math.inf)]:
            assert first_order_population(0.0, t0, t1) == pytest.approx(1.0, abs=1e-14)

    def test_full_sweep(self):
        assert first_order_population(0.03, -math.inf, math.inf) == pytest.approx(1 - 2 * math.pi * 0.03, abs=1e-14)

    def test_against_ode(self):
        assert abs(first_order_population(0.01, -2.0, 3.0) - ode_populations(0.01, -2.0, 3.0)[0, 0]) <= 5e-3

    @pytest.mark.parametrize("t0,t1", [(-math.inf, 1.3), (-0.7, math.inf), (-4.0, -1.0), (0.2, 5.0)])
    def test_second_order_residual(self, t0, t1):
        def err(g):
            return abs(first_order_population(g, t0, t1) - population_matrix(g, t0, t1)[0, 0])

        assert err(0.01) < 5e-3
        assert 2.5 <= err(0.02) / err(0.01) <= 6

    def test_empty_segment(self):
        assert first_order_population(0.2, 1.0, 1.0) == 1.0

    def test_reversed(self):
        with pytest.raises(InvalidInputError):
            first_order_population(0.1, 2.0, 1.0)


class TestDPMinFresnel:
    def test_default_grid(self):
        assert (FRESNEL_GRID.t_min, FRESNEL_GRID.t_max, FRESNEL_GRID.step) == (-10.0, 10.0, 0.01)

    def test_one(self):
        sol = dp_min_fresnel(1)
        assert sol.instants == pytest.approx((0.0,), abs=1e-9)
        assert 1 - 2 * sol.value == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("n", [2, 5])
    def test_table_rows(self, n):
        sol = dp_min_fresnel(n)
        ref_value, ref_t = TABLE1_REFERENCE[n]
        assert 1 - 2 * sol.value == pytest.approx(ref_value, abs=0.01)
        ours = np.asarray(sol.instants)
        assert min(np.max(np.abs(ours - ref_t)), np.max(np.abs(np.sort(-ours) - ref_t))) <= 0.05

    def test_value_matches_objective(self):
        sol = dp_min_fresnel(4)
        assert sol.value == pytest.approx(first_order_objective(sol.instants), abs=1e-12)

    def test_brute_force_on_coarse_grid(self):
        grid = GridSpec(-5.0, 5.0, 0.5)
        pts = grid.points()
        best = min(first_order_objective([a, b]) for i, a in enumerate(pts) for b in pts[i:])
        assert dp_min_fresnel(2, grid).value == pytest.approx(best, abs=1e-12)

    def test_bad_n(self):
        with pytest.raises(InvalidInputError):
            dp_min_fresnel(0)


class TestRefine:
    def test_table_seed_does_not_get_worse(self):
        for n in (3, 7, 12):
            r = refine(TABLE1_REFERENCE[n][1], "first_order")
            assert r.value <= r.initial_value
            assert list(r.instants) == sorted(r.instants)

    def test_single_converges_to_zero(self):
        r = refine([0.3], "first_order")
        assert abs(r.instants[0]) <= 0.01
        assert r.converged

    def test_exact_needs_gamma(self):
        with pytest.raises(InvalidInputError):
            refine([0.0], "exact")

    def test_unknown_kind(self):
        with pytest.raises(InvalidInputError):
            refine([0.0], "second_order")

    def test_exact_empty(self):
        r = refine([], "exact", 0.2)
        assert r.value == pytest.approx(math.exp(-0.4 * math.pi), abs=1e-4)

    def test_pattern_search_quadratic(self):
        x, fx, f0, ok, _ = pattern_search(lambda v: float(np.sum((v - [1.0, 2.0]) ** 2)), [0.0, 0.0])
        assert ok and fx < 1e-7 and f0 == 5.0
        assert x == pytest.approx([1.0, 2.0], abs=1e-3)

    def test_pattern_search_keeps_order(self):
        # the unconstrained optimum is out of order, so the search must clamp
        x, *_ = pattern_search(lambda v: float((v[0] - 2) ** 2 + (v[1] + 2) ** 2), [0.0, 0.5])
        assert x[0] <= x[1]

    def test_pattern_search_iteration_cap(self):
        *_, ok, _ = pattern_search(lambda v: float(v[0] ** 2), [5.0], max_sweeps=3)
        assert not ok

    def test_two_stage_matches_dp(self):
        polished = optimize_antiadiabatic(0.3, 5)
        dp = optimize_dp(0.3, 5, GridSpec(-20.0, 20.0, 0.01))
        assert abs(polished.probability - dp.probability) <= 0.01
        assert polished.diagnostics["refine_delta"] >= 0


class TestTable1:
    def test_row_three(self, rows):
        dv, dt = table1_deviation(rows[2])
        assert abs(dv) <= 0.01 and dt <= 0.05
        assert rows[2].reported_value == pytest.approx(0.360, abs=0.01)

    def test_row_twelve_is_symmetric(self, rows):
        assert rows[11].symmetric
        assert 12 in TABLE1_ERRATA

    def test_row_thirteen_breaks_symmetry(self, rows):
        assert not rows[12].symmetric
        assert max(abs(t) for t in rows[12].instants) == pytest.approx(7.08, abs=0.05)

    def test_strictly_decreasing(self, rows):
        f = [r.f_value for r in rows]
        assert all(b < a for a, b in zip(f, f[1:]))

    def test_sorted_and_in_range(self, rows):
        for r in rows:
            assert list(r.instants) == sorted(r.instants)
            assert 0 <= r.f_value <= 1

    @pytest.mark.parametrize("bad", [0, 16])
    def test_range(self, bad):
        with pytest.raises(InvalidInputError):
            table1(bad)

    def test_gamma_independent(self):
        a = optimize_antiadiabatic(0.05, 4).diagnostics["first_order_value"]
        b = optimize_antiadiabatic(0.4, 4).diagnostics["first_order_value"]
        assert a == b == first_order_row(4).f_value

    def test_zero_measurements(self):
        r = optimize_antiadiabatic(0.2, 0)
        assert r.instants == ()
        assert r.probability == pytest.approx(math.exp(-0.4 * math.pi), abs=1e-4)
