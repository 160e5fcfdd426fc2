import itertools
import math

import numpy as np
import pytest

from fairprice.dist import Exponential, MarketSlice
from fairprice.errors import UnsupportedConfiguration, ValidationError
from fairprice.matching import optimal_support_distance
from fairprice.oracle import (
    AssignmentInstance,
    discretize,
    instance_to_csv_rows,
    oracle_gap,
    oracle_gap_tilde,
    solve_assignment,
    tilde_pair_profit,
    tilde_transport_value,
)


def brute_force_value(cost):
    n = cost.shape[0]
    best = -math.inf
    for perm in itertools.permutations(range(n)):
        best = max(best, sum(cost[i, perm[i]] for i in range(n)) / n)
    return best


class TestDiscretize:
    def test_exponential_atoms_closed_form(self, exp13):
        inst = discretize(exp13, 10)
        want = -np.log(1.0 - (np.arange(10) + 0.5) / 10.0)
        assert np.allclose(inst.v_l_atoms, want, atol=1e-12)

    def test_atom_count_bounds(self, exp13):
        with pytest.raises(ValidationError):
            discretize(exp13, 9)
        with pytest.raises(ValidationError):
            discretize(exp13, 5001)

    def test_cost_matrix_monotone_in_own_value(self, exp13):
        inst = discretize(exp13, 50)
        # selling to the high group alone grows with its value
        assert np.all(np.diff(inst.cost_matrix, axis=1) >= -1e-12)

    def test_unknown_objective(self, exp13):
        with pytest.raises(ValidationError):
            discretize(exp13, 50, objective="quadratic")


class TestSolveAssignment:
    def test_two_by_two_identity(self):
        inst = AssignmentInstance(
            v_l_atoms=np.array([0.0, 1.0]), v_h_atoms=np.array([0.0, 1.0]),
            cost_matrix=np.array([[1.0, 0.0], [0.0, 1.0]]))
        perm, value = solve_assignment(inst)
        assert list(perm) == [0, 1]
        assert value == pytest.approx(1.0)

    def test_matches_enumeration_on_small_instances(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            cost = rng.uniform(0, 1, size=(3, 3))
            inst = AssignmentInstance(
                v_l_atoms=np.array([0.0, 1.0, 2.0]), v_h_atoms=np.array([0.0, 1.0, 2.0]),
                cost_matrix=cost)
            _, value = solve_assignment(inst)
            assert value == pytest.approx(brute_force_value(cost), abs=1e-12)

    def test_supermodular_cost_sorts_assortatively(self):
        """Sell-to-both profit is supermodular, so the sorted matching is
        optimal; checked against full enumeration at n = 7."""
        rng = np.random.default_rng(23)
        vl = np.sort(rng.uniform(0.0, 3.0, 7))
        vh = np.sort(rng.uniform(0.0, 3.0, 7))
        c = 0.4
        cost = np.maximum(np.minimum(vl[:, None], vh[None, :]) - c, 0.0)
        inst = AssignmentInstance(v_l_atoms=vl, v_h_atoms=vh, cost_matrix=cost)
        _, value = solve_assignment(inst)
        sorted_value = float(np.mean(np.maximum(np.minimum(vl, vh) - c, 0.0)))
        assert value == pytest.approx(brute_force_value(cost), abs=1e-12)
        assert value == pytest.approx(sorted_value, abs=1e-12)

    def test_identical_marginals_reach_full_gains(self):
        s = MarketSlice(c=0.0, alpha=0.5, f_l=Exponential(1.0), f_h=Exponential(1.0))
        inst = discretize(s, 200)
        _, value = solve_assignment(inst)
        assert value == pytest.approx(float(np.mean(inst.v_l_atoms)), abs=1e-12)

    def test_deterministic(self, exp13):
        inst = discretize(exp13, 100)
        p1, v1 = solve_assignment(inst)
        p2, v2 = solve_assignment(inst)
        assert np.array_equal(p1, p2) and v1 == v2


class TestOracleGap:
    def test_c1_gap_small_and_shrinking(self, exp13):
        gaps = {n: oracle_gap(exp13, n) for n in (200, 400, 800)}
        assert gaps[400] <= 0.01
        assert gaps[800] <= gaps[200] * 1.1

    @pytest.mark.parametrize("fixture", ["c2_slice", "c3_slice"])
    def test_full_extraction_regions(self, fixture, request):
        s = request.getfixturevalue(fixture)
        assert oracle_gap(s, 400) <= 0.01

    def test_assigned_pairs_near_optimal_support(self, exp13):
        for n in (100, 400):
            inst = discretize(exp13, n)
            perm, _ = solve_assignment(inst)
            d = np.asarray(optimal_support_distance(
                exp13, inst.v_l_atoms, inst.v_h_atoms[perm]))
            spread = exp13.cap() - exp13.support_lo
            assert np.mean(d <= 3.0 * spread / n) >= 0.95


class TestTildeObjective:
    def test_pair_profit_values(self):
        assert tilde_pair_profit(0.0, 4.0) == pytest.approx(1.0)
        assert tilde_pair_profit(3.0, 3.0) == pytest.approx(1.5)
        assert tilde_pair_profit(2.0, 6.0) == pytest.approx(max(0.5, 1.5, 1.5))

    def test_gap_small_at_four_hundred(self, exp13):
        assert oracle_gap_tilde(exp13, 400) <= 0.01

    def test_gap_decreasing(self, exp13):
        assert oracle_gap_tilde(exp13, 800) <= oracle_gap_tilde(exp13, 200) * 1.1

    def test_transport_value_bounded_by_perfect_discrimination(self, exp13):
        # upper bound: learn each consumer's signal perfectly
        value = tilde_transport_value(exp13)
        upper = 0.5 * (exp13.f_l.mean() / 4 + exp13.f_h.mean() / 4) * 2
        assert 0 < value <= upper

    def test_unsupported_configuration(self):
        s = MarketSlice(c=0.5, alpha=0.5, f_l=Exponential(1.0), f_h=Exponential(3.0))
        with pytest.raises(UnsupportedConfiguration):
            oracle_gap_tilde(s, 200)


class TestDebugDump:
    def test_csv_rows_cover_matrix(self, exp13):
        inst = discretize(exp13, 10)
        perm, _ = solve_assignment(inst)
        rows = list(instance_to_csv_rows(inst, perm))
        assert len(rows) == 100
        assert sum(r[-1] for r in rows) == 10
