import itertools
import math
from fractions import Fraction

import pytest

from dexchange.gf import FieldSpec
from dexchange.model import CutSetOracle, generate_instance, in_cut_set_region, instance_from_packet_sets
from dexchange.ratealloc import (
    FairCost,
    Infeasible,
    LinearCost,
    SubgradientConfig,
    TableCost,
    cheapest_increment,
    convex_alloc,
    dual_maximizer,
    eval_h,
    increment_headroom,
    min_cost,
    min_sum_rate,
    modified_edmonds,
    restriction_value,
    subgrad_coordinate,
    subgradient_minimizer,
    transmit_set,
)
from dexchange.sfm import GroundSet, min_pinned
from dexchange.validate import brute_eval_h, brute_min_cost


# ---------------------------------------------------------------------------
# Cost functions


def test_linear_cost_requires_positive_weights():
    with pytest.raises(ValueError):
        LinearCost((1, 0, 2))


def test_fair_cost_values():
    c = FairCost()
    assert c.value(0, 0) == 0.0
    assert c.value(0, 1) == 0.0
    assert c.value(0, 2) == pytest.approx(2 * math.log(2))
    # increments grow with the rate
    assert c.deriv(0, 1) < c.deriv(0, 2) < c.deriv(0, 3)


def test_table_cost_validation_and_tail():
    with pytest.raises(ValueError):
        TableCost([(2, 1)])  # decreasing
    with pytest.raises(ValueError):
        TableCost([(-1,)])
    c = TableCost([(1, 3)])
    assert c.value(0, 1) == 1
    assert c.value(0, 2) == 4
    assert c.value(0, 4) == 10  # constant tail of 3 past the table
    assert c.deriv(0, 4) == 3


def test_cheapest_increment_tie_by_index():
    c = FairCost()
    assert cheapest_increment(c, [0, 0, 0], [1, 2]) == 1
    assert cheapest_increment(c, [1, 0, 1], [0, 1, 2]) == 1


# ---------------------------------------------------------------------------
# Greedy allocation


def test_greedy_reference_vectors(demo_oracle):
    assert modified_edmonds(demo_oracle, 5, (1, 3, 2)).rates == (1, 1, 3)
    assert modified_edmonds(demo_oracle, 5, (2, 1, 3)).rates == (1, 3, 1)


def test_greedy_with_caps(demo_oracle):
    alloc = modified_edmonds(demo_oracle, 5, (1, 3, 2), caps=(2, 2, 2))
    assert alloc.rates == (1, 2, 2)


def test_greedy_weight_ties_resolve_by_index(demo_oracle):
    assert modified_edmonds(demo_oracle, 5, (1, 1, 1)).rates == (1, 3, 1)


def test_greedy_infeasible_budget_reports_shortfall(demo_oracle):
    with pytest.raises(Infeasible) as err:
        modified_edmonds(demo_oracle, 4, (1, 3, 2))
    assert err.value.achieved_sum == 3
    assert err.value.beta == 4


def test_greedy_output_lies_in_the_region(demo_oracle):
    for weights in itertools.permutations((1, 2, 3)):
        alloc = modified_edmonds(demo_oracle, 5, weights)
        assert alloc.total == 5
        assert in_cut_set_region(demo_oracle, alloc.rates)


def test_greedy_cost_matches_exhaustive_minimum():
    for seed in range(6):
        inst = generate_instance("coded", 3, 4, FieldSpec(5), seed=seed)
        oracle = CutSetOracle(inst)
        beta = min_sum_rate(oracle)
        weights = (2, 1, 3)
        alloc = modified_edmonds(oracle, beta, weights)
        got = sum(w * r for w, r in zip(weights, alloc.rates))
        want = brute_eval_h(oracle, LinearCost(weights), beta)[0]
        assert got == want


def test_greedy_validates_arguments(demo_oracle):
    with pytest.raises(ValueError):
        modified_edmonds(demo_oracle, -1, (1, 1, 1))
    with pytest.raises(ValueError):
        modified_edmonds(demo_oracle, 5, (1, 1))
    with pytest.raises(ValueError):
        modified_edmonds(demo_oracle, 5, (1, 1, 1), caps=(1, -1, 0))


# ---------------------------------------------------------------------------
# Minimum sum-rate


def test_min_sum_rate_reference(demo_oracle):
    assert min_sum_rate(demo_oracle) == 5


def test_min_sum_rate_single_full_rank_user():
    inst = generate_instance("coded", 1, 3, FieldSpec(257), coverage=(3,), seed=0)
    assert min_sum_rate(CutSetOracle(inst)) == 0


def test_min_sum_rate_two_disjoint_users():
    inst = instance_from_packet_sets(FieldSpec(5), 2, [(0,), (1,)])
    assert min_sum_rate(CutSetOracle(inst)) == 2


def test_min_sum_rate_with_caps(demo_oracle):
    assert min_sum_rate(demo_oracle, caps=(2, 2, 2)) == 5
    with pytest.raises(Infeasible):
        min_sum_rate(demo_oracle, caps=(1, 1, 1))


# ---------------------------------------------------------------------------
# Incremental convex allocation


def test_fair_allocation_trace(demo_oracle):
    alloc = convex_alloc(demo_oracle, 5, FairCost())
    assert alloc.rates == (1, 2, 2)
    assert alloc.tsets == ((0, 1, 2), (1, 2), (1, 2), (1, 2), (1, 2))


def test_convex_alloc_linear_cost_matches_greedy_value(demo_oracle):
    cost = LinearCost((1, 3, 2))
    alloc = convex_alloc(demo_oracle, 5, cost)
    value = sum(cost.value(i, r) for i, r in enumerate(alloc.rates))
    assert value == 10  # same optimum the greedy path reaches


def test_convex_alloc_infeasible_budget(demo_oracle):
    with pytest.raises(Infeasible) as err:
        convex_alloc(demo_oracle, 4, FairCost())
    assert err.value.rounds_completed == 3


def test_convex_alloc_budget_zero(demo_oracle):
    with pytest.raises(Infeasible):
        convex_alloc(demo_oracle, 0, FairCost())
    solo = generate_instance("coded", 1, 2, FieldSpec(257), coverage=(2,), seed=1)
    assert convex_alloc(CutSetOracle(solo), 0, FairCost()).rates == (0,)


def test_convex_alloc_respects_caps(demo_oracle):
    alloc = convex_alloc(demo_oracle, 5, LinearCost((1, 3, 2)), caps=(2, 2, 2))
    assert alloc.rates == (1, 2, 2)
    assert max(alloc.rates) <= 2


def test_convex_alloc_optimal_against_enumeration():
    for seed in (0, 1, 2):
        inst = generate_instance("raw", 3, 5, FieldSpec(257), coverage=(3, 3, 3), seed=seed)
        oracle = CutSetOracle(inst)
        beta = min_sum_rate(oracle) + 1
        for cost in (FairCost(), TableCost([(0, 1, 2, 5, 5)] * 3)):
            alloc = convex_alloc(oracle, beta, cost)
            value = sum(cost.value(i, r) for i, r in enumerate(alloc.rates))
            want = brute_eval_h(oracle, cost, beta)
            assert want is not None
            assert value == pytest.approx(want[0], abs=1e-9)


def test_transmit_set_shrinks_as_rates_grow(demo_oracle):
    assert transmit_set(demo_oracle, 5, [0, 0, 0]) == [0, 1, 2]
    assert transmit_set(demo_oracle, 5, [1, 0, 0]) == [1, 2]
    assert increment_headroom(demo_oracle, 5, [1, 0, 0], 0) == 0


# ---------------------------------------------------------------------------
# Budget search


def test_eval_h_reference_values(demo_oracle):
    value, alloc = eval_h(demo_oracle, 5, LinearCost((1, 3, 2)))
    assert (value, alloc.rates) == (10, (1, 1, 3))
    value, alloc = eval_h(demo_oracle, 5, LinearCost((2, 1, 3)))
    assert (value, alloc.rates) == (8, (1, 3, 1))
    with pytest.raises(Infeasible):
        eval_h(demo_oracle, 4, FairCost())


def test_min_cost_unit_weights(demo_oracle):
    got = min_cost(demo_oracle, LinearCost((1, 1, 1)))
    assert (got.beta, got.value) == (5, 5)


def test_min_cost_fair(demo_oracle):
    got = min_cost(demo_oracle, FairCost())
    assert got.beta == 5
    assert got.allocation.rates == (1, 2, 2)
    # hand check: the optimum one budget higher is strictly worse
    assert eval_h(demo_oracle, 6, FairCost())[0] > got.value


def test_min_cost_single_user_zero_budget():
    inst = generate_instance("coded", 1, 3, FieldSpec(257), coverage=(3,), seed=0)
    got = min_cost(CutSetOracle(inst), FairCost())
    assert (got.beta, got.value) == (0, 0.0)


def test_min_cost_never_exceeds_packet_count():
    for seed in range(8):
        inst = generate_instance("coded", 4, 5, FieldSpec(5), seed=seed)
        oracle = CutSetOracle(inst)
        got = min_cost(oracle, FairCost())
        assert got.beta <= inst.n_packets


def test_min_cost_matches_enumeration_with_caps(demo_oracle):
    caps = (2, 2, 2)
    got = min_cost(demo_oracle, LinearCost((1, 3, 2)), caps=caps)
    want = brute_min_cost(demo_oracle, LinearCost((1, 3, 2)), caps=caps)
    assert (got.beta, got.value) == want
    with pytest.raises(Infeasible):
        min_cost(demo_oracle, FairCost(), caps=(1, 1, 1))


def test_h_is_convex_on_feasible_budgets(demo_oracle):
    for cost in (LinearCost((1, 3, 2)), FairCost()):
        values = [eval_h(demo_oracle, b, cost)[0] for b in range(5, 7)]
        assert values[1] >= values[0] - 1e-12


# ---------------------------------------------------------------------------
# Dual subgradient backend


def test_subgradient_config_defaults():
    cfg = SubgradientConfig.default(3, 6)
    assert cfg.step == Fraction(1, 144)
    assert cfg.iterations == 8 * 36 * 9 + 1
    cfg.check(3, 6)


def test_subgradient_config_validation():
    with pytest.raises(ValueError):
        SubgradientConfig(Fraction(1, 2), 10_000).check(3, 6)  # step too large
    with pytest.raises(ValueError):
        SubgradientConfig(Fraction(1, 144), 100).check(3, 6)  # too few iterations
    with pytest.raises(ValueError):
        SubgradientConfig(Fraction(1, 144), 3000, tolerance=0.7).check(3, 6)


def test_subgradient_worked_coordinates(demo_oracle):
    cfg = SubgradientConfig.default(3, 6)
    assert subgrad_coordinate(demo_oracle, 5, (0, 0, 0), GroundSet(0, 0), cfg) == 1
    assert subgrad_coordinate(demo_oracle, 5, (1, 0, 0), GroundSet(0b001, 2), cfg) == 3
    assert subgrad_coordinate(demo_oracle, 5, (1, 0, 3), GroundSet(0b101, 1), cfg) == 1


def test_subgradient_agrees_with_enumeration_everywhere(demo_oracle):
    cfg = SubgradientConfig.default(3, 6)
    for beta in range(0, 7):
        rates = [0, 0, 0]
        prefix = 0
        for i in range(3):
            ground = GroundSet(prefix, i)
            exact = min_pinned(demo_oracle, beta, rates, ground)[0]
            assert subgrad_coordinate(demo_oracle, beta, rates, ground, cfg) == exact
            rates[i] = exact
            prefix |= 1 << i


def test_subgradient_backend_drives_full_solvers(demo_oracle):
    minimizer = subgradient_minimizer()
    assert min_sum_rate(demo_oracle, minimizer=minimizer) == 5
    assert modified_edmonds(demo_oracle, 5, (1, 3, 2), minimizer=minimizer).rates == (1, 1, 3)
    alloc = convex_alloc(demo_oracle, 5, FairCost(), minimizer=minimizer)
    assert alloc.rates == (1, 2, 2)


# ---------------------------------------------------------------------------
# Dual maximizer


def test_dual_maximizer_zero_multipliers(demo_oracle):
    # All multipliers at zero: the pinned coordinate saturates first.
    got = dual_maximizer(demo_oracle, 5, 1, {0: 0, 2: 0})
    assert got[1] == demo_oracle.cut_set_f(5, 0b010) == 3
    assert sum(got.values()) == 5


def test_dual_maximizer_large_multiplier_pins_to_zero(demo_oracle):
    got = dual_maximizer(demo_oracle, 5, 1, {0: 2, 2: 0})
    assert got[1] == 0


def test_dual_maximizer_empty_prefix(demo_oracle):
    assert dual_maximizer(demo_oracle, 5, 0, {}) == {0: 1}


def _vertex_objective_max(oracle, beta, pinned, lam):
    """Best objective over all greedy vertices of the pinned region."""
    users = sorted(lam) + [pinned]
    pin_bit = 1 << pinned
    best = None
    for order in itertools.permutations(users):
        mask = 0
        acc = 0
        vec = {}
        for u in order:
            mask |= 1 << u
            y = oracle.cut_set_f(beta, mask | pin_bit)
            vec[u] = y - acc
            acc = y
        obj = vec[pinned] + sum(lam[k] * vec[k] for k in lam)
        if best is None or obj > best:
            best = obj
    return best


@pytest.mark.parametrize(
    "lam",
    [
        {0: 0, 2: 0},
        {0: 2, 2: 0},
        {0: Fraction(1, 2), 2: Fraction(3, 2)},
        {0: 1, 2: 1},
    ],
)
def test_dual_maximizer_attains_vertex_maximum(demo_oracle, lam):
    for beta in (3, 5, 6):
        got = dual_maximizer(demo_oracle, beta, 1, lam)
        obj = got[1] + sum(lam[k] * got[k] for k in lam)
        assert obj == _vertex_objective_max(demo_oracle, beta, 1, lam)


def test_dual_maximizer_vertex_maximum_on_random_instances():
    for seed in range(4):
        inst = generate_instance("coded", 4, 5, FieldSpec(5), seed=seed)
        oracle = CutSetOracle(inst)
        for lam in ({0: 0, 1: 0, 3: 0}, {0: 3, 1: Fraction(1, 3), 3: 1}):
            for beta in (2, 4, 5):
                got = dual_maximizer(oracle, beta, 2, lam)
                obj = got[2] + sum(lam[k] * got[k] for k in lam)
                assert obj == _vertex_objective_max(oracle, beta, 2, lam)


# ---------------------------------------------------------------------------
# Capacity restriction oracle


def test_restriction_reference_value(demo_oracle):
    assert restriction_value(demo_oracle, 5, (2, 2, 2), 0b111) == 5


def test_restriction_with_loose_caps_equals_partition_value(demo_oracle):
    from dexchange.model import dilworth_value

    caps = (6, 6, 6)
    for s in range(8):
        assert restriction_value(demo_oracle, 5, caps, s) == dilworth_value(
            demo_oracle, 5, s
        )


def test_restriction_empty_subset(demo_oracle):
    assert restriction_value(demo_oracle, 5, (2, 2, 2), 0) == 0
