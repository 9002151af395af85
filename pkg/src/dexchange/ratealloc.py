"""Deterministic rate-allocation solvers over the cut-set polyhedron.

Given a total budget ``beta``, the feasible allocations form the base
polytope of the budgeted cut-set function.  The solvers here walk that
polytope:

* :func:`modified_edmonds` greedily saturates one coordinate at a time in
  cost order (optimal for linear costs), detecting infeasible budgets as a
  shortfall in the achieved sum.
* :func:`convex_alloc` grows the allocation one unit per round, always
  giving the unit to the cheapest user whose increment stays inside the
  polytope (optimal for any separable convex non-decreasing cost).
* :func:`min_sum_rate` and :func:`min_cost` search the budget axis, using
  the convexity of the per-budget optimum.

The shared coordinate step ("how far can this user's rate grow") is a small
submodular minimization.  Two interchangeable engines provide it: exact
enumeration (:func:`sfm_minimizer`, the default) and a dual subgradient loop
(:func:`subgradient_minimizer`) whose constant rational step keeps every
iterate an exact integer multiple of the step, making it bit-reproducible.

Per-user capacity caps plug into both solvers: capping the greedy coordinate
values (or filtering increment candidates) optimizes over the restriction of
the budgeted polytope, whose base polytope is exactly the capped original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .model import CutSetOracle, dilworth_value, members
from .sfm import GroundSet, min_pinned

#: Discrete-derivative comparisons closer than this are treated as ties and
#: resolved by user index.  Only the fairness cost produces irrational
#: derivatives; its gaps in any realistic instance are far larger.
D_TIE = 1e-12


class Infeasible(Exception):
    """A sum-rate budget (with or without caps) admits no allocation.

    Carries progress metadata: ``beta`` is the requested budget,
    ``achieved_sum`` the best reachable total (greedy path), and
    ``rounds_completed`` how many unit increments succeeded (incremental
    path).
    """

    def __init__(self, message, *, beta=None, achieved_sum=None, rounds_completed=None):
        super().__init__(message)
        self.beta = beta
        self.achieved_sum = achieved_sum
        self.rounds_completed = rounds_completed


# ---------------------------------------------------------------------------
# Cost functions


class LinearCost:
    """Weighted sum of rates; weights must be positive (non-decreasing cost)."""

    kind = "linear"

    def __init__(self, weights):
        self.weights = tuple(weights)
        if not self.weights or any(w <= 0 for w in self.weights):
            raise ValueError("linear cost weights must be positive")

    def value(self, user: int, r: int):
        return self.weights[user] * r

    def deriv(self, user: int, r: int):
        return self.weights[user]


class FairCost:
    """Load-balancing cost ``r * log r`` (0 at r = 0).

    Its increments grow strictly with r, so the cheapest increment always
    goes to a least-loaded user, spreading transmissions as evenly as the
    polytope allows.
    """

    kind = "fair"

    def value(self, user: int, r: int):
        return r * math.log(r) if r > 0 else 0.0

    def deriv(self, user: int, r: int):
        return self.value(user, r) - self.value(user, r - 1)


class TableCost:
    """Separable convex cost given by per-user increment tables.

    ``derivs[i][k]`` is the cost of user i's (k+1)-th transmitted symbol;
    each table must be non-negative and non-decreasing (convexity plus
    monotonicity).  Past the end of a table the last increment repeats, so
    any prefix long enough for the budgets actually probed is sufficient.
    """

    kind = "table"

    def __init__(self, derivs):
        self.derivs = tuple(tuple(d) for d in derivs)
        if not self.derivs:
            raise ValueError("at least one derivative table required")
        for i, d in enumerate(self.derivs):
            if not d:
                raise ValueError(f"user {i}: empty derivative table")
            if any(v < 0 for v in d):
                raise ValueError(f"user {i}: negative increment")
            if any(b < a for a, b in zip(d, d[1:])):
                raise ValueError(f"user {i}: increments must be non-decreasing")

    def deriv(self, user: int, r: int):
        d = self.derivs[user]
        return d[min(r, len(d)) - 1]

    def value(self, user: int, r: int):
        d = self.derivs[user]
        head = sum(d[: min(r, len(d))])
        extra = max(0, r - len(d))
        return head + extra * d[-1]


def cheapest_increment(cost, rates, candidates) -> int:
    """Candidate with the smallest next-unit cost; near-ties by user index."""
    best = None
    best_d = None
    for i in candidates:
        d = cost.deriv(i, rates[i] + 1)
        if best is None or d < best_d - D_TIE:
            best, best_d = i, d
    if best is None:
        raise ValueError("no candidates")
    return best


# ---------------------------------------------------------------------------
# Coordinate-minimization backends


def sfm_minimizer(oracle, beta, rates, ground: GroundSet) -> int:
    """Exact coordinate step via exhaustive subset enumeration."""
    return min_pinned(oracle, beta, rates, ground)[0]


@dataclass(frozen=True)
class SubgradientConfig:
    """Constant-step dual subgradient parameters.

    ``step`` must stay below 1/(2 N^2) and ``iterations`` above
    m^2 / (step * (1 - 2 N^2 step)); together they force the best dual value
    within ``tolerance`` < 1/2 of the integer optimum, so rounding is exact.
    """

    step: Fraction
    iterations: int
    tolerance: float = 0.49

    @classmethod
    def default(cls, m: int, n_packets: int) -> "SubgradientConfig":
        # step = 1/(4 N^2) sits strictly inside the stability bound and
        # makes the iteration requirement exactly 8 N^2 m^2.
        return cls(step=Fraction(1, 4 * n_packets * n_packets), iterations=8 * n_packets**2 * m**2 + 1)

    def check(self, m: int, n_packets: int) -> None:
        theta = Fraction(self.step)
        if not 0 < theta < Fraction(1, 2 * n_packets * n_packets):
            raise ValueError(f"step {theta} outside (0, 1/(2N^2)) for N={n_packets}")
        if not 0 < self.tolerance < 0.5:
            raise ValueError("tolerance must lie in (0, 0.5)")
        bound = Fraction(m * m) / (theta * (1 - 2 * n_packets * n_packets * theta))
        if self.iterations <= bound:
            raise ValueError(f"iteration cap {self.iterations} must exceed {bound}")


def dual_maximizer(oracle, beta, pinned: int, lam: dict) -> dict[int, int]:
    """Greedy maximizer of ``R_pinned + sum(lam[k] * R_k)`` over the pinned
    rate region.

    Elements are saturated in non-increasing multiplier order (ties by user
    index); the pinned coordinate enters with weight 1, so it is saturated
    first exactly when every multiplier is at most 1 and otherwise pinned to
    zero.  Returns the maximizing rates for ``pinned`` and every key of
    ``lam``.
    """
    order = sorted(lam, key=lambda k: (-lam[k], k))
    pin_bit = 1 << pinned
    out: dict[int, int] = {}
    if order and lam[order[0]] > 1:
        out[pinned] = 0
    else:
        out[pinned] = oracle.cut_set_f(beta, pin_bit)
    acc = out[pinned]
    mask = pin_bit
    for k in order:
        mask |= 1 << k
        v = oracle.cut_set_f(beta, mask) - acc
        out[k] = v
        acc += v
    return out


def subgrad_coordinate(
    oracle, beta, rates, ground: GroundSet, config: SubgradientConfig | None = None
) -> int:
    """Coordinate step via projected dual subgradient descent.

    Solves the same minimization as :func:`sfm.min_pinned` (value only) by
    relaxing the "already-fixed rates" equalities with multipliers, walking
    them with a constant rational step from zero, and rounding the best dual
    value seen.  All arithmetic is exact: with a constant step and integer
    subgradients every multiplier is an integer number of steps, so the dual
    values are compared as scaled integers and the final rounding cannot
    drift.  The iteration budget from the config guarantees the rounded
    value is the exact optimum whenever the budget is a feasible sum-rate.
    """
    inst = oracle.instance
    cfg = config or SubgradientConfig.default(inst.m, inst.n_packets)
    cfg.check(inst.m, inst.n_packets)
    pin_bit = 1 << ground.pinned
    prefix = members(ground.free)
    if not prefix:
        return oracle.cut_set_f(beta, pin_bit)
    num = cfg.step.numerator
    den = cfg.step.denominator
    units = {k: 0 for k in prefix}  # multiplier of user k, in steps
    best_scaled = None  # best dual value seen, times den (exact int)
    for j in range(cfg.iterations + 1):
        order = sorted(prefix, key=lambda k: (-units[k], k))
        if units[order[0]] * num > den:  # top multiplier exceeds 1
            r_pin = 0
        else:
            r_pin = oracle.cut_set_f(beta, pin_bit)
        acc = r_pin
        mask = pin_bit
        grad = {}
        weighted = 0  # sum of units_k * (maximizer_k - rates_k)
        for k in order:
            mask |= 1 << k
            v = oracle.cut_set_f(beta, mask) - acc
            acc += v
            grad[k] = v - rates[k]
            weighted += units[k] * grad[k]
        scaled = r_pin * den + num * weighted
        if best_scaled is None or scaled < best_scaled:
            best_scaled = scaled
        if j < cfg.iterations:
            for k in prefix:
                units[k] = max(0, units[k] - grad[k])
    # round(best/den) with the guarantee |best/den - optimum| < 1/2
    return (2 * best_scaled + den) // (2 * den)


def subgradient_minimizer(config: SubgradientConfig | None = None):
    """Backend selector: a coordinate minimizer driven by the dual loop."""

    def minimize(oracle, beta, rates, ground):
        return subgrad_coordinate(oracle, beta, rates, ground, config)

    return minimize


# ---------------------------------------------------------------------------
# Solvers


@dataclass(frozen=True)
class Allocation:
    """A rate vector together with the budget that produced it.

    ``tsets`` is the per-round eligible-user trace of the incremental
    solvers (None on the greedy path).
    """

    rates: tuple[int, ...]
    beta: int
    tsets: tuple[tuple[int, ...], ...] | None = None

    @property
    def total(self) -> int:
        return sum(self.rates)


def _check_caps(caps, m):
    if caps is None:
        return None
    caps = tuple(int(c) for c in caps)
    if len(caps) != m:
        raise ValueError(f"capacity vector of length {m} required")
    if any(c < 0 for c in caps):
        raise ValueError("capacities must be non-negative")
    return caps


def modified_edmonds(oracle, beta, weights, caps=None, minimizer=sfm_minimizer) -> Allocation:
    """Greedy saturation in non-decreasing weight order (ties by index).

    Each user's rate is set to the largest value keeping the prefix inside
    the budgeted polytope, clipped to its cap.  If the final total matches
    ``beta`` the vector is an optimal allocation for the linear cost; a
    shortfall proves the budget infeasible and raises :class:`Infeasible`
    with the achieved total.
    """
    inst = oracle.instance
    m = inst.m
    if beta < 0:
        raise ValueError("budget must be non-negative")
    weights = tuple(weights)
    if len(weights) != m:
        raise ValueError(f"weight vector of length {m} required")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    caps = _check_caps(caps, m)
    order = sorted(range(m), key=lambda i: (weights[i], i))
    rates = [0] * m
    prefix = 0
    for i in order:
        val = minimizer(oracle, beta, rates, GroundSet(prefix, i))
        if caps is not None:
            val = min(val, caps[i])
        rates[i] = val
        prefix |= 1 << i
    total = sum(rates)
    if total != beta:
        raise Infeasible(
            f"budget {beta} is not reachable; allocation tops out at {total}",
            beta=beta,
            achieved_sum=total,
        )
    return Allocation(tuple(rates), beta)


def min_sum_rate(oracle, caps=None, minimizer=sfm_minimizer) -> int:
    """Smallest feasible total budget, by bisection on feasibility.

    Feasibility of a budget is monotone, and the packet count N is always
    feasible without caps; with caps the search tops out at min(N, total
    capacity) and raises :class:`Infeasible` when even that budget fails.
    """
    inst = oracle.instance
    caps = _check_caps(caps, inst.m)
    unit = (1,) * inst.m

    def feasible(b: int) -> bool:
        try:
            modified_edmonds(oracle, b, unit, caps, minimizer)
            return True
        except Infeasible:
            return False

    if feasible(0):
        return 0
    hi = inst.n_packets if caps is None else min(inst.n_packets, sum(caps))
    if caps is not None and (hi == 0 or not feasible(hi)):
        raise Infeasible(
            f"no budget up to {hi} is reachable under the given caps", beta=hi
        )
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi + 1) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def increment_headroom(oracle, beta, rates, user, minimizer=sfm_minimizer) -> int:
    """How much ``user``'s rate may still grow with all rates held fixed."""
    free = oracle.instance.full_mask & ~(1 << user)
    return minimizer(oracle, beta, rates, GroundSet(free, user)) - rates[user]


def transmit_set(oracle, beta, rates, minimizer=sfm_minimizer) -> list[int]:
    """Users whose rate may grow by one unit without leaving the polytope."""
    return [
        i
        for i in range(oracle.instance.m)
        if increment_headroom(oracle, beta, rates, i, minimizer) >= 1
    ]


def convex_alloc(oracle, beta, cost, caps=None, minimizer=sfm_minimizer) -> Allocation:
    """Incremental allocator for separable convex non-decreasing costs.

    Runs ``beta`` rounds from the zero vector; each round computes the set
    of users whose unit increment stays inside the budgeted polytope and
    under their cap, then increments the one with the smallest discrete
    derivative (near-ties by index).  An empty eligible set proves the
    budget (or the caps) infeasible; the raised :class:`Infeasible` carries
    the number of completed rounds.
    """
    inst = oracle.instance
    m = inst.m
    if beta < 0:
        raise ValueError("budget must be non-negative")
    caps = _check_caps(caps, m)
    if beta == 0:
        # No rounds run, so check membership of the zero vector directly:
        # it is inside the budget-0 polytope only if every user alone
        # already spans the file.
        if any(oracle.joint_rank(1 << i) < inst.n_packets for i in range(m)):
            raise Infeasible(
                "budget 0 requires every user to already hold the full file",
                beta=0,
                achieved_sum=0,
                rounds_completed=0,
            )
        return Allocation((0,) * m, 0, tsets=())
    rates = [0] * m
    tsets = []
    for rnd in range(1, beta + 1):
        eligible = [
            i
            for i in transmit_set(oracle, beta, rates, minimizer)
            if caps is None or rates[i] + 1 <= caps[i]
        ]
        if not eligible:
            raise Infeasible(
                f"round {rnd}: no user can extend the allocation",
                beta=beta,
                achieved_sum=sum(rates),
                rounds_completed=rnd - 1,
            )
        tsets.append(tuple(eligible))
        rates[cheapest_increment(cost, rates, eligible)] += 1
    return Allocation(tuple(rates), beta, tsets=tuple(tsets))


def eval_h(oracle, beta, cost, caps=None, minimizer=sfm_minimizer):
    """Optimal cost at a fixed budget: ``(value, allocation)``.

    Linear costs go through the greedy path, everything else through the
    incremental allocator; :class:`Infeasible` propagates.
    """
    if cost.kind == "linear":
        alloc = modified_edmonds(oracle, beta, cost.weights, caps, minimizer)
    else:
        alloc = convex_alloc(oracle, beta, cost, caps, minimizer)
    value = sum(cost.value(i, r) for i, r in enumerate(alloc.rates))
    return value, alloc


@dataclass(frozen=True)
class MinCostResult:
    beta: int
    value: float
    allocation: Allocation


def min_cost(oracle, cost, caps=None, minimizer=sfm_minimizer) -> MinCostResult:
    """Minimize the cost over all feasible budgets.

    The per-budget optimum is convex on the feasible range and its minimizer
    never exceeds the packet count, so after locating the smallest feasible
    budget this bisects for the first budget whose forward cost difference
    is non-negative.  That realizes the smallest-minimizer tie-break: among
    equally cheap budgets the fewest total transmissions win.
    """
    inst = oracle.instance
    caps = _check_caps(caps, inst.m)
    beta_min = min_sum_rate(oracle, caps, minimizer)
    hi = inst.n_packets if caps is None else min(inst.n_packets, sum(caps))
    cache: dict[int, tuple[float, Allocation | None]] = {}

    def h(b: int) -> float:
        if b not in cache:
            try:
                cache[b] = eval_h(oracle, b, cost, caps, minimizer)
            except Infeasible:
                cache[b] = (math.inf, None)
        return cache[b][0]

    def slope_ok(b: int) -> bool:
        return b >= hi or h(b + 1) >= h(b) - D_TIE

    lo, top = beta_min, hi
    while lo < top:
        mid = (lo + top) // 2
        if slope_ok(mid):
            top = mid
        else:
            lo = mid + 1
    value, alloc = cache[lo] if lo in cache else eval_h(oracle, lo, cost, caps, minimizer)
    if alloc is None:
        raise Infeasible(f"budget {lo} unexpectedly infeasible", beta=lo)
    return MinCostResult(lo, value, alloc)


def restriction_value(oracle, beta, caps, subset) -> int:
    """Capacity-restricted polytope bound at ``subset`` (test oracle).

    Minimum over splits of the subset of "uncapped bound on one part plus
    total capacity of the rest", with the uncapped bound supplied by the
    exhaustive partition oracle.  Doubly exponential, hence the size cap.
    """
    users = members(subset)
    if len(users) > 10:
        raise ValueError("restriction enumeration capped at subsets of size 10")
    caps = _check_caps(caps, oracle.instance.m)
    if caps is None:
        raise ValueError("a capacity vector is required")
    best = None
    t = len(users)
    for k in range(1 << t):
        v_mask = 0
        for b in range(t):
            if k & (1 << b):
                v_mask |= 1 << users[b]
        rest = sum(caps[u] for u in users if not (v_mask >> u) & 1)
        total = dilworth_value(oracle, beta, v_mask) + rest
        if best is None or total < best:
            best = total
    return 0 if best is None else best
