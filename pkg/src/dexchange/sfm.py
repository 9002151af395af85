"""Pinned-element submodular minimization by exhaustive enumeration.

The coordinate step shared by all deterministic solvers asks: over subsets S
of a free ground set, minimize ``f_beta(S + pinned) - R(S)``.  That function
is fully submodular on the free set, but at desk scale an exhaustive sweep
over the 2^|free| subsets is exact, tuning-free and fast enough (the
documented practical cap is around 22 free elements), so enumeration is the
default engine rather than a combinatorial SFM algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import CutSetOracle, members


@dataclass(frozen=True)
class GroundSet:
    """Free-element bitmask plus one pinned element always in the argument."""

    free: int
    pinned: int

    def __post_init__(self):
        if self.pinned < 0:
            raise ValueError("pinned element must be a user index")
        if self.free & (1 << self.pinned):
            raise ValueError("pinned element may not appear in the free set")


def min_pinned(
    oracle: CutSetOracle, beta: int, rates, ground: GroundSet
) -> tuple[int, int]:
    """Minimize ``cut_set_f(beta, S + pinned) - sum(rates over S)`` over all
    S inside the free set.

    Returns ``(value, argmin_mask)``.  Subsets are scanned in increasing
    bitmask order and only strict improvements are kept, so ties resolve to
    the lexicographically smallest mask and results are reproducible.
    """
    pin_bit = 1 << ground.pinned
    best_val = oracle.cut_set_f(beta, pin_bit)
    best_mask = 0
    positions = members(ground.free)
    t = len(positions)
    if t == 0:
        return best_val, 0
    size = 1 << t
    masks = [0] * size
    sums = [0] * size
    for k in range(1, size):
        low = k & -k
        prev = k ^ low
        b = positions[low.bit_length() - 1]
        masks[k] = masks[prev] | (1 << b)
        sums[k] = sums[prev] + rates[b]
        val = oracle.cut_set_f(beta, masks[k] | pin_bit) - sums[k]
        if val < best_val:
            best_val = val
            best_mask = masks[k]
    return best_val, best_mask
