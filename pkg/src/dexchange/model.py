"""Problem instances and the cut-set set function.

An instance is a collection of m observation matrices over a common prime
field: user i holds the values ``A_i @ w`` for an unknown packet vector w of
length N.  The solvers only ever touch an instance through joint ranks of
stacked observation rows, which :class:`CutSetOracle` memoizes per
user-subset bitmask.

Subsets of users are plain int bitmasks (bit i = user i).  The deterministic
algorithms enumerate subsets, so the user count is capped at MAX_USERS.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass

import numpy as np

from .gf import FieldSpec, FMatrix, rank

MAX_USERS = 30

#: Packet subsets for the bundled three-user, six-packet demo instance.
PRESETS = {
    "example1": (6, ((0, 1), (1, 3, 4, 5), (2, 3, 4, 5))),
}


class InstanceError(ValueError):
    """Instance data is malformed or does not span the full packet space."""


class InfeasibleInstance(ValueError):
    """Requested generation parameters cannot produce a valid instance."""


def mask_of(users) -> int:
    m = 0
    for u in users:
        m |= 1 << u
    return m


def members(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable exchange instance: field, packet count, per-user matrices."""

    field: FieldSpec
    n_packets: int
    observations: tuple[FMatrix, ...]

    def __post_init__(self):
        if self.n_packets < 1:
            raise InstanceError("packet count must be at least 1")
        m = len(self.observations)
        if m < 1:
            raise InstanceError("at least one user required")
        if m > MAX_USERS:
            raise InstanceError(f"user count {m} exceeds the bitmask cap {MAX_USERS}")
        for i, obs in enumerate(self.observations):
            if obs.field != self.field:
                raise InstanceError(f"user {i}: matrix field GF({obs.field.p}) does not match instance")
            if obs.cols != self.n_packets:
                raise InstanceError(
                    f"user {i}: matrix has {obs.cols} columns, expected {self.n_packets}"
                )
        stacked = FMatrix.vstack(self.field, self.observations, cols=self.n_packets)
        r = rank(stacked)
        if r < self.n_packets:
            raise InstanceError(
                f"collective rank {r} is below the packet count {self.n_packets}; "
                "the users together cannot reconstruct the file"
            )

    @property
    def m(self) -> int:
        return len(self.observations)

    @property
    def full_mask(self) -> int:
        return (1 << self.m) - 1

    def observe(self, user: int, w) -> np.ndarray:
        """Values user ``user`` holds for the packet vector ``w``."""
        return self.observations[user].mat_vec(w)

    def to_json_dict(self) -> dict:
        return {
            "q": self.field.p,
            "N": self.n_packets,
            "users": [{"rows": obs.array.tolist()} for obs in self.observations],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ProblemInstance":
        if not isinstance(data, dict):
            raise InstanceError("instance document must be a JSON object")
        try:
            q = data["q"]
            n = data["N"]
            users = data["users"]
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"instance document is missing key {exc}") from None
        if not isinstance(q, int) or q < 2:
            raise InstanceError("q must be an integer >= 2")
        try:
            field = FieldSpec(q)
        except ValueError as exc:
            raise InstanceError(str(exc)) from None
        if not isinstance(n, int) or n < 1:
            raise InstanceError("N must be a positive integer")
        if not isinstance(users, list) or not users:
            raise InstanceError("users must be a non-empty list")
        mats = []
        for i, entry in enumerate(users):
            rows = entry.get("rows") if isinstance(entry, dict) else None
            if rows is None or not isinstance(rows, list):
                raise InstanceError(f"user {i}: expected an object with a 'rows' list")
            for row in rows:
                if not isinstance(row, list) or len(row) != n:
                    raise InstanceError(f"user {i}: rows must all have length {n}")
                for v in row:
                    if not isinstance(v, int) or not 0 <= v < q:
                        raise InstanceError(
                            f"user {i}: entry {v!r} is outside the field range [0, {q})"
                        )
            mats.append(FMatrix(field, rows, cols=n))
        return cls(field, n, tuple(mats))

    def digest(self) -> str:
        """Stable short hash of the canonical JSON form."""
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_instance(path) -> ProblemInstance:
    with open(path, "r", encoding="utf-8") as f:
        return ProblemInstance.from_json_dict(json.load(f))


def save_instance(instance: ProblemInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance.to_json_dict(), f, indent=1)
        f.write("\n")


def instance_from_packet_sets(field: FieldSpec, n_packets: int, packet_sets) -> ProblemInstance:
    """Build a raw-packet instance: user i holds the listed packets verbatim."""
    mats = []
    for packets in packet_sets:
        rows = np.zeros((len(packets), n_packets), dtype=np.int64)
        for r, pkt in enumerate(sorted(packets)):
            if not 0 <= pkt < n_packets:
                raise InstanceError(f"packet index {pkt} out of range [0, {n_packets})")
            rows[r, pkt] = 1
        mats.append(FMatrix(field, rows, cols=n_packets))
    return ProblemInstance(field, n_packets, tuple(mats))


def preset_instance(name: str, q: int = 257) -> ProblemInstance:
    """One of the named built-in instances (see PRESETS)."""
    try:
        n, sets = PRESETS[name]
    except KeyError:
        raise InstanceError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return instance_from_packet_sets(FieldSpec(q), n, sets)


def generate_instance(
    kind: str,
    m: int,
    n_packets: int,
    field: FieldSpec = FieldSpec(257),
    coverage=None,
    seed: int = 0,
) -> ProblemInstance:
    """Sample a random instance that is collectively full rank.

    ``kind='raw'`` gives every user a subset of distinct packets (standard
    basis rows); ``kind='coded'`` gives uniform random matrices.  ``coverage``
    is the per-user row count; the default spreads roughly 2N rows evenly.
    Sampling retries until the union spans all packets, so the result is
    deterministic in ``seed``.
    """
    if kind not in ("raw", "coded"):
        raise ValueError(f"kind must be 'raw' or 'coded', got {kind!r}")
    if m < 1 or n_packets < 1:
        raise InfeasibleInstance("m and N must be positive")
    if coverage is None:
        per = max(1, math.ceil(2 * n_packets / m))
        if kind == "raw":
            per = min(per, n_packets)
        coverage = [per] * m
    coverage = [int(c) for c in coverage]
    if len(coverage) != m:
        raise InfeasibleInstance(f"coverage must list {m} row counts")
    if any(c < 0 for c in coverage):
        raise InfeasibleInstance("row counts must be non-negative")
    if sum(coverage) < n_packets:
        raise InfeasibleInstance(
            f"total of {sum(coverage)} rows cannot span {n_packets} packets"
        )
    if kind == "raw" and any(c > n_packets for c in coverage):
        raise InfeasibleInstance(f"a user cannot hold more than {n_packets} distinct packets")

    rng = np.random.default_rng(seed)
    for _ in range(1000):
        if kind == "raw":
            sets = [rng.choice(n_packets, size=c, replace=False) for c in coverage]
            covered = set()
            for s in sets:
                covered.update(int(v) for v in s)
            if len(covered) < n_packets:
                continue
            return instance_from_packet_sets(field, n_packets, [tuple(s) for s in sets])
        mats = [
            FMatrix(field, rng.integers(0, field.p, size=(c, n_packets)), cols=n_packets)
            for c in coverage
        ]
        stacked = FMatrix.vstack(field, mats, cols=n_packets)
        if rank(stacked) == n_packets:
            return ProblemInstance(field, n_packets, tuple(mats))
    raise InfeasibleInstance("no collectively full-rank draw found after 1000 attempts")


class CutSetOracle:
    """Memoized joint ranks and the budgeted cut-set set function.

    ``cut_set_f(beta, S)`` is the per-subset transmission cap implied by a
    total budget ``beta``: 0 on the empty set, ``beta`` on the full set, and
    ``beta - N + rank(A_S)`` in between (possibly negative for small
    budgets).  The memo holds at most 2^m entries and tolerates concurrent
    readers; insertion is locked.
    """

    def __init__(self, instance: ProblemInstance):
        self.instance = instance
        self._ranks: dict[int, int] = {0: 0}
        self._lock = threading.Lock()

    def joint_rank(self, subset: int) -> int:
        """Rank of the stacked observation rows of the users in ``subset``."""
        if subset & ~self.instance.full_mask:
            raise ValueError(f"subset {subset:#x} has bits beyond user count {self.instance.m}")
        cached = self._ranks.get(subset)
        if cached is not None:
            return cached
        mats = [self.instance.observations[i] for i in members(subset)]
        stacked = FMatrix.vstack(self.instance.field, mats, cols=self.instance.n_packets)
        value = rank(stacked)
        with self._lock:
            self._ranks[subset] = value
        return value

    def cut_set_f(self, beta: int, subset: int) -> int:
        if beta < 0:
            raise ValueError("budget must be non-negative")
        if subset == 0:
            return 0
        if subset == self.instance.full_mask:
            return beta
        return beta - self.instance.n_packets + self.joint_rank(subset)


def _iter_partitions(items: tuple[int, ...]):
    """All set partitions of ``items`` as lists of lists."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _iter_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def dilworth_value(oracle: CutSetOracle, beta: int, subset: int) -> int:
    """Tightest fully submodular value at ``subset``: the minimum of
    ``cut_set_f`` summed over the blocks of any partition of the subset.

    Test oracle only: enumerates every set partition, so the subset size is
    capped at 10 (Bell(10) = 115975 partitions).
    """
    users = members(subset)
    if len(users) > 10:
        raise ValueError("partition enumeration capped at subsets of size 10")
    best = None
    for part in _iter_partitions(users):
        total = sum(oracle.cut_set_f(beta, mask_of(block)) for block in part)
        if best is None or total < best:
            best = total
    return 0 if best is None else best


def in_cut_set_region(oracle: CutSetOracle, rates) -> bool:
    """Exhaustive membership test for the cut-set rate region.

    Checks ``R(S) >= N - rank(A_{M\\S})`` for every proper subset S.  Cost is
    2^m joint-rank queries, so intended for m up to ~20.
    """
    inst = oracle.instance
    rates = list(rates)
    if len(rates) != inst.m:
        raise ValueError(f"rate vector of length {inst.m} required")
    full = inst.full_mask
    n = inst.n_packets
    for s in range(full):  # every proper subset, including the empty one
        total = sum(rates[i] for i in members(s))
        if total < n - oracle.joint_rank(full ^ s):
            return False
    return True
