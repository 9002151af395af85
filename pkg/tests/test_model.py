import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dexchange.gf import FieldSpec, FMatrix, rank
from dexchange.model import (
    CutSetOracle,
    InfeasibleInstance,
    InstanceError,
    ProblemInstance,
    dilworth_value,
    generate_instance,
    in_cut_set_region,
    instance_from_packet_sets,
    load_instance,
    mask_of,
    members,
    preset_instance,
    save_instance,
)

FULL = 0b111  # all three users of the demo instance


def test_bit_helpers():
    assert mask_of([0, 2]) == 0b101
    assert members(0b1011) == (0, 1, 3)
    assert members(0) == ()


def test_demo_observation_shapes(demo):
    assert demo.m == 3
    assert demo.n_packets == 6
    assert [obs.rows for obs in demo.observations] == [2, 4, 4]


def test_collective_rank_required():
    f = FieldSpec(5)
    mats = (FMatrix(f, [[1, 0, 0]]), FMatrix(f, [[0, 1, 0]]))
    with pytest.raises(InstanceError, match="collective rank"):
        ProblemInstance(f, 3, mats)


def test_column_count_checked():
    f = FieldSpec(5)
    with pytest.raises(InstanceError, match="columns"):
        ProblemInstance(f, 3, (FMatrix(f, [[1, 0]]),))


def test_joint_rank_demo_values(demo_oracle):
    # Stacked ranks of the demo instance, countable by hand from the packet sets.
    assert demo_oracle.joint_rank(0) == 0
    assert demo_oracle.joint_rank(0b010) == 4
    assert demo_oracle.joint_rank(0b101) == 6
    assert demo_oracle.joint_rank(FULL) == 6


def test_joint_rank_memo_is_monotone(demo_oracle):
    for s in range(FULL + 1):
        for t in range(FULL + 1):
            if s & t == s:
                assert demo_oracle.joint_rank(s) <= demo_oracle.joint_rank(t)


def test_cut_set_tables(demo_oracle):
    f4 = {0b001: 0, 0b010: 2, 0b100: 2, 0b011: 3, 0b101: 4, 0b110: 3, FULL: 4}
    f5 = {0b001: 1, 0b010: 3, 0b100: 3, 0b011: 4, 0b101: 5, 0b110: 4, FULL: 5}
    for s, v in f4.items():
        assert demo_oracle.cut_set_f(4, s) == v
    for s, v in f5.items():
        assert demo_oracle.cut_set_f(5, s) == v
    assert demo_oracle.cut_set_f(4, 0) == 0


def test_cut_set_f_may_be_negative(demo_oracle):
    assert demo_oracle.cut_set_f(0, 0b001) == -4


def test_cut_set_f_validates_input(demo_oracle):
    with pytest.raises(ValueError):
        demo_oracle.cut_set_f(-1, 0b001)
    with pytest.raises(ValueError):
        demo_oracle.joint_rank(0b1000)


def test_partition_minimum_tables(demo_oracle):
    g4 = {0b001: 0, 0b010: 2, 0b100: 2, 0b011: 2, 0b101: 2, 0b110: 3, FULL: 3}
    g5 = {0b001: 1, 0b010: 3, 0b100: 3, 0b011: 4, 0b101: 4, 0b110: 4, FULL: 5}
    for s, v in g4.items():
        assert dilworth_value(demo_oracle, 4, s) == v
    for s, v in g5.items():
        assert dilworth_value(demo_oracle, 5, s) == v


def test_partition_minimum_singleton_equals_f(demo_oracle):
    for i in range(3):
        s = 1 << i
        assert dilworth_value(demo_oracle, 5, s) == demo_oracle.cut_set_f(5, s)


def test_partition_minimum_never_exceeds_f(demo_oracle):
    for beta in (0, 3, 4, 5, 6, 8):
        for s in range(1, FULL + 1):
            assert dilworth_value(demo_oracle, beta, s) <= demo_oracle.cut_set_f(beta, s)


def test_json_round_trip(tmp_path, demo):
    path = tmp_path / "inst.json"
    save_instance(demo, path)
    again = load_instance(path)
    assert again == demo
    assert again.digest() == demo.digest()


def test_loader_rejects_bad_documents(tmp_path):
    base = preset_instance("example1", q=5).to_json_dict()

    def dump(doc):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        return path

    doc = json.loads(json.dumps(base))
    doc["users"][0]["rows"][0][0] = 5
    with pytest.raises(InstanceError, match="field range"):
        load_instance(dump(doc))

    doc = json.loads(json.dumps(base))
    doc["users"][1]["rows"][0] = [1, 0, 0]
    with pytest.raises(InstanceError, match="length"):
        load_instance(dump(doc))

    doc = json.loads(json.dumps(base))
    doc["users"] = doc["users"][:1]  # first user alone cannot span the file
    with pytest.raises(InstanceError, match="collective rank"):
        load_instance(dump(doc))

    doc = json.loads(json.dumps(base))
    doc["q"] = 6
    with pytest.raises(InstanceError, match="prime"):
        load_instance(dump(doc))


def test_generate_raw_matches_reference_layout():
    inst = instance_from_packet_sets(
        FieldSpec(257), 6, [(0, 1), (1, 3, 4, 5), (2, 3, 4, 5)]
    )
    oracle = CutSetOracle(inst)
    expected = {0b001: 1, 0b010: 3, 0b100: 3, 0b011: 4, 0b101: 5, 0b110: 4, FULL: 5}
    for s, v in expected.items():
        assert oracle.cut_set_f(5, s) == v


def test_generate_coded_reaches_full_rank():
    inst = generate_instance("coded", 2, 3, FieldSpec(257), coverage=(2, 2), seed=11)
    stacked = FMatrix.vstack(inst.field, inst.observations, cols=3)
    assert rank(stacked) == 3


def test_generate_is_deterministic():
    a = generate_instance("coded", 3, 4, FieldSpec(257), seed=3)
    b = generate_instance("coded", 3, 4, FieldSpec(257), seed=3)
    assert a == b and a.digest() == b.digest()


def test_generate_infeasible_coverage():
    with pytest.raises(InfeasibleInstance):
        generate_instance("raw", 2, 4, FieldSpec(257), coverage=(1, 1))
    with pytest.raises(InfeasibleInstance):
        generate_instance("raw", 2, 3, FieldSpec(257), coverage=(4, 1))


def test_preset_unknown_name():
    with pytest.raises(InstanceError):
        preset_instance("nonesuch")


def test_in_cut_set_region(demo_oracle):
    assert in_cut_set_region(demo_oracle, (1, 1, 3))
    assert in_cut_set_region(demo_oracle, (1, 3, 1))
    assert not in_cut_set_region(demo_oracle, (0, 0, 0))
    assert not in_cut_set_region(demo_oracle, (2, 1, 1))  # total 4 is too small


@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_budget_function_is_intersecting_submodular(m, n, seed):
    inst = generate_instance("coded", m, n, FieldSpec(5), seed=seed)
    oracle = CutSetOracle(inst)
    full = inst.full_mask
    for beta in (0, n - 1, n, n + 2):
        for s in range(full + 1):
            for t in range(full + 1):
                if s & t == 0 and beta < n:
                    continue
                lhs = oracle.cut_set_f(beta, s) + oracle.cut_set_f(beta, t)
                rhs = oracle.cut_set_f(beta, s | t) + oracle.cut_set_f(beta, s & t)
                assert lhs >= rhs


def test_oracle_is_shareable_across_threads(demo):
    import threading

    oracle = CutSetOracle(demo)
    results = []

    def worker():
        results.append([oracle.joint_rank(s) for s in range(8)])

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == results[0] for r in results)
