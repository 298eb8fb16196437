from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import instance
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import allocation_oracle

from deptrain.errors import PlacementInfeasible
from deptrain.placement import allocate, cost_lower_bound, min_time, realize, split_budget
from deptrain.scenario import check_feasible

TWO = [{"id": "A", "r": 100.0, "b": 10.0, "kappa": 1.0}, {"id": "B", "r": 50.0, "b": 10.0, "kappa": 1.2}]


def test_single_epoch_single_cluster():
    inst = instance([{"id": "m", "s": 2.0}], T_max=10.0)
    c = 1.0 * 100.0
    alloc = allocate(["m"], inst)
    x = c / (10.0 - 2.0 / 10.0)
    assert alloc.x == (pytest.approx(x),)
    assert alloc.cost == pytest.approx(x)
    assert alloc.time == pytest.approx(10.0)


def test_two_identical_epochs_equal_split():
    inst = instance([{"id": "m"}], T_max=8.0)
    alloc = allocate(["m", "m"], inst)
    assert alloc.x[0] == pytest.approx(alloc.x[1])
    # closed form: x_k = sqrt(c_k / kappa) * sum_j sqrt(c_j kappa) / budget
    assert alloc.x[0] == pytest.approx(math.sqrt(100.0) * 2 * math.sqrt(100.0) / 8.0)


def test_closed_form_split_mixed_compute():
    inst = instance([{"id": "a", "compute_per_sample": 1.0}, {"id": "b", "compute_per_sample": 4.0}], T_max=50.0)
    alloc = allocate(["a", "b", "b"], inst)
    c = np.array([100.0, 400.0, 400.0])
    lam = np.sum(np.sqrt(c)) / 50.0
    np.testing.assert_allclose(alloc.x, np.sqrt(c) * lam)


def test_split_budget_caps_bind():
    x = split_budget([100.0, 1.0], [1.0, 1.0], [10.0, 10.0], 10.5)
    assert x[0] == pytest.approx(10.0)
    assert 100 / x[0] + 1 / x[1] == pytest.approx(10.5)
    assert split_budget([100.0], [1.0], [10.0], 9.0) is None


def test_infeasible_when_full_resources_too_slow():
    inst = instance([{"id": "m"}], T_max=1.0)
    with pytest.raises(PlacementInfeasible):
        allocate(["m", "m"], inst)


def test_min_time_examples():
    inst = instance([{"id": "m", "s": 10.0}])
    assert min_time(["m"] * 3, inst) == pytest.approx(6.0)
    inst0 = instance([{"id": "m", "s": 0.0}])
    assert min_time(["m"] * 3, inst0) == pytest.approx(3.0)


def test_min_time_benchmark_by_hand(alexnet):
    sched = ["intermediate"] * 4 + ["slow-steady"] * 2
    size = 1250.0
    expect = 4 * (0.14 * size / 100 + 0.1) + 2 * (0.1 * size / 100 + 0.1)
    assert min_time(sched, alexnet) == pytest.approx(expect)


def test_benchmark_allocation_matches_exhaustive(alexnet):
    sched = ["intermediate", "intermediate", "slow-steady", "slow-steady", "slow-steady"]
    inst = alexnet.with_targets(T_max=15.0)
    alloc = allocate(sched, inst, 0.05, data_size=1250.0)
    cost, _, _ = allocation_oracle(sched, inst, 1250.0)
    assert cost * (1 - 1e-9) <= alloc.cost <= cost * 1.05


schedules = st.lists(st.sampled_from(["a", "b"]), min_size=1, max_size=6)


@given(schedules, st.floats(4.0, 40.0), st.sampled_from([0.01, 0.1]),
       st.sampled_from([TWO, TWO + [{"id": "C", "r": 70.0, "b": 2.0, "kappa": 0.9}]]))
@settings(max_examples=40, deadline=None)
def test_allocate_within_epsilon_of_exhaustive(sched, T_max, eps, clusters):
    inst = instance([{"id": "a", "s": 1.0, "compute_per_sample": 1.0},
                     {"id": "b", "s": 2.0, "compute_per_sample": 2.5}], clusters=clusters, T_max=T_max)
    oracle = allocation_oracle(sched, inst, 100.0)
    if oracle is None:
        with pytest.raises(PlacementInfeasible):
            allocate(sched, inst, eps, data_size=100.0)
        return
    alloc = allocate(sched, inst, eps, data_size=100.0)
    assert alloc.cost <= oracle[0] * (1 + eps) + 1e-9
    # caps and the time budget hold exactly
    for cid, x in zip(alloc.clusters, alloc.x):
        assert x <= inst.cluster(cid).r * (1 + 1e-12)
    assert alloc.time <= inst.T_max * (1 + 1e-9)


@given(schedules, st.floats(4.0, 40.0))
@settings(max_examples=30, deadline=None)
def test_smaller_epsilon_never_costs_more(sched, T_max):
    inst = instance([{"id": "a", "compute_per_sample": 1.0}, {"id": "b", "compute_per_sample": 2.5}],
                    clusters=TWO, T_max=T_max)
    try:
        loose = allocate(sched, inst, 0.5, data_size=100.0)
    except PlacementInfeasible:
        return
    tight = allocate(sched, inst, 0.01, data_size=100.0)
    assert tight.cost <= loose.cost + 1e-9


@given(schedules, st.sampled_from(["a", "b"]), st.floats(5.0, 60.0))
@settings(max_examples=30, deadline=None)
def test_cost_lower_bound_is_a_lower_bound_and_grows(sched, extra, T_max):
    inst = instance([{"id": "a", "s": 1.0, "compute_per_sample": 1.0},
                     {"id": "b", "s": 2.0, "compute_per_sample": 2.5}], clusters=TWO, T_max=T_max)
    lb = cost_lower_bound(sched, inst, 100.0)
    assert cost_lower_bound(sched + [extra], inst, 100.0) >= lb
    try:
        alloc = allocate(sched, inst, data_size=100.0)
    except PlacementInfeasible:
        return
    assert lb <= alloc.cost * (1 + 1e-9)


def test_blacklisted_assignment_is_avoided():
    inst = instance([{"id": "m"}], clusters=TWO, T_max=10.0)
    first = allocate(["m"], inst)
    second = allocate(["m"], inst, blacklist=[first.clusters])
    assert second.clusters != first.clusters


def test_realize_builds_feasible_plan(alexnet):
    plan = realize(["intermediate"] * 3, alexnet.with_targets(T_max=20.0), ["d1"])
    rep = check_feasible(plan, alexnet.with_targets(T_max=20.0))
    assert rep.time_ok and rep.resource_ok and rep.dataset_ok
    assert plan.predicted_cost == pytest.approx(sum(e.x * alexnet.cluster(e.cluster).kappa for e in plan.schedule))
