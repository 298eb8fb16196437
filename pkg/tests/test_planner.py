from __future__ import annotations

import math

import pytest
from conftest import instance
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from deptrain.baselines import brute_force_optimal, enumerate_schedules
from deptrain.dist import quantile
from deptrain.errors import Infeasible
from deptrain.orchestrator import run_pipeline
from deptrain.planner import (
    PlannerConfig, build_graph, count_switches, epoch_edge_weight, plan_models, probe_cluster,
    schedule_loss_pdf, shortest_feasible_path,
)

B_ONLY = [{"id": "B", "r": 50.0, "b": 10.0, "kappa": 1.2}]
TWO = [{"id": "A", "r": 100.0, "b": 10.0, "kappa": 1.0}, {"id": "B", "r": 50.0, "b": 10.0, "kappa": 1.2}]


def chain(delta, T_max=100.0, **kw):
    return instance([{"id": "m", "A": delta}], T_max=T_max, **kw)


@pytest.mark.parametrize("delta", [1.0, 0.7, 2.5])
def test_deterministic_chain(delta):
    inst = chain(delta, K_max=20)
    need = math.ceil((inst.ell0 - inst.ell_max) / delta - 1e-9)
    frag = plan_models(inst, ["d1"])
    assert frag.schedule == ("m",) * need
    assert frag.cost == pytest.approx(need * 1.0 * 100.0)
    assert quantile(frag.predicted_pdf, inst.omega) <= inst.ell_max + 1e-12


def test_deterministic_chain_deadline():
    # each epoch lasts exactly 1 time unit at full resources
    assert plan_models(chain(1.0, T_max=5.0, K_max=20), ["d1"]).schedule == ("m",) * 5
    with pytest.raises(Infeasible):
        plan_models(chain(1.0, T_max=4.5, K_max=20), ["d1"])


def test_forbidden_switch_has_no_edge():
    inst = instance([{"id": "a"}, {"id": "b", "switch_from": {"a": "forbidden"}}], K_max=8)
    g = build_graph(inst, ["d1"], eta=20)
    assert not g.allowed("a", "b") and g.allowed("b", "a")
    assert g.extend(g.start(), "b") is None
    assert g.successors("a") == ["a"]


def test_vertex_count(alexnet):
    g = build_graph(alexnet, ["d1"])
    assert g.vertex_count() == 3 * alexnet.K_max * 200 ** 2 + 1


def test_switch_loss_makes_single_model_cheaper():
    inst = instance([{"id": "a", "A": 1.0},
                     {"id": "b", "A": 1.2, "switch_from": {"a": {"family": "Dirac", "params": {"value": 3.0}}}}],
                    K_max=10)
    frag = plan_models(inst, ["d1"])
    assert frag.schedule == ("a",) * 5
    best = min((s for K in range(1, 11) for s in enumerate_schedules(["a", "b"], K, 9)
                if quantile(schedule_loss_pdf(inst, s), inst.omega) <= inst.ell_max + 1e-12),
               key=lambda s: (len(s), s))
    assert best == frag.schedule


def test_edge_weight_examples():
    inst = instance([{"id": "a"}, {"id": "b"}], clusters=TWO)
    assert epoch_edge_weight("a", "a", 1, inst) == 100.0
    assert epoch_edge_weight("b", "a", 1, inst) == epoch_edge_weight("a", "a", 1, inst)
    assert epoch_edge_weight("b", "a", 1, inst, switch_surcharge=5.0) == 105.0
    b_only = instance([{"id": "a"}], clusters=B_ONLY)
    assert epoch_edge_weight("a", "a", 3, b_only) == pytest.approx(60.0)


def test_sqrt_compute_edge_weight():
    inst = instance([{"id": "a", "compute_per_sample": 1.0}, {"id": "b", "compute_per_sample": 4.0}])
    assert epoch_edge_weight("a", "a", 1, inst, edge_cost="sqrt-compute") == pytest.approx(50.0)
    assert epoch_edge_weight("b", "b", 1, inst, edge_cost="sqrt-compute") == pytest.approx(100.0)


def test_probe_is_most_capable_cluster():
    inst = instance([{"id": "a"}], clusters=TWO)
    p = probe_cluster(inst)
    assert (p.cost_cluster, p.r, p.kappa) == ("A", 100.0, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(eta=1)
    with pytest.raises(ValueError):
        PlannerConfig(statistic="median")
    with pytest.raises(ValueError):
        PlannerConfig(edge_cost="cheap")


def test_count_switches():
    assert count_switches(("a", "a", "b", "a")) == 2
    assert count_switches(()) == 0


def stochastic_pair(ell_max, K_max, T_max, sw_scale, rel_var):
    x = {"family": "InverseGamma", "params": {"shape": 2 + 1 / rel_var, "scale": 1 + 1 / rel_var}}
    sw = {"family": "StudentT", "params": {"dof": 3.0, "loc": 0.1, "scale": sw_scale}}
    models = [
        {"id": "a", "A": 1.0, "X": x, "compute_per_sample": 1.0, "switch_from": {"b": sw}},
        {"id": "b", "A": 1.3, "X": x, "compute_per_sample": 2.0, "switch_from": {"a": sw}},
    ]
    return instance(models, clusters=TWO, ell_max=ell_max, K_max=K_max, T_max=T_max, initial="a",
                    config={"eta": 60, "max_switches": K_max - 1})


def test_returned_schedule_is_feasible_exactly():
    inst = stochastic_pair(4.0, 10, 30.0, 0.3, 0.02)
    frag = plan_models(inst, ["d1"], PlannerConfig(eta=60))
    pdf = schedule_loss_pdf(inst, frag.schedule)
    assert quantile(pdf, inst.omega) <= inst.ell_max + 1e-12
    assert frag.predicted_pdf.masses.tolist() == pdf.masses.tolist()


def test_per_edge_mode_returns_feasible_schedule():
    inst = stochastic_pair(4.0, 10, 30.0, 0.3, 0.02)
    frag = plan_models(inst, ["d1"], PlannerConfig(eta=60, per_edge_quantile_mode=True))
    assert quantile(schedule_loss_pdf(inst, frag.schedule), inst.omega) <= inst.ell_max + 1e-12


def test_blacklisted_schedule_not_returned():
    inst = stochastic_pair(4.0, 10, 30.0, 0.3, 0.02)
    first = plan_models(inst, ["d1"], PlannerConfig(eta=60))
    second = plan_models(inst, ["d1"], PlannerConfig(eta=60), blacklist=[first.schedule])
    assert second.schedule != first.schedule


def test_labels_respect_their_loss_level():
    inst = stochastic_pair(4.0, 10, 30.0, 0.3, 0.02)
    g = build_graph(inst, ["d1"], config=PlannerConfig(eta=60))
    frontier = [g.start()]
    for _ in range(4):
        frontier = [c for lab in frontier for m in g.successors(lab.model) if (c := g.extend(lab, m))]
        for lab in frontier:
            assert 1 <= lab.i <= g.eta and 1 <= lab.j <= g.eta
            if lab.j < g.eta:
                assert lab.value <= g.loss_level(lab.j) + 1e-9
            assert lab.i * inst.T_max / g.eta >= sum(g.duration[m] for m in lab.schedule()) - 1e-9


@given(st.floats(2.5, 6.0), st.integers(6, 9), st.floats(8.0, 40.0), st.floats(0.05, 0.6),
       st.floats(0.005, 0.05))
@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_never_beats_brute_force(ell_max, K_max, T_max, sw_scale, rel_var):
    inst = stochastic_pair(ell_max, K_max, T_max, sw_scale, rel_var)
    try:
        opt = brute_force_optimal(inst, ["d1"], max_switches=K_max - 1)
    except Infeasible:
        with pytest.raises(Infeasible):
            run_pipeline(inst, "depl", selected=["d1"])
        return
    try:
        plan = run_pipeline(inst, "depl", selected=["d1"]).plan
    except Infeasible:
        return
    assert plan.predicted_cost >= opt.predicted_cost * (1 - 1e-9)
    assert quantile(plan.predicted_loss_pdf, inst.omega) <= inst.ell_max + 1e-12


def test_shortest_path_rejects_foreign_omega():
    inst = chain(1.0, K_max=10)
    g = build_graph(inst, ["d1"])
    with pytest.raises(ValueError):
        shortest_feasible_path(g, inst, omega=0.5)
