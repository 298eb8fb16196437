"""Reference strategies: exhaustive optimum and the expected-loss planner."""

from __future__ import annotations

import itertools
import math
from math import comb
from typing import Iterator, Sequence

from .dist import DiscretePdf, convolve, quantile
from .errors import Infeasible, PlacementInfeasible, TooLarge
from .placement import allocate, cost_lower_bound, realize
from .planner import PlannerConfig, _add_key, _Components, build_graph, schedule_loss_pdf, shortest_feasible_path
from .scenario import Plan, ProblemInstance

CANDIDATE_LIMIT = 10_000_000


def enumerate_schedules(models: Sequence[str], K: int, max_switches: int) -> Iterator[tuple[str, ...]]:
    """Every length-``K`` schedule over ``models`` with at most ``max_switches`` changes."""
    models = sorted(models)
    for s in range(min(max_switches, K - 1) + 1):
        for cuts in itertools.combinations(range(1, K), s):
            bounds = (0,) + cuts + (K,)
            for seq in itertools.product(models, repeat=s + 1):
                if any(a == b for a, b in zip(seq, seq[1:])):
                    continue
                out = []
                for m, lo, hi in zip(seq, bounds, bounds[1:]):
                    out.extend([m] * (hi - lo))
                yield tuple(out)


def count_candidates(n_models: int, K_max: int, max_switches: int) -> int:
    """Schedules of length 1..K_max with at most ``max_switches`` changes."""
    total = 0
    for K in range(1, K_max + 1):
        for s in range(min(max_switches, K - 1) + 1):
            total += n_models * (n_models - 1) ** s * comb(K - 1, s)
    return total


def _switches(schedule: Sequence[str]) -> int:
    return sum(1 for a, b in zip(schedule, schedule[1:]) if a != b)


def brute_force_optimal(inst: ProblemInstance, selected_datasets: Sequence[str], max_switches: int | None = None,
                        epsilon: float = 0.05) -> Plan:
    """Minimum-cost feasible plan over all schedules with bounded switching.

    Schedules are grown epoch by epoch. Prefixes with the same multiset of
    loss-change components and the same last model share their loss pdf,
    their cost and every continuation, so only one representative (fewest
    switches, then lexicographically smallest) is kept. A prefix that meets
    the loss target is not extended, since appending epochs only adds cost,
    and prefixes whose cost lower bound reaches the incumbent are dropped.
    """
    if max_switches is None:
        max_switches = int(inst.config.get("max_switches", 3))
    if max_switches < 0:
        raise ValueError("max_switches must be >= 0")
    n = count_candidates(len(inst.models), inst.K_max, max_switches)
    if n > CANDIDATE_LIMIT:
        raise TooLarge(f"{n} candidate schedules exceed the enumeration limit {CANDIDATE_LIMIT}")
    selected = tuple(sorted(selected_datasets))
    size = inst.data_size(selected)
    grid = inst.grid()
    comp = _Components(inst, grid)
    models = sorted(inst.model_ids)
    start = DiscretePdf.point(inst.ell0, grid.step)
    # layer entries: schedule -> (key, pdf)
    layer: list[tuple[tuple[str, ...], tuple, DiscretePdf]] = [((), (), start)]
    best = None  # (cost, switches, schedule, pdf)
    for k in range(1, inst.K_max + 1):
        children: dict[tuple, tuple] = {}
        for sched, key, pdf in layer:
            prev = sched[-1] if sched else inst.initial_model
            for m in models:
                if m != prev and inst.model(m).switch_dist(prev) is None:
                    continue
                child = sched + (m,)
                sw = _switches(child)
                if sw > max_switches:
                    continue
                cids = [comp.run(m, k)]
                if m != prev:
                    cids.append(comp.switch(prev, m))
                ckey = _add_key(key, *cids)
                state = (ckey, m)
                cur = children.get(state)
                if cur is not None and (_switches(cur[0]), cur[0]) <= (sw, child):
                    continue
                children[state] = (child, ckey, pdf, cids)
        layer = []
        for child, ckey, parent_pdf, cids in sorted(children.values(), key=lambda v: v[0]):
            lb = cost_lower_bound(child, inst, size)
            if best is not None and lb > best[0] * (1 + 1e-9):
                continue
            pdf = parent_pdf
            for cid in cids:
                pdf = convolve(pdf, comp.pdfs[cid])
            if quantile(pdf, inst.omega) <= inst.ell_max + 1e-12:
                try:
                    alloc = allocate(child, inst, epsilon, data_size=size)
                except PlacementInfeasible:
                    continue
                cand = (alloc.cost, _switches(child), child, pdf)
                if best is None or _better(cand, best):
                    best = cand
                continue
            if k < inst.K_max:
                layer.append((child, ckey, pdf))
        if not layer:
            break
    if best is None:
        raise Infeasible("no schedule with at most %d switches meets the targets" % max_switches)
    return realize(best[2], inst, selected, best[3], epsilon)


def _better(a, b) -> bool:
    tol = 1e-9 * max(1.0, abs(b[0]))
    if a[0] < b[0] - tol:
        return True
    if a[0] > b[0] + tol:
        return False
    return (a[1], a[2]) < (b[1], b[2])


def pad_schedule(inst: ProblemInstance, schedule: Sequence[str]) -> tuple[tuple[str, ...], DiscretePdf]:
    """Repeat the final model until the exact omega-quantile meets ell_max."""
    sched = tuple(schedule)
    grid = inst.grid()
    comp = _Components(inst, grid)
    pdf = schedule_loss_pdf(inst, sched, grid, comp)
    while quantile(pdf, inst.omega) > inst.ell_max + 1e-12:
        if len(sched) >= inst.K_max:
            raise Infeasible(f"padding {schedule!r} needs more than K_max={inst.K_max} epochs")
        m = sched[-1]
        sched = sched + (m,)
        pdf = convolve(pdf, comp.pdfs[comp.run(m, len(sched))])
    return sched, pdf


def best_exp_schedule(inst: ProblemInstance, selected_datasets: Sequence[str], eta: int | None = None,
                      blacklist=()) -> tuple[tuple[str, ...], DiscretePdf]:
    """Expected-loss planner followed by padding to the quantile target."""
    config = PlannerConfig.from_instance(inst, eta=eta, statistic="mean")
    graph = build_graph(inst, selected_datasets, config=config)
    frag = shortest_feasible_path(graph, inst, blacklist=blacklist)
    return pad_schedule(inst, frag.schedule)


def best_exp_plan(inst: ProblemInstance, selected_datasets: Sequence[str], eta: int | None = None,
                  epsilon: float = 0.05) -> Plan:
    """Expected-loss plan, padded and allocated; infeasible placements are
    blacklisted and the planner re-run."""
    from .orchestrator import run_pipeline

    return run_pipeline(inst, strategy="best-exp", eta=eta, epsilon=epsilon,
                        selected=tuple(sorted(selected_datasets))).plan
