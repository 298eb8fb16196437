"""Cluster and resource allocation for a fixed model schedule.

For a fixed cluster per epoch the problem

    minimize  sum_k kappa_k x_k
    s.t.      sum_k c_k / x_k <= T_max - sum_k s_k / b_k,   0 < x_k <= r_k

is convex and separable. Its stationary point gives
x_k = sqrt(c_k / kappa_k) * sum_j sqrt(c_j kappa_j) / budget; capped epochs are
pinned to r_k and the rest of the budget is re-split until no cap binds.
Cluster choices are searched over per-model count compositions, which is
exhaustive because epochs of the same model are interchangeable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import PlacementInfeasible
from .scenario import EpochAssignment, Plan, plan_cost

EXHAUSTIVE_LIMIT = 100_000


@dataclass(frozen=True)
class Allocation:
    clusters: tuple[str, ...]
    x: tuple[float, ...]
    cost: float
    time: float


def split_budget(c, kappa, r, budget: float):
    """Cost-minimal resource levels for fixed clusters; None if infeasible.

    Zero-compute epochs get x = 0; zero-cost clusters run at full capacity.
    """
    c = np.asarray(c, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    r = np.asarray(r, dtype=float)
    x = np.zeros_like(c)
    active = c > 0
    if not active.any():
        return x if budget >= 0 else None
    if budget <= 0 or np.sum(c[active] / r[active]) > budget * (1 + 1e-12):
        return None
    capped = active & (kappa <= 0)
    while True:
        free = active & ~capped
        rem = budget - np.sum(c[capped] / r[capped])
        if not free.any():
            x[capped] = r[capped]
            return x
        if rem <= 0:
            return None
        lam = np.sum(np.sqrt(c[free] * kappa[free])) / rem
        xf = np.sqrt(c[free] / kappa[free]) * lam
        over = xf > r[free]
        if not over.any():
            x[free] = xf
            x[capped] = r[capped]
            return x
        idx = np.nonzero(free)[0][over]
        capped[idx] = True


def _effective_clusters(clusters):
    """Drop clusters that another cluster matches or beats on kappa, r and b."""
    keep = []
    for n in sorted(clusters, key=lambda c: c.id):
        dominated = any(
            o.kappa <= n.kappa and o.r >= n.r and o.b >= n.b and
            (o.kappa, -o.r, -o.b, o.id) < (n.kappa, -n.r, -n.b, n.id)
            for o in clusters if o is not n
        )
        if not dominated:
            keep.append(n)
    return keep


def _evaluate(assign, comp, sizes_s, clusters, T_max):
    kappa = np.array([clusters[a].kappa for a in assign])
    r = np.array([clusters[a].r for a in assign])
    comm = sum(s / clusters[a].b for s, a in zip(sizes_s, assign))
    x = split_budget(comp, kappa, r, T_max - comm)
    if x is None:
        return None
    return float(np.dot(kappa, x)), x


def allocate(schedule: Sequence[str], inst, epsilon: float = 0.05, blacklist: Iterable = (),
             data_size: float | None = None) -> Allocation:
    """Choose a cluster and resource level for every epoch of ``schedule``.

    Raises PlacementInfeasible when no assignment meets T_max.
    """
    if not schedule:
        raise ValueError("schedule must be non-empty")
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if data_size is None:
        data_size = inst.data_size(d.id for d in inst.datasets)
    models = [inst.model(m) for m in schedule]
    comp = np.array([m.compute_per_sample * data_size for m in models])
    sizes_s = [m.s for m in models]
    clusters = _effective_clusters(inst.clusters)
    banned = {tuple(b) for b in blacklist}
    if banned:
        clusters = sorted(inst.clusters, key=lambda c: c.id)

    groups: dict[str, list[int]] = {}
    for k, m in enumerate(schedule):
        groups.setdefault(m, []).append(k)
    gkeys = sorted(groups)
    nc = len(clusters)
    n_combos = 1
    for g in gkeys:
        n_combos *= math.comb(len(groups[g]) + nc - 1, nc - 1)

    best = None
    if n_combos <= EXHAUSTIVE_LIMIT:
        per_group = [list(_compositions(len(groups[g]), nc)) for g in gkeys]
        for combo in itertools.product(*per_group):
            assign = [0] * len(schedule)
            for g, counts in zip(gkeys, combo):
                pos = iter(groups[g])
                for ci, cnt in enumerate(counts):
                    for _ in range(cnt):
                        assign[next(pos)] = ci
            best = _consider(best, assign, comp, sizes_s, clusters, inst.T_max, banned)
    else:
        best = _greedy(comp, sizes_s, clusters, inst.T_max, banned)
    if best is None:
        raise PlacementInfeasible(
            f"schedule of {len(schedule)} epochs cannot finish within T_max={inst.T_max}")
    cost, ids, x = best
    time = sum(c / xi if c > 0 else 0.0 for c, xi in zip(comp, x))
    time += sum(s / inst.cluster(i).b for s, i in zip(sizes_s, ids))
    return Allocation(ids, tuple(float(v) for v in x), cost, float(time))


def _consider(best, assign, comp, sizes_s, clusters, T_max, banned):
    ids = tuple(clusters[a].id for a in assign)
    if ids in banned:
        return best
    res = _evaluate(assign, comp, sizes_s, clusters, T_max)
    if res is None:
        return best
    cost, x = res
    if best is None or cost < best[0] - 1e-12 * max(1.0, best[0]) or (
            abs(cost - best[0]) <= 1e-12 * max(1.0, best[0]) and ids < best[1]):
        return (cost, ids, x)
    return best


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total`` (lexicographic, descending head)."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _greedy(comp, sizes_s, clusters, T_max, banned):
    K = len(comp)
    best = None
    for ci in range(len(clusters)):
        best = _consider(best, [ci] * K, comp, sizes_s, clusters, T_max, banned)
    if best is None:
        return None
    index = {c.id: i for i, c in enumerate(clusters)}
    assign = [index[i] for i in best[1]]
    improved = True
    while improved:
        improved = False
        for k in range(K):
            for ci in range(len(clusters)):
                if ci == assign[k]:
                    continue
                trial = assign.copy()
                trial[k] = ci
                cand = _consider(best, trial, comp, sizes_s, clusters, T_max, banned)
                if cand is not best:
                    best, assign, improved = cand, trial, True
    return best


def min_time(schedule: Sequence[str], inst, data_size: float | None = None) -> float:
    """Duration of ``schedule`` at full resources on the fastest single cluster."""
    if not schedule:
        raise ValueError("schedule must be non-empty")
    if data_size is None:
        data_size = inst.data_size(d.id for d in inst.datasets)
    models = [inst.model(m) for m in schedule]
    return min(
        sum(m.compute_per_sample * data_size / n.r + m.s / n.b for m in models)
        for n in inst.clusters
    )


def cost_lower_bound(schedule: Sequence[str], inst, data_size: float) -> float:
    """Allocation cost that no cluster assignment of ``schedule`` can beat.

    Relaxes every cap, prices all compute at the cheapest kappa and all
    uploads at the fastest bandwidth. Grows when epochs are appended.
    """
    kappa = min(c.kappa for c in inst.clusters)
    b = max(c.b for c in inst.clusters)
    root, upload = 0.0, 0.0
    for mid in schedule:
        m = inst.model(mid)
        root += math.sqrt(m.compute_per_sample * data_size)
        upload += m.s / b
    budget = inst.T_max - upload
    if budget <= 0:
        return math.inf
    return kappa * root * root / budget


def realize(schedule: Sequence[str], inst, selected_datasets: Sequence[str], loss_pdf=None,
            epsilon: float = 0.05, blacklist: Iterable = ()):
    """Allocate ``schedule`` and package it as a Plan (raises PlacementInfeasible)."""
    selected = tuple(sorted(selected_datasets))
    alloc = allocate(schedule, inst, epsilon, blacklist, data_size=inst.data_size(selected))
    epochs = tuple(EpochAssignment(m, n, x) for m, n, x in zip(schedule, alloc.clusters, alloc.x))
    plan = Plan(selected, epochs, loss_pdf, math.nan, alloc.time)
    return replace(plan, predicted_cost=plan_cost(plan, inst))
