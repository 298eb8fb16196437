"""Model-schedule planning on an expanded (model, epoch, time, loss) graph.

Vertices are ``(model, k, i, j)``: after ``k`` epochs the elapsed time is at
most ``i/eta * T_max`` and the omega-quantile of the loss is at most
``j/eta * ell0``. A virtual sink is reached from every vertex whose loss level
meets the target. Loss quantiles are not additive along a path, so each search
label carries the exact distribution of its cumulative loss change in the
frequency domain: a label stores how many times each per-epoch loss-change
component occurs, and its transform is the count-weighted sum of the
components' log-transforms. The vertex only buckets labels for dominance
pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dist import (
    DiscretePdf,
    LogTransform,
    convolve,
    next_pow2,
    quantile,
    to_log_transform,
    transform_quantile,
)
from .errors import Infeasible
from .scenario import GridConfig, ProblemInstance, run_loss_delta_pdf, switch_loss_pdf

_EPS = 1e-9
EDGE_COSTS = ("full", "sqrt-compute")


@dataclass(frozen=True)
class PlannerConfig:
    eta: int = 200
    labels_per_vertex: int = 4
    per_edge_quantile_mode: bool = False
    switch_surcharge: float = 0.0
    statistic: str = "quantile"  # "mean" gives the expected-loss planner
    edge_cost: str = "full"  # "full" | "sqrt-compute"

    @classmethod
    def from_instance(cls, inst: ProblemInstance, **overrides) -> "PlannerConfig":
        kw = {}
        for key in ("eta", "labels_per_vertex", "per_edge_quantile_mode", "switch_surcharge", "edge_cost"):
            if key in inst.config:
                kw[key] = inst.config[key]
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def __post_init__(self):
        if self.eta < 2:
            raise ValueError("eta must be at least 2")
        if self.labels_per_vertex < 1:
            raise ValueError("labels_per_vertex must be positive")
        if self.statistic not in ("quantile", "mean"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if self.edge_cost not in EDGE_COSTS:
            raise ValueError(f"unknown edge_cost {self.edge_cost!r}")


@dataclass(frozen=True)
class ProbeCluster:
    """Least restrictive cluster assumed while planning."""

    cost_cluster: str  # most capable real cluster (largest r), priced per epoch
    r: float
    b: float
    kappa: float


def probe_cluster(inst: ProblemInstance) -> ProbeCluster:
    best = min(inst.clusters, key=lambda c: (-c.r, c.kappa, c.id))
    return ProbeCluster(best.id, best.r, max(c.b for c in inst.clusters), best.kappa)


def epoch_edge_weight(m: str, m_prev: str, k: int, inst: ProblemInstance,
                      probe: ProbeCluster | None = None, switch_surcharge: float = 0.0,
                      edge_cost: str = "full") -> float:
    """Planning cost of running epoch ``k`` of model ``m`` after ``m_prev``.

    ``full``: the probe cluster's full capacity priced at its kappa.
    ``sqrt-compute``: that price scaled by sqrt(c_m / c_max). With a fixed
    cluster and time budget the optimal allocation costs
    kappa * (sum_k sqrt(c_k))**2 / budget, so summing these weights ranks
    schedules the way the final allocation will price them.
    """
    probe = probe or probe_cluster(inst)
    w = probe.kappa * probe.r
    if edge_cost == "sqrt-compute":
        heaviest = max(v.compute_per_sample for v in inst.models)
        w *= math.sqrt(inst.model(m).compute_per_sample / heaviest)
    if m != m_prev:
        w += switch_surcharge
    return w


# ---------------------------------------------------------------------------
# Components of the cumulative loss change
# ---------------------------------------------------------------------------

class _Components:
    """Registry of per-epoch loss-change pdfs and their transforms."""

    def __init__(self, inst: ProblemInstance, grid: GridConfig):
        self.inst = inst
        self.grid = grid
        self.pdfs: dict[tuple, DiscretePdf] = {}
        self.means: dict[tuple, float] = {}
        self._logt: dict[tuple[tuple, int], np.ndarray] = {}

    def run(self, m: str, k: int) -> tuple:
        mv = self.inst.model(m)
        cid = ("run", m, 0 if mv.stationary else k)
        if cid not in self.pdfs:
            self._add(cid, run_loss_delta_pdf(mv, k, self.grid))
        return cid

    def switch(self, prev: str, m: str) -> tuple:
        cid = ("sw", prev, m)
        if cid not in self.pdfs:
            self._add(cid, switch_loss_pdf(self.inst.model(m), prev, self.grid).trimmed())
        return cid

    def _add(self, cid, pdf):
        self.pdfs[cid] = pdf
        self.means[cid] = pdf.mean()

    def log_values(self, cid, n_fft: int) -> np.ndarray:
        key = (cid, n_fft)
        if key not in self._logt:
            self._logt[key] = to_log_transform(self.pdfs[cid], n_fft).values
        return self._logt[key]

    def length(self, key) -> int:
        return 1 + sum(c * (len(self.pdfs[cid]) - 1) for cid, c in key)

    def transform(self, key, offset: float = 0.0) -> LogTransform:
        """Log-transform of the sum described by ``key`` (shifted by ``offset``)."""
        length = self.length(key)
        n = next_pow2(length)
        values = np.zeros(n // 2 + 1, dtype=complex)
        x_min = offset
        for cid, c in key:
            values += c * self.log_values(cid, n)
            x_min += c * self.pdfs[cid].x_min
        return LogTransform(values, n, x_min, self.grid.step, length)

    def mean(self, key) -> float:
        return sum(c * self.means[cid] for cid, c in key)


def _add_key(key: tuple, *cids) -> tuple:
    d = dict(key)
    for cid in cids:
        d[cid] = d.get(cid, 0) + 1
    return tuple(sorted(d.items()))


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------

@dataclass
class Label:
    model: str
    k: int
    i: int
    j: int
    cost: float
    key: tuple
    value: float  # omega-quantile (or mean) of the cumulative loss
    load: float = 0.0  # sum of sqrt(compute) over epochs, the tie-break on cost
    parent: "Label | None" = field(default=None, repr=False)

    @property
    def rank(self) -> tuple[float, float]:
        return (round(self.cost, 9), round(self.load, 9))

    @property
    def vertex(self) -> tuple:
        return (self.model, self.k, self.i, self.j)

    def schedule(self) -> tuple[str, ...]:
        out = []
        node = self
        while node is not None and node.k > 0:
            out.append(node.model)
            node = node.parent
        return tuple(reversed(out))


class ExpandedGraph:
    """Implicit expanded graph; edges are generated per search label."""

    def __init__(self, inst: ProblemInstance, selected_datasets: Sequence[str],
                 config: PlannerConfig, grid: GridConfig | None = None):
        if not selected_datasets:
            raise ValueError("selected_datasets must be non-empty")
        self.inst = inst
        self.selected = tuple(sorted(selected_datasets))
        self.config = config
        self.eta = config.eta
        self.grid = grid or inst.grid()
        self.probe = probe_cluster(inst)
        self.data_size = inst.data_size(self.selected)
        self.comp = _Components(inst, self.grid)
        self.duration = {}
        self.time_steps = {}
        for m in inst.models:
            d = m.compute_per_sample * self.data_size / self.probe.r + m.s / self.probe.b
            self.duration[m.id] = d
            self.time_steps[m.id] = max(0, math.ceil(d * self.eta / inst.T_max - _EPS))
        self.sqrt_compute = {m.id: math.sqrt(m.compute_per_sample * self.data_size) for m in inst.models}
        self._value_cache: dict[tuple, float] = {}
        self._edge_q: dict[tuple, float] = {}

    # -- structure -------------------------------------------------------
    def vertex_count(self) -> int:
        return len(self.inst.models) * self.inst.K_max * self.eta ** 2 + 1

    def allowed(self, m_prev: str, m: str) -> bool:
        return m == m_prev or self.inst.model(m).switch_dist(m_prev) is not None

    def successors(self, m_prev: str) -> list[str]:
        return [m.id for m in self.inst.models if self.allowed(m_prev, m.id)]

    def loss_level(self, j: int) -> float:
        return j / self.eta * self.inst.ell0

    def loss_index(self, value: float) -> int:
        return max(1, math.ceil(value * self.eta / self.inst.ell0 - _EPS))

    def is_terminal(self, label: Label) -> bool:
        """Sink test. Uses the label's own statistic, which never exceeds its
        vertex level, so a target between two levels is not rounded away."""
        return label.k >= 1 and label.i <= self.eta and label.value <= self.inst.ell_max + 1e-12

    def weight(self, m: str, m_prev: str, k: int) -> float:
        return epoch_edge_weight(m, m_prev, k, self.inst, self.probe, self.config.switch_surcharge,
                                 self.config.edge_cost)

    def start(self) -> Label:
        return Label(self.inst.initial_model, 0, 0, self.eta, 0.0, (), self.inst.ell0)

    # -- statistics ------------------------------------------------------
    def value_of(self, key: tuple) -> float:
        """omega-quantile (or mean) of ell0 plus the sum described by ``key``."""
        if key not in self._value_cache:
            if self.config.statistic == "mean":
                v = self.inst.ell0 + self.comp.mean(key)
            else:
                v = transform_quantile(self.comp.transform(key, self.inst.ell0), self.inst.omega)
            self._value_cache[key] = v
        return self._value_cache[key]

    def _edge_value(self, m_prev: str, m: str, k: int, cids) -> float:
        ck = (m_prev, m, k)
        if ck not in self._edge_q:
            key = _add_key((), *cids)
            if self.config.statistic == "mean":
                self._edge_q[ck] = self.comp.mean(key)
            else:
                self._edge_q[ck] = transform_quantile(self.comp.transform(key), self.inst.omega)
        return self._edge_q[ck]

    def extend(self, label: Label, m: str) -> Label | None:
        """Successor label at the tightest reachable vertex, or None."""
        if not self.allowed(label.model, m) or label.k >= self.inst.K_max:
            return None
        i = label.i + self.time_steps[m]
        if i > self.eta:
            return None
        k = label.k + 1
        cids = [self.comp.run(m, k)]
        if m != label.model:
            cids.append(self.comp.switch(label.model, m))
        key = _add_key(label.key, *cids)
        if self.config.per_edge_quantile_mode:
            value = self.loss_level(label.j) + self._edge_value(label.model, m, k, cids)
        else:
            value = self.value_of(key)
        # a switch can lift the loss above ell0; such labels share the top
        # level and keep their exact statistic
        j = min(self.loss_index(value), self.eta)
        return Label(m, k, i, j, label.cost + self.weight(m, label.model, k), key, value,
                     label.load + self.sqrt_compute[m], label)

    def exact_pdf(self, schedule: Sequence[str]) -> DiscretePdf:
        """Loss pdf after ``schedule`` by direct convolution of its components."""
        return schedule_loss_pdf(self.inst, schedule, self.grid, self.comp)


def build_graph(inst: ProblemInstance, selected_datasets: Sequence[str], eta: int | None = None,
                config: PlannerConfig | None = None) -> ExpandedGraph:
    """Expanded graph under the most-capable-cluster, full-resource probe."""
    config = config or PlannerConfig.from_instance(inst)
    if eta is not None and eta != config.eta:
        config = PlannerConfig(**{**config.__dict__, "eta": eta})
    return ExpandedGraph(inst, selected_datasets, config)


def schedule_loss_pdf(inst: ProblemInstance, schedule: Sequence[str], grid: GridConfig | None = None,
                      comp: _Components | None = None) -> DiscretePdf:
    grid = grid or inst.grid()
    comp = comp or _Components(inst, grid)
    out = DiscretePdf.point(inst.ell0, grid.step)
    prev = inst.initial_model
    for k, m in enumerate(schedule, start=1):
        out = convolve(out, comp.pdfs[comp.run(m, k)])
        if m != prev:
            out = convolve(out, comp.pdfs[comp.switch(prev, m)])
        prev = m
    return out


def count_switches(schedule: Sequence[str], initial: str | None = None) -> int:
    """Model changes within the schedule (the move away from ``initial`` is not counted)."""
    return sum(1 for a, b in zip(schedule, schedule[1:]) if a != b)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanFragment:
    schedule: tuple[str, ...]
    cost: float
    predicted_pdf: DiscretePdf
    time_index: int
    loss_index: int
    labels_expanded: int = 0


def _prune(labels: list[Label], L: int, eta: int) -> list[Label]:
    """Label-dominance pruning within each model layer.

    A label is dropped when another label of the same model has no later time
    index, no higher (cost, load) rank and no higher loss statistic; at most L
    labels survive per vertex.
    """
    # identical futures: keep the best label per (model, time, components)
    best_by_key: dict[tuple, Label] = {}
    for lab in labels:
        sk = (lab.model, lab.i, lab.key)
        cur = best_by_key.get(sk)
        if cur is None or (lab.rank, lab.schedule()) < (cur.rank, cur.schedule()):
            best_by_key[sk] = lab
    by_model: dict[str, list[Label]] = {}
    for lab in best_by_key.values():
        by_model.setdefault(lab.model, []).append(lab)
    kept: list[Label] = []
    for model in sorted(by_model):
        group = sorted(by_model[model], key=lambda a: (a.rank, a.i, a.value, a.schedule()))
        # best_value[i]: lowest statistic among accepted labels with time index <= i
        best_value = np.full(eta + 1, np.inf)
        per_vertex: dict[tuple, int] = {}
        for lab in group:
            if best_value[lab.i] <= lab.value + 1e-12:
                continue
            vk = (lab.i, lab.j)
            if per_vertex.get(vk, 0) >= L:
                continue
            per_vertex[vk] = per_vertex.get(vk, 0) + 1
            kept.append(lab)
            np.minimum(best_value[lab.i:], lab.value, out=best_value[lab.i:])
    return kept


def shortest_feasible_path(graph: ExpandedGraph, inst: ProblemInstance | None = None,
                           omega: float | None = None, blacklist: Iterable = ()) -> PlanFragment:
    """Minimum-cost label reaching the sink; raises Infeasible if none.

    ``blacklist`` holds schedules (model-id tuples) that must not be returned.
    The returned pdf is recomputed by direct convolution of the schedule's own
    loss-change components and re-checked against the target.
    """
    inst = inst or graph.inst
    if omega is not None and abs(omega - inst.omega) > 0:
        raise ValueError("omega must match the instance the graph was built for")
    banned = {tuple(b) for b in blacklist}
    cfg = graph.config
    frontier = [graph.start()]
    terminals: list[Label] = []
    best = (math.inf, math.inf)
    expanded = 0
    for _ in range(inst.K_max):
        nxt = []
        for lab in frontier:
            if lab.rank > best:
                continue
            for m in graph.successors(lab.model):
                child = graph.extend(lab, m)
                expanded += 1
                if child is None or child.rank > best:
                    continue
                if graph.is_terminal(child):
                    if child.schedule() not in banned:
                        terminals.append(child)
                        best = min(best, child.rank)
                        continue
                nxt.append(child)
        if not nxt:
            break
        frontier = _prune(nxt, cfg.labels_per_vertex, graph.eta)
    terminals.sort(key=lambda t: (t.rank, t.k, t.value, t.schedule()))
    for t in terminals:
        sched = t.schedule()
        pdf = graph.exact_pdf(sched)
        if cfg.statistic == "quantile" and quantile(pdf, inst.omega) > inst.ell_max + 1e-12:
            continue
        return PlanFragment(sched, t.cost, pdf, t.i, t.j, expanded)
    raise Infeasible("no schedule reaches the loss target within T_max and K_max")


def plan_models(inst: ProblemInstance, selected_datasets: Sequence[str], config: PlannerConfig | None = None,
                blacklist: Iterable = ()) -> PlanFragment:
    graph = build_graph(inst, selected_datasets, config=config)
    return shortest_feasible_path(graph, inst, blacklist=blacklist)
