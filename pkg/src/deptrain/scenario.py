"""Scenario data model, epoch timing/cost formulas and scenario JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .datasets import DataLawParams
from .dist import (
    DEFAULT_TAIL,
    Dirac,
    DiscretePdf,
    ParametricDist,
    dist_from_json,
    discretize_step,
    quantile,
)
from .errors import InstanceError, UnknownId, ZeroResource

FORBIDDEN = "forbidden"
_TOL = 1e-9

CONFIG_KEYS = {
    "eta": int,
    "labels_per_vertex": int,
    "per_edge_quantile_mode": bool,
    "switch_surcharge": float,
    "epsilon": float,
    "grid_step": float,
    "max_switches": int,
    "backtrack_budget": int,
    "edge_cost": str,
}


@dataclass(frozen=True)
class Cluster:
    id: str
    r: float
    b: float
    kappa: float


@dataclass(frozen=True)
class Dataset:
    id: str
    size: float
    beta: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelVariant:
    id: str
    s: float
    A: float
    B: float
    X: ParametricDist
    compute_per_sample: float
    switch_from: Mapping[str, ParametricDist | None] = field(default_factory=dict)
    stationary: bool = False

    def switch_dist(self, prev: str) -> ParametricDist | None:
        """Law of the loss jump when arriving from ``prev``; None if forbidden."""
        if prev == self.id:
            return Dirac(0.0)
        return self.switch_from.get(prev)

    def improvement_scale(self, k: int) -> float:
        """Expected-improvement magnitude multiplying X at epoch ``k``."""
        if k < 1:
            raise ValueError("epochs are numbered from 1")
        if self.stationary:
            return self.A
        return self.A / math.sqrt(k + self.B)


@dataclass(frozen=True)
class GridConfig:
    step: float = 0.01
    tail: float = DEFAULT_TAIL


@dataclass(frozen=True)
class ProblemInstance:
    clusters: tuple[Cluster, ...]
    datasets: tuple[Dataset, ...]
    models: tuple[ModelVariant, ...]
    ell0: float
    ell_max: float
    omega: float
    T_max: float
    K_max: int
    initial_model: str
    data_law: DataLawParams | None = None
    config: Mapping[str, object] = field(default_factory=dict)

    def cluster(self, cid: str) -> Cluster:
        for c in self.clusters:
            if c.id == cid:
                return c
        raise UnknownId(f"unknown cluster {cid!r}")

    def dataset(self, did: str) -> Dataset:
        for d in self.datasets:
            if d.id == did:
                return d
        raise UnknownId(f"unknown dataset {did!r}")

    def model(self, mid: str) -> ModelVariant:
        for m in self.models:
            if m.id == mid:
                return m
        raise UnknownId(f"unknown model {mid!r}")

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.models)

    def data_size(self, selected) -> float:
        return float(sum(self.dataset(d).size for d in selected))

    def grid(self) -> GridConfig:
        return GridConfig(step=float(self.config.get("grid_step", GridConfig.step)))

    def with_targets(self, **changes) -> "ProblemInstance":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class EpochAssignment:
    model: str
    cluster: str
    x: float


@dataclass(frozen=True)
class Plan:
    selected_datasets: tuple[str, ...]
    schedule: tuple[EpochAssignment, ...]
    predicted_loss_pdf: DiscretePdf | None = None
    predicted_cost: float = math.nan
    predicted_time: float = math.nan
    transfers: frozenset[tuple[str, str]] | None = None

    @property
    def K(self) -> int:
        return len(self.schedule)

    @property
    def models(self) -> tuple[str, ...]:
        return tuple(e.model for e in self.schedule)

    def dataset_transfers(self) -> frozenset[tuple[str, str]]:
        """The (dataset, cluster) transfers; defaults to every selected dataset
        sent to every cluster that trains at least one epoch."""
        if self.transfers is not None:
            return self.transfers
        active = {e.cluster for e in self.schedule}
        return frozenset((d, n) for d in self.selected_datasets for n in active)

    def epochs_per_model(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for m in self.models:
            out[m] = out.get(m, 0) + 1
        return out


@dataclass(frozen=True)
class FeasibilityReport:
    time_ok: bool
    loss_ok: bool
    resource_ok: bool
    dataset_ok: bool
    total_time: float
    loss_quantile: float

    @property
    def ok(self) -> bool:
        return self.time_ok and self.loss_ok and self.resource_ok and self.dataset_ok


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------

def epoch_duration(c_k: float, x: float, s_m: float, b_n: float) -> float:
    """Computation plus model-upload time of one epoch."""
    if x <= 0:
        raise ZeroResource(f"resource level must be positive, got {x}")
    if b_n <= 0:
        raise ValueError(f"bandwidth must be positive, got {b_n}")
    return c_k / x + s_m / b_n


def epoch_compute(inst: ProblemInstance, model_id: str, data_size: float) -> float:
    return inst.model(model_id).compute_per_sample * data_size


def schedule_times(plan: Plan, inst: ProblemInstance) -> list[float]:
    size = inst.data_size(plan.selected_datasets)
    out = []
    for e in plan.schedule:
        m, n = inst.model(e.model), inst.cluster(e.cluster)
        out.append(epoch_duration(m.compute_per_sample * size, e.x, m.s, n.b))
    return out


def plan_cost(plan: Plan, inst: ProblemInstance) -> float:
    """Compute cost of every epoch plus one-time dataset transfer costs."""
    total = 0.0
    for e in plan.schedule:
        inst.model(e.model)
        total += inst.cluster(e.cluster).kappa * e.x
    for d, n in sorted(plan.dataset_transfers()):
        inst.cluster(n)
        beta = inst.dataset(d).beta
        if n not in beta:
            raise UnknownId(f"dataset {d!r} has no transfer cost to cluster {n!r}")
        total += beta[n]
    return total


def check_feasible(plan: Plan, inst: ProblemInstance) -> FeasibilityReport:
    times = schedule_times(plan, inst) if plan.schedule else []
    total_time = float(sum(times))
    time_ok = total_time <= inst.T_max * (1 + _TOL)
    if plan.predicted_loss_pdf is not None:
        q = quantile(plan.predicted_loss_pdf, inst.omega)
    else:
        q = math.inf
    loss_ok = q <= inst.ell_max + 1e-12
    resource_ok = all(e.x <= inst.cluster(e.cluster).r * (1 + _TOL) for e in plan.schedule)
    active = {e.cluster for e in plan.schedule}
    dataset_ok = all(n in active for _, n in plan.dataset_transfers())
    return FeasibilityReport(time_ok, loss_ok, resource_ok, dataset_ok, total_time, q)


def run_loss_delta_pdf(m: ModelVariant, k: int, grid: GridConfig = GridConfig()) -> DiscretePdf:
    """Pdf of the (negative) per-epoch loss change of model ``m`` at epoch ``k``."""
    scale = m.improvement_scale(k)
    return discretize_step(m.X.scaled(-scale), grid.step, grid.tail)


def switch_loss_pdf(m: ModelVariant, prev: str, grid: GridConfig = GridConfig()) -> DiscretePdf:
    d = m.switch_dist(prev)
    if d is None:
        raise ValueError(f"switching from {prev!r} to {m.id!r} is forbidden")
    return discretize_step(d, grid.step, grid.tail)


def default_k_max(inst: ProblemInstance) -> int:
    """Twice the epoch count of the best single model under mean dynamics."""
    return _default_k_max(inst.models, inst.initial_model, inst.ell0, inst.ell_max)


def _default_k_max(models, initial, ell0, ell_max, limit: int = 100_000) -> int:
    best = None
    for m in models:
        sw = m.switch_dist(initial)
        if sw is None:
            continue
        loss = ell0 + (sw.mean if math.isfinite(sw.mean) else 0.0)
        mu_x = m.X.mean if math.isfinite(m.X.mean) else 1.0
        for k in range(1, limit + 1):
            loss -= m.improvement_scale(k) * mu_x
            if loss <= ell_max:
                best = k if best is None else min(best, k)
                break
    if best is None:
        raise InstanceError("targets: no single model reaches ell_max under mean dynamics; set K_max")
    return 2 * best


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------

def _get(obj, key, path, kind=float, required=True, default=None):
    if not isinstance(obj, dict):
        raise InstanceError(f"{path}: expected an object")
    if key not in obj or obj[key] is None:
        if required:
            raise InstanceError(f"{path}.{key}: missing required field")
        return default
    val = obj[key]
    where = f"{path}.{key}"
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise InstanceError(f"{where}: expected a number, got {val!r}")
        val = float(val)
        if not math.isfinite(val):
            raise InstanceError(f"{where}: must be finite")
        return val
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise InstanceError(f"{where}: expected an integer, got {val!r}")
        return val
    if kind is str:
        if not isinstance(val, str) or not val:
            raise InstanceError(f"{where}: expected a non-empty string, got {val!r}")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise InstanceError(f"{where}: expected true/false, got {val!r}")
        return val
    if kind is list:
        if not isinstance(val, list):
            raise InstanceError(f"{where}: expected a list")
        return val
    if kind is dict:
        if not isinstance(val, dict):
            raise InstanceError(f"{where}: expected an object")
        return val
    raise TypeError(kind)


def _positive(val, where, strict=True):
    if (strict and not val > 0) or (not strict and val < 0):
        raise InstanceError(f"{where}: must be {'> 0' if strict else '>= 0'}, got {val}")
    return val


def _dist(obj, where) -> ParametricDist:
    try:
        return dist_from_json(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise InstanceError(f"{where}: {exc}") from None


def parse_instance(data: dict) -> ProblemInstance:
    if not isinstance(data, dict):
        raise InstanceError("scenario: top level must be an object")
    clusters = []
    for i, c in enumerate(_get(data, "clusters", "scenario", list)):
        p = f"clusters[{i}]"
        clusters.append(Cluster(
            id=_get(c, "id", p, str),
            r=_positive(_get(c, "r", p), f"{p}.r"),
            b=_positive(_get(c, "b", p), f"{p}.b"),
            kappa=_positive(_get(c, "kappa", p), f"{p}.kappa", strict=False),
        ))
    if not clusters:
        raise InstanceError("clusters: at least one cluster is required")
    cids = [c.id for c in clusters]
    if len(set(cids)) != len(cids):
        raise InstanceError("clusters: duplicate ids")

    datasets = []
    for i, d in enumerate(_get(data, "datasets", "scenario", list)):
        p = f"datasets[{i}]"
        beta_raw = _get(d, "beta", p, dict, required=False, default={})
        beta = {}
        for cid in cids:
            if cid not in beta_raw:
                raise InstanceError(f"{p}.beta.{cid}: missing transfer cost")
            v = beta_raw[cid]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                raise InstanceError(f"{p}.beta.{cid}: expected a number >= 0, got {v!r}")
            beta[cid] = float(v)
        extra = set(beta_raw) - set(cids)
        if extra:
            raise InstanceError(f"{p}.beta: unknown clusters {sorted(extra)}")
        datasets.append(Dataset(
            id=_get(d, "id", p, str),
            size=_positive(_get(d, "size", p), f"{p}.size"),
            beta=beta,
        ))
    if not datasets:
        raise InstanceError("datasets: at least one dataset is required")
    dids = [d.id for d in datasets]
    if len(set(dids)) != len(dids):
        raise InstanceError("datasets: duplicate ids")

    raw_models = _get(data, "models", "scenario", list)
    if not raw_models:
        raise InstanceError("models: at least one model is required")
    mids = [_get(m, "id", f"models[{i}]", str) for i, m in enumerate(raw_models)]
    if len(set(mids)) != len(mids):
        raise InstanceError("models: duplicate ids")
    models = []
    for i, m in enumerate(raw_models):
        p = f"models[{i}]"
        stationary = _get(m, "stationary", p, bool, required=False, default=False)
        X = _dist(_get(m, "X", p, dict), f"{p}.X")
        mean_x = X.mean
        if math.isfinite(mean_x) and abs(mean_x - 1.0) > 1e-6:
            raise InstanceError(f"{p}.X: multiplier must have unit mean, got {mean_x:.6g}")
        switch = {}
        for src, law in _get(m, "switch_from", p, dict, required=False, default={}).items():
            if src == mids[i]:
                raise InstanceError(f"{p}.switch_from.{src}: a model cannot switch from itself")
            if src not in mids:
                raise InstanceError(f"{p}.switch_from.{src}: unknown model")
            switch[src] = None if law == FORBIDDEN else _dist(law, f"{p}.switch_from.{src}")
        models.append(ModelVariant(
            id=mids[i],
            s=_positive(_get(m, "s", p), f"{p}.s", strict=False),
            A=_positive(_get(m, "A", p), f"{p}.A"),
            B=_positive(_get(m, "B", p, required=not stationary, default=0.0), f"{p}.B", strict=False),
            X=X,
            compute_per_sample=_positive(_get(m, "compute_per_sample", p), f"{p}.compute_per_sample"),
            switch_from=switch,
            stationary=stationary,
        ))

    t = _get(data, "targets", "scenario", dict)
    ell0 = _get(t, "ell0", "targets")
    ell_max = _positive(_get(t, "ell_max", "targets"), "targets.ell_max")
    if not ell_max < ell0:
        raise InstanceError(f"targets.ell_max: must be below ell0={ell0} (got {ell_max}); "
                            "otherwise the empty plan is already optimal")
    omega = _get(t, "omega", "targets")
    if not 0 < omega < 1:
        raise InstanceError(f"targets.omega: must lie in (0, 1), got {omega}")
    T_max = _positive(_get(t, "T_max", "targets"), "targets.T_max")
    initial = _get(t, "initial_model", "targets", str, required=False, default=mids[0])
    if initial not in mids:
        raise InstanceError(f"targets.initial_model: unknown model {initial!r}")
    K_max = _get(t, "K_max", "targets", int, required=False)
    if K_max is None:
        K_max = _default_k_max(models, initial, ell0, ell_max)
    elif K_max < 1:
        raise InstanceError(f"targets.K_max: must be a positive integer, got {K_max}")

    data_law = None
    if "data_law" in data:
        dl = _get(data, "data_law", "scenario", dict)
        try:
            data_law = DataLawParams(
                k0=_get(dl, "k0", "data_law"), k_log=_get(dl, "k_log", "data_law"),
                t0=_get(dl, "t0", "data_law"), t_lin=_get(dl, "t_lin", "data_law"))
        except ValueError as exc:
            raise InstanceError(f"data_law: {exc}") from None

    config = {}
    for key, val in _get(data, "config", "scenario", dict, required=False, default={}).items():
        if key not in CONFIG_KEYS:
            raise InstanceError(f"config.{key}: unknown key; expected one of {sorted(CONFIG_KEYS)}")
        kind = CONFIG_KEYS[key]
        config[key] = _get({key: val}, key, "config", kind)

    return ProblemInstance(
        clusters=tuple(clusters), datasets=tuple(datasets), models=tuple(models),
        ell0=ell0, ell_max=ell_max, omega=omega, T_max=T_max, K_max=K_max,
        initial_model=initial, data_law=data_law, config=config,
    )


def load_instance(path) -> ProblemInstance:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_instance(data)


def instance_to_json(inst: ProblemInstance) -> dict:
    out = {
        "clusters": [{"id": c.id, "r": c.r, "b": c.b, "kappa": c.kappa} for c in inst.clusters],
        "datasets": [{"id": d.id, "size": d.size, "beta": dict(d.beta)} for d in inst.datasets],
        "models": [],
        "targets": {
            "ell0": inst.ell0, "ell_max": inst.ell_max, "omega": inst.omega,
            "T_max": inst.T_max, "K_max": inst.K_max, "initial_model": inst.initial_model,
        },
    }
    for m in inst.models:
        out["models"].append({
            "id": m.id, "s": m.s, "A": m.A, "B": m.B, "stationary": m.stationary,
            "X": m.X.to_json(), "compute_per_sample": m.compute_per_sample,
            "switch_from": {k: (FORBIDDEN if v is None else v.to_json())
                            for k, v in m.switch_from.items()},
        })
    if inst.data_law is not None:
        dl = inst.data_law
        out["data_law"] = {"k0": dl.k0, "k_log": dl.k_log, "t0": dl.t0, "t_lin": dl.t_lin}
    if inst.config:
        out["config"] = dict(inst.config)
    return out


def canonical_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(canonical_json(instance_to_json(inst)))
