"""Monte Carlo simulation of the loss recursion under a fixed plan."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .scenario import Plan, ProblemInstance, schedule_times


def empirical_quantile(samples, omega: float) -> float:
    """Smallest sample whose empirical CDF reaches ``omega``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    if not 0 < omega < 1:
        raise ValueError(f"omega must lie in (0, 1), got {omega}")
    return float(x[_order_index(x.size, omega)])


def _order_index(n: int, omega: float) -> int:
    return min(max(math.ceil(omega * n - 1e-9) - 1, 0), n - 1)


def quantile_interval(samples, omega: float, level: float = 0.99) -> tuple[float, float]:
    """Distribution-free interval for the omega-quantile from order statistics.

    The number of samples below the true quantile is Binomial(n, omega); the
    interval spans the order statistics at that law's tail quantiles.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    alpha = (1.0 - level) / 2.0
    lo = int(stats.binom.ppf(alpha, n, omega))
    hi = int(stats.binom.ppf(1.0 - alpha, n, omega)) + 1
    return float(x[min(max(lo - 1, 0), n - 1)]), float(x[min(max(hi - 1, 0), n - 1)])


def half_width(samples, omega: float, level: float = 0.99) -> float:
    lo, hi = quantile_interval(samples, omega, level)
    return (hi - lo) / 2.0


def standard_error(samples, omega: float) -> float:
    """Half the spread between the order statistics one binomial sd around the quantile."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    k = _order_index(n, omega)
    sd = math.sqrt(n * omega * (1 - omega))
    lo = min(max(int(math.floor(k - sd)), 0), n - 1)
    hi = min(max(int(math.ceil(k + sd)), 0), n - 1)
    return float(x[hi] - x[lo]) / 2.0


@dataclass(frozen=True)
class TrajectorySet:
    losses: np.ndarray  # runs x (K + 1), column 0 is the initial loss
    models: tuple[str, ...]
    durations: tuple[float, ...]
    costs: tuple[float, ...]
    seed: int

    @property
    def runs(self) -> int:
        return self.losses.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.losses[:, -1]

    def empirical_quantile(self, omega: float) -> float:
        return empirical_quantile(self.final, omega)

    def half_width(self, omega: float, level: float = 0.99) -> float:
        return half_width(self.final, omega, level)

    def standard_error(self, omega: float) -> float:
        return standard_error(self.final, omega)

    def mean_final(self) -> float:
        return float(self.final.mean())

    def bands(self, lower: float = 0.01, upper: float = 0.99) -> np.ndarray:
        """Per-epoch (lower, median, upper) order-statistic percentiles, shape (K+1, 3)."""
        s = np.sort(self.losses, axis=0)
        n = self.runs
        idx = [_order_index(n, p) for p in (lower, 0.5, upper)]
        return s[idx, :].T.copy()

    def write_csv(self, path: str | Path) -> None:
        """One row per run and epoch: run_id, epoch, model_id, loss, duration, cost."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", "epoch", "model_id", "loss", "duration", "cost"])
            for r in range(self.runs):
                row = self.losses[r]
                w.writerow([r, 0, "", repr(float(row[0])), "0.0", "0.0"])
                for k, m in enumerate(self.models, start=1):
                    w.writerow([r, k, m, repr(float(row[k])), repr(self.durations[k - 1]),
                                repr(self.costs[k - 1])])

    def write_bands(self, path: str | Path, lower: float = 0.01, upper: float = 0.99) -> None:
        b = self.bands(lower, upper)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "model_id", "p_low", "median", "p_high", "mean"])
            means = self.losses.mean(axis=0)
            for k in range(b.shape[0]):
                model = self.models[k - 1] if k > 0 else ""
                w.writerow([k, model, *(repr(float(v)) for v in b[k]), repr(float(means[k]))])


def simulate(plan: Plan | Sequence[str], inst: ProblemInstance, runs: int, seed: int = 0) -> TrajectorySet:
    """Sample ``runs`` loss trajectories of ``plan`` (or a bare model schedule).

    Run ``r`` draws from its own generator seeded with ``(seed, r)``, so any
    subset of runs can be reproduced independently.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if isinstance(plan, Plan):
        models = plan.models
        durations = tuple(float(t) for t in schedule_times(plan, inst))
        costs = tuple(float(inst.cluster(e.cluster).kappa * e.x) for e in plan.schedule)
    else:
        models = tuple(plan)
        durations = tuple(math.nan for _ in models)
        costs = tuple(math.nan for _ in models)
    K = len(models)
    if K == 0:
        raise ValueError("plan has no epochs")
    variants = {m: inst.model(m) for m in set(models)}
    scale = np.array([variants[m].improvement_scale(k) for k, m in enumerate(models, start=1)])
    by_model = {m: np.array([k for k, mm in enumerate(models) if mm == m]) for m in sorted(variants)}
    prev = (inst.initial_model,) + models[:-1]
    switch_at: dict[tuple[str, str], list[int]] = {}
    for k, (a, b) in enumerate(zip(prev, models)):
        if a != b:
            switch_at.setdefault((a, b), []).append(k)
    switch_laws = {}
    for (a, b), ks in sorted(switch_at.items()):
        law = variants[b].switch_dist(a)
        if law is None:
            raise ValueError(f"schedule switches from {a!r} to {b!r}, which is forbidden")
        switch_laws[(a, b)] = (law, np.array(ks))

    losses = np.empty((runs, K + 1))
    losses[:, 0] = inst.ell0
    deltas = np.empty(K)
    for r in range(runs):
        rng = np.random.default_rng([seed, r])
        for m, ks in by_model.items():
            deltas[ks] = -scale[ks] * variants[m].X.rvs(rng, ks.size)
        for law, ks in switch_laws.values():
            deltas[ks] += law.rvs(rng, ks.size)
        losses[r, 1:] = inst.ell0 + np.cumsum(deltas)
    losses.setflags(write=False)
    return TrajectorySet(losses, models, durations, costs, seed)
