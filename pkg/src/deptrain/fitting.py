"""Estimating the stochastic loss model from observed training traces.

Run-loss traces give the improvement law: A and B by least squares on the
mean per-epoch improvement, then the unit-mean multiplier X from the
normalized per-epoch improvements. Switch-loss samples are fitted per model
pair. Every fit is scored with a Kolmogorov-Smirnov test.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import optimize, special, stats

from .dist import InverseGamma, Normal, ParametricDist, StudentT
from .errors import DegenerateTrace, FitDiverged, InsufficientSamples

MIN_SAMPLES = 20
B_GRID = np.concatenate([[0.0], np.logspace(-3, 3, 199)])
FAMILIES = ("InverseGamma", "StudentT", "Normal")


# ---------------------------------------------------------------------------
# Improvement law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InverseSqrtFit:
    A: float
    B: float
    rss: float
    epochs: np.ndarray = field(repr=False)
    mean_improvement: np.ndarray = field(repr=False)

    def predict(self, k) -> np.ndarray:
        return self.A / np.sqrt(np.asarray(k, dtype=float) + self.B)


def traces_to_matrix(traces) -> np.ndarray:
    """Loss traces as a runs x (K + 1) array.

    Accepts an array, a mapping run_id -> sequence of losses (epoch 0 first),
    or an iterable of (run_id, epoch, loss) records.
    """
    if isinstance(traces, np.ndarray):
        arr = np.atleast_2d(np.asarray(traces, dtype=float))
    elif isinstance(traces, Mapping):
        rows = [np.asarray(traces[k], dtype=float) for k in sorted(traces)]
        if len({r.size for r in rows}) != 1:
            raise ValueError("all traces must cover the same epochs")
        arr = np.vstack(rows)
    else:
        by_run: dict = {}
        for run, epoch, loss in traces:
            by_run.setdefault(run, {})[int(epoch)] = float(loss)
        if not by_run:
            raise ValueError("no trace records")
        epochs = sorted(next(iter(by_run.values())))
        rows = []
        for run in sorted(by_run):
            if sorted(by_run[run]) != epochs:
                raise ValueError(f"run {run!r} covers different epochs")
            rows.append([by_run[run][e] for e in epochs])
        arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("traces contain non-finite losses")
    return arr


def _mean_improvements(arr: np.ndarray, epochs=None) -> tuple[np.ndarray, np.ndarray]:
    d = -np.diff(arr, axis=1)
    k = np.arange(1, d.shape[1] + 1)
    if epochs is not None:
        k = np.asarray(sorted(set(int(e) for e in epochs)), dtype=int)
        if k.size and (k[0] < 1 or k[-1] > d.shape[1]):
            raise ValueError(f"epochs must lie in 1..{d.shape[1]}")
        d = d[:, k - 1]
    return k.astype(float), d


def fit_inverse_sqrt(traces, epochs=None) -> InverseSqrtFit:
    """Least-squares (A, B) for mean improvement A / sqrt(k + B), B in [0, 1e3].

    ``epochs`` restricts the fit to the improvements of those (1-based) epochs.
    """
    k, d = _mean_improvements(traces_to_matrix(traces), epochs)
    if k.size < 3:
        raise DegenerateTrace("need at least 3 epochs after the initial loss")
    d = d.mean(axis=0)
    if np.max(np.abs(d)) < 1e-12:
        raise DegenerateTrace("loss improvements are all zero")
    if d.mean() <= 0:
        raise DegenerateTrace("loss does not improve on average")

    def rss(B):
        g = 1.0 / np.sqrt(k + B)
        a = float(np.dot(d, g) / np.dot(g, g))
        return float(np.sum((d - a * g) ** 2)), a

    scores = np.array([rss(B)[0] for B in B_GRID])
    i = int(np.argmin(scores))
    lo = B_GRID[max(i - 1, 0)]
    hi = B_GRID[min(i + 1, B_GRID.size - 1)]
    B, best = B_GRID[i], scores[i]
    if hi > lo:
        res = optimize.minimize_scalar(lambda b: rss(b)[0], bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10 * max(1.0, hi)})
        if res.fun < best:
            B, best = float(res.x), float(res.fun)
    err, A = rss(B)
    return InverseSqrtFit(A, float(B), err, k, d)


def normalized_improvements(traces, fit: InverseSqrtFit) -> np.ndarray:
    """Improvements at the fitted epochs divided by the fitted scale: samples of X."""
    k, d = _mean_improvements(traces_to_matrix(traces), fit.epochs)
    return (d / fit.predict(k)).ravel()


# ---------------------------------------------------------------------------
# Distribution fitting
# ---------------------------------------------------------------------------

def _clean(samples) -> np.ndarray:
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < MIN_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise FitDiverged("samples contain non-finite values")
    return x


def fit_distribution(samples, family: str) -> ParametricDist:
    """Moment-initialized maximum-likelihood fit of ``family`` to ``samples``."""
    x = _clean(samples)
    if family == "Normal":
        return Normal(float(x.mean()), float(x.std()))
    if family == "InverseGamma":
        return _fit_inverse_gamma(x)
    if family == "StudentT":
        return _fit_student_t(x)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _fit_inverse_gamma(x: np.ndarray) -> InverseGamma:
    if x[0] <= 0:
        raise FitDiverged("Inverse-Gamma needs strictly positive samples")
    m, v = float(x.mean()), float(x.var())
    if v <= 0:
        raise FitDiverged("samples have zero variance")
    a0 = m * m / v + 2.0
    b0 = m * (a0 - 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a, _, b = stats.invgamma.fit(x, a0, floc=0.0, scale=b0)
    if not (np.isfinite(a) and np.isfinite(b) and a > 0 and b > 0):
        raise FitDiverged(f"Inverse-Gamma fit did not converge (shape={a}, scale={b})")
    return InverseGamma(float(a), float(b))


def _t_init(x: np.ndarray) -> tuple[float, float, float] | None:
    ek = float(stats.kurtosis(x))
    if not np.isfinite(ek) or ek <= 0.05:
        return None
    dof = 4.0 + 6.0 / ek
    scale = float(x.std()) * math.sqrt((dof - 2.0) / dof)
    return dof, float(np.median(x)), scale


def _fit_student_t(x: np.ndarray) -> StudentT:
    if float(x.std()) <= 0:
        raise FitDiverged("samples have zero variance")
    init = _t_init(x)
    candidates = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if init is not None:
            candidates.append(stats.t.fit(x, init[0], loc=init[1], scale=init[2]))
        else:
            # excess kurtosis is unusable: profile the likelihood over dof
            for dof in (1.5, 2.5, 4.0, 8.0, 30.0):
                candidates.append(stats.t.fit(x, dof, loc=float(np.median(x)), scale=float(x.std())))
    best, best_ll = None, -math.inf
    for dof, loc, scale in candidates:
        if not (np.isfinite(dof) and np.isfinite(loc) and np.isfinite(scale) and dof > 0 and scale > 0):
            continue
        ll = float(np.sum(stats.t.logpdf(x, dof, loc, scale)))
        if ll > best_ll:
            best, best_ll = (dof, loc, scale), ll
    if best is None:
        raise FitDiverged("Student-t fit did not converge")
    return StudentT(float(best[0]), float(best[1]), float(best[2]))


# ---------------------------------------------------------------------------
# Goodness of fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KSResult:
    D: float
    p: float
    n: int


def ks_pvalue(D: float, n: int) -> float:
    """Asymptotic Kolmogorov p-value 2 sum_j (-1)^(j-1) exp(-2 j^2 n D^2)."""
    return float(special.kolmogorov(math.sqrt(n) * D))


def ks_test(samples, dist: ParametricDist) -> KSResult:
    """Sup-distance between the empirical CDF and ``dist`` with its asymptotic p-value.

    Parameters estimated from the same samples make p optimistic.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise InsufficientSamples("no samples")
    F = np.asarray(dist.cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - F
    lower = F - np.arange(0, n) / n
    D = float(max(upper.max(), lower.max(), 0.0))
    return KSResult(D, ks_pvalue(D, n), n)


# ---------------------------------------------------------------------------
# CSV ingestion and the combined report
# ---------------------------------------------------------------------------

def read_csv_columns(path: str | Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def _model_epochs(rows) -> dict[str, list[int]]:
    """Per model, the epochs it trained without switching in (shared schedule)."""
    schedule: dict[int, str] = {}
    for row in rows:
        k, m = int(row["epoch"]), row["model_id"]
        if k == 0 or not m:
            continue
        if schedule.setdefault(k, m) != m:
            raise ValueError(f"runs disagree on the model of epoch {k}")
    groups: dict[str, list[int]] = {}
    for k in sorted(schedule):
        if k == 1 or schedule.get(k - 1) == schedule[k]:
            groups.setdefault(schedule[k], []).append(k)
    return groups


def fit_report(path: str | Path) -> dict:
    """Fit a trace CSV; columns decide the kind of data.

    ``run_id, epoch, loss``: improvement law plus an Inverse-Gamma multiplier.
    With a ``model_id`` column each model is fitted on the epochs it trained
    without switching in; the first epoch counts as switch-free.
    ``pair_id, delta``: a Student-t switch-loss law per pair.
    """
    fields, rows = read_csv_columns(path)
    if {"run_id", "epoch", "loss"} <= set(fields):
        arr = traces_to_matrix((r["run_id"], r["epoch"], r["loss"]) for r in rows)
        groups = {"all": None}
        if "model_id" in fields:
            groups = _model_epochs(rows)
        out = {}
        for key in sorted(groups):
            fit = fit_inverse_sqrt(arr, groups[key])
            xs = normalized_improvements(arr, fit)
            dist = fit_distribution(xs, "InverseGamma")
            ks = ks_test(xs, dist)
            out[key] = {"A": fit.A, "B": fit.B, "rss": fit.rss, "X": dist.to_json(),
                        "ks_D": ks.D, "ks_p": ks.p, "n": ks.n}
        return {"kind": "run-loss", "groups": out}
    if {"pair_id", "delta"} <= set(fields):
        groups = {}
        for row in rows:
            groups.setdefault(row["pair_id"], []).append(float(row["delta"]))
        out = {}
        for key in sorted(groups):
            dist = fit_distribution(groups[key], "StudentT")
            ks = ks_test(groups[key], dist)
            out[key] = {"dist": dist.to_json(), "ks_D": ks.D, "ks_p": ks.p, "n": ks.n}
        return {"kind": "switch-loss", "groups": out}
    raise ValueError(f"{path}: expected columns run_id,epoch,loss or pair_id,delta; got {fields}")
