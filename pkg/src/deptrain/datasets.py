"""Dataset selection: minimize estimated epochs x epoch duration over subsets.

The estimated epoch count falls logarithmically with the amount of data and
the per-epoch duration grows linearly, so their product is (typically)
submodular in the selected set. Because the objective depends on a subset
only through its total size, every subset of up to 20 datasets can be scored
at once with a vectorized subset-sum table.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySelection, Exhausted, TooLarge

EXACT_LIMIT = 12
CERTIFY_LIMIT = 20
_TIE = 1e-12


@dataclass(frozen=True)
class DataLawParams:
    k0: float = 50.0
    k_log: float = 5.0
    t0: float = 1.0
    t_lin: float = 0.01

    def __post_init__(self):
        if not self.k0 > 0:
            raise ValueError(f"k0 must be > 0, got {self.k0}")
        if self.k_log < 0:
            raise ValueError(f"k_log must be >= 0, got {self.k_log}")
        if self.t0 < 0:
            raise ValueError(f"t0 must be >= 0, got {self.t0}")
        if self.t_lin < 0:
            raise ValueError(f"t_lin must be >= 0, got {self.t_lin}")


def _sizes(S) -> list[float]:
    return [d if isinstance(d, (int, float)) else d.size for d in S]


def khat_of_size(total, p: DataLawParams):
    return np.maximum(1.0, p.k0 - p.k_log * np.log1p(total))


def that_of_size(total, p: DataLawParams):
    return p.t0 + p.t_lin * np.asarray(total, dtype=float)


def objective_of_size(total, p: DataLawParams):
    return khat_of_size(total, p) * that_of_size(total, p)


def _total(S) -> float:
    S = list(S)
    if not S:
        raise EmptySelection("dataset selection must be non-empty")
    return float(sum(_sizes(S)))


def khat(S, p: DataLawParams) -> float:
    """Estimated number of epochs to converge with the datasets in ``S``."""
    return float(khat_of_size(_total(S), p))


def that(S, p: DataLawParams) -> float:
    """Estimated duration of one epoch with the datasets in ``S``."""
    return float(that_of_size(_total(S), p))


def objective(S, p: DataLawParams) -> float:
    return float(objective_of_size(_total(S), p))


@dataclass(frozen=True)
class SubmodularityReport:
    ok: bool
    witness: tuple | None = None  # (A, B, d) with A ⊆ B, d ∉ B
    gap: float = 0.0

    def __bool__(self) -> bool:
        return self.ok


def check_submodular(p: DataLawParams, datasets: Sequence, tol: float = 1e-9) -> SubmodularityReport:
    """Exhaustively test diminishing returns f(A+d)-f(A) >= f(B+d)-f(B).

    ``A`` ranges over non-empty sets (the objective is undefined on the empty
    set). ``datasets`` are objects with ``id`` and ``size`` or bare sizes.
    """
    items = list(datasets)
    n = len(items)
    if n > EXACT_LIMIT:
        raise TooLarge(f"exhaustive submodularity check limited to {EXACT_LIMIT} datasets, got {n}")
    sizes = np.array(_sizes(items), dtype=float)
    f = objective_of_size(_subset_totals(sizes), p)
    masks = np.arange(1 << n)
    # single-element steps A -> A+{i} suffice: longer chains telescope
    for j in range(n):
        bj = 1 << j
        for i in range(n):
            bi = 1 << i
            if i == j:
                continue
            A = masks[(masks != 0) & ((masks & bj) == 0) & ((masks & bi) == 0)]
            lhs = f[A | bj] - f[A]
            rhs = f[A | bi | bj] - f[A | bi]
            bad = lhs < rhs - tol * np.maximum(1.0, np.abs(rhs))
            if bad.any():
                k = int(np.argmax(bad))
                a = int(A[k])
                return SubmodularityReport(False, (_ids(items, a), _ids(items, a | bi), _ids(items, bj)[0]),
                                           float(rhs[k] - lhs[k]))
    return SubmodularityReport(True)


def _ids(items, mask) -> tuple:
    return tuple(getattr(items[j], "id", j) for j in range(len(items)) if mask >> j & 1)


def _subset_totals(sizes: np.ndarray) -> np.ndarray:
    totals = np.zeros(1)
    for s in sizes:
        totals = np.concatenate([totals, totals + s])
    return totals


def _rank_key(ids: tuple[str, ...]):
    return (len(ids), tuple(sorted(ids)))


def select_datasets(inst, p: DataLawParams | None = None, blacklist: Iterable = ()) -> tuple[str, ...]:
    """Non-blacklisted, non-empty subset of ``inst.datasets`` with minimum objective.

    Ties are broken by smaller cardinality, then by the sorted id tuple.
    Returns the chosen ids sorted.
    """
    p = p or inst.data_law or DataLawParams()
    items = sorted(inst.datasets, key=lambda d: d.id)
    banned = {tuple(sorted(b)) for b in blacklist}
    n = len(items)
    if n <= CERTIFY_LIMIT:
        return _select_table(items, p, banned)
    warnings.warn(f"{n} datasets: using local search without an optimality certificate", stacklevel=2)
    best = _local_search(items, p, banned)
    if best is None:
        raise Exhausted("every dataset subset is blacklisted")
    return best


def _select_table(items, p, banned) -> tuple[str, ...]:
    n = len(items)
    sizes = np.array([d.size for d in items], dtype=float)
    totals = _subset_totals(sizes)
    f = objective_of_size(totals, p)
    f[0] = np.inf
    ids = [d.id for d in items]
    for b in banned:
        mask = 0
        for did in b:
            if did in ids:
                mask |= 1 << ids.index(did)
            else:
                mask = -1
                break
        if mask > 0:
            f[mask] = np.inf
    fmin = f.min()
    if not np.isfinite(fmin):
        raise Exhausted("every dataset subset is blacklisted")
    near = np.nonzero(f <= fmin + _TIE * max(1.0, abs(fmin)))[0]
    candidates = [tuple(ids[j] for j in range(n) if m >> j & 1) for m in near]
    return min(candidates, key=_rank_key)


def _local_search(items, p, banned):
    """Add/remove/swap descent from the best singleton."""
    ids = [d.id for d in items]
    size = {d.id: d.size for d in items}

    def score(S):
        key = tuple(sorted(S))
        if not key or key in banned:
            return math.inf
        return float(objective_of_size(sum(size[i] for i in key), p))

    current = min((frozenset([i]) for i in ids), key=lambda S: (score(S), _rank_key(tuple(sorted(S)))))
    if not math.isfinite(score(current)):
        pairs = (frozenset(c) for r in range(2, len(ids) + 1) for c in itertools.combinations(ids, r))
        current = next((S for S in pairs if math.isfinite(score(S))), None)
        if current is None:
            return None
    improved = True
    while improved:
        improved = False
        moves = [current | {i} for i in ids if i not in current]
        moves += [current - {i} for i in current if len(current) > 1]
        moves += [(current - {i}) | {j} for i in current for j in ids if j not in current]
        best = min(moves, key=lambda S: (score(S), _rank_key(tuple(sorted(S)))), default=None)
        if best is not None and score(best) < score(current) - _TIE:
            current, improved = best, True
    return tuple(sorted(current))
