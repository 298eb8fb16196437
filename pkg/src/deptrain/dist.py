"""Grid-based probability distributions and the algebra used by the planner.

A :class:`DiscretePdf` stores cell probabilities on a uniform grid. Sums of
independent loss contributions are obtained either by direct convolution
(:func:`convolve`) or in the frequency domain, where every factor is kept as
the logarithm of its discrete Fourier transform so that accumulating a path
is a plain addition (:func:`to_log_transform`, :func:`from_log_sum`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import signal, stats

from .errors import (
    BranchCut,
    GridMismatch,
    GridTooSmall,
    MassEscape,
    NonPositiveRange,
    UndefinedMomentWarning,
)

MASS_TOL = 1e-9
DEFAULT_BINS = 4096
DEFAULT_TAIL = 1e-6
_CDF_TOL = 1e-12


# ---------------------------------------------------------------------------
# Parametric families
# ---------------------------------------------------------------------------

class ParametricDist:
    """Common interface of the parametric families.

    Subclasses expose ``cdf``, ``ppf``, ``logpdf``, ``mean``, ``var`` and
    ``rvs(rng, size)``. Moments that do not exist are returned as ``nan``.
    """

    family: str = ""

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, q):
        raise NotImplementedError

    def logpdf(self, x):
        raise NotImplementedError

    def rvs(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def var(self) -> float:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"family": self.family, "params": self.params()}

    def scaled(self, factor: float) -> "ParametricDist":
        return Scaled(self, float(factor))


@dataclass(frozen=True)
class InverseGamma(ParametricDist):
    shape: float
    scale: float
    family = "InverseGamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"InverseGamma needs shape>0, scale>0, got {self.shape}, {self.scale}")

    @property
    def _frozen(self):
        return stats.invgamma(self.shape, scale=self.scale)

    def cdf(self, x):
        return self._frozen.cdf(x)

    def ppf(self, q):
        return self._frozen.ppf(q)

    def logpdf(self, x):
        return self._frozen.logpdf(x)

    def rvs(self, rng, size=None):
        return self.scale / rng.gamma(self.shape, 1.0, size=size)

    @property
    def mean(self):
        return self.scale / (self.shape - 1) if self.shape > 1 else math.nan

    @property
    def var(self):
        a, b = self.shape, self.scale
        return b * b / ((a - 1) ** 2 * (a - 2)) if a > 2 else math.nan

    def params(self):
        return {"shape": self.shape, "scale": self.scale}

    @classmethod
    def unit_mean(cls, rel_var: float) -> "InverseGamma":
        """Unit-mean member with the given variance (= relative variance)."""
        alpha = 2.0 + 1.0 / rel_var
        return cls(alpha, alpha - 1.0)


@dataclass(frozen=True)
class StudentT(ParametricDist):
    dof: float
    loc: float = 0.0
    scale: float = 1.0
    family = "StudentT"

    def __post_init__(self):
        if not (self.dof > 0 and self.scale > 0):
            raise ValueError(f"StudentT needs dof>0, scale>0, got {self.dof}, {self.scale}")

    @property
    def _frozen(self):
        return stats.t(self.dof, loc=self.loc, scale=self.scale)

    def cdf(self, x):
        return self._frozen.cdf(x)

    def ppf(self, q):
        return self._frozen.ppf(q)

    def logpdf(self, x):
        return self._frozen.logpdf(x)

    def rvs(self, rng, size=None):
        return self.loc + self.scale * rng.standard_t(self.dof, size=size)

    @property
    def mean(self):
        return self.loc if self.dof > 1 else math.nan

    @property
    def var(self):
        return self.scale ** 2 * self.dof / (self.dof - 2) if self.dof > 2 else math.nan

    def params(self):
        return {"dof": self.dof, "loc": self.loc, "scale": self.scale}


@dataclass(frozen=True)
class Normal(ParametricDist):
    mu: float = 0.0
    sigma: float = 1.0
    family = "Normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"Normal needs std>0, got {self.sigma}")

    def cdf(self, x):
        return stats.norm.cdf(x, self.mu, self.sigma)

    def ppf(self, q):
        return stats.norm.ppf(q, self.mu, self.sigma)

    def logpdf(self, x):
        return stats.norm.logpdf(x, self.mu, self.sigma)

    def rvs(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size=size)

    @property
    def mean(self):
        return self.mu

    @property
    def var(self):
        return self.sigma ** 2

    def params(self):
        return {"mean": self.mu, "std": self.sigma}


@dataclass(frozen=True)
class Dirac(ParametricDist):
    value: float = 0.0
    family = "Dirac"

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def ppf(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.value)

    def logpdf(self, x):
        return np.where(np.asarray(x, dtype=float) == self.value, 0.0, -np.inf)

    def rvs(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    @property
    def mean(self):
        return self.value

    @property
    def var(self):
        return 0.0

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class Scaled(ParametricDist):
    """Law of ``factor * X``; a negative factor mirrors the support."""

    base: ParametricDist
    factor: float
    family = "Scaled"

    def __post_init__(self):
        if self.factor == 0:
            raise ValueError("scale factor must be non-zero")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.factor > 0:
            return self.base.cdf(x / self.factor)
        # P(cX <= x) = P(X >= x/c) for c < 0
        return 1.0 - _left_limit_cdf(self.base, x / self.factor)

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        if self.factor > 0:
            return self.factor * self.base.ppf(q)
        return self.factor * self.base.ppf(1.0 - q)

    def logpdf(self, x):
        return self.base.logpdf(np.asarray(x, dtype=float) / self.factor) - math.log(abs(self.factor))

    def rvs(self, rng, size=None):
        return self.factor * self.base.rvs(rng, size)

    @property
    def mean(self):
        return self.factor * self.base.mean

    @property
    def var(self):
        return self.factor ** 2 * self.base.var

    def params(self):
        return {"base": self.base.to_json(), "factor": self.factor}


def _left_limit_cdf(dist: ParametricDist, x):
    # P(X < x); only atoms need care
    if isinstance(dist, Dirac):
        return np.where(np.asarray(x) > dist.value, 1.0, 0.0)
    if isinstance(dist, Scaled):
        return dist.cdf(np.nextafter(x, -np.inf))
    return dist.cdf(x)


_FAMILIES = {
    "InverseGamma": (InverseGamma, ("shape", "scale")),
    "StudentT": (StudentT, ("dof", "loc", "scale")),
    "Normal": (Normal, ("mean", "std")),
    "Dirac": (Dirac, ("value",)),
}

_ALIASES = {
    "alpha": "shape", "beta": "scale", "nu": "dof", "mu": "loc", "s": "scale",
    "sigma": "std", "location": "loc",
}


def dist_from_json(obj) -> ParametricDist:
    """Build a distribution from ``{"family": ..., "params": {...}}``.

    ``params`` may also be a positional list in the order of the table above.
    """
    if not isinstance(obj, dict) or "family" not in obj:
        raise ValueError("distribution must be an object with 'family' and 'params'")
    family = obj["family"]
    if family == "Scaled":
        p = obj.get("params", {})
        return Scaled(dist_from_json(p["base"]), float(p["factor"]))
    if family not in _FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(_FAMILIES)}")
    cls, names = _FAMILIES[family]
    raw = obj.get("params", {})
    if isinstance(raw, (list, tuple)):
        if len(raw) != len(names):
            raise ValueError(f"{family} expects {len(names)} params {names}, got {len(raw)}")
        values = dict(zip(names, raw))
    elif isinstance(raw, dict):
        values = {}
        for k, v in raw.items():
            key = _ALIASES.get(k, k)
            if family == "Normal" and k in ("mu", "mean"):
                key = "mean"
            values[key] = v
        missing = [n for n in names if n not in values]
        if missing:
            raise ValueError(f"{family} missing params {missing}")
    else:
        raise ValueError("params must be an object or a list")
    args = [float(values[n]) for n in names]
    return cls(*args)


# ---------------------------------------------------------------------------
# Discrete pdf on a uniform grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretePdf:
    """Probability masses at the points ``x_min + i * step``."""

    x_min: float
    step: float
    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.ascontiguousarray(self.masses, dtype=np.float64)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("masses must be a non-empty 1-D array")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if np.any(m < 0):
            raise ValueError("masses must be non-negative")
        total = float(m.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {total!r}, expected 1")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "step", float(self.step))

    def __len__(self) -> int:
        return self.masses.size

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.step * np.arange(self.masses.size)

    @property
    def x_max(self) -> float:
        return self.x_min + self.step * (self.masses.size - 1)

    def mean(self) -> float:
        return float(np.dot(self.points, self.masses))

    def var(self) -> float:
        mu = self.mean()
        return float(np.dot((self.points - mu) ** 2, self.masses))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)

    def shift(self, delta: float) -> "DiscretePdf":
        return DiscretePdf(self.x_min + delta, self.step, self.masses)

    def trimmed(self, eps: float = 0.0) -> "DiscretePdf":
        """Drop leading/trailing cells with mass <= eps (mass is renormalized)."""
        nz = np.nonzero(self.masses > eps)[0]
        if nz.size == 0:
            return self
        lo, hi = nz[0], nz[-1] + 1
        if lo == 0 and hi == self.masses.size:
            return self
        m = self.masses[lo:hi]
        return DiscretePdf(self.x_min + lo * self.step, self.step, m / m.sum())

    @classmethod
    def point(cls, value: float, step: float) -> "DiscretePdf":
        return cls(value, step, np.ones(1))


def _normalized(x_min: float, step: float, masses: np.ndarray) -> DiscretePdf:
    masses = np.clip(masses, 0.0, None)
    total = masses.sum()
    if not total > 0:
        raise ValueError("distribution has no mass on the grid")
    return DiscretePdf(x_min, step, masses / total)


def discretize(dist: ParametricDist, x_min: float, x_max: float, bins: int = DEFAULT_BINS) -> DiscretePdf:
    """Cell probabilities of ``dist`` on ``bins`` equal cells spanning [x_min, x_max].

    Each cell is represented by its midpoint. Masses are CDF differences over
    the cell edges, renormalized to the truncated total.
    """
    if not x_min < x_max:
        raise NonPositiveRange(f"x_min={x_min} must be below x_max={x_max}")
    if bins < 2:
        raise ValueError("bins must be at least 2")
    step = (x_max - x_min) / bins
    if isinstance(dist, Dirac):
        if not x_min <= dist.value <= x_max:
            raise MassEscape(f"point mass at {dist.value} lies outside [{x_min}, {x_max}]")
        idx = min(int((dist.value - x_min) // step), bins - 1)
        masses = np.zeros(bins)
        masses[idx] = 1.0
        return DiscretePdf(x_min + 0.5 * step, step, masses)
    edges = x_min + step * np.arange(bins + 1)
    edges[-1] = x_max
    cdf = np.asarray(dist.cdf(edges), dtype=float)
    masses = np.diff(cdf)
    escaped = 1.0 - float(masses.sum())
    if escaped > 1e-3:
        raise MassEscape(f"{escaped:.3g} of the mass falls outside [{x_min}, {x_max}]")
    return _normalized(x_min + 0.5 * step, step, masses)


def discretize_step(dist: ParametricDist, step: float, tail: float = DEFAULT_TAIL) -> DiscretePdf:
    """Discretize on cells aligned to integer multiples of ``step``.

    The range covers the ``tail`` and ``1 - tail`` quantiles. Point masses are
    kept exact as a single-cell pdf at their value.
    """
    if isinstance(dist, Dirac):
        return DiscretePdf.point(dist.value, step)
    if isinstance(dist, Scaled) and isinstance(dist.base, Dirac):
        return DiscretePdf.point(dist.factor * dist.base.value, step)
    lo = float(dist.ppf(tail))
    hi = float(dist.ppf(1.0 - tail))
    lo = math.floor(lo / step) * step
    hi = math.ceil(hi / step) * step
    bins = max(int(round((hi - lo) / step)), 2)
    return discretize(dist, lo, lo + bins * step, bins)


def _check_steps(a: DiscretePdf, b: DiscretePdf) -> None:
    if abs(a.step - b.step) > 1e-12:
        raise GridMismatch(f"grid steps differ: {a.step} vs {b.step}")


def convolve(a: DiscretePdf, b: DiscretePdf) -> DiscretePdf:
    """Law of the sum of two independent variables.

    Short supports are summed directly; long ones go through an FFT product,
    whose round-off dust is clipped before renormalizing.
    """
    _check_steps(a, b)
    masses = signal.convolve(a.masses, b.masses, method="auto")
    return _normalized(a.x_min + b.x_min, a.step, masses)


def convolve_all(pdfs: Sequence[DiscretePdf]) -> DiscretePdf:
    if not pdfs:
        raise ValueError("need at least one pdf")
    out = pdfs[0]
    for p in pdfs[1:]:
        out = convolve(out, p)
    return out


def quantile(p: DiscretePdf, omega: float) -> float:
    """Smallest grid point whose CDF reaches ``omega``."""
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie in (0, 1)")
    return p.x_min + p.step * _quantile_index(p.masses, omega)


def _quantile_index(masses: np.ndarray, omega: float) -> int:
    cdf = np.cumsum(masses)
    idx = int(np.searchsorted(cdf, omega * cdf[-1] - _CDF_TOL, side="left"))
    return min(idx, masses.size - 1)


# ---------------------------------------------------------------------------
# Frequency domain
# ---------------------------------------------------------------------------

def next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length()


@dataclass(frozen=True)
class LogTransform:
    """Log of the real DFT of a pdf's masses, zero-padded to ``n_fft``.

    ``x_min``/``step``/``length`` describe the originating grid; ``x_min`` of a
    sum is the sum of the offsets, so they are tracked outside the transform.
    """

    values: np.ndarray = field(repr=False)
    n_fft: int
    x_min: float
    step: float
    length: int

    @property
    def freq_step(self) -> float:
        return 1.0 / (self.n_fft * self.step)

    def __add__(self, other: "LogTransform") -> "LogTransform":
        _check_transform_pair(self, other)
        return LogTransform(self.values + other.values, self.n_fft, self.x_min + other.x_min,
                            self.step, self.length + other.length - 1)

    def times(self, count: int) -> "LogTransform":
        """Transform of the ``count``-fold self-convolution."""
        if count < 1 or int(count) != count:
            raise ValueError("count must be a positive integer")
        return LogTransform(count * self.values, self.n_fft, count * self.x_min, self.step,
                            count * (self.length - 1) + 1)


def _check_transform_pair(a: LogTransform, b: LogTransform) -> None:
    if abs(a.step - b.step) > 1e-12:
        raise GridMismatch(f"grid steps differ: {a.step} vs {b.step}")
    if a.n_fft != b.n_fft:
        raise GridMismatch(f"transform lengths differ: {a.n_fft} vs {b.n_fft}")


def to_log_transform(p: DiscretePdf, n_fft: int | None = None) -> LogTransform:
    n = next_pow2(len(p)) if n_fft is None else int(n_fft)
    if n < len(p):
        raise GridTooSmall(f"n_fft={n} is shorter than the pdf ({len(p)} cells)")
    spectrum = np.fft.rfft(p.masses, n)
    with np.errstate(divide="ignore"):
        values = np.log(spectrum)
    return LogTransform(values, n, p.x_min, p.step, len(p))


def from_log_sum(ts: Iterable[LogTransform]) -> DiscretePdf:
    """Pdf of the sum of the variables whose transforms are given."""
    ts = list(ts)
    if not ts:
        raise ValueError("need at least one transform")
    total = ts[0]
    for t in ts[1:]:
        total = total + t
    return inverse_log_transform(total)


def inverse_log_transform(t: LogTransform) -> DiscretePdf:
    if t.length > t.n_fft:
        raise GridTooSmall(
            f"combined support of {t.length} cells exceeds the transform length {t.n_fft}")
    if np.isnan(t.values).any():
        raise BranchCut("accumulated log-transform is not finite; refine the grid")
    spectrum = np.exp(t.values)
    spectrum[np.isneginf(t.values.real)] = 0.0
    masses = np.fft.irfft(spectrum, t.n_fft)[: t.length]
    return _normalized(t.x_min, t.step, masses)


def transform_quantile(t: LogTransform, omega: float) -> float:
    """omega-quantile of the pdf represented by ``t`` (no pdf object built)."""
    if t.length > t.n_fft:
        raise GridTooSmall(
            f"combined support of {t.length} cells exceeds the transform length {t.n_fft}")
    spectrum = np.exp(t.values)
    masses = np.fft.irfft(spectrum, t.n_fft)[: t.length]
    np.clip(masses, 0.0, None, out=masses)
    return t.x_min + t.step * _quantile_index(masses, omega)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample(dist: ParametricDist, rng: np.random.Generator | int | None = None, size=None):
    """Draw from ``dist`` using an explicit generator (or a seed for one)."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return dist.rvs(rng, size)


@dataclass
class MomentCheck:
    mean_ok: bool | None
    z_score: float | None
    undefined_moment: bool


def check_sample_mean(dist: ParametricDist, samples: np.ndarray, n_se: float = 3.0) -> MomentCheck:
    """Compare the empirical mean with the analytic one (within ``n_se`` SEs).

    When the mean or variance does not exist the check is skipped and flagged.
    """
    samples = np.asarray(samples, dtype=float)
    mu, var = dist.mean, dist.var
    if not (math.isfinite(mu) and math.isfinite(var)):
        warnings.warn(f"{dist.family} has no finite mean/variance; moment check skipped",
                      UndefinedMomentWarning, stacklevel=2)
        return MomentCheck(None, None, True)
    if var == 0:
        ok = bool(np.all(samples == mu))
        return MomentCheck(ok, 0.0, False)
    se = math.sqrt(var / samples.size)
    z = (samples.mean() - mu) / se
    return MomentCheck(abs(z) <= n_se, float(z), False)
