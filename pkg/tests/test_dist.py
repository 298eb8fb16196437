from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from deptrain.dist import (
    Dirac, DiscretePdf, InverseGamma, Normal, StudentT, check_sample_mean, convolve, convolve_all,
    discretize, discretize_step, dist_from_json, from_log_sum, quantile, sample, to_log_transform,
    transform_quantile,
)
from deptrain.errors import GridMismatch, MassEscape, NonPositiveRange, UndefinedMomentWarning


def direct_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """O(n*m) summation, the reference for every fast path."""
    out = np.zeros(a.size + b.size - 1)
    for i, v in enumerate(a):
        out[i:i + b.size] += v * b
    return out


masses_st = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40).filter(lambda m: sum(m) > 1e-3)


def pdf_from(masses, x_min=0.0, step=0.5) -> DiscretePdf:
    m = np.asarray(masses, dtype=float)
    return DiscretePdf(x_min, step, m / m.sum())


# --- discretize -------------------------------------------------------------

def test_discretize_dirac_single_cell():
    p = discretize(Dirac(2.0), 0.0, 4.0, 4)
    assert np.count_nonzero(p.masses) == 1
    cell = int(np.argmax(p.masses))
    lo = 0.0 + cell * p.step
    assert lo <= 2.0 < lo + p.step


def test_discretize_normal_moments():
    p = discretize(Normal(0.0, 1.0), -8.0, 8.0, 4096)
    assert abs(p.masses.sum() - 1.0) <= 1e-9
    assert abs(p.mean()) <= 1e-6
    assert abs(p.var() - 1.0) <= 1e-3


def test_discretize_inverse_gamma_unit_mean_oracle():
    rel_var = 0.031 / 1.02 ** 2
    d = InverseGamma.unit_mean(rel_var)
    assert d.shape == pytest.approx(35.56, abs=0.01)
    assert d.scale == pytest.approx(34.56, abs=0.01)
    p = discretize(d, 0.0, 4.0, 4096)
    oracle, _ = integrate.quad(lambda x: x * stats.invgamma.pdf(x, d.shape, scale=d.scale), 0, 4, limit=200)
    assert abs(p.mean() - 1.0) <= 1e-3
    assert abs(p.mean() - oracle) <= 1e-4


def test_discretize_errors():
    with pytest.raises(NonPositiveRange):
        discretize(Normal(0, 1), 1.0, 1.0, 8)
    with pytest.raises(MassEscape):
        discretize(Normal(0, 1), 0.0, 8.0, 64)


@given(st.floats(-3, 3), st.floats(0.2, 3))
@settings(max_examples=30, deadline=None)
def test_discretize_step_quantile_converges(mu, sigma):
    d = Normal(mu, sigma)
    coarse = discretize_step(d, 0.02)
    fine = discretize_step(d, 0.01)
    for omega in (0.1, 0.5, 0.99):
        assert abs(quantile(coarse, omega) - quantile(fine, omega)) <= 0.02 + 1e-9


# --- convolve ---------------------------------------------------------------

def test_convolve_translation():
    out = convolve(DiscretePdf.point(1.5, 0.5), DiscretePdf.point(2.5, 0.5))
    assert len(out) == 1 and out.x_min == pytest.approx(4.0)


def test_convolve_two_coins():
    coin = DiscretePdf(0.0, 1.0, np.array([0.5, 0.5]))
    out = convolve(coin, coin)
    np.testing.assert_allclose(out.masses, [0.25, 0.5, 0.25], atol=1e-15)
    assert out.x_min == 0.0


def test_convolve_normal_matches_direct_summation():
    p = discretize(Normal(0.0, 1.0), -8.0, 8.0, 4096)
    out = convolve(p, p)
    ref = direct_convolution(p.masses, p.masses)
    assert np.max(np.abs(out.masses - ref)) <= 1e-8
    assert out.var() == pytest.approx(2.0, abs=1e-2)
    assert out.x_min == pytest.approx(2 * p.x_min)
    assert len(out) == 2 * len(p) - 1


def test_convolve_grid_mismatch():
    with pytest.raises(GridMismatch):
        convolve(DiscretePdf.point(0, 0.1), DiscretePdf.point(0, 0.2))


@given(masses_st, masses_st, st.integers(-20, 20), st.integers(-20, 20))
@settings(max_examples=100, deadline=None)
def test_convolve_mean_additive(ma, mb, oa, ob):
    a, b = pdf_from(ma, oa * 0.5), pdf_from(mb, ob * 0.5)
    out = convolve(a, b)
    assert abs(out.mean() - a.mean() - b.mean()) <= 1e-9
    assert abs(out.masses.sum() - 1.0) <= 1e-9


# --- log transforms ---------------------------------------------------------

def test_log_transform_round_trip():
    p = discretize(Normal(0.3, 0.7), -6.0, 6.0, 1000)
    back = from_log_sum([to_log_transform(p)])
    assert back.x_min == p.x_min and len(back) == len(p)
    assert np.max(np.abs(back.masses - p.masses)) <= 1e-10


def test_log_transform_translation():
    step = 0.25
    n = 8
    out = from_log_sum([to_log_transform(DiscretePdf.point(1.0, step), n),
                        to_log_transform(DiscretePdf.point(-3.5, step), n)])
    assert quantile(out, 0.5) == pytest.approx(-2.5)
    assert out.mean() == pytest.approx(-2.5)


def test_log_transform_ten_inverse_gamma():
    p = discretize_step(InverseGamma.unit_mean(0.03), 0.01)
    n = 1 << (10 * len(p)).bit_length()
    out = from_log_sum([to_log_transform(p, n)] * 10)
    ref = p.masses
    for _ in range(9):
        ref = direct_convolution(ref, p.masses)
    assert out.mean() == pytest.approx(10.0, abs=1e-3)
    assert np.max(np.abs(out.masses - ref / ref.sum())) <= 1e-7


@given(st.lists(masses_st, min_size=1, max_size=32))
@settings(max_examples=40, deadline=None)
def test_transform_equals_direct_convolution(factors):
    pdfs = [pdf_from(m, x_min=float(i), step=1.0) for i, m in enumerate(factors)]
    total = sum(len(p) for p in pdfs) - len(pdfs) + 1
    n = 1 << max(total - 1, 1).bit_length()
    out = from_log_sum(to_log_transform(p, n) for p in pdfs)
    ref = pdfs[0].masses
    for p in pdfs[1:]:
        ref = direct_convolution(ref, p.masses)
    assert out.x_min == pytest.approx(sum(p.x_min for p in pdfs))
    assert np.max(np.abs(out.masses - ref)) <= 1e-8
    t = to_log_transform(pdfs[0], n)
    for p in pdfs[1:]:
        t = t + to_log_transform(p, n)
    assert transform_quantile(t, 0.9) == quantile(convolve_all(pdfs), 0.9)


def test_log_transform_zero_frequency_is_zero():
    t = to_log_transform(discretize_step(StudentT(3.0, 0.1, 0.85), 0.01))
    assert abs(t.values[0]) <= 1e-6


# --- quantile ---------------------------------------------------------------

def test_quantile_examples():
    assert quantile(DiscretePdf.point(3.0, 0.1), 0.99) == pytest.approx(3.0)
    four = DiscretePdf(1.0, 1.0, np.full(4, 0.25))
    assert quantile(four, 0.5) == 2.0


def test_quantile_inverse_gamma_median():
    d = InverseGamma(3.0, 2.0)
    p = discretize(d, 0.0, 60.0, 60_000)
    oracle = optimize.brentq(lambda x: stats.invgamma.cdf(x, 3.0, scale=2.0) - 0.5, 1e-3, 60.0, xtol=1e-6)
    # cells are represented by midpoints; the quantile cell contains the oracle
    assert abs(quantile(p, 0.5) - oracle) <= p.step


@given(masses_st, st.floats(0.01, 0.98), st.floats(0.0, 0.01))
@settings(max_examples=100, deadline=None)
def test_quantile_monotone_in_omega(m, w, dw):
    p = pdf_from(m)
    assert quantile(p, w) <= quantile(p, min(w + dw, 0.999))


@given(masses_st, st.integers(-50, 50), st.floats(0.01, 0.99))
@settings(max_examples=100, deadline=None)
def test_quantile_shift_equivariant(m, cells, w):
    p = pdf_from(m, step=0.25)
    assert quantile(p.shift(cells * 0.25), w) == pytest.approx(quantile(p, w) + cells * 0.25)


# --- sampling ---------------------------------------------------------------

def test_sample_dirac():
    assert np.all(sample(Dirac(5.0), 1, 100) == 5.0)


def test_sample_normal_reproducible():
    a = sample(Normal(0, 1), 42, 1_000_000)
    b = sample(Normal(0, 1), 42, 1_000_000)
    assert np.array_equal(a, b)
    assert abs(a.mean()) <= 0.004


def test_sample_inverse_gamma_mean():
    d = InverseGamma(35.56, 34.56)
    x = sample(d, 7, 1_000_000)
    assert abs(x.mean() - 1.0) <= 0.01
    assert check_sample_mean(d, x).mean_ok


def test_undefined_moment_flagged():
    x = sample(StudentT(1.0, 0.0, 1.0), 0, 1000)
    with pytest.warns(UndefinedMomentWarning):
        res = check_sample_mean(StudentT(1.0, 0.0, 1.0), x)
    assert res.undefined_moment and res.mean_ok is None


@pytest.mark.parametrize("d", [InverseGamma(4.0, 3.0), StudentT(3.0, 0.1, 0.85), Normal(1.0, 2.0), Dirac(0.5)])
def test_json_round_trip(d):
    assert dist_from_json(d.to_json()) == d


@pytest.mark.parametrize("bad", [{"family": "InverseGamma", "params": {"shape": -1, "scale": 1}},
                                 {"family": "Cauchy", "params": {}},
                                 {"family": "StudentT", "params": {"dof": 3}}])
def test_json_rejects_bad_params(bad):
    with pytest.raises((ValueError, KeyError)):
        dist_from_json(bad)


def test_pdf_invariants_enforced():
    with pytest.raises(ValueError):
        DiscretePdf(0.0, 1.0, np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        DiscretePdf(0.0, 0.0, np.array([1.0]))
    with pytest.raises(ValueError):
        DiscretePdf(0.0, 1.0, np.array([1.5, -0.5]))
    assert math.isclose(DiscretePdf.point(2.0, 0.1).mean(), 2.0)
