"""Root finding, quadrature, KS distance, and the seeded stream hierarchy."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aimdmf import (
    BracketError,
    RngStream,
    bisect,
    exp_sample,
    exp_samples,
    ks_distance,
    quad,
    stationary_density,
)
from conftest import PSI, PSI_05_TWO_THIRDS


class _FixedUniform:
    """Generator stand-in yielding a prescribed uniform draw."""

    def __init__(self, value):
        self.value = value

    def random(self):
        return self.value


# ---------------------------------------------------------------- bisect


def test_bisect_linear_root():
    assert bisect(lambda x: x - 1.0, 0.0, 2.0, 1e-12) == pytest.approx(1.0, abs=1e-12)


def test_bisect_power_root():
    assert bisect(lambda x: x ** 1.5 - 1.0, 0.0, 4.0, 1e-12) == pytest.approx(
        1.0, abs=1e-11
    )


def test_bisect_throughput_balance_root():
    # u = psi(0.5) / sqrt(u) has the closed-form solution psi(0.5)^(2/3)
    f = lambda u: u - PSI[0.5] / math.sqrt(u)
    assert bisect(f, 0.5, 4.0, 1e-13) == pytest.approx(PSI_05_TWO_THIRDS, abs=1e-11)


def test_bisect_rejects_unbracketed_root():
    with pytest.raises(BracketError):
        bisect(lambda x: x + 5.0, 0.0, 1.0, 1e-10)


@settings(max_examples=50, deadline=None)
@given(root=st.floats(0.1, 9.9), scale=st.floats(0.5, 3.0))
def test_bisect_finds_monotone_roots(root, scale):
    f = lambda x: scale * (x - root) ** 3 + (x - root)
    assert bisect(f, 0.0, 10.0, 1e-10) == pytest.approx(root, abs=1e-9)


# ------------------------------------------------------------------ quad


def test_quad_unit_interval_constant():
    assert quad(lambda x: 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_quad_gaussian_halfline():
    val = quad(lambda x: np.exp(-0.5 * x**2), 0.0, 40.0)
    assert val == pytest.approx(math.sqrt(math.pi / 2.0), abs=1e-9)


def test_quad_normalizes_stationary_density():
    val = quad(lambda x: stationary_density(0.5, 1.0, x), 0.0, 20.0)
    assert val == pytest.approx(1.0, abs=1e-8)


# ------------------------------------------------------------ ks_distance


def test_ks_quantile_samples_are_nearly_exact():
    n = 1000
    samples = np.arange(1, n + 1) / (n + 1.0)
    cdf = lambda x: np.clip(x, 0.0, 1.0)
    assert ks_distance(samples, cdf) <= 1.0 / (n + 1) + 1e-12


def test_ks_point_mass_at_median_is_half():
    samples = np.full(64, 0.5)
    cdf = lambda x: np.clip(x, 0.0, 1.0)
    assert ks_distance(samples, cdf) == pytest.approx(0.5, abs=1e-12)


def test_ks_uniform_large_sample_is_small():
    gen = RngStream(7).child("ks-uniform").generator()
    samples = gen.random(10_000)
    assert ks_distance(samples, lambda x: np.clip(x, 0.0, 1.0)) < 0.03


def test_ks_requires_samples():
    with pytest.raises(ValueError):
        ks_distance(np.array([]), lambda x: x)


# ------------------------------------------------------- exponential draws


def test_exp_sample_inverts_the_uniform_exactly():
    assert exp_sample(_FixedUniform(0.0)) == 0.0
    # raw draw 1 - e^-1 corresponds to the exponential value 1
    assert exp_sample(_FixedUniform(1.0 - math.exp(-1.0))) == pytest.approx(
        1.0, abs=1e-15
    )


def test_exp_samples_mean_is_one():
    gen = RngStream(11).child("exp-mean").generator()
    draws = exp_samples(gen, 1_000_000)
    assert np.all(draws >= 0.0)
    assert abs(draws.mean() - 1.0) <= 0.004


@settings(max_examples=200, deadline=None)
@given(u=st.floats(min_value=0.0, max_value=0.999999999))
def test_exp_sample_nonnegative_and_finite(u):
    v = exp_sample(_FixedUniform(u))
    assert 0.0 <= v < math.inf


# ----------------------------------------------------------- RngStream


def test_stream_same_path_reproduces_bitwise():
    a = RngStream(1234).child("exp", 3, "rep", 7).generator().random(8)
    b = RngStream(1234).child("exp", 3, "rep", 7).generator().random(8)
    assert np.array_equal(a, b)


def test_stream_distinct_paths_and_seeds_differ():
    base = RngStream(1234)
    a = base.child("rep", 0).generator().random(8)
    b = base.child("rep", 1).generator().random(8)
    c = RngStream(1235).child("rep", 0).generator().random(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_children_chain_like_flat_paths():
    a = RngStream(5).child("a").child("b", 2).generator().random(4)
    b = RngStream(5).child("a", "b", 2).generator().random(4)
    assert np.array_equal(a, b)


def test_stream_rejects_bad_seed():
    with pytest.raises((ValueError, OverflowError)):
        RngStream(-1)
