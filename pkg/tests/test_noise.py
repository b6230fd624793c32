from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bdsdelab.errors import ParameterError
from bdsdelab.noise import (
    NoiseSpectrum,
    backward_integral,
    forward_integral,
    inner_increments,
    load_noise,
    reverse,
    sample_noise,
    save_noise,
    shift,
)

seeds = st.integers(min_value=0, max_value=2**63 - 1)


def same(a, b) -> bool:
    return a.same_increments(b) and a.origin_offset == b.origin_offset and a.direction == b.direction


def test_empty_grid_is_valid():
    g = sample_noise(3, 0.0, 0.1, 0, 1, 2)
    assert g.dW.shape == (0, 1) and g.dBhat.shape == (0, 2)
    assert g.T == 0.0


def test_law_of_large_numbers():
    dt, N = 0.01, 10_000
    g = sample_noise(11, 0.0, dt, N, 1, 1)
    x = g.dW[:, 0]
    assert abs(x.mean()) <= 4.0 * math.sqrt(dt / N)
    assert abs(x.var(ddof=1) / dt - 1.0) <= 0.05


def test_increments_pass_normality_test():
    g = sample_noise(5, 0.0, 0.01, 25_000, 2, 2)
    x = np.concatenate([g.dW.ravel(), g.dBhat.ravel()]) / 0.1
    assert x.size == 100_000
    assert stats.jarque_bera(x).pvalue > 1e-3


def test_restriction_equals_offset_generation():
    g = sample_noise(9, 0.0, 0.05, 40, 2, 3)
    h = sample_noise(9, 0.0, 0.05, 30, 2, 3, origin_offset=10)
    assert np.array_equal(g.dW[10:], h.dW) and np.array_equal(g.dBhat[10:], h.dBhat)


def test_components_do_not_depend_on_width():
    a = sample_noise(4, 0.0, 0.1, 5, 1, 1)
    b = sample_noise(4, 0.0, 0.1, 5, 2, 4)
    assert np.array_equal(a.dW[:, 0], b.dW[:, 0]) and np.array_equal(a.dBhat[:, 0], b.dBhat[:, 0])


@settings(max_examples=100, deadline=None)
@given(seed=seeds, r=st.integers(0, 30), N=st.integers(1, 12))
def test_shift_matches_regeneration(seed, r, N):
    g = sample_noise(seed, 0.0, 0.1, N, 1, 2)
    assert same(shift(g, r), sample_noise(seed, 0.0, 0.1, N, 1, 2, origin_offset=r))


def test_shift_zero_is_identity():
    g = sample_noise(1, 0.0, 0.1, 6, 1, 1)
    assert shift(g, 0) is g


@settings(max_examples=30, deadline=None)
@given(seed=seeds, a=st.integers(0, 10), b=st.integers(0, 10))
def test_shift_semigroup(seed, a, b):
    g = sample_noise(seed, 0.0, 0.1, 8, 1, 2)
    assert same(shift(shift(g, a), b), shift(g, a + b))


def test_shift_index_identity():
    g = sample_noise(2, 0.0, 0.1, 20, 1, 3)
    s = shift(g, 7)
    assert np.array_equal(s.dBhat[:13], g.dBhat[7:])
    assert s.t0 == g.t0


def test_negative_shift_rejected():
    with pytest.raises(ParameterError):
        shift(sample_noise(0, 0.0, 0.1, 3, 1, 1), -1)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, N=st.integers(1, 15))
def test_reverse_is_an_involution(seed, N):
    g = sample_noise(seed, 0.5, 0.1, N, 2, 2)
    assert same(reverse(reverse(g, g.T), g.T), g)


def test_reverse_single_step_negates():
    g = sample_noise(8, 0.0, 0.1, 1, 1, 1)
    r = reverse(g, g.T)
    assert r.dW[0, 0] == -g.dW[0, 0] and r.dBhat[0, 0] == -g.dBhat[0, 0]


def test_reverse_off_end_rejected():
    g = sample_noise(8, 0.0, 0.1, 4, 1, 1)
    with pytest.raises(ParameterError):
        reverse(g, 0.3)


def test_reversed_window_regenerates_consistently():
    g = sample_noise(6, 0.0, 0.1, 10, 1, 1)
    r = reverse(g, g.T)
    # Steps past the reversed end come from negative global indices.
    ext = r.window(0, 14)
    assert np.array_equal(ext.dW[:10], r.dW)
    two_sided = sample_noise(6, 0.0, 0.1, 4, 1, 1, origin_offset=-4)
    assert np.array_equal(ext.dW[10:], -two_sided.dW[::-1])


def test_backward_integral_trivial_integrands():
    g = sample_noise(3, 0.0, 0.1, 9, 1, 2)
    assert backward_integral(np.zeros(9), g, 1) == 0.0
    assert backward_integral(np.ones(9), g, 2) == pytest.approx(g.dBhat[:, 1].sum(), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, values=st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_backward_integral_is_minus_forward_on_reversal(seed, values):
    g = sample_noise(seed, 0.0, 0.1, 6, 1, 1)
    back = backward_integral(values, g, 1)
    fwd = forward_integral(values[::-1], reverse(g, g.T), 1)
    assert back == pytest.approx(-fwd, rel=1e-12, abs=1e-15)


def test_integral_argument_checks():
    g = sample_noise(3, 0.0, 0.1, 4, 1, 1)
    with pytest.raises(ParameterError):
        backward_integral(np.zeros(3), g, 1)
    with pytest.raises(ParameterError):
        backward_integral(np.zeros(4), g, 2)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_serialisation_round_trip(tmp_path, suffix):
    g = reverse(sample_noise(2**40 + 3, 0.25, 0.125, 7, 2, 3, origin_offset=-5), 0.25 + 7 * 0.125)
    back = load_noise(save_noise(g, tmp_path / f"noise{suffix}"))
    assert same(back, g)
    assert (back.t0, back.dt, back.N, back.d, back.J, back.master_seed) == (g.t0, g.dt, g.N, g.d, g.J, g.master_seed)
    assert same(back.window(-2, 12), g.window(-2, 12))


def test_sample_noise_rejects_bad_arguments():
    for args in [(0, 0.0, 0.0, 3, 1, 1), (0, 0.0, 0.1, -1, 1, 1), (0, 0.0, 0.1, 3, 0, 1), (0, 0.0, 0.1, 3, 1, 0)]:
        with pytest.raises(ParameterError):
            sample_noise(*args)


def test_spectrum_invariants():
    spec = NoiseSpectrum.power_law(4)
    assert spec.lambdas == (1.0, 0.25, 1 / 9, 1 / 16)
    assert spec.partial_sum == pytest.approx(1 + 0.25 + 1 / 9 + 1 / 16)
    with pytest.raises(ParameterError):
        NoiseSpectrum((1.0, 2.0))
    with pytest.raises(ParameterError):
        NoiseSpectrum((1.0, 0.0))


def test_inner_increments_moment_matching():
    dw = inner_increments(5, 12, 64, 2, 0.01, moment_match=True)
    assert np.allclose(dw.mean(axis=0), 0.0, atol=1e-15)
    assert np.allclose(dw.T @ dw / 64, 0.01 * np.eye(2), atol=1e-14)
    assert np.array_equal(inner_increments(5, 12, 64, 2, 0.01), inner_increments(5, 12, 64, 2, 0.01))
