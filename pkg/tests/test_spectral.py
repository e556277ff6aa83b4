import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rshe_lab.rearrange import rearrange
from rshe_lab.spectral import (
    AliasingError,
    basis_values,
    circular_convolve,
    grad_sq_norm,
    grid_points,
    heat_evolve,
    heat_kernel,
    heat_kernel_tail,
    sobolev_norm,
    spectral_derivative_values,
    to_grid,
    to_spectral,
)

from conftest import coeff_fields

PI2 = np.pi**2


def brute_coeffs(f, N):
    """Direct rectangle-rule sums against sqrt(2) cos, no FFT."""
    M = f.size
    x = grid_points(M)
    out = np.array([np.mean(f) if m == 0 else np.sqrt(2) * np.mean(f * np.cos(2 * np.pi * m * x)) for m in range(N + 1)])
    if N == M // 2:
        out[N] /= np.sqrt(2)
    return out


def test_constant_has_only_mean_mode():
    np.testing.assert_allclose(to_spectral(np.full(8, 2.5), 4), [2.5, 0, 0, 0, 0], atol=1e-15)


def test_first_basis_vector_maps_to_unit_coefficient():
    x = grid_points(8)
    np.testing.assert_allclose(to_spectral(np.sqrt(2) * np.cos(2 * np.pi * x), 2), [0, 1, 0], atol=1e-15)


def test_to_grid_small_examples():
    np.testing.assert_allclose(to_grid([1.5, 0.0], 4), [1.5] * 4)
    np.testing.assert_allclose(to_grid([0.0, 1.0], 4), [np.sqrt(2), 0, -np.sqrt(2), 0], atol=1e-15)


def test_to_spectral_matches_direct_sums(rng):
    for M in (4, 6, 16, 30):
        f = rng.standard_normal(M)
        for N in (1, M // 4, M // 2):
            np.testing.assert_allclose(to_spectral(f, N), brute_coeffs(f, N), atol=1e-13)


def test_aliasing_rejected():
    with pytest.raises(AliasingError):
        to_spectral(np.zeros(8), 5)
    with pytest.raises(AliasingError):
        to_grid(np.zeros(6), 8)
    with pytest.raises(ValueError):
        to_spectral(np.zeros(7))


@given(coeff_fields(16), st.integers(0, 3))
def test_round_trip_band_limited(c, extra):
    N = c.size - 1
    M = 2 * N + 2 * extra if N >= 2 else 4 + 2 * extra
    back = to_spectral(to_grid(c, M), N)
    np.testing.assert_allclose(back, c, atol=1e-12 * (1 + np.abs(c).max()))


def test_round_trip_symmetric_grid_field(rng):
    f = rng.standard_normal(32)
    sym = 0.5 * (f + np.roll(f[::-1], 1))
    np.testing.assert_allclose(to_grid(to_spectral(sym), 32), sym, atol=1e-13)


def test_grid_basis_is_orthonormal():
    for M in (4, 10, 64):
        E = basis_values(M // 2, M)
        np.testing.assert_allclose(E @ E.T / M, np.eye(M // 2 + 1), atol=1e-13)


@given(coeff_fields(16))
def test_parseval(c):
    M = 2 * max(c.size - 1, 2)
    f = to_grid(c, M)
    np.testing.assert_allclose(np.mean(f * f), np.sum(c * c), rtol=1e-12, atol=1e-12)


def test_to_grid_output_exactly_symmetric(rng):
    f = to_grid(rng.standard_normal(9), 16)
    assert np.array_equal(f[1:], f[1:][::-1])


def test_heat_examples():
    c = np.array([0.7, 1.0])
    np.testing.assert_array_equal(heat_evolve(c, 0.0), c)
    np.testing.assert_allclose(heat_evolve([0.0, 1.0], 0.1), [0.0, np.exp(-0.4 * PI2)])
    assert heat_evolve(np.array([3.0, 1.0, 2.0]), 5.0)[0] == 3.0
    with pytest.raises(ValueError):
        heat_evolve(c, -1e-3)


@given(coeff_fields(12), st.floats(0, 0.1), st.floats(0, 0.1))
def test_heat_semigroup(c, s, t):
    np.testing.assert_allclose(heat_evolve(heat_evolve(c, s), t), heat_evolve(c, s + t), rtol=1e-12, atol=1e-300)


@given(coeff_fields(12), st.floats(0, 1), st.floats(-2, 2))
def test_heat_is_a_contraction(c, t, mu):
    assert sobolev_norm(heat_evolve(c, t), mu) <= sobolev_norm(c, mu) * (1 + 1e-14)


@given(coeff_fields(12), st.lists(st.floats(0, 0.2), min_size=2, max_size=5))
def test_gradient_energy_decays(c, times):
    g = [grad_sq_norm(heat_evolve(c, t)) for t in sorted(times)]
    assert all(b <= a * (1 + 1e-14) for a, b in zip(g, g[1:]))


def test_grad_sq_norm_examples():
    assert grad_sq_norm(np.array([4.0, 0.0, 0.0])) == 0.0
    np.testing.assert_allclose(grad_sq_norm(np.array([0.0, 1.0])), 4 * PI2)
    np.testing.assert_allclose(grad_sq_norm(np.array([0.0, 1.0, 1.0])), 20 * PI2)


def test_sobolev_examples():
    assert sobolev_norm(np.array([1.0, 0.0]), 3.7) == 1.0
    np.testing.assert_allclose(sobolev_norm(np.array([0.0, 0.0, 1.0]), -1.0), 0.5)
    c = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(sobolev_norm(c, 0.0), np.linalg.norm(c))


def test_heat_kernel_properties():
    for t in (1e-3, 1e-2, 0.3):
        g, tail = heat_kernel(t, 128)
        np.testing.assert_allclose(g.mean(), 1.0, rtol=1e-13)
        np.testing.assert_allclose(rearrange(g), g, rtol=0, atol=1e-12 * g.max())
        assert tail >= 0
    g, _ = heat_kernel(5.0, 64)
    np.testing.assert_allclose(g, 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        heat_kernel(0.0, 16)


def test_heat_kernel_tail_bounds_truncation():
    t, N = 1e-3, 10
    m = np.arange(N + 1, 400)
    exact = 2 * np.sum(np.exp(-4 * PI2 * m**2 * t))
    assert exact <= heat_kernel_tail(t, N) <= 1.5 * exact


def test_kernel_convolution_matches_heat_flow(rng):
    M = 128
    f = to_grid(rng.standard_normal(M // 2 + 1) / (1 + np.arange(M // 2 + 1)), M)
    for t in (1e-3, 1e-2):
        g, tail = heat_kernel(t, M, N=M // 2 - 1)
        conv = circular_convolve(f, g)
        exact = to_grid(heat_evolve(to_spectral(f), t), M)
        assert np.max(np.abs(conv - exact)) <= tail * np.abs(f).max() + 1e-10


def test_derivative_examples():
    np.testing.assert_allclose(spectral_derivative_values(np.array([2.0, 0.0, 0.0]), 8), 0.0, atol=1e-15)
    d = spectral_derivative_values(np.array([0.0, 1.0]), 32)
    np.testing.assert_allclose(np.mean(d * d), 4 * PI2, rtol=1e-13)


@given(coeff_fields(10))
def test_derivative_parseval(c):
    M = 4 * max(c.size, 2)
    d = spectral_derivative_values(c, M)
    np.testing.assert_allclose(np.mean(d * d), grad_sq_norm(c), rtol=1e-11, atol=1e-10)


def test_derivative_against_finite_differences(rng):
    c = rng.standard_normal(6)
    errs = []
    for M in (64, 128, 256):
        f = to_grid(c, M)
        fd = (np.roll(f, -1) - np.roll(f, 1)) * M / 2
        errs.append(np.max(np.abs(fd - spectral_derivative_values(c, M))))
    # second-order: error drops by ~4 per doubling
    assert errs[1] < errs[0] / 3.5 and errs[2] < errs[1] / 3.5
