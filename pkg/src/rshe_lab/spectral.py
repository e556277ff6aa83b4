"""Cosine spectral representation of symmetric functions on the circle R/Z.

Grid fields are real arrays whose last axis holds ``M`` samples at
``x_j = j / M``; spectral fields are real arrays whose last axis holds the
coefficients ``f_0 .. f_N`` against the orthonormal basis ``e_0 = 1``,
``e_m = sqrt(2) cos(2 pi m x)``. Leading axes are batch axes and are carried
through every function untouched.
"""

from __future__ import annotations

import numpy as np
from scipy import fft

SQRT2 = np.sqrt(2.0)
FOUR_PI_SQ = 4.0 * np.pi**2


class AliasingError(ValueError):
    """Raised when a mode cutoff cannot be resolved on the requested grid."""


def grid_points(M: int) -> np.ndarray:
    return np.arange(M) / M


def check_grid_size(M: int) -> None:
    if M < 4 or M % 2:
        raise ValueError(f"grid size must be even and >= 4, got {M}")


def laplacian_eigenvalues(N: int) -> np.ndarray:
    """Decay rates ``a_m = 4 pi^2 m^2`` so that ``Delta e_m = -a_m e_m``."""
    m = np.arange(N + 1, dtype=float)
    return FOUR_PI_SQ * m * m


def basis_values(N: int, M: int) -> np.ndarray:
    """``(N+1, M)`` matrix of ``e_k(x_j)``, orthonormal under the grid quadrature.

    At the Nyquist frequency ``k = M/2`` the sampled cosine ``sqrt(2)(-1)^j``
    has grid norm sqrt(2); that row is stored as ``(-1)^j`` instead.
    """
    x = grid_points(M)
    k = np.arange(N + 1)[:, None]
    out = SQRT2 * np.cos(2.0 * np.pi * k * x)
    out[0] = 1.0
    if N == M // 2:
        out[N] = np.where(np.arange(M) % 2, -1.0, 1.0)
    return out


def to_spectral(f: np.ndarray, N: int | None = None) -> np.ndarray:
    """Rectangle-rule coefficients ``(1/M) sum_j f(x_j) e_k(x_j)``, k = 0..N.

    Sine content is discarded: for any grid field,
    ``to_grid(to_spectral(f), M)`` is the symmetric part of ``f``.
    """
    f = np.asarray(f, dtype=float)
    M = f.shape[-1]
    check_grid_size(M)
    if N is None:
        N = M // 2
    if N > M // 2:
        raise AliasingError(f"N={N} exceeds M/2={M // 2}")
    c = fft.rfft(f, axis=-1).real[..., : N + 1] / M
    c[..., 1:] *= SQRT2
    if N == M // 2:
        c[..., N] /= SQRT2
    return c


def to_grid(c: np.ndarray, M: int) -> np.ndarray:
    """Evaluate ``sum_k c_k e_k`` at the ``M`` grid points.

    Computed on the half grid by a type-I cosine transform and mirrored, so
    the output is exactly symmetric: ``f(x_j) == f(x_{M-j})`` bitwise.
    """
    c = np.asarray(c, dtype=float)
    check_grid_size(M)
    N = c.shape[-1] - 1
    if M < 2 * N:
        raise AliasingError(f"grid M={M} cannot carry N={N} modes")
    half = M // 2
    x = np.zeros(c.shape[:-1] + (half + 1,))
    x[..., : N + 1] = c
    x[..., 1:half] *= SQRT2 / 2.0  # dct type 1 doubles interior entries
    head = fft.dct(x, type=1, axis=-1)
    return np.concatenate([head, head[..., half - 1 : 0 : -1]], axis=-1)


def heat_evolve(c: np.ndarray, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"heat flow needs t >= 0, got {t}")
    c = np.asarray(c, dtype=float)
    return c * np.exp(-laplacian_eigenvalues(c.shape[-1] - 1) * t)


def grad_sq_norm(c: np.ndarray) -> np.ndarray:
    """``||Df||_2^2`` by Parseval."""
    c = np.asarray(c, dtype=float)
    return np.sum(laplacian_eigenvalues(c.shape[-1] - 1) * c * c, axis=-1)


def sobolev_norm(c: np.ndarray, mu: float) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    w = np.maximum(np.arange(c.shape[-1]), 1).astype(float) ** (2.0 * mu)
    return np.sqrt(np.sum(w * c * c, axis=-1))


def heat_kernel_tail(t: float, N: int) -> float:
    """Bound on ``2 sum_{m>N} exp(-4 pi^2 m^2 t)`` (geometric majorant)."""
    a = FOUR_PI_SQ * t
    first = np.exp(-a * (N + 1) ** 2)
    ratio = np.exp(-a * (2 * N + 3))
    return float(2.0 * first / (1.0 - ratio)) if ratio < 1.0 else np.inf


def heat_kernel(t: float, M: int, N: int | None = None) -> tuple[np.ndarray, float]:
    """Truncated heat kernel ``Gamma_t`` on the grid and its truncation tail."""
    if t <= 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    if N is None:
        N = M // 2
    c = np.zeros(N + 1)
    c[0] = 1.0
    c[1:] = SQRT2 * np.exp(-laplacian_eigenvalues(N)[1:] * t)
    if N == M // 2:
        c[N] /= SQRT2  # e_N(0) = 1 for the grid Nyquist row
    return to_grid(c, M), heat_kernel_tail(t, N)


def spectral_derivative_values(c: np.ndarray, M: int) -> np.ndarray:
    """Grid samples of ``Df = -sum_m 2 pi m sqrt(2) f_m sin(2 pi m x)``."""
    c = np.asarray(c, dtype=float)
    check_grid_size(M)
    N = c.shape[-1] - 1
    if M < 2 * N:
        raise AliasingError(f"grid M={M} cannot carry N={N} modes")
    spec = np.zeros(c.shape[:-1] + (M // 2 + 1,), dtype=complex)
    m = np.arange(1, N + 1)
    # Re(i * b * exp(i theta)) = -b sin(theta)
    spec[..., 1 : N + 1] = 1j * (2.0 * np.pi * m) * (SQRT2 / 2.0) * M * c[..., 1:]
    spec[..., M // 2] = 0.0
    return fft.irfft(spec, n=M, axis=-1)


def circular_convolve(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``(1/M) sum_k f(x_k) g(x_j - x_k)`` with periodic indices."""
    M = f.shape[-1]
    return fft.irfft(fft.rfft(f, axis=-1) * fft.rfft(g, axis=-1), n=M, axis=-1) / M
