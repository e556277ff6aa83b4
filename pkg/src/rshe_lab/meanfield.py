"""Mean-field test functions with closed-form Lions derivatives, and the generator.

Every function here receives the measure as a grid field ``X`` (any
arrangement: only the value multiset matters), possibly with leading batch
axes, together with evaluation points ``y`` broadcastable against it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .noise import spectrum, NoiseSpec
from .spectral import basis_values, spectral_derivative_values, to_spectral


def _mean(v):
    return np.mean(v, axis=-1)


def _ex(m, y):
    """Broadcast a per-measure scalar against points ``y``."""
    m = np.asarray(m)
    return m.reshape(m.shape + (1,) * (np.ndim(y) - m.ndim)) if np.ndim(y) > m.ndim else m


class MeanFieldFunction:
    name = "abstract"
    derivative_bound = np.inf
    bounded = True

    def phi(self, X):
        raise NotImplementedError

    def d_mu(self, X, y):
        raise NotImplementedError

    def grad_d_mu(self, X, y):
        raise NotImplementedError

    def d2_mu(self, X, y, z):
        raise NotImplementedError

    def d2_factors(self, X):
        """Separable form ``d2_mu(y, z) = sum_i c_i p_i(y) q_i(z)`` at this measure.

        Returns ``[(c_i, p_i, q_i)]`` with ``c_i`` per batch entry and ``p_i``,
        ``q_i`` callables, or ``None`` when no separable form is known.
        """
        return None

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


@dataclass(frozen=True)
class _Trig:
    kind: str
    a: float

    def f(self, y, order=0):
        s, c = np.sin(self.a * y), np.cos(self.a * y)
        seq = (s, c, -s, -c) if self.kind == "sin" else (c, -s, -c, s)
        return self.a**order * seq[order % 4]


class Linear(MeanFieldFunction):
    """``phi(mu) = int f dmu`` with ``f = sin(a y)`` or ``cos(a y)``."""

    def __init__(self, kind: str = "sin", a: float = 1.0):
        self.base = _Trig(kind, a)
        self.name = f"linear_{kind}_a{a:g}"
        self.derivative_bound = max(abs(a), a * a)

    def phi(self, X):
        return _mean(self.base.f(X))

    def d_mu(self, X, y):
        return self.base.f(y, 1)

    def grad_d_mu(self, X, y):
        return self.base.f(y, 2)

    def d2_mu(self, X, y, z):
        return np.zeros(np.broadcast_shapes(np.shape(y), np.shape(z)))

    def d2_factors(self, X):
        return []


class TanhOf(MeanFieldFunction):
    """``phi(mu) = tanh(int f dmu)``."""

    def __init__(self, kind: str = "sin", a: float = 1.0):
        self.base = _Trig(kind, a)
        self.name = f"tanh_of_{kind}" + ("" if a == 1.0 else f"_a{a:g}")
        # |tanh'| <= 1, |tanh''| <= 4 / (3 sqrt 3)
        self.derivative_bound = max(abs(a), a * a)

    def _m(self, X):
        return _mean(self.base.f(X))

    @staticmethod
    def _g1(m):
        return 1.0 / np.cosh(m) ** 2

    @staticmethod
    def _g2(m):
        return -2.0 * np.tanh(m) / np.cosh(m) ** 2

    def phi(self, X):
        return np.tanh(self._m(X))

    def d_mu(self, X, y):
        return _ex(self._g1(self._m(X)), y) * self.base.f(y, 1)

    def grad_d_mu(self, X, y):
        return _ex(self._g1(self._m(X)), y) * self.base.f(y, 2)

    def d2_mu(self, X, y, z):
        g2 = self._g2(self._m(X))
        return _ex(g2, np.broadcast_to(y, np.broadcast_shapes(np.shape(y), np.shape(z)))) * self.base.f(y, 1) * self.base.f(z, 1)

    def d2_factors(self, X):
        fp = lambda v: self.base.f(v, 1)  # noqa: E731
        return [(self._g2(self._m(X)), fp, fp)]


class InteractionCos(MeanFieldFunction):
    """``phi(mu) = int int cos(y - z) dmu(y) dmu(z)``."""

    name = "interaction_cos"
    derivative_bound = 2.0

    @staticmethod
    def _cs(X):
        return _mean(np.cos(X)), _mean(np.sin(X))

    def phi(self, X):
        C, S = self._cs(X)
        return C * C + S * S

    def d_mu(self, X, y):
        C, S = self._cs(X)
        return -2.0 * (_ex(C, y) * np.sin(y) - _ex(S, y) * np.cos(y))

    def grad_d_mu(self, X, y):
        C, S = self._cs(X)
        return -2.0 * (_ex(C, y) * np.cos(y) + _ex(S, y) * np.sin(y))

    def d2_mu(self, X, y, z):
        return 2.0 * np.cos(y - z)

    def d2_factors(self, X):
        two = np.full(np.shape(X)[:-1], 2.0)
        return [(two, np.cos, np.cos), (two, np.sin, np.sin)]


class SecondMoment(MeanFieldFunction):
    """``phi(mu) = int y^2 dmu``; derivatives are unbounded, diagnostics only."""

    name = "second_moment"
    bounded = False

    def phi(self, X):
        return _mean(X * X)

    def d_mu(self, X, y):
        return 2.0 * np.asarray(y, dtype=float)

    def grad_d_mu(self, X, y):
        return np.full(np.shape(y), 2.0)

    def d2_mu(self, X, y, z):
        return np.zeros(np.broadcast_shapes(np.shape(y), np.shape(z)))

    def d2_factors(self, X):
        return []


_PATTERNS = [
    (re.compile(r"linear_(sin|cos)_a([-+0-9.eE]+)$"), lambda m: Linear(m[1], float(m[2]))),
    (re.compile(r"tanh_of_(sin|cos)$"), lambda m: TanhOf(m[1])),
    (re.compile(r"tanh_of_(sin|cos)_a([-+0-9.eE]+)$"), lambda m: TanhOf(m[1], float(m[2]))),
    (re.compile(r"interaction_cos$"), lambda m: InteractionCos()),
]

CATALOG = ("linear_sin_a1", "linear_cos_a1", "tanh_of_sin", "interaction_cos")


def get(name: str, allow_unbounded: bool = False) -> MeanFieldFunction:
    """Look up a catalog entry by name, e.g. ``linear_sin_a2`` or ``tanh_of_sin``."""
    if name == "second_moment":
        if not allow_unbounded:
            raise ValueError("second_moment has unbounded derivatives; pass allow_unbounded=True")
        return SecondMoment()
    for pat, make in _PATTERNS:
        m = pat.match(name)
        if m:
            return make(m)
    raise KeyError(f"unknown mean-field function {name!r}")


def eval_phi(phi: MeanFieldFunction, X) -> np.ndarray:
    return phi.phi(np.asarray(X, dtype=float))


def directional_derivative(phi: MeanFieldFunction, X, k: int) -> np.ndarray:
    """``d/de phi(X + e e_k)`` at 0, i.e. ``(1/M) sum_j d_mu(X(x_j)) e_k(x_j)``."""
    X = np.asarray(X, dtype=float)
    M = X.shape[-1]
    ek = basis_values(max(k, 1), M)[k] if k <= M // 2 else None
    if ek is None:
        raise ValueError(f"mode {k} not resolved on a grid of {M}")
    return _mean(phi.d_mu(X, X) * ek)


def second_directional_derivative(phi: MeanFieldFunction, X, k: int, j: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    M = X.shape[-1]
    E = basis_values(M // 2, M)
    ek, ej = E[k], E[j]
    first = _mean(phi.grad_d_mu(X, X) * ek * ej)
    second = _mean(_mean(phi.d2_mu(X, X[..., :, None], X[..., None, :]) * ej) * ek)
    return first + second


def noise_fields(noise: NoiseSpec, M: int):
    """``F_1^N`` on the grid and the per-mode weights ``lambda_k^2`` defining ``F_2^N``."""
    lam2 = spectrum(noise) ** 2
    E = basis_values(noise.N, M)
    return lam2 @ (E * E), lam2


def f2_contraction(phi: MeanFieldFunction, X, lam2: np.ndarray, separable: bool = True) -> np.ndarray:
    """``(1/M^2) sum_{j,l} d2_mu(X_j, X_l) F_2^N(x_j, x_l)``.

    The separable path contracts ``F_2`` mode by mode as
    ``sum_k lambda_k^2 <p(X), e_k> <q(X), e_k>`` and never forms an MxM array.
    """
    X = np.asarray(X, dtype=float)
    M = X.shape[-1]
    N = lam2.shape[-1] - 1
    factors = phi.d2_factors(X) if separable else None
    if factors is not None:
        out = np.zeros(X.shape[:-1])
        for c, p, q in factors:
            pk = _quad_modes(p(X), N)
            qk = _quad_modes(q(X), N) if q is not p else pk
            out = out + c * np.sum(lam2 * pk * qk, axis=-1)
        return out
    E = basis_values(N, M)
    F2 = (E.T * lam2) @ E
    G = phi.d2_mu(X, X[..., :, None], X[..., None, :])
    return np.sum(G * F2, axis=(-2, -1)) / M**2


def _quad_modes(v, N):
    # plain grid quadrature against e_k, which is what to_spectral computes
    return to_spectral(v, N)


def generator(phi: MeanFieldFunction, X, noise: NoiseSpec, separable: bool = True) -> np.ndarray:
    """``L phi(mu)`` at the canonical field ``X`` with noise truncated at ``noise.N``."""
    X = np.asarray(X, dtype=float)
    M = X.shape[-1]
    F1, lam2 = noise_fields(noise, M)
    psi = phi.grad_d_mu(X, X)
    DX = spectral_derivative_values(to_spectral(X, noise.N), M)
    return (
        -_mean(psi * DX * DX)
        + 0.5 * _mean(psi * F1)
        + 0.5 * f2_contraction(phi, X, lam2, separable)
    )
