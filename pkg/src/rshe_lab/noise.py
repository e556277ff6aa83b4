"""Coloured noise ``W_t = sum_k lambda_k e_k beta^k_t`` and its exact step sampling.

Over one step of length ``h`` each mode needs two correlated Gaussians: the
Brownian increment ``dbeta`` and the Ornstein-Uhlenbeck integral
``conv = int_0^h exp(-a_k (h - s)) dbeta_s`` with ``a_k = 4 pi^2 k^2``. They are
drawn jointly so the scheme and the stochastic-integral term of the Ito
expansion consume the same Brownian path.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .spectral import laplacian_eigenvalues

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpec:
    lambda_exponent: float = 0.75
    N: int = 128
    seed: int = 0
    multiplier: float = 1.0

    def __post_init__(self):
        if not self.lambda_exponent > 0.5:
            raise ValueError(f"lambda exponent must exceed 1/2, got {self.lambda_exponent}")
        if self.N < 1:
            raise ValueError(f"mode cutoff must be >= 1, got {self.N}")
        if self.multiplier < 0:
            raise ValueError("noise multiplier must be non-negative")


def spectrum(spec: NoiseSpec) -> np.ndarray:
    """Mode weights ``lambda_0 = 1``, ``lambda_m = m^(-lambda)``, times the multiplier."""
    m = np.arange(spec.N + 1, dtype=float)
    lam = np.ones(spec.N + 1)
    lam[1:] = m[1:] ** (-spec.lambda_exponent)
    return spec.multiplier * lam


def spectrum_tail_bound(lambda_exponent: float, N: int) -> float:
    """Integral-comparison bound on ``sum_{m>N} m^(-2 lambda)``."""
    return N ** (1.0 - 2.0 * lambda_exponent) / (2.0 * lambda_exponent - 1.0)


@dataclass(frozen=True)
class StepLaw:
    """Per-mode second moments of ``(dbeta, conv)`` over a step of length h."""

    var_dbeta: np.ndarray
    var_conv: np.ndarray
    cov: np.ndarray


def step_law(N: int, h: float) -> StepLaw:
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    a = laplacian_eigenvalues(N)
    var_b = np.full(N + 1, float(h))
    var_c = var_b.copy()
    cov = var_b.copy()
    k = a > 0
    cov[k] = -np.expm1(-a[k] * h) / a[k]
    var_c[k] = -np.expm1(-2.0 * a[k] * h) / (2.0 * a[k])
    return StepLaw(var_b, var_c, cov)


@dataclass(frozen=True)
class StepFactor:
    """Lower-triangular square root of the per-mode 2x2 covariance."""

    s_b: np.ndarray
    c_21: np.ndarray
    c_22: np.ndarray
    clamped: int = 0


def step_factor(N: int, h: float) -> StepFactor:
    law = step_law(N, h)
    s_b = np.sqrt(law.var_dbeta)
    c_21 = law.cov / s_b
    resid = law.var_conv - c_21**2
    clamped = int(np.sum(resid < 0))
    if clamped:
        # correlation numerically above 1
        log.debug("clamped %d mode covariances to PSD at h=%g", clamped, h)
    c_22 = np.sqrt(np.maximum(resid, 0.0))
    c_22[0] = 0.0
    return StepFactor(s_b, c_21, c_22, clamped)


@dataclass(frozen=True)
class StepDraw:
    dbeta: np.ndarray
    conv: np.ndarray


def draw_from_normals(z: np.ndarray, factor: StepFactor) -> tuple[np.ndarray, np.ndarray]:
    """Map standard normals ``z[..., 2, N+1]`` to ``(dbeta, conv)``."""
    z1, z2 = z[..., 0, :], z[..., 1, :]
    dbeta = factor.s_b * z1
    conv = factor.c_21 * z1 + factor.c_22 * z2
    conv[..., 0] = dbeta[..., 0]
    return dbeta, conv


def sample_step(spec: NoiseSpec, h: float, rng: np.random.Generator) -> StepDraw:
    z = rng.standard_normal((2, spec.N + 1))
    dbeta, conv = draw_from_normals(z, step_factor(spec.N, h))
    return StepDraw(dbeta, conv)


def convolution_field(draw: StepDraw, spec: NoiseSpec) -> np.ndarray:
    """Cosine coefficients ``lambda_k * conv_k`` of the step's stochastic convolution."""
    return spectrum(spec) * draw.conv


def path_rng(seed: int, path_index: int, *stream: int) -> np.random.Generator:
    """Independent generator for one path, keyed by ``(seed, path_index)``.

    Extra ``stream`` integers select auxiliary generators for the same path
    (bridge sampling and the like) that never overlap its noise draws.
    """
    key = (path_index,) + tuple(stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class NoiseLedger:
    """Step draws of one or several paths.

    ``dbeta`` and ``conv`` have shape ``(..., n_steps, N+1)``; leading axes
    index paths.
    """

    dbeta: np.ndarray
    conv: np.ndarray
    h: float
    spec: NoiseSpec
    path_indices: tuple[int, ...] = field(default=(0,))

    @property
    def n_steps(self) -> int:
        return self.dbeta.shape[-2]

    def draw(self, n: int) -> StepDraw:
        return StepDraw(self.dbeta[..., n, :], self.conv[..., n, :])

    def brownian_paths(self) -> np.ndarray:
        """``beta^k`` at the step times, shape ``(..., n_steps+1, N+1)``, starting at 0."""
        zero = np.zeros(self.dbeta.shape[:-2] + (1, self.dbeta.shape[-1]))
        return np.concatenate([zero, np.cumsum(self.dbeta, axis=-2)], axis=-2)

    def to_json(self) -> str:
        rec = {
            "h": self.h,
            "lambda_exponent": self.spec.lambda_exponent,
            "N": self.spec.N,
            "seed": self.spec.seed,
            "multiplier": self.spec.multiplier,
            "path_indices": list(self.path_indices),
            "shape": list(self.dbeta.shape),
            # mode-major: one list per mode
            "dbeta": np.moveaxis(self.dbeta, -1, 0).reshape(self.spec.N + 1, -1).tolist(),
            "conv": np.moveaxis(self.conv, -1, 0).reshape(self.spec.N + 1, -1).tolist(),
        }
        return json.dumps(rec)

    @classmethod
    def from_json(cls, text: str) -> "NoiseLedger":
        rec = json.loads(text)
        shape = tuple(rec["shape"])
        moved = (shape[-1],) + shape[:-1]

        def unpack(key):
            return np.moveaxis(np.asarray(rec[key], dtype=float).reshape(moved), 0, -1)

        spec = NoiseSpec(rec["lambda_exponent"], rec["N"], rec["seed"], rec["multiplier"])
        return cls(unpack("dbeta"), unpack("conv"), rec["h"], spec, tuple(rec["path_indices"]))


def sample_ledger(spec: NoiseSpec, h: float, n_steps: int, path_indices=(0,)) -> NoiseLedger:
    """Draws for the given paths; each path has its own generator, so a path's
    draws do not depend on which other paths are sampled alongside it."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    factor = step_factor(spec.N, h)
    z = np.stack(
        [path_rng(spec.seed, int(p)).standard_normal((n_steps, 2, spec.N + 1)) for p in path_indices]
    )
    dbeta, conv = draw_from_normals(z, factor)
    return NoiseLedger(dbeta, conv, h, spec, tuple(int(p) for p in path_indices))
