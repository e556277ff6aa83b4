"""Probability measures on R seen through their symmetric quantile functions.

A canonical grid field ``X`` stands for ``mu = Leb o X^{-1}``; integrals
against ``mu`` are grid averages of ``f(X)`` and the 2-Wasserstein distance
is the L^2 distance between canonical fields.
"""

from __future__ import annotations

import numpy as np

from .rearrange import is_canonical, rearrange


class MeasureView:
    """Read-only view of a canonical field as the law it pushes Lebesgue measure to."""

    def __init__(self, field: np.ndarray, check: bool = True):
        field = np.asarray(field, dtype=float)
        if check and not np.all(is_canonical(field, 1e-12 * (1.0 + np.abs(field).max()))):
            raise ValueError("field is not canonical; pass rearrange(field) or check=False")
        self.field = field

    @classmethod
    def of(cls, values: np.ndarray) -> "MeasureView":
        """Law of an arbitrary grid field (rearranged first)."""
        return cls(rearrange(values), check=False)

    @property
    def M(self) -> int:
        return self.field.shape[-1]

    def integrate(self, f) -> np.ndarray:
        return pushforward_integral(self, f)


def pushforward_integral(mv: MeasureView, f) -> np.ndarray:
    """``int f dmu = (1/M) sum_j f(X(x_j))``."""
    return np.mean(f(mv.field), axis=-1)


def quantile(mv: MeasureView, p: float) -> float:
    """``q(p) = X((1-p)/2)`` with linear interpolation between grid nodes."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    X = mv.field
    M = X.shape[-1]
    # X is non-increasing on the half grid 0 .. M/2
    pos = (1.0 - p) / 2.0 * M
    lo = min(int(np.floor(pos)), M // 2)
    hi = min(lo + 1, M // 2)
    w = pos - lo
    return float((1.0 - w) * X[..., lo] + w * X[..., hi])


def w2(a: MeasureView, b: MeasureView) -> np.ndarray:
    if a.M != b.M:
        raise ValueError("measures must live on the same grid")
    return np.sqrt(np.mean((a.field - b.field) ** 2, axis=-1))


def w2_oracle(a: MeasureView, b: MeasureView, n_samples: int) -> float:
    """Sort-and-pair optimal transport between empirical samples of both laws.

    Samples are the fields evaluated at ``n_samples`` uniform points of the
    circle (nearest grid node), so the empirical laws converge to ``a``, ``b``.
    """
    u = (np.arange(n_samples) + 0.5) / n_samples

    def sample(mv):
        idx = np.floor(u * mv.M).astype(int) % mv.M
        return np.sort(mv.field[idx])

    return float(np.sqrt(np.mean((sample(a) - sample(b)) ** 2)))
