"""Random grid fields and violation sweeps for the rearrangement inequalities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rearrange import key_inequality_gap, rearrange, riesz_gap

FAMILIES = ("white", "smooth", "steps", "ties", "near_canonical")


def random_field(rng: np.random.Generator, M: int, family: str | None = None) -> np.ndarray:
    """One random field of size ``M`` from the named family (random family if None)."""
    if family is None:
        family = FAMILIES[rng.integers(len(FAMILIES))]
    x = np.arange(M) / M
    if family == "white":
        return rng.standard_normal(M)
    if family == "smooth":
        k = np.arange(1, 17)
        amp = rng.standard_normal((2, k.size)) / k**1.5
        return amp[0] @ np.cos(2 * np.pi * np.outer(k, x)) + amp[1] @ np.sin(2 * np.pi * np.outer(k, x))
    if family == "steps":
        cuts = np.sort(rng.integers(0, M, size=rng.integers(1, 8)))
        levels = rng.standard_normal(cuts.size + 1)
        return levels[np.searchsorted(cuts, np.arange(M), side="right")]
    if family == "ties":
        return rng.integers(-3, 4, size=M).astype(float)
    if family == "near_canonical":
        base = rearrange(np.cos(2 * np.pi * x) * rng.uniform(0.5, 2.0))
        return base + 10.0 ** rng.uniform(-4, -1) * rng.standard_normal(M)
    raise ValueError(f"unknown field family {family!r}")


def _scaled_excess(lhs, rhs, rtol):
    """Positive when ``lhs > rhs + rtol*(1 + |rhs|)``."""
    return lhs - rhs - rtol * (1.0 + abs(rhs))


@dataclass
class SweepResult:
    count: int
    M: int
    checks: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)

    @property
    def violations(self) -> int:
        return sum(self.checks.values())

    def record(self, name, excess):
        self.checks[name] = self.checks.get(name, 0) + int(excess > 0)
        self.worst[name] = max(self.worst.get(name, -np.inf), float(excess))


def inequality_sweep(count: int, M: int = 256, seed: int = 0, h_list=(0.0, 0.01, 0.1), rtol: float = 1e-10) -> SweepResult:
    """Fuzz equimeasurability, the heat-averaged gradient inequality and Riesz.

    Each draw checks ``u*`` against ``u`` (multiset equality, idempotence,
    L^p norms), the key inequality at every ``h`` and one Riesz triple.
    """
    rng = np.random.default_rng(seed)
    res = SweepResult(count, M)
    for _ in range(count):
        u = random_field(rng, M)
        us = rearrange(u)
        res.record("equimeasurable", float(np.any(np.sort(us) != np.sort(u))))
        res.record("idempotent", float(np.any(rearrange(us) != us)))
        for p in (1, 2, 4):
            a, b = np.sum(np.abs(np.sort(us)) ** p), np.sum(np.abs(np.sort(u)) ** p)
            res.record(f"norm_p{p}", abs(a - b) - 1e-12 * abs(b))
        for h in h_list:
            lhs, rhs = key_inequality_gap(u, h)
            res.record(f"key_h{h:g}", _scaled_excess(float(lhs), float(rhs), rtol))
        f, g, l = (random_field(rng, M) for _ in range(3))
        lhs, rhs = riesz_gap(f, g, l)
        res.record("riesz", _scaled_excess(lhs, rhs, rtol))
    return res
