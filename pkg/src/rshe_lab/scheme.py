"""Rearranged heat-flow scheme: ``X_{n+1} = (e^{h Delta} X_n + int e^{((n+1)h-s) Delta} dW_s)^*``.

Trajectories carry a leading path axis when several paths are run together;
all reconstruction helpers work on either layout.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .noise import NoiseLedger, NoiseSpec, path_rng, sample_ledger, spectrum
from .rearrange import is_canonical, rearrange
from .spectral import (
    check_grid_size,
    heat_evolve,
    laplacian_eigenvalues,
    to_grid,
    to_spectral,
)


class NumericalAbort(RuntimeError):
    def __init__(self, message, step=None, path=None, seed=None):
        super().__init__(message)
        self.step = step
        self.path = path
        self.seed = seed


@dataclass(frozen=True)
class SchemeConfig:
    h: float
    n_steps: int
    M: int = 256
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    x0: np.ndarray | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step h must be positive, got {self.h}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        check_grid_size(self.M)
        if self.N > self.M // 2:
            raise ValueError(f"N={self.N} exceeds M/2={self.M // 2}")
        x0 = cos_field(0.5, 0.3, self.M) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0.shape != (self.M,):
            raise ValueError(f"x0 must have shape ({self.M},), got {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 has non-finite entries")
        if not is_canonical(x0, 1e-12 * (1.0 + np.abs(x0).max())):
            raise ValueError("x0 must be symmetric and non-increasing on [0, 1/2]")
        object.__setattr__(self, "x0", rearrange(x0))

    @property
    def N(self) -> int:
        return self.noise.N

    @property
    def T(self) -> float:
        return self.n_steps * self.h

    def header(self) -> dict:
        return {
            "h": self.h,
            "n_steps": self.n_steps,
            "M": self.M,
            "N": self.N,
            "lambda_exponent": self.noise.lambda_exponent,
            "multiplier": self.noise.multiplier,
            "seed": self.noise.seed,
        }


def constant_field(c: float, M: int) -> np.ndarray:
    return np.full(M, float(c))


def cos_field(c0: float, c1: float, M: int) -> np.ndarray:
    """``c0 + c1 e_1`` on the grid; canonical for ``c1 >= 0``."""
    coeffs = np.array([c0, c1], dtype=float)
    return to_grid(coeffs, M)


def mollified_step(eps: float, M: int, width: float = 0.25) -> np.ndarray:
    """``e^{eps Delta}`` applied to the indicator of ``|x| < width``.

    The indicator is canonical, and heat flow keeps it so, which gives a
    canonical H^1 field with steep fronts for small ``eps``.
    """
    x = np.arange(M) / M
    dist = np.minimum(x, 1.0 - x)
    step = (dist < width).astype(float)
    return rearrange(to_grid(heat_evolve(to_spectral(step), eps), M))


def initial_condition(text: str, M: int) -> np.ndarray:
    """Parse ``const:c``, ``cos:c0,c1`` or ``mollified:eps[,width]``."""
    kind, _, args = text.partition(":")
    vals = [float(v) for v in args.split(",") if v.strip()]
    if kind == "const" and len(vals) == 1:
        return constant_field(vals[0], M)
    if kind == "cos" and len(vals) == 2:
        return cos_field(vals[0], vals[1], M)
    if kind == "mollified" and len(vals) in (1, 2):
        return mollified_step(*vals, M=M)
    raise ValueError(f"unknown initial condition {text!r}")


def step(x: np.ndarray, conv_coeffs: np.ndarray, h: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    """One scheme step from canonical ``x`` given the convolution coefficients.

    Returns ``(next_state, predraft)``; works on batches along leading axes.
    """
    N = conv_coeffs.shape[-1] - 1
    predraft = to_grid(heat_evolve(to_spectral(x, N), h) + conv_coeffs, M)
    return rearrange(predraft), predraft


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    predrafts: np.ndarray
    ledger: NoiseLedger
    config: SchemeConfig

    @property
    def h(self) -> float:
        return self.config.h

    @property
    def n_steps(self) -> int:
        return self.states.shape[-2] - 1

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.n_steps + 1)

    def path(self, i: int) -> "Trajectory":
        """Single-path view of a batched trajectory."""
        led = self.ledger
        sub = NoiseLedger(led.dbeta[i], led.conv[i], led.h, led.spec, (led.path_indices[i],))
        return Trajectory(self.states[i], self.predrafts[i], sub, self.config)


def run_paths(cfg: SchemeConfig, path_indices=(0,), ledger: NoiseLedger | None = None) -> Trajectory:
    """Run the scheme for several independent paths at once (vectorised)."""
    if ledger is None:
        ledger = sample_ledger(cfg.noise, cfg.h, cfg.n_steps, path_indices)
    elif ledger.dbeta.ndim == 2:
        ledger = NoiseLedger(ledger.dbeta[None], ledger.conv[None], ledger.h, ledger.spec, ledger.path_indices)
    P = ledger.dbeta.shape[0]
    lam = spectrum(cfg.noise)
    states = np.empty((P, cfg.n_steps + 1, cfg.M))
    predrafts = np.empty((P, cfg.n_steps, cfg.M))
    states[:, 0] = cfg.x0
    x = states[:, 0]
    for n in range(cfg.n_steps):
        x, pre = step(x, lam * ledger.conv[:, n], cfg.h, cfg.M)
        if not np.all(np.isfinite(pre)):
            bad = int(np.nonzero(~np.all(np.isfinite(pre), axis=-1))[0][0])
            raise NumericalAbort(
                f"non-finite field at step {n}, path {ledger.path_indices[bad]}",
                step=n,
                path=ledger.path_indices[bad],
                seed=cfg.noise.seed,
            )
        states[:, n + 1] = x
        predrafts[:, n] = pre
    return Trajectory(states, predrafts, ledger, cfg)


def run(cfg: SchemeConfig, path_index: int = 0) -> Trajectory:
    return run_paths(cfg, (path_index,)).path(0)


def _bridge_coefficients(a: np.ndarray, h: float, tau: float):
    """Conditional law of ``J = int_0^tau e^{-a(tau-s)} dbeta_s`` given ``(dbeta_h, conv_h)``.

    Returns ``(w_b, w_c, sd)`` with ``E[J | .] = w_b dbeta + w_c conv`` and
    conditional standard deviation ``sd``, mode by mode.
    """
    w_b = np.empty_like(a)
    w_c = np.zeros_like(a)
    var = np.empty_like(a)
    # a = 0: Brownian bridge
    zero = a == 0
    w_b[zero] = tau / h
    var[zero] = tau * (h - tau) / h
    k = ~zero
    ak = a[k]
    v_b = h
    c = -np.expm1(-ak * h) / ak
    v_c = -np.expm1(-2.0 * ak * h) / (2.0 * ak)
    s_jb = -np.expm1(-ak * tau) / ak
    s_jc = (np.exp(-ak * (h - tau)) - np.exp(-ak * (h + tau))) / (2.0 * ak)
    v_j = -np.expm1(-2.0 * ak * tau) / (2.0 * ak)
    det = v_b * v_c - c * c
    good = det > 1e-12 * v_b * v_c
    wb = np.where(good, (s_jb * v_c - s_jc * c) / np.where(good, det, 1.0), s_jb / v_b)
    wc = np.where(good, (s_jc * v_b - s_jb * c) / np.where(good, det, 1.0), 0.0)
    w_b[k] = wb
    w_c[k] = wc
    var[k] = v_j - (wb * s_jb + wc * s_jc)
    return w_b, w_c, np.sqrt(np.maximum(var, 0.0))


def interpolate_y(traj: Trajectory, t: float, left: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """``Y_t = e^{(t-nh) Delta} X_n + int_{nh}^t e^{(t-s) Delta} dW_s`` on the grid.

    The partial stochastic convolution is sampled from its Gaussian bridge
    given the recorded step draw. ``left=True`` at a step boundary
    ``(n+1)h`` returns the left limit, i.e. the predraft of step n.
    Single-path trajectories only.
    """
    h, n_steps = traj.h, traj.n_steps
    T = h * n_steps
    if t < 0 or t > T * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, {T}]")
    r = t / h
    n = int(np.floor(r + 1e-12))
    if abs(r - round(r)) < 1e-12:
        n = int(round(r))
        if left and n > 0:
            return traj.predrafts[n - 1].copy()
        return traj.states[n].copy()
    tau = t - n * h
    cfg = traj.config
    det = heat_evolve(to_spectral(traj.states[n], cfg.N), tau)
    if cfg.noise.multiplier == 0:
        return to_grid(det, cfg.M)
    if rng is None:
        rng = path_rng(cfg.noise.seed, traj.ledger.path_indices[0], 2, n)
    w_b, w_c, sd = _bridge_coefficients(laplacian_eigenvalues(cfg.N), h, tau)
    draw = traj.ledger.draw(n)
    J = w_b * draw.dbeta + w_c * draw.conv + sd * rng.standard_normal(cfg.N + 1)
    return to_grid(det + spectrum(cfg.noise) * J, cfg.M)


def interpolate_linear(traj: Trajectory, t: float) -> np.ndarray:
    h, n_steps = traj.h, traj.n_steps
    if t < 0 or t > h * n_steps * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, {h * n_steps}]")
    r = min(t / h, n_steps)
    lo = int(np.floor(r))
    hi = min(int(np.ceil(r)), n_steps)
    w = r - lo
    return (1.0 - w) * traj.states[..., lo, :] + w * traj.states[..., hi, :]


@dataclass(frozen=True)
class EtaModes:
    """Cosine modes of the reflection process at the step times, ``(..., n+1, N+1)``."""

    eta_hat: np.ndarray
    x_hat: np.ndarray


def eta_from_trajectory(traj: Trajectory) -> EtaModes:
    """Reconstruct ``<eta_t, e_k>`` from ``<X_t,u> = int <X,Delta u> + <W_t,u> + <eta_t,u>``.

    The time integral uses the left-point rule on the step grid.
    """
    cfg = traj.config
    x_hat = to_spectral(traj.states, cfg.N)
    a = laplacian_eigenvalues(cfg.N)
    lam = spectrum(cfg.noise)
    beta = traj.ledger.brownian_paths()
    drift = np.zeros_like(x_hat)
    drift[..., 1:, :] = np.cumsum(cfg.h * x_hat[..., :-1, :], axis=-2)
    eta = x_hat - x_hat[..., :1, :] + a * drift - lam * beta
    eta[..., 0, :] = 0.0
    return EtaModes(eta, x_hat)


def eta_pairing_path(eta: EtaModes, u_coeffs: np.ndarray, M: int | None = None) -> np.ndarray:
    """``t_n -> <eta_{t_n}, u>``; non-decreasing in the limit for non-increasing ``u``."""
    u_coeffs = np.asarray(u_coeffs, dtype=float)
    K = u_coeffs.shape[-1]
    N = eta.eta_hat.shape[-1] - 1
    if K > N + 1:
        raise ValueError("test function has more modes than the reflection record")
    grid = to_grid(u_coeffs, M or max(2 * N, 4))
    if not is_canonical(grid, 1e-12 * (1.0 + np.abs(grid).max())):
        warnings.warn("test function is not non-increasing; monotonicity is not expected", stacklevel=2)
    return eta.eta_hat[..., :K] @ u_coeffs


def largest_drop(path: np.ndarray) -> np.ndarray:
    """Largest downward excursion ``max_{n <= m} (p_n - p_m)^+`` along the last axis."""
    running_max = np.maximum.accumulate(path, axis=-1)
    return np.max(running_max - path, axis=-1)


def eta_orthogonality(traj: Trajectory, eta: EtaModes, eps: float) -> np.ndarray:
    """Riemann sum of ``int e^{eps Delta} X_r . d eta_r`` over the whole trajectory."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    N = eta.eta_hat.shape[-1] - 1
    weights = np.exp(-laplacian_eigenvalues(N) * eps)
    d_eta = np.diff(eta.eta_hat, axis=-2)
    return np.sum(weights * eta.x_hat[..., :-1, :] * d_eta, axis=(-2, -1))


def write_csv(traj: Trajectory, fh) -> None:
    """One row per step time: ``time, x_0 .. x_{M-1}``; config in ``#`` header lines."""
    if traj.states.ndim != 2:
        raise ValueError("CSV export takes a single path; use Trajectory.path(i)")
    for key, val in traj.config.header().items():
        fh.write(f"# {key}={val}\n")
    fh.write(f"# path_index={traj.ledger.path_indices[0]}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["time"] + [f"x{j}" for j in range(traj.config.M)])
    for t, row in zip(traj.times, traj.states):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_csv(traj, buf)
    return buf.getvalue()


def save_binary(traj: Trajectory, path) -> None:
    """Compact ``.npz`` dump with the config header, states, predrafts and draws."""
    header = traj.config.header()
    np.savez_compressed(
        path,
        header_keys=np.array(list(header)),
        header_vals=np.array([float(v) for v in header.values()]),
        path_indices=np.array(traj.ledger.path_indices),
        x0=traj.config.x0,
        states=traj.states,
        predrafts=traj.predrafts,
        dbeta=traj.ledger.dbeta,
        conv=traj.ledger.conv,
    )


def load_binary(path) -> Trajectory:
    with np.load(path) as z:
        hdr = dict(zip(z["header_keys"].tolist(), z["header_vals"].tolist()))
        spec = NoiseSpec(hdr["lambda_exponent"], int(hdr["N"]), int(hdr["seed"]), hdr["multiplier"])
        cfg = SchemeConfig(hdr["h"], int(hdr["n_steps"]), int(hdr["M"]), spec, z["x0"])
        led = NoiseLedger(z["dbeta"], z["conv"], hdr["h"], spec, tuple(int(p) for p in z["path_indices"]))
        return Trajectory(z["states"], z["predrafts"], led, cfg)


def with_noise(cfg: SchemeConfig, **changes) -> SchemeConfig:
    """Copy of ``cfg`` with fields of its ``NoiseSpec`` replaced."""
    return replace(cfg, noise=replace(cfg.noise, **changes))
