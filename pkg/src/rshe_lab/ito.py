"""Ito expansion of ``phi(mu_t)`` along scheme trajectories, and Monte Carlo studies.

For a trajectory ``X_0 .. X_n`` the four right-hand-side terms are
discretised at the left end of each step:

    t_grad  = -sum_n h <grad_d_mu(X_n), (DX_n)^2>
    t_stoch =  sum_n sum_k lambda_k <d_mu(X_n), e_k> dbeta_n^k
    t_f1    =  1/2 sum_n h <grad_d_mu(X_n), F_1^N>
    t_f2    =  1/2 sum_n h << d2_mu(X_n, X_n), F_2^N >>

and the residual is ``phi(X_n) - phi(X_0) - (t_grad + t_stoch + t_f1 + t_f2)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .meanfield import MeanFieldFunction, f2_contraction, noise_fields
from .noise import NoiseLedger, path_rng, sample_ledger, spectrum
from .scheme import (
    SchemeConfig,
    Trajectory,
    _bridge_coefficients,
    eta_from_trajectory,
    eta_orthogonality,
    eta_pairing_path,
    largest_drop,
    run_paths,
)
from .spectral import grad_sq_norm, heat_evolve, laplacian_eigenvalues, spectral_derivative_values, to_grid, to_spectral


@dataclass(frozen=True)
class ItoLedger:
    t_grad: np.ndarray
    t_stoch: np.ndarray
    t_f1: np.ndarray
    t_f2: np.ndarray
    phi_start: np.ndarray
    phi_end: np.ndarray
    residual: np.ndarray

    @property
    def normalized_residual(self) -> np.ndarray:
        return self.residual / (1.0 + np.abs(self.phi_start))

    def recomputed_residual(self) -> np.ndarray:
        return self.phi_end - self.phi_start - (self.t_grad + self.t_stoch + self.t_f1 + self.t_f2)


def _midstep_states(traj: Trajectory) -> np.ndarray:
    """``Y`` at the middle of every step, bridged from the recorded draws."""
    cfg = traj.config
    h, N = cfg.h, cfg.N
    tau = 0.5 * h
    w_b, w_c, sd = _bridge_coefficients(laplacian_eigenvalues(N), h, tau)
    led = traj.ledger
    det = heat_evolve(to_spectral(traj.states[..., :-1, :], N), tau)
    # one extra generator per path, disjoint from the noise substreams
    z = np.stack([path_rng(cfg.noise.seed, p, 1).standard_normal(led.dbeta.shape[-2:]) for p in led.path_indices])
    z = z.reshape(led.dbeta.shape)
    J = w_b * led.dbeta + w_c * led.conv + sd * z
    return to_grid(det + spectrum(cfg.noise) * J, cfg.M)


def accumulate(traj: Trajectory, phi: MeanFieldFunction, separable: bool = True, grad_at: str = "left") -> ItoLedger:
    """Ito terms along ``traj`` (single or batched).

    ``grad_at="mid"`` evaluates the gradient term at the bridged mid-step
    value of ``Y`` instead of ``X_n``.
    """
    if grad_at not in ("left", "mid"):
        raise ValueError(f"grad_at must be 'left' or 'mid', got {grad_at!r}")
    cfg = traj.config
    led = traj.ledger
    if led.spec.N != cfg.N or traj.states.shape[-1] != cfg.M:
        raise ValueError("trajectory and noise ledger disagree on the mode/grid configuration")
    h, M, N = cfg.h, cfg.M, cfg.N
    phi_start = phi.phi(traj.states[..., 0, :])
    phi_end = phi.phi(traj.states[..., -1, :])
    if traj.n_steps == 0:
        z = np.zeros_like(phi_start)
        return ItoLedger(z, z, z, z, phi_start, phi_end, phi_end - phi_start)

    X = traj.states[..., :-1, :]
    F1, lam2 = noise_fields(cfg.noise, M)
    lam = spectrum(cfg.noise)

    Xg = _midstep_states(traj) if grad_at == "mid" else X
    DX = spectral_derivative_values(to_spectral(Xg, N), M)
    t_grad = -h * np.sum(np.mean(phi.grad_d_mu(Xg, Xg) * DX * DX, axis=-1), axis=-1)

    psi = phi.grad_d_mu(X, X)
    t_f1 = 0.5 * h * np.sum(np.mean(psi * F1, axis=-1), axis=-1)
    t_f2 = 0.5 * h * np.sum(f2_contraction(phi, X, lam2, separable), axis=-1)
    dmu_modes = to_spectral(phi.d_mu(X, X), N)
    t_stoch = np.sum(lam * dmu_modes * led.dbeta, axis=(-2, -1))

    residual = phi_end - phi_start - (t_grad + t_stoch + t_f1 + t_f2)
    return ItoLedger(t_grad, t_stoch, t_f1, t_f2, phi_start, phi_end, residual)


# ---------------------------------------------------------------- studies


@dataclass
class StudyReport:
    kind: str
    meta: dict
    aggregates: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def add(self, h, statistic, value, se=None, **extra):
        rec = {"h": h, "statistic": statistic, "value": float(value)}
        rec["se"] = None if se is None else float(se)
        rec.update(extra)
        self.aggregates.append(rec)

    def get(self, statistic, h=None, **extra):
        for rec in self.aggregates:
            if rec["statistic"] == statistic and (h is None or rec["h"] == h):
                if all(rec.get(k) == v for k, v in extra.items()):
                    return rec
        raise KeyError((statistic, h, extra))

    def value(self, statistic, h=None, **extra) -> float:
        return self.get(statistic, h, **extra)["value"]

    def to_json(self) -> str:
        meta = dict(self.meta, kind=self.kind, version=__version__)
        return json.dumps({"meta": meta, "aggregates": self.aggregates, "rows": self.rows}, indent=1, sort_keys=True)

    def _csv(self, records) -> str:
        buf = io.StringIO()
        for k, v in sorted(dict(self.meta, kind=self.kind, version=__version__).items()):
            buf.write(f"# {k}={json.dumps(v)}\n")
        if records:
            cols = list(dict.fromkeys(k for r in records for k in r))
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in records:
                w.writerow({k: _fmt(r.get(k)) for k in cols})
        return buf.getvalue()

    def aggregates_csv(self) -> str:
        return self._csv(self.aggregates)

    def rows_csv(self) -> str:
        return self._csv(self.rows)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _chunks(indices, size):
    indices = list(indices)
    return [tuple(indices[i : i + size]) for i in range(0, len(indices), size)]


def _map_paths(fn, cfg: SchemeConfig, path_indices, threads: int = 1, chunk: int = 50):
    """Run ``fn(trajectory_chunk)`` over path chunks; results in chunk order."""
    parts = _chunks(path_indices, chunk)

    def work(idx):
        return fn(run_paths(cfg, idx))

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, parts))
    return [work(p) for p in parts]


def config_for_h(base: SchemeConfig, h: float, T: float) -> SchemeConfig:
    n_steps = int(round(T / h))
    if not math.isclose(n_steps * h, T, rel_tol=1e-9):
        raise ValueError(f"T={T} is not a multiple of h={h}")
    return replace(base, h=h, n_steps=n_steps)


def _path_block(h_index: int, n_paths: int):
    # disjoint substreams per h: no common random numbers across step sizes
    return range(h_index * n_paths, (h_index + 1) * n_paths)


def study_meta(base: SchemeConfig, T: float, h_list, n_paths: int, **extra) -> dict:
    meta = {k: v for k, v in base.header().items() if k not in ("h", "n_steps")}
    meta.update(T=T, h_list=[float(h) for h in h_list], n_paths=n_paths)
    meta.update(extra)
    return meta


def mc_residual_study(
    base: SchemeConfig,
    phi: MeanFieldFunction,
    h_list,
    n_paths: int,
    T: float = 0.25,
    threads: int = 1,
    grad_at: str = "left",
) -> StudyReport:
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if list(h_list) != sorted(h_list, reverse=True):
        raise ValueError("h_list must be decreasing")
    rep = StudyReport("ito-verify", study_meta(base, T, h_list, n_paths, phi=phi.name, grad_at=grad_at))
    for hi, h in enumerate(h_list):
        cfg = config_for_h(base, h, T)
        paths = _path_block(hi, n_paths)
        parts = _map_paths(lambda tr: accumulate(tr, phi, grad_at=grad_at), cfg, paths, threads)
        led = {k: np.concatenate([getattr(p, k) for p in parts]) for k in ItoLedger.__dataclass_fields__}
        led = ItoLedger(**led)
        for name, vals in [
            ("residual", led.residual),
            ("abs_residual", np.abs(led.residual)),
            ("normalized_residual", led.normalized_residual),
            ("t_grad", led.t_grad),
            ("t_stoch", led.t_stoch),
            ("t_f1", led.t_f1),
            ("t_f2", led.t_f2),
            ("phi_end_minus_start", led.phi_end - led.phi_start),
        ]:
            rep.add(h, name, *mean_se(vals))
        for p, i in enumerate(paths):
            rep.rows.append(
                {
                    "h": h,
                    "path": i,
                    "residual": float(led.residual[p]),
                    "t_grad": float(led.t_grad[p]),
                    "t_stoch": float(led.t_stoch[p]),
                    "t_f1": float(led.t_f1[p]),
                    "t_f2": float(led.t_f2[p]),
                    "phi_start": float(led.phi_start[p]),
                    "phi_end": float(led.phi_end[p]),
                }
            )
    return rep


def moment_study(base: SchemeConfig, h_list, p_list, n_paths: int, T: float = 0.25, threads: int = 1) -> StudyReport:
    rep = StudyReport("moments", study_meta(base, T, h_list, n_paths, p_list=list(p_list)))

    def stats(tr):
        grad = grad_sq_norm(to_spectral(tr.states, tr.config.N))
        l2sq = np.mean(tr.states**2, axis=-1)
        return grad, l2sq

    for hi, h in enumerate(h_list):
        cfg = config_for_h(base, h, T)
        parts = _map_paths(stats, cfg, _path_block(hi, n_paths), threads)
        grad = np.concatenate([g for g, _ in parts])
        l2sq = np.concatenate([s for _, s in parts])
        for p in p_list:
            g_mean = np.mean(grad**p, axis=0)
            n_star = int(np.argmax(g_mean))
            _, se = mean_se(grad[:, n_star] ** p)
            rep.add(h, "max_n_E_grad_sq_pow", g_mean[n_star], se, p=p, argmax_step=n_star)
            sup = np.max(l2sq, axis=1) ** p
            rep.add(h, "E_max_n_l2_sq_pow", *mean_se(sup), p=p)
        rep.rows.extend(
            {"h": h, "step": n, "E_grad_sq": float(v)} for n, v in enumerate(np.mean(grad, axis=0))
        )
    return rep


E1 = np.array([0.0, 1.0])
E0_HALF_E1 = np.array([1.0, 0.5])


def eta_study(base: SchemeConfig, eps_list, n_paths: int, h_list=None, T: float = 0.25, threads: int = 1) -> StudyReport:
    """Reflection diagnostics per step size.

    For each path: the largest downward excursion of ``<eta_t, u>`` for
    ``u = e_1`` and ``u = e_0 + e_1/2``, and the smoothed pairing
    ``sum e^{eps Delta} X_n . (eta_{n+1} - eta_n)`` for every eps.
    """
    if h_list is None:
        h_list = [base.h]
    rep = StudyReport("eta-check", study_meta(base, T, h_list, n_paths, eps_list=list(eps_list)))

    def stats(tr):
        eta = eta_from_trajectory(tr)
        drops = [largest_drop(eta_pairing_path(eta, u)) for u in (E1, E0_HALF_E1)]
        orth = [eta_orthogonality(tr, eta, e) for e in eps_list]
        return np.stack(drops), np.stack(orth)

    for hi, h in enumerate(h_list):
        cfg = config_for_h(base, h, T)
        parts = _map_paths(stats, cfg, _path_block(hi, n_paths), threads)
        drops = np.concatenate([d for d, _ in parts], axis=1)
        orth = np.concatenate([o for _, o in parts], axis=1)
        rep.add(h, "drop_e1", *mean_se(drops[0]))
        rep.add(h, "drop_e0_half_e1", *mean_se(drops[1]))
        for e, vals in zip(eps_list, orth):
            rep.add(h, "orthogonality", *mean_se(vals), eps=float(e))
    return rep


def generator_check(
    base: SchemeConfig,
    phi: MeanFieldFunction,
    delta: float,
    n_pairs: int,
    x: np.ndarray | None = None,
) -> dict:
    """Compare ``(E phi(mu_delta) - phi(mu_0)) / delta`` with ``L phi(mu_0)``.

    Paths restart from ``x`` (default ``base.x0``) and run ``delta / h``
    steps; each draw is paired with its negation (antithetic sampling).
    """
    from .meanfield import generator

    cfg = config_for_h(base if x is None else replace(base, x0=x), base.h, delta)
    led = sample_ledger(cfg.noise, cfg.h, cfg.n_steps, range(n_pairs))
    anti = NoiseLedger(-led.dbeta, -led.conv, led.h, led.spec, led.path_indices)
    plus = run_paths(cfg, ledger=led).states[:, -1]
    minus = run_paths(cfg, ledger=anti).states[:, -1]
    phi0 = float(phi.phi(cfg.x0))
    pair = 0.5 * (phi.phi(plus) + phi.phi(minus)) - phi0
    est, se = mean_se(pair / delta)
    return {
        "delta": delta,
        "h": cfg.h,
        "estimate": est,
        "se": se,
        "generator": float(generator(phi, cfg.x0, cfg.noise)),
    }
