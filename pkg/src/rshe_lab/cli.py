"""Batch runner: ``rshe-lab <command> [--config FILE] [overrides]``.

Config files are flat ``key = value`` text; command-line flags override them.
Reports go to ``--out`` (default ``$RSHE_OUTPUT_DIR`` or the current
directory). Exit codes: 0 success, 2 invalid configuration, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import meanfield as mf
from .fuzz import inequality_sweep
from .ito import eta_study, generator_check, mc_residual_study, moment_study
from .noise import NoiseSpec
from .scheme import NumericalAbort, SchemeConfig, initial_condition, run, trajectory_csv

COMMANDS = ("simulate", "ito-verify", "inequalities", "generator-check", "eta-check", "moments")
OUTPUT_ENV = "RSHE_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    M: int = 256
    N: int = 128
    lambda_exponent: float = 0.75
    multiplier: float = 1.0
    h: float = 2.0**-8
    h_list: tuple = (2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9)
    T: float = 0.25
    n_paths: int = 200
    seed: int = 0
    phi: tuple = ("linear_sin_a1",)
    x0: str = "cos:0.5,0.3"
    out: str = ""
    format: str = "json"
    threads: int = 1
    count: int = 1000
    eps_list: tuple = (0.1, 0.03, 0.01)
    p_list: tuple = (1, 2)
    delta: float = 2.0**-16
    substeps: int = 4
    grad_at: str = "left"
    path_index: int = 0

    def resolved(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d.pop("out")
        d.pop("threads")  # does not affect results
        return d


# how each key is parsed from text (config files and flags share this)
def _floats(s):
    return tuple(_float(v) for v in str(s).split(",") if v.strip())


def _float(s):
    s = str(s).strip()
    if s.startswith("2^"):
        return 2.0 ** float(s[2:])
    return float(s)


def _ints(s):
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _names(s):
    return tuple(v.strip() for v in str(s).split(",") if v.strip())


PARSERS = {
    "M": int,
    "N": int,
    "lambda_exponent": _float,
    "multiplier": _float,
    "h": _float,
    "h_list": _floats,
    "T": _float,
    "n_paths": int,
    "seed": int,
    "phi": _names,
    "x0": str,
    "out": str,
    "format": str,
    "threads": int,
    "count": int,
    "eps_list": _floats,
    "p_list": _ints,
    "delta": _float,
    "substeps": int,
    "grad_at": str,
    "path_index": int,
}
ALIASES = {"lambda": "lambda_exponent", "paths": "n_paths", "grid": "M", "modes": "N"}


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[ALIASES.get(key, key).replace("-", "_")] = val
    return out


def build_config(command: str, raw: dict) -> ExperimentConfig:
    """Parse and validate raw string/number values into an ``ExperimentConfig``."""
    kw = {}
    for key, val in raw.items():
        if key == "command":
            continue
        if key not in PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            kw[key] = PARSERS[key](val)
        except (TypeError, ValueError):
            raise ConfigError(key, f"cannot parse {val!r}") from None
    cfg = ExperimentConfig(command=command, **kw)
    validate(cfg)
    return cfg


def _require(ok, name, msg):
    if not ok:
        raise ConfigError(name, msg)


def _pos(v):
    return isinstance(v, (int, float)) and math.isfinite(v) and v > 0


def _check_multiple(horizon, steps, name):
    for h in steps:
        n = round(horizon / h)
        _require(n >= 1 and math.isclose(n * h, horizon, rel_tol=1e-9), name, f"horizon {horizon} is not a multiple of {h}")


def validate(cfg: ExperimentConfig) -> None:
    _require(cfg.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    _require(cfg.M >= 4 and cfg.M % 2 == 0, "M", "grid size must be even and >= 4")
    _require(1 <= cfg.N <= cfg.M // 2, "N", f"mode cutoff must lie in [1, M/2={cfg.M // 2}]")
    _require(cfg.lambda_exponent > 0.5, "lambda_exponent", "must exceed 1/2")
    _require(cfg.multiplier >= 0 and math.isfinite(cfg.multiplier), "multiplier", "must be finite and >= 0")
    _require(_pos(cfg.h), "h", "must be positive")
    _require(_pos(cfg.T), "T", "must be positive")
    _require(len(cfg.h_list) > 0 and all(_pos(h) for h in cfg.h_list), "h_list", "entries must be positive")
    _require(list(cfg.h_list) == sorted(cfg.h_list, reverse=True), "h_list", "must be decreasing")
    if cfg.command == "simulate":
        _check_multiple(cfg.T, [cfg.h], "h")
    elif cfg.command != "inequalities":
        _check_multiple(cfg.T, cfg.h_list, "h_list")
    _require(cfg.n_paths >= 2, "n_paths", "need at least two paths")
    _require(cfg.seed >= 0, "seed", "must be >= 0")
    _require(cfg.path_index >= 0, "path_index", "must be >= 0")
    _require(cfg.format in ("csv", "json"), "format", "must be csv or json")
    _require(cfg.threads >= 1, "threads", "must be >= 1")
    _require(cfg.count >= 1, "count", "must be >= 1")
    _require(all(_pos(e) for e in cfg.eps_list), "eps_list", "entries must be positive")
    _require(all(p >= 1 for p in cfg.p_list), "p_list", "entries must be >= 1")
    _require(_pos(cfg.delta), "delta", "must be positive")
    _require(cfg.substeps >= 1, "substeps", "must be >= 1")
    _require(cfg.grad_at in ("left", "mid"), "grad_at", "must be left or mid")
    for name in cfg.phi:
        try:
            mf.get(name)
        except (KeyError, ValueError) as exc:
            raise ConfigError("phi", str(exc).strip("'\"")) from None
    try:
        x0 = initial_condition(cfg.x0, cfg.M)
        SchemeConfig(cfg.h, 1, cfg.M, NoiseSpec(cfg.lambda_exponent, cfg.N, cfg.seed, cfg.multiplier), x0)
    except ValueError as exc:
        raise ConfigError("x0", str(exc)) from None


def scheme_config(cfg: ExperimentConfig) -> SchemeConfig:
    spec = NoiseSpec(cfg.lambda_exponent, cfg.N, cfg.seed, cfg.multiplier)
    n = max(1, round(cfg.T / cfg.h))
    return SchemeConfig(cfg.h, n, cfg.M, spec, initial_condition(cfg.x0, cfg.M))


# ---------------------------------------------------------------- output


def _meta(cfg: ExperimentConfig) -> dict:
    return {"config": cfg.resolved(), "version": __version__}


def _csv_header(cfg: ExperimentConfig) -> str:
    return "".join(f"# {k}={json.dumps(v)}\n" for k, v in sorted(_meta(cfg).items()))


def _write(outdir: Path, name: str, text: str) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    path.write_text(text)
    return path


def _write_report(cfg, outdir, stem, rep) -> list[Path]:
    if cfg.format == "json":
        doc = json.loads(rep.to_json())
        doc["meta"].update(_meta(cfg))
        return [_write(outdir, f"{stem}.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")]
    head = _csv_header(cfg)
    return [
        _write(outdir, f"{stem}_aggregates.csv", head + rep.aggregates_csv()),
        _write(outdir, f"{stem}_rows.csv", head + rep.rows_csv()),
    ]


def _write_record(cfg, outdir, stem, record: dict) -> list[Path]:
    if cfg.format == "json":
        doc = {"meta": _meta(cfg), "result": record}
        return [_write(outdir, f"{stem}.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")]
    keys = sorted(record)
    line = ",".join(json.dumps(record[k]) if isinstance(record[k], (list, dict)) else repr(record[k]) for k in keys)
    return [_write(outdir, f"{stem}.csv", _csv_header(cfg) + ",".join(keys) + "\n" + line + "\n")]


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg, outdir):
    sc = scheme_config(cfg)
    traj = run(sc, cfg.path_index)
    if cfg.format == "csv":
        files = [_write(outdir, "simulate.csv", _csv_header(cfg) + trajectory_csv(traj))]
    else:
        doc = {"meta": _meta(cfg), "times": traj.times.tolist(), "states": traj.states.tolist()}
        files = [_write(outdir, "simulate.json", json.dumps(doc, sort_keys=True) + "\n")]
    l2 = float(np.sqrt(np.mean(traj.states[-1] ** 2)))
    print(f"simulate: steps={sc.n_steps} h={sc.h:g} path={cfg.path_index} final_l2={l2:.6g} -> {files[0]}")
    return files


def _trend_ok(values, ses, k=2.0):
    return all(b <= a + k * math.hypot(sa, sb) for (a, sa), (b, sb) in zip(zip(values, ses), zip(values[1:], ses[1:])))


def cmd_ito_verify(cfg, outdir):
    base = scheme_config(replace(cfg, h=cfg.h_list[0]))
    files = []
    for name in cfg.phi:
        rep = mc_residual_study(base, mf.get(name), cfg.h_list, cfg.n_paths, cfg.T, cfg.threads, cfg.grad_at)
        files += _write_report(cfg, outdir, f"ito-verify_{name}", rep)
        abs_r = [rep.get("abs_residual", h) for h in cfg.h_list]
        last = rep.get("residual", cfg.h_list[-1])
        mono = _trend_ok([r["value"] for r in abs_r], [r["se"] for r in abs_r])
        print(
            f"ito-verify {name}: mean|res| "
            + " ".join(f"{r['value']:.4g}" for r in abs_r)
            + f" decreasing={'yes' if mono else 'no'}"
            + f" res(h={cfg.h_list[-1]:g})={last['value']:+.3g}+-{last['se']:.2g}"
        )
    return files


def cmd_inequalities(cfg, outdir):
    res = inequality_sweep(cfg.count, cfg.M, cfg.seed)
    record = {"count": res.count, "M": res.M, "violations": res.violations, "checks": res.checks, "worst_excess": res.worst}
    files = _write_record(cfg, outdir, "inequalities", record)
    print(f"inequalities: count={res.count} M={res.M} violations={res.violations}")
    return files


def cmd_generator_check(cfg, outdir):
    # restarts run substeps steps of size delta/substeps; h is not used here
    base = scheme_config(replace(cfg, h=cfg.delta / cfg.substeps, T=cfg.delta))
    stiffness = cfg.delta * 4 * math.pi**2 * cfg.N**2
    records = []
    for name in cfg.phi:
        r = generator_check(base, mf.get(name), cfg.delta, cfg.n_paths)
        r["phi"] = name
        records.append(r)
        z = (r["estimate"] - r["generator"]) / r["se"] if r["se"] > 0 else float("nan")
        print(f"generator-check {name}: estimate={r['estimate']:.5g}+-{r['se']:.2g} generator={r['generator']:.5g} z={z:+.2f} delta*a_N={stiffness:.3g}")
    return _write_record(cfg, outdir, "generator-check", {"results": records})


def cmd_eta_check(cfg, outdir):
    base = scheme_config(replace(cfg, h=cfg.h_list[0]))
    rep = eta_study(base, cfg.eps_list, cfg.n_paths, cfg.h_list, cfg.T, cfg.threads)
    files = _write_report(cfg, outdir, "eta-check", rep)
    drops = " ".join(f"{rep.value('drop_e1', h):.3g}" for h in cfg.h_list)
    orth = " ".join(f"{rep.value('orthogonality', cfg.h_list[-1], eps=float(e)):.3g}" for e in cfg.eps_list)
    print(f"eta-check: drop_e1 {drops}; orthogonality(h={cfg.h_list[-1]:g}) {orth}")
    return files


def cmd_moments(cfg, outdir):
    base = scheme_config(replace(cfg, h=cfg.h_list[0]))
    rep = moment_study(base, cfg.h_list, cfg.p_list, cfg.n_paths, cfg.T, cfg.threads)
    files = _write_report(cfg, outdir, "moments", rep)
    g = [rep.value("max_n_E_grad_sq_pow", h, p=cfg.p_list[0]) for h in cfg.h_list]
    print(f"moments: max_n E|DX|^2 spread={max(g) / min(g):.3g} over {len(g)} step sizes")
    return files


DISPATCH = {
    "simulate": cmd_simulate,
    "ito-verify": cmd_ito_verify,
    "inequalities": cmd_inequalities,
    "generator-check": cmd_generator_check,
    "eta-check": cmd_eta_check,
    "moments": cmd_moments,
}


# ---------------------------------------------------------------- entry point


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    for key in PARSERS:
        flag = "--" + key.replace("_", "-")
        extra = [f"--{a}" for a, k in ALIASES.items() if k == key and a != key]
        common.add_argument(flag, *extra, dest=key, default=None, metavar=key.upper())
    p = argparse.ArgumentParser(prog="rshe-lab", description="Rearranged stochastic heat equation laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def _error(record: dict, code: int) -> int:
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        raw = read_config_file(args.config) if args.config else {}
        raw.update({k: v for k, v in vars(args).items() if k in PARSERS and v is not None})
        cfg = build_config(args.command, raw)
    except ConfigError as exc:
        return _error({"error": "invalid_config", "field": exc.field, "message": exc.message}, 2)
    outdir = Path(cfg.out or os.environ.get(OUTPUT_ENV, "."))
    try:
        DISPATCH[cfg.command](cfg, outdir)
    except NumericalAbort as exc:
        return _error({"error": "numerical_abort", "path": exc.path, "seed": exc.seed, "step": exc.step, "message": str(exc)}, 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
