"""Batch front-end: ``heatreflect --config run.json --out results/``.

A config is a strict JSON object::

    {"command": "transfer-run",
     "parameters": {...},
     "output": {"dir": "out", "format": "json"},
     "constants": {"K": 1.0, "D2": 1.0},
     "seed": 7}

Unknown keys anywhere in the schema are rejected before any computation.
Command-line flags override the matching config entries.  Every run ends
by writing ``manifest.json`` with the SHA-256 of each emitted file.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 precondition failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .control import Quadrature, transfer_experiment, trajectory_csv
from .costbounds import (
    PotentialNorms,
    UniversalConstants,
    cost_bound_domain,
    cost_bound_equidistributed,
    cost_bound_equidistributed_domain,
    cost_bound_fractional,
    cost_bound_thick,
)
from .discretize import (
    CoefficientField,
    assemble_operator,
    build_reflection_operators,
    check_discrete_intertwining,
    mirror_cells,
    reflect_coefficients,
    symmetric_pair,
)
from .errors import DomainError, HeatReflectError, InvalidArgument, NumericalFailure, PreconditionViolation
from .geometry import (
    HyperplaneSpec,
    RegionSet,
    ThicknessParams,
    certify_thickness,
    symmetrize_halfspace,
    symmetrize_orthant,
    symmetrize_sector,
)
from .transfer import (
    AbstractSystem,
    check_control_intertwining,
    check_generator_intertwining,
    check_semigroup_commutation,
    fractional_power,
    spectral_intertwining,
    triple_from_reflection,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run", "emit_plot_data", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PRECONDITION = 0, 2, 3, 4


class ConfigError(HeatReflectError, ValueError):
    """The experiment configuration does not validate."""


# ---------------------------------------------------------------------------
# schema

_TOP_KEYS = {"command", "parameters", "output", "constants", "seed"}
_OUTPUT_KEYS = {"dir", "format"}

_SYSTEM_KEYS = {"shape", "cells", "L", "dim", "bc", "A", "V", "control"}
_PARAM_KEYS = {
    "bounds-sweep": {
        "formula", "gamma", "a", "T", "theta", "n", "G", "delta", "d", "sup_norm", "neg_sup_norm", "sweep",
    },
    "geometry-certify": {
        "set", "a", "window", "resolution", "n_offsets", "symmetrize", "gamma", "theta", "symmetrized_window",
    },
    "intertwine-check": _SYSTEM_KEYS | {"times", "phi_power", "lambda_grid"},
    "transfer-run": _SYSTEM_KEYS | {"T", "quadrature", "eps", "data", "compare_direct"},
}
_DEFAULTS = {
    "bounds-sweep": {"formula": "thick", "sweep": "T", "theta": None, "n": None, "d": 2,
                     "sup_norm": 0.0, "neg_sup_norm": 0.0},
    "geometry-certify": {"window": None, "resolution": 64, "n_offsets": 16, "symmetrize": None,
                         "gamma": None, "theta": None, "symmetrized_window": None},
    "intertwine-check": {"shape": "interval", "cells": 32, "L": 1.0, "dim": 1, "bc": "dirichlet", "A": 1.0,
                         "V": 0.0, "control": None, "times": [0.01, 0.1, 1.0], "phi_power": 0.75,
                         "lambda_grid": []},
    "transfer-run": {"shape": "interval", "cells": 64, "L": 1.0, "dim": 1, "bc": "dirichlet", "A": 1.0,
                     "V": 0.0, "control": None, "T": 0.5, "quadrature": {"m": 32, "rule": "gauss"},
                     "eps": None, "data": {"random": 20}, "compare_direct": False},
}
_FORMULAS = {"thick", "fractional", "halfspace", "orthant", "sector", "triangle", "prism",
             "equidistributed", "equidistributed-sector", "equidistributed-triangle",
             "equidistributed-prism"}


@dataclass
class ExperimentConfig:
    command: str
    parameters: dict
    out_dir: Path
    fmt: str = "json"
    constants: UniversalConstants = field(default_factory=UniversalConstants)
    seed: int | None = None
    threads: int = 1


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def parse_constants(spec) -> UniversalConstants:
    """``"K=1,D2=2"`` or ``{"K": 1, "D2": 2}``; ``Dn`` sets ``D(n)``."""
    if isinstance(spec, str):
        items = {}
        for part in filter(None, (p.strip() for p in spec.split(","))):
            if "=" not in part:
                raise ConfigError(f"bad constants entry {part!r}")
            k, v = part.split("=", 1)
            items[k.strip()] = v
        spec = items
    if not isinstance(spec, dict):
        raise ConfigError("constants must be an object or K=..,D2=.. string")
    K, D = 1.0, {}
    for key, val in spec.items():
        try:
            val = float(val)
        except (TypeError, ValueError):
            raise ConfigError(f"constant {key} is not a number") from None
        if key == "K":
            K = val
        elif key.startswith("D") and key[1:].isdigit():
            D[int(key[1:])] = val
        else:
            raise ConfigError(f"unknown constant {key!r}")
    try:
        return UniversalConstants(K=K, D=D)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None


def _needs_seed(command, params) -> bool:
    return command == "transfer-run" and "random" in params.get("data", {})


def load_config(raw: dict, out=None, fmt=None, constants=None, seed=None, threads=None) -> ExperimentConfig:
    """Validate a config object and apply flag overrides."""
    _reject_unknown(raw, _TOP_KEYS, "config")
    command = raw.get("command")
    if command not in _PARAM_KEYS:
        raise ConfigError(f"command must be one of {sorted(_PARAM_KEYS)}, got {command!r}")
    params = raw.get("parameters", {})
    _reject_unknown(params, _PARAM_KEYS[command], "parameters")
    params = {**_DEFAULTS[command], **params}
    output = raw.get("output", {})
    _reject_unknown(output, _OUTPUT_KEYS, "output")
    out_dir = out or output.get("dir")
    if not out_dir:
        raise ConfigError("no output directory (set output.dir or --out)")
    fmt = fmt or output.get("format", "json")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    consts = parse_constants(constants if constants is not None else raw.get("constants", {}))
    seed = seed if seed is not None else raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("seed must be a non-negative integer")
    if _needs_seed(command, params) and seed is None:
        raise ConfigError("a seed is required when random data are requested")
    threads = 1 if threads is None else threads
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    _validate_params(command, params)
    return ExperimentConfig(command, params, Path(out_dir), fmt, consts, seed, threads)


def _validate_params(command, p):
    if command == "bounds-sweep":
        if p["formula"] not in _FORMULAS:
            raise ConfigError(f"unknown formula {p['formula']!r}")
        if p["sweep"] not in ("T", "gamma"):
            raise ConfigError("sweep must be 'T' or 'gamma'")
        if "T" not in p:
            raise ConfigError("bounds-sweep needs T")
        if p["formula"].startswith("equidistributed"):
            if p["sweep"] != "T" or "G" not in p or "delta" not in p:
                raise ConfigError("equidistributed sweeps need G, delta and sweep over T")
        elif "gamma" not in p or "a" not in p:
            raise ConfigError("thick-set sweeps need gamma and a")
    elif command == "geometry-certify":
        if "set" not in p or "a" not in p:
            raise ConfigError("geometry-certify needs set and a")
        if p["symmetrize"] not in (None, "halfspace", "orthant", "sector"):
            raise ConfigError(f"unknown symmetrization {p['symmetrize']!r}")
        if p["symmetrize"] and p["gamma"] is None:
            raise ConfigError("symmetrization needs the declared gamma")
        if p["symmetrize"] == "sector" and p["theta"] is None:
            raise ConfigError("sector symmetrization needs theta")
    else:
        if p["shape"] not in ("interval", "square"):
            raise ConfigError("shape must be 'interval' or 'square'")
        if p["bc"] not in ("dirichlet", "neumann"):
            raise ConfigError("bc must be 'dirichlet' or 'neumann'")
        ctl = p["control"]
        if ctl is not None:
            _reject_unknown(ctl, {"box", "set"}, "parameters.control")
        if command == "transfer-run":
            _reject_unknown(p["quadrature"], {"m", "rule"}, "parameters.quadrature")
            _reject_unknown(p["data"], {"random", "modes"}, "parameters.data")
            if len(p["data"]) != 1:
                raise ConfigError("data must specify exactly one of random or modes")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _cell(v):
    if isinstance(v, (list, tuple)):
        return " ".join(repr(float(x)) for x in v)
    return v


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r.get(h, "")) for h in header])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def emit_plot_data(results, path, x="x", y="y", series="series") -> Path:
    """Write a long-format ``x,series,y`` CSV; empty results give the header only."""
    path = Path(path)
    rows = [{"x": r[x], "series": r.get(series, series) if isinstance(r, dict) else series, "y": r[y]}
            for r in results]
    path.write_text(_csv_text(["x", "series", "y"], rows))
    return path


def _write_manifest(out_dir: Path, files, command) -> Path:
    entries = []
    for f in sorted(files, key=lambda p: p.name):
        data = f.read_bytes()
        entries.append({"path": f.name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    path = out_dir / "manifest.json"
    path.write_text(_json_text({"command": command, "version": __version__, "files": entries}))
    return path


# ---------------------------------------------------------------------------
# commands


def _values(spec):
    if isinstance(spec, dict):
        _reject_unknown(spec, {"logspace", "linspace"}, "sweep values")
        if len(spec) != 1:
            raise ConfigError("sweep values need exactly one of logspace or linspace")
        (kind, args), = spec.items()
        lo, hi, n = args
        fn = np.logspace if kind == "logspace" else np.linspace
        return [float(v) for v in fn(lo, hi, int(n))]
    if isinstance(spec, (int, float)):
        return [float(spec)]
    return [float(v) for v in spec]


def _bound(p, consts, gamma, T):
    f = p["formula"]
    if f == "thick":
        return cost_bound_thick(gamma, p["a"], T, consts)
    if f == "fractional":
        return cost_bound_fractional(gamma, p["a"], T, p["theta"], consts)
    if f in ("halfspace", "orthant", "sector", "triangle", "prism"):
        return cost_bound_domain(f, gamma, p["a"], T, consts, n=p["n"])
    norms = PotentialNorms(p["sup_norm"], p["neg_sup_norm"])
    if f == "equidistributed":
        return cost_bound_equidistributed(p["G"], p["delta"], T, norms, p["d"], consts)
    return cost_bound_equidistributed_domain(f.split("-", 1)[1], p["G"], p["delta"], T, norms, consts, p["n"])


def _bounds_sweep(cfg: ExperimentConfig):
    p = cfg.parameters
    if p["sweep"] == "T":
        xs = _values(p["T"])
        fixed = p.get("gamma")
        if isinstance(fixed, (list, dict)):
            raise ConfigError("gamma must be a single value when sweeping T")
        pairs = [(fixed, T) for T in xs]
    else:
        xs = _values(p["gamma"])
        T = _values(p["T"])
        if len(T) != 1:
            raise ConfigError("T must be a single value when sweeping gamma")
        pairs = [(g, T[0]) for g in xs]
    rows = []
    for x, (g, T) in zip(xs, pairs):
        r = _bound(p, cfg.constants, g, T)
        inputs = {k: v for k, v in r.inputs.items() if k != "constants"}
        rows.append({
            "x": x, "series": r.formula_tag, "formula_tag": r.formula_tag, **inputs,
            "log_value": r.log_value, "value_or_inf": r.value, "overflow": r.overflow,
        })
    files = []
    main = cfg.out_dir / f"results.{cfg.fmt}"
    if cfg.fmt == "csv":
        keys = [k for k in rows[0] if k not in ("x", "series", "log_value", "value_or_inf", "overflow")] if rows else []
        cols = ["x", "formula_tag"] + [k for k in keys if k != "formula_tag"] + ["log_value", "value_or_inf"]
        main.write_text(_csv_text(cols, [{**r, **{k: _cell(v) for k, v in r.items()}} for r in rows]))
    else:
        main.write_text(_json_text({"sweep": p["sweep"], "constants": cfg.constants.to_dict(), "rows": rows}))
    files.append(main)
    files.append(emit_plot_data(rows, cfg.out_dir / "plot_data.csv", y="log_value"))
    return files


def _geometry_certify(cfg: ExperimentConfig):
    p = cfg.parameters
    try:
        S = RegionSet.from_dict(p["set"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad set description: {exc}") from None
    win = p["window"]
    rep = certify_thickness(S, p["a"], win, p["resolution"], p["n_offsets"])
    out = {"set": p["set"], **rep.to_dict()}
    if p["symmetrize"]:
        tp = ThicknessParams(p["gamma"], tuple(p["a"]))
        if p["symmetrize"] == "halfspace":
            S2, tp2 = symmetrize_halfspace(S, tp)
        elif p["symmetrize"] == "orthant":
            S2, tp2 = symmetrize_orthant(S, tp)
        else:
            S2, tp2 = symmetrize_sector(S, tp, p["theta"])
        if p["symmetrized_window"] is None:
            raise ConfigError("symmetrized sets are not periodic; give symmetrized_window")
        rep2 = certify_thickness(S2, tp2.a, p["symmetrized_window"], p["resolution"], p["n_offsets"])
        out["symmetrized"] = {
            "kind": p["symmetrize"],
            "gamma_declared": float(tp2.gamma),
            "a_declared": [float(v) for v in tp2.a],
            **rep2.to_dict(),
        }
    main = cfg.out_dir / f"results.{cfg.fmt}"
    if cfg.fmt == "csv":
        rows = [{"set": "input", "gamma_estimate": rep.gamma_estimate, "gamma_declared": p["gamma"] or ""}]
        if "symmetrized" in out:
            s = out["symmetrized"]
            rows.append({"set": s["kind"], "gamma_estimate": s["gamma_estimate"], "gamma_declared": s["gamma_declared"]})
        main.write_text(_csv_text(["set", "gamma_estimate", "gamma_declared"], rows))
    else:
        main.write_text(_json_text(out))
    return [main]


def _systems(p):
    shape = "sym_interval" if p["shape"] == "interval" else "sym_box"
    dim = 1 if p["shape"] == "interval" else max(2, int(p["dim"]))
    half, full = symmetric_pair(shape, L=p["L"], cells=p["cells"], dim=dim)
    A = np.asarray(p["A"], dtype=float)
    fh = CoefficientField.build(half, A=A if A.ndim else float(A), V=float(p["V"]))
    ff = reflect_coefficients(fh, half)
    ctl = p["control"]
    if ctl is None:
        chi = np.ones(half.n_cells, dtype=bool)
    elif "box" in ctl:
        box = np.asarray(ctl["box"], dtype=float)
        if box.shape != (dim, 2):
            raise ConfigError(f"control box must have {dim} [lo, hi] pairs")
        c = half.centers
        chi = np.all((c >= box[:, 0]) & (c <= box[:, 1]), axis=1)
    else:
        chi = np.asarray(RegionSet.from_dict(ctl["set"]).contains(half.centers), dtype=bool)
    ops = build_reflection_operators(half, full, p["bc"])
    H = assemble_operator(half, fh, p["bc"], chi)
    F = assemble_operator(full, ff, p["bc"], mirror_cells(ops, chi))
    return H, F, ops


def _intertwine_check(cfg: ExperimentConfig):
    p = cfg.parameters
    H, F, ops = _systems(p)
    big, small = AbstractSystem.from_discrete(F), AbstractSystem.from_discrete(H)
    triple = triple_from_reflection(ops)
    xx = (ops.Xstar @ ops.X).toarray() - 2.0 * np.eye(H.n)
    reports = [
        {"relation": "Xstar X = 2 I", "defect": float(np.max(np.abs(xx))), "threshold": 0.0,
         "pass": bool(np.max(np.abs(xx)) == 0.0)},
        check_generator_intertwining(triple, big, small).to_dict(),
        check_control_intertwining(triple, big, small).to_dict(),
        check_semigroup_commutation(triple, big, small, p["times"]).to_dict(),
        spectral_intertwining(triple, big, small, fractional_power(p["phi_power"]), p["lambda_grid"]).to_dict(),
    ]
    reports[1]["discrete_defect"] = check_discrete_intertwining(ops, H.H, F.H)
    main = cfg.out_dir / f"results.{cfg.fmt}"
    if cfg.fmt == "csv":
        main.write_text(_csv_text(["relation", "defect", "threshold", "pass"], reports))
    else:
        main.write_text(_json_text({"n_half": H.n, "n_full": F.n, "bc": p["bc"], "reports": reports}))
    return [main]


def _transfer_run(cfg: ExperimentConfig):
    p = cfg.parameters
    H, F, ops = _systems(p)
    data_spec = p["data"]
    if "random" in data_spec:
        rng = np.random.default_rng(cfg.seed)
        data = rng.standard_normal((int(data_spec["random"]), H.n))
        data /= np.linalg.norm(data, axis=1)[:, None]
    else:
        _, Q = AbstractSystem.from_discrete(H).spectrum
        data = np.stack([Q[:, int(k) - 1] for k in data_spec["modes"]])
    quad = Quadrature(int(p["quadrature"].get("m", 32)), p["quadrature"].get("rule", "gauss"))
    rep = transfer_experiment(H, F, ops, float(p["T"]), data, quad, p["eps"],
                              compare_direct=bool(p["compare_direct"]), threads=cfg.threads)
    report = rep.to_dict()
    report["config"]["seed"] = cfg.seed
    report["config"]["shape"] = p["shape"]
    report["config"]["cells"] = p["cells"]
    files = []
    rp = cfg.out_dir / "report.json"
    rp.write_text(_json_text(report))
    files.append(rp)
    if cfg.fmt == "csv":
        cols = ["index", "u0_norm", "full_cost", "half_cost", "margin", "full_residual", "half_residual",
                "residual_ratio", "residual_ok", "cost_ok"]
        if p["compare_direct"]:
            cols.append("direct_half_cost")
        tp = cfg.out_dir / "results.csv"
        tp.write_text(_csv_text(cols, rep.rows))
        files.append(tp)
    tr = cfg.out_dir / "trajectories.csv"
    tr.write_text(trajectory_csv(rep.nodes, rep.trajectories))
    files.append(tr)
    return files, rep.passed


_COMMANDS = {
    "bounds-sweep": _bounds_sweep,
    "geometry-certify": _geometry_certify,
    "intertwine-check": _intertwine_check,
    "transfer-run": _transfer_run,
}


def run(cfg: ExperimentConfig) -> int:
    """Run one validated config; returns the exit status and writes the manifest last."""
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = _COMMANDS[cfg.command](cfg)
    files, ok = out if isinstance(out, tuple) else (out, True)
    _write_manifest(cfg.out_dir, files, cfg.command)
    return EXIT_OK if ok else EXIT_PRECONDITION


def _error_record(code, exc, out_dir=None) -> int:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("relation", "defect", "threshold", "condition"):
        if hasattr(exc, attr):
            val = getattr(exc, attr)
            rec[attr] = val if not (isinstance(val, float) and not math.isfinite(val)) else str(val)
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatreflect", description=__doc__.split("\n")[0])
    ap.add_argument("--config", required=True, help="JSON experiment config")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--format", choices=["csv", "json"], help="table format (overrides output.format)")
    ap.add_argument("--constants", help="K=<v>,D2=<v>,D3=<v>")
    ap.add_argument("--seed", type=int, help="seed for random data batches")
    ap.add_argument("--threads", type=int, help="worker threads for per-datum solves")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(Path(args.config).read_text())
        cfg = load_config(raw, args.out, args.format, args.constants, args.seed, args.threads)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        return _error_record(EXIT_CONFIG, exc, args.out)
    try:
        return run(cfg)
    except ConfigError as exc:
        return _error_record(EXIT_CONFIG, exc, cfg.out_dir)
    except PreconditionViolation as exc:
        return _error_record(EXIT_PRECONDITION, exc, cfg.out_dir)
    except (NumericalFailure, DomainError, InvalidArgument, np.linalg.LinAlgError) as exc:
        code = EXIT_NUMERICAL if not isinstance(exc, InvalidArgument) else EXIT_CONFIG
        return _error_record(code, exc, cfg.out_dir)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
