"""Command-line front end.

Every subcommand reads one JSON experiment file::

    steadytube solve --config exp.json --out results/ --jobs 2 --seed 7

Top-level config keys: ``command`` (optional, must match), ``system`` (a
system block such as ``{"system": "isentropic_ns", "nu": 0.1}``),
``tolerances``, ``params`` (command specific), ``out`` and ``seed``.
Unknown keys are rejected.  Exit codes: 0 success, 2 invalid input, 3
numerical failure (a ``diagnostic.json`` is written to the output
directory).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys as _sys
import traceback

import numpy as np

from . import __version__
from ._io import config_hash, ensure_dir, provenance, write_csv, write_json
from .errors import DomainError, ParameterError, SteadyTubeError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

TOP_KEYS = {"command", "system", "tolerances", "params", "out", "seed"}
TOL_DEFAULTS = {"rtol": 1e-10, "atol": 1e-12, "newton_tol": 1e-9, "max_iter": 100,
                "evans_rtol": 1e-8, "evans_atol": 1e-10}


class ConfigError(ParameterError):
    """The experiment file does not match the schema."""


# ------------------------------------------------------------ validation helpers

def _num(v, name, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number")
    if positive and not v > 0:
        raise ConfigError(f"{name} must be positive")
    return float(v)


def _int(v, name, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{name} must be at least {minimum}")
    return v


def _vec(v, name, size=None):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{name} must be a non-empty list of numbers")
    out = np.array([_num(x, f"{name}[{i}]") for i, x in enumerate(v)])
    if size is not None and out.size != size:
        raise ConfigError(f"{name} must have {size} entries, got {out.size}")
    return out


def _complex(v, name):
    if isinstance(v, list):
        if len(v) != 2:
            raise ConfigError(f"{name} must be a number or a [re, im] pair")
        return complex(_num(v[0], name), _num(v[1], name))
    return complex(_num(v, name))


def _check_keys(block, allowed, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _params(raw, spec, where="params"):
    """Fill defaults and reject unknown keys; ``spec`` maps key -> default or REQUIRED."""
    raw = {} if raw is None else raw
    _check_keys(raw, spec, where)
    out = {}
    for key, default in spec.items():
        if key in raw:
            out[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"{where}.{key} is required")
        else:
            out[key] = default
    return out


REQUIRED = object()


# ------------------------------------------------------------ context

class Context:
    def __init__(self, command, cfg, raw, out, jobs, seed):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.seed = seed
        tol = cfg.get("tolerances", {}) or {}
        _check_keys(tol, TOL_DEFAULTS, "tolerances")
        self.tol = dict(TOL_DEFAULTS)
        for k, v in tol.items():
            self.tol[k] = _int(v, f"tolerances.{k}", 1) if k == "max_iter" else _num(v, f"tolerances.{k}", True)
        self.header = provenance(command, config_hash(raw), self.tol, seed)
        self._sys = None

    @property
    def system(self):
        if self._sys is None:
            from .system import system_from_config
            block = self.cfg.get("system")
            if block is None:
                raise ConfigError(f"command {self.command!r} needs a 'system' block")
            block = dict(block)
            for k, v in list(block.items()):
                if k in ("A", "B22", "A0"):
                    block[k] = np.array(v, dtype=float)
            self._sys = system_from_config(block)
        return self._sys

    def path(self, name):
        return os.path.join(self.out, name)

    @property
    def evans_kw(self):
        return {"rtol": self.tol["evans_rtol"], "atol": self.tol["evans_atol"]}


def _profile(ctx, p):
    """Constant profile or steady solve from params U0 / U1II / c2_guess."""
    from .steady import SteadyProfile, solve_steady
    sys = ctx.system
    U0 = _vec(p["U0"], "params.U0", sys.n)
    if p.get("constant"):
        return SteadyProfile.constant(sys, U0)
    U1II = _vec(p["U1II"], "params.U1II", sys.m)
    guess = None if p.get("c2_guess") is None else _vec(p["c2_guess"], "params.c2_guess", sys.m)
    return solve_steady(sys, U0, U1II, guess, tol=ctx.tol["newton_tol"], max_iter=ctx.tol["max_iter"],
                        rtol=ctx.tol["rtol"], atol=ctx.tol["atol"])


PROFILE_SPEC = {"U0": REQUIRED, "U1II": None, "c2_guess": None, "constant": False}


# ------------------------------------------------------------ commands

def cmd_check(ctx):
    from .system import check_assumptions
    p = _params(ctx.cfg.get("params"), {"samples": REQUIRED, "tol": 1e-8})
    if not isinstance(p["samples"], list) or not p["samples"]:
        raise ConfigError("params.samples must be a non-empty list of states")
    samples = [_vec(s, f"params.samples[{i}]", ctx.system.n) for i, s in enumerate(p["samples"])]
    report = check_assumptions(ctx.system, samples, _num(p["tol"], "params.tol", True))
    body = report.as_dict()
    write_json(ctx.path("check.json"), ctx.header, body)
    return "\n".join(f"{name}: {res['verdict']}" for name, res in sorted(body.items()))


def cmd_solve(ctx):
    p = _params(ctx.cfg.get("params"), PROFILE_SPEC)
    prof = _profile(ctx, p)
    n = ctx.system.n
    write_csv(ctx.path("profile.csv"), ctx.header, ["x"] + [f"U{i + 1}" for i in range(n)],
              prof.to_csv_rows().tolist())
    body = {"c2": prof.c2, "residual": prof.residual, "det_dphi": prof.det_dphi,
            "nondegenerate": prof.nondegenerate, "iterations": prof.iterations, "info": prof.info}
    write_json(ctx.path("solve.json"), ctx.header, body)
    return f"c2 = {np.array2string(np.asarray(prof.c2), precision=10)}  |Phi| = {prof.residual:.2e}  " \
           f"det dPhi = {prof.det_dphi}"


def cmd_evans_scan(ctx):
    from .evans import contour_zeros, evans_eval, winding_count
    spec = dict(PROFILE_SPEC, lambdas=None, contour=None, x_match=0.5)
    p = _params(ctx.cfg.get("params"), spec)
    prof = _profile(ctx, p)
    sys = ctx.system
    kw = dict(ctx.evans_kw, x_match=_num(p["x_match"], "params.x_match"))
    summary = []
    if p["lambdas"] is not None:
        if not isinstance(p["lambdas"], list):
            raise ConfigError("params.lambdas must be a list")
        lams = [_complex(v, f"params.lambdas[{i}]") for i, v in enumerate(p["lambdas"])]
        rows = []
        for lam in lams:
            s = evans_eval(sys, prof, lam, **kw)
            rows.append([lam.real, lam.imag, s.d.log_mag, s.d.phase, s.sign_real, s.info["condition"]])
        write_csv(ctx.path("evans.csv"), ctx.header,
                  ["lambda_re", "lambda_im", "log_abs_D", "arg_D", "sign_D", "condition"], rows)
        summary.append(f"{len(rows)} Evans samples written")
    if p["contour"] is not None:
        c = p["contour"]
        _check_keys(c, {"kind", "radius", "center", "turns"}, "params.contour")
        contour = {"kind": c.get("kind", "half_disk"), "radius": _num(c.get("radius"), "contour.radius", True)}
        if contour["kind"] == "circle":
            contour["center"] = _complex(c.get("center", 0.0), "contour.center")
            contour["turns"] = _int(c.get("turns", 1), "contour.turns", 1)
        count = winding_count(sys, prof, contour, jobs=ctx.jobs, **kw)
        body = {"contour": contour, "winding": count}
        if contour["kind"] == "circle" and count > 0:
            body["zeros"] = contour_zeros(sys, prof, contour["center"], contour["radius"], **kw)
        write_json(ctx.path("winding.json"), ctx.header, body)
        summary.append(f"winding number {count}")
    if not summary:
        raise ConfigError("evans-scan needs params.lambdas or params.contour")
    return "; ".join(summary)


def cmd_index(ctx):
    from .evans import stability_index
    spec = dict(PROFILE_SPEC, lambda_max=None, n_grid=64)
    p = _params(ctx.cfg.get("params"), spec)
    prof = _profile(ctx, p)
    lmax = None if p["lambda_max"] is None else _num(p["lambda_max"], "params.lambda_max", True)
    verdict = stability_index(ctx.system, prof, lmax, _int(p["n_grid"], "params.n_grid", 2), jobs=ctx.jobs,
                              **ctx.evans_kw)
    write_json(ctx.path("index.json"), ctx.header, verdict.as_dict())
    return f"mu = {verdict.mu}, real-axis sign changes = {verdict.real_axis_sign_changes}"


def cmd_zs_check(ctx):
    from .evans import evans_at_zero
    p = _params(ctx.cfg.get("params"), {"cases": REQUIRED})
    if not isinstance(p["cases"], list) or not p["cases"]:
        raise ConfigError("params.cases must be a non-empty list")
    rows = []
    for i, case in enumerate(p["cases"]):
        cp = _params(case, PROFILE_SPEC, f"params.cases[{i}]")
        prof = _profile(ctx, cp)
        d0, rep = evans_at_zero(ctx.system, prof, **ctx.evans_kw)
        rows.append([i, d0.log_mag, rep["sign_d0"], rep["det_dphi"], rep["sign_dphi"], rep["agree"],
                     rep["ratio"], rep["degenerate"]])
    agree = [r[5] for r in rows if r[5] is not None]
    ratios = [r[6] for r in rows if r[6] is not None]
    footer = {"all_signs_agree": all(agree) if agree else None,
              "ratio_relative_spread": (max(ratios) - min(ratios)) / abs(np.mean(ratios)) if ratios else None}
    write_csv(ctx.path("zs.csv"), ctx.header,
              ["case", "log_abs_D0", "sign_D0", "det_dphi", "sign_det", "agree", "ratio", "degenerate"],
              rows, footer)
    return f"signs agree in {sum(agree)}/{len(agree)} cases"


GAS_SPEC = {"rho0": REQUIRED, "u0": REQUIRED, "u1": REQUIRED, "pressure": None, "shock_rtol": 1e-9}


def _gas_data(p):
    from .limits import GasBoundaryData, PowerLaw, as_pressure
    pr = PowerLaw() if p["pressure"] is None else as_pressure(p["pressure"])
    return GasBoundaryData(_num(p["rho0"], "params.rho0", True), _num(p["u0"], "params.u0", True),
                           _num(p["u1"], "params.u1", True), pr)


def cmd_classify(ctx):
    from .limits import classify_inviscid
    p = _params(ctx.cfg.get("params"), GAS_SPEC)
    cfg = classify_inviscid(_gas_data(p), _num(p["shock_rtol"], "params.shock_rtol", True))
    write_json(ctx.path("classify.json"), ctx.header, cfg.as_dict())
    msg = f"kind = {cfg.kind}, rho* = {cfg.rho_star:.6g}"
    if cfg.shock_location is not None:
        msg += f", x_s = {cfg.shock_location:.6g}"
    return msg


def cmd_sweep_nu(ctx):
    from .limits import convergence_study
    spec = dict(GAS_SPEC, nu_list=REQUIRED, p_list=[1, 2])
    p = _params(ctx.cfg.get("params"), spec)
    nus = [_num(v, "params.nu_list", True) for v in _vec(p["nu_list"], "params.nu_list")]
    ps = [_num(v, "params.p_list", True) for v in _vec(p["p_list"], "params.p_list")]
    ps = [int(v) if float(v).is_integer() else v for v in ps]
    table = convergence_study(_gas_data(p), nus, ps, jobs=ctx.jobs,
                              shock_rtol=_num(p["shock_rtol"], "params.shock_rtol", True))
    rows = [[r[c] for c in table.columns] for r in table.rows]
    write_csv(ctx.path("sweep_nu.csv"), ctx.header, table.columns, rows,
              {"kind": table.kind, "slopes": table.slopes, "rejected": table.rejected})
    return f"{table.kind}: slopes {table.slopes}"


def cmd_large_visc(ctx):
    from .limits import FullGasParams, full_gas_large_visc
    spec = {"u0": REQUIRED, "e0": REQUIRED, "u1": REQUIRED, "e1": REQUIRED, "Gamma": 0.4, "ratio": 1.0,
            "rho0": 1.0, "eps": 1e-3, "alpha_list": REQUIRED}
    p = _params(ctx.cfg.get("params"), spec)
    fp = FullGasParams(**{k: _num(p[k], f"params.{k}", True) for k in spec if k != "alpha_list"})
    alphas = [float(a) for a in _vec(p["alpha_list"], "params.alpha_list")]
    table = full_gas_large_visc(fp, alphas, jobs=ctx.jobs, tol=ctx.tol["newton_tol"],
                                rtol=ctx.tol["rtol"], atol=ctx.tol["atol"])
    cols = ["alpha", "nu", "h1_error", "ok", "flag"]
    write_csv(ctx.path("large_visc.csv"), ctx.header, cols, [[r[c] for c in cols] for r in table.rows],
              {"slope": table.slope})
    return f"H1 slope = {table.slope}"


def cmd_degree(ctx):
    from .steady import brouwer_degree
    p = _params(ctx.cfg.get("params"), {"U0": REQUIRED, "U1II": REQUIRED, "box": REQUIRED, "n_starts": 64})
    sys = ctx.system
    box = p["box"]
    if not isinstance(box, list) or len(box) != sys.m:
        raise ConfigError(f"params.box must list {sys.m} [lo, hi] pairs")
    box = [tuple(_vec(b, f"params.box[{i}]", 2)) for i, b in enumerate(box)]
    if any(lo >= hi for lo, hi in box):
        raise ConfigError("params.box needs lo < hi in every coordinate")
    res = brouwer_degree(sys, _vec(p["U0"], "params.U0", sys.n), _vec(p["U1II"], "params.U1II", sys.m), box,
                         n_starts=_int(p["n_starts"], "params.n_starts", 1), seed=ctx.seed,
                         tol=ctx.tol["newton_tol"], jobs=ctx.jobs)
    write_json(ctx.path("degree.json"), ctx.header, res.as_dict())
    return f"degree = {res.degree} from {len(res.roots)} distinct roots"


def cmd_standing_shock(ctx):
    from .evans import standing_shock_evans
    spec = {"rho_minus": REQUIRED, "epsilons": REQUIRED, "gamma": 2.0, "a": 1.0, "m": 1.0, "nu": 1.0}
    p = _params(ctx.cfg.get("params"), spec)
    eps = [float(e) for e in _vec(p["epsilons"], "params.epsilons")]
    rows = standing_shock_evans(_num(p["rho_minus"], "params.rho_minus", True), eps,
                                gamma=_num(p["gamma"], "params.gamma", True), a=_num(p["a"], "params.a", True),
                                m=_num(p["m"], "params.m", True), nu=_num(p["nu"], "params.nu", True),
                                **ctx.evans_kw)
    out = [[r.eps, r.d0.log_mag, r.d0.sign_real(), r.d0_normalized, r.det_dphi, r.warning] for r in rows]
    write_csv(ctx.path("standing_shock.csv"), ctx.header,
              ["eps", "log_abs_D0", "sign_D0", "D0_scaled", "det_dphi", "warning"], out)
    return f"{len(out)} rows; scaled D(0) = " + ", ".join(f"{r[3]:.6g}" for r in out)


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "evans-scan": cmd_evans_scan,
    "index": cmd_index,
    "zs-check": cmd_zs_check,
    "classify": cmd_classify,
    "sweep-nu": cmd_sweep_nu,
    "large-visc": cmd_large_visc,
    "degree": cmd_degree,
    "standing-shock": cmd_standing_shock,
}


# ------------------------------------------------------------ entry points

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser():
    ap = _Parser(prog="steadytube", description="Steady inflow/outflow profiles and Evans-function stability.")
    ap.add_argument("--version", action="version", version=f"steadytube {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment JSON file")
    ap.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
    ap.add_argument("--jobs", type=int, default=1, help="worker cap for scans and sweeps")
    ap.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    return ap


def _diagnostic(out, command, exc):
    try:
        ensure_dir(out)
        path = os.path.join(out, "diagnostic.json")
        info = {"command": command, "error": type(exc).__name__, "message": str(exc),
                "traceback": traceback.format_exception(type(exc), exc, exc.__traceback__)}
        for attr in ("status", "x_stop", "eigenvalue", "last", "info"):
            if hasattr(exc, attr):
                info[attr] = getattr(exc, attr)
        write_json(path, {"tool": "steadytube", "version": __version__}, info)
        return path
    except Exception:  # the diagnostic is best effort
        return None


def run(argv=None) -> int:
    """Run one subcommand; returns the exit code."""
    argv = list(_sys.argv[1:] if argv is None else argv)
    out = "out"
    command = None
    try:
        try:
            args = _parser().parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
        command = args.command
        try:
            with open(args.config, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            cfg = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"malformed JSON: {exc}") from exc
        _check_keys(cfg, TOP_KEYS, "config")
        if "command" in cfg and cfg["command"] != command:
            raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
        out = args.out or cfg.get("out") or "out"
        if not isinstance(out, str):
            raise ConfigError("out must be a path string")
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        seed = _int(seed, "seed", 0)
        if seed >= 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        jobs = _int(args.jobs, "--jobs", 1)
        ctx = Context(command, cfg, raw, out, jobs, seed)
        ensure_dir(out)
        summary = COMMANDS[command](ctx)
    except (ConfigError, ParameterError, DomainError) as exc:
        print(f"steadytube: invalid input: {exc}", file=_sys.stderr)
        return EXIT_INVALID
    except (SteadyTubeError, ArithmeticError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        path = _diagnostic(out, command, exc)
        print(f"steadytube: numerical failure: {type(exc).__name__}: {exc}"
              + (f" (details in {path})" if path else ""), file=_sys.stderr)
        return EXIT_NUMERICAL
    print(summary)
    return EXIT_OK


def main():
    _sys.exit(run())


if __name__ == "__main__":
    main()
