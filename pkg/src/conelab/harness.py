"""
Batch driver: configuration, scans, log-log fits and report files.

Usage::

    conelab <command> --config run.json --out results/

Every command writes three files into the output directory:

``<command>.csv``           sample rows, deterministic for a given config
``<command>.summary.json``  verdict {command, slope, slope_target, pass,
                            constant, max_ratio, config_hash, ...}
``<command>.meta.json``     timestamp, package version, hypothesis gate

Exit status: 0 pass, 1 fail, 2 invalid configuration or input, 3 partial
report (mode budget exceeded on some rows).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import itertools
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, lp_theory, propagators
from .cross_section import (
    ConeModel,
    CrossSectionSpec,
    build_spectrum,
    check_hypothesis,
    distance_spectrum,
    weyl_slope,
)
from .errors import BudgetExceeded, ConelabError, DomainError, InsufficientData
from .spectral_calculus import KernelQuery, RadialGrid, RadialProfile, hankel_transform

__all__ = [
    "ConfigError",
    "RunConfig",
    "LogLogFit",
    "DecayReport",
    "fit_loglog",
    "load_config",
    "parse_config",
    "run",
    "main",
    "COMMANDS",
]


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    max_residual: float
    stderr: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.max_residual))


def fit_loglog(samples) -> LogLogFit:
    """Least squares line through (log x, log y).

    Needs at least 5 samples with strictly increasing x > 0 and y > 0.
    ``max_residual`` is the largest absolute residual in log space.
    """
    pts = [(float(x), float(y)) for x, y in samples]
    if len(pts) < 5:
        raise DomainError(f"fit_loglog needs >= 5 samples, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(np.log(y))):
        raise DomainError("fit_loglog needs x > 0 and y > 0")
    if np.any(np.diff(x) <= 0):
        raise DomainError("fit_loglog needs strictly increasing x")
    lx, ly = np.log(x), np.log(y)
    (slope, intercept), cov = np.polyfit(lx, ly, 1, cov="unscaled")
    res = ly - (slope * lx + intercept)
    dof = max(len(pts) - 2, 1)
    stderr = math.sqrt(float(cov[0, 0]) * float(res @ res) / dof)
    return LogLogFit(float(slope), float(intercept), float(np.abs(res).max()), stderr)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

class ConfigError(ConelabError, ValueError):
    """Invalid run configuration; ``problems`` lists field-level diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {p}" for p in self.problems))


_TOP_KEYS = {"model", "scan", "tolerances", "seed"}
_MODEL_KEYS = {"kind", "params", "n", "a", "nu0"}
_PARAM_KEYS = {
    "circle": {"radius"},
    "torus": {"radii"},
    "sphere": {"dim", "sigma"},
    "custom": {"modes", "volume", "dim"},
}
# scan key -> (kind, default); kinds: num, int, nums, ints, pairs, bool
_SCAN_KEYS = {
    "t_samples": ("nums", None),
    "r_samples": ("nums", [0.25, 0.5, 1.0, 2.0, 4.0]),
    "y_pairs": ("pairs", None),
    "n_y_pairs": ("int", 8),
    "z_samples": ("nums", None),
    "s_samples": ("nums", None),
    "sigma_samples": ("nums", None),
    "j_values": ("ints", [1, 2, 3]),
    "j_window": ("ints", [-2, 4]),
    "nu_values": ("nums", None),
    "epsilon_values": ("nums", None),
    "nu_max": ("num", 30.0),
    "weyl_count": ("int", 500),
    "n_functions": ("int", 20),
    "p": ("num", None),
    "q": ("num", None),
    "besov_s": ("num", 0.0),
    "besov_p": ("num", 2.0),
    "besov_r": ("num", 2.0),
    "grid_size": ("int", 4096),
    "r_max": ("num", 40.0),
    "commands": ("strs", None),
}
_TOL_KEYS = {
    "kernel_tol": 1e-8,
    "slope_tol": 0.15,
    "ratio_max": 3.0,
    "weber_tol": 1e-7,
    "hankel_tol": 1e-6,
    "nu_budget": 250.0,
    "spread_max": 10.0,
    "window_drift": 0.10,
    "weyl_tol": 0.08,
}


@dataclass(frozen=True)
class RunConfig:
    model: ConeModel
    model_desc: dict
    scan: dict
    tolerances: dict
    seed: int
    config_hash: str
    hypothesis: dict = field(default_factory=dict)
    given: frozenset = frozenset()

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_scan_value(name, kind, v, problems):
    bad = f"scan.{name}: expected {kind}, got {v!r}"
    if kind == "num" and not _is_num(v):
        problems.append(bad)
    elif kind == "int" and not (isinstance(v, int) and not isinstance(v, bool)):
        problems.append(bad)
    elif kind == "nums" and not (isinstance(v, list) and all(_is_num(x) for x in v)):
        problems.append(bad)
    elif kind == "ints" and not (isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v)):
        problems.append(bad)
    elif kind == "strs" and not (isinstance(v, list) and all(isinstance(x, str) for x in v)):
        problems.append(bad)
    elif kind == "pairs" and not (
        isinstance(v, list)
        and all(isinstance(p, list) and len(p) == 2 and all(isinstance(y, list) and all(_is_num(c) for c in y) for y in p)
                for p in v)
    ):
        problems.append(f"scan.{name}: expected a list of [y1, y2] coordinate pairs")


def _build_spec(kind, params, problems):
    try:
        if kind == "circle":
            return CrossSectionSpec.circle(float(params.get("radius", 1.0)))
        if kind == "torus":
            return CrossSectionSpec.torus(*[float(r) for r in params.get("radii", [1.0, 1.0])])
        if kind == "sphere":
            return CrossSectionSpec.sphere(int(params.get("dim", 2)), float(params.get("sigma", 1.0)))
        if kind == "custom":
            modes = [(float(e[0]), int(e[1]), str(e[2]) if len(e) > 2 else "constant") for e in params["modes"]]
            return CrossSectionSpec.custom(modes, float(params["volume"]), int(params.get("dim", 2)))
    except (KeyError, TypeError, ValueError, ConelabError) as exc:
        problems.append(f"model.params: {exc}")
        return None
    problems.append(f"model.kind: unknown kind {kind!r} (expected one of {sorted(_PARAM_KEYS)})")
    return None


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded JSON document and build the run configuration."""
    problems = []
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected an object"])
    for k in sorted(set(doc) - _TOP_KEYS):
        problems.append(f"{k}: unknown top-level key")
    model = doc.get("model")
    if not isinstance(model, dict):
        problems.append("model: required object")
        model = {}
    for k in sorted(set(model) - _MODEL_KEYS):
        problems.append(f"model.{k}: unknown key")
    kind = model.get("kind")
    params = model.get("params", {})
    if not isinstance(params, dict):
        problems.append("model.params: expected an object")
        params = {}
    if kind in _PARAM_KEYS:
        for k in sorted(set(params) - _PARAM_KEYS[kind]):
            problems.append(f"model.params.{k}: unknown key for kind {kind!r}")
    n = model.get("n", 3)
    if not (isinstance(n, int) and not isinstance(n, bool) and n >= 2):
        problems.append(f"model.n: expected an integer >= 2, got {n!r}")
        n = 3
    a = model.get("a", 0.0)
    if not _is_num(a):
        problems.append(f"model.a: expected a number, got {a!r}")
        a = 0.0
    nu0 = model.get("nu0")
    if nu0 is not None and (not _is_num(nu0) or nu0 <= 0):
        problems.append(f"model.nu0: expected a positive number, got {nu0!r}")
        nu0 = None
    if nu0 is not None and "a" in model:
        problems.append("model.nu0: give either a or nu0, not both")
    spec = _build_spec(kind, params, problems) if not problems or kind in _PARAM_KEYS else None
    if kind not in _PARAM_KEYS and not any(p.startswith("model.kind") for p in problems):
        problems.append(f"model.kind: unknown kind {kind!r} (expected one of {sorted(_PARAM_KEYS)})")

    scan = doc.get("scan", {})
    if not isinstance(scan, dict):
        problems.append("scan: expected an object")
        scan = {}
    for k in sorted(set(scan) - set(_SCAN_KEYS)):
        problems.append(f"scan.{k}: unknown key")
    for k, v in scan.items():
        if k in _SCAN_KEYS:
            _check_scan_value(k, _SCAN_KEYS[k][0], v, problems)
    tol = doc.get("tolerances", {})
    if not isinstance(tol, dict):
        problems.append("tolerances: expected an object")
        tol = {}
    for k in sorted(set(tol) - set(_TOL_KEYS)):
        problems.append(f"tolerances.{k}: unknown key")
    for k, v in tol.items():
        if k in _TOL_KEYS and not (_is_num(v) and v > 0):
            problems.append(f"tolerances.{k}: expected a positive number, got {v!r}")
    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        problems.append(f"seed: expected a non-negative integer, got {seed!r}")
        seed = 0

    cone = None
    if spec is not None and not problems:
        try:
            cone = ConeModel.with_nu0(n, spec, float(nu0)) if nu0 is not None else ConeModel(n, spec, float(a))
            cone.nu0
        except ConelabError as exc:
            problems.append(f"model: {exc}")
    if problems:
        raise ConfigError(problems)

    scan_full = {k: scan.get(k, d) for k, (_, d) in _SCAN_KEYS.items()}
    tol_full = {k: float(tol.get(k, d)) for k, d in _TOL_KEYS.items()}
    canon = json.dumps({"model": model, "scan": scan, "tolerances": tol, "seed": seed}, sort_keys=True)
    h = hashlib.sha256(canon.encode()).hexdigest()[:16]
    rep = check_hypothesis(cone)
    hyp = {
        "rconj_ok": rep.rconj_ok,
        "conjugate_radius": rep.conjugate_radius,
        "p_positive": rep.p_positive,
        "p_min": rep.p_min,
    }
    desc = {"kind": kind, "params": params, "n": n, "a": cone.a}
    return RunConfig(cone, desc, scan_full, tol_full, seed, h, hyp, frozenset(scan))


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from exc
    return parse_config(doc)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class DecayReport:
    command: str
    columns: list
    rows: list
    summary: dict
    partial: bool = False

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if isinstance(v, bool) else ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _summary(cfg: RunConfig, command: str, slope=None, target=None, ok=False, constant=None,
             max_ratio=None, **extra) -> dict:
    out = {
        "command": command,
        "slope": slope,
        "slope_target": target,
        "pass": bool(ok),
        "constant": constant,
        "max_ratio": max_ratio,
        "config_hash": cfg.config_hash,
    }
    if cfg.hypothesis.get("rconj_ok") is False:
        out["verdict_scope"] = "outside theorem hypotheses"
    out.update(extra)
    return out


def _workers() -> int:
    env = os.environ.get("CONELAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"CONELAB_THREADS: expected an integer, got {env!r}"]) from None
    return min(4, os.cpu_count() or 1)


def _pmap(func: Callable, items) -> list:
    """Order-preserving map over a bounded thread pool."""
    items = list(items)
    nw = _workers()
    if nw == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=nw) as ex:
        return list(ex.map(func, items))


def _default_y_pairs(cfg: RunConfig) -> list:
    """Coincident, near-antipodal, then seeded random pairs."""
    if cfg.scan["y_pairs"] is not None:
        return [(np.array(a, float), np.array(b, float)) for a, b in cfg.scan["y_pairs"]]
    spec = cfg.model.spec
    count = cfg.scan["n_y_pairs"]
    rng = cfg.rng(101)
    if spec.kind in ("circle", "torus"):
        d = spec.dim
        base = np.zeros(d)
        pairs = [(base, base), (base, np.full(d, math.pi - 0.05))]
        while len(pairs) < count:
            pairs.append((base, rng.uniform(0.0, 2.0 * math.pi, d)))
        return pairs[:count]
    if spec.kind == "sphere":
        d = spec.dim + 1
        north = np.zeros(d)
        north[-1] = 1.0
        tilt = np.zeros(d)
        tilt[0], tilt[-1] = math.sin(0.05), -math.cos(0.05)
        pairs = [(north, north), (north, tilt)]
        while len(pairs) < count:
            v = rng.normal(size=d)
            pairs.append((north, v / np.linalg.norm(v)))
        return pairs[:count]
    raise DomainError("custom spectra need explicit scan.y_pairs")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig) -> DecayReport:
    nu_max = float(cfg.scan["nu_max"])
    sp = build_spectrum(cfg.model, nu_max)
    rows = [(m.index, m.mu, m.nu, m.multiplicity) for m in sp]
    n = cfg.model.n
    target = 2.0 / (n - 1)
    try:
        slope = weyl_slope(list(sp), cfg.scan["weyl_count"])
        ok = abs(slope - target) <= cfg.tolerances["weyl_tol"]
        note = None
    except InsufficientData as exc:
        slope, ok, note = None, False, str(exc)
    summ = _summary(cfg, "spectrum", slope, target, ok, n_modes=int(sum(m.multiplicity for m in sp)), note=note)
    return DecayReport("spectrum", ["k", "mu", "nu", "multiplicity"], rows, summ)


def cmd_check_hypothesis(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    h = cfg.hypothesis
    row = (h["rconj_ok"], h["conjugate_radius"], h["p_positive"], h["p_min"], m.nu0, m.alpha, m.q_alpha)
    summ = _summary(cfg, "check-hypothesis", ok=bool(h["rconj_ok"]) and h["p_positive"],
                    rconj_ok=h["rconj_ok"], nu0=m.nu0, alpha=m.alpha, q_alpha=m.q_alpha)
    cols = ["rconj_ok", "conjugate_radius", "p_positive", "p_min", "nu0", "alpha", "q_alpha"]
    return DecayReport("check-hypothesis", cols, [row], summ)


def cmd_distance_spectrum(cfg: RunConfig) -> DecayReport:
    rows = []
    for pid, (y1, y2) in enumerate(_default_y_pairs(cfg)):
        for L, mult in distance_spectrum(cfg.model.spec, y1, y2):
            rows.append((pid, L, mult))
    summ = _summary(cfg, "distance-spectrum", ok=True, n_pairs=len({r[0] for r in rows}))
    return DecayReport("distance-spectrum", ["ypair_id", "length", "multiplicity"], rows, summ)


def cmd_weber(cfg: RunConfig) -> DecayReport:
    nus = cfg.scan["nu_values"] or [0.0, 0.5, 1.3, 2.7]
    eps = cfg.scan["epsilon_values"] or [1.0, 0.1, 0.05]
    ts = cfg.scan["t_samples"] or [0.0, 0.5, 2.0]
    rs = cfg.scan["r_samples"] if "r_samples" in cfg.given else [0.3, 1.0, 3.0]
    cases = list(itertools.product(nus, eps, ts, rs, rs))

    def one(c):
        try:
            return c + (propagators.weber_identity_residual(*c), "ok")
        except DomainError:
            return c + (None, "outside_envelope")

    rows = _pmap(one, cases)
    res = [r[5] for r in rows if r[5] is not None]
    worst = max(res) if res else None
    ok = bool(res) and worst <= cfg.tolerances["weber_tol"]
    summ = _summary(cfg, "weber", ok=ok, max_residual=worst, n_cases=len(res))
    return DecayReport("weber", ["nu", "epsilon", "t", "r1", "r2", "residual", "status"], rows, summ)


def cmd_hankel(cfg: RunConfig) -> DecayReport:
    nus = cfg.scan["nu_values"] or [0.5, 1.0, 2.3]
    n = cfg.model.n
    grid = RadialGrid(n, cfg.scan["grid_size"], cfg.scan["r_max"])
    rows = []
    for nu in nus:
        f = RadialProfile.from_function(grid, lambda r: r ** (nu - (n - 2) / 2.0) * np.exp(-r * r / 2.0))
        F = hankel_transform(nu, f)
        FF = hankel_transform(nu, F)
        rows.append((nu, F.norm() / f.norm(), float(np.abs(FF.values - f.values).max())))
    tol = cfg.tolerances["hankel_tol"]
    ok = all(abs(r[1] - 1.0) <= tol and r[2] <= tol for r in rows)
    summ = _summary(cfg, "hankel", ok=ok, grid=grid.to_dict())
    return DecayReport("hankel", ["nu", "norm_ratio", "double_transform_dev"], rows, summ)


def _r_pairs(cfg):
    rs = cfg.scan["r_samples"]
    return [(a, b) for i, a in enumerate(rs) for b in rs[i:]]


def cmd_heat(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    sigmas = cfg.scan["sigma_samples"] or list(np.geomspace(10.0, 1000.0, 9))
    pairs = _default_y_pairs(cfg)
    cases = [(s, r1, r2, pid) for s in sigmas for r1, r2 in _r_pairs(cfg) for pid in range(len(pairs))]
    budget = cfg.tolerances["nu_budget"]

    def one(c):
        s, r1, r2, pid = c
        q = KernelQuery(1.0, r1, tuple(pairs[pid][0]), r2, tuple(pairs[pid][1]))
        try:
            _, rep = propagators.heat_kernel(m, s, q, nu_budget=budget)
            return (s, r1, r2, pid, rep.kernel_abs, rep.bound_value, rep.ratio)
        except BudgetExceeded:
            return (s, r1, r2, pid, None, None, None)

    rows = _pmap(one, cases)
    partial = any(r[4] is None for r in rows)
    r0 = cfg.scan["r_samples"][0]
    fit_rows = [r for r in rows if r[1] == r0 and r[2] == r0 and r[3] == 0 and r[4]]
    fit = fit_loglog([(r[0], r[4]) for r in fit_rows])
    target = -(m.n / 2.0 + m.alpha)
    ratios = [r[6] for r in rows if r[6] is not None]
    ok = abs(fit.slope - target) <= cfg.tolerances["slope_tol"] and not partial
    summ = _summary(cfg, "heat", fit.slope, target, ok, math.exp(fit.intercept), max(ratios),
                    slope_stderr=fit.stderr, partial=partial)
    cols = ["sigma", "r1", "r2", "ypair_id", "kernel_abs", "bound", "ratio"]
    return DecayReport("heat", cols, rows, summ, partial)


def cmd_schrodinger_decay(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    ts = cfg.scan["t_samples"] or [2.0 ** k for k in range(-4, 7)]
    pairs = _default_y_pairs(cfg)
    tol, budget = cfg.tolerances["kernel_tol"], cfg.tolerances["nu_budget"]
    cases = [(t, r1, r2, pid) for t in ts for r1, r2 in _r_pairs(cfg) for pid in range(len(pairs))]

    def one(c):
        t, r1, r2, pid = c
        q = KernelQuery(t, r1, tuple(pairs[pid][0]), r2, tuple(pairs[pid][1]))
        b = propagators.dispersive_bound(m, q)
        try:
            k = abs(propagators.schrodinger_kernel(m, q, tol, budget))
        except BudgetExceeded:
            return (t, r1, r2, pid, q.z, None, b, None)
        return (t, r1, r2, pid, q.z, k, b, k / b)

    rows = _pmap(one, cases)
    partial = any(r[5] is None for r in rows)
    sup = {}
    for r in rows:
        if r[5] is not None:
            sup[r[0]] = max(sup.get(r[0], 0.0), r[5])
    fit = fit_loglog(sorted(sup.items()))
    target = -m.n / 2.0
    ratios = [r[7] for r in rows if r[7] is not None]
    ok = abs(fit.slope - target) <= cfg.tolerances["slope_tol"] and not partial
    summ = _summary(cfg, "schrodinger-decay", fit.slope, target, ok, math.exp(fit.intercept), max(ratios),
                    slope_stderr=fit.stderr, partial=partial, mode_budget=budget, kernel_tol=tol)
    cols = ["t", "r1", "r2", "ypair_id", "z", "kernel_abs", "bound", "ratio"]
    return DecayReport("schrodinger-decay", cols, rows, summ, partial)


def halfwave_samples(model: ConeModel, j: int, t: float) -> list:
    """Front-centre samples: r1 = 2^{-j}, r2 = r1 + t, three cross-section offsets."""
    d = model.spec.point_dim
    r1 = 2.0 ** -j
    if model.spec.kind in ("circle", "torus"):
        base = np.zeros(d)
        ys = [base, np.r_[0.5, 0.3][:d], np.r_[2.0, 1.0][:d]]
    else:
        base = np.zeros(d)
        base[-1] = 1.0
        ys = [base]
        for ang in (0.5, 2.0):
            v = np.zeros(d)
            v[0], v[-1] = math.sin(ang), math.cos(ang)
            ys.append(v)
    return [KernelQuery(t, r1, tuple(base), r1 + t, tuple(y)) for y in ys]


def cmd_halfwave_decay(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    js = cfg.scan["j_values"]
    steps = cfg.scan["t_samples"] or list(np.geomspace(1.0, 64.0, 7))
    tol, budget = cfg.tolerances["kernel_tol"], cfg.tolerances["nu_budget"]
    cases = [(j, 2.0 ** -j * s, pid, q) for j in js for s in steps
             for pid, q in enumerate(halfwave_samples(m, j, 2.0 ** -j * s))]

    def one(c):
        j, t, pid, q = c
        try:
            v, rep = propagators.halfwave_localized_kernel(m, j, t, q, tol, nu_budget=budget)
        except BudgetExceeded:
            return (j, t, q.r1, q.r2, pid, None, propagators.halfwave_bound(m, j, t), None)
        return (j, t, q.r1, q.r2, pid, rep.kernel_abs, rep.bound_value, rep.ratio)

    rows = _pmap(one, cases)
    partial = any(r[5] is None for r in rows)
    target = -(m.n - 1) / 2.0
    slopes = {}
    for j in js:
        sup = {}
        for r in rows:
            if r[0] == j and r[5] is not None:
                sup[r[1]] = max(sup.get(r[1], 0.0), r[5])
        slopes[j] = fit_loglog(sorted(sup.items())).slope
    worst = max(slopes.values(), key=lambda s: abs(s - target))
    ok = all(abs(s - target) <= cfg.tolerances["slope_tol"] for s in slopes.values()) and not partial
    ratios = [r[7] for r in rows if r[7] is not None]
    summ = _summary(cfg, "halfwave-decay", worst, target, ok, None, max(ratios),
                    slopes={str(j): s for j, s in slopes.items()}, partial=partial)
    cols = ["j", "t", "r1", "r2", "ypair_id", "kernel_abs", "bound", "ratio"]
    return DecayReport("halfwave-decay", cols, rows, summ, partial)


def cmd_poisson_decay(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    near = list(np.geomspace(0.1, 2.0 * math.pi, 12))
    far = list(np.geomspace(2.0 * math.pi, 30.0, 12))
    if cfg.scan["s_samples"] is not None:
        ss = sorted(cfg.scan["s_samples"])
        near = [s for s in ss if s <= 2.0 * math.pi]
        far = [s for s in ss if s >= 2.0 * math.pi]
    pairs = _default_y_pairs(cfg)
    cases = [(s, pid, sign) for s in sorted(set(near + far)) for pid in range(len(pairs)) for sign in (1, -1)]

    def one(c):
        s, pid, sign = c
        v, rep = propagators.poisson_wave_kernel(m, s, sign, pairs[pid][0], pairs[pid][1])
        return (s, pid, sign, rep.kernel_abs, rep.bound_value, rep.ratio)

    rows = _pmap(one, cases)
    n = m.n
    t_near, t_far = -(n / 2.0 - 1.0), -(n - 1.0)
    slopes_near, slopes_far = [], []
    for pid in range(len(pairs)):
        sel = {r[0]: r[3] for r in rows if r[1] == pid and r[2] == 1}
        slopes_near.append(fit_loglog([(s, sel[s]) for s in near]).slope)
        slopes_far.append(fit_loglog([(s, sel[s]) for s in far]).slope)
    margin = 0.2
    ok = max(slopes_near) <= t_near + margin and max(slopes_far) <= t_far + margin
    summ = _summary(cfg, "poisson-decay", max(slopes_far), t_far, ok, None, max(r[5] for r in rows),
                    slope_near=max(slopes_near), slope_near_target=t_near, slope_far=max(slopes_far),
                    criterion="slope <= target + 0.2")
    return DecayReport("poisson-decay", ["s", "ypair_id", "sign", "kernel_abs", "bound", "ratio"], rows, summ)


def _test_functions(cfg: RunConfig, count: int, salt: int = 202):
    rng = cfg.rng(salt)
    return [lp_theory.random_band_limited(cfg.model, rng) for _ in range(count)]


def cmd_bernstein(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    p = cfg.scan["p"] if cfg.scan["p"] is not None else math.inf
    q = cfg.scan["q"] if cfg.scan["q"] is not None else 2.0
    j_lo, j_hi = cfg.scan["j_window"]
    fs = _test_functions(cfg, cfg.scan["n_functions"])
    cases = [(i, j) for i in range(len(fs)) for j in range(j_lo, j_hi + 1)]
    rows = _pmap(lambda c: (c[0], c[1], lp_theory.bernstein_ratio(m, fs[c[0]], c[1], p, q)), cases)
    spreads = []
    for i in range(len(fs)):
        v = [r[2] for r in rows if r[0] == i]
        spreads.append(max(v) / min(v))
    ok = max(spreads) <= cfg.tolerances["spread_max"]
    summ = _summary(cfg, "bernstein", ok=ok, constant=max(r[2] for r in rows), max_ratio=max(r[2] for r in rows),
                    max_spread=max(spreads), p=p, q=q)
    return DecayReport("bernstein", ["f_id", "j", "ratio"], rows, summ)


def cmd_square(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    p = cfg.scan["p"] if cfg.scan["p"] is not None else 4.0
    count = cfg.scan["n_functions"]
    fs = _test_functions(cfg, 2 * count)
    ratios = _pmap(lambda f: lp_theory.square_function_ratio(m, f, p), fs)
    rows = [(i, r) for i, r in enumerate(ratios)]
    lo1, hi1 = min(ratios[:count]), max(ratios[:count])
    lo2, hi2 = min(ratios), max(ratios)
    drift = max((lo1 - lo2) / lo1, (hi2 - hi1) / hi1)
    ok = drift < cfg.tolerances["window_drift"]
    summ = _summary(cfg, "square", ok=ok, constant=hi2, max_ratio=hi2, window=[lo1, hi1],
                    window_doubled=[lo2, hi2], drift=drift, p=p)
    return DecayReport("square", ["f_id", "ratio"], rows, summ)


def cmd_besov(cfg: RunConfig) -> DecayReport:
    m = cfg.model
    params = lp_theory.BesovParams(cfg.scan["besov_s"], cfg.scan["besov_p"], cfg.scan["besov_r"])
    fs = _test_functions(cfg, cfg.scan["n_functions"])

    def one(i):
        b = lp_theory.besov_norm(m, fs[i], params)
        h = math.sqrt(fs[i].sobolev_sq(params.s))
        return (i, b, h, b / h)

    rows = _pmap(one, range(len(fs)))
    ratios = [r[3] for r in rows]
    lo, hi = lp_theory.square_sum_bounds()
    summ = _summary(cfg, "besov", ok=max(ratios) / min(ratios) <= cfg.tolerances["spread_max"],
                    constant=max(ratios), max_ratio=max(ratios), min_ratio=min(ratios),
                    partition_square_bounds=[lo, hi], params=asdict(params))
    return DecayReport("besov", ["f_id", "besov", "sobolev", "ratio"], rows, summ)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "check-hypothesis": cmd_check_hypothesis,
    "distance-spectrum": cmd_distance_spectrum,
    "weber": cmd_weber,
    "hankel": cmd_hankel,
    "heat": cmd_heat,
    "schrodinger-decay": cmd_schrodinger_decay,
    "halfwave-decay": cmd_halfwave_decay,
    "poisson-decay": cmd_poisson_decay,
    "bernstein": cmd_bernstein,
    "square": cmd_square,
    "besov": cmd_besov,
}


def _write(report: DecayReport, cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    stem = report.command
    (out / f"{stem}.csv").write_text(report.csv_text())
    (out / f"{stem}.summary.json").write_text(json.dumps(_json_safe(report.summary), indent=2, sort_keys=True) + "\n")
    meta = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__,
        "config_hash": cfg.config_hash,
        "model": cfg.model_desc,
        "hypothesis": cfg.hypothesis,
        "tolerances": cfg.tolerances,
        "seed": cfg.seed,
        "threads": _workers(),
    }
    (out / f"{stem}.meta.json").write_text(json.dumps(_json_safe(meta), indent=2, sort_keys=True) + "\n")


def run(command: str, cfg: RunConfig, out) -> int:
    """Execute one command (or ``report`` for several) and write its files."""
    out = Path(out)
    if cfg.hypothesis.get("rconj_ok") is False:
        warnings.warn("R_Conj <= pi: verdicts are outside the theorem hypotheses", stacklevel=2)
    if command == "report":
        names = cfg.scan["commands"] or ["check-hypothesis", "spectrum", "weber", "hankel", "poisson-decay"]
        unknown = [c for c in names if c not in COMMANDS]
        if unknown:
            raise ConfigError([f"scan.commands: unknown command {c!r}" for c in unknown])
        index = {}
        status = 0
        for name in names:
            code = run(name, cfg, out)
            index[name] = json.loads((out / f"{name}.summary.json").read_text())
            status = max(status, code)
        (out / "report.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
        return status
    if command not in COMMANDS:
        raise DomainError(f"unknown command {command!r}")
    rep = COMMANDS[command](cfg)
    _write(rep, cfg, out)
    if rep.partial:
        return 3
    return 0 if rep.summary["pass"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="conelab", description="Propagator kernels and decay scans on cones.")
    parser.add_argument("command", choices=sorted(COMMANDS) + ["report"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        code = run(args.command, cfg, args.out)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except ConelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = Path(args.out) / (f"{args.command}.summary.json" if args.command != "report" else "report.json")
    print(f"{args.command}: {'PASS' if code == 0 else 'FAIL' if code == 1 else 'PARTIAL'} ({summary})")
    return code


if __name__ == "__main__":
    sys.exit(main())
