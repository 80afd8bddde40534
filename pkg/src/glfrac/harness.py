"""Experiment orchestration: config parsing, sweeps, verification, CLI.

A sweep walks a strictly decreasing list of regularization lengths eps and
couples the grid spacing through delta = c * eps**p.  For each eps the
harness either evaluates an explicit recovery construction against its
sharp-interface reference value or runs the alternate-minimization solver,
and emits one CSV row per eps.  Row failures are recorded in a trailing
error column and do not abort the run.

Configuration is TOML with a mandatory ``version = 1`` key; unknown keys are
hard errors naming the offending key, so a config never silently ignores a
typo.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .energy import (EnergyParams, GriffithReference, Region, direction_set,
                     griffith_energy, quadratic_form_identity, total_energy)
from .interpolation import freudenthal
from .lattice import (ScalarField, VectorField, build_domain, load_field,
                      save_field)
from .recovery import CrackGeometry, build_recovery_pair, optimal_profile
from .solver import SolverConfig, alternate_minimize

MODES = ("evaluate-recovery", "minimize", "verify")
PRESETS = {"subcritical": 2.0, "critical": 1.0, "ni-upper": 3.0}
CSV_COLUMNS = ("eps", "delta", "f_elastic", "f_div", "g_mm", "total",
               "griffith_ref", "rel_gap", "error")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the bad key."""


def _require(table, key, where):
    if key not in table:
        raise ConfigError(f"missing required key '{where}{key}'")
    return table[key]


def _check_known(table, known, where):
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key '{where}{key}'")


def _float_list(value, n, where):
    try:
        out = [float(x) for x in value]
    except (TypeError, ValueError):
        raise ConfigError(f"'{where}' must be a list of {n} numbers") from None
    if len(out) != n:
        raise ConfigError(f"'{where}' must have length {n}")
    return out


@dataclass(frozen=True)
class TargetSpec:
    """Limit object of a recovery sweep.

    kind "step": piecewise-constant displacement jumping across a flat crack
    patch (offset along the last axis, in-plane extent intervals).  kind
    "affine": crack-free affine displacement x -> A x.
    """

    kind: str = "step"
    offset: float = 0.5
    below: tuple = ()
    above: tuple = ()
    extent: tuple = ()
    eta: float = 0.1
    gamma_rule: str = "eps_squared"
    allow_boundary_crack: bool = False
    matrix: tuple = ()


@dataclass(frozen=True)
class DatumSpec:
    """Dirichlet datum for minimization sweeps."""

    kind: str = "stretch"     # stretch | affine | constant
    t: float = 0.0
    matrix: tuple = ()
    value: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed, validated experiment description."""

    mode: str
    dimension: int
    lengths: tuple
    origin: tuple
    dirichlet: object
    extension_cells: int
    lam: float
    theta: float
    variant: str
    bound: object
    weights: object
    eps_list: tuple
    c: float
    p: float
    seed: int = 0
    target: TargetSpec = None
    datum: DatumSpec = None
    reference: object = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    fields_u: str = None
    fields_v: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"'mode' must be one of {MODES}")
        if len(self.eps_list) == 0:
            raise ConfigError("'schedule.eps' must be a nonempty list")
        if any(e <= 0 for e in self.eps_list):
            raise ConfigError("'schedule.eps' entries must be positive")
        if not all(self.eps_list[i] > self.eps_list[i + 1]
                   for i in range(len(self.eps_list) - 1)):
            raise ConfigError("'schedule.eps' must be strictly decreasing")
        if self.c <= 0:
            raise ConfigError("'schedule.c' must be positive")
        if self.p <= 0:
            raise ConfigError("'schedule.p' must be positive")

    def delta_of(self, eps):
        return self.c * eps ** self.p

    def build_domain(self, eps):
        return build_domain(self.dimension, self.origin, self.lengths,
                            self.delta_of(eps), dirichlet=self.dirichlet,
                            extension_cells=self.extension_cells)

    def energy_params(self, eps):
        return EnergyParams(lam=self.lam, theta=self.theta, eps=eps,
                            delta=self.delta_of(eps), variant=self.variant,
                            M=self.bound, weights=self.weights)


def _parse_target(table, d):
    _check_known(table, {"kind", "offset", "below", "above", "extent", "eta",
                         "gamma_rule", "allow_boundary_crack", "matrix"},
                 "target.")
    kind = table.get("kind", "step")
    if kind == "affine":
        mat = _require(table, "matrix", "target.")
        rows = tuple(tuple(_float_list(r, d, "target.matrix")) for r in mat)
        if len(rows) != d:
            raise ConfigError(f"'target.matrix' must be {d}x{d}")
        return TargetSpec(kind="affine", matrix=rows)
    if kind != "step":
        raise ConfigError("'target.kind' must be 'step' or 'affine'")
    offset = float(_require(table, "offset", "target."))
    above = tuple(_float_list(_require(table, "above", "target."), d,
                              "target.above"))
    below = tuple(_float_list(table.get("below", [0.0] * d), d,
                              "target.below"))
    extent_raw = _require(table, "extent", "target.")
    if len(extent_raw) != d - 1:
        raise ConfigError(f"'target.extent' must list {d - 1} intervals")
    extent = tuple(tuple(_float_list(iv, 2, "target.extent")) for iv in extent_raw)
    return TargetSpec(kind="step", offset=offset, below=below, above=above,
                      extent=extent,
                      eta=float(table.get("eta", 0.1)),
                      gamma_rule=table.get("gamma_rule", "eps_squared"),
                      allow_boundary_crack=bool(table.get(
                          "allow_boundary_crack", False)))


def _parse_datum(table, d):
    _check_known(table, {"kind", "t", "matrix", "value"}, "datum.")
    kind = table.get("kind", "stretch")
    if kind == "stretch":
        return DatumSpec(kind="stretch", t=float(_require(table, "t", "datum.")))
    if kind == "affine":
        mat = _require(table, "matrix", "datum.")
        rows = tuple(tuple(_float_list(r, d, "datum.matrix")) for r in mat)
        if len(rows) != d:
            raise ConfigError(f"'datum.matrix' must be {d}x{d}")
        return DatumSpec(kind="affine", matrix=rows)
    if kind == "constant":
        return DatumSpec(kind="constant", value=tuple(
            _float_list(_require(table, "value", "datum."), d, "datum.value")))
    raise ConfigError("'datum.kind' must be 'stretch', 'affine' or 'constant'")


def _parse_solver(table):
    known = {"outer_tol", "max_outer", "cg_tol", "cg_max_iter", "pg_max_iter",
             "pg_step_tol", "armijo_c", "backtrack"}
    _check_known(table, known, "solver.")
    kwargs = {k: table[k] for k in known if k in table}
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid 'solver' settings: {exc}") from None


def config_from_dict(data):
    """Validate a parsed TOML mapping into an ExperimentConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    _check_known(data, {"version", "mode", "seed", "domain", "params",
                        "schedule", "target", "datum", "reference", "solver",
                        "fields"}, "")
    version = _require(data, "version", "")
    if version != 1:
        raise ConfigError("'version' must be 1")

    dom = _require(data, "domain", "")
    _check_known(dom, {"dimension", "lengths", "origin", "dirichlet",
                       "extension_cells"}, "domain.")
    d = _require(dom, "dimension", "domain.")
    if d not in (2, 3):
        raise ConfigError("'domain.dimension' must be 2 or 3")
    lengths = tuple(_float_list(_require(dom, "lengths", "domain."), d,
                                "domain.lengths"))
    origin = tuple(_float_list(dom.get("origin", [0.0] * d), d,
                               "domain.origin"))
    dirichlet = dom.get("dirichlet")
    if isinstance(dirichlet, list):
        dirichlet = tuple(dirichlet)
    extension = int(dom.get("extension_cells", 0))

    par = data.get("params", {})
    _check_known(par, {"lambda", "theta", "variant", "bound", "weights"},
                 "params.")
    lam = float(par.get("lambda", 1.0))
    theta = float(par.get("theta", 1.0))
    variant = par.get("variant", "plain")
    bound = par.get("bound")
    if bound is not None:
        bound = float(bound)
    weights = None
    if "weights" in par:
        weights = {}
        for k, val in par["weights"].items():
            try:
                weights[int(k)] = float(val)
            except ValueError:
                raise ConfigError(f"'params.weights.{k}' key must be an "
                                  f"integer squared length") from None

    sch = _require(data, "schedule", "")
    _check_known(sch, {"eps", "preset", "c", "p"}, "schedule.")
    eps_raw = _require(sch, "eps", "schedule.")
    try:
        eps_list = tuple(float(e) for e in eps_raw)
    except (TypeError, ValueError):
        raise ConfigError("'schedule.eps' must be a list of numbers") from None
    preset = sch.get("preset")
    p = sch.get("p")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"'schedule.preset' must be one of "
                              f"{tuple(PRESETS)}")
        if p is not None and float(p) != PRESETS[preset]:
            raise ConfigError("'schedule.p' conflicts with 'schedule.preset'")
        p = PRESETS[preset]
    p = float(p) if p is not None else 2.0
    c = float(sch.get("c", 1.0))

    mode = data.get("mode", "evaluate-recovery")
    seed = int(data.get("seed", 0))

    target = None
    if "target" in data:
        target = _parse_target(data["target"], d)
    datum = None
    if "datum" in data:
        datum = _parse_datum(data["datum"], d)
    reference = data.get("reference")
    if reference is not None:
        _check_known(reference, {"value"}, "reference.")
        reference = float(_require(reference, "value", "reference."))
    solver = _parse_solver(data.get("solver", {}))
    fields_u = fields_v = None
    if "fields" in data:
        _check_known(data["fields"], {"u", "v"}, "fields.")
        fields_u = data["fields"].get("u")
        fields_v = data["fields"].get("v")

    try:
        return ExperimentConfig(
            mode=mode, dimension=d, lengths=lengths, origin=origin,
            dirichlet=dirichlet, extension_cells=extension, lam=lam,
            theta=theta, variant=variant, bound=bound, weights=weights,
            eps_list=eps_list, c=c, p=p, seed=seed, target=target,
            datum=datum, reference=reference, solver=solver,
            fields_u=fields_u, fields_v=fields_v)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path):
    """Read and validate a TOML experiment config."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML parse error in {path}: {exc}") from None
    return config_from_dict(data)


# --- sweep ------------------------------------------------------------------

@dataclass
class SweepRow:
    """One eps entry of a sweep; either a breakdown or an error message."""

    eps: float
    delta: float
    breakdown: object = None
    griffith_ref: object = None
    rel_gap: object = None
    error: object = None

    def csv_record(self):
        def fmt(x):
            return "" if x is None else f"{x:.17g}"
        bd = self.breakdown
        return (fmt(self.eps), fmt(self.delta),
                fmt(bd.f_elastic if bd else None),
                fmt(bd.f_div if bd else None),
                fmt(bd.g_mm if bd else None),
                fmt(bd.total if bd and bd.admissible else None),
                fmt(self.griffith_ref), fmt(self.rel_gap),
                self.error or "")


def _step_reference(cfg):
    target = cfg.target
    d = cfg.dimension
    lo = cfg.origin
    hi = tuple(o + L for o, L in zip(cfg.origin, cfg.lengths))
    below_hi = hi[:-1] + (target.offset,)
    above_lo = lo[:-1] + (target.offset,)
    below_fn = _const_fn(np.asarray(target.below, dtype=float))
    above_fn = _const_fn(np.asarray(target.above, dtype=float))
    zero = np.zeros((d, d))
    regions = (
        Region(lo=lo, hi=below_hi, displacement=below_fn,
               displacement_grad=lambda x, g=zero: _tile_grad(x, g)),
        Region(lo=above_lo, hi=hi, displacement=above_fn,
               displacement_grad=lambda x, g=zero: _tile_grad(x, g)),
    )
    if d == 2:
        crack = CrackGeometry(offset=target.offset, k_lo=target.extent[0][0],
                              k_hi=target.extent[0][1])
    else:
        crack = CrackGeometry(offset=target.offset,
                              k_lo=(target.extent[0][0], target.extent[1][0]),
                              k_hi=(target.extent[0][1], target.extent[1][1]))
    ref = GriffithReference(regions=regions, crack=crack)
    return ref, crack


def _const_fn(vec):
    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(vec, x.shape[:-1] + (vec.size,)).copy()
    return fn


def _tile_grad(x, g):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(g, x.shape[:-1] + g.shape).copy()


def _affine_reference(cfg):
    A = np.asarray(cfg.target.matrix, dtype=float)
    lo = cfg.origin
    hi = tuple(o + L for o, L in zip(cfg.origin, cfg.lengths))
    region = Region(lo=lo, hi=hi, displacement=lambda x: x @ A.T,
                    displacement_grad=lambda x: _tile_grad(x, A))
    return GriffithReference(regions=(region,))


def _datum_callable(cfg):
    datum = cfg.datum
    d = cfg.dimension
    if datum.kind == "stretch":
        x0 = cfg.origin[0]
        L = cfg.lengths[0]
        t = datum.t

        def fn(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (d,))
            out[..., 0] = t * ((x[..., 0] - x0) / L - 0.5)
            return out

        return fn
    if datum.kind == "affine":
        A = np.asarray(datum.matrix, dtype=float)
        return lambda x: np.asarray(x, dtype=float) @ A.T
    vec = np.asarray(datum.value, dtype=float)
    return _const_fn(vec)


def _rel_gap(total, ref):
    if ref is None or total is None or not math.isfinite(total):
        return None
    scale = abs(ref)
    if scale < 1e-300:
        return 0.0 if abs(total) < 1e-300 else math.inf
    return abs(total - ref) / scale


def _sweep_row_recovery(cfg, eps):
    target = cfg.target
    params = cfg.energy_params(eps)
    domain = cfg.build_domain(eps)
    if target.kind == "affine":
        A = np.asarray(target.matrix, dtype=float)
        u = VectorField.from_callable(domain, lambda x: x @ A.T)
        v = ScalarField.ones(domain)
        ref = griffith_energy(_affine_reference(cfg), cfg.lam, cfg.theta)
        bd = total_energy(u, v, params)
        return bd, ref, (u, v)
    ref_obj, _ = _step_reference(cfg)
    ref = griffith_energy(ref_obj, cfg.lam, cfg.theta)
    pair = build_recovery_pair(
        ref_obj, domain, params, target.eta, gamma_rule=target.gamma_rule,
        allow_boundary_crack=target.allow_boundary_crack)
    bd = total_energy(pair.u, pair.v, params)
    return bd, ref, (pair.u, pair.v)


def _sweep_row_minimize(cfg, eps):
    params = cfg.energy_params(eps)
    domain = cfg.build_domain(eps)
    datum = _datum_callable(cfg) if cfg.datum is not None else None
    if params.variant == "dirichlet" and datum is None:
        raise ConfigError("variant 'dirichlet' needs a '[datum]' table")
    report, u, v = alternate_minimize(params, domain, config=cfg.solver,
                                      datum=datum)
    bd = report.trace[-1]
    return bd, cfg.reference, (u, v)


def _make_row(cfg, eps, keep_fields=False):
    delta = cfg.delta_of(eps)
    try:
        if cfg.mode == "minimize":
            bd, ref, fields = _sweep_row_minimize(cfg, eps)
        else:
            bd, ref, fields = _sweep_row_recovery(cfg, eps)
        row = SweepRow(eps=eps, delta=delta, breakdown=bd, griffith_ref=ref,
                       rel_gap=_rel_gap(bd.total if bd.admissible else None,
                                        ref))
        return (row, fields) if keep_fields else (row, None)
    except (ValueError, RuntimeError) as exc:
        return SweepRow(eps=eps, delta=delta, error=str(exc)), None


def run_sweep(cfg, out_dir=None, deterministic=False, threads=1,
              keep_fields=False):
    """Execute the sweep; returns (rows, csv_path or None).

    Rows keep the eps order of the schedule.  With threads > 1 rows are
    computed concurrently (ordering is still by eps); deterministic mode
    forces sequential execution.
    """
    if cfg.mode not in ("evaluate-recovery", "minimize"):
        raise ConfigError(f"run_sweep needs mode 'evaluate-recovery' or "
                          f"'minimize', got '{cfg.mode}'")
    if len(cfg.eps_list) == 0:
        raise ConfigError("'schedule.eps' must be a nonempty list")
    if cfg.mode == "evaluate-recovery" and cfg.target is None:
        raise ConfigError("mode 'evaluate-recovery' needs a '[target]' table")

    work = lambda eps: _make_row(cfg, eps, keep_fields=keep_fields)
    if threads > 1 and not deterministic and len(cfg.eps_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, cfg.eps_list))
    else:
        results = [work(eps) for eps in cfg.eps_list]
    rows = [r for r, _ in results]
    fields = [f for _, f in results]

    csv_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "sweep.csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow(row.csv_record())
    if keep_fields:
        return rows, csv_path, fields
    return rows, csv_path


# --- verification suites -----------------------------------------------------

def _suite_form_identity():
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for d in (2, 3):
        for _ in range(50):
            B = rng.normal(size=(d, d))
            M = 0.5 * (B + B.T)
            lhs, rhs = quadratic_form_identity(M, d=d)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst <= 1e-12, {"max_rel_err": worst, "tolerance": 1e-12}


def _suite_split_identity():
    from .energy import divergence_energy, divergence_energy_ni
    rng = np.random.default_rng(20240818)
    worst = 0.0
    for d in (2, 3):
        n = 6 if d == 2 else 4
        dom = build_domain(d, (0.0,) * d, (1.0,) * d, 1.0 / (n - 1))
        ones = ScalarField.ones(dom)
        for _ in range(25):
            u = VectorField(dom, rng.normal(size=dom.extents + (d,)))
            a = divergence_energy(u, ones)
            b = divergence_energy_ni(u, ones)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return worst <= 1e-14, {"max_rel_err": worst, "tolerance": 1e-14}


def _suite_freudenthal():
    from fractions import Fraction
    rng = np.random.default_rng(20240819)
    detail = {}
    ok = True
    for d in (2, 3):
        simplices = freudenthal(d)
        count_ok = len(simplices) == math.factorial(d)
        vol = sum((s.volume() for s in simplices), Fraction(0))
        vol_ok = vol == 1
        pts = rng.uniform(0.0, 1.0, size=(1000, d))
        cover = all(any(s.contains(p) for s in simplices) for p in pts)
        detail[f"d{d}"] = {"count": len(simplices), "volume_sum": float(vol),
                           "cover_1000": cover}
        ok = ok and count_ok and vol_ok and cover
    return ok, detail


def _suite_profile():
    prof = optimal_profile(0.1)
    val = prof.certified_integral
    ok = 1.0 < val <= 1.1
    return ok, {"certified_integral": val, "window": [1.0, 1.1]}


def _suite_monotone():
    ok = True
    detail = {}
    for seed in (1, 2, 3):
        rng = np.random.default_rng(seed)
        t = float(rng.uniform(0.1, 0.8))
        delta = 1.0 / 12
        dom = build_domain(2, (0.0, 0.0), (1.0, 0.5), delta,
                           dirichlet=("x-", "x+"))
        params = EnergyParams(lam=1.0, theta=0.5, eps=0.15, delta=delta,
                              variant="dirichlet")

        def datum(x, t=t):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (2,))
            out[..., 0] = t * (x[..., 0] - 0.5)
            return out

        report, _, _ = alternate_minimize(params, dom, datum=datum,
                                          config=SolverConfig(max_outer=5))
        tot = [bd.total for bd in report.trace]
        mono = all(tot[i + 1] <= tot[i] + 1e-12 * max(1.0, abs(tot[i]))
                   for i in range(len(tot) - 1))
        detail[f"seed{seed}"] = {"trace": tot, "monotone": mono}
        ok = ok and mono
    return ok, detail


_SUITES = {
    "form-identity": _suite_form_identity,
    "split-identity": _suite_split_identity,
    "freudenthal": _suite_freudenthal,
    "profile": _suite_profile,
    "monotone": _suite_monotone,
}


def run_verify(selector="all"):
    """Run one or all verification suites; returns a JSON-serializable report.

    Unknown selectors raise ConfigError.  The report's "all_passed" field is
    the exit-code contract: 0 iff True.
    """
    if selector == "all":
        names = list(_SUITES)
    elif selector in _SUITES:
        names = [selector]
    else:
        raise ConfigError(f"unknown verify suite '{selector}'; choose from "
                          f"{('all',) + tuple(_SUITES)}")
    suites = {}
    for name in names:
        passed, detail = _SUITES[name]()
        suites[name] = {"passed": bool(passed), "detail": detail}
    return {"suites": suites,
            "all_passed": all(s["passed"] for s in suites.values())}


# --- CLI ---------------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _write_json(payload, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")


def _load_field_on(domain, path, comps):
    fld = load_field(path)
    want = domain.extents + ((comps,) if comps > 1 else ())
    have = fld.values.shape
    if have != want:
        raise ConfigError(f"field file {path} has shape {have}, "
                          f"expected {want}")
    rel = abs(fld.domain.spacing - domain.spacing) / domain.spacing
    if rel > 1e-12:
        raise ConfigError(f"field file {path} spacing "
                          f"{fld.domain.spacing} does not match the domain")
    return fld.values


def _cmd_evaluate(cfg, out_dir):
    eps = cfg.eps_list[0]
    domain = cfg.build_domain(eps)
    params = cfg.energy_params(eps)
    if cfg.fields_u is not None:
        u = VectorField(domain, _load_field_on(domain, cfg.fields_u,
                                               domain.d))
    else:
        u = VectorField.zeros(domain)
    if cfg.fields_v is not None:
        v = ScalarField(domain, _load_field_on(domain, cfg.fields_v, 1))
    else:
        v = ScalarField.ones(domain)
    datum = _datum_callable(cfg) if cfg.datum is not None else None
    bd = total_energy(u, v, params, datum=datum)
    payload = bd.to_json_dict()
    payload["eps"] = eps
    payload["delta"] = cfg.delta_of(eps)
    if out_dir is not None:
        _write_json(payload, os.path.join(out_dir, "evaluate.json"))
    print(json.dumps(payload, indent=2, sort_keys=True,
                     default=_json_default))
    return 0


def _cmd_minimize(cfg, out_dir):
    eps = cfg.eps_list[0]
    domain = cfg.build_domain(eps)
    params = cfg.energy_params(eps)
    datum = _datum_callable(cfg) if cfg.datum is not None else None
    report, u, v = alternate_minimize(params, domain, config=cfg.solver,
                                      datum=datum)
    out_dir = out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    save_field(u, os.path.join(out_dir, "u.fld"))
    save_field(v, os.path.join(out_dir, "v.fld"))
    _write_json(report.to_json_dict(), os.path.join(out_dir, "report.json"))
    print(f"minimize: {report.outer_iterations} outer iterations, "
          f"converged={report.converged}, "
          f"total={report.trace[-1].total:.12g}")
    return 0


def _cmd_sweep(cfg, out_dir, deterministic, threads):
    out_dir = out_dir or "."
    rows, csv_path = run_sweep(cfg, out_dir=out_dir,
                               deterministic=deterministic, threads=threads)
    failures = sum(1 for r in rows if r.error)
    print(f"sweep: {len(rows)} rows ({failures} failed) -> {csv_path}")
    return 0

def _cmd_recovery(cfg, out_dir):
    if cfg.mode != "evaluate-recovery":
        raise ConfigError("subcommand 'recovery' needs mode "
                          "'evaluate-recovery'")
    out_dir = out_dir or "."
    rows, csv_path, fields = run_sweep(cfg, out_dir=out_dir,
                                       keep_fields=True)
    os.makedirs(out_dir, exist_ok=True)
    summary = []
    for i, (row, pair) in enumerate(zip(rows, fields)):
        entry = {"eps": row.eps, "delta": row.delta, "error": row.error}
        if pair is not None:
            u_path = os.path.join(out_dir, f"u_{i:02d}.fld")
            v_path = os.path.join(out_dir, f"v_{i:02d}.fld")
            save_field(pair[0], u_path)
            save_field(pair[1], v_path)
            entry["u"] = u_path
            entry["v"] = v_path
            entry["total"] = row.breakdown.total
        summary.append(entry)
    _write_json(summary, os.path.join(out_dir, "recovery.json"))
    print(f"recovery: wrote {sum(1 for s in summary if 'u' in s)} field "
          f"pairs -> {out_dir}")
    return 0


def _cmd_verify(selector, out_dir):
    report = run_verify(selector)
    text = json.dumps(report, indent=2, sort_keys=True,
                      default=_json_default)
    if out_dir is not None:
        _write_json(report, os.path.join(out_dir, "verify.json"))
    print(text)
    return 0 if report["all_passed"] else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="glfrac",
        description="Lattice phase-field fracture energies: evaluation, "
                    "minimization, scaling sweeps, verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="TOML experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--deterministic", action="store_true",
                       help="sequential single-thread execution with a "
                            "fixed reduction order")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for sweep rows")

    add_common(sub.add_parser("evaluate", help="energy breakdown of fields"))
    add_common(sub.add_parser("minimize", help="alternate minimization run"))
    add_common(sub.add_parser("sweep", help="eps sweep to CSV"))
    add_common(sub.add_parser("recovery",
                              help="write recovery-pair field files"))
    pv = sub.add_parser("verify", help="run verification suites")
    pv.add_argument("suite", nargs="?", default="all",
                    help="suite name or 'all'")
    pv.add_argument("--out", default=None, help="output directory")
    pv.add_argument("--deterministic", action="store_true")
    pv.add_argument("--threads", type=int, default=1)

    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "verify":
            return _cmd_verify(args.suite, args.out)
        cfg = load_config(args.config)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg, args.out)
        if args.command == "minimize":
            return _cmd_minimize(cfg, args.out)
        if args.command == "sweep":
            return _cmd_sweep(cfg, args.out, args.deterministic,
                              args.threads)
        if args.command == "recovery":
            return _cmd_recovery(cfg, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
