"""Alternate minimization of the lattice fracture energy.

The total energy is separately convex: quadratic in the displacement u at
fixed phase field v, and quadratic in v at fixed u.  The solver alternates

* a displacement substep: conjugate gradients on the symmetric positive
  semidefinite stencil operator, matrix-free, with Dirichlet nodes eliminated
  into the right-hand side (for the non-interpenetration variant the substep
  is projected gradient descent with Armijo backtracking on the C^1 split
  objective, projected onto the sup-norm box |u_i| <= M),
* a phase substep: conjugate gradients on the strictly positive definite
  system coupling the local elastic coefficients with the Modica-Mortola
  terms, followed by a clamp of the solution to [0, 1] (a no-op up to solver
  tolerance; violations beyond that are logged).

Every substep starts from the current iterate and decreases the total energy,
so the reported energy trace is nonincreasing up to roundoff.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .energy import divergence_energy_ni, elastic_energy, total_energy
from .lattice import ScalarField, VectorField, direction_set, same_grid
from .operators import sign_patterns

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration caps of the alternate-minimization loop."""

    outer_tol: float = 1e-8        # relative total-energy decrease to stop
    max_outer: int = 100
    cg_tol: float = 1e-10          # relative residual reduction
    cg_max_iter: int = 20000
    pg_max_iter: int = 50000       # projected-gradient iteration cap
    pg_step_tol: float = 1e-13     # stop when the projected step is this small
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    deterministic: bool = False

    def __post_init__(self):
        if self.outer_tol < 0 or self.cg_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.cg_max_iter < 1 or self.pg_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo_c < 1:
            raise ValueError("backtracking parameters must lie in (0, 1)")


@dataclass
class SolveReport:
    """Outcome of one alternate-minimization run."""

    trace: list = field(default_factory=list)  # EnergyBreakdown per checkpoint
    converged: bool = False
    outer_iterations: int = 0
    u_iterations: int = 0
    v_iterations: int = 0
    wall_clock: float = 0.0

    def to_json_dict(self):
        return {
            "trace": [bd.to_json_dict() for bd in self.trace],
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "u_iterations": self.u_iterations,
            "v_iterations": self.v_iterations,
            "wall_clock": self.wall_clock,
        }


# --- matrix-free stencil operators -----------------------------------------

class _QuadraticModel:
    """Gradient machinery of u -> lam*elastic + theta*divergence at fixed v.

    ``grad(u)`` is the exact gradient array; the operator in the normal
    equations is grad/2 (the energy is a homogeneous quadratic).  The same
    slicing produces the per-node coefficient field for the phase substep.
    """

    def __init__(self, domain, params, v_values):
        self.domain = domain
        self.params = params
        self.dirs = direction_set(domain.d, params.weights)
        self.vsq = v_values * v_values
        self.ni = params.variant == "ni"

    def grad_elastic(self, u, out):
        dom = self.domain
        lam = self.params.lam
        if lam == 0.0:
            return
        dd = dom.spacing ** (dom.d - 2)
        for xi in self.dirs.directions:
            sl = dom.range_slices(xi)
            if sl is None:
                continue
            B, Bp, Bm = sl
            xi_arr = np.asarray(xi, dtype=float)
            nrm2 = float(xi_arr @ xi_arr)
            w = lam * self.dirs.weight_of(xi) * dd / nrm2
            mask = dom.range_mask(xi)
            coef = self.vsq[B]
            if mask is not None:
                coef = np.where(mask, coef, 0.0)
            dp = ((u[Bp] - u[B]) @ xi_arr) / nrm2
            dm = ((u[B] - u[Bm]) @ xi_arr) / nrm2
            cp = (w * coef * dp)[..., None] * xi_arr
            cm = (w * coef * dm)[..., None] * xi_arr
            out[Bp] += cp
            out[B] -= cp
            out[B] += cm
            out[Bm] -= cm

    def grad_div(self, u, out):
        dom = self.domain
        theta = self.params.theta
        if theta == 0.0:
            return
        sl = dom.div_slices()
        if sl is None:
            return
        base, plus, minus = sl
        d = dom.d
        scale = theta * dom.spacing ** (d - 2) / 2 ** d * 2.0
        mask = dom.div_mask()
        coef = self.vsq[base]
        if mask is not None:
            coef = np.where(mask, coef, 0.0)
        fwd = [u[plus[i] + (i,)] - u[base + (i,)] for i in range(d)]
        bwd = [u[base + (i,)] - u[minus[i] + (i,)] for i in range(d)]
        for s in sign_patterns(d):
            div_s = None
            for i, k in enumerate(s):
                piece = fwd[i] if k > 0 else bwd[i]
                div_s = piece.copy() if div_s is None else div_s + piece
            if self.ni:
                pos = np.maximum(div_s, 0.0)
                neg = np.maximum(-div_s, 0.0)
                c = scale * (coef * pos - neg)
            else:
                c = scale * coef * div_s
            if mask is not None:
                c = np.where(mask, c, 0.0)
            for i, k in enumerate(s):
                if k > 0:
                    out[plus[i] + (i,)] += c
                    out[base + (i,)] -= c
                else:
                    out[base + (i,)] += c
                    out[minus[i] + (i,)] -= c

    def grad(self, u):
        out = np.zeros_like(u)
        self.grad_elastic(u, out)
        self.grad_div(u, out)
        return out


def _phase_coefficients(domain, params, u_values):
    """Per-node coefficient a of the v-quadratic sum a(node) v(node)^2."""
    dom = domain
    d = dom.d
    dd = dom.spacing ** (d - 2)
    dirs = direction_set(d, params.weights)
    a = np.zeros(dom.extents)
    if params.lam > 0.0:
        for xi in dirs.directions:
            sl = dom.range_slices(xi)
            if sl is None:
                continue
            B, Bp, Bm = sl
            xi_arr = np.asarray(xi, dtype=float)
            nrm2 = float(xi_arr @ xi_arr)
            dp = ((u_values[Bp] - u_values[B]) @ xi_arr) / nrm2
            dm = ((u_values[B] - u_values[Bm]) @ xi_arr) / nrm2
            term = 0.5 * params.lam * dirs.weight_of(xi) * dd * (dp * dp + dm * dm)
            mask = dom.range_mask(xi)
            if mask is not None:
                term = np.where(mask, term, 0.0)
            a[B] += term
    if params.theta > 0.0:
        sl = dom.div_slices()
        if sl is not None:
            base, plus, minus = sl
            fwd = [u_values[plus[i] + (i,)] - u_values[base + (i,)] for i in range(d)]
            bwd = [u_values[base + (i,)] - u_values[minus[i] + (i,)] for i in range(d)]
            acc = None
            for s in sign_patterns(d):
                div_s = None
                for i, k in enumerate(s):
                    piece = fwd[i] if k > 0 else bwd[i]
                    div_s = piece.copy() if div_s is None else div_s + piece
                if params.variant == "ni":
                    div_s = np.maximum(div_s, 0.0)
                sq = div_s * div_s
                acc = sq if acc is None else acc + sq
            term = params.theta * dd / 2 ** d * acc
            mask = dom.div_mask()
            if mask is not None:
                term = np.where(mask, term, 0.0)
            a[base] += term
    return a


def _cg(apply_A, b, x0, tol, max_iter):
    """Conjugate gradients for SPD (possibly semidefinite) operators.

    Stops when the residual norm drops below tol * max(|b|, |r0|).  Raises
    RuntimeError on non-finite residuals; stops early on zero-curvature
    directions (consistent semidefinite systems).
    """
    x = x0.copy()
    r = b - apply_A(x)
    rs = float(np.vdot(r, r))
    if not math.isfinite(rs):
        raise RuntimeError("CG breakdown: non-finite initial residual")
    bnorm = math.sqrt(float(np.vdot(b, b)))
    stop = tol * max(bnorm, math.sqrt(rs))
    iters = 0
    if math.sqrt(rs) <= stop:
        return x, iters
    p = r.copy()
    for iters in range(1, max_iter + 1):
        Ap = apply_A(p)
        pAp = float(np.vdot(p, Ap))
        if not math.isfinite(pAp):
            raise RuntimeError("CG breakdown: non-finite curvature")
        if pAp <= 0.0:
            break  # zero-curvature direction: nothing left to reduce
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(np.vdot(r, r))
        if not math.isfinite(rs_new):
            raise RuntimeError("CG breakdown: non-finite residual")
        if math.sqrt(rs_new) <= stop:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, iters


def _datum_values(domain, datum, shape):
    if callable(datum):
        vals = np.asarray(datum(domain.node_coords()), dtype=float)
    else:
        vals = np.broadcast_to(np.asarray(datum, dtype=float), shape).copy()
    if vals.shape != shape:
        raise ValueError("datum shape does not match the field")
    return vals


def _pin_mask_u(domain, params):
    pinned = ~domain.active
    if params.variant == "dirichlet":
        pinned = pinned | domain.dirichlet
    return pinned


def minimize_displacement(v, params, u_init, datum=None):
    """Exact displacement substep: CG on the quadratic at fixed v.

    For variant "dirichlet" the datum is sampled and pinned on the Dirichlet
    layer (eliminated from the unknowns).  Starting from ``u_init``, the
    energy lam*elastic + theta*divergence never increases.  Returns the new
    displacement field.
    """
    fld, _ = _minimize_displacement(v, params, u_init, datum, SolverConfig())
    return fld


def _minimize_displacement(v, params, u_init, datum, cfg):
    if params.variant == "ni":
        raise ValueError("use minimize_displacement_ni for variant 'ni'")
    dom = v.domain
    if not same_grid(dom, u_init.domain):
        raise ValueError("v and u_init live on different grids")
    shape = u_init.values.shape
    model = _QuadraticModel(dom, params, v.values)
    pinned = _pin_mask_u(dom, params)
    if params.variant == "dirichlet":
        if datum is None:
            raise ValueError("variant 'dirichlet' needs a datum")
        target = _datum_values(dom, datum, shape)
    else:
        target = np.zeros(shape)

    u_pin = np.zeros(shape)
    u_pin[pinned] = target[pinned]

    def apply_A(x):
        y = model.grad(x) * 0.5
        y[pinned] = 0.0
        return y

    b = -(model.grad(u_pin) * 0.5)
    b[pinned] = 0.0
    x0 = u_init.values.copy()
    x0[pinned] = 0.0
    x, iters = _cg(apply_A, b, x0, cfg.cg_tol, cfg.cg_max_iter)
    x[pinned] = 0.0
    out = x + u_pin
    return VectorField(dom, out), iters


def minimize_phase(u, params, v_init=None):
    """Exact phase substep: CG on the SPD v-system, then clamp to [0, 1].

    With u == 0 the solution is v == 1 exactly.  For variant "dirichlet" the
    phase field is pinned to 1 on the Dirichlet layer.  The clamp is a no-op
    up to solver tolerance; larger violations are logged.
    """
    fld, _ = _minimize_phase(u, params, v_init, SolverConfig())
    return fld


def _minimize_phase(u, params, v_init, cfg):
    dom = u.domain
    d = dom.d
    delta = dom.spacing
    a = _phase_coefficients(dom, params, u.values)
    pinned = ~dom.active
    if params.variant == "dirichlet":
        pinned = pinned | dom.dirichlet

    mass = delta ** d / params.eps
    graph_w = params.eps * delta ** (d - 2)

    bonds = []
    for k in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[k] = slice(0, dom.extents[k] - 1)
        hi[k] = slice(1, dom.extents[k])
        lo, hi = tuple(lo), tuple(hi)
        if dom.all_active:
            bmask = None
        else:
            bmask = dom.active[lo] & dom.active[hi]
        bonds.append((lo, hi, bmask))

    def apply_free(x):
        y = _apply_phase_operator(x, a, mass, graph_w, bonds)
        y[pinned] = 0.0
        return y

    v_pin = np.zeros(dom.extents)
    v_pin[pinned] = 1.0
    b = np.full(dom.extents, mass)
    b -= _apply_phase_operator(v_pin, a, mass, graph_w, bonds)
    b[pinned] = 0.0

    x0 = (v_init.values.copy() if v_init is not None else np.ones(dom.extents))
    x0[pinned] = 0.0
    x, iters = _cg(apply_free, b, x0, cfg.cg_tol, cfg.cg_max_iter)
    x[pinned] = 0.0
    v = x + v_pin

    clipped = np.clip(v, 0.0, 1.0)
    worst = float(np.abs(clipped - v).max())
    if worst > 1e-8:
        log.warning("phase substep clamped values by up to %.3e", worst)
    return ScalarField(dom, clipped), iters


def _apply_phase_operator(x, a, mass, graph_w, bonds):
    y = (2.0 * a + mass) * x
    for lo, hi, bmask in bonds:
        diff = x[hi] - x[lo]
        if bmask is not None:
            diff = np.where(bmask, diff, 0.0)
        y[hi] += graph_w * diff
        y[lo] -= graph_w * diff
    return y


def minimize_displacement_ni(v, params, u_init):
    """Displacement substep for the non-interpenetration variant.

    Projected gradient descent with Armijo backtracking on
    lam*elastic + theta*(v^2-weighted positive + unweighted negative
    divergence parts), projected onto the box |u_i(node)| <= M.  The energy
    never increases and the output satisfies the bound exactly.
    """
    fld, _ = _minimize_displacement_ni(v, params, u_init, SolverConfig())
    return fld


def _minimize_displacement_ni(v, params, u_init, cfg):
    if params.variant != "ni":
        raise ValueError("minimize_displacement_ni needs variant 'ni'")
    dom = v.domain
    if not same_grid(dom, u_init.domain):
        raise ValueError("v and u_init live on different grids")
    M = params.M
    model = _QuadraticModel(dom, params, v.values)
    vf = ScalarField(dom, v.values)

    def objective(vals):
        fld = VectorField(dom, vals)
        return (params.lam * elastic_energy(fld, vf, model.dirs)
                + params.theta * divergence_energy_ni(fld, vf))

    u = np.clip(u_init.values, -M, M)
    J = objective(u)
    t = 1.0
    iters = 0
    for iters in range(1, cfg.pg_max_iter + 1):
        g = model.grad(u)
        gnorm2 = float(np.vdot(g, g))
        if gnorm2 == 0.0:
            break
        accepted = False
        while t > 1e-18:
            cand = np.clip(u - t * g, -M, M)
            step = cand - u
            step2 = float(np.vdot(step, step))
            if step2 == 0.0:
                break  # projection absorbs the whole step
            Jc = objective(cand)
            if Jc <= J - cfg.armijo_c / t * step2:
                accepted = True
                break
            t *= cfg.backtrack
        if not accepted:
            break
        move = float(np.abs(cand - u).max())
        u, J = cand, Jc
        t = min(t / cfg.backtrack, 1e8)  # gentle growth after acceptance
        if move <= cfg.pg_step_tol * max(1.0, float(np.abs(u).max())):
            break
    return VectorField(dom, u), iters


def nearest_datum_extension(domain, datum):
    """Displacement init: datum on the Dirichlet layer, nearest-datum value
    elsewhere (each free node copies the datum of its closest Dirichlet
    node)."""
    shape = domain.extents + (domain.d,)
    pinned = domain.dirichlet
    if not pinned.any():
        return VectorField(domain, np.zeros(shape))
    vals = _datum_values(domain, datum, shape)
    coords = domain.node_coords().reshape(-1, domain.d)
    flatvals = vals.reshape(-1, domain.d)
    pin_flat = pinned.reshape(-1)
    pin_pts = coords[pin_flat]
    pin_vals = flatvals[pin_flat]
    out = np.empty_like(flatvals)
    out[pin_flat] = pin_vals
    free_idx = np.nonzero(~pin_flat)[0]
    chunk = 4096
    for s in range(0, free_idx.size, chunk):
        sel = free_idx[s:s + chunk]
        d2 = ((coords[sel][:, None, :] - pin_pts[None, :, :]) ** 2).sum(axis=2)
        out[sel] = pin_vals[np.argmin(d2, axis=1)]
    return VectorField(domain, out.reshape(shape))


def alternate_minimize(params, domain, u0=None, v0=None, config=None, datum=None):
    """Staggered minimization: alternate exact substeps until the total
    energy stalls.

    Defaults: u0 is the nearest-datum Dirichlet extension (zeros without a
    Dirichlet layer), v0 == 1.  Returns (report, u, v); the report's trace
    holds the energy breakdown at the start and after every outer iteration
    and is nonincreasing up to roundoff.
    """
    cfg = config or SolverConfig()
    if params.variant == "dirichlet" and datum is None:
        raise ValueError("variant 'dirichlet' needs a datum")
    t_start = time.perf_counter()

    if u0 is None:
        if params.variant == "dirichlet":
            u0 = nearest_datum_extension(domain, datum)
        else:
            u0 = VectorField.zeros(domain)
    if v0 is None:
        v0 = ScalarField.ones(domain)
    u, v = u0.copy(), v0.copy()
    if params.variant == "dirichlet":
        uv = u.values.copy()
        uv[domain.dirichlet] = _datum_values(domain, datum, uv.shape)[domain.dirichlet]
        u = VectorField(domain, uv)
        vv = v.values.copy()
        vv[domain.dirichlet] = 1.0
        v = ScalarField(domain, vv)
    if params.variant == "ni":
        u = VectorField(domain, np.clip(u.values, -params.M, params.M))

    report = SolveReport()
    bd = total_energy(u, v, params, datum=datum)
    report.trace.append(bd)
    prev = bd.total

    for outer in range(1, cfg.max_outer + 1):
        if params.variant == "ni":
            u, it_u = _minimize_displacement_ni(v, params, u, cfg)
        else:
            u, it_u = _minimize_displacement(v, params, u, datum, cfg)
        v, it_v = _minimize_phase(u, params, v, cfg)
        report.u_iterations += it_u
        report.v_iterations += it_v
        report.outer_iterations = outer
        bd = total_energy(u, v, params, datum=datum)
        report.trace.append(bd)
        cur = bd.total
        if math.isfinite(prev) and math.isfinite(cur):
            if abs(prev - cur) <= cfg.outer_tol * max(1.0, abs(prev)):
                report.converged = True
                prev = cur
                break
        prev = cur

    report.wall_clock = time.perf_counter() - t_start
    return report, u, v
