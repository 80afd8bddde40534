"""Discrete phase-field fracture energies on a lattice.

Three ingredients make up the total energy of a displacement field u and a
phase field v (v near 1 = sound material, v near 0 = crack):

* an elastic term summing, over a direction system, squared directional
  difference quotients of u weighted by v^2 at the base node,
* a divergence term summing squared directed divergences over all sign
  patterns, again weighted by v^2, with a variant that splits the divergence
  into positive part (weighted by v^2) and negative part (unweighted) to
  penalize interpenetration at full strength,
* a discrete Modica-Mortola term driving v to 1 away from a lower-dimensional
  transition set.

Scaling: elastic and divergence sums carry delta^(d-2) per node, the
Modica-Mortola term delta^d.  With the default direction weights and v == 1,
the elastic term of an affine field u(x) = A x converges to
(|sym A|^2 + (tr A)^2 / 2) * |box| and the divergence term to
(tr A)^2 * |box|, so

    lambda * elastic + theta * divergence + modica_mortola

is a discrete approximation of the Griffith-type functional

    lambda * int |sym Du|^2 + (lambda/2 + theta) * int (div u)^2
    + surface measure of the jump set.

Everything here is vectorized over the node grid; the per-node reference
definitions live in ``operators``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import (DirectionSet, ScalarField, VectorField, direction_set,
                      same_grid)
from .operators import sign_patterns

_VARIANTS = ("plain", "dirichlet", "ni")


@dataclass(frozen=True)
class EnergyParams:
    """Weights and scales of the total energy.

    lam, theta : nonnegative coefficients of the elastic and divergence terms.
    eps : transition width of the Modica-Mortola term, > 0.
    delta : lattice spacing the energy expects (checked against the domain).
    variant : "plain", "dirichlet" (datum pinned on the Dirichlet layer) or
        "ni" (non-interpenetration split plus sup-norm bound M).
    M : sup-norm bound on u, required iff variant == "ni".
    weights : optional direction-weight override, squared length -> value.
    """

    lam: float
    theta: float
    eps: float
    delta: float
    variant: str = "plain"
    M: float = None
    weights: dict = None

    def __post_init__(self):
        if self.lam < 0 or self.theta < 0:
            raise ValueError("lam and theta must be nonnegative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}")
        if self.variant == "ni":
            if self.M is None or not self.M >= 0:
                raise ValueError("variant 'ni' needs a bound M >= 0")


@dataclass
class EnergyBreakdown:
    """Per-term values of one energy evaluation.

    Raw values exclude the lam/theta weights.  ``total`` is the weighted sum
    when the variant's constraint holds and +inf otherwise; the constraint
    status is carried by ``admissible`` so no infinity enters arithmetic.
    """

    f_elastic_raw: float
    f_div_raw: float
    g_mm: float
    lam: float
    theta: float
    admissible: bool = True

    @property
    def f_elastic(self):
        return self.lam * self.f_elastic_raw

    @property
    def f_div(self):
        return self.theta * self.f_div_raw

    @property
    def total(self):
        if not self.admissible:
            return math.inf
        return self.f_elastic + self.f_div + self.g_mm

    def to_json_dict(self):
        return {
            "f_elastic_raw": self.f_elastic_raw,
            "f_div_raw": self.f_div_raw,
            "g_mm": self.g_mm,
            "lambda": self.lam,
            "theta": self.theta,
            "total": self.total if self.admissible else None,
            "admissible": self.admissible,
        }


def _check_pair(u, v):
    if not isinstance(u, VectorField) or not isinstance(v, ScalarField):
        raise TypeError("expected a VectorField u and a ScalarField v")
    if not same_grid(u.domain, v.domain):
        raise ValueError("u and v live on different grids")
    return u.domain


def _combine_mask(mask, subset, slices):
    if subset is None:
        return mask
    sub = subset[slices[0]] & subset[slices[1]] & subset[slices[2]]
    return sub if mask is None else (mask & sub)


def elastic_energy_xi(u, v, xi, subset=None):
    """Elastic energy along one direction.

    Sum over admissible nodes of
    0.5 * delta^(d-2) * v^2 * (quotient(+xi)^2 + quotient(-xi)^2);
    ``subset`` (boolean node mask) restricts the sum to nodes whose whole
    +-xi segment lies in the subset.
    """
    dom = _check_pair(u, v)
    if len(xi) != dom.d:
        raise ValueError(f"direction {xi!r} has wrong length for d={dom.d}")
    sl = dom.range_slices(xi)
    if sl is None:
        return 0.0
    B, Bp, Bm = sl
    xi_arr = np.asarray(xi, dtype=float)
    nrm2 = float(xi_arr @ xi_arr)
    uv = u.values
    dp = ((uv[Bp] - uv[B]) @ xi_arr) / nrm2
    dm = ((uv[B] - uv[Bm]) @ xi_arr) / nrm2  # quotient along -xi
    terms = v.values[B] ** 2 * (dp * dp + dm * dm)
    mask = _combine_mask(dom.range_mask(xi), subset, sl)
    if mask is not None:
        terms = np.where(mask, terms, 0.0)
    return 0.5 * dom.spacing ** (dom.d - 2) * float(terms.sum())


def elastic_energy(u, v, dirs=None, subset=None):
    """Direction-weighted elastic energy (sum over the direction system)."""
    dom = _check_pair(u, v)
    if dirs is None:
        dirs = direction_set(dom.d)
    total = 0.0
    for xi in dirs.directions:
        total += dirs.weight_of(xi) * elastic_energy_xi(u, v, xi, subset=subset)
    return total


def _directed_divs(u, dom):
    """List of 2^d directed-divergence arrays over the divergence sub-box."""
    sl = dom.div_slices()
    if sl is None:
        return None, None
    base, plus, minus = sl
    uv = u.values
    fwd = [uv[plus[i] + (i,)] - uv[base + (i,)] for i in range(dom.d)]
    bwd = [uv[base + (i,)] - uv[minus[i] + (i,)] for i in range(dom.d)]
    divs = []
    for s in sign_patterns(dom.d):
        acc = None
        for i, k in enumerate(s):
            piece = fwd[i] if k > 0 else bwd[i]
            acc = piece.copy() if acc is None else acc + piece
        divs.append(acc)
    return sl, divs


def _div_mask(dom, subset):
    sl = dom.div_slices()
    mask = dom.div_mask()
    if subset is None or sl is None:
        return mask
    base, plus, minus = sl
    sub = subset[base].copy()
    for i in range(dom.d):
        sub &= subset[plus[i]] & subset[minus[i]]
    return sub if mask is None else (mask & sub)


def divergence_energy(u, v, subset=None):
    """Divergence energy: mean over sign patterns of squared directed
    divergences, weighted by v^2 and delta^(d-2)."""
    dom = _check_pair(u, v)
    sl, divs = _directed_divs(u, dom)
    if divs is None:
        return 0.0
    acc = sum(g * g for g in divs)
    terms = v.values[sl[0]] ** 2 * acc
    mask = _div_mask(dom, subset)
    if mask is not None:
        terms = np.where(mask, terms, 0.0)
    return dom.spacing ** (dom.d - 2) / 2 ** dom.d * float(terms.sum())


def divergence_energy_ni(u, v, subset=None):
    """Non-interpenetration divergence energy.

    The positive part of each directed divergence is weighted by v^2, the
    negative part enters at full strength regardless of v.  With v == 1 this
    recomposes to :func:`divergence_energy` exactly, since
    max(x,0)^2 + max(-x,0)^2 == x^2.
    """
    dom = _check_pair(u, v)
    sl, divs = _directed_divs(u, dom)
    if divs is None:
        return 0.0
    acc_pos = None
    acc_neg = None
    for g in divs:
        p = np.maximum(g, 0.0)
        n = np.maximum(-g, 0.0)
        acc_pos = p * p if acc_pos is None else acc_pos + p * p
        acc_neg = n * n if acc_neg is None else acc_neg + n * n
    terms = v.values[sl[0]] ** 2 * acc_pos + acc_neg
    mask = _div_mask(dom, subset)
    if mask is not None:
        terms = np.where(mask, terms, 0.0)
    return dom.spacing ** (dom.d - 2) / 2 ** dom.d * float(terms.sum())


def modica_mortola(v, eps, subset=None):
    """Discrete Modica-Mortola energy of a scalar field.

    0.5 * sum over active nodes of delta^d * ( (v-1)^2 / eps
    + eps * sum_k ((v(.+e_k) - v) / delta)^2 ), where the gradient sum skips
    axes whose forward neighbor leaves the domain (or the subset).
    """
    if not isinstance(v, ScalarField):
        raise TypeError("modica_mortola expects a ScalarField")
    if not eps > 0:
        raise ValueError("eps must be positive")
    dom = v.domain
    vv = v.values
    node_mask = None
    if not dom.all_active:
        node_mask = dom.active
    if subset is not None:
        node_mask = subset if node_mask is None else (node_mask & subset)

    well = (vv - 1.0) ** 2
    if node_mask is not None:
        well = np.where(node_mask, well, 0.0)
    well_sum = float(well.sum())

    grad_sum = 0.0
    for k in range(dom.d):
        lo = [slice(None)] * dom.d
        hi = [slice(None)] * dom.d
        lo[k] = slice(0, dom.extents[k] - 1)
        hi[k] = slice(1, dom.extents[k])
        lo, hi = tuple(lo), tuple(hi)
        diff = vv[hi] - vv[lo]
        sq = diff * diff
        if node_mask is not None:
            bond = node_mask[lo] & node_mask[hi]
            sq = np.where(bond, sq, 0.0)
        grad_sum += float(sq.sum())

    delta = dom.spacing
    return 0.5 * delta ** dom.d * (well_sum / eps + eps * grad_sum / delta ** 2)


def total_energy(u, v, params, datum=None):
    """Evaluate the total energy and return an :class:`EnergyBreakdown`.

    For variant "dirichlet" a datum (constant vector or callable) is required
    and admissibility means u equals the sampled datum and v equals 1 on the
    Dirichlet layer, checked by exact equality.  For variant "ni"
    admissibility means max |u_i(node)| <= params.M, checked exactly.
    """
    dom = _check_pair(u, v)
    rel = abs(params.delta - dom.spacing) / max(params.delta, dom.spacing)
    if rel > 1e-12:
        raise ValueError(f"params.delta={params.delta} does not match "
                         f"domain spacing {dom.spacing}")
    dirs = direction_set(dom.d, params.weights)
    raw_el = elastic_energy(u, v, dirs)
    admissible = True
    if params.variant == "ni":
        raw_div = divergence_energy_ni(u, v)
        admissible = bool(np.abs(u.values).max() <= params.M)
    else:
        raw_div = divergence_energy(u, v)
    if params.variant == "dirichlet":
        if datum is None:
            raise ValueError("variant 'dirichlet' needs a datum")
        sel = dom.dirichlet
        if sel.any():
            if callable(datum):
                target = np.asarray(datum(dom.node_coords()), dtype=float)
            else:
                target = np.broadcast_to(np.asarray(datum, dtype=float),
                                         u.values.shape)
            admissible = bool((u.values[sel] == target[sel]).all()
                              and (v.values[sel] == 1.0).all())
    g = modica_mortola(v, params.eps)
    return EnergyBreakdown(f_elastic_raw=raw_el, f_div_raw=raw_div, g_mm=g,
                           lam=params.lam, theta=params.theta,
                           admissible=admissible)


# --- direction-sum quadratic form ------------------------------------------

def form_coefficients(dirs):
    """Closed-form coefficients (c1, c2, c3) of the direction-summed form.

    For a symmetric matrix M the weighted sum over the direction system of
    <M xi, xi>^2 / |xi|^4 equals
    c1 * sum_i M_ii^2 + 2 * c2 * sum_{i<j} M_ij^2 + c3 * (tr M)^2.
    """
    d = dirs.d
    s1 = dirs.weights.get(1, 0.0)
    s2 = dirs.weights.get(2, 0.0)
    s3 = dirs.weights.get(3, 0.0)
    # each space-diagonal class counted once up to sign: 4 directions per
    # axis triple, contributing 4 (tr M)^2 + 16 sum_{i<j} M_ij^2 per triple
    c1 = s1 + s2 * (d - 2) / 2.0
    c2 = s2 + 4.0 * s3 / 9.0 * (d - 1) * (d - 2)
    c3 = s2 / 2.0 + 2.0 * s3 / 9.0 * (d - 1) * (d - 2)
    return c1, c2, c3


def quadratic_form_identity(M, dirs=None, d=None):
    """Both sides of the direction-sum identity for a symmetric matrix.

    Returns (lhs, rhs): lhs is the direct weighted sum over directions of
    <M xi, xi>^2 / |xi|^4, rhs the closed form from
    :func:`form_coefficients`.  With the default weights
    rhs == |M|^2 + (tr M)^2 / 2.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be a square matrix")
    scale = max(1.0, float(np.abs(M).max()))
    if float(np.abs(M - M.T).max()) > 1e-12 * scale:
        raise ValueError("M must be symmetric")
    if dirs is None:
        dirs = direction_set(M.shape[0] if d is None else d)
    if dirs.d != M.shape[0]:
        raise ValueError("matrix dimension does not match the direction set")
    lhs = 0.0
    for xi in dirs.directions:
        xi_arr = np.asarray(xi, dtype=float)
        nrm2 = float(xi_arr @ xi_arr)
        q = float(xi_arr @ M @ xi_arr)
        lhs += dirs.weight_of(xi) * q * q / nrm2 ** 2
    c1, c2, c3 = form_coefficients(dirs)
    dd = dirs.d
    diag = float(np.sum(np.diag(M) ** 2))
    off = 0.0
    for i in range(dd):
        for j in range(i + 1, dd):
            off += float(M[i, j]) ** 2
    tr = float(np.trace(M))
    rhs = c1 * diag + 2.0 * c2 * off + c3 * tr * tr
    return lhs, rhs


# --- continuum reference ----------------------------------------------------

@dataclass
class Region:
    """Axis-aligned box on which the target displacement is smooth.

    ``displacement`` maps an (..., d) coordinate array to (..., d) values;
    ``displacement_grad`` optionally returns the Jacobian with
    grad[..., i, j] = d u_i / d x_j, else central differences are used.
    """

    lo: tuple
    hi: tuple
    displacement: object
    displacement_grad: object = None


@dataclass
class GriffithReference:
    """Piecewise-smooth target: smooth regions, a planar crack, a mismatch.

    ``crack`` is any object exposing ``measure`` (its d-1 dimensional size),
    e.g. :class:`glfrac.recovery.CrackGeometry`; ``mismatch_measure`` is the
    boundary-area term where the target disagrees with the boundary datum.
    """

    regions: list = field(default_factory=list)
    crack: object = None
    mismatch_measure: float = 0.0

    @property
    def crack_measure(self):
        if self.crack is None:
            return 0.0
        return float(self.crack.measure)


def _gauss_points(lo, hi, order):
    """Tensor Gauss-Legendre points and weights on a box."""
    xs, ws = np.polynomial.legendre.leggauss(order)
    d = len(lo)
    axes_p, axes_w = [], []
    for k in range(d):
        a, b = lo[k], hi[k]
        axes_p.append(0.5 * (b - a) * xs + 0.5 * (a + b))
        axes_w.append(0.5 * (b - a) * ws)
    grids = np.meshgrid(*axes_p, indexing="ij")
    pts = np.stack(grids, axis=-1).reshape(-1, d)
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    w = wgrids[0]
    for g in wgrids[1:]:
        w = w * g
    return pts, w.reshape(-1)


def _fd_jacobian(fn, pts, h):
    d = pts.shape[-1]
    rows = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        rows.append((np.asarray(fn(pts + e)) - np.asarray(fn(pts - e))) / (2 * h))
    # rows[j][..., i] = d u_i / d x_j -> assemble grad[..., i, j]
    return np.stack(rows, axis=-1)


def griffith_energy(ref, lam, theta, quad_order=6):
    """Continuum Griffith-type energy of a piecewise-smooth target.

    lam * int |sym Du|^2 + (lam/2 + theta) * int (div u)^2 over the smooth
    regions (tensor Gauss-Legendre of the given order per region), plus the
    crack measure, plus the Dirichlet mismatch measure.
    """
    if quad_order < 4:
        raise ValueError("quadrature order must be at least 4")
    bulk = 0.0
    for reg in ref.regions:
        pts, wts = _gauss_points(reg.lo, reg.hi, quad_order)
        if reg.displacement_grad is not None:
            G = np.asarray(reg.displacement_grad(pts), dtype=float)
        else:
            h = 1e-6 * max(1.0, float(np.abs(pts).max()))
            G = _fd_jacobian(reg.displacement, pts, h)
        sym = 0.5 * (G + np.swapaxes(G, -1, -2))
        dens = lam * np.sum(sym * sym, axis=(-1, -2)) \
            + (lam / 2.0 + theta) * np.trace(G, axis1=-2, axis2=-1) ** 2
        bulk += float(wts @ dens)
    return bulk + ref.crack_measure + float(ref.mismatch_measure)
