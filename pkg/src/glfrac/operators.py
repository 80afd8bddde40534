"""Per-node finite-difference operators on lattice fields.

These are the scalar building blocks of the energies: directional difference
quotients of vector fields, plain differences of scalar fields, and directed
divergences built from unit directions with a sign pattern.  They are written
for clarity and bounds-checked on every call; the energy module re-implements
the same stencils in vectorized form for the hot paths.

Conventions, for a vector field u and an integer direction xi:

    quotient(u, a, xi)  = <u(a + delta*xi) - u(a), xi> / |xi|^2

so for affine u(x) = A x the quotient equals delta * <A xi, xi> / |xi|^2, a
first-order approximation of delta times the symmetric-gradient form.  The
directed divergence for a sign pattern (k_1, ..., k_d), k_i in {-1, +1}, is

    sum_i k_i * (u_i(a + delta*k_i*e_i) - u_i(a))

which equals delta * tr A for affine fields, independently of the pattern.
Positive and negative parts are taken against exact floating-point zero.
"""

from __future__ import annotations

import itertools

import numpy as np

from .lattice import ScalarField, VectorField


def sign_patterns(d):
    """All 2^d sign patterns in fixed lexicographic order (-1 before +1)."""
    return list(itertools.product((-1, 1), repeat=d))


def _shifted_index(domain, alpha, xi, scale=1):
    idx = tuple(int(a + scale * z) for a, z in zip(alpha, xi))
    domain._check_index(idx)
    return idx


def diff_quot(u, alpha, xi):
    """Directional difference quotient of a vector field at node alpha.

    Raises IndexError when alpha or alpha + xi leaves the grid.
    """
    if not isinstance(u, VectorField):
        raise TypeError("diff_quot expects a VectorField")
    dom = u.domain
    dom._check_index(tuple(alpha))
    beta = _shifted_index(dom, alpha, xi)
    xi_arr = np.asarray(xi, dtype=float)
    nrm2 = float(xi_arr @ xi_arr)
    if nrm2 == 0.0:
        raise ValueError("direction must be nonzero")
    diff = u.values[beta] - u.values[tuple(alpha)]
    return float(diff @ xi_arr) / nrm2


def sym_pair_sq(u, alpha, xi):
    """Squared quotient pair |quotient(+xi)|^2 + |quotient(-xi)|^2.

    Needs both alpha + xi and alpha - xi inside the grid.
    """
    neg = tuple(-z for z in xi)
    qp = diff_quot(u, alpha, xi)
    qm = diff_quot(u, alpha, neg)
    return qp * qp + qm * qm


def delta_scalar(v, alpha, xi):
    """Plain difference v(alpha + delta*xi) - v(alpha) of a scalar field."""
    if not isinstance(v, ScalarField):
        raise TypeError("delta_scalar expects a ScalarField")
    dom = v.domain
    dom._check_index(tuple(alpha))
    beta = _shifted_index(dom, alpha, xi)
    return float(v.values[beta] - v.values[tuple(alpha)])


def div_directed(u, alpha, signs):
    """Directed divergence at alpha for one sign pattern.

    ``signs`` has d entries in {-1, +1}; entry i picks the forward or backward
    unit direction along axis i.
    """
    if not isinstance(u, VectorField):
        raise TypeError("div_directed expects a VectorField")
    dom = u.domain
    d = dom.d
    if len(signs) != d or any(s not in (-1, 1) for s in signs):
        raise ValueError(f"signs must be d entries in -1/+1, got {signs!r}")
    alpha = tuple(alpha)
    dom._check_index(alpha)
    total = 0.0
    for i, k in enumerate(signs):
        step = [0] * d
        step[i] = k
        beta = _shifted_index(dom, alpha, step)
        total += k * (u.values[beta][i] - u.values[alpha][i])
    return float(total)


def div_sq_total(u, alpha):
    """Sum of squared directed divergences over all 2^d sign patterns."""
    return sum(div_directed(u, alpha, s) ** 2 for s in sign_patterns(u.domain.d))


def div_pm_sq(u, alpha, part):
    """Sum over sign patterns of the squared positive or negative part.

    ``part`` is "+" or "-".  Positive part max(x, 0), negative part
    max(-x, 0), both against exact 0.0; each pattern's square lands in
    exactly one part, so the two sums recompose to div_sq_total up to
    floating-point reassociation.
    """
    if part not in ("+", "-"):
        raise ValueError("part must be '+' or '-'")
    total = 0.0
    for s in sign_patterns(u.domain.d):
        x = div_directed(u, alpha, s)
        y = max(x, 0.0) if part == "+" else max(-x, 0.0)
        total += y * y
    return total
