"""Simplicial interpolation and related proof-side constructions.

The unit cube [0,1]^d is decomposed into d! simplices, one per permutation pi
of the axes: the simplex of pi is the region {t_{pi(1)} >= ... >= t_{pi(d)}}
with the monotone vertex chain 0, e_{pi(1)}, e_{pi(1)}+e_{pi(2)}, ...,
(1,...,1).  Simplices are listed in lexicographic permutation order and ties
at shared faces resolve to the first containing simplex in that order.

On a lattice domain every grid cell is split this way, giving a continuous
piecewise-affine interpolant of nodal fields whose gradient is constant per
simplex and whose edge directions live in the standard direction system.  The
module also provides the per-cell minimum of a scalar field (the piecewise
constant lower envelope used with phase fields) and a lattice translation that
samples a continuum function at nodes shifted by a sub-cell offset.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import ScalarField, VectorField


def _int_det(cols):
    """Exact integer determinant of a small integer matrix (d <= 3)."""
    m = [[int(x) for x in col] for col in cols]  # m[j] is column j
    d = len(m)
    if d == 1:
        return m[0][0]
    if d == 2:
        return m[0][0] * m[1][1] - m[1][0] * m[0][1]
    if d == 3:
        return (m[0][0] * (m[1][1] * m[2][2] - m[2][1] * m[1][2])
                - m[1][0] * (m[0][1] * m[2][2] - m[2][1] * m[0][2])
                + m[2][0] * (m[0][1] * m[1][2] - m[1][1] * m[0][2]))
    raise ValueError("only d <= 3 supported")


@dataclass(frozen=True)
class Simplex:
    """One cell simplex: vertex chain of the permutation ``perm``.

    ``vertices`` has shape (d+1, d) with integer 0/1 entries, vertex k being
    the sum of the first k unit vectors in permutation order.  ``edges`` lists
    all vertex index pairs (i, j), i < j; the corresponding directions
    vertices[j] - vertices[i] are the d(d+1)/2 edge directions.
    """

    perm: tuple
    vertices: tuple  # tuple of tuples, immutable

    @property
    def d(self):
        return len(self.perm)

    @property
    def edges(self):
        return [(i, j) for i in range(self.d + 1) for j in range(i + 1, self.d + 1)]

    def edge_directions(self):
        vs = np.asarray(self.vertices, dtype=int)
        return [tuple(int(x) for x in vs[j] - vs[i]) for i, j in self.edges]

    def volume(self):
        """Exact volume as a Fraction (always 1/d! for these simplices)."""
        vs = np.asarray(self.vertices, dtype=int)
        cols = [vs[k + 1] - vs[0] for k in range(self.d)]
        det = _int_det([[int(c[r]) for c in cols] for r in range(self.d)])
        return Fraction(abs(det), math.factorial(self.d))

    def contains(self, t, tol=0.0):
        """Whether local coordinates t lie in this simplex (sorted chain)."""
        t = np.asarray(t, dtype=float)
        s = [t[p] for p in self.perm]
        seq = [1.0] + s + [0.0]
        return all(a >= b - tol for a, b in zip(seq, seq[1:]))

    def sym_rank_one_basis(self):
        """The matrices nu nu^T for the normalized edge directions."""
        mats = []
        for e in self.edge_directions():
            nu = np.asarray(e, dtype=float)
            nu = nu / np.linalg.norm(nu)
            mats.append(np.outer(nu, nu))
        return mats

    def xi_coords(self, xi):
        """Coefficients expressing xi xi^T / |xi|^2 ... solves the expansion
        of the rank-one matrix of a direction in the edge basis.

        Returns the coefficient vector l with
        sum_j l_j * nu_j nu_j^T == xi_hat xi_hat^T, where xi_hat = xi/|xi| and
        nu_j are the normalized edge directions.  The basis spans the
        symmetric matrices, so this is solvable for any direction.
        """
        d = self.d
        basis = self.sym_rank_one_basis()
        xi_arr = np.asarray(xi, dtype=float)
        nrm = np.linalg.norm(xi_arr)
        if nrm == 0:
            raise ValueError("direction must be nonzero")
        target = np.outer(xi_arr, xi_arr) / (nrm * nrm)

        def sym_vec(M):
            out = [M[i, i] for i in range(d)]
            for i in range(d):
                for j in range(i + 1, d):
                    out.append(math.sqrt(2.0) * M[i, j])
            return out

        A = np.array([sym_vec(B) for B in basis]).T
        b = np.array(sym_vec(target))
        return np.linalg.solve(A, b)


def freudenthal(d):
    """The d! cell simplices in lexicographic permutation order."""
    if d not in (1, 2, 3):
        raise ValueError(f"d must be 1, 2 or 3, got {d}")
    out = []
    for perm in itertools.permutations(range(d)):
        verts = [tuple([0] * d)]
        cur = [0] * d
        for p in perm:
            cur = list(cur)
            cur[p] = 1
            verts.append(tuple(cur))
        out.append(Simplex(perm=perm, vertices=tuple(verts)))
    return out


class AffineInterpolant:
    """Continuous piecewise-affine interpolant of a nodal field.

    Evaluates at arbitrary points of the closed box covered by fully active
    cells; queries outside raise ValueError.  The gradient is constant on each
    cell simplex and is exposed via :meth:`simplex_gradient`.
    """

    def __init__(self, fld):
        if not isinstance(fld, (ScalarField, VectorField)):
            raise TypeError("expected a ScalarField or VectorField")
        self.field = fld
        self.domain = fld.domain
        d = self.domain.d
        self._perms = list(itertools.permutations(range(d)))
        self._perm_index = {p: i for i, p in enumerate(self._perms)}
        self.simplices = freudenthal(d)

    def locate(self, x):
        """Cell index, simplex index and local coordinates of a point.

        Ties on shared faces resolve to the lexicographically first simplex.
        """
        dom = self.domain
        x = np.asarray(x, dtype=float)
        if x.shape != (dom.d,):
            raise ValueError(f"point must have shape ({dom.d},)")
        y = (x - np.asarray(dom.origin)) / dom.spacing
        cell = []
        for k in range(dom.d):
            n = dom.extents[k]
            c = math.floor(y[k])
            if c == n - 1 and abs(y[k] - (n - 1)) == 0.0:
                c = n - 2  # top boundary belongs to the last cell
            if not 0 <= c <= n - 2:
                raise ValueError(f"point {x.tolist()} outside the grid box")
            cell.append(int(c))
        cell = tuple(cell)
        if not dom.all_active:
            for corner in itertools.product((0, 1), repeat=dom.d):
                idx = tuple(c + o for c, o in zip(cell, corner))
                if not dom.active[idx]:
                    raise ValueError(f"point {x.tolist()} in a non-triangulated cell")
        t = y - np.asarray(cell, dtype=float)
        t = np.clip(t, 0.0, 1.0)
        order = tuple(int(i) for i in np.argsort(-t, kind="stable"))
        return cell, self._perm_index[order], t

    def _weights(self, perm, t):
        d = self.domain.d
        s = [float(t[p]) for p in perm]
        w = [1.0 - s[0]]
        for k in range(d - 1):
            w.append(s[k] - s[k + 1])
        w.append(s[d - 1])
        return w

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            return np.array([self(p) for p in x])
        cell, sidx, t = self.locate(x)
        sim = self.simplices[sidx]
        vals = self.field.values
        out = 0.0
        for w, vert in zip(self._weights(sim.perm, t), sim.vertices):
            idx = tuple(c + o for c, o in zip(cell, vert))
            out = out + w * vals[idx]
        return out

    def simplex_gradient(self, cell, simplex_index):
        """Constant gradient on one cell simplex.

        Shape (d,) for scalar fields, (d, d) with grad[i, j] = d u_i / d x_j
        for vector fields.  Built from successive chain-vertex differences,
        one lattice edge per axis.
        """
        dom = self.domain
        sim = self.simplices[simplex_index]
        vals = self.field.values
        vector = isinstance(self.field, VectorField)
        if vector:
            grad = np.zeros((dom.d, dom.d))
        else:
            grad = np.zeros(dom.d)
        prev = tuple(cell)
        dom._check_index(prev)
        for k, axis in enumerate(sim.perm):
            nxt = tuple(c + o for c, o in zip(cell, sim.vertices[k + 1]))
            dom._check_index(nxt)
            diff = (vals[nxt] - vals[prev]) / dom.spacing
            if vector:
                grad[:, axis] = diff
            else:
                grad[axis] = diff
            prev = nxt
        return grad


def cell_min(v):
    """Per-cell minimum of a scalar field over the 2^d cell corners.

    Returns (values, valid): arrays over the cell grid (one less node per
    axis).  Cells with an inactive corner are skipped: valid is False there
    and the value is set to 0.
    """
    if not isinstance(v, ScalarField):
        raise TypeError("cell_min expects a ScalarField")
    dom = v.domain
    d = dom.d
    out = None
    valid = None
    for corner in itertools.product((0, 1), repeat=d):
        sl = tuple(slice(o, dom.extents[k] - 1 + o) for k, o in enumerate(corner))
        piece = v.values[sl]
        out = piece.copy() if out is None else np.minimum(out, piece)
        if not dom.all_active:
            am = dom.active[sl]
            valid = am.copy() if valid is None else (valid & am)
    if valid is None:
        valid = np.ones(out.shape, dtype=bool)
    out = np.where(valid, out, 0.0)
    return out, valid


def translate(u, y, domain=None):
    """Sub-cell lattice translation.

    ``y`` is an offset in [0,1)^d in cell units.  For a continuum function
    (callable on an (..., d) coordinate array) the result is the nodal field
    sampling u at node + spacing*y; ``domain`` is required and the component
    count decides between scalar and vector output.  Discrete nodal fields
    are piecewise constant on cells, and every point node + spacing*y stays
    inside the node's own cell, so translating a field returns an equal copy.
    """
    y = np.asarray(y, dtype=float)
    if ((y < 0.0) | (y >= 1.0)).any():
        raise ValueError("offset components must lie in [0, 1)")
    if isinstance(u, (ScalarField, VectorField)):
        if y.shape != (u.domain.d,):
            raise ValueError("offset has wrong length")
        return u.copy()
    if domain is None:
        raise ValueError("translating a callable needs a domain")
    if y.shape != (domain.d,):
        raise ValueError("offset has wrong length")
    pts = domain.node_coords() + domain.spacing * y
    vals = np.asarray(u(pts), dtype=float)
    if vals.shape == domain.extents:
        return ScalarField(domain, vals)
    if vals.shape == domain.extents + (domain.d,):
        return VectorField(domain, vals)
    raise ValueError(f"callable returned shape {vals.shape}, expected "
                     f"{domain.extents} or {domain.extents + (domain.d,)}")


def hat_interpolant_1d(values, delta, origin=0.0):
    """Continuous piecewise-linear interpolant of 1D nodal values.

    Returns a callable on [origin, origin + (n-1)*delta]; queries outside
    raise ValueError.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("need a 1D array of at least 2 values")
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = values.size
    hi = origin + (n - 1) * delta

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        if (x < origin - 1e-12 * delta).any() or (x > hi + 1e-12 * delta).any():
            raise ValueError("query outside the interpolation interval")
        t = np.clip((x - origin) / delta, 0.0, n - 1)
        i = np.minimum(t.astype(int), n - 2)
        frac = t - i
        out = (1.0 - frac) * values[i] + frac * values[i + 1]
        return float(out[0]) if scalar else out

    return evaluate
