"""Regular lattice domains and nodal fields.

The computational domain is an axis-aligned box discretized by the lattice
``origin + spacing * Z^d`` for ``d`` in {2, 3}.  Nodes are stored on a dense
index grid of shape ``extents`` in row-major order, so the last axis varies
fastest when the grid is flattened.  An active mask selects the nodes that
belong to the domain (all true for plain boxes) and a Dirichlet mask marks the
nodes whose half-open cell ``node + [0, spacing)^d`` meets the boundary region
where data is imposed.

Difference stencils reach along integer directions ``xi``; the admissible
summation set for a direction is the set of nodes where the whole segment
``[node - spacing*xi, node + spacing*xi]`` stays inside the domain.  On masked
domains the check is conservative: the node and both segment endpoints must be
active (the directions used here are primitive, so those are exactly the
lattice points of the segment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NodeIndex = tuple  # multi-index of a node, length d

_FACE_AXES = {"x": 0, "y": 1, "z": 2}

# relative snap tolerance when a box side is a near-integer multiple of spacing
_SNAP = 1e-9


def _node_count(length, delta):
    m = length / delta
    r = round(m)
    if abs(m - r) <= _SNAP * max(1.0, abs(m)):
        m = r
    return int(math.floor(m)) + 1


class LatticeDomain:
    """Axis-aligned box lattice with active and Dirichlet node masks.

    Instances are immutable after construction; the mask arrays are marked
    read-only.  Use :func:`build_domain` instead of calling this directly.
    """

    def __init__(self, origin, spacing, extents, active, dirichlet, collar_cells=0):
        self.d = len(extents)
        self.origin = tuple(float(o) for o in origin)
        self.spacing = float(spacing)
        self.extents = tuple(int(n) for n in extents)
        self.active = active
        self.dirichlet = dirichlet
        self.collar_cells = int(collar_cells)
        for arr in (self.active, self.dirichlet):
            arr.setflags(write=False)
        self.n_nodes = int(np.prod(self.extents))
        self.all_active = bool(self.active.all())
        self._coords = None

    def __repr__(self):
        return (f"LatticeDomain(d={self.d}, extents={self.extents}, "
                f"spacing={self.spacing}, active={int(self.active.sum())}/{self.n_nodes})")

    def node_coords(self):
        """Array of node positions, shape ``extents + (d,)``."""
        if self._coords is None:
            axes = [self.origin[k] + self.spacing * np.arange(self.extents[k])
                    for k in range(self.d)]
            grids = np.meshgrid(*axes, indexing="ij")
            self._coords = np.stack(grids, axis=-1)
            self._coords.setflags(write=False)
        return self._coords

    def node_position(self, idx):
        self._check_index(idx)
        return np.array([self.origin[k] + self.spacing * idx[k] for k in range(self.d)])

    def _check_index(self, idx):
        if len(idx) != self.d:
            raise IndexError(f"node index {idx!r} has wrong length for d={self.d}")
        for k, i in enumerate(idx):
            if not 0 <= i < self.extents[k]:
                raise IndexError(f"node index {idx!r} outside grid {self.extents}")

    # --- stencil ranges -------------------------------------------------

    def range_slices(self, xi):
        """Slices (base, plus, minus) of the sub-box where node +- xi fit.

        Returns None when the direction does not fit inside the grid at all.
        ``base`` selects the summation nodes, ``plus``/``minus`` the shifted
        views aligned with it.
        """
        base, plus, minus = [], [], []
        for k in range(self.d):
            a = abs(int(xi[k]))
            n = self.extents[k]
            if n - 2 * a <= 0:
                return None
            z = int(xi[k])
            base.append(slice(a, n - a))
            plus.append(slice(a + z, n - a + z))
            minus.append(slice(a - z, n - a - z))
        return tuple(base), tuple(plus), tuple(minus)

    def range_mask(self, xi):
        """Boolean mask over the base sub-box, or None for all-active domains."""
        sl = self.range_slices(xi)
        if sl is None:
            return None
        if self.all_active:
            return None
        b, p, m = sl
        return self.active[b] & self.active[p] & self.active[m]

    def div_slices(self):
        """Base/shift slices for the divergence stencil (all unit directions).

        Returns (base, plus_list, minus_list) where plus_list[k] shifts the
        base sub-box by +e_k and minus_list[k] by -e_k, or None when the grid
        is too small.
        """
        for n in self.extents:
            if n < 3:
                return None
        base = tuple(slice(1, n - 1) for n in self.extents)
        plus, minus = [], []
        for k in range(self.d):
            p = list(base)
            m = list(base)
            n = self.extents[k]
            p[k] = slice(2, n)
            m[k] = slice(0, n - 2)
            plus.append(tuple(p))
            minus.append(tuple(m))
        return base, plus, minus

    def div_mask(self):
        sl = self.div_slices()
        if sl is None:
            return None
        if self.all_active:
            return None
        base, plus, minus = sl
        mask = self.active[base].copy()
        for k in range(self.d):
            mask &= self.active[plus[k]] & self.active[minus[k]]
        return mask


def build_domain(d, origin, lengths, delta, dirichlet=None, extension_cells=0,
                 mask=None):
    """Build a box lattice domain.

    Parameters
    ----------
    d : int, 2 or 3.
    origin : sequence of d floats, lower corner of the box.
    lengths : sequence of d floats, box side lengths (each >= delta).
    delta : float, lattice spacing, > 0.
    dirichlet : None, "full", or iterable of face names among
        {"x-", "x+", "y-", "y+", "z-", "z+"}; marks nodes whose cell meets the
        named boundary face.
    extension_cells : int >= 0; when positive the box is enlarged by that many
        cell layers per side and the added collar nodes are Dirichlet-masked
        (boundary-datum mode via an exterior collar).  Mutually exclusive with
        a face descriptor.
    mask : optional boolean array of the final grid shape restricting the
        active node set.
    """
    if d not in (2, 3):
        raise ValueError(f"d must be 2 or 3, got {d}")
    if not delta > 0:
        raise ValueError(f"spacing must be positive, got {delta}")
    origin = [float(x) for x in origin]
    lengths = [float(x) for x in lengths]
    if len(origin) != d or len(lengths) != d:
        raise ValueError("origin and lengths must have length d")
    if extension_cells < 0:
        raise ValueError("extension_cells must be >= 0")
    if extension_cells and dirichlet is not None:
        raise ValueError("extension collar and face Dirichlet are mutually exclusive")

    extents = []
    for L in lengths:
        if L < delta:
            raise ValueError(f"degenerate box: side {L} shorter than spacing {delta}")
        extents.append(_node_count(L, delta))
    for n in extents:
        if n < 2:
            raise ValueError("each axis needs at least 2 nodes")

    k = int(extension_cells)
    if k:
        origin = [o - k * delta for o in origin]
        extents = [n + 2 * k for n in extents]

    shape = tuple(extents)
    active = np.ones(shape, dtype=bool)
    diri = np.zeros(shape, dtype=bool)

    if k:
        core = tuple(slice(k, n - k) for n in shape)
        collar = np.ones(shape, dtype=bool)
        collar[core] = False
        diri |= collar
    elif dirichlet is not None:
        faces = _parse_faces(dirichlet, d)
        for axis, side in faces:
            sl = [slice(None)] * d
            sl[axis] = 0 if side < 0 else shape[axis] - 1
            diri[tuple(sl)] = True

    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != shape:
            raise ValueError(f"mask shape {mask.shape} does not match grid {shape}")
        active &= mask
        diri &= active

    return LatticeDomain(origin, delta, shape, active, diri, collar_cells=k)


def _parse_faces(dirichlet, d):
    if dirichlet == "full":
        return [(axis, side) for axis in range(d) for side in (-1, +1)]
    faces = []
    for name in dirichlet:
        if not isinstance(name, str) or len(name) != 2 or name[0] not in _FACE_AXES \
                or name[1] not in "+-":
            raise ValueError(f"bad face name {name!r}")
        axis = _FACE_AXES[name[0]]
        if axis >= d:
            raise ValueError(f"face {name!r} out of range for d={d}")
        faces.append((axis, -1 if name[1] == "-" else +1))
    return faces


# --- direction systems ---------------------------------------------------

# Defaults normalize the direction-summed quadratic form to
# |M|^2 + (1/2) (tr M)^2 in both dimensions, with each direction class
# enumerated once up to sign (13 directions in 3d, so the space-diagonal
# weight is 9/16 rather than the 9/32 that a both-signs enumeration uses).
_DEFAULT_WEIGHTS = {
    2: {1: 1.0, 2: 1.0},
    3: {1: 0.75, 2: 0.5, 3: 9.0 / 16.0},
}

_DIRECTIONS = {
    2: [(1, 0), (0, 1), (1, 1), (1, -1)],
    3: [(1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1),
        (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1)],
}


@dataclass(frozen=True)
class DirectionSet:
    """Interaction directions with per-length-class weights.

    ``weights`` maps the squared direction length (1, 2 or 3) to a positive
    coefficient; the weight of a direction depends only on its length.
    """

    d: int
    directions: tuple = field(default=())
    weights: dict = field(default_factory=dict)

    def weight_of(self, xi):
        return self.weights[int(sum(c * c for c in xi))]


def direction_set(d, weights=None):
    """The standard direction system: 4 directions for d=2, 13 for d=3.

    The default weights make the direction-summed quadratic form equal
    |sym M|^2 + (tr M)^2 / 2 on symmetric matrices (see
    ``energy.quadratic_form_identity``).
    """
    if d not in (2, 3):
        raise ValueError(f"d must be 2 or 3, got {d}")
    dirs = tuple(_DIRECTIONS[d])
    if weights is None:
        w = dict(_DEFAULT_WEIGHTS[d])
    else:
        w = {int(k): float(v) for k, v in weights.items()}
        needed = {int(sum(c * c for c in xi)) for xi in dirs}
        for cls in needed:
            if cls not in w:
                raise ValueError(f"missing weight for squared length {cls}")
            if not w[cls] > 0:
                raise ValueError(f"weight for squared length {cls} must be positive")
    return DirectionSet(d=d, directions=dirs, weights=w)


# --- fields ---------------------------------------------------------------

class _FieldBase:
    comps = None  # set by subclasses

    def __init__(self, domain, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.expected_shape(domain):
            raise ValueError(f"field values shape {values.shape}, "
                             f"expected {self.expected_shape(domain)}")
        if not np.isfinite(values).all():
            raise ValueError("field values must be finite")
        self.domain = domain
        self.values = values

    def copy(self):
        return type(self)(self.domain, self.values.copy())

    def assert_finite(self):
        if not np.isfinite(self.values).all():
            raise ValueError("field contains non-finite values")


class ScalarField(_FieldBase):
    """Scalar nodal field on a lattice domain."""

    def expected_shape(self, domain):
        return domain.extents

    @classmethod
    def full(cls, domain, value):
        return cls(domain, np.full(domain.extents, float(value)))

    @classmethod
    def ones(cls, domain):
        return cls.full(domain, 1.0)

    @classmethod
    def zeros(cls, domain):
        return cls.full(domain, 0.0)

    @classmethod
    def from_callable(cls, domain, fn):
        """Sample ``fn`` at the nodes; fn takes an (..., d) coordinate array."""
        vals = np.asarray(fn(domain.node_coords()), dtype=float)
        return cls(domain, vals)


class VectorField(_FieldBase):
    """Vector nodal field (one d-vector per node)."""

    def expected_shape(self, domain):
        return domain.extents + (domain.d,)

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.extents + (domain.d,)))

    @classmethod
    def from_callable(cls, domain, fn):
        vals = np.asarray(fn(domain.node_coords()), dtype=float)
        return cls(domain, vals)


def same_grid(a, b):
    """True when two domains describe the same node grid and masks."""
    if a is b:
        return True
    return (a.d == b.d and a.extents == b.extents
            and a.spacing == b.spacing and a.origin == b.origin
            and np.array_equal(a.active, b.active)
            and np.array_equal(a.dirichlet, b.dirichlet))


def apply_dirichlet(fld, datum):
    """Overwrite values at Dirichlet-masked nodes with the datum.

    ``datum`` is a constant (scalar for ScalarField, length-d vector for
    VectorField) or a callable on an (..., d) coordinate array.  Returns a new
    field; non-Dirichlet nodes are untouched.  Idempotent.
    """
    dom = fld.domain
    out = fld.values.copy()
    sel = dom.dirichlet
    if not sel.any():
        return type(fld)(dom, out)
    if callable(datum):
        target = np.asarray(datum(dom.node_coords()), dtype=float)
    else:
        target = np.broadcast_to(np.asarray(datum, dtype=float),
                                 fld.expected_shape(dom)).copy()
    if target.shape != fld.expected_shape(dom):
        raise ValueError("datum shape does not match the field")
    out[sel] = target[sel]
    return type(fld)(dom, out)


def range_nodes(domain, xi):
    """Nodes where the segment node +- spacing*xi fits in the domain.

    Returns a row-major list of node multi-indices; empty when the direction
    does not fit inside the box.
    """
    if len(xi) != domain.d:
        raise ValueError(f"direction {xi!r} has wrong length for d={domain.d}")
    sl = domain.range_slices(xi)
    if sl is None:
        return []
    base, _, _ = sl
    mask = domain.range_mask(xi)
    return _nodes_from_subbox(base, mask, domain.extents)


def range_div(domain):
    """Nodes where every unit-direction segment fits (divergence stencil)."""
    sl = domain.div_slices()
    if sl is None:
        return []
    base = sl[0]
    mask = domain.div_mask()
    return _nodes_from_subbox(base, mask, domain.extents)


def _nodes_from_subbox(base, mask, extents):
    starts = [s.start for s in base]
    shape = tuple(s.stop - s.start for s in base)
    if mask is None:
        idx = np.indices(shape).reshape(len(shape), -1).T
    else:
        idx = np.argwhere(mask)
    return [tuple(int(i + o) for i, o in zip(row, starts)) for row in idx]


# --- nodal field file format ----------------------------------------------

def save_field(fld, path):
    """Write a field as text: GLF1 header plus one row of values per node.

    Header: ``GLF1 d=<d> n=<n_1,...,n_d> delta=<spacing> comps=<1|d>``.
    Rows follow in row-major node order (last axis fastest), 17 significant
    digits.
    """
    dom = fld.domain
    comps = 1 if isinstance(fld, ScalarField) else dom.d
    flat = fld.values.reshape(dom.n_nodes, comps)
    with open(path, "w") as fh:
        ns = ",".join(str(n) for n in dom.extents)
        fh.write(f"GLF1 d={dom.d} n={ns} delta={dom.spacing:.17g} comps={comps}\n")
        for row in flat:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_field(path):
    """Read a field written by :func:`save_field`.

    The grid is reconstructed at origin 0 with no masks; header metadata must
    be well-formed or a ValueError is raised.
    """
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "GLF1":
            raise ValueError(f"{path}: not a GLF1 field file")
        meta = {}
        for tok in header[1:]:
            if "=" not in tok:
                raise ValueError(f"{path}: bad header token {tok!r}")
            key, val = tok.split("=", 1)
            meta[key] = val
        try:
            d = int(meta["d"])
            extents = tuple(int(x) for x in meta["n"].split(","))
            delta = float(meta["delta"])
            comps = int(meta["comps"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: malformed GLF1 header") from exc
        if d not in (2, 3) or len(extents) != d:
            raise ValueError(f"{path}: inconsistent dimension in header")
        if comps not in (1, d):
            raise ValueError(f"{path}: comps must be 1 or d")
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    n_nodes = int(np.prod(extents))
    if data.shape != (n_nodes, comps):
        raise ValueError(f"{path}: expected {n_nodes} rows x {comps} cols, "
                         f"got {data.shape}")
    active = np.ones(extents, dtype=bool)
    diri = np.zeros(extents, dtype=bool)
    dom = LatticeDomain([0.0] * d, delta, extents, active, diri)
    if comps == 1:
        return ScalarField(dom, data.reshape(extents))
    return VectorField(dom, data.reshape(extents + (d,)))
