"""Acceptance gate: nine end-to-end checks, one printed verdict line each.

Every test measures its own wall clock against a stated budget and prints
``criterion N (name): PASS/FAIL [elapsed] detail``.  Run with
``pytest tests/test_acceptance.py -v -s`` to see the detail lines.
"""

import math
import time
from fractions import Fraction

import numpy as np

from glfrac import (AffineInterpolant, CrackGeometry, EnergyParams,
                    GriffithReference, Region, ScalarField, SolverConfig,
                    VectorField, alternate_minimize, build_domain,
                    build_recovery_pair, direction_set, divergence_energy,
                    divergence_energy_ni, elastic_energy, elastic_energy_xi,
                    form_coefficients, minimize_displacement,
                    minimize_displacement_ni, modica_mortola, optimal_profile,
                    quadratic_form_identity, range_div, total_energy)
from glfrac.interpolation import freudenthal
from oracles import (naive_divergence, naive_elastic, naive_elastic_xi,
                     naive_modica_mortola)


def verdict(num, name, passed, detail, elapsed, budget):
    line = (f"criterion {num} ({name}): {'PASS' if passed else 'FAIL'} "
            f"[{elapsed:.2f}s / budget {budget:.0f}s] {detail}")
    print(line, flush=True)
    assert passed, line
    assert elapsed < budget, line


def random_symmetric(rng, d):
    A = rng.normal(size=(d, d))
    return (A + A.T) / 2.0


def test_criterion_1_coefficient_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for d in (2, 3):
        for _ in range(100):
            M = random_symmetric(rng, d)
            scale = max(1.0, float(np.abs(M).max()) ** 2)
            lhs, rhs = quadratic_form_identity(M)
            expect = float(np.sum(M * M)) + 0.5 * float(np.trace(M)) ** 2
            worst = max(worst, abs(lhs - expect) / scale,
                        abs(lhs - rhs) / scale)
        keys = (1, 2) if d == 2 else (1, 2, 3)
        for _ in range(100):
            M = random_symmetric(rng, d)
            scale = max(1.0, float(np.abs(M).max()) ** 2)
            weights = {k: float(rng.uniform(0.1, 2.0)) for k in keys}
            dirs = direction_set(d, weights=weights)
            lhs, rhs = quadratic_form_identity(M, dirs=dirs)
            worst = max(worst, abs(lhs - rhs) / scale)
    elapsed = time.perf_counter() - t0
    verdict(1, "coefficient identity", worst <= 1e-12,
            f"max relative defect {worst:.3e} over 2x200 random matrices",
            elapsed, 1.0)


def test_criterion_2_affine_energy_consistency():
    t0 = time.perf_counter()
    A = np.array([[0.4, -0.3], [0.1, 0.2]])
    M = (A + A.T) / 2.0
    lam, theta = 1.0, 0.7
    tr = float(np.trace(M))
    density = (lam * (float(np.sum(M * M)) + 0.5 * tr ** 2)
               + theta * tr ** 2)
    errs = []
    for n in (16, 32, 64):
        delta = 1.0 / n
        dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), delta)
        u = VectorField(dom, dom.node_coords() @ A.T)
        v = ScalarField.ones(dom)
        params = EnergyParams(lam=lam, theta=theta, eps=0.1, delta=delta)
        total = total_energy(u, v, params).total
        interior = delta ** 2 * len(range_div(dom))
        errs.append(abs(total / interior - density) / density)
    first_order = all(b <= 0.65 * a for a, b in zip(errs, errs[1:]))
    ok = first_order and errs[-1] <= 0.05
    elapsed = time.perf_counter() - t0
    verdict(2, "affine energy consistency", ok,
            f"relative errors {[f'{e:.4f}' for e in errs]} at "
            f"delta 1/16, 1/32, 1/64", elapsed, 5.0)


def test_criterion_3_split_identity():
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(303)
    for d, extents in ((2, (6, 6)), (3, (4, 4, 4))):
        dom = build_domain(d, (0.0,) * d, tuple(0.25 * (n - 1) for n in extents),
                           0.25)
        ones = ScalarField.ones(dom)
        for _ in range(50):
            u = VectorField(dom, rng.normal(size=dom.extents + (d,)))
            a = divergence_energy(u, ones)
            b = divergence_energy_ni(u, ones)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    elapsed = time.perf_counter() - t0
    verdict(3, "split identity at full phase", worst <= 1e-14,
            f"max relative gap {worst:.3e} over 2x50 random fields",
            elapsed, 1.0)


def test_criterion_4_simplicial_decomposition():
    t0 = time.perf_counter()
    details = []
    ok = True
    rng = np.random.default_rng(404)
    for d in (2, 3):
        simplices = freudenthal(d)
        ok &= len(simplices) == math.factorial(d)
        ok &= sum(s.volume() for s in simplices) == Fraction(1, 1)
        pts = rng.uniform(0.0, 1.0, size=(10 ** 4, d))
        uncovered = sum(1 for t in pts
                        if not any(s.contains(t) for s in simplices))
        ok &= uncovered == 0
        # constant per-simplex gradient reproduces every edge difference
        dom = build_domain(d, (0.0,) * d, (0.4,) * d, 0.2)
        fld = ScalarField(dom, rng.normal(size=dom.extents))
        interp = AffineInterpolant(fld)
        worst = 0.0
        for cell in np.ndindex(*(n - 1 for n in dom.extents)):
            for sidx, sim in enumerate(simplices):
                grad = interp.simplex_gradient(cell, sidx)
                for i, j in sim.edges:
                    vi = tuple(c + o for c, o in zip(cell, sim.vertices[i]))
                    vj = tuple(c + o for c, o in zip(cell, sim.vertices[j]))
                    step = (np.asarray(sim.vertices[j], dtype=float)
                            - np.asarray(sim.vertices[i], dtype=float))
                    got = float(grad @ step) * dom.spacing
                    worst = max(worst, abs(got - (fld.values[vj]
                                                  - fld.values[vi])))
        ok &= worst <= 1e-12
        details.append(f"d={d}: {len(simplices)} simplices, "
                       f"{uncovered} uncovered, edge defect {worst:.2e}")
    elapsed = time.perf_counter() - t0
    verdict(4, "simplicial decomposition", ok, "; ".join(details),
            elapsed, 2.0)


def simpson(fn, a, b, n):
    # composite Simpson on n (even) intervals
    xs = np.linspace(a, b, n + 1)
    ys = np.array([fn(x) for x in xs])
    h = (b - a) / n
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum()
                      + 2.0 * ys[2:-1:2].sum())


def test_criterion_5_profile_certificate():
    t0 = time.perf_counter()
    prof = optimal_profile(0.1)

    def cost(s):
        return (prof(s) - 1.0) ** 2 + prof.deriv(s) ** 2

    # independent quadrature, split at the patch knot where f changes branch
    knot = prof.T - 1.0
    independent = simpson(cost, 0.0, knot, 8192) + simpson(cost, knot, prof.T,
                                                           8192)
    ok = (abs(independent - prof.certified_integral) <= 1e-10
          and 1.0 < prof.certified_integral <= 1.1 + 1e-10)
    elapsed = time.perf_counter() - t0
    verdict(5, "profile cost certificate", ok,
            f"certified {prof.certified_integral:.12f}, independent "
            f"{independent:.12f}", elapsed, 1.0)


def crack_target():
    below = Region(lo=(0.0, 0.0), hi=(1.0, 0.5),
                   displacement=lambda x: np.zeros(x.shape))
    above = Region(lo=(0.0, 0.5), hi=(1.0, 1.0),
                   displacement=lambda x: np.broadcast_to(
                       np.array([1.0, 0.0]), x.shape))
    crack = CrackGeometry(offset=0.5, k_lo=0.0, k_hi=1.0)
    return GriffithReference(regions=[below, above], crack=crack)


def test_criterion_6_recovery_upper_bound():
    t0 = time.perf_counter()
    target = crack_target()
    totals = []
    for eps in (0.1, 0.07, 0.05):
        delta = eps ** 2
        dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), delta)
        params = EnergyParams(lam=1.0, theta=1.0, eps=eps, delta=delta)
        pair = build_recovery_pair(target, dom, params, eta=0.1,
                                   allow_boundary_crack=True)
        totals.append(total_energy(pair.u, pair.v, params).total)
    gaps = [abs(t - 1.0) for t in totals]
    in_range = all(0.85 <= t <= 1.25 for t in totals)
    shrinking = all(b <= 1.10 * a for a, b in zip(gaps, gaps[1:]))
    elapsed = time.perf_counter() - t0
    verdict(6, "recovery upper bound", in_range and shrinking,
            f"totals {[f'{t:.4f}' for t in totals]} vs reference 1.0",
            elapsed, 60.0)


def stretch_datum(t):
    def g(x):
        out = np.zeros(x.shape)
        out[..., 0] = t * (x[..., 0] - 0.5)
        return out
    return g


def test_criterion_7_solver_monotonicity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    worst_jump = 0.0
    pinned_ok = True
    for _ in range(20):
        t = float(rng.uniform(0.2, 3.0))
        eps = float(rng.uniform(0.08, 0.2))
        theta = float(rng.uniform(0.3, 1.0))
        delta = 1.0 / 16.0
        dom = build_domain(2, (0.0, 0.0), (1.0, 0.5), delta,
                           dirichlet=["x-", "x+"])
        params = EnergyParams(lam=1.0, theta=theta, eps=eps, delta=delta,
                              variant="dirichlet")
        datum = stretch_datum(t)
        report, u, v = alternate_minimize(params, dom,
                                          config=SolverConfig(max_outer=4),
                                          datum=datum)
        totals = [bd.total for bd in report.trace]
        for a, b in zip(totals, totals[1:]):
            worst_jump = max(worst_jump, (b - a) / max(1.0, abs(a)))
        want = datum(dom.node_coords())
        pinned_ok &= bool(np.array_equal(u.values[dom.dirichlet],
                                         want[dom.dirichlet]))
        pinned_ok &= bool((v.values[dom.dirichlet] == 1.0).all())
    ok = worst_jump <= 1e-12 and pinned_ok
    elapsed = time.perf_counter() - t0
    verdict(7, "solver monotonicity", ok,
            f"worst trace increase {worst_jump:.3e} over 20 instances, "
            f"pinning exact: {pinned_ok}", elapsed, 120.0)


def test_criterion_8_ni_equivalence():
    t0 = time.perf_counter()
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25)
    v = ScalarField.ones(dom)
    plain = EnergyParams(lam=1.0, theta=1.0, eps=0.1, delta=0.25)
    ni = EnergyParams(lam=1.0, theta=1.0, eps=0.1, delta=0.25,
                      variant="ni", M=10.0)
    rng = np.random.default_rng(808)
    # expansion-dominated start: positive strain keeps negative parts inactive
    u0 = VectorField(dom, 0.3 * dom.node_coords()
                     + 0.01 * rng.normal(size=dom.extents + (2,)))
    u_cg = minimize_displacement(v, plain, u0)
    u_pg = minimize_displacement_ni(v, ni, u0)
    gap = float(np.abs(u_pg.values - u_cg.values).max())
    feasible = float(np.abs(u_pg.values).max()) <= 10.0
    ok = gap <= 1e-6 and feasible
    elapsed = time.perf_counter() - t0
    verdict(8, "constrained/unconstrained equivalence", ok,
            f"nodal gap {gap:.3e}, feasible: {feasible}", elapsed, 30.0)


def test_criterion_9_brute_force_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(909)
    worst = 0.0
    for d, extents in ((2, (5, 5)), (3, (4, 4, 4))):
        dom = build_domain(d, (0.0,) * d, tuple(0.25 * (n - 1) for n in extents),
                           0.25)
        u = VectorField(dom, rng.normal(size=dom.extents + (d,)))
        v = ScalarField(dom, rng.uniform(0.0, 1.0, size=dom.extents))
        dirs = direction_set(d)

        def rel(a, b):
            return abs(a - b) / max(1.0, abs(b))

        for xi in dirs.directions:
            worst = max(worst, rel(elastic_energy_xi(u, v, xi),
                                   naive_elastic_xi(u, v, xi)))
        worst = max(worst, rel(elastic_energy(u, v), naive_elastic(u, v, dirs)))
        worst = max(worst, rel(divergence_energy(u, v), naive_divergence(u, v)))
        worst = max(worst, rel(divergence_energy_ni(u, v),
                               naive_divergence(u, v, ni=True)))
        worst = max(worst, rel(modica_mortola(v, 0.3),
                               naive_modica_mortola(v, 0.3)))
    elapsed = time.perf_counter() - t0
    verdict(9, "brute force oracles", worst <= 1e-13,
            f"max relative defect {worst:.3e} on 5x5 and 4x4x4 grids",
            elapsed, 1.0)
