"""Grid construction, masks, stencil ranges, direction systems, field IO."""

import numpy as np
import pytest

from glfrac import (LatticeDomain, ScalarField, VectorField, apply_dirichlet,
                    build_domain, direction_set, load_field, range_div,
                    range_nodes, save_field)


def test_node_counts_exact_division():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25)
    assert dom.extents == (5, 5)
    assert dom.n_nodes == 25
    assert dom.spacing == 0.25
    assert dom.all_active


def test_node_counts_snap_inexact_spacing():
    # 1/0.1 is not exact in binary; the count must still come out as 11
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.1)
    assert dom.extents == (11, 11)
    dom3 = build_domain(3, (0.0, 0.0, 0.0), (0.3, 0.3, 0.3), 0.1)
    assert dom3.extents == (4, 4, 4)


def test_node_coords_and_position_agree():
    dom = build_domain(2, (-1.0, 2.0), (1.0, 0.5), 0.25)
    coords = dom.node_coords()
    assert coords.shape == dom.extents + (2,)
    np.testing.assert_allclose(coords[0, 0], [-1.0, 2.0])
    np.testing.assert_allclose(dom.node_position((3, 1)), [-0.25, 2.25])
    np.testing.assert_allclose(coords[3, 1], dom.node_position((3, 1)))


def test_node_position_rejects_bad_index():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.5)
    with pytest.raises(IndexError):
        dom.node_position((3, 0))
    with pytest.raises(IndexError):
        dom.node_position((0, -1))
    with pytest.raises(IndexError):
        dom.node_position((0, 0, 0))


def test_build_domain_validation():
    with pytest.raises(ValueError):
        build_domain(1, (0.0,), (1.0,), 0.5)
    with pytest.raises(ValueError):
        build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        build_domain(2, (0.0,), (1.0, 1.0), 0.5)
    with pytest.raises(ValueError):
        build_domain(2, (0.0, 0.0), (0.1, 1.0), 0.5)  # side shorter than spacing
    with pytest.raises(ValueError):
        build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.5, dirichlet=["x-"],
                     extension_cells=1)
    with pytest.raises(ValueError):
        build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.5, dirichlet=["w-"])
    with pytest.raises(ValueError):
        build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.5, dirichlet=["z-"])


def test_range_nodes_counts_on_5x5():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25)
    assert len(range_nodes(dom, (1, 0))) == 15  # 3 interior columns x 5 rows
    assert len(range_nodes(dom, (1, 1))) == 9
    assert range_nodes(dom, (5, 0)) == []
    with pytest.raises(ValueError):
        range_nodes(dom, (1, 0, 0))


def test_range_nodes_row_major_and_in_bounds():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25)
    nodes = range_nodes(dom, (1, -1))
    assert nodes == sorted(nodes)
    for a in nodes:
        for s in (+1, -1):
            nb = (a[0] + s * 1, a[1] - s * 1)
            assert 0 <= nb[0] < 5 and 0 <= nb[1] < 5


def test_range_div_is_interior():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25)
    assert len(range_div(dom)) == 9
    dom3 = build_domain(3, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 0.25)
    assert len(range_div(dom3)) == 27
    tiny = build_domain(2, (0.0, 0.0), (0.5, 0.5), 0.5)
    assert range_div(tiny) == []


def test_range_nodes_respects_active_mask():
    mask = np.ones((5, 5), dtype=bool)
    mask[2, 2] = False
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25, mask=mask)
    nodes = range_nodes(dom, (1, 0))
    # the hole removes itself and both x-neighbors from the admissible set
    assert (2, 2) not in nodes
    assert (1, 2) not in nodes
    assert (3, 2) not in nodes
    assert len(nodes) == 12


def test_face_dirichlet_marks_one_layer():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25, dirichlet=["x-"])
    assert int(dom.dirichlet.sum()) == 5
    assert dom.dirichlet[0].all()
    assert not dom.dirichlet[1:].any()
    full = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25, dirichlet="full")
    assert int(full.dirichlet.sum()) == 16  # boundary ring of a 5x5 grid


def test_extension_collar_geometry():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25, extension_cells=2)
    assert dom.extents == (9, 9)
    assert dom.collar_cells == 2
    np.testing.assert_allclose(dom.node_position((0, 0)), [-0.5, -0.5])
    assert int(dom.dirichlet.sum()) == 81 - 25
    core = dom.dirichlet[2:-2, 2:-2]
    assert not core.any()


def test_apply_dirichlet_idempotent_and_local():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25, dirichlet=["y+"])
    u = VectorField(dom, np.random.default_rng(0).normal(size=(5, 5, 2)))
    g = lambda x: np.stack([x[..., 0], 2.0 * x[..., 1]], axis=-1)
    once = apply_dirichlet(u, g)
    twice = apply_dirichlet(once, g)
    np.testing.assert_array_equal(once.values, twice.values)
    np.testing.assert_array_equal(once.values[:, :-1], u.values[:, :-1])
    np.testing.assert_allclose(once.values[:, -1],
                               g(dom.node_coords())[:, -1])


def test_apply_dirichlet_constant_vector():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.5, dirichlet="full")
    u = VectorField.zeros(dom)
    pinned = apply_dirichlet(u, (1.0, -2.0))
    assert pinned.values[0, 0, 0] == 1.0
    assert pinned.values[0, 0, 1] == -2.0
    assert pinned.values[1, 1, 0] == 0.0


def test_field_shape_and_finiteness_checks():
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.5)
    with pytest.raises(ValueError):
        ScalarField(dom, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        VectorField(dom, np.zeros((3, 3)))
    bad = np.zeros((3, 3))
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        ScalarField(dom, bad)


def test_field_file_roundtrip_scalar(tmp_path):
    dom = build_domain(2, (0.0, 0.0), (1.0, 1.0), 0.25)
    rng = np.random.default_rng(7)
    v = ScalarField(dom, rng.normal(size=dom.extents))
    p = tmp_path / "v.fld"
    save_field(v, p)
    back = load_field(p)
    assert isinstance(back, ScalarField)
    assert back.domain.extents == dom.extents
    assert back.domain.spacing == dom.spacing
    np.testing.assert_array_equal(back.values, v.values)  # 17 digits is exact


def test_field_file_roundtrip_vector_3d(tmp_path):
    dom = build_domain(3, (0.0, 0.0, 0.0), (0.5, 0.5, 0.5), 0.25)
    rng = np.random.default_rng(8)
    u = VectorField(dom, rng.normal(size=dom.extents + (3,)))
    p = tmp_path / "u.fld"
    save_field(u, p)
    back = load_field(p)
    assert isinstance(back, VectorField)
    np.testing.assert_array_equal(back.values, u.values)


def test_load_field_rejects_malformed(tmp_path):
    p = tmp_path / "bad.fld"
    p.write_text("NOPE d=2 n=2,2 delta=0.5 comps=1\n0\n0\n0\n0\n")
    with pytest.raises(ValueError, match="GLF1"):
        load_field(p)
    p.write_text("GLF1 d=2 n=2,2 delta=0.5 comps=1\n0\n0\n0\n")
    with pytest.raises(ValueError, match="rows"):
        load_field(p)
    p.write_text("GLF1 d=4 n=2,2,2,2 delta=0.5 comps=1\n")
    with pytest.raises(ValueError, match="dimension"):
        load_field(p)
    p.write_text("GLF1 d=2 n=2,2 delta=0.5 comps=3\n")
    with pytest.raises(ValueError, match="comps"):
        load_field(p)
    p.write_text("GLF1 d=2 n=2,2 delta=oops comps=1\n")
    with pytest.raises(ValueError, match="header"):
        load_field(p)


def test_direction_set_contents():
    d2 = direction_set(2)
    assert len(d2.directions) == 4
    assert set(d2.directions) == {(1, 0), (0, 1), (1, 1), (1, -1)}
    d3 = direction_set(3)
    assert len(d3.directions) == 13
    by_len = {}
    for xi in d3.directions:
        by_len.setdefault(sum(c * c for c in xi), []).append(xi)
    assert sorted(by_len) == [1, 2, 3]
    assert len(by_len[1]) == 3 and len(by_len[2]) == 6 and len(by_len[3]) == 4
    # directions are listed once per +-pair
    for xi in d3.directions:
        neg = tuple(-c for c in xi)
        assert neg not in d3.directions


def test_direction_set_weights():
    d2 = direction_set(2, weights={1: 2.0, 2: 0.5})
    assert d2.weight_of((1, 0)) == 2.0
    assert d2.weight_of((1, -1)) == 0.5
    with pytest.raises(ValueError):
        direction_set(2, weights={1: 1.0})  # class 2 missing
    with pytest.raises(ValueError):
        direction_set(2, weights={1: 1.0, 2: 0.0})
    with pytest.raises(ValueError):
        direction_set(4)


def test_default_weights_values():
    d2 = direction_set(2)
    assert d2.weights == {1: 1.0, 2: 1.0}
    d3 = direction_set(3)
    assert d3.weights == {1: 0.75, 2: 0.5, 3: 9.0 / 16.0}
