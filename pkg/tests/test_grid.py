from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wentzell_lab.grid import (
    build_grid,
    integrate_boundary,
    integrate_interior,
    interior_gradient,
    tangential_gradient,
    trace,
)


def test_smallest_square_counts():
    domain, atlas = build_grid(2, (1.0, 1.0), (3, 3))
    assert domain.n_nodes == 9
    assert atlas.n_nodes == 8
    assert len(atlas.faces) == 4


@pytest.mark.parametrize("n", [3, 4, 5, 8])
def test_cube_boundary_count(n):
    _, atlas = build_grid(3, 1.0, n)
    assert atlas.n_nodes == n**3 - (n - 2) ** 3
    assert len(atlas.faces) == 6


def test_cube_surface_measure():
    _, atlas = build_grid(3, 1.0, 7)
    assert abs(atlas.weights.sum() - 6.0) <= 1e-12


@pytest.mark.parametrize(
    "dim, lengths, res",
    [(1, 1.0, 5), (4, 1.0, 5), (2, (1.0, 0.0), 5), (2, (1.0, -2.0), 5), (2, 1.0, 2), (3, 1.0, (5, 5, 2))],
)
def test_build_grid_rejects(dim, lengths, res):
    with pytest.raises(ValueError):
        build_grid(dim, lengths, res)


@settings(max_examples=30, deadline=None)
@given(
    dim=st.sampled_from([2, 3]),
    lengths=st.lists(st.floats(0.2, 3.0), min_size=3, max_size=3),
    res=st.lists(st.integers(3, 9), min_size=3, max_size=3),
)
def test_quadrature_and_atlas_invariants(dim, lengths, res):
    domain, atlas = build_grid(dim, lengths[:dim], res[:dim])
    L = np.asarray(lengths[:dim])
    assert np.all(domain.weights > 0)
    assert np.isclose(domain.weights.sum(), np.prod(L), rtol=1e-12)
    surface = 2 * sum(np.prod(np.delete(L, k)) for k in range(dim))
    assert np.all(atlas.weights > 0)
    assert np.isclose(atlas.weights.sum(), surface, rtol=1e-12)
    # faces cover the boundary; non-edge nodes lie on exactly one face
    count = np.zeros(atlas.n_nodes, dtype=int)
    for face in atlas.faces:
        np.add.at(count, face.boundary_index, 1)
        assert len(face.tangential_axes) == dim - 1
        for k in face.tangential_axes:
            e = np.zeros(dim)
            e[k] = 1.0
            assert face.normal @ e == 0.0
    assert np.all(count >= 1)
    assert np.all(count[~atlas.edge_mask] == 1)
    assert set(np.concatenate([f.nodes for f in atlas.faces])) == set(domain.boundary_nodes)


def test_node_ordering_is_deterministic():
    d1, a1 = build_grid(3, (1.0, 2.0, 0.5), (4, 5, 6))
    d2, a2 = build_grid(3, (1.0, 2.0, 0.5), (4, 5, 6))
    assert np.array_equal(d1.coordinates, d2.coordinates)
    assert np.array_equal(a1.nodes, a2.nodes)


@pytest.mark.parametrize("dim", [2, 3])
def test_interior_gradient_affine_and_constant(dim):
    domain, _ = build_grid(dim, (1.0, 2.0, 1.5)[:dim], 6)
    x = domain.coordinates
    for axis in range(dim):
        np.testing.assert_allclose(interior_gradient(domain, x[:, 0], axis), float(axis == 0), atol=1e-12)
        assert np.all(interior_gradient(domain, np.full(domain.n_nodes, 4.2), axis) == 0.0)


def test_interior_gradient_axis_range():
    domain, _ = build_grid(2, 1.0, 5)
    with pytest.raises(ValueError):
        interior_gradient(domain, np.zeros(domain.n_nodes), 2)


def _order(errors, sizes):
    return np.polyfit(np.log(sizes), np.log(errors), 1)[0]


def test_interior_gradient_second_order():
    errs, hs = [], []
    for n in (9, 17, 33, 65):
        domain, _ = build_grid(2, 1.0, n)
        x1 = domain.coordinates[:, 0]
        d = interior_gradient(domain, x1**2 + np.sin(x1), 0)
        errs.append(np.max(np.abs(d - (2 * x1 + np.cos(x1)))))
        hs.append(domain.spacing[0])
    assert _order(errs, hs) >= 1.9


def _face(atlas, axis, side):
    return next(i for i, f in enumerate(atlas.faces) if f.axis == axis and f.side == side)


def test_tangential_gradient_affine():
    domain, atlas = build_grid(2, 1.0, 7)
    g = trace(domain, domain.coordinates[:, 1])
    k = _face(atlas, 0, 0)
    np.testing.assert_allclose(tangential_gradient(atlas, g, k, 0), 1.0, atol=1e-12)
    assert np.all(tangential_gradient(atlas, np.full(atlas.n_nodes, -3.0), k, 0) == 0.0)


def test_tangential_gradient_bad_axis():
    _, atlas = build_grid(2, 1.0, 5)
    with pytest.raises(ValueError):
        tangential_gradient(atlas, np.zeros(atlas.n_nodes), 0, 1)


def test_tangential_gradient_second_order_on_face_interior():
    errs, hs = [], []
    for n in (9, 17, 33, 65):
        domain, atlas = build_grid(2, 1.0, n)
        face = atlas.faces[_face(atlas, 0, 1)]
        g = atlas.coordinates[:, 1] ** 2 + np.sin(atlas.coordinates[:, 1])
        d = tangential_gradient(atlas, g, face, 0)
        y = domain.coordinates[face.nodes, 1]
        inner = ~face.edge_mask
        errs.append(np.max(np.abs(d - (2 * y + np.cos(y)))[inner]))
        hs.append(domain.spacing[1])
    assert _order(errs, hs) >= 1.9


def test_tangential_gradient_stays_on_face():
    # a field that jumps between faces leaves each face's derivative untouched
    domain, atlas = build_grid(3, 1.0, 5)
    for k, face in enumerate(atlas.faces):
        g = np.full(atlas.n_nodes, 100.0)
        g[face.boundary_index] = 1.0
        for j in range(2):
            assert np.all(tangential_gradient(atlas, g, k, j) == 0.0)


def test_integrals_closed_forms():
    domain, atlas = build_grid(2, 1.0, 65)
    assert abs(integrate_interior(domain, np.ones(domain.n_nodes)) - 1.0) <= 1e-12
    assert abs(integrate_boundary(atlas, np.ones(atlas.n_nodes)) - 4.0) <= 1e-12
    x = domain.coordinates
    assert abs(integrate_interior(domain, x[:, 0] * x[:, 1]) - 0.25) <= 1e-10


def test_integrals_reject_nonfinite():
    domain, atlas = build_grid(2, 1.0, 5)
    f = np.zeros(domain.n_nodes)
    f[3] = np.nan
    with pytest.raises(ValueError):
        integrate_interior(domain, f)
    with pytest.raises(ValueError):
        integrate_boundary(atlas, np.full(atlas.n_nodes, np.inf))


def test_trace_examples(rng):
    domain, atlas = build_grid(2, 1.0, 6)
    assert np.all(trace(domain, np.full(domain.n_nodes, 5.0)) == 5.0)
    t = trace(domain, domain.coordinates[:, 0])
    for face in atlas.faces:
        if face.axis == 0:
            assert np.all(t[face.boundary_index] == float(face.side))
    u, v = rng.normal(size=(2, domain.n_nodes))
    np.testing.assert_allclose(trace(domain, u + v), trace(domain, u) + trace(domain, v), atol=0)
