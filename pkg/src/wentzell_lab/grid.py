"""Uniform tensor grids on boxes in R^2 and R^3.

The closed box is sampled by a uniform node lattice (C-order node numbering).
The boundary is described by its 2N flat faces; every face owns its nodes,
including the ones sitting on box edges and corners, which are therefore
shared between faces.  Boundary fields live on the ordered set of boundary
nodes, and each face keeps an index map into that array.

Two families of difference operators are provided:

* collocated second-order derivatives (``interior_gradient``,
  ``tangential_gradient``), used for evaluating derivatives of given fields;
* two-point edge differences (``edge_differences``,
  ``face_edge_differences``), used to assemble discrete energies.  These keep
  the discrete Laplacian-type operators monotone, which the collocated
  stencils do not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BoxDomain",
    "Face",
    "BoundaryAtlas",
    "build_grid",
    "interior_gradient",
    "tangential_gradient",
    "integrate_interior",
    "integrate_boundary",
    "trace",
    "edge_differences",
    "face_edge_differences",
]


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _tensor_weights(shape: tuple[int, ...], spacing: tuple[float, ...]) -> np.ndarray:
    w = np.ones(())
    for n, h in zip(shape, spacing):
        w = np.multiply.outer(w, _trapezoid_weights(n, h))
    return np.asarray(w).ravel()


@dataclass(frozen=True, eq=False)
class BoxDomain:
    """Closed box ``[0, L_1] x ... x [0, L_N]`` with a uniform node lattice."""

    side_lengths: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.side_lengths) != len(self.resolution):
            raise ValueError("side_lengths and resolution must have the same length")
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")
        if any(not np.isfinite(L) or L <= 0 for L in self.side_lengths):
            raise ValueError(f"side lengths must be positive, got {self.side_lengths}")
        if any(int(n) != n or n < 3 for n in self.resolution):
            raise ValueError(f"resolution must be integers >= 3, got {self.resolution}")

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.resolution)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.side_lengths, self.shape))

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    @cached_property
    def multi_index(self) -> np.ndarray:
        """Integer lattice index of every node, shape ``(n_nodes, N)``."""
        idx = np.indices(self.shape).reshape(self.dimension, -1)
        return idx.T.copy()

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, N)``."""
        return self.multi_index * np.asarray(self.spacing)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights over the closed box."""
        return _tensor_weights(self.shape, self.spacing)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        idx = self.multi_index
        last = np.asarray(self.shape) - 1
        return np.any((idx == 0) | (idx == last), axis=1)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    def node_index(self, multi: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.shape)


@dataclass(frozen=True, eq=False)
class Face:
    """One flat face ``x_axis = 0`` (side 0) or ``x_axis = L_axis`` (side 1)."""

    axis: int
    side: int
    normal: np.ndarray
    tangential_axes: tuple[int, ...]
    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    nodes: np.ndarray
    boundary_index: np.ndarray
    weights: np.ndarray
    edge_mask: np.ndarray

    @property
    def area(self) -> float:
        return float(np.prod([h * (n - 1) for h, n in zip(self.spacing, self.shape)]))

    @property
    def label(self) -> str:
        return f"x{self.axis + 1}={'0' if self.side == 0 else 'L'}"


@dataclass(frozen=True, eq=False)
class BoundaryAtlas:
    """The faces of a box boundary and the surface quadrature on boundary nodes."""

    domain: BoxDomain
    faces: tuple[Face, ...]
    weights: np.ndarray = field(repr=False)
    edge_mask: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.domain.boundary_nodes

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.size)

    @cached_property
    def coordinates(self) -> np.ndarray:
        return self.domain.coordinates[self.nodes]

    @property
    def measure(self) -> float:
        return float(sum(f.area for f in self.faces))


def _build_faces(domain: BoxDomain) -> tuple[Face, ...]:
    N = domain.dimension
    shape = domain.shape
    spacing = domain.spacing
    lattice = np.arange(domain.n_nodes).reshape(shape)
    to_boundary = np.full(domain.n_nodes, -1)
    to_boundary[domain.boundary_nodes] = np.arange(domain.boundary_nodes.size)

    faces = []
    for axis in range(N):
        tang = tuple(k for k in range(N) if k != axis)
        fshape = tuple(shape[k] for k in tang)
        fspacing = tuple(spacing[k] for k in tang)
        for side in (0, 1):
            nodes = np.take(lattice, 0 if side == 0 else shape[axis] - 1, axis=axis).ravel()
            normal = np.zeros(N)
            normal[axis] = -1.0 if side == 0 else 1.0
            fidx = np.indices(fshape).reshape(len(fshape), -1).T
            edge = np.any((fidx == 0) | (fidx == np.asarray(fshape) - 1), axis=1)
            faces.append(
                Face(
                    axis=axis,
                    side=side,
                    normal=normal,
                    tangential_axes=tang,
                    shape=fshape,
                    spacing=fspacing,
                    nodes=nodes,
                    boundary_index=to_boundary[nodes],
                    weights=_tensor_weights(fshape, fspacing),
                    edge_mask=edge,
                )
            )
    return tuple(faces)


def build_grid(
    dimension: int,
    side_lengths,
    resolution,
) -> tuple[BoxDomain, BoundaryAtlas]:
    """Build a box domain and its boundary atlas.

    ``side_lengths`` and ``resolution`` may be scalars (applied to every axis)
    or sequences of length ``dimension``.
    """
    if dimension not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dimension}")
    lengths = np.broadcast_to(np.asarray(side_lengths, dtype=float), (dimension,))
    res = np.broadcast_to(np.asarray(resolution), (dimension,))
    domain = BoxDomain(tuple(float(L) for L in lengths), tuple(int(n) for n in res))
    faces = _build_faces(domain)

    nb = domain.boundary_nodes.size
    weights = np.zeros(nb)
    count = np.zeros(nb, dtype=int)
    for face in faces:
        np.add.at(weights, face.boundary_index, face.weights)
        np.add.at(count, face.boundary_index, 1)
    atlas = BoundaryAtlas(domain=domain, faces=faces, weights=weights, edge_mask=count > 1)
    return domain, atlas


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")


def _derivative(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    # written in differences so constants map to exactly zero
    a = np.moveaxis(a, axis, 0)
    d = np.empty_like(a)
    d[1:-1] = (a[2:] - a[:-2]) / (2.0 * h)
    d[0] = (4.0 * (a[1] - a[0]) - (a[2] - a[0])) / (2.0 * h)
    d[-1] = (4.0 * (a[-1] - a[-2]) - (a[-1] - a[-3])) / (2.0 * h)
    return np.moveaxis(d, 0, axis)


def interior_gradient(domain: BoxDomain, u: np.ndarray, axis: int) -> np.ndarray:
    """Second-order derivative along ``axis`` at every node.

    Central differences inside, one-sided second-order stencils on the
    boundary layer of that axis.
    """
    if not 0 <= axis < domain.dimension:
        raise ValueError(f"axis {axis} out of range for dimension {domain.dimension}")
    grid = np.asarray(u, dtype=float).reshape(domain.shape)
    return _derivative(grid, domain.spacing[axis], axis).ravel()


def tangential_gradient(
    atlas: BoundaryAtlas, g: np.ndarray, face: int | Face, axis: int
) -> np.ndarray:
    """Derivative of a boundary field along the ``axis``-th tangent of a face.

    The result is indexed like ``face.nodes``.  Stencils never leave the face:
    face-edge nodes use one-sided second-order differences built from nodes of
    the same face.
    """
    f = atlas.faces[face] if isinstance(face, (int, np.integer)) else face
    if not 0 <= axis < len(f.tangential_axes):
        raise ValueError(
            f"face {f.label} has {len(f.tangential_axes)} tangential axes, got axis {axis}"
        )
    g = np.asarray(g, dtype=float)
    if g.shape != (atlas.n_nodes,):
        raise ValueError("g must be a boundary field")
    local = g[f.boundary_index].reshape(f.shape)
    return _derivative(local, f.spacing[axis], axis).ravel()


def integrate_interior(domain: BoxDomain, f: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    _check_finite(f)
    return float(domain.weights @ f)


def integrate_boundary(atlas: BoundaryAtlas, g: np.ndarray) -> float:
    g = np.asarray(g, dtype=float)
    _check_finite(g)
    return float(atlas.weights @ g)


def trace(domain: BoxDomain, u: np.ndarray) -> np.ndarray:
    """Restriction of a nodal field to the boundary nodes."""
    return np.asarray(u, dtype=float)[domain.boundary_nodes]


@dataclass(frozen=True, eq=False)
class EdgeDifferences:
    """Two-point differences along one direction.

    ``matrix @ u`` gives ``(u[head] - u[tail]) / h`` per edge; ``weights`` is
    the edge quadrature (summing to the measure of the carrier).
    """

    matrix: sp.csr_matrix
    weights: np.ndarray
    tail: np.ndarray
    head: np.ndarray


def _lattice_edges(shape: tuple[int, ...], axis: int) -> tuple[np.ndarray, np.ndarray]:
    lattice = np.arange(int(np.prod(shape))).reshape(shape)
    n = shape[axis]
    tail = np.take(lattice, np.arange(n - 1), axis=axis).ravel()
    head = np.take(lattice, np.arange(1, n), axis=axis).ravel()
    return tail, head


def _edge_weights(shape: tuple[int, ...], spacing: tuple[float, ...], axis: int) -> np.ndarray:
    w = np.ones(())
    for k, (n, h) in enumerate(zip(shape, spacing)):
        wk = np.full(n - 1, h) if k == axis else _trapezoid_weights(n, h)
        w = np.multiply.outer(w, wk)
    return np.asarray(w).ravel()


def _difference_matrix(tail, head, h, n_cols, col_map=None) -> sp.csr_matrix:
    if col_map is not None:
        tail, head = col_map[tail], col_map[head]
    m = tail.size
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack([tail, head]).ravel()
    vals = np.tile([-1.0 / h, 1.0 / h], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n_cols))


def edge_differences(domain: BoxDomain, axis: int) -> EdgeDifferences:
    """Edge differences along ``axis`` acting on nodal fields."""
    if not 0 <= axis < domain.dimension:
        raise ValueError(f"axis {axis} out of range")
    tail, head = _lattice_edges(domain.shape, axis)
    mat = _difference_matrix(tail, head, domain.spacing[axis], domain.n_nodes)
    return EdgeDifferences(mat, _edge_weights(domain.shape, domain.spacing, axis), tail, head)


def face_edge_differences(atlas: BoundaryAtlas, face: Face, axis: int) -> EdgeDifferences:
    """Edge differences along a face tangent, acting on boundary fields.

    ``tail``/``head`` are indices into the boundary-node array.
    """
    if not 0 <= axis < len(face.tangential_axes):
        raise ValueError(f"face {face.label} has no tangential axis {axis}")
    tail, head = _lattice_edges(face.shape, axis)
    tail, head = face.boundary_index[tail], face.boundary_index[head]
    mat = _difference_matrix(tail, head, face.spacing[axis], atlas.n_nodes)
    return EdgeDifferences(mat, _edge_weights(face.shape, face.spacing, axis), tail, head)
