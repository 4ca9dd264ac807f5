"""Discrete Wentzell energy, its gradient and Hessian.

The energy is the sum of four kinds of terms, each of the form
``sum_k c_k w_k F_{r_k}((B u)_k)`` with ``F_r(g) = |g|^r / r``:

* interior directional terms, ``B`` = edge differences along ``x_i``,
  exponent ``p_i`` averaged onto edges;
* the interior reaction term, ``B`` = identity, exponent ``p_M``,
  coefficient ``alpha``;
* boundary tangential terms, ``B`` = face edge differences along the
  ``j``-th tangent of every face, exponent ``q_j``;
* the boundary reaction term, exponent ``q_M``, coefficient ``beta``.

The gradient is the exact gradient of this discrete functional, expressed as
a Riesz representative in the discrete X^2 = L^2(Omega) x L^2(Gamma) inner
product restricted to conforming pairs (whose Gram matrix is diagonal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import BoundaryAtlas, BoxDomain, edge_differences, face_edge_differences
from .varexp import PairFunction, VectorExponent

__all__ = [
    "CoefficientField",
    "WentzellEnergy",
    "x2_mass",
    "monotonicity_gap",
]

DEFAULT_EPS_REG = 1e-8


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Reaction coefficients ``alpha`` (nodal) and ``beta`` (boundary)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("coefficients must be finite")
        if a.min() <= 0 or b.min() <= 0:
            raise ValueError("need alpha_0 > 0 and beta_0 > 0")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def constant(cls, domain: BoxDomain, atlas: BoundaryAtlas, alpha=1.0, beta=1.0):
        return cls(np.full(domain.n_nodes, float(alpha)), np.full(atlas.n_nodes, float(beta)))

    @property
    def alpha0(self) -> float:
        return float(self.alpha.min())

    @property
    def beta0(self) -> float:
        return float(self.beta.min())


def x2_mass(domain: BoxDomain, atlas: BoundaryAtlas) -> np.ndarray:
    """Diagonal Gram matrix of the X^2 inner product on conforming pairs."""
    m = domain.weights.copy()
    m[domain.boundary_nodes] += atlas.weights
    return m


def _density(g, r, eps):
    """``F(g) = ((g^2 + eps^2)^{r/2} - eps^r) / r``."""
    if eps is None:
        return np.abs(g) ** r / r
    return ((g * g + eps * eps) ** (0.5 * r) - eps**r) / r


def _flux(g, r, eps):
    if eps is None:
        return np.abs(g) ** (r - 2.0) * g
    return (g * g + eps * eps) ** (0.5 * r - 1.0) * g


def _flux_derivative(g, r, eps):
    if eps is None:
        return (r - 1.0) * np.abs(g) ** (r - 2.0)
    exact = (r - 1.0) * np.abs(g) ** (r - 2.0)
    s = g * g + eps * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        reg = s ** (0.5 * r - 2.0) * ((r - 1.0) * g * g + eps * eps)
    return np.where(eps > 0, reg, exact)


@dataclass(frozen=True, eq=False)
class _Block:
    matrix: sp.csr_matrix
    scale: np.ndarray  # quadrature weight times coefficient
    exponent: np.ndarray
    eps: np.ndarray | None
    boundary: bool

    def energy(self, x: np.ndarray) -> float:
        g = self.matrix @ x
        return float(self.scale @ _density(g, self.exponent, self.eps))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = self.matrix @ x
        return self.matrix.T @ (self.scale * _flux(g, self.exponent, self.eps))

    def hessian(self, x: np.ndarray) -> sp.csr_matrix:
        g = self.matrix @ x
        d = self.scale * _flux_derivative(g, self.exponent, self.eps)
        return (self.matrix.T @ sp.diags(d) @ self.matrix).tocsr()


class WentzellEnergy:
    """Assembled discrete energy on a box with Wentzell boundary terms.

    Parameters
    ----------
    domain, atlas
        Grid from :func:`wentzell_lab.grid.build_grid`.
    exponents
        ``p_1..p_N`` on nodes and ``q_1..q_{N-1}`` on boundary nodes.
    coefficients
        ``alpha`` and ``beta``.
    eps_reg
        Regularization used only for terms whose exponent is below 2.
    """

    def __init__(
        self,
        domain: BoxDomain,
        atlas: BoundaryAtlas,
        exponents: VectorExponent,
        coefficients: CoefficientField,
        eps_reg: float = DEFAULT_EPS_REG,
    ) -> None:
        N = domain.dimension
        if len(exponents.p) != N or any(len(p) != domain.n_nodes for p in exponents.p):
            raise ValueError("interior exponents do not match the grid")
        if any(len(q) != atlas.n_nodes for q in exponents.q):
            raise ValueError("boundary exponents do not match the boundary")
        if coefficients.alpha.shape != (domain.n_nodes,) or coefficients.beta.shape != (
            atlas.n_nodes,
        ):
            raise ValueError("coefficients do not match the grid")
        if eps_reg < 0:
            raise ValueError("eps_reg must be nonnegative")
        if eps_reg == 0 and exponents.min_exponent < 2.0:
            raise ValueError("eps_reg = 0 requires every exponent >= 2")

        self.domain = domain
        self.atlas = atlas
        self.exponents = exponents
        self.coefficients = coefficients
        self.eps_reg = float(eps_reg)
        self.mass = x2_mass(domain, atlas)

        self._interior: list[_Block] = []
        for i, p_i in enumerate(exponents.p):
            ed = edge_differences(domain, i)
            r = 0.5 * (p_i.values[ed.tail] + p_i.values[ed.head])
            self._interior.append(self._block(ed.matrix, ed.weights, r, boundary=False))
        eye_n = sp.identity(domain.n_nodes, format="csr")
        self._interior.append(
            self._block(
                eye_n,
                domain.weights * coefficients.alpha,
                exponents.p_max.values,
                boundary=False,
            )
        )

        self._boundary: list[_Block] = []
        for j, q_j in enumerate(exponents.q):
            mats, weights, rs = [], [], []
            for face in atlas.faces:
                ed = face_edge_differences(atlas, face, j)
                mats.append(ed.matrix)
                weights.append(ed.weights)
                rs.append(0.5 * (q_j.values[ed.tail] + q_j.values[ed.head]))
            self._boundary.append(
                self._block(
                    sp.vstack(mats, format="csr"),
                    np.concatenate(weights),
                    np.concatenate(rs),
                    boundary=True,
                )
            )
        eye_b = sp.identity(atlas.n_nodes, format="csr")
        self._boundary.append(
            self._block(eye_b, atlas.weights * coefficients.beta, exponents.q_max.values, boundary=True)
        )

        nb = atlas.n_nodes
        self._select = sp.csr_matrix(
            (np.ones(nb), (np.arange(nb), domain.boundary_nodes)), shape=(nb, domain.n_nodes)
        )
        self._lifted = [
            _Block(b.matrix @ self._select, b.scale, b.exponent, b.eps, True)
            for b in self._boundary
        ]

    def _block(self, matrix, scale, exponent, boundary) -> _Block:
        exponent = np.asarray(exponent, dtype=float)
        below = exponent < 2.0
        eps = None
        if np.any(below):
            eps = np.where(below, self.eps_reg, 0.0)
        return _Block(matrix.tocsr(), np.asarray(scale, dtype=float), exponent, eps, boundary)

    # -- energies -----------------------------------------------------------
    def interior_energy(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return sum(b.energy(u) for b in self._interior)

    def boundary_energy(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        return sum(b.energy(w) for b in self._boundary)

    def _check_pair(self, pair: PairFunction) -> None:
        if not pair.is_conforming(self.domain):
            raise ValueError("pair is not conforming: boundary values differ from the trace")

    def total_energy(self, pair: PairFunction) -> float:
        self._check_pair(pair)
        return self.nodal_energy(pair.u)

    def nodal_energy(self, u: np.ndarray) -> float:
        """Energy of the conforming pair generated by nodal values ``u``."""
        return self.interior_energy(u) + self.boundary_energy(np.asarray(u)[self.domain.boundary_nodes])

    # -- derivatives --------------------------------------------------------
    def euclidean_gradient(self, u: np.ndarray) -> np.ndarray:
        """Gradient of :meth:`nodal_energy` with respect to the nodal vector."""
        u = np.asarray(u, dtype=float)
        g = np.zeros_like(u)
        for b in self._interior + self._lifted:
            g += b.gradient(u)
        return g

    def hessian(self, u: np.ndarray) -> sp.csr_matrix:
        u = np.asarray(u, dtype=float)
        H = sp.csr_matrix((u.size, u.size))
        for b in self._interior + self._lifted:
            H = H + b.hessian(u)
        return H.tocsr()

    def energy_gradient(self, pair: PairFunction) -> PairFunction:
        """X^2 gradient: ``<grad, v>_{X^2}`` is the derivative along ``v``."""
        self._check_pair(pair)
        g = self.euclidean_gradient(pair.u) / self.mass
        return PairFunction.from_nodal(self.domain, g)

    def x2_inner(self, a: PairFunction, b: PairFunction) -> float:
        return float(self.domain.weights @ (a.u * b.u) + self.atlas.weights @ (a.w * b.w))


def monotonicity_gap(a, b, r: float):
    """Terms of the vector monotonicity inequality for ``|x|^{r-2} x``.

    Returns ``lhs = (|a|^{r-2} a - |b|^{r-2} b) . (a - b)`` and the pair
    ``((|a| + |b|)^{r-2} |a - b|^2, |a - b|^r)``.  Inputs are arrays whose
    last axis is the vector dimension.
    """
    if r <= 1:
        raise ValueError("r must exceed 1")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        fa = np.where(na > 0, na ** (r - 2.0), 0.0) * a
        fb = np.where(nb > 0, nb ** (r - 2.0), 0.0) * b
    diff = a - b
    lhs = np.sum((fa - fb) * diff, axis=-1)
    dn = np.linalg.norm(diff, axis=-1)
    s = (na + nb)[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(dn > 0, s ** (r - 2.0) * dn**2, 0.0)
    return lhs, (first, dn**r)
