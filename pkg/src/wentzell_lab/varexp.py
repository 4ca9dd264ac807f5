"""Variable-exponent Lebesgue calculus on grid carriers.

A *carrier* is simply the quadrature weight vector of the set the field lives
on (``domain.weights`` for the closed box, ``atlas.weights`` for the
boundary).  Only finite exponents enter modulars; the sup-norm is handled by
:func:`sup_pair_norm`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import BoundaryAtlas, BoxDomain

__all__ = [
    "ExponentField",
    "VectorExponent",
    "PairFunction",
    "pointwise_extrema",
    "modular",
    "luxemburg_norm",
    "pair_norm",
    "pair_modular",
    "sup_pair_norm",
]

_REL_WIDTH = 1e-12


@dataclass(frozen=True, eq=False)
class ExponentField:
    """Nodal values of an exponent ``r(.)`` with ``1 <= r^- <= r^+ < inf``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise ValueError("exponent field must be a non-empty 1-d array")
        if not np.all(np.isfinite(vals)):
            raise ValueError("exponent field must be finite")
        if vals.min() < 1.0:
            raise ValueError(f"exponent minimum {vals.min()} is below 1")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float, n: int) -> "ExponentField":
        return cls(np.full(n, float(value)))

    @cached_property
    def minimum(self) -> float:
        return float(self.values.min())

    @cached_property
    def maximum(self) -> float:
        return float(self.values.max())

    def __len__(self) -> int:
        return self.values.size

    def conjugate(self) -> "ExponentField":
        r = self.values
        if r.min() <= 1.0:
            raise ValueError("conjugate exponent needs r^- > 1")
        return ExponentField(r / (r - 1.0))

    def shifted(self, offset: float) -> "ExponentField":
        return ExponentField(self.values + offset)


def pointwise_extrema(components) -> tuple[ExponentField, ExponentField]:
    """Nodewise minimum and maximum across exponent components."""
    comps = list(components)
    if not comps:
        raise ValueError("need at least one component")
    sizes = {len(c) for c in comps}
    if len(sizes) != 1:
        raise ValueError("exponent components live on different carriers")
    stack = np.vstack([c.values for c in comps])
    return ExponentField(stack.min(axis=0)), ExponentField(stack.max(axis=0))


@dataclass(frozen=True, eq=False)
class VectorExponent:
    """Interior exponents ``p_1..p_N`` and boundary exponents ``q_1..q_{N-1}``.

    ``q_j`` governs the ``j``-th tangential direction of whichever face a
    boundary node is seen from.
    """

    p: tuple[ExponentField, ...]
    q: tuple[ExponentField, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", tuple(self.p))
        object.__setattr__(self, "q", tuple(self.q))
        if len(self.q) != len(self.p) - 1:
            raise ValueError("need N interior and N-1 boundary exponent components")
        if self.p_min.minimum <= 1.0 or self.q_min.minimum <= 1.0:
            raise ValueError("exponents must satisfy p_m^- > 1 and q_m^- > 1")

    @classmethod
    def constant(cls, domain: BoxDomain, atlas: BoundaryAtlas, p: float, q: float | None = None):
        q = p if q is None else q
        N = domain.dimension
        return cls(
            tuple(ExponentField.constant(p, domain.n_nodes) for _ in range(N)),
            tuple(ExponentField.constant(q, atlas.n_nodes) for _ in range(N - 1)),
        )

    @cached_property
    def _p_extrema(self):
        return pointwise_extrema(self.p)

    @cached_property
    def _q_extrema(self):
        return pointwise_extrema(self.q)

    @property
    def p_min(self) -> ExponentField:
        return self._p_extrema[0]

    @property
    def p_max(self) -> ExponentField:
        return self._p_extrema[1]

    @property
    def q_min(self) -> ExponentField:
        return self._q_extrema[0]

    @property
    def q_max(self) -> ExponentField:
        return self._q_extrema[1]

    @property
    def min_exponent(self) -> float:
        return min(self.p_min.minimum, self.q_min.minimum)


@dataclass(frozen=True, eq=False)
class PairFunction:
    """A state ``(u, w)``: nodal values on the closed box and on the boundary.

    Pairs produced by the flow are conforming, i.e. ``w`` is the trace of
    ``u``.
    """

    u: np.ndarray
    w: np.ndarray

    @classmethod
    def from_nodal(cls, domain: BoxDomain, u) -> "PairFunction":
        u = np.array(u, dtype=float)
        return cls(u, u[domain.boundary_nodes].copy())

    @classmethod
    def zeros(cls, domain: BoxDomain) -> "PairFunction":
        return cls.from_nodal(domain, np.zeros(domain.n_nodes))

    def is_conforming(self, domain: BoxDomain) -> bool:
        return self.u.shape == (domain.n_nodes,) and np.array_equal(
            self.w, self.u[domain.boundary_nodes]
        )

    def __add__(self, other: "PairFunction") -> "PairFunction":
        return PairFunction(self.u + other.u, self.w + other.w)

    def __sub__(self, other: "PairFunction") -> "PairFunction":
        return PairFunction(self.u - other.u, self.w - other.w)

    def __mul__(self, scalar: float) -> "PairFunction":
        return PairFunction(scalar * self.u, scalar * self.w)

    __rmul__ = __mul__

    def __neg__(self) -> "PairFunction":
        return PairFunction(-self.u, -self.w)


def _exponent_values(r, n: int) -> np.ndarray:
    if isinstance(r, ExponentField):
        vals = r.values
    else:
        vals = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    if vals.shape != (n,):
        raise ValueError("field and exponent live on different carriers")
    return vals


def modular(f: np.ndarray, r, weights: np.ndarray) -> float:
    """``Theta_r(f) = sum_k w_k |f_k|^{r_k}`` over the carrier quadrature."""
    f = np.asarray(f, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if f.shape != weights.shape:
        raise ValueError("field and carrier have different sizes")
    rv = _exponent_values(r, f.size)
    return float(weights @ np.abs(f) ** rv)


def luxemburg_norm(f: np.ndarray, r, weights: np.ndarray) -> float:
    """``inf{mu > 0 : Theta_r(f / mu) <= 1}`` by bracketing and bisection."""
    f = np.abs(np.asarray(f, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if f.shape != weights.shape:
        raise ValueError("field and carrier have different sizes")
    rv = _exponent_values(r, f.size)
    if not np.any(f > 0):
        return 0.0

    def theta(mu: float) -> float:
        return float(weights @ (f / mu) ** rv)

    lo = hi = 1.0
    if theta(1.0) > 1.0:
        while theta(hi) > 1.0:
            lo, hi = hi, 2.0 * hi
    else:
        while theta(lo) <= 1.0:
            lo, hi = 0.5 * lo, lo
    while hi - lo > _REL_WIDTH * hi:
        mid = 0.5 * (lo + hi)
        if theta(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return hi


def pair_norm(pair: PairFunction, r, s, domain: BoxDomain, atlas: BoundaryAtlas) -> float:
    """``||u||_{r,Omega} + ||w||_{s,Gamma}``."""
    return luxemburg_norm(pair.u, r, domain.weights) + luxemburg_norm(pair.w, s, atlas.weights)


def pair_modular(pair: PairFunction, r, s, domain: BoxDomain, atlas: BoundaryAtlas) -> float:
    """``int_Omega |u|^r dx + int_Gamma |w|^s dsigma``."""
    return modular(pair.u, r, domain.weights) + modular(pair.w, s, atlas.weights)


def sup_pair_norm(pair: PairFunction) -> float:
    return float(max(np.max(np.abs(pair.u)), np.max(np.abs(pair.w))))
