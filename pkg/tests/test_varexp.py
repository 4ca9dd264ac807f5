from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from wentzell_lab.grid import build_grid
from wentzell_lab.varexp import (
    ExponentField,
    PairFunction,
    VectorExponent,
    luxemburg_norm,
    modular,
    pair_modular,
    pair_norm,
    pointwise_extrema,
    sup_pair_norm,
)


@pytest.fixture(scope="module")
def grid():
    return build_grid(2, 1.0, 13)


def random_exponent(rng, coords, lo=1.2, hi=4.5):
    a, b = np.sort(rng.uniform(lo, hi, size=2))
    k = rng.normal(size=coords.shape[1])
    return ExponentField(a + (b - a) * 0.5 * (1 + np.sin(coords @ k + rng.uniform(0, 6))))


def random_field(rng, n):
    return rng.normal(size=n) * rng.choice([1e-2, 0.3, 1.0, 5.0, 40.0])


def bisection_oracle(f, r, w):
    # separate root find of log Theta(f / mu) = 0, far tighter than the library
    def g(log_mu):
        return np.log(np.sum(w * (np.abs(f) / np.exp(log_mu)) ** r))

    lo, hi = -60.0, 60.0
    return float(np.exp(optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15)))


# -- exponent fields ---------------------------------------------------------

def test_exponent_field_validation():
    with pytest.raises(ValueError):
        ExponentField(np.array([2.0, 0.5]))
    with pytest.raises(ValueError):
        ExponentField(np.array([2.0, np.inf]))
    r = ExponentField(np.array([3.0, 1.5, 2.0]))
    assert (r.minimum, r.maximum) == (1.5, 3.0)
    np.testing.assert_allclose(1 / r.values + 1 / r.conjugate().values, 1.0)


def test_pointwise_extrema_examples(rng):
    p = ExponentField.constant(2.5, 7)
    lo, hi = pointwise_extrema([p, p, p])
    assert np.array_equal(lo.values, p.values) and np.array_equal(hi.values, p.values)
    lo, hi = pointwise_extrema([ExponentField.constant(2, 5), ExponentField.constant(4, 5)])
    assert np.all(lo.values == 2) and np.all(hi.values == 4)
    comps = [ExponentField(rng.uniform(1.1, 5, size=40)) for _ in range(3)]
    lo, hi = pointwise_extrema(comps)
    for c in comps:
        assert np.all(lo.values <= c.values) and np.all(c.values <= hi.values)
    with pytest.raises(ValueError):
        pointwise_extrema([ExponentField.constant(2, 5), ExponentField.constant(2, 6)])


def test_vector_exponent_derived_fields(grid):
    domain, atlas = grid
    x = domain.coordinates
    p1 = ExponentField(2 + x[:, 0])
    p2 = ExponentField(3 - x[:, 1])
    q1 = ExponentField.constant(2.5, atlas.n_nodes)
    vec = VectorExponent((p1, p2), (q1,))
    np.testing.assert_array_equal(vec.p_min.values, np.minimum(p1.values, p2.values))
    np.testing.assert_array_equal(vec.p_max.values, np.maximum(p1.values, p2.values))
    assert vec.q_min.minimum == vec.q_max.maximum == 2.5
    with pytest.raises(ValueError):
        VectorExponent((p1, p2), ())
    with pytest.raises(ValueError):
        VectorExponent((p1, ExponentField.constant(1.0, domain.n_nodes)), (q1,))


# -- modular -------------------------------------------------------------------

def test_modular_examples(grid, rng):
    domain, _ = grid
    w = domain.weights
    r = random_exponent(rng, domain.coordinates)
    assert abs(modular(np.ones(domain.n_nodes), r, w) - 1.0) <= 1e-12
    assert modular(np.zeros(domain.n_nodes), r, w) == 0.0
    f = rng.normal(size=domain.n_nodes)
    assert np.isclose(modular(f, 3.0, w), np.sum(w * np.abs(f) ** 3), rtol=1e-14)


def test_modular_against_adaptive_quadrature():
    exact, _ = integrate.quad(lambda x: (1 + x) ** (2 + x), 0, 1, epsabs=1e-13, epsrel=1e-13)
    # a Gauss-Legendre carrier on (0, 1) integrates the smooth integrand to roundoff
    nodes, weights = np.polynomial.legendre.leggauss(40)
    x = 0.5 * (nodes + 1)
    assert abs(modular(1 + x, ExponentField(2 + x), 0.5 * weights) - exact) <= 1e-10
    # trapezoid grid carriers converge at second order; Romberg on three grids reaches 1e-10
    vals = []
    for n in (65, 129, 257):
        domain, _ = build_grid(2, 1.0, (n, 3))
        x1 = domain.coordinates[:, 0]
        vals.append(modular(1 + x1, ExponentField(2 + x1), domain.weights))
    r1 = [(4 * vals[k + 1] - vals[k]) / 3 for k in range(2)]
    r2 = (16 * r1[1] - r1[0]) / 15
    assert abs(r2 - exact) <= 1e-10
    assert abs(vals[0] - exact) / abs(vals[1] - exact) == pytest.approx(4.0, rel=0.01)


def test_modular_carrier_mismatch(grid):
    domain, atlas = grid
    with pytest.raises(ValueError):
        modular(np.ones(domain.n_nodes), 2.0, atlas.weights)
    with pytest.raises(ValueError):
        modular(np.ones(domain.n_nodes), ExponentField.constant(2, 5), domain.weights)


# -- Luxemburg norm ------------------------------------------------------------

def test_luxemburg_examples(grid):
    domain, _ = grid
    w = domain.weights
    assert luxemburg_norm(np.zeros(domain.n_nodes), 3.0, w) == 0.0
    assert luxemburg_norm(np.full(domain.n_nodes, 3.0), 2.7, w) == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_luxemburg_against_independent_bisection(grid, seed):
    domain, _ = grid
    rng = np.random.default_rng(seed)
    r = random_exponent(rng, domain.coordinates)
    f = random_field(rng, domain.n_nodes)
    ours = luxemburg_norm(f, r, domain.weights)
    assert abs(ours - bisection_oracle(f, r.values, domain.weights)) <= 1e-9 * max(1.0, ours)
    assert abs(modular(f / ours, r, domain.weights) - 1.0) <= 1e-8


def test_luxemburg_constant_exponent_is_lp(grid, rng):
    domain, _ = grid
    w = domain.weights
    for p in (1.0, 1.5, 2.0, 3.3, 7.0):
        f = random_field(rng, domain.n_nodes)
        lp = np.sum(w * np.abs(f) ** p) ** (1 / p)
        assert abs(luxemburg_norm(f, p, w) - lp) <= 1e-10 * lp


def test_unit_ball_and_power_bounds(grid):
    domain, _ = grid
    w = domain.weights
    rng = np.random.default_rng(7)
    for _ in range(200):
        r = random_exponent(rng, domain.coordinates, lo=1.0, hi=6.0)
        f = random_field(rng, domain.n_nodes)
        norm = luxemburg_norm(f, r, w)
        theta = modular(f, r, w)
        lo, hi = r.minimum, r.maximum
        if abs(norm - 1.0) <= 1e-8:
            assert abs(theta - 1.0) <= 1e-8
            continue
        assert (norm < 1) == (theta < 1)
        slack = 1e-10 * max(theta, 1.0)
        if norm > 1:
            assert norm**lo - slack <= theta <= norm**hi + slack
        else:
            assert norm**hi - slack <= theta <= norm**lo + slack
    # boundary case: scaling onto the unit sphere gives modular one
    f = random_field(rng, domain.n_nodes)
    r = random_exponent(rng, domain.coordinates)
    unit = f / luxemburg_norm(f, r, w)
    assert abs(modular(unit, r, w) - 1.0) <= 1e-8


def test_holder_inequality(grid):
    domain, _ = grid
    w = domain.weights
    rng = np.random.default_rng(11)
    for _ in range(100):
        r = random_exponent(rng, domain.coordinates, lo=1.1, hi=5.0)
        f, g = random_field(rng, domain.n_nodes), random_field(rng, domain.n_nodes)
        lhs = abs(np.sum(w * f * g))
        rhs = 2 * luxemburg_norm(f, r, w) * luxemburg_norm(g, r.conjugate(), w)
        assert lhs <= rhs * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), lam=st.floats(-50, 50).filter(lambda t: abs(t) > 1e-3))
def test_norm_axioms(seed, lam):
    domain, atlas = build_grid(2, 1.0, 7)
    rng = np.random.default_rng(seed)
    w = domain.weights
    r = random_exponent(rng, domain.coordinates, lo=1.0)
    f, g = random_field(rng, domain.n_nodes), random_field(rng, domain.n_nodes)
    nf, ng = luxemburg_norm(f, r, w), luxemburg_norm(g, r, w)
    assert abs(luxemburg_norm(lam * f, r, w) - abs(lam) * nf) <= 1e-10 * abs(lam) * nf
    assert luxemburg_norm(f + g, r, w) <= nf + ng + 1e-10 * (nf + ng)


# -- pair norms ----------------------------------------------------------------

def test_pair_norm_examples(grid, rng):
    domain, atlas = grid
    r = random_exponent(rng, domain.coordinates)
    s = random_exponent(rng, atlas.coordinates)
    assert pair_norm(PairFunction.zeros(domain), r, s, domain, atlas) == 0.0
    pair = PairFunction.from_nodal(domain, rng.normal(size=domain.n_nodes))
    base = pair_norm(pair, r, s, domain, atlas)
    for lam in (-3.0, 0.25, 7.0):
        assert abs(pair_norm(pair * lam, r, s, domain, atlas) - abs(lam) * base) <= 1e-10 * abs(lam) * base
    oracle = bisection_oracle(pair.u, r.values, domain.weights) + bisection_oracle(
        pair.w, s.values, atlas.weights
    )
    assert abs(base - oracle) <= 1e-9 * base
    theta = pair_modular(pair, r, s, domain, atlas)
    assert theta == pytest.approx(modular(pair.u, r, domain.weights) + modular(pair.w, s, atlas.weights))


def test_sup_pair_norm(grid, rng):
    domain, atlas = grid
    assert sup_pair_norm(PairFunction.from_nodal(domain, np.full(domain.n_nodes, -2.5))) == 2.5
    u = np.zeros(domain.n_nodes)
    u[domain.n_nodes // 2] = 2.0
    w = np.zeros(atlas.n_nodes)
    w[3] = -5.0
    pair = PairFunction(u, w)
    assert sup_pair_norm(pair) == 5.0
    for _ in range(20):
        a = PairFunction.from_nodal(domain, rng.normal(size=domain.n_nodes))
        b = PairFunction(np.abs(a.u) + rng.uniform(0, 1, size=a.u.size), np.abs(a.w) + 0.1)
        assert sup_pair_norm(a) <= sup_pair_norm(b)


def test_pair_arithmetic_and_conformity(grid, rng):
    domain, _ = grid
    a = PairFunction.from_nodal(domain, rng.normal(size=domain.n_nodes))
    b = PairFunction.from_nodal(domain, rng.normal(size=domain.n_nodes))
    assert (a + b).is_conforming(domain) and (a - b).is_conforming(domain)
    assert (2.0 * a).is_conforming(domain) and (-a).is_conforming(domain)
    assert not PairFunction(a.u, a.w + 1.0).is_conforming(domain)
