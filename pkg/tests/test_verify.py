from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_energy
from wentzell_lab import constants as K
from wentzell_lab import verify as V
from wentzell_lab.flow import FlowConfig, evolve
from wentzell_lab.grid import build_grid
from wentzell_lab.varexp import ExponentField, PairFunction

CFG = FlowConfig(tau=2e-3)


@pytest.fixture(scope="module")
def linear():
    return make_energy(n=11, p=2.0, eps_reg=0.0)


@pytest.fixture(scope="module")
def quartic():
    return make_energy(n=11, p=4.0)


@pytest.fixture(scope="module")
def variable():
    return make_energy(n=11, p=lambda x: 2.5 + x[:, 0], q=lambda x: 3.0 - 0.5 * x[:, 1])


def pair(E, seed, ordered=False):
    return V.random_pair(E.domain, np.random.default_rng(seed), ordered)


def test_report_pass_rule():
    rep = V.VerificationReport("x", [0.1, 0.3], 0.3, 0.3)
    assert rep.passed
    assert not V.VerificationReport("x", [0.4], 0.4, 0.3).passed
    d = rep.to_dict()
    assert d["passed"] is True and d["worst"] == 0.3 and d["residuals"] == [0.1, 0.3]


def test_random_fields_are_bounded_and_seeded():
    domain, _ = build_grid(2, (1.0, 2.0), 9)
    f = V.random_smooth_field(domain, np.random.default_rng(1))
    g = V.random_smooth_field(domain, np.random.default_rng(1))
    assert np.array_equal(f, g)
    assert np.abs(f).max() == pytest.approx(1.0)
    u, v = V.random_pair(domain, np.random.default_rng(2), ordered=True)
    assert np.all(u.u <= v.u) and u.is_conforming(domain) and v.is_conforming(domain)


# -- order ---------------------------------------------------------------------------

def test_order_identical_data(variable):
    u, _ = pair(variable, 0)
    rep = V.check_order_preserving(variable, u, u, 0.02, CFG)
    assert rep.passed and rep.worst == 0.0 and max(rep.residuals) == 0.0


@pytest.mark.parametrize("name", ["linear", "quartic", "variable"])
def test_order_shifted_data_long_run(name, request):
    E = request.getfixturevalue(name)
    u, _ = pair(E, 1)
    rep = V.check_order_preserving(E, u, PairFunction.from_nodal(E.domain, u.u + 0.5), 0.2, FlowConfig(tau=2e-3))
    assert len(rep.residuals) == 101
    assert rep.passed, rep.worst


@pytest.mark.parametrize("seed", range(3))
def test_order_min_max_pairs(variable, seed):
    u, v = pair(variable, seed, ordered=True)
    assert V.check_order_preserving(variable, u, v, 0.02, CFG).passed


def test_order_requires_ordered_data(linear):
    u, v = pair(linear, 3)
    with pytest.raises(ValueError):
        V.check_order_preserving(linear, v, u, 0.01, CFG)


# -- non-expansivity -----------------------------------------------------------------

def test_nonexpansive_identical(variable):
    u, _ = pair(variable, 4)
    rep = V.check_nonexpansive(variable, u, u, 2.0, 2.0, 0.01, CFG)
    assert rep.passed and all(r == 0 for r in rep.residuals)


@pytest.mark.parametrize("name", ["linear", "quartic", "variable"])
def test_nonexpansive_exponents(name, request):
    E = request.getfixturevalue(name)
    u, v = pair(E, 5)
    trajs = (evolve(E, u, 0.02, CFG), evolve(E, v, 0.02, CFG))
    x, xb = E.domain.coordinates, E.atlas.coordinates
    r_var = ExponentField(2.5 + 0.5 * np.sin(math.pi * x[:, 0]))
    s_var = ExponentField(2.5 + 0.5 * np.sin(math.pi * xb[:, 0]))
    for r, s in ((2.0, 2.0), (4.0, 4.0), (r_var, s_var)):
        rep = V.check_nonexpansive(E, u, v, r, s, 0.02, CFG, trajectories=trajs)
        assert rep.passed, (r, rep.worst)
        norms = rep.details["values"]
        assert norms[-1] < norms[0]


def test_precomputed_trajectories_give_identical_reports(variable):
    u, v = pair(variable, 6)
    trajs = (evolve(variable, u, 0.01, CFG), evolve(variable, v, 0.01, CFG))
    a = V.check_submarkovian(variable, u, v, 0.01, CFG).to_dict()
    b = V.check_submarkovian(variable, u, v, 0.01, CFG, trajectories=trajs).to_dict()
    assert a == b


# -- sup norm ----------------------------------------------------------------------

def test_submarkovian_examples(variable):
    E = variable
    u, v = pair(E, 7)
    assert V.check_submarkovian(E, u, u, 0.01, CFG).worst == 0.0
    ones = PairFunction.from_nodal(E.domain, np.ones(E.domain.n_nodes))
    rep = V.check_submarkovian(E, ones, PairFunction.zeros(E.domain), 0.05, CFG)
    assert rep.passed and rep.details["values"][-1] < 1.0
    assert V.check_submarkovian(E, u, v, 0.05, CFG).passed


@pytest.mark.parametrize("name", ["linear", "quartic", "variable"])
def test_sup_accretive(name, request):
    E = request.getfixturevalue(name)
    u, v = pair(E, 8)
    rep = V.check_sup_accretive(E, u, v)
    assert rep.passed and len(rep.residuals) == 4


# -- dissipation ----------------------------------------------------------------------

@pytest.mark.parametrize("r", [2.0, 4.0])
def test_dissipation_sign(variable, r):
    u, v = pair(variable, 9)
    assert V.check_dissipation(variable, u, u, r, 0.01, CFG).worst == 0.0
    rep = V.check_dissipation(variable, u, v, r, 0.02, CFG)
    assert rep.passed
    assert all(q <= 0 for q in rep.residuals)


def test_dissipation_needs_r_at_least_two(linear):
    u, v = pair(linear, 10)
    with pytest.raises(ValueError):
        V.check_dissipation(linear, u, v, 1.5, 0.01, CFG)


def test_energy_dissipation(variable):
    u, _ = pair(variable, 11)
    rep = V.check_energy_dissipation(variable, u, 0.02, CFG)
    assert rep.passed and rep.details["proximal_gap"] <= 1e-10
    assert rep.details["final_energy"] < rep.details["initial_energy"]


# -- ultracontractivity ---------------------------------------------------------------

def test_fit_decay_recovers_parameters():
    t = np.array([0.01, 0.02, 0.05, 0.1, 0.2])
    D = 3.0 * t**-0.7 * np.exp(0.4 * t)
    fit = V.fit_decay(t, D)
    assert fit["kappa"] == pytest.approx(0.7, rel=1e-10)
    assert fit["C_prime"] == pytest.approx(0.4, rel=1e-8)
    assert fit["log_C"] == pytest.approx(math.log(3.0), rel=1e-10)
    with pytest.raises(ValueError):
        V.fit_decay(t[:3], D[:3])


def test_ultracontractivity_identical_data(quartic):
    u, _ = pair(quartic, 12)
    out = V.fit_ultracontractivity(quartic, u, u, [0.01, 0.02, 0.04, 0.08], CFG)
    assert out["verdict"] == "identical data" and out["fit"] is None


def test_ultracontractivity_linear_slope(linear):
    u, v = pair(linear, 13)
    out = V.fit_ultracontractivity(
        linear, u, v, [0.005, 0.01, 0.02, 0.04, 0.08], FlowConfig(tau=2.5e-3), scales=(1.0, 0.25, 0.0625)
    )
    assert abs(out["scaling"]["slope"] - 1.0) <= 0.1
    assert math.isfinite(out["C_fit"]) and out["C_fit"] > 0


def test_ultracontractivity_quartic_slope(quartic):
    u, v = pair(quartic, 14)
    inp = K.derive_branches(u - v, quartic.exponents, 2.0, 2.0, quartic.domain, quartic.atlas)
    bundle = K.compute_bundle(inp, diagnostics=False)
    out = V.fit_ultracontractivity(
        quartic, u, v, [0.005, 0.01, 0.02, 0.04, 0.08], FlowConfig(tau=2.5e-3), bundle,
        scales=(1.0, 0.25, 0.0625),
    )
    assert out["scaling"]["slope"] <= 1.0
    assert out["fit"]["kappa"] > 0
    assert set(out["kappa_candidates"]) == {"k1", "gamma_k1"}
    assert out["gamma"] == bundle.params["gamma"]


def test_ultracontractivity_rejects_small_exponents():
    E = make_energy(n=7, p=1.8)
    u, v = pair(E, 15)
    with pytest.raises(ValueError):
        V.fit_ultracontractivity(E, u, v, [0.01, 0.02, 0.03, 0.04], CFG)


# -- log-Sobolev -----------------------------------------------------------------------

def test_logsobolev_constant_field():
    domain, atlas = build_grid(2, 1.0, 9)
    exps = [np.full(domain.n_nodes, 3.0)] * 2
    out = V.check_logsobolev(domain, atlas, np.full(domain.n_nodes, 7.0), exps, "omega")
    # psi(u^3) = 1 on the unit square forces u = 1, so the left side is log 1 = 0
    assert out["normalization"] == pytest.approx(1.0, abs=1e-10)
    assert abs(out["lhs"]) <= 1e-10
    assert out["gradient_norm"] == 0.0 and out["finite"]


@pytest.mark.parametrize("side", ["omega", "gamma"])
def test_logsobolev_random_field_is_finite_and_grid_stable(side):
    fits = []
    for n in (17, 33):
        domain, atlas = build_grid(2, 1.0, n)
        u = 1.0 + 0.8 * np.sin(2 * domain.coordinates[:, 0]) * np.cos(3 * domain.coordinates[:, 1])
        exps = [np.full(domain.n_nodes, 3.0)] * 2 if side == "omega" else [np.full(atlas.n_nodes, 2.5)]
        out = V.check_logsobolev(domain, atlas, u, exps, side)
        assert out["finite"]
        fits.append(out["fitted_constant"])
    for eps, c17 in fits[0].items():
        assert abs(fits[1][eps] - c17) <= 0.2 * c17


def test_logsobolev_validation():
    domain, atlas = build_grid(2, 1.0, 5)
    exps = [np.full(domain.n_nodes, 3.0)] * 2
    with pytest.raises(ValueError):
        V.check_logsobolev(domain, atlas, -np.ones(domain.n_nodes), exps)
    with pytest.raises(ValueError):
        V.check_logsobolev(domain, atlas, np.ones(domain.n_nodes), exps, side="edge")
    with pytest.raises(ValueError):
        V.check_logsobolev(domain, atlas, np.zeros(domain.n_nodes), exps)


# -- tau convergence ----------------------------------------------------------------------

def test_tau_convergence_ratios(variable):
    u, _ = pair(variable, 16)
    out = V.tau_convergence(variable, u, 0.1, 0.01, levels=4)
    assert len(out["increments"]) == 3 and len(out["ratios"]) == 2
    assert all(1.6 <= r <= 2.4 for r in out["ratios"])


def test_reports_are_reproducible(variable):
    u, v = pair(variable, 17)
    a = V.check_nonexpansive(variable, u, v, 3.0, 3.0, 0.01, CFG).to_dict()
    b = V.check_nonexpansive(variable, u, v, 3.0, 3.0, 0.01, CFG).to_dict()
    assert a == b
