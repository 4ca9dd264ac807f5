"""Numerical checks of the semigroup properties on discrete trajectories.

Every check returns a :class:`VerificationReport` whose ``passed`` flag is
exactly ``worst <= tolerance``.  Tolerances for properties that are exact in
the continuum carry an explicit allowance ``TAU_ALLOWANCE * tau`` for the
time discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantBundle
from .energy import WentzellEnergy
from .flow import FlowConfig, Trajectory, evolve, proximal_step, x2_norm
from .grid import BoundaryAtlas, BoxDomain, interior_gradient, tangential_gradient
from .varexp import ExponentField, PairFunction, luxemburg_norm, modular, pair_norm, sup_pair_norm

__all__ = [
    "TAU_ALLOWANCE",
    "VerificationReport",
    "random_smooth_field",
    "random_pair",
    "check_energy_dissipation",
    "check_order_preserving",
    "check_nonexpansive",
    "check_submarkovian",
    "check_dissipation",
    "check_sup_accretive",
    "fit_decay",
    "scaling_slope",
    "fit_ultracontractivity",
    "check_logsobolev",
    "tau_convergence",
]

# Coefficient of the O(tau) allowance.  The implicit scheme with two-point
# differences preserves order and sup-norm contraction exactly, so observed
# violations are at roundoff level; the allowance stays small.
TAU_ALLOWANCE = 1e-6


@dataclass
class VerificationReport:
    name: str
    residuals: list[float]
    worst: float
    tolerance: float
    metadata: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst": self.worst,
            "tolerance": self.tolerance,
            "residuals": list(self.residuals),
            "metadata": self.metadata,
            "details": self.details,
        }


def _meta(energy: WentzellEnergy, cfg: FlowConfig, horizon: float | None = None) -> dict:
    ex = energy.exponents
    out = {
        "shape": list(energy.domain.shape),
        "side_lengths": list(energy.domain.side_lengths),
        "p_range": [ex.p_min.minimum, ex.p_max.maximum],
        "q_range": [ex.q_min.minimum, ex.q_max.maximum],
        "tau": cfg.tau,
    }
    if horizon is not None:
        out["horizon"] = horizon
    return out


def _finish(name, residuals, tolerance, meta, **details) -> VerificationReport:
    residuals = [float(r) for r in residuals]
    worst = max([0.0, *residuals])
    return VerificationReport(name, residuals, worst, float(tolerance), meta, details)


# -- data ------------------------------------------------------------------


def random_smooth_field(domain: BoxDomain, rng: np.random.Generator, modes: int = 3, terms: int = 6):
    """Seeded trigonometric series scaled to ``max |f| = 1``."""
    x = domain.coordinates / np.asarray(domain.side_lengths)
    f = np.zeros(domain.n_nodes)
    while not np.any(f):
        for _ in range(terms):
            k = rng.integers(0, modes + 1, size=domain.dimension)
            phase = rng.uniform(0, 2 * np.pi, size=domain.dimension)
            f += rng.uniform(-1, 1) * np.prod(np.cos(np.pi * k * x + phase), axis=1)
    return f / np.abs(f).max()


def random_pair(domain: BoxDomain, rng: np.random.Generator, ordered: bool = False):
    """Two conforming pairs from random smooth fields; ``u <= v`` if ``ordered``."""
    f = random_smooth_field(domain, rng)
    g = random_smooth_field(domain, rng)
    if ordered:
        f, g = np.minimum(f, g), np.maximum(f, g)
    return PairFunction.from_nodal(domain, f), PairFunction.from_nodal(domain, g)


def _two(energy, u0, v0, horizon, cfg) -> tuple[Trajectory, Trajectory]:
    """Trajectories from ``u0`` and ``v0``; pair checks also accept them precomputed."""
    return evolve(energy, u0, horizon, cfg), evolve(energy, v0, horizon, cfg)


# -- semigroup properties ---------------------------------------------------


def check_energy_dissipation(
    energy: WentzellEnergy, u0: PairFunction, horizon: float, cfg: FlowConfig, slack: float = 1e-10
) -> VerificationReport:
    """``Phi(u_{n+1}) <= Phi(u_n) + slack`` at every step."""
    traj = evolve(energy, u0, horizon, cfg)
    e = np.asarray(traj.energies)
    increments = np.diff(e)
    # proximal inequality Phi_{n+1} + |u_{n+1}-u_n|^2 / 2 tau <= Phi_n
    prox = [
        e[n + 1] + x2_norm(energy, traj.states[n + 1] - traj.states[n]) ** 2 / (2 * cfg.tau) - e[n]
        for n in range(len(e) - 1)
    ]
    return _finish(
        "energy_dissipation",
        increments,
        slack,
        _meta(energy, cfg, horizon),
        proximal_gap=float(max(prox, default=0.0)),
        initial_energy=float(e[0]),
        final_energy=float(e[-1]),
    )


def check_order_preserving(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    horizon: float,
    cfg: FlowConfig,
    tol: float | None = None,
    trajectories: tuple[Trajectory, Trajectory] | None = None,
) -> VerificationReport:
    """``u_n <= v_n`` nodewise at every step, given ``u_0 <= v_0``."""
    if np.any(u0.u > v0.u) or np.any(u0.w > v0.w):
        raise ValueError("initial data must satisfy u0 <= v0 at every node")
    tol = 1e-9 + TAU_ALLOWANCE * cfg.tau if tol is None else tol
    tu, tv = trajectories or _two(energy, u0, v0, horizon, cfg)
    res = [max(float(np.max(a.u - b.u)), float(np.max(a.w - b.w))) for a, b in zip(tu.states, tv.states)]
    return _finish("order_preserving", res, tol, _meta(energy, cfg, horizon))


def _increase_report(name, values, tol, meta, relative: bool, **details):
    values = np.asarray(values, dtype=float)
    scale = max(values[0], np.finfo(float).tiny) if relative else 1.0
    steps = np.diff(values) / scale
    vs_initial = (values - values[0]) / scale
    res = np.maximum(steps, vs_initial[1:])
    return _finish(name, res, tol, meta, values=values.tolist(), **details)


def check_nonexpansive(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    r,
    s,
    horizon: float,
    cfg: FlowConfig,
    tol: float | None = None,
    trajectories: tuple[Trajectory, Trajectory] | None = None,
) -> VerificationReport:
    """``N_n = ||u_n - v_n||_{r,Omega} + ||.||_{s,Gamma}`` never increases.

    Residuals are relative increases, step to step and against ``N_0``.
    """
    tol = 1e-6 + TAU_ALLOWANCE * cfg.tau if tol is None else tol
    tu, tv = trajectories or _two(energy, u0, v0, horizon, cfg)
    d, a = energy.domain, energy.atlas
    norms = [pair_norm(x - y, r, s, d, a) for x, y in zip(tu.states, tv.states)]
    if norms[0] == 0:
        return _finish("nonexpansive", [n for n in norms], tol, _meta(energy, cfg, horizon))
    return _increase_report("nonexpansive", norms, tol, _meta(energy, cfg, horizon), relative=True)


def check_submarkovian(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    horizon: float,
    cfg: FlowConfig,
    tol: float | None = None,
    trajectories: tuple[Trajectory, Trajectory] | None = None,
) -> VerificationReport:
    """``sup |u_n - v_n|`` never increases (absolute residuals)."""
    tol = 1e-9 + TAU_ALLOWANCE * cfg.tau if tol is None else tol
    tu, tv = trajectories or _two(energy, u0, v0, horizon, cfg)
    sups = [sup_pair_norm(x - y) for x, y in zip(tu.states, tv.states)]
    return _increase_report("submarkovian", sups, tol, _meta(energy, cfg, horizon), relative=False)


def check_dissipation(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    r: float,
    horizon: float,
    cfg: FlowConfig,
    tol: float | None = None,
    trajectories: tuple[Trajectory, Trajectory] | None = None,
) -> VerificationReport:
    """Sign of the difference quotient of ``int_Omega |w|^r + int_Gamma |w|^r``.

    Residuals are ``(Theta_{n+1} - Theta_n) / (tau Theta_0)``.
    """
    if r < 2:
        raise ValueError("r must be at least 2")
    tol = 1e-9 + TAU_ALLOWANCE * cfg.tau if tol is None else tol
    tu, tv = trajectories or _two(energy, u0, v0, horizon, cfg)
    d, a = energy.domain, energy.atlas
    theta = np.array(
        [modular((x - y).u, r, d.weights) + modular((x - y).w, r, a.weights) for x, y in zip(tu.states, tv.states)]
    )
    scale = max(theta[0], np.finfo(float).tiny)
    quotient = np.diff(theta) / (cfg.tau * scale)
    return _finish(
        "dissipation", quotient, tol, _meta(energy, cfg, horizon), r=r, modular=theta.tolist()
    )


def check_sup_accretive(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    taus=(1e-4, 1e-3, 1e-2, 1e-1),
    gtol: float = 1e-10,
    tol: float = 1e-9,
) -> VerificationReport:
    """One resolvent step contracts the sup norm, for each ``tau``."""
    base = sup_pair_norm(u0 - v0)
    res = []
    for tau in taus:
        cfg = FlowConfig(tau=tau, gtol=gtol)
        a, _ = proximal_step(energy, u0, cfg)
        b, _ = proximal_step(energy, v0, cfg)
        res.append(sup_pair_norm(a - b) - base)
    meta = _meta(energy, FlowConfig(tau=max(taus)))
    meta["taus"] = list(taus)
    return _finish("sup_accretive", res, tol, meta)


# -- ultracontractivity ------------------------------------------------------


def fit_decay(times, values) -> dict:
    """Least squares ``log D = log C - kappa log t + C' t``."""
    t = np.asarray(times, dtype=float)
    D = np.asarray(values, dtype=float)
    ok = (t > 0) & (D > 0)
    if ok.sum() < 4:
        raise ValueError("need at least 4 samples with t > 0 and D > 0")
    A = np.column_stack([np.ones(ok.sum()), -np.log(t[ok]), t[ok]])
    coef, *_ = np.linalg.lstsq(A, np.log(D[ok]), rcond=None)
    resid = np.log(D[ok]) - A @ coef
    return {
        "log_C": float(coef[0]),
        "kappa": float(coef[1]),
        "C_prime": float(coef[2]),
        "rms_residual": float(np.sqrt(np.mean(resid**2))),
        "samples": int(ok.sum()),
    }


def _sample(traj: Trajectory, times) -> list[float]:
    t = np.asarray(traj.times)
    return [int(np.argmin(np.abs(t - s))) for s in times]


def scaling_slope(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    t_star: float,
    cfg: FlowConfig,
    scales=(1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125),
    r: float = 2.0,
    s: float = 2.0,
) -> dict:
    """Regress ``log D(t*)`` on ``log ||lambda (u0 - v0)||_{r,s}``."""
    d, a = energy.domain, energy.atlas
    x, y = [], []
    for lam in scales:
        tu, tv = _two(energy, lam * u0, lam * v0, t_star, cfg)
        x.append(math.log(pair_norm(lam * (u0 - v0), r, s, d, a)))
        y.append(math.log(sup_pair_norm(tu.final - tv.final)))
    slope, intercept = np.polyfit(x, y, 1)
    return {
        "scales": list(scales),
        "log_initial_norm": x,
        "log_D": y,
        "slope": float(slope),
        "intercept": float(intercept),
    }


def fit_ultracontractivity(
    energy: WentzellEnergy,
    u0: PairFunction,
    v0: PairFunction,
    times,
    cfg: FlowConfig,
    bundle: ConstantBundle | None = None,
    r: float = 2.0,
    s: float = 2.0,
    scales=(1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125),
    t_star: float | None = None,
) -> dict:
    """Fit the decay shape and the initial-data scaling.

    Returns a dict with the time fit, the scaling regression, the smallest
    constant ``C_fit`` making ``D(t) <= C e^{C' t} t^{-kappa} N_0^gamma`` hold
    over all runs, and the kappa candidates from ``bundle`` when given.
    """
    times = sorted(float(t) for t in times)
    if not times or times[0] <= 0:
        raise ValueError("sample times must be positive")
    if energy.exponents.min_exponent < 2:
        raise ValueError("ultracontractivity fit needs exponents >= 2")
    d, a = energy.domain, energy.atlas
    n0 = pair_norm(u0 - v0, r, s, d, a)
    if n0 == 0:
        return {"verdict": "identical data", "fit": None}
    horizon = times[-1]
    tu, tv = _two(energy, u0, v0, horizon, cfg)
    idx = _sample(tu, times)
    t_s = [tu.times[i] for i in idx]
    D = [sup_pair_norm(tu.states[i] - tv.states[i]) for i in idx]
    fit = fit_decay(t_s, D)
    t_star = times[len(times) // 2] if t_star is None else t_star
    scaling = scaling_slope(energy, u0, v0, t_star, cfg, scales, r, s)
    gamma = bundle.params["gamma"] if bundle is not None else 1.0
    bound = [
        Dk * tk ** fit["kappa"] * math.exp(-fit["C_prime"] * tk) / n0**gamma
        for tk, Dk in zip(t_s, D)
    ]
    for ln, lD in zip(scaling["log_initial_norm"], scaling["log_D"]):
        bound.append(
            math.exp(lD) * t_star ** fit["kappa"] * math.exp(-fit["C_prime"] * t_star)
            / math.exp(ln) ** gamma
        )
    out = {
        "verdict": "fitted",
        "times": t_s,
        "D": D,
        "fit": fit,
        "scaling": scaling,
        "gamma": gamma,
        "C_fit": float(max(bound)),
    }
    if bundle is not None:
        out["kappa_candidates"] = bundle.kappa_candidates
    return out


# -- log-Sobolev -------------------------------------------------------------


def _gradient_norms(domain, atlas, u, exponents, side) -> float:
    if side == "omega":
        return sum(
            luxemburg_norm(interior_gradient(domain, u, i), exponents[i], domain.weights)
            for i in range(domain.dimension)
        )
    g = u[domain.boundary_nodes]
    total = 0.0
    for j in range(domain.dimension - 1):
        vals, weights, rs = [], [], []
        for face in atlas.faces:
            vals.append(tangential_gradient(atlas, g, face, j))
            weights.append(face.weights)
            rs.append(np.asarray(exponents[j])[face.boundary_index])
        total += luxemburg_norm(np.concatenate(vals), np.concatenate(rs), np.concatenate(weights))
    return total


def check_logsobolev(
    domain: BoxDomain,
    atlas: BoundaryAtlas,
    u: np.ndarray,
    exponents,
    side: str = "omega",
    eps_grid=(1e-2, 1e-1, 1.0),
    eps1_grid=None,
    m1: float = 1.0,
) -> dict:
    """Smallest ``C`` with ``M1 psi(u^pm log u) <= -log e1 + C e1 (G + eps)``.

    ``u`` (nonnegative nodal values) is rescaled so that
    ``psi(u^{p_m}) = 1`` on the chosen side; ``exponents`` lists the nodal
    ``p_i`` (side ``"omega"``) or boundary ``q_j`` (side ``"gamma"``) arrays
    and ``p_m`` is their pointwise minimum.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    if side not in ("omega", "gamma"):
        raise ValueError("side must be 'omega' or 'gamma'")
    exps = [np.asarray(e.values if isinstance(e, ExponentField) else e, dtype=float) for e in exponents]
    pm = np.min(np.vstack(exps), axis=0)
    vals = u if side == "omega" else u[domain.boundary_nodes]
    weights = domain.weights if side == "omega" else atlas.weights
    norm = luxemburg_norm(vals, pm, weights)
    if norm == 0:
        raise ValueError("u vanishes on the chosen side")
    u = u / norm
    vals = vals / norm
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = float(weights @ np.where(vals > 0, vals**pm * np.log(vals), 0.0))
    G = _gradient_norms(domain, atlas, u, exps, side)
    eps1 = np.logspace(-4, 4, 161) if eps1_grid is None else np.asarray(eps1_grid, dtype=float)
    fits = {}
    for eps in eps_grid:
        need = (m1 * lhs + np.log(eps1)) / (eps1 * (G + eps))
        fits[repr(float(eps))] = float(max(need.max(), 0.0))
    return {
        "side": side,
        "normalization": float(weights @ vals**pm),
        "lhs": lhs,
        "gradient_norm": float(G),
        "fitted_constant": fits,
        "finite": bool(all(math.isfinite(v) for v in fits.values())),
    }


# -- time step convergence ---------------------------------------------------


def tau_convergence(
    energy: WentzellEnergy, u0: PairFunction, horizon: float, tau: float, levels: int = 4
) -> dict:
    """Run at ``tau, tau/2, ...`` and report successive sup-norm increments."""
    finals = [evolve(energy, u0, horizon, FlowConfig(tau=tau / 2**k)).final for k in range(levels)]
    inc = [sup_pair_norm(finals[k] - finals[k + 1]) for k in range(levels - 1)]
    ratios = [inc[k] / inc[k + 1] if inc[k + 1] > 0 else math.inf for k in range(len(inc) - 1)]
    return {"tau": tau, "increments": inc, "ratios": ratios}
