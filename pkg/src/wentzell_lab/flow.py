"""Implicit-Euler (proximal) evolution of the Wentzell gradient flow.

Each step solves

    min_v  (1 / 2 tau) ||v - u_n||_{X^2}^2 + Phi(v)

over conforming pairs with a damped Newton method.  The objective is smooth
and strictly convex, so Newton with an Armijo backtracking on the objective
converges from the previous state; a diagonally preconditioned gradient step
is used when a Newton direction fails to make progress.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import WentzellEnergy
from .varexp import PairFunction, sup_pair_norm

__all__ = [
    "FlowConfig",
    "StepInfo",
    "Trajectory",
    "SolverError",
    "x2_inner",
    "x2_norm",
    "proximal_step",
    "evolve",
    "write_trajectory_csv",
    "write_snapshots",
]

logger = logging.getLogger(__name__)

_ROUNDOFF_SCALE = 1e-4


class SolverError(RuntimeError):
    """The inner minimization did not reach its tolerance."""

    def __init__(self, message: str, info: "StepInfo | None" = None, step: int | None = None):
        super().__init__(message)
        self.info = info
        self.step = step


@dataclass(frozen=True)
class FlowConfig:
    tau: float
    gtol: float = 1e-10
    max_iter: int = 200
    eps_reg: float = 1e-8

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.gtol > 0:
            raise ValueError(f"gtol must be positive, got {self.gtol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class StepInfo:
    iterations: int = 0
    newton_steps: int = 0
    gradient_steps: int = 0
    residual: float = 0.0
    tolerance: float = 0.0
    objective_start: float = 0.0
    objective_end: float = 0.0


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[PairFunction] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    diagnostics: list[StepInfo] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> PairFunction:
        return self.states[-1]


def x2_inner(energy: WentzellEnergy, a: PairFunction, b: PairFunction) -> float:
    """``int_Omega u v dx + int_Gamma u|_Gamma v|_Gamma dsigma``."""
    return energy.x2_inner(a, b)


def x2_norm(energy: WentzellEnergy, a: PairFunction) -> float:
    return float(np.sqrt(max(x2_inner(energy, a, a), 0.0)))


def _armijo(f, x, fx, direction, slope, max_halvings=60):
    t = 1.0
    for _ in range(max_halvings):
        trial = x + t * direction
        ft = f(trial)
        if ft <= fx + 1e-4 * t * slope:
            return trial, ft
        t *= 0.5
    return None, fx


def proximal_step(
    energy: WentzellEnergy, un: PairFunction, cfg: FlowConfig
) -> tuple[PairFunction, StepInfo]:
    """One backward-Euler step from ``un``.

    The returned state has objective gradient X^2-norm below
    ``cfg.gtol * max(||grad F(u_n)||, 1e-4 ||u_n|| / tau)``; the second term
    keeps the target above roundoff of the proximal term.  Raises
    :class:`SolverError` otherwise.
    """
    domain = energy.domain
    if not un.is_conforming(domain):
        raise ValueError("proximal_step needs a conforming pair")
    m = energy.mass
    tau = cfg.tau
    u0 = un.u

    def objective(v):
        d = v - u0
        return 0.5 / tau * float(m @ (d * d)) + energy.nodal_energy(v)

    def gradient(v):
        return m * (v - u0) / tau + energy.euclidean_gradient(v)

    def riesz_norm(g):
        return float(np.sqrt(g @ (g / m)))

    v = u0.copy()
    fv = objective(v)
    g = gradient(v)
    res = riesz_norm(g)
    info = StepInfo(residual=res, objective_start=fv, objective_end=fv)
    scale = max(res, _ROUNDOFF_SCALE * float(np.sqrt(m @ (u0 * u0))) / tau)
    info.tolerance = tol = cfg.gtol * scale

    while res > tol:
        if info.iterations >= cfg.max_iter:
            raise SolverError(
                f"inner solver stopped after {info.iterations} iterations "
                f"(residual {res:.3e} > {tol:.3e})",
                info,
            )
        info.iterations += 1
        H = energy.hessian(v) + sp.diags(m / tau)
        try:
            direction = -spla.spsolve(H.tocsc(), g)
        except RuntimeError:  # singular factorization
            direction = np.full_like(v, np.nan)
        slope = float(g @ direction)
        new = None
        if np.all(np.isfinite(direction)) and slope < 0:
            # near the minimizer objective changes drown in roundoff, so the
            # full step is also accepted when it halves the residual
            trial = v + direction
            ftrial = objective(trial)
            if ftrial <= fv + 1e-4 * slope or riesz_norm(gradient(trial)) <= 0.5 * res:
                new, fnew = trial, ftrial
            else:
                new, fnew = _armijo(objective, v, fv, direction, slope)
            if new is not None:
                info.newton_steps += 1
        if new is None:
            precond = 1.0 / H.diagonal()
            direction = -precond * g
            new, fnew = _armijo(objective, v, fv, direction, float(g @ direction))
            if new is None:
                raise SolverError(
                    f"line search stalled at residual {res:.3e} (tolerance {tol:.3e})", info
                )
            info.gradient_steps += 1
        v, fv = new, fnew
        g = gradient(v)
        res = riesz_norm(g)

    info.residual = res
    info.objective_end = fv
    return PairFunction.from_nodal(domain, v), info


def evolve(
    energy: WentzellEnergy,
    u0: PairFunction,
    horizon: float,
    cfg: FlowConfig,
) -> Trajectory:
    """Iterate :func:`proximal_step` from ``u0`` up to ``horizon``.

    The number of steps is ``round(horizon / tau)`` (at least one).
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    n_steps = max(1, int(round(horizon / cfg.tau)))
    traj = Trajectory()
    if not u0.is_conforming(energy.domain):
        raise ValueError("initial pair is not conforming")
    state = u0
    traj.times.append(0.0)
    traj.states.append(state)
    traj.energies.append(energy.total_energy(state))
    for n in range(1, n_steps + 1):
        try:
            state, info = proximal_step(energy, state, cfg)
        except SolverError as exc:
            exc.step = n
            raise SolverError(f"step {n}: {exc}", exc.info, n) from exc
        traj.times.append(n * cfg.tau)
        traj.states.append(state)
        traj.energies.append(energy.total_energy(state))
        traj.diagnostics.append(info)
        logger.debug("step %d: %d iterations, residual %.2e", n, info.iterations, info.residual)
    return traj


def write_trajectory_csv(energy: WentzellEnergy, traj: Trajectory, path: str | Path) -> None:
    """Columns ``t, energy, x2_norm, sup_norm`` with a header row."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "energy", "x2_norm", "sup_norm"])
        for t, state, e in zip(traj.times, traj.states, traj.energies):
            writer.writerow(
                [repr(float(t)), repr(float(e)), repr(x2_norm(energy, state)), repr(sup_pair_norm(state))]
            )
    tmp.replace(path)


def write_snapshots(traj: Trajectory, directory: str | Path, stride: int = 1) -> list[Path]:
    """Write nodal states as text files ``state_<step>.txt`` (grid node order)."""
    if stride < 1:
        raise ValueError("stride must be positive")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for n in range(0, len(traj), stride):
        path = directory / f"state_{n:06d}.txt"
        tmp = path.with_name(path.name + ".tmp")
        np.savetxt(tmp, traj.states[n].u, fmt="%.17g", header=f"t = {traj.times[n]!r}")
        tmp.replace(path)
        written.append(path)
    return written
