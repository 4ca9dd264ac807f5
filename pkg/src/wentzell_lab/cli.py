"""Command line entry point: ``wentzell-lab {run,constants,verify,sweep}``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constants as K
from . import verify as V
from .config import Config, ConfigError, load_config, parse_config
from .energy import CoefficientField, WentzellEnergy
from .expr import ExpressionError, evaluate
from .flow import FlowConfig, SolverError, evolve, write_snapshots, write_trajectory_csv
from .grid import BoundaryAtlas, BoxDomain, build_grid
from .varexp import ExponentField, PairFunction, VectorExponent

__all__ = ["main", "Problem", "build_problem", "CHECKS", "run_checks"]

logger = logging.getLogger("wentzell_lab")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

CHECKS = (
    "energy",
    "order",
    "nonexpansive",
    "submarkovian",
    "dissipation",
    "accretive",
    "ultracontractivity",
    "logsobolev",
    "tau",
)
DEFAULT_CHECKS = CHECKS


# -- problem assembly --------------------------------------------------------


@dataclass
class Problem:
    domain: BoxDomain
    atlas: BoundaryAtlas
    energy: WentzellEnergy
    flow: FlowConfig
    horizon: float
    u0: PairFunction
    v0: PairFunction
    seed: int


def _field(cfg: Config, section: str, key: str, default, coords) -> np.ndarray:
    text = cfg.get(section, key, default)
    try:
        return evaluate(text, coords)
    except ExpressionError as exc:
        raise cfg.error(section, key, str(exc)) from None


def _grid(cfg: Config) -> tuple[BoxDomain, BoundaryAtlas]:
    dim = cfg.get("grid", "dimension", 2)
    lengths = cfg.get("grid", "side_lengths", [1.0])
    res = cfg.get("grid", "resolution", [17.0])
    if any(r != int(r) for r in res):
        raise cfg.error("grid", "resolution", "must be integers")
    for key, vals in (("side_lengths", lengths), ("resolution", res)):
        if len(vals) not in (1, dim):
            raise cfg.error("grid", key, f"give 1 or {dim} values")
    try:
        return build_grid(dim, lengths if len(lengths) > 1 else lengths[0], [int(r) for r in res] if len(res) > 1 else int(res[0]))
    except ValueError as exc:
        key = "dimension" if "dimension" in str(exc) else "resolution"
        raise cfg.error("grid", key, str(exc)) from None


def build_problem(cfg: Config, tau: float | None = None, seed: int | None = None) -> Problem:
    domain, atlas = _grid(cfg)
    N = domain.dimension
    X, Xb = domain.coordinates, atlas.coordinates
    for key in ("p3", "q2") if N == 2 else ():
        if cfg.has("exponents", key):
            raise cfg.error("exponents", key, f"not used in dimension {N}")
    p_default = cfg.get("exponents", "p", "2")
    q_default = cfg.get("exponents", "q", p_default)
    ps, qs = [], []
    for i in range(N):
        key = f"p{i + 1}"
        try:
            ps.append(ExponentField(_field(cfg, "exponents", key if cfg.has("exponents", key) else "p", p_default, X)))
        except ValueError as exc:
            raise cfg.error("exponents", key if cfg.has("exponents", key) else "p", str(exc)) from None
    for j in range(N - 1):
        key = f"q{j + 1}"
        try:
            qs.append(ExponentField(_field(cfg, "exponents", key if cfg.has("exponents", key) else "q", q_default, Xb)))
        except ValueError as exc:
            raise cfg.error("exponents", key if cfg.has("exponents", key) else "q", str(exc)) from None
    try:
        exponents = VectorExponent(tuple(ps), tuple(qs))
    except ValueError as exc:
        raise cfg.error("exponents", "p", str(exc)) from None
    try:
        coeffs = CoefficientField(
            _field(cfg, "coefficients", "alpha", "1", X), _field(cfg, "coefficients", "beta", "1", Xb)
        )
    except ValueError as exc:
        raise cfg.error("coefficients", "alpha", str(exc)) from None
    try:
        flow = FlowConfig(
            tau=cfg.get("flow", "tau", 1e-3) if tau is None else tau,
            gtol=cfg.get("flow", "gtol", 1e-10),
            max_iter=cfg.get("flow", "max_iter", 200),
            eps_reg=cfg.get("flow", "eps_reg", 1e-8),
        )
        energy = WentzellEnergy(domain, atlas, exponents, coeffs, eps_reg=flow.eps_reg)
    except ValueError as exc:
        raise ConfigError(f"[flow] {exc}", None, cfg.source) from None
    horizon = cfg.get("flow", "horizon", 0.05)
    if not horizon > 0:
        raise cfg.error("flow", "horizon", "must be positive")
    u0 = PairFunction.from_nodal(domain, _field(cfg, "initial", "u0", "0", X))
    v0 = PairFunction.from_nodal(domain, _field(cfg, "initial", "v0", "0", X))
    seed = cfg.get("run", "seed", 0) if seed is None else seed
    return Problem(domain, atlas, energy, flow, float(horizon), u0, v0, int(seed))


# -- output ------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_json(path: Path, data) -> None:
    _write_text(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list[dict]) -> None:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write_text(path, buf.getvalue())


# -- constants ---------------------------------------------------------------

_BRANCH_KEYS = ("a", "b", "c", "p", "q", "d1", "d2")


def _unknowns(cfg: Config) -> K.UnknownConstants:
    try:
        return K.UnknownConstants(**cfg.section("unknowns"))
    except ValueError as exc:
        raise ConfigError(f"[unknowns] {exc}", None, cfg.source) from None


def _branch_inputs(cfg: Config, args) -> K.BranchInputs:
    vals = {k: cfg.get("constants", k) for k in _BRANCH_KEYS}
    for k in _BRANCH_KEYS:
        flag = getattr(args, k, None)
        if flag is not None:
            vals[k] = flag
    missing = [k for k, v in vals.items() if v is None]
    if missing:
        raise ConfigError(f"[constants] missing {', '.join(missing)}", None, cfg.source)
    try:
        return K.BranchInputs(**{k: float(v) for k, v in vals.items()})
    except ValueError as exc:
        raise ConfigError(f"[constants] {exc}", None, cfg.source) from None


def _sweep_rows(spec: dict, cfg: Config) -> list[dict]:
    if not spec:
        raise ConfigError("no [sweep] section given", None, cfg.source)
    try:
        return K.sweep(spec, _unknowns(cfg), cfg.get("constants", "c_omega", 1.0))
    except ValueError as exc:
        raise ConfigError(f"[sweep] {exc}", None, cfg.source) from None


def _sweep_spec(args, cfg: Config) -> dict:
    if args.sweep_spec:
        spec_cfg = load_config(args.sweep_spec)
        return spec_cfg.section("sweep")
    return cfg.section("sweep")


def cmd_constants(args, cfg: Config) -> int:
    inp = _branch_inputs(cfg, args)
    diag = bool(cfg.get("constants", "diagnostics", 1))
    c_omega = cfg.get("constants", "c_omega", 1.0)
    if not c_omega > 0:
        raise cfg.error("constants", "c_omega", "must be positive")
    bundle = K.compute_bundle(inp, _unknowns(cfg), c_omega, diagnostics=diag)
    out = Path(args.out_dir)
    report = bundle.to_dict()
    report["quadrature_tolerance"] = K.QUAD_TOL
    _write_json(out / "constants.json", report)
    if args.sweep_spec or cfg.sections.get("sweep"):
        _write_csv(out / "sweep.csv", _sweep_rows(_sweep_spec(args, cfg), cfg))
    print(
        f"k1={bundle.k.k1:.12g} k4={bundle.k.k4:.12g} gamma={bundle.params['gamma']:.12g} "
        f"-> {out / 'constants.json'}"
    )
    return EXIT_OK


def cmd_sweep(args, cfg: Config) -> int:
    rows = _sweep_rows(_sweep_spec(args, cfg), cfg)
    out = Path(args.out_dir)
    _write_csv(out / "sweep.csv", rows)
    print(f"{len(rows)} rows -> {out / 'sweep.csv'}")
    return EXIT_OK


# -- run ---------------------------------------------------------------------


def cmd_run(args, cfg: Config) -> int:
    prob = build_problem(cfg, args.tau, args.seed)
    stride = cfg.get("output", "snapshot_stride", 0)
    if stride < 0:
        raise cfg.error("output", "snapshot_stride", "must be >= 0")
    traj = evolve(prob.energy, prob.u0, prob.horizon, prob.flow)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(prob.energy, traj, out / cfg.get("output", "trajectory", "trajectory.csv"))
    if stride:
        write_snapshots(traj, out / cfg.get("output", "snapshots", "snapshots"), stride)
    measure = K.total_measure(prob.domain, prob.atlas)
    _write_json(
        out / "run.json",
        {
            "grid": list(prob.domain.shape),
            "tau": prob.flow.tau,
            "horizon": prob.horizon,
            "steps": len(traj) - 1,
            "solver_tolerance": prob.flow.gtol,
            "max_residual": max((d.residual for d in traj.diagnostics), default=0.0),
            "max_inner_iterations": max((d.iterations for d in traj.diagnostics), default=0),
            "total_measure": measure,
            "unit_measure": abs(measure - 1.0) <= 1e-12,
            "final_energy": traj.energies[-1],
        },
    )
    print(f"{len(traj) - 1} steps, final energy {traj.energies[-1]:.6e} -> {out}")
    return EXIT_OK


# -- verify ------------------------------------------------------------------


def _pairs(prob: Problem, index: int, count: int, ordered: bool = False):
    rng = np.random.default_rng([prob.seed, index])
    return [V.random_pair(prob.domain, rng, ordered) for _ in range(count)]


def _merge(name: str, reports: list[V.VerificationReport], tol: float, meta: dict) -> V.VerificationReport:
    residuals = [r for rep in reports for r in rep.residuals]
    worst = max([0.0, *(rep.worst for rep in reports)])
    details = {"per_sample_worst": [rep.worst for rep in reports]}
    return V.VerificationReport(name, residuals, worst, tol, meta, details)


def _r_fields(prob: Problem, cfg: Config):
    out = []
    for text in cfg.get("verify", "r", ["2"]):
        r = evaluate(text, prob.domain.coordinates)
        if r.min() < 1:
            raise cfg.error("verify", "r", f"exponent {text!r} drops below 1")
        out.append((text, ExponentField(r), ExponentField(r[prob.domain.boundary_nodes])))
    return out


def _run_check(name: str, index: int, prob: Problem, cfg: Config, tol_override) -> V.VerificationReport:
    E, fc = prob.energy, prob.flow
    n = cfg.get("verify", "pairs", 2)
    horizon = cfg.get("verify", "horizon", prob.horizon)
    meta = {
        "shape": list(prob.domain.shape),
        "tau": fc.tau,
        "horizon": horizon,
        "pairs": n,
        "seed": prob.seed,
    }
    tol_step = 1e-9 + V.TAU_ALLOWANCE * fc.tau

    def pick(default):
        return default if tol_override is None else tol_override

    if name == "energy":
        reps = [V.check_energy_dissipation(E, u, horizon, fc) for u, _ in _pairs(prob, index, n)]
        return _merge(name, reps, pick(1e-10), meta)
    if name == "order":
        reps = [V.check_order_preserving(E, u, v, horizon, fc) for u, v in _pairs(prob, index, n, True)]
        return _merge(name, reps, pick(tol_step), meta)
    if name == "submarkovian":
        reps = [V.check_submarkovian(E, u, v, horizon, fc) for u, v in _pairs(prob, index, n)]
        return _merge(name, reps, pick(tol_step), meta)
    if name == "nonexpansive":
        reps = []
        for u, v in _pairs(prob, index, n):
            for _, r, s in _r_fields(prob, cfg):
                reps.append(V.check_nonexpansive(E, u, v, r, s, horizon, fc))
        meta["r"] = cfg.get("verify", "r", ["2"])
        return _merge(name, reps, pick(1e-6 + V.TAU_ALLOWANCE * fc.tau), meta)
    if name == "dissipation":
        rs = [f.values[0] for _, f, _ in _r_fields(prob, cfg) if f.minimum == f.maximum and f.minimum >= 2]
        reps = [V.check_dissipation(E, u, v, r, horizon, fc) for u, v in _pairs(prob, index, n) for r in rs]
        meta["r"] = rs
        return _merge(name, reps, pick(tol_step), meta)
    if name == "accretive":
        reps = [V.check_sup_accretive(E, u, v) for u, v in _pairs(prob, index, n)]
        return _merge(name, reps, pick(1e-9), meta)
    if name == "ultracontractivity":
        return _ultra(prob, cfg, index, meta, pick)
    if name == "logsobolev":
        rng = np.random.default_rng([prob.seed, index])
        res, details = [], []
        for _ in range(n):
            u = 1.0 + V.random_smooth_field(prob.domain, rng)
            for side, exps in (("omega", E.exponents.p), ("gamma", E.exponents.q)):
                out = V.check_logsobolev(prob.domain, prob.atlas, u, exps, side)
                res.append(0.0 if out["finite"] else math.inf)
                details.append(out)
        return V.VerificationReport(name, res, max([0.0, *res]), pick(0.0), meta, {"fits": details})
    if name == "tau":
        rng = np.random.default_rng([prob.seed, index])
        res, details = [], []
        for _ in range(n):
            u = PairFunction.from_nodal(prob.domain, V.random_smooth_field(prob.domain, rng))
            out = V.tau_convergence(E, u, horizon, fc.tau)
            res.extend(abs(r - 2.0) for r in out["ratios"])
            details.append(out)
        return V.VerificationReport(name, res, max([0.0, *res]), pick(0.4), meta, {"runs": details})
    raise AssertionError(name)


def _ultra(prob: Problem, cfg: Config, index: int, meta: dict, pick) -> V.VerificationReport:
    E = prob.energy
    if E.exponents.min_exponent < 2:
        raise ConfigError("ultracontractivity needs exponents >= 2", None, cfg.source)
    (u, v), = _pairs(prob, index, 1)
    times = cfg.get("verify", "times", [0.005, 0.01, 0.02, 0.04, 0.08])
    scales = cfg.get("verify", "scales", [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125])
    lipschitz = E.exponents.p_max.maximum == 2.0 and E.exponents.q_max.maximum == 2.0
    bundle = None
    if not lipschitz and E.exponents.min_exponent > 2:
        inp = K.derive_branches(u - v, E.exponents, 2.0, 2.0, prob.domain, prob.atlas)
        bundle = K.compute_bundle(inp, _unknowns(cfg), diagnostics=False)
    out = V.fit_ultracontractivity(
        E, u, v, times, prob.flow, bundle, scales=scales, t_star=cfg.get("verify", "t_star", None)
    )
    slope, kappa = out["scaling"]["slope"], out["fit"]["kappa"]
    if lipschitz:
        res, tol = [abs(slope - 1.0)], pick(0.1)
    else:
        res, tol = [slope - 1.0, -kappa], pick(0.0)
    meta["regime"] = "lipschitz" if lipschitz else "holder"
    return V.VerificationReport("ultracontractivity", res, max([0.0, *res]), tol, meta, out)


def _threads() -> int:
    raw = os.environ.get("WENTZELL_LAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"WENTZELL_LAB_THREADS must be a positive integer, got {raw!r}", None, "environment") from None
    if n < 1:
        raise ConfigError("WENTZELL_LAB_THREADS must be a positive integer", None, "environment")
    return n


def run_checks(prob: Problem, cfg: Config, names: list[str], workers: int = 1):
    tol = cfg.get("verify", "tol", None)
    jobs = [(name, CHECKS.index(name)) for name in names]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_run_check, name, i, prob, cfg, tol) for name, i in jobs]
            return [f.result() for f in futures]
    return [_run_check(name, i, prob, cfg, tol) for name, i in jobs]


def _check_names(args, cfg: Config) -> list[str]:
    if args.checks is not None:
        names = [c.strip() for c in args.checks.split(",") if c.strip()]
    else:
        names = list(cfg.get("verify", "checks", list(DEFAULT_CHECKS)))
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)} (known: {', '.join(CHECKS)})", None, cfg.source)
    return names


def cmd_verify(args, cfg: Config) -> int:
    names = _check_names(args, cfg)
    prob = build_problem(cfg, args.tau, args.seed) if names else None
    reports = run_checks(prob, cfg, names, _threads()) if names else []
    out = Path(args.out_dir)
    for rep in reports:
        _write_json(out / f"check_{rep.name}.json", rep.to_dict())
    summary = [
        {"check": r.name, "passed": r.passed, "worst": r.worst, "tolerance": r.tolerance} for r in reports
    ]
    _write_json(out / "summary.json", {"checks": summary, "all_passed": all(r.passed for r in reports)})
    lines = [f"{'check':<20} {'result':<6} {'worst':>12} {'tolerance':>12}"]
    for r in reports:
        lines.append(f"{r.name:<20} {'pass' if r.passed else 'FAIL':<6} {r.worst:>12.3e} {r.tolerance:>12.3e}")
    table = "\n".join(lines) + "\n"
    _write_text(out / "summary.txt", table)
    sys.stdout.write(table)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


# -- entry -------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wentzell-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="configuration file")
        p.add_argument("--out-dir", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--tau", type=float, default=None, help="override [flow] tau")

    common(sub.add_parser("run", help="evolve u0 and write the trajectory"))
    pc = sub.add_parser("constants", help="compute the ultracontractivity constants")
    common(pc, config_required=False)
    for k in _BRANCH_KEYS:
        pc.add_argument(f"--{k}", type=float, default=None, help=f"override [constants] {k}")
    pc.add_argument("--sweep-spec", default=None, help="file with a [sweep] section")
    pv = sub.add_parser("verify", help="run property checks")
    common(pv)
    pv.add_argument("--checks", default=None, help=f"comma separated subset of: {', '.join(CHECKS)}")
    ps = sub.add_parser("sweep", help="tabulate constants over a parameter grid")
    common(ps, config_required=False)
    ps.add_argument("--sweep-spec", default=None, help="file with a [sweep] section")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.tau is not None and not args.tau > 0:
        print("error: --tau must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else parse_config("schema_version = 1\n", "flags")
        handler = {"run": cmd_run, "constants": cmd_constants, "verify": cmd_verify, "sweep": cmd_sweep}
        return handler[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, K.QuadratureError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
