"""Ultracontractivity constants: the I/J integrals, k1..k6, kappa and gamma.

Notation: ``a = min(r^-, s^-)``, ``b``/``c`` are the chosen branches of
``p_m``/``q_m`` entering ``P``, ``p``/``q`` the branches entering both ``P``
and ``Q``, and ``d1 = p_M^+``, ``d2 = q_M^+``.  With

    base_p(x) = 1 - (p - 2) x / (a + p - 2),   e_p = (b - 2) p / (p - 2)

(and the ``q`` analogues) the integrals are over ``[0, 1]``.  Two variants of
the I integrals are kept:

* ``"stated"``: the weights ``base_p^{e_p - 1} base_q^{e_q}`` as written in
  the source formulas;
* ``"derived"``: the weights obtained by substituting ``tau = t x`` into
  ``int_0^t Q(tau) exp(int_0^tau P) d tau``, which gives
  ``base_p^{-e_p - 1} base_q^{-e_q}`` and an extra ``(a + p - 2)^{d1 - 1}``
  in the ``k2`` denominator.

Both coincide when ``b = c = 2``.  :func:`direct_limits` integrates ``P`` and
``Q`` directly so the two can be compared against the real limit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sci_integrate
from scipy import special

from .grid import BoundaryAtlas, BoxDomain
from .varexp import PairFunction, VectorExponent, luxemburg_norm

__all__ = [
    "BranchInputs",
    "UnknownConstants",
    "QuadResult",
    "QuadratureError",
    "KConstants",
    "ConstantBundle",
    "eval_P",
    "eval_Q",
    "integral_P",
    "adaptive_simpson",
    "gauss_legendre",
    "integral_I",
    "integral_J",
    "j_closed_forms",
    "gamma_factor",
    "constants_k",
    "ultracontractivity_params",
    "direct_limits",
    "compute_bundle",
    "derive_branches",
    "total_measure",
    "sweep",
]

QUAD_TOL = 1e-10
SIMPSON_TOL = 1e-11
DYADIC_LEVELS = 50
VARIANTS = ("stated", "derived")


class QuadratureError(RuntimeError):
    """Quadrature did not reach its error target."""


@dataclass(frozen=True)
class BranchInputs:
    a: float
    b: float
    c: float
    p: float
    q: float
    d1: float
    d2: float

    def __post_init__(self) -> None:
        vals = asdict(self)
        bad = [k for k, v in vals.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite branch inputs: {', '.join(bad)}")
        if self.a < 2:
            raise ValueError(f"need a >= 2, got {self.a}")
        if self.p <= 2 or self.q <= 2:
            raise ValueError("need p > 2 and q > 2")
        if self.b < 2 or self.c < 2:
            raise ValueError("need b >= 2 and c >= 2")
        if self.d1 < self.p or self.d2 < self.q:
            raise ValueError("need d1 >= p and d2 >= q")

    @property
    def e_p(self) -> float:
        return (self.b - 2.0) * self.p / (self.p - 2.0)

    @property
    def e_q(self) -> float:
        return (self.c - 2.0) * self.q / (self.q - 2.0)

    @property
    def lipschitz(self) -> bool:
        return self.b == 2.0 and self.c == 2.0

    def side(self, side: str) -> tuple[float, float]:
        """``(p, d1)`` or ``(q, d2)``."""
        if side == "p":
            return self.p, self.d1
        if side == "q":
            return self.q, self.d2
        raise ValueError(f"side must be 'p' or 'q', got {side!r}")


@dataclass(frozen=True)
class UnknownConstants:
    """Existence-only constants, supplied by the user (default 1)."""

    c_star_p: float = 1.0
    c_star_q: float = 1.0
    c_eps_p: float = 1.0
    c_eps_q: float = 1.0
    kappa_p: float = 1.0
    kappa_q: float = 1.0
    g_p: float = 1.0
    g_q: float = 1.0
    c1: float = 1.0

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{k} must be positive and finite, got {v}")
        if self.kappa_p < 1 or self.kappa_q < 1:
            raise ValueError("kappa_p and kappa_q must be >= 1")

    def side(self, side: str) -> tuple[float, float, float]:
        """``(c_star, c_eps, kappa)`` for one side."""
        if side == "p":
            return self.c_star_p, self.c_eps_p, self.kappa_p
        return self.c_star_q, self.c_eps_q, self.kappa_q


# -- P and Q ---------------------------------------------------------------


def _check_xi(xi: float, t: float) -> None:
    if not t > 0:
        raise ValueError("t must be positive")
    if not 0 <= xi < t:
        raise ValueError(f"need 0 <= xi < t, got xi={xi}, t={t}")


def eval_P(xi: float, t: float, inp: BranchInputs) -> float:
    _check_xi(xi, t)
    a, p, q = inp.a, inp.p, inp.q
    return (inp.b - 2) * p / ((a + p - 2) * t - (p - 2) * xi) + (inp.c - 2) * q / (
        (a + q - 2) * t - (q - 2) * xi
    )


def integral_P(xi: float, t: float, inp: BranchInputs) -> float:
    """Closed form of ``int_0^xi P``."""
    _check_xi(xi, t)
    a, p, q = inp.a, inp.p, inp.q
    dp0, dq0 = (a + p - 2) * t, (a + q - 2) * t
    return inp.e_p * math.log(dp0 / (dp0 - (p - 2) * xi)) + inp.e_q * math.log(
        dq0 / (dq0 - (q - 2) * xi)
    )


def _q_side(xi, t, a, p, d, c_star, c_eps, kappa):
    D = (a + p - 2) * t - (p - 2) * xi
    arg = c_star * p ** (d - 1) * (a * t - xi) * (t - xi) ** (d - 1) / (c_eps * D ** (d - 1))
    assert arg > 0, "log argument must be positive"
    log_term = p / D * math.log(arg)
    ratio = p * (a * t - xi) ** (1 / d) * (t - xi) ** ((d - 1) / d) / D
    return log_term - 2 * c_star * kappa * ratio**d


def eval_Q(xi: float, t: float, inp: BranchInputs, unk: UnknownConstants) -> float:
    _check_xi(xi, t)
    total = 0.0
    for side in ("p", "q"):
        p, d = inp.side(side)
        total += _q_side(xi, t, inp.a, p, d, *unk.side(side))
    return total


# -- quadrature ------------------------------------------------------------


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float


def adaptive_simpson(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    tol: float = SIMPSON_TOL,
    max_depth: int = 40,
) -> QuadResult:
    """Adaptive Simpson with Richardson correction, refined level by level.

    An interval is accepted when ``|S_2 - S_1| <= 15 tol_i``; children
    inherit half the tolerance.  ``f`` must accept arrays.
    """
    a = np.array([lo], dtype=float)
    b = np.array([hi], dtype=float)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    tols = np.array([tol])
    value = 0.0
    error = 0.0
    for depth in range(max_depth + 1):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15 * tols
        if depth == max_depth:
            done[:] = True
        value += float(np.sum((left + right + delta / 15)[done]))
        error += float(np.sum(np.abs(delta[done]) / 15))
        keep = ~done
        if not keep.any():
            break
        a, b, m = (
            np.concatenate([a[keep], m[keep]]),
            np.concatenate([m[keep], b[keep]]),
            np.concatenate([lm[keep], rm[keep]]),
        )
        fa, fb, fm = (
            np.concatenate([fa[keep], fm[keep]]),
            np.concatenate([fm[keep], fb[keep]]),
            np.concatenate([flm[keep], frm[keep]]),
        )
        whole = np.concatenate([left[keep], right[keep]])
        tols = np.concatenate([tols[keep], tols[keep]]) / 2
    return QuadResult(value, error)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


def gauss_legendre(
    f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, pieces: int = 4
) -> QuadResult:
    """Composite 20-point Gauss-Legendre; error from comparison with 2x pieces."""

    def rule(n):
        edges = np.linspace(lo, hi, n + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        return float(np.sum(half[:, None] * _GL_WEIGHTS[None, :] * f(x)))

    coarse, fine = rule(pieces), rule(2 * pieces)
    return QuadResult(fine, abs(fine - coarse))


def _integrate(smooth, singular: bool, scheme: str, tol: float = QUAD_TOL) -> QuadResult:
    """``int_0^1 smooth(x) [log(1 - x)] dx`` with the log factor iff ``singular``.

    Singular integrals are split at ``x = 1 - 2^-k`` for ``k <= 50``; the
    remaining sliver uses ``smooth(1) * int log(1 - x)`` in closed form.
    """
    if scheme == "simpson":
        rule = adaptive_simpson
    elif scheme == "gauss":
        rule = gauss_legendre
    else:
        raise ValueError(f"unknown quadrature scheme {scheme!r}")
    if not singular:
        res = rule(smooth, 0.0, 1.0)
    else:

        def f(x):
            return smooth(x) * np.log1p(-x)

        value = error = 0.0
        for k in range(DYADIC_LEVELS):
            lo, hi = 1.0 - 2.0**-k, 1.0 - 2.0 ** -(k + 1)
            # the error budget is shared across the dyadic pieces
            part = rule(f, lo, hi, SIMPSON_TOL / 10) if scheme == "simpson" else rule(f, lo, hi)
            value += part.value
            error += part.error
        h = 2.0**-DYADIC_LEVELS
        s1 = float(smooth(np.array([1.0]))[0])
        tail = s1 * h * (math.log(h) - 1.0)
        # smooth(x) - smooth(1) = O(h) on the sliver
        value += tail
        error += abs(tail) * h + 1e-300
        res = QuadResult(value, error)
    if not (math.isfinite(res.value) and res.error <= tol):
        raise QuadratureError(f"quadrature error {res.error:.2e} exceeds {tol:.0e}")
    return res


def _sign(variant: str) -> float:
    if variant == "stated":
        return 1.0
    if variant == "derived":
        return -1.0
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _i_integrand(index: int, side: str, inp: BranchInputs, variant: str):
    a, p, q = inp.a, inp.p, inp.q
    sgn = _sign(variant)
    ep, eq = sgn * inp.e_p, sgn * inp.e_q

    def base_p(x):
        return 1 - (p - 2) * x / (a + p - 2)

    def base_q(x):
        return 1 - (q - 2) * x / (a + q - 2)

    own_exp, other_exp = (ep, eq) if side == "p" else (eq, ep)
    own, other = (base_p, base_q) if side == "p" else (base_q, base_p)
    r, d = inp.side(side)

    if index == 5:
        def f(x):
            return (a - x) * (1 - x) ** (d - 1) * own(x) ** (own_exp - d) * other(x) ** other_exp

        return f, False

    def weight(x):
        return own(x) ** (own_exp - 1) * other(x) ** other_exp

    if index == 1:
        return weight, False
    if index == 2:
        return weight, True
    if index == 3:
        return (lambda x: weight(x) * np.log(a + (r - 2) * (1 - x))), False
    if index == 4:
        return (lambda x: weight(x) * np.log(a - x)), False
    raise ValueError(f"index must be in 1..5, got {index}")


def _j_integrand(index: int, side: str, inp: BranchInputs):
    a = inp.a
    r, d = inp.side(side)

    def L(x):
        return a + (r - 2) * (1 - x)

    if index == 1:
        return (lambda x: 1 / L(x)), False
    if index == 2:
        return (lambda x: np.log(L(x)) / L(x)), False
    if index == 3:
        return (lambda x: 1 / L(x)), True
    if index == 4:
        return (lambda x: np.log(a - x) / L(x)), False
    if index == 5:
        return (lambda x: (a - x) * (1 - x) ** (d - 1) / ((a + r - 2) - (r - 2) * x) ** d), False
    raise ValueError(f"index must be in 1..5, got {index}")


def integral_I(
    index: int, side: str, inp: BranchInputs, scheme: str = "simpson", variant: str = "stated"
) -> QuadResult:
    inp.side(side)
    smooth, singular = _i_integrand(index, side, inp, variant)
    return _integrate(smooth, singular, scheme)


def integral_J(index: int, side: str, inp: BranchInputs, scheme: str = "simpson") -> QuadResult:
    inp.side(side)
    smooth, singular = _j_integrand(index, side, inp)
    return _integrate(smooth, singular, scheme)


def j_closed_forms(side: str, inp: BranchInputs) -> dict[str, float]:
    """Closed forms of J1, J2 and J5 (hypergeometric form of the Gamma expression).

    ``J2_printed`` reproduces the printed q-side variant with ``(log q)^2`` in
    place of ``(log a)^2``; on the p side it equals ``J2``.
    """
    a = inp.a
    r, d = inp.side(side)
    la, lr = math.log(a), math.log(a + r - 2)
    j1 = (lr - la) / (r - 2)
    j2 = (lr**2 - la**2) / (2 * (r - 2))
    j2_printed = j2 if side == "p" else (lr**2 - math.log(r) ** 2) / (2 * (r - 2))
    z = (r - 2) / (a + r - 2)
    f1 = special.hyp2f1(1.0, d, d + 1.0, z)
    f2 = special.hyp2f1(1.0, d, d + 2.0, z)
    j5 = (a * a * (1 + d) * f1 + (a * d + r - 2) * f2 - (1 + d) * (a + r - 2)) / (
        a * d * (1 + d) * (a + r - 2) ** d
    )
    return {"J1": j1, "J2": j2, "J2_printed": j2_printed, "J5": float(j5)}


def gamma_factor(inp: BranchInputs) -> float:
    a, p, q = inp.a, inp.p, inp.q
    return (a / (a + p - 2)) ** inp.e_p * (a / (a + q - 2)) ** inp.e_q


# -- k constants -----------------------------------------------------------


@dataclass(frozen=True)
class KConstants:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.k1, self.k2, self.k3, self.k4, self.k5, self.k6)


def _table(inp: BranchInputs, scheme: str, variant: str):
    I = {
        (i, s): integral_I(i, s, inp, scheme, variant) for s in ("p", "q") for i in range(1, 6)
    }
    J = {(j, s): integral_J(j, s, inp, scheme) for s in ("p", "q") for j in range(1, 6)}
    return I, J


def _assemble(
    inp: BranchInputs, unk: UnknownConstants, I, J, variant: str, errors: bool = False
) -> KConstants:
    """k1..k6 from the tables; with ``errors`` propagate quadrature errors instead."""
    a = inp.a
    k = dict.fromkeys(range(1, 7), 0.0)
    f = abs if errors else (lambda x: x)
    for s in ("p", "q"):
        r, d = inp.side(s)
        c_star, c_eps, kappa = unk.side(s)
        pre = r / (a + r - 2)
        lg = f(math.log(c_star * r ** (d - 1) / c_eps))
        attr = "error" if errors else "value"
        i = {n: getattr(I[(n, s)], attr) for n in range(1, 6)}
        j = {n: getattr(J[(n, s)], attr) for n in range(1, 6)}
        sub = (lambda x, y: x + y) if errors else (lambda x, y: x - y)
        k2_den = (a + r - 2) if variant == "stated" else (a + r - 2) ** d
        k[1] += pre * i[1]
        k[2] += 2 * c_star * kappa * r**d / k2_den * i[5]
        k[3] += pre * (lg * i[1] + (d - 1) * sub(i[2], i[3]) + i[4])
        k[4] += r * j[1]
        k[5] += 2 * c_star * kappa * r**d * j[5]
        k[6] += r * (lg * j[1] + (d - 1) * sub(j[3], j[2]) + j[4])
    return KConstants(*(k[n] for n in range(1, 7)))


def constants_k(
    inp: BranchInputs,
    unk: UnknownConstants | None = None,
    scheme: str = "simpson",
    variant: str = "stated",
) -> KConstants:
    unk = unk or UnknownConstants()
    I, J = _table(inp, scheme, variant)
    return _assemble(inp, unk, I, J, variant)


def ultracontractivity_params(
    inp: BranchInputs,
    unk: UnknownConstants | None = None,
    c_omega: float = 1.0,
    k: KConstants | None = None,
) -> dict[str, float]:
    """``kappa, gamma, C, C'`` and, when ``b = c = 2``, ``kappa_L, C0, C0'``.

    ``C0`` and ``C0'`` take the stated forms: ``C0 = c_omega e^{k6}``
    and ``C0' = k5``.
    """
    unk = unk or UnknownConstants()
    if not c_omega > 0:
        raise ValueError("c_omega must be positive")
    k = k or constants_k(inp, unk)
    out = {
        "kappa": k.k1,
        "gamma": gamma_factor(inp),
        "C": math.exp(-k.k3) * c_omega,
        "C_prime": k.k2,
    }
    if inp.lipschitz:
        out.update(kappa_L=k.k4, C0=c_omega * math.exp(k.k6), C0_prime=k.k5)
    return out


def lipschitz_params(inp: BranchInputs, unk: UnknownConstants | None = None, c_omega: float = 1.0):
    """``(kappa_L, C0, C0')``; only defined for ``b = c = 2``."""
    if not inp.lipschitz:
        raise ValueError("the Lipschitz constants need b = c = 2")
    p = ultracontractivity_params(inp, unk, c_omega)
    return p["kappa_L"], p["C0"], p["C0_prime"]


# -- direct limits ---------------------------------------------------------


def direct_limits(
    inp: BranchInputs, unk: UnknownConstants | None = None, times=(0.5, 1.0, 2.0)
) -> dict[str, list[float]]:
    """Fit ``F(t) = A log t + B t + C`` to direct integrals of ``Q``.

    ``F`` is ``int_0^t Q exp(int_0^tau P) d tau`` (returned as
    ``[k1, k2, k3]`` with ``A = k1, B = -k2, C = k3``) and
    ``int_0^t Q d tau`` (``[k4, k5, k6]``).  Uses scipy's QUADPACK, which
    shares no code with :func:`integral_I`.
    """
    unk = unk or UnknownConstants()
    times = [float(t) for t in times]
    if len(times) != 3 or len(set(times)) != 3:
        raise ValueError("need three distinct times")

    def with_p(x, t):
        xi = t * x
        return eval_Q(xi, t, inp, unk) * math.exp(integral_P(xi, t, inp)) * t

    def plain(x, t):
        return eval_Q(t * x, t, inp, unk) * t

    rows = np.array([[math.log(t), t, 1.0] for t in times])
    out = {}
    for name, fn in (("A01", with_p), ("A02", plain)):
        vals = [
            sci_integrate.quad(fn, 0.0, 1.0, args=(t,), limit=200, epsabs=1e-13, epsrel=1e-12)[0]
            for t in times
        ]
        A, B, C = np.linalg.solve(rows, np.array(vals))
        out[name] = [float(A), float(-B), float(C)]
    return out


# -- bundle ----------------------------------------------------------------


@dataclass
class ConstantBundle:
    inputs: BranchInputs
    unknowns: UnknownConstants
    c_omega: float
    I: dict[str, float]
    J: dict[str, float]
    errors: dict[str, float]
    cross_check: dict[str, float]
    closed_forms: dict[str, float]
    k: KConstants
    k_error: KConstants
    params: dict[str, float]
    derived: dict[str, float] = field(default_factory=dict)
    direct: dict[str, list[float]] = field(default_factory=dict)
    discrepancies: list[dict] = field(default_factory=list)

    @property
    def kappa_candidates(self) -> dict[str, float]:
        g = self.params["gamma"]
        out = {"k1": self.k.k1, "gamma_k1": g * self.k.k1}
        if self.derived:
            out["gamma_k1_derived"] = self.derived["kappa"]
        return out

    def to_dict(self) -> dict:
        k = self.k
        return {
            "inputs": asdict(self.inputs),
            "unknowns": asdict(self.unknowns),
            "c_omega": self.c_omega,
            "note": (
                "C, C', k2, k3, k5, k6, C0, C0' scale with the user-supplied unknown constants; "
                "kappa, gamma, k1, k4 do not depend on them"
            ),
            "I": self.I,
            "J": self.J,
            "quadrature_error": self.errors,
            "dual_quadrature_difference": self.cross_check,
            "closed_forms": self.closed_forms,
            "k": {f"k{n}": v for n, v in enumerate(k.as_tuple(), start=1)},
            "k_error": {f"k{n}": v for n, v in enumerate(self.k_error.as_tuple(), start=1)},
            "k2_proof_sign": -k.k2,
            "params": self.params,
            "kappa_candidates": self.kappa_candidates,
            "derived": self.derived,
            "direct_limits": self.direct,
            "discrepancies": self.discrepancies,
        }


def compute_bundle(
    inp: BranchInputs,
    unk: UnknownConstants | None = None,
    c_omega: float = 1.0,
    diagnostics: bool = True,
) -> ConstantBundle:
    """Everything in one report: both quadratures, closed forms, both variants."""
    unk = unk or UnknownConstants()
    I, J = _table(inp, "simpson", "stated")
    Ig, Jg = _table(inp, "gauss", "stated")
    k = _assemble(inp, unk, I, J, "stated")
    params = ultracontractivity_params(inp, unk, c_omega, k)

    def name(kind, n, s):
        return f"{kind}{n}{s}"

    Iv = {name("I", n, s): r.value for (n, s), r in I.items()}
    Jv = {name("J", n, s): r.value for (n, s), r in J.items()}
    errors = {name("I", n, s): r.error for (n, s), r in I.items()}
    errors.update({name("J", n, s): r.error for (n, s), r in J.items()})
    cross = {name("I", n, s): abs(I[n, s].value - Ig[n, s].value) for (n, s) in I}
    cross.update({name("J", n, s): abs(J[n, s].value - Jg[n, s].value) for (n, s) in J})

    closed: dict[str, float] = {}
    discrepancies: list[dict] = []
    for s in ("p", "q"):
        cf = j_closed_forms(s, inp)
        closed[f"J1{s}"] = cf["J1"]
        closed[f"J2{s}"] = cf["J2"]
        closed[f"J5{s}"] = cf["J5"]
    cf_q = j_closed_forms("q", inp)
    closed["J2q_printed"] = cf_q["J2_printed"]
    discrepancies.append(
        {
            "item": "J2q closed form",
            "printed": cf_q["J2_printed"],
            "symmetric": cf_q["J2"],
            "quadrature": Jv["J2q"],
            "note": "printed form has (log q)^2 where the p side has (log a)^2; quadrature is used",
        }
    )
    discrepancies.append(
        {
            "item": "k2 sign",
            "stated": k.k2,
            "proof": -k.k2,
            "note": "the proof writes k2 := -2(...); the stated positive value is used",
        }
    )
    discrepancies.append(
        {
            "item": "kappa",
            "k1": k.k1,
            "gamma_k1": params["gamma"] * k.k1,
            "note": "stated kappa is k1; the limit multiplies the bracket by gamma",
        }
    )
    if inp.lipschitz:
        discrepancies.append(
            {
                "item": "Lipschitz constants",
                "C0_stated": params["C0"],
                "C0_from_limit": c_omega * math.exp(-k.k6),
                "C0_prime_stated": k.k5,
                "C0_prime_proof": -k.k5,
                "note": "e^{-L} with L -> k4 log t - k5 t + k6 gives C0 = c e^{-k6} and rate +k5 t",
            }
        )

    derived: dict[str, float] = {}
    direct: dict[str, list[float]] = {}
    if diagnostics:
        Id, _ = _table(inp, "simpson", "derived") if not inp.lipschitz else (I, J)
        kd = _assemble(inp, unk, Id, J, "derived")
        derived = {f"k{n}": v for n, v in enumerate(kd.as_tuple(), start=1)}
        derived["C"] = math.exp(-params["gamma"] * kd.k3) * c_omega
        derived["C_prime"] = params["gamma"] * kd.k2
        derived["kappa"] = params["gamma"] * kd.k1
        direct = direct_limits(inp, unk)
        discrepancies.append(
            {
                "item": "I weights",
                "stated_k1_k2_k3": [k.k1, k.k2, k.k3],
                "derived_k1_k2_k3": [kd.k1, kd.k2, kd.k3],
                "direct_k1_k2_k3": direct["A01"],
                "note": "substitution tau = t x gives base^{-e-1}, not base^{e-1}, and (a+p-2)^{d1} in k2",
            }
        )
    return ConstantBundle(
        inputs=inp,
        unknowns=unk,
        c_omega=c_omega,
        I=Iv,
        J=Jv,
        errors=errors,
        cross_check=cross,
        closed_forms=closed,
        k=k,
        k_error=_assemble(inp, unk, I, J, "stated", errors=True),
        params=params,
        derived=derived,
        direct=direct,
        discrepancies=discrepancies,
    )


# -- branches from a state -------------------------------------------------


def total_measure(domain: BoxDomain, atlas: BoundaryAtlas) -> float:
    """``|Omega| + |Gamma|``; the log-type estimates assume this equals 1."""
    return float(domain.weights.sum() + atlas.weights.sum())


def _s_functional(phi, eta, weights, norm) -> float:
    if norm == 0:
        return 0.0
    x = np.abs(phi) / norm
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(x > 0, x**eta * np.log(x), 0.0)
    return float(weights @ terms)


def derive_branches(
    w: PairFunction,
    exponents: VectorExponent,
    r: float,
    s: float,
    domain: BoxDomain,
    atlas: BoundaryAtlas,
) -> BranchInputs:
    """Branch values from a difference state ``w = u - v``.

    ``b`` (``c``) is ``p_m^-`` (``q_m^-``) when ``||w||_{r + p_m - 2}`` on the
    box (boundary) exceeds 1 and ``p_m^+`` otherwise.  ``p`` (``q``) is
    ``p_m^-`` when the S functional with exponent ``r + p_m - 2`` is
    nonpositive and ``p_m^+`` otherwise.  ``r`` and ``s`` are constants.
    """
    if not w.is_conforming(domain):
        raise ValueError("difference state must be conforming")
    pm, qm = exponents.p_min, exponents.q_min
    eta_p = r + pm.values - 2
    eta_q = r + qm.values - 2
    b = pm.minimum if luxemburg_norm(w.u, eta_p, domain.weights) > 1 else pm.maximum
    c = qm.minimum if luxemburg_norm(w.w, eta_q, atlas.weights) > 1 else qm.maximum
    # pair norm with the exponent restricted to the boundary
    eta_p_b = eta_p[domain.boundary_nodes]
    eta_q_n = np.full(domain.n_nodes, r + qm.minimum - 2)
    eta_q_n[domain.boundary_nodes] = eta_q
    norm_p = luxemburg_norm(w.u, eta_p, domain.weights) + luxemburg_norm(
        w.w, eta_p_b, atlas.weights
    )
    norm_q = luxemburg_norm(w.u, eta_q_n, domain.weights) + luxemburg_norm(
        w.w, eta_q, atlas.weights
    )
    s_p = _s_functional(w.u, eta_p, domain.weights, norm_p)
    s_q = _s_functional(w.w, eta_q, atlas.weights, norm_q)
    p = pm.minimum if s_p <= 0 else pm.maximum
    q = qm.minimum if s_q <= 0 else qm.maximum
    return BranchInputs(
        a=min(r, s),
        b=b,
        c=c,
        p=p,
        q=q,
        d1=exponents.p_max.maximum,
        d2=exponents.q_max.maximum,
    )


def sweep(
    grid: dict[str, list[float]],
    unk: UnknownConstants | None = None,
    c_omega: float = 1.0,
) -> list[dict]:
    """One row per combination of the listed input values.

    ``grid`` maps each BranchInputs field to its candidate values; ``b`` or
    ``c`` may contain the string ``"p"`` / ``"q"`` to tie it to that branch,
    and ``d1``/``d2`` likewise.  Invalid combinations are skipped.
    """
    keys = ["a", "b", "c", "p", "q", "d1", "d2"]
    missing = [k for k in keys if k not in grid]
    if missing:
        raise ValueError(f"sweep is missing values for {', '.join(missing)}")
    extra = sorted(set(grid) - set(keys))
    if extra:
        raise ValueError(f"unknown sweep keys: {', '.join(extra)}")
    rows = []
    seen = set()
    for combo in itertools.product(*(grid[k] for k in keys)):
        vals = dict(zip(keys, combo))
        for k in keys:
            if isinstance(vals[k], str):
                vals[k] = vals[vals[k]]
        vals = {k: float(v) for k, v in vals.items()}
        key = tuple(vals[k] for k in keys)
        if key in seen:
            continue
        seen.add(key)
        try:
            inp = BranchInputs(**vals)
        except ValueError:
            continue
        I, J = _table(inp, "simpson", "stated")
        kc = _assemble(inp, unk or UnknownConstants(), I, J, "stated")
        params = ultracontractivity_params(inp, unk, c_omega, kc)
        row = dict(vals)
        row.update({f"k{n}": v for n, v in enumerate(kc.as_tuple(), start=1)})
        row.update(
            kappa=params["kappa"],
            gamma_k1=params["gamma"] * kc.k1,
            gamma=params["gamma"],
            C=params["C"],
            C_prime=params["C_prime"],
            max_quadrature_error=max(r.error for r in (*I.values(), *J.values())),
        )
        rows.append(row)
    return rows
