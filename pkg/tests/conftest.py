from __future__ import annotations

import numpy as np
import pytest

from wentzell_lab.energy import CoefficientField, WentzellEnergy
from wentzell_lab.grid import build_grid
from wentzell_lab.varexp import ExponentField, VectorExponent


def make_energy(n=9, dim=2, p=2.0, q=None, alpha=1.0, beta=1.0, eps_reg=1e-8):
    """Energy on the unit box; ``p``/``q`` are numbers or callables of coordinates."""
    domain, atlas = build_grid(dim, 1.0, n)

    def field(spec, coords):
        vals = spec(coords) if callable(spec) else np.full(len(coords), float(spec))
        return ExponentField(vals)

    q = p if q is None else q
    exps = VectorExponent(
        tuple(field(p, domain.coordinates) for _ in range(dim)),
        tuple(field(q, atlas.coordinates) for _ in range(dim - 1)),
    )
    coeffs = CoefficientField.constant(domain, atlas, alpha, beta)
    return WentzellEnergy(domain, atlas, exps, coeffs, eps_reg=eps_reg)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def _trapezoid(n, h):
    w = np.full(n, h)
    w[[0, -1]] *= 0.5
    return w


def _tensor_stiffness(shape, spacing):
    """sum_k  W_0 x ... x K_k x ... x W_{N-1} with 1-d trapezoid masses W and
    two-point stiffness K (Kronecker factors in C node order)."""
    import scipy.sparse as sp

    n_total = int(np.prod(shape))
    A = sp.csr_matrix((n_total, n_total))
    for k in range(len(shape)):
        factors = []
        for j, (n, h) in enumerate(zip(shape, spacing)):
            if j == k:
                main = np.full(n, 2.0 / h)
                main[[0, -1]] = 1.0 / h
                off = np.full(n - 1, -1.0 / h)
                factors.append(sp.diags([off, main, off], [-1, 0, 1]))
            else:
                factors.append(sp.diags(_trapezoid(n, h)))
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f)
        A = A + term
    return A.tocsr()


def linear_operator(domain, atlas, alpha=1.0, beta=1.0):
    """Stiffness + reaction + tangential coupling for p = q = 2, and the X^2 mass."""
    import scipy.sparse as sp

    N = domain.n_nodes
    A = _tensor_stiffness(domain.shape, domain.spacing).tolil()
    mass = np.prod(np.meshgrid(*[_trapezoid(n, h) for n, h in zip(domain.shape, domain.spacing)], indexing="ij"), axis=0).ravel()
    A = A.tocsr() + sp.diags(mass * np.broadcast_to(alpha, (N,)))
    surface = np.zeros(N)
    for face in atlas.faces:
        Kf = _tensor_stiffness(face.shape, face.spacing).tocoo()
        A = A + sp.csr_matrix((Kf.data, (face.nodes[Kf.row], face.nodes[Kf.col])), shape=(N, N))
        fw = np.prod(np.meshgrid(*[_trapezoid(n, h) for n, h in zip(face.shape, face.spacing)], indexing="ij"), axis=0).ravel()
        np.add.at(surface, face.nodes, fw)
    beta_full = np.zeros(N)
    beta_full[domain.boundary_nodes] = np.broadcast_to(beta, (domain.boundary_nodes.size,))
    A = A + sp.diags(surface * beta_full)
    return A.tocsr(), mass + surface


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one ``PASS``/``FAIL`` line per criterion; printed after the run."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}"
        _ACCEPTANCE.append(line + (f"  ({detail})" if detail else ""))
        print(_ACCEPTANCE[-1])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
