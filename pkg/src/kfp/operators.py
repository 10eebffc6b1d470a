"""Hermite x grid discretization of the Kramers-Fokker-Planck operator.

A state is a vector of Hermite coefficients c_n(q) sampled on a uniform
position grid, stored q-major: index = iq * Np**d + n. The velocity part is
exact in the Hermite basis (O_p is diagonal, p and d/dp are tridiagonal);
the position derivative is spectral (periodic box) or central differences
(Dirichlet box). Inner products use the uniform quadrature weight dq**d.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BreakdownError
from .potential import HomogeneousPotential, hessian_norm, log_weight

log = logging.getLogger(__name__)

DENSE_LIMIT = 5000
WEIGHTS = ("Op", "grad", "hess", "Dq")


@dataclass(frozen=True)
class Discretization:
    """Position grid on [-L, L]^d times a Hermite truncation of order Np per axis."""

    d: int = 1
    Nq: int = 64
    Np: int = 32
    L: float = 8.0
    bc: str = "periodic"

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("operators are implemented for d = 1, 2")
        if self.Nq < 4 or self.Np < 1 or self.L <= 0:
            raise ValueError("Nq >= 4, Np >= 1 and L > 0 are required")
        if self.bc not in ("periodic", "dirichlet"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    @property
    def dq(self):
        if self.bc == "periodic":
            return 2.0 * self.L / self.Nq
        return 2.0 * self.L / (self.Nq + 1)

    @property
    def axis(self):
        if self.bc == "periodic":
            return -self.L + self.dq * np.arange(self.Nq)
        return -self.L + self.dq * np.arange(1, self.Nq + 1)

    @property
    def n_q(self):
        return self.Nq ** self.d

    @property
    def n_p(self):
        return self.Np ** self.d

    @property
    def dim(self):
        return self.n_q * self.n_p

    @property
    def weight(self):
        """Quadrature weight of one grid cell."""
        return self.dq ** self.d

    @property
    def points(self):
        """Grid points, shape ``(Nq**d, d)``, C order."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def hermite_indices(self):
        return np.array(list(itertools.product(range(self.Np), repeat=self.d)), dtype=int).reshape(-1, self.d)

    def interior_mask(self, fraction=0.5):
        """Grid-point mask of the sub-box [-fraction*L, fraction*L]^d."""
        return np.all(np.abs(self.points) <= fraction * self.L + 1e-12, axis=1)

    def interior_dofs(self, fraction=0.5):
        """State indices whose grid point lies in the interior sub-box."""
        mask = np.repeat(self.interior_mask(fraction), self.n_p)
        return np.flatnonzero(mask)

    def as_grid(self, u):
        return np.asarray(u).reshape(self.n_q, self.n_p)

    def inner(self, u, v):
        return self.weight * np.vdot(u, v)

    def norm(self, u):
        return math.sqrt(self.weight * float(np.vdot(u, u).real))

    def product_state(self, q_profile, coeffs):
        """State f(q) * sum_n coeffs[n] psi_n(p); q_profile is sampled on the grid."""
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        full = np.zeros(self.n_p)
        full[:coeffs.size] = coeffs
        return np.kron(np.asarray(q_profile, dtype=float).ravel(), full)

    def metadata(self):
        return {"d": self.d, "Nq": self.Nq, "Np": self.Np, "L": self.L, "bc": self.bc}


@dataclass(frozen=True)
class OperatorMatrix:
    matrix: object
    kind: str
    disc: Discretization
    potential: object = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, u):
        return self.matrix @ u

    def toarray(self):
        m = self.matrix
        return m.toarray() if sp.issparse(m) else np.asarray(m)


# -- one-dimensional building blocks ---------------------------------------

def hermite_position(Np):
    """Matrix of multiplication by p in the Hermite-function basis."""
    off = np.sqrt(np.arange(1, Np) / 2.0)
    return sp.diags([off, off], [-1, 1], shape=(Np, Np), format="csr")


def hermite_derivative(Np):
    """Matrix of d/dp in the Hermite-function basis (antisymmetric)."""
    off = np.sqrt(np.arange(1, Np) / 2.0)
    return sp.diags([-off, off], [-1, 1], shape=(Np, Np), format="csr")


def oscillator_diagonal(Np, d=1):
    """Eigenvalues sum_i (n_i + 1/2) of O_p, Hermite multi-index order."""
    n = np.arange(Np) + 0.5
    out = n
    for _ in range(d - 1):
        out = np.add.outer(out, n).ravel()
    return out


def hermite_functions(n_max, p):
    """Orthonormal Hermite functions psi_0..psi_{n_max-1} at points ``p``."""
    p = np.asarray(p, dtype=float)
    out = np.zeros((n_max,) + p.shape)
    out[0] = math.pi ** -0.25 * np.exp(-p * p / 2.0)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * p * out[0]
    for n in range(2, n_max):
        out[n] = math.sqrt(2.0 / n) * p * out[n - 1] - math.sqrt((n - 1) / n) * out[n - 2]
    return out


def hermite_quadrature(Np):
    """Gauss-Hermite nodes and weights adapted to Hermite functions.

    sum_k w_k psi_m(x_k) psi_n(x_k) is exact for m, n < Np.
    """
    x, w = np.polynomial.hermite.hermgauss(Np)
    return x, w * np.exp(x * x)


def fourier_derivative(N, L):
    """Spectral derivative on N equispaced points of the periodic box [-L, L)."""
    h = 2.0 * math.pi / N
    D = np.zeros((N, N))
    for k in range(1, N):
        if N % 2 == 0:
            val = 0.5 * (-1) ** k / math.tan(k * h / 2.0)
        else:
            val = 0.5 * (-1) ** k / math.sin(k * h / 2.0)
        idx = np.arange(N)
        D[(idx + k) % N, idx] = val
    D = 0.5 * (D - D.T)  # exact antisymmetry
    return D * (math.pi / L)


def dirichlet_derivative(N, dq):
    """Central differences with zero extension beyond the end points."""
    off = np.full(N - 1, 0.5 / dq)
    return sp.diags([-off, off], [-1, 1], shape=(N, N), format="csr").toarray()


def _q_derivative_1d(disc):
    if disc.bc == "periodic":
        return fourier_derivative(disc.Nq, disc.L)
    return dirichlet_derivative(disc.Nq, disc.dq)


def _axis_kron(mats, axis, d, n):
    """kron(I, .., M, .., I) with M at position ``axis`` of ``d`` factors of size n."""
    out = None
    for a in range(d):
        f = sp.csr_matrix(mats) if a == axis else sp.identity(n, format="csr")
        out = f if out is None else sp.kron(out, f, format="csr")
    return out


def q_derivatives(disc):
    D = _q_derivative_1d(disc)
    return [_axis_kron(D, a, disc.d, disc.Nq) for a in range(disc.d)]


def p_operators(disc):
    P = hermite_position(disc.Np)
    Dp = hermite_derivative(disc.Np)
    return ([_axis_kron(P, a, disc.d, disc.Np) for a in range(disc.d)],
            [_axis_kron(Dp, a, disc.d, disc.Np) for a in range(disc.d)])


# -- operator assembly -----------------------------------------------------

def assemble_Op(disc):
    diag = oscillator_diagonal(disc.Np, disc.d)
    M = sp.kron(sp.identity(disc.n_q, format="csr"), sp.diags(diag), format="csr")
    return OperatorMatrix(M, "Op", disc)


def transport_matrix(disc):
    """p . d/dq."""
    Ps, _ = p_operators(disc)
    Dqs = q_derivatives(disc)
    return sum(sp.kron(Dq, P, format="csr") for Dq, P in zip(Dqs, Ps))


def drift_matrix(grad_values, disc):
    """sum_i g_i(q) d/dp_i for a field g sampled on the grid, shape (Nq**d, d)."""
    _, Dps = p_operators(disc)
    g = np.asarray(grad_values, dtype=float).reshape(disc.n_q, disc.d)
    return sum(sp.kron(sp.diags(g[:, a]), Dps[a], format="csr") for a in range(disc.d))


def assemble_XV(V, disc, transport_scale=1.0, drift_scale=1.0):
    """X_V = p.d_q - grad V(q).d_p with optional coefficient scalings."""
    T = transport_matrix(disc)
    G = drift_matrix(V.gradient(disc.points), disc)
    X = (transport_scale * T - drift_scale * G).tocsr()
    return OperatorMatrix(X, "XV", disc, V, {"transport_scale": transport_scale, "drift_scale": drift_scale})


def assemble_KV(V, disc):
    X = assemble_XV(V, disc)
    return OperatorMatrix((X.matrix + assemble_Op(disc).matrix).tocsr(), "KV", disc, V)


def assemble_Kj(V, j, disc):
    """K_{j,V} = 2^{-j} p.d_q - (2^j)^{r-1} grad V.d_p + O_p."""
    if j == 0:
        K = assemble_KV(V, disc)
        return OperatorMatrix(K.matrix, "Kj", disc, V, {"j": 0})
    r = V.r if isinstance(V, HomogeneousPotential) else V.degree
    X = assemble_XV(V, disc, transport_scale=2.0 ** (-j), drift_scale=2.0 ** (j * (r - 1)))
    K = (X.matrix + assemble_Op(disc).matrix).tocsr()
    return OperatorMatrix(K, "Kj", disc, V, {"j": j, "r": r})


def assemble_K_scaled(V, disc, transport_scale, drift_scale):
    X = assemble_XV(V, disc, transport_scale, drift_scale)
    return OperatorMatrix((X.matrix + assemble_Op(disc).matrix).tocsr(), "K", disc, V,
                          {"transport_scale": transport_scale, "drift_scale": drift_scale})


def japanese(x):
    """<x> = sqrt(1 + |x|^2)."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def clamped_log_weight(s):
    """L(max(s, 1)); O_p starts at d/2 < 1 in d = 1."""
    return log_weight(np.maximum(np.asarray(s, dtype=float), 1.0))


def _fourier_symbol(disc, func):
    """Real symmetric matrix of the Fourier multiplier func(|xi|) on the q-grid."""
    N, d = disc.Nq, disc.d
    if disc.bc == "periodic":
        xi = np.fft.fftfreq(N, d=disc.dq) * 2.0 * math.pi
        grids = np.meshgrid(*([xi] * d), indexing="ij")
        mag = np.sqrt(sum(g ** 2 for g in grids))
        sym = func(mag)
        eye = np.eye(disc.n_q).reshape((disc.n_q,) + (N,) * d)
        axes = tuple(range(1, d + 1))
        M = np.fft.ifftn(sym * np.fft.fftn(eye, axes=axes), axes=axes).real
        M = M.reshape(disc.n_q, disc.n_q)
    else:
        lap1 = sp.diags([np.full(N - 1, -1.0), np.full(N, 2.0), np.full(N - 1, -1.0)],
                        [-1, 0, 1]).toarray() / disc.dq ** 2
        lap = sum(_axis_kron(lap1, a, d, N).toarray() for a in range(d))
        w, U = np.linalg.eigh(lap)
        M = (U * func(np.sqrt(np.maximum(w, 0.0)))) @ U.T
    return 0.5 * (M + M.T)


def weight_symbol(which, V, disc, convention="opnorm"):
    """Diagonal values or dense symbol of L(weight) before embedding in the state space."""
    if which == "Op":
        return clamped_log_weight(oscillator_diagonal(disc.Np, disc.d))
    if which == "grad":
        g = np.linalg.norm(V.gradient(disc.points), axis=-1)
        return clamped_log_weight(japanese(g) ** (2.0 / 3.0))
    if which == "hess":
        hn = hessian_norm(V.hessian(disc.points), convention)
        return clamped_log_weight(japanese(hn) ** 0.5)
    if which == "Dq":
        return _fourier_symbol(disc, lambda k: clamped_log_weight(japanese(k) ** (2.0 / 3.0)))
    raise ValueError(f"unknown weight {which!r}; expected one of {WEIGHTS}")


def assemble_weight(which, V, disc, convention="opnorm"):
    """Symmetric positive definite matrix realising one of the four L-weights.

    ``Op`` is diagonal in the Hermite basis, ``grad``/``hess`` are diagonal on
    the q-grid, ``Dq`` is a Fourier multiplier conjugated back to the grid.
    """
    sym = weight_symbol(which, V, disc, convention)
    Iq = sp.identity(disc.n_q, format="csr")
    Ip = sp.identity(disc.n_p, format="csr")
    if which == "Op":
        M = sp.kron(Iq, sp.diags(sym), format="csr")
    elif which in ("grad", "hess"):
        M = sp.kron(sp.diags(sym), Ip, format="csr")
    else:
        M = sp.kron(sp.csr_matrix(sym), Ip, format="csr")
    return OperatorMatrix(M, f"L({which})", disc, V, {"convention": convention})


# -- singular values -------------------------------------------------------

def smallest_singular_value(K, shift=0.0, columns=None, method="auto", tol=1e-6,
                            maxiter=500, seed=0):
    """sigma_min(K + shift*I), optionally restricted to a subset of columns.

    Dense lowest eigenvalue of the normal matrix up to DENSE_LIMIT unknowns,
    sparse-LU inverse iteration above. ``method`` forces ``dense``,
    ``iterative`` or ``svd`` (full LAPACK SVD, used as a cross-check).
    """
    M = K.matrix if isinstance(K, OperatorMatrix) else K
    M = sp.csr_matrix(M) if not sp.issparse(M) else M.tocsr()
    if shift:
        M = (M + shift * sp.identity(M.shape[0], format="csr")).tocsr()
    if columns is not None:
        M = M[:, columns]
    n = M.shape[1]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "iterative"
    if method == "svd":
        return float(sla.svdvals(M.toarray()).min())
    if method == "dense":
        # lowest eigenvalue of M^T M: about 4x cheaper than a full SVD and
        # accurate while sigma_min is not tiny relative to ||M||
        lam = sla.eigh((M.T @ M).toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
        return math.sqrt(max(float(lam), 0.0))
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")
    B = (M.T @ M).tocsc()
    lu = spla.splu(B)
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    mu_old = math.inf
    for _ in range(maxiter):
        y = lu.solve(x)
        mu = float(x @ y)  # Rayleigh quotient of B^{-1}
        x = y / np.linalg.norm(y)
        # sigma = mu^{-1/2}: relative change tol in sigma needs ~tol^2 in mu
        if abs(mu - mu_old) <= 1e-2 * tol * tol * abs(mu):
            return 1.0 / math.sqrt(mu)
        mu_old = mu
    lam = float(x @ (B @ x))
    res = float(np.linalg.norm(B @ x - lam * x))
    raise BreakdownError(f"inverse iteration did not converge in {maxiter} steps", residual=res)


# -- export ----------------------------------------------------------------

def export_matrix_market(op, path):
    from scipy.io import mmwrite

    M = op.matrix if isinstance(op, OperatorMatrix) else op
    mmwrite(str(path), sp.coo_matrix(M), comment=f"kind={getattr(op, 'kind', 'matrix')}")


def spectrum_rows(eigenvalues):
    ev = np.asarray(eigenvalues)
    order = np.lexsort((ev.imag, ev.real))
    return [(i, float(ev[k].real), float(ev[k].imag)) for i, k in enumerate(order)]


def write_spectrum_csv(eigenvalues, stream):
    import csv

    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["index", "real", "imag"])
    for row in spectrum_rows(eigenvalues):
        w.writerow([row[0], repr(row[1]), repr(row[2])])
