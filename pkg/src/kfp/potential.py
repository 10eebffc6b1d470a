"""Exact polynomial calculus for (homogeneous) potentials.

Polynomials are stored as sparse monomial lists with integer exponents and
double precision coefficients. Derivatives are computed symbolically on the
monomials, so gradients and Hessians carry no discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import PotentialParseError

CONVENTIONS = ("opnorm", "det")


class Polynomial:
    """Real polynomial in ``d`` variables.

    :param d: number of variables
    :param monomials: iterable of ``(coeff, exponents)`` pairs; duplicate
        exponent tuples are merged and zero coefficients dropped.
    """

    def __init__(self, d, monomials=()):
        d = int(d)
        if d < 1:
            raise ValueError("dimension must be positive")
        merged = {}
        for coeff, exps in monomials:
            exps = tuple(int(e) for e in exps)
            if len(exps) != d:
                raise ValueError(f"monomial {exps} does not have {d} exponents")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        items = sorted((e, c) for e, c in merged.items() if c != 0.0)
        self.d = d
        self.monomials = tuple((c, e) for e, c in items)
        self._coeffs = np.array([c for c, _ in self.monomials], dtype=float)
        self._exps = np.array([e for _, e in self.monomials], dtype=np.int64).reshape(-1, d)

    # -- basic structure -------------------------------------------------
    @property
    def degree(self):
        if not self.monomials:
            return 0
        return int(self._exps.sum(axis=1).max())

    def is_homogeneous(self):
        return len(set(int(s) for s in self._exps.sum(axis=1))) <= 1

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, {self})"

    def __str__(self):
        if not self.monomials:
            return "0"
        terms = []
        for c, e in self.monomials:
            factors = [f"q{i + 1}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k]
            terms.append(f"{c:+g}" + ("*" + "*".join(factors) if factors else ""))
        return " ".join(terms)

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.d == other.d and self.monomials == other.monomials

    def __hash__(self):
        return hash((self.d, self.monomials))

    def __add__(self, other):
        if not isinstance(other, Polynomial) or other.d != self.d:
            return NotImplemented
        return Polynomial(self.d, self.monomials + other.monomials)

    def __sub__(self, other):
        if not isinstance(other, Polynomial) or other.d != self.d:
            return NotImplemented
        return self + other.scale(-1.0)

    def scale(self, factor):
        return Polynomial(self.d, [(factor * c, e) for c, e in self.monomials])

    # -- evaluation ------------------------------------------------------
    def __call__(self, q):
        return self.evaluate(q)

    def evaluate(self, q):
        """Value at ``q`` of shape ``(..., d)``; returns shape ``(...)``."""
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.d:
            raise ValueError(f"expected points with {self.d} coordinates, got shape {q.shape}")
        if not self.monomials:
            return np.zeros(q.shape[:-1])
        powers = np.prod(q[..., None, :] ** self._exps, axis=-1)
        return powers @ self._coeffs

    def derivative(self, i):
        """Partial derivative with respect to variable ``i`` (0-based)."""
        out = []
        for c, e in self.monomials:
            if e[i] == 0:
                continue
            e2 = list(e)
            e2[i] -= 1
            out.append((c * e[i], e2))
        return Polynomial(self.d, out)

    @cached_property
    def gradient_polys(self):
        return tuple(self.derivative(i) for i in range(self.d))

    @cached_property
    def hessian_polys(self):
        return tuple(tuple(g.derivative(k) for k in range(self.d)) for g in self.gradient_polys)

    def gradient(self, q):
        """Exact gradient, shape ``(..., d)``."""
        q = np.asarray(q, dtype=float)
        return np.stack([g.evaluate(q) for g in self.gradient_polys], axis=-1)

    def hessian(self, q):
        """Exact Hessian, shape ``(..., d, d)``."""
        q = np.asarray(q, dtype=float)
        rows = [np.stack([h.evaluate(q) for h in row], axis=-1) for row in self.hessian_polys]
        return np.stack(rows, axis=-2)

    def hessian_trace(self, q):
        q = np.asarray(q, dtype=float)
        return sum(self.hessian_polys[i][i].evaluate(q) for i in range(self.d))


class HomogeneousPotential(Polynomial):
    """Homogeneous polynomial potential ``V`` of degree ``r`` in ``d`` variables.

    Homogeneity is structural: every monomial must have total degree ``r``.
    The zero polynomial is accepted when ``r`` is given explicitly.
    """

    def __init__(self, d, monomials=(), r=None):
        super().__init__(d, monomials)
        sums = set(int(s) for s in self._exps.sum(axis=1))
        if len(sums) > 1:
            raise ValueError(f"monomials have mixed total degrees {sorted(sums)}")
        if sums:
            (inferred,) = sums
            if r is not None and int(r) != inferred:
                raise ValueError(f"declared degree {r} but monomials have degree {inferred}")
            r = inferred
        elif r is None:
            raise ValueError("degree must be given for the zero potential")
        if r < 1:
            raise ValueError("homogeneous potentials must have degree >= 1")
        self.r = int(r)

    @classmethod
    def from_polynomial(cls, poly, r=None):
        return cls(poly.d, poly.monomials, r=r)


@dataclass(frozen=True)
class TraceSplit:
    point: np.ndarray
    hessian_eigenvalues: np.ndarray
    tr_plus: float
    tr_minus: float

    @property
    def trace(self):
        return self.tr_plus - self.tr_minus


@dataclass(frozen=True)
class PaperConstants:
    a_v: float
    b_v: float
    hypothesis_nondegenerate: bool
    tr_plus: float
    tr_minus: float
    min_grad: float


@dataclass(frozen=True)
class GrowthReport:
    exponent: float
    m_delta: float
    argmin: np.ndarray
    convention: str


def evaluate(V, q):
    return V.evaluate(q)


def gradient(V, q):
    return V.gradient(q)


def split_eigenvalues(eigs):
    """``(tr_plus, tr_minus)`` from Hessian eigenvalues along the last axis.

    Zero eigenvalues belong to the non-positive branch (weight 0).
    """
    eigs = np.asarray(eigs, dtype=float)
    tr_plus = np.where(eigs > 0, eigs, 0.0).sum(axis=-1)
    tr_minus = 0.0 - np.where(eigs <= 0, eigs, 0.0).sum(axis=-1)
    return tr_plus, tr_minus


def trace_split(V, q):
    q = np.asarray(q, dtype=float)
    eigs = np.linalg.eigvalsh(V.hessian(q))
    tp, tm = split_eigenvalues(eigs)
    return TraceSplit(point=q, hessian_eigenvalues=eigs, tr_plus=float(tp), tr_minus=float(tm))


def trace_split_many(V, points):
    """Vectorised ``(tr_plus, tr_minus, eigenvalues)`` at an array of points."""
    eigs = np.linalg.eigvalsh(V.hessian(points))
    tp, tm = split_eigenvalues(eigs)
    return tp, tm, eigs


def hessian_norm(H, convention="opnorm"):
    """|Hess V| under the chosen convention, batched over leading axes.

    ``opnorm`` is the largest absolute eigenvalue (homogeneous of degree r-2);
    ``det`` is the absolute determinant (homogeneous of degree d(r-2)).
    """
    H = np.asarray(H, dtype=float)
    if convention == "opnorm":
        return np.abs(np.linalg.eigvalsh(H)).max(axis=-1)
    if convention == "det":
        return np.abs(np.linalg.det(H))
    raise ValueError(f"unknown Hessian norm convention {convention!r}")


def _quadratic_parts(V):
    """Constant gradient ``g0`` and constant Hessian of a degree <= 2 polynomial."""
    zero = np.zeros(V.d)
    return V.gradient(zero), V.hessian(zero)


def min_gradient_norm(V):
    """min over R^d of |grad V| for deg V <= 2, by least squares on grad V = g0 + H q."""
    if V.degree > 2:
        raise ValueError("min_gradient_norm requires a polynomial of degree <= 2")
    g0, H = _quadratic_parts(V)
    q, *_ = np.linalg.lstsq(H, -g0, rcond=None)
    return float(np.linalg.norm(g0 + H @ q))


def paper_constants(V, tol=1e-12):
    """The constants A_V, B_V attached to a polynomial of degree <= 2.

    Raises ``ValueError`` for inputs of higher degree, where the trace
    quantities are no longer constant.
    """
    if V.degree > 2:
        raise ValueError(f"paper_constants needs degree <= 2, got {V.degree}")
    _, H = _quadratic_parts(V)
    tp, tm = split_eigenvalues(np.linalg.eigvalsh(H))
    tp, tm = float(tp), float(tm)
    mg = min_gradient_norm(V)
    a_v = max((1.0 + tp) ** (2.0 / 3.0), 1.0 + tm)
    b_v = max(mg ** (4.0 / 3.0), (1.0 + tm) / math.log(2.0 + tm) ** 2)
    return PaperConstants(a_v=a_v, b_v=b_v, hypothesis_nondegenerate=(tm + mg) > tol,
                          tr_plus=tp, tr_minus=tm, min_grad=mg)


def log_weight(s):
    """L(s) = (s + 1) / log(s + 1) for s >= 1 (scalar or array)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 1.0) or np.any(np.isnan(s_arr)):
        raise ValueError("log_weight is defined for s >= 1")
    out = (s_arr + 1.0) / np.log(s_arr + 1.0)
    return float(out) if out.ndim == 0 else out


def f_delta(V, q, delta, convention="opnorm"):
    """|grad V|^{4(1-delta)/3} + |Hess V|^{1-delta} at ``q`` (batched)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    q = np.asarray(q, dtype=float)
    g = np.linalg.norm(V.gradient(q), axis=-1)
    hn = hessian_norm(V.hessian(q), convention)
    out = g ** (4.0 * (1.0 - delta) / 3.0) + hn ** (1.0 - delta)
    return float(out) if out.ndim == 0 else out


def growth_exponent_value(r, d, delta, convention="opnorm"):
    """(1 - delta) * min{4(r-1)/3, e_H} with e_H = r-2 (opnorm) or d(r-2) (det)."""
    if r <= 2:
        raise ValueError("growth exponent requires r > 2")
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if convention == "opnorm":
        hess_exp = r - 2.0
    elif convention == "det":
        hess_exp = d * (r - 2.0)
    else:
        raise ValueError(f"unknown Hessian norm convention {convention!r}")
    return (1.0 - delta) * min(4.0 * (r - 1.0) / 3.0, hess_exp)


def sphere_grid(d, resolution):
    """Deterministic sample of the unit sphere with spacing about ``resolution``.

    d=1: the two points {-1, +1}. d=2: equiangular grid whose size is rounded
    up to a multiple of 8 so that the coordinate axes and diagonals are nodes.
    d=3: Fibonacci lattice with about 4*pi/resolution^2 points.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        n = int(math.ceil(2 * math.pi / resolution / 8.0)) * 8
        theta = 2 * math.pi * np.arange(n) / n
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if d == 3:
        n = max(int(math.ceil(4 * math.pi / resolution ** 2)), 8)
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        rho = np.sqrt(1.0 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    raise ValueError("sphere sampling is implemented for d <= 3")


def sphere_chart(d):
    """Map from angle parameters to the sphere (d = 2 or 3)."""
    if d == 2:
        return lambda a: np.array([math.cos(a[0]), math.sin(a[0])])
    if d == 3:
        return lambda a: np.array([math.sin(a[0]) * math.cos(a[1]),
                                   math.sin(a[0]) * math.sin(a[1]), math.cos(a[0])])
    raise ValueError("charts exist for d = 2, 3")


def sphere_angles(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] == 2:
        return np.array([math.atan2(q[1], q[0])])
    return np.array([math.acos(max(-1.0, min(1.0, q[2]))), math.atan2(q[1], q[0])])


def minimize_on_sphere(func, d, resolution=1e-3, starts=8, admissible=None):
    """Minimum of a scalar function on the unit sphere: grid scan + local polish.

    :param func: vectorised function of points ``(n, d) -> (n,)``
    :param admissible: optional vectorised mask restricting the search
    :return: ``(value, point)``
    """
    pts = sphere_grid(d, resolution)
    vals = np.asarray(func(pts), dtype=float)
    if admissible is not None:
        vals = np.where(admissible(pts), vals, np.inf)
    if not np.isfinite(vals).any():
        return math.inf, None
    best = int(np.argmin(vals))
    best_val, best_pt = float(vals[best]), pts[best]
    if d == 1:
        return best_val, best_pt
    chart = sphere_chart(d)

    def scalar(a):
        p = chart(np.atleast_1d(a))
        if admissible is not None and not admissible(p[None, :])[0]:
            return math.inf
        return float(func(p[None, :])[0])

    order = np.argsort(vals, kind="stable")[:starts]
    for idx in order:
        if not np.isfinite(vals[idx]):
            continue
        a0 = sphere_angles(pts[idx])
        if d == 2:
            step = 2 * math.pi / len(pts)
            # inadmissible points return inf; Brent then falls back to a golden-section step
            with np.errstate(invalid="ignore"):
                res = optimize.minimize_scalar(scalar, bounds=(a0[0] - step, a0[0] + step),
                                               method="bounded", options={"xatol": 1e-13})
            cand_val, cand_pt = float(res.fun), chart(np.atleast_1d(res.x))
        else:
            res = optimize.minimize(scalar, a0, method="Nelder-Mead",
                                    options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
            cand_val, cand_pt = float(res.fun), chart(res.x)
        if cand_val < best_val:
            best_val, best_pt = cand_val, cand_pt
    return best_val, best_pt


def growth_exponent(V, delta, convention="opnorm", resolution=1e-3):
    """Growth exponent of f_delta along rays plus its minimum on the unit sphere."""
    exponent = growth_exponent_value(V.r, V.d, delta, convention)
    if delta == 0.0 or delta == 1.0:
        # f_delta itself is only defined on the open interval
        return GrowthReport(exponent=exponent, m_delta=math.nan, argmin=None, convention=convention)
    m, arg = minimize_on_sphere(lambda p: f_delta(V, p, delta, convention), V.d, resolution)
    return GrowthReport(exponent=exponent, m_delta=m, argmin=arg, convention=convention)


def taylor_linear(V, q0):
    """First-order Taylor part sum_{|a|=1} d^a V(q0) (q - q0)^a (no constant term)."""
    q0 = np.asarray(q0, dtype=float)
    g = V.gradient(q0)
    monos = [(g[i], _unit(V.d, i)) for i in range(V.d)]
    monos.append((-float(g @ q0), (0,) * V.d))
    return Polynomial(V.d, monos)


def taylor_quadratic(V, q0):
    """Second-order Taylor polynomial of V at q0, constant term included."""
    q0 = np.asarray(q0, dtype=float)
    v0 = float(V.evaluate(q0))
    g = V.gradient(q0)
    H = V.hessian(q0)
    d = V.d
    monos = [(v0 - g @ q0 + 0.5 * q0 @ H @ q0, (0,) * d)]
    lin = g - H @ q0
    monos += [(lin[i], _unit(d, i)) for i in range(d)]
    for i in range(d):
        e = [0] * d
        e[i] = 2
        monos.append((0.5 * H[i, i], e))
        for k in range(i + 1, d):
            e = [0] * d
            e[i] += 1
            e[k] += 1
            monos.append((H[i, k], e))
    return Polynomial(d, monos)


def _unit(d, i):
    e = [0] * d
    e[i] = 1
    return tuple(e)


def taylor_gradient_error(V, surrogate, q0, radius, order, samples=256, seed=0):
    """Empirical sup over |q - q0| = radius of |grad V - grad surrogate| / radius^order."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((samples, V.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    q = np.asarray(q0, dtype=float) + radius * dirs
    err = np.linalg.norm(V.gradient(q) - surrogate.gradient(q), axis=1)
    return float(err.max() / radius ** order)


# -- text format ---------------------------------------------------------

def parse_potential_text(text, homogeneous=True):
    """Parse ``coeff e1 ... ed`` lines (``#`` comments) into a potential.

    Returns a ``HomogeneousPotential`` (homogeneity validated, ``d`` and ``r``
    inferred) or a plain ``Polynomial`` when ``homogeneous`` is false.
    """
    monos = []
    d = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 2:
            raise PotentialParseError("expected a coefficient followed by exponents", lineno)
        try:
            coeff = float(fields[0])
        except ValueError:
            raise PotentialParseError(f"bad coefficient {fields[0]!r}", lineno) from None
        try:
            exps = [int(f) for f in fields[1:]]
        except ValueError:
            raise PotentialParseError("exponents must be integers", lineno) from None
        if any(e < 0 for e in exps):
            raise PotentialParseError("exponents must be non-negative", lineno)
        if d is None:
            d = len(exps)
        elif len(exps) != d:
            raise PotentialParseError(f"expected {d} exponents, got {len(exps)}", lineno)
        if homogeneous and monos and sum(exps) != sum(monos[0][1]):
            raise PotentialParseError(
                f"monomial of degree {sum(exps)} breaks homogeneity (degree {sum(monos[0][1])})", lineno)
        monos.append((coeff, exps))
    if d is None:
        raise PotentialParseError("no monomials found")
    if not homogeneous:
        return Polynomial(d, monos)
    return HomogeneousPotential(d, monos, r=sum(monos[0][1]))


def load_potential(path, homogeneous=True):
    return parse_potential_text(Path(path).read_text(), homogeneous=homogeneous)


def format_potential(V):
    lines = [f"# d={V.d}" + (f" r={V.r}" if isinstance(V, HomogeneousPotential) else "")]
    lines += [f"{c!r} " + " ".join(str(e) for e in exps) for c, exps in V.monomials]
    return "\n".join(lines) + "\n"
