"""Dyadic and fine partitions of unity in the position variable.

All profiles are built from the smooth transition s(t) = f(t) / (f(t) + f(1-t))
with f(t) = exp(-1/t), evaluated in closed form together with its derivative,
so cutoff gradients are exact rather than differenced on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SupportViolation
from .operators import p_operators

INNER, OUTER = 0.75, 8.0 / 3.0
CHI_PLATEAU, CHI_SUPPORT = 0.75, 4.0 / 3.0


def _f(t):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1. Returns (value, derivative)."""
    t = np.asarray(t, dtype=float)
    a, b = _f(t), _f(1.0 - t)
    denom = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(denom > 0, a / np.where(denom > 0, denom, 1.0), 0.0)
        ta = np.where(t > 0, t, 1.0)
        tb = np.where(t < 1, 1.0 - t, 1.0)
        da = np.where(t > 0, a / ta ** 2, 0.0)
        db = np.where(t < 1, b / tb ** 2, 0.0)
        der = np.where(denom > 0, (da * b + a * db) / np.where(denom > 0, denom, 1.0) ** 2, 0.0)
    val = np.where(t >= 1, 1.0, np.where(t <= 0, 0.0, val))
    return val, der


def radial_cutoff(rho, plateau, support):
    """1 on [0, plateau], 0 beyond ``support``; returns (value, d/drho)."""
    w = support - plateau
    s, ds = smooth_step((np.asarray(rho, dtype=float) - plateau) / w)
    return 1.0 - s, -ds / w


@dataclass(frozen=True)
class RadialCutoffPair:
    """chi supported in B(0, 4/3), phi in the shell (3/4, 8/3), chi + sum_j phi(2^-j x) = 1.

    phi is the telescoping difference chi(x/2) - chi(x), which makes the
    dyadic sum collapse to chi(2^{-J-1} x) and hence to 1.
    """

    plateau: float = CHI_PLATEAU
    support: float = CHI_SUPPORT

    def chi(self, rho):
        return radial_cutoff(rho, self.plateau, self.support)

    def phi(self, rho):
        rho = np.asarray(rho, dtype=float)
        a, da = self.chi(rho / 2.0)
        b, db = self.chi(rho)
        return a - b, 0.5 * da - db

    def dyadic_sum(self, rho, j_max=None):
        """chi(x) + sum_{j=0}^{j_max} phi(2^-j x) evaluated at radii ``rho``."""
        rho = np.asarray(rho, dtype=float)
        if j_max is None:
            j_max = max(int(math.ceil(math.log2(max(float(rho.max()), 1.0) / INNER))) + 1, 0)
        total = self.chi(rho)[0]
        for j in range(j_max + 1):
            total = total + self.phi(rho / 2.0 ** j)[0]
        return total


def build_radial_pair():
    return RadialCutoffPair()


def _radii(q):
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    return q, np.linalg.norm(q, axis=-1)


def _radial_gradient(q, rho, dprofile):
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(rho[:, None] > 0, q / np.where(rho > 0, rho, 1.0)[:, None], 0.0)
    return dprofile[..., None] * unit


@dataclass(frozen=True)
class DyadicPartition:
    """Normalised cutoffs chi_j, j = -1..j_max, with sum_j chi_j^2 = 1.

    chi_{-1} = chi(q) / sqrt(S), chi_j = phi(2^-j q) / sqrt(S),
    S = chi^2(q) + sum_j phi^2(2^-j q). Index ``j`` lives in row ``j + 1``.
    """

    pair: RadialCutoffPair
    j_max: int

    @property
    def indices(self):
        return list(range(-1, self.j_max + 1))

    def _raw(self, rho):
        vals, ders = [], []
        c, dc = self.pair.chi(rho)
        vals.append(c)
        ders.append(dc)
        for j in range(self.j_max + 1):
            f, df = self.pair.phi(rho / 2.0 ** j)
            vals.append(f)
            ders.append(df / 2.0 ** j)
        return np.array(vals), np.array(ders)

    def radial(self, rho):
        """Normalised profiles and radial derivatives, each of shape (j_max + 2, n)."""
        rho = np.asarray(rho, dtype=float)
        raw, draw = self._raw(rho)
        S = (raw ** 2).sum(axis=0)
        dS = 2.0 * (raw * draw).sum(axis=0)
        root = np.sqrt(S)
        vals = raw / root
        ders = draw / root - raw * dS / (2.0 * S * root)
        return vals, ders

    def values(self, q):
        _, rho = _radii(q)
        return self.radial(rho)[0]

    def gradients(self, q):
        q, rho = _radii(q)
        _, ders = self.radial(rho)
        return _radial_gradient(q, rho, ders)

    def supports(self):
        """Declared radial support interval of each chi_j."""
        out = {-1: (0.0, self.pair.support)}
        for j in range(self.j_max + 1):
            out[j] = (2.0 ** j * INNER, 2.0 ** j * OUTER)
        return out


def normalize_dyadic(pair, radius=100.0):
    """Dyadic partition instantiated up to the level needed to cover |q| <= radius."""
    j_max = max(int(math.ceil(math.log2(radius / INNER))), 0)
    return DyadicPartition(pair, j_max)


# -- fine partition ----------------------------------------------------------

def select_nu(r):
    """Exponent nu strictly inside (max(1/6, 1/8 + 3/(8(r-1))), 1/4 + 1/(4(r-1)))."""
    if r <= 2:
        raise ValueError("select_nu requires r > 2")
    nu = 3.0 / 16.0 + 5.0 / (16.0 * (r - 1.0)) if r < 10 else 5.0 / 24.0
    lo, hi = nu_bounds(r)
    assert lo < nu < hi, (lo, nu, hi)
    return nu


def nu_bounds(r):
    return max(1.0 / 6.0, 1.0 / 8.0 + 3.0 / (8.0 * (r - 1.0))), 0.25 + 1.0 / (4.0 * (r - 1.0))


def semiclassical_parameters(r, j):
    """h = 2^{-2(r-1)j} and H = h^{-1/2 + 1/(2(r-1))} (= 2^{j(r-2)})."""
    h = 2.0 ** (-2.0 * (r - 1.0) * j)
    H = h ** (-0.5 + 1.0 / (2.0 * (r - 1.0)))
    return h, H


def patch_radius(h, nu):
    return abs(math.log(h)) * h ** nu


def unit_lattice(d, extent):
    """Lattice with minimal spacing > 1 and covering radius <= sqrt(3)/2 inside [-extent, extent]^d.

    Spacing is 3/2 for d <= 2. The body-centred cubic lattice at spacing 3/2
    would cover only to radius 0.968, where every bump is ~1e-7 and the
    normalised gradients blow up, so in d = 3 it is shrunk to spacing 3/sqrt(5).
    """
    if d == 1:
        n = int(math.ceil(extent / 1.5)) + 1
        return 1.5 * np.arange(-n, n + 1, dtype=float)[:, None]
    if d == 2:
        a1 = np.array([1.5, 0.0])
        a2 = np.array([0.75, 1.5 * math.sqrt(3.0) / 2.0])
        n = int(math.ceil(extent / 1.2)) + 2
        i, k = np.meshgrid(np.arange(-2 * n, 2 * n + 1), np.arange(-n, n + 1), indexing="ij")
        pts = i.ravel()[:, None] * a1 + k.ravel()[:, None] * a2
    elif d == 3:
        a = 2.0 * math.sqrt(3.0) / math.sqrt(5.0)  # cube edge, covering radius a*sqrt(5)/4
        n = int(math.ceil(extent / a)) + 1
        g = np.arange(-n, n + 1) * a
        cube = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        pts = np.concatenate([cube, cube + a / 2.0])
    else:
        raise ValueError("fine partitions are implemented for d <= 3")
    keep = np.all(np.abs(pts) <= extent + 1.5, axis=1)
    return pts[keep]


LATTICE_COVERING = {1: 0.75, 2: math.sqrt(3.0) / 2.0, 3: math.sqrt(3.0) / 2.0}


@dataclass(frozen=True)
class FinePartition:
    """theta_{k,h}(q) = theta((q - q_{k,h}) / rho) normalised so sum_k theta_{k,h}^2 = 1.

    rho = |ln h| h^nu; the raw bump equals 1 on B(0, 1/2) and vanishes outside
    B(0, 1). Centres sit on a lattice with spacing >= 3/2 for d <= 2, so
    normalisation keeps theta_{k,h} = 1 on B(q_{k,h}, rho/2); in d = 3 the
    plateau shrinks to B(q_{k,h}, 0.34 rho).
    """

    h: float
    nu: float
    d: int
    centers: np.ndarray
    radius: float
    shell: tuple = (INNER, OUTER)

    def _raw(self, q):
        q, _ = _radii(q)
        diff = (q[None, :, :] - self.centers[:, None, :]) / self.radius
        dist = np.linalg.norm(diff, axis=-1)
        val, der = radial_cutoff(dist, 0.5, 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist[..., None] > 0, diff / np.where(dist > 0, dist, 1.0)[..., None], 0.0)
        grad = der[..., None] * unit / self.radius
        return val, grad

    # points covered by no patch (away from the shell) get theta = 0

    def values(self, q):
        raw, _ = self._raw(q)
        S = (raw ** 2).sum(axis=0)
        root = np.sqrt(np.where(S > 0, S, 1.0))
        return np.where(S > 0, raw / root, 0.0)

    def gradients(self, q):
        raw, graw = self._raw(q)
        S = (raw ** 2).sum(axis=0)
        covered = S > 0
        S = np.where(covered, S, 1.0)
        dS = 2.0 * (raw[..., None] * graw).sum(axis=0)
        root = np.sqrt(S)
        out = graw / root[None, :, None] - raw[..., None] * dS[None] / (2.0 * S * root)[None, :, None]
        return np.where(covered[None, :, None], out, 0.0)

    def gradient_constant(self, q):
        """Empirical G with |grad theta_{k,h}| <= G / rho on the sampled points."""
        return float(np.linalg.norm(self.gradients(q), axis=-1).max() * self.radius)


def build_fine_partition(h, nu, shell=(INNER, OUTER), d=1):
    """Patches of radius |ln h| h^nu covering the shell inner <= |q| <= outer."""
    if not 0.0 < h < 1.0:
        raise ValueError("h must lie in (0, 1)")
    rho = patch_radius(h, nu)
    inner, outer = shell
    if rho > outer - inner:
        raise ValueError(f"patch radius {rho:.4g} exceeds the shell width {outer - inner:.4g}")
    lattice = rho * unit_lattice(d, (outer + rho) / rho)
    norms = np.linalg.norm(lattice, axis=1)
    keep = (norms <= outer + rho) & (norms >= inner - rho)
    return FinePartition(h=h, nu=nu, d=d, centers=lattice[keep], radius=rho, shell=(inner, outer))


# -- IMS localisation and dyadic scaling ---------------------------------------

@dataclass(frozen=True)
class IMSReport:
    lhs: float
    localized: float
    commutator: float
    residual: float
    c_profile: float
    inequality_slack: float
    nonzero_max: int


def commutator_matrix(grad_chi, disc, transport_scale=1.0):
    """transport_scale * p . grad chi(q), grad chi sampled on the grid (n_q, d)."""
    Ps, _ = p_operators(disc)
    g = np.asarray(grad_chi, dtype=float).reshape(disc.n_q, disc.d)
    return transport_scale * sum(sp.kron(sp.diags(g[:, a]), Ps[a], format="csr") for a in range(disc.d))


def ims_residual(K, partition, u):
    """Relative defect in ||K u||^2 = sum_j ||K chi_j u||^2 - ||(p.grad chi_j) u||^2.

    Also evaluates the absorbed form (1 + 4c)||Ku||^2 + c||u||^2 >= sum_j ||K chi_j u||^2
    with c = t^2 sup_q sum_j |grad chi_j(q)|^2 (t the transport coefficient of K).
    """
    disc = K.disc
    t = K.meta.get("transport_scale", 2.0 ** -K.meta["j"] if "j" in K.meta else 1.0)
    pts = disc.points
    vals = partition.values(pts)
    grads = partition.gradients(pts)
    U = disc.as_grid(u)
    lhs = disc.norm(K @ u) ** 2
    localized = 0.0
    comm = 0.0
    for chi, g in zip(vals, grads):
        if not np.any(chi) and not np.any(g):
            continue
        w = (chi[:, None] * U).ravel()
        localized += disc.norm(K @ w) ** 2
        comm += disc.norm(commutator_matrix(g, disc, t) @ u) ** 2
    rhs = localized - comm
    c_prof = t * t * float((np.linalg.norm(grads, axis=-1) ** 2).sum(axis=0).max())
    unorm2 = disc.norm(u) ** 2
    slack = (1.0 + 4.0 * c_prof) * lhs + c_prof * unorm2 - localized
    nonzero = int((np.abs(vals) > 0).sum(axis=0).max())
    return IMSReport(lhs=lhs, localized=localized, commutator=comm,
                     residual=abs(lhs - rhs) / lhs, c_profile=c_prof,
                     inequality_slack=slack, nonzero_max=nonzero)


def dyadic_shell(j):
    return 2.0 ** j * INNER, 2.0 ** j * OUTER


def check_support(disc, u, inner, outer, tol=0.0):
    rho = np.linalg.norm(disc.points, axis=1)
    outside = (rho < inner) | (rho > outer)
    mass = np.abs(disc.as_grid(u)[outside]).max(initial=0.0)
    if mass > tol:
        raise SupportViolation(f"state has amplitude {mass:.3g} outside {inner:.4g} <= |q| <= {outer:.4g}")


def scaled_discretization(disc, j):
    """Grid for v_j: the u_j grid dilated by 2^-j (same Nq, Np)."""
    return type(disc)(d=disc.d, Nq=disc.Nq, Np=disc.Np, L=disc.L / 2.0 ** j, bc=disc.bc)


def scale_state(u, j, disc):
    """Grid values of v_j(q, p) = 2^{jd/2} u_j(2^j q, p) on the dilated grid."""
    return 2.0 ** (j * disc.d / 2.0) * np.asarray(u, dtype=float), scaled_discretization(disc, j)


def scaled_norm_check(V, j, u, disc, support_tol=1e-300):
    """Relative mismatch between ||K_V u_j|| and ||K_{j,V} v_j|| on matched grids."""
    from .operators import assemble_Kj, assemble_KV

    check_support(disc, u, *dyadic_shell(j), tol=support_tol)
    v, vdisc = scale_state(u, j, disc)
    a = disc.norm(assemble_KV(V, disc) @ u)
    b = vdisc.norm(assemble_Kj(V, j, vdisc) @ v)
    return abs(a - b) / a
