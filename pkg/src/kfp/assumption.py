"""Critical set of a homogeneous potential on the unit sphere and the derived constants.

Homogeneity makes the zero set of grad V a union of rays, so everything is
decided on the unit sphere S. The constants eps0, eps1 and eps2 are computed on
S with chordal distances to the discrete critical set. eps3 bounds Tr_- on the
whole shell 3/4 <= |q| <= 8/3 by scaling the sphere maximum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NonConvergence
from .partition import OUTER
from .potential import (f_delta, growth_exponent, growth_exponent_value, hessian_norm,
                        minimize_on_sphere, sphere_grid, trace_split_many)

log = logging.getLogger(__name__)

SHELL_DIAMETER = 2.0 * OUTER


@dataclass(frozen=True)
class CriticalSet:
    points: np.ndarray
    residuals: np.ndarray
    resolution: float
    rejected: tuple = ()
    cluster_radius: float = 0.0

    def __len__(self):
        return len(self.points)

    def distance(self, q):
        """Chordal distance from each row of ``q`` to the set (inf when empty)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if len(self.points) == 0:
            return np.full(len(q), np.inf)
        return cKDTree(self.points).query(q)[0]


@dataclass
class AssumptionReport:
    holds: bool
    critical_set: CriticalSet
    epsilon0: float
    epsilon1: float
    epsilon2: float
    epsilon3: float
    failures: list = field(default_factory=list)
    convention: str = "opnorm"
    resolution: float = 1e-2

    def to_json(self):
        def num(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")

        return {
            "holds": self.holds,
            "critical_points": [[float(c) for c in p] for p in self.critical_set.points],
            "residuals": [float(r) for r in self.critical_set.residuals],
            "failures": [[float(c) for c in p] for p in self.failures],
            "epsilon0": num(self.epsilon0),
            "epsilon1": num(self.epsilon1),
            "epsilon2": num(self.epsilon2),
            "epsilon3": num(self.epsilon3),
            "convention": self.convention,
            "resolution": self.resolution,
        }


def _is_zero(V):
    return len(V.monomials) == 0


def _neighbours(pts, d):
    n = len(pts)
    if d == 2:
        idx = np.arange(n)
        return np.stack([(idx - 1) % n, (idx + 1) % n], axis=1)
    k = min(9, n)
    return cKDTree(pts).query(pts, k=k)[1][:, 1:]


def _gauss_newton(V, q0, tol, maxiter):
    """Damped Gauss-Newton on F(q) = (grad V(q), (|q|^2 - 1)/2).

    Returns ``(q, |grad V(q)|, status)`` with status ``converged``,
    ``stationary`` (a nonzero local minimum of |F|) or ``maxiter``.
    """
    q = np.array(q0, dtype=float)

    def F(x):
        return np.concatenate([V.gradient(x), [(x @ x - 1.0) / 2.0]])

    f = F(q)
    for _ in range(maxiter):
        qs = q / np.linalg.norm(q)
        g = np.linalg.norm(V.gradient(qs))
        if g < tol:
            return qs, g, "converged"
        J = np.vstack([V.hessian(q), q[None, :]])
        grad_obj = J.T @ f
        if np.linalg.norm(grad_obj) <= 1e-13 * max(np.linalg.norm(J), 1.0) * np.linalg.norm(f):
            return qs, g, "stationary"
        step = np.linalg.lstsq(J, -f, rcond=None)[0]
        phi0 = f @ f
        t = 1.0
        while t > 1e-12:
            trial = q + t * step
            ft = F(trial)
            if ft @ ft <= phi0 - 1e-4 * t * abs(step @ grad_obj) * 2.0 or ft @ ft < phi0 * (1 - 1e-15):
                break
            t *= 0.5
        else:
            return qs, g, "stationary"
        q, f = trial, ft
    qs = q / np.linalg.norm(q)
    g = np.linalg.norm(V.gradient(qs))
    return qs, g, ("converged" if g < tol else "maxiter")


def _cluster(points, radius):
    """Greedy deterministic clustering: lexicographic order, first point represents."""
    if len(points) == 0:
        return np.zeros((0, points.shape[1] if points.ndim == 2 else 0))
    order = np.lexsort(points.T[::-1])
    reps = []
    for p in points[order]:
        if all(np.linalg.norm(p - r) > radius for r in reps):
            reps.append(p)
    return np.array(reps)


def find_critical_points(V, grid_resolution=1e-2, refine_tol=1e-10, maxiter=200):
    """Zeros of grad V on the unit sphere.

    Sphere nodes that are discrete local minima of |grad V| below
    2 * max|Hess V| * resolution are refined by Gauss-Newton. Points that
    converge to a nonzero local minimum of the residual are recorded in
    ``rejected``; flags whose iteration neither converges nor stalls raise
    NonConvergence.
    """
    d = V.d
    pts = sphere_grid(d, grid_resolution)
    gvals = np.linalg.norm(V.gradient(pts), axis=-1)
    sup_grad = float(gvals.max()) if len(gvals) else 0.0
    tol = refine_tol * max(1.0, sup_grad)
    radius = max(10.0 * refine_tol, grid_resolution)
    if _is_zero(V):
        return CriticalSet(pts, np.zeros(len(pts)), grid_resolution, (), 0.0)
    if d == 1:
        keep = gvals < tol
        return CriticalSet(pts[keep], gvals[keep], grid_resolution, (), radius)

    hmax = float(hessian_norm(V.hessian(pts), "opnorm").max())
    threshold = 2.0 * max(hmax, 1e-300) * grid_resolution
    nb = _neighbours(pts, d)
    local_min = np.all(gvals[:, None] <= gvals[nb], axis=1)
    flagged = np.flatnonzero(local_min & (gvals < threshold))
    log.debug("critical search: %d nodes, %d flagged", len(pts), len(flagged))

    found, residuals, rejected, failed = [], [], [], []
    for i in flagged:
        q, g, status = _gauss_newton(V, pts[i], tol, maxiter)
        if status == "converged":
            found.append(q)
            residuals.append(g)
        elif status == "stationary":
            rejected.append(tuple(float(c) for c in pts[i]))
        else:
            failed.append(tuple(float(c) for c in pts[i]))
    if failed:
        raise NonConvergence(f"Gauss-Newton failed on {len(failed)} flagged cells", failed)
    found = np.array(found).reshape(-1, d)
    # grad V(-q) = (-1)^(r-1) grad V(q): the zero set is always antipodally symmetric
    found = np.concatenate([found, -found])
    reps = _cluster(found, radius)
    reps = reps.reshape(-1, d)
    res = np.linalg.norm(V.gradient(reps), axis=-1) if len(reps) else np.zeros(0)
    return CriticalSet(reps, res, grid_resolution, tuple(rejected), radius)


def _ratio(V, q):
    tp, tm, _ = trace_split_many(V, q)
    return tm / (1.0 + tp)


def _cap_samples(center, radius, d, n=2048):
    """Points of S at chordal distance <= radius from ``center`` (boundary included)."""
    theta_max = 2.0 * math.asin(min(radius / 2.0, 1.0))
    t = np.linspace(0.0, theta_max, max(n // 16, 8) if d == 3 else n)
    if d == 2:
        base = math.atan2(center[1], center[0])
        ang = np.concatenate([base + t, base - t])
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    # d = 3: orthonormal frame around the centre
    e = np.eye(3)[np.argmin(np.abs(center))]
    u = np.cross(center, e)
    u /= np.linalg.norm(u)
    w = np.cross(center, u)
    phi = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    T, P = np.meshgrid(t, phi, indexing="ij")
    dirs = np.cos(P)[..., None] * u + np.sin(P)[..., None] * w
    out = np.cos(T)[..., None] * center + np.sin(T)[..., None] * dirs
    return out.reshape(-1, 3)


def _boundary_samples(crit, radius, d, n=64):
    """Points at chordal distance exactly ``radius`` from each critical point."""
    if d == 1 or len(crit.points) == 0:
        return np.zeros((0, d))
    theta = 2.0 * math.asin(min(radius / 2.0, 1.0))
    out = []
    for c in crit.points:
        if d == 2:
            base = math.atan2(c[1], c[0])
            out.append(np.array([[math.cos(base + theta), math.sin(base + theta)],
                                 [math.cos(base - theta), math.sin(base - theta)]]))
        else:
            cap = _cap_samples(c, radius, 3, n=16 * n)
            dist = np.linalg.norm(cap - c, axis=1)
            out.append(cap[np.isclose(dist, dist.max())])
    pts = np.concatenate(out)
    # keep only boundary points that are not closer to another critical point
    return pts[crit.distance(pts) >= radius * (1 - 1e-12)]


def _epsilon1(V, crit, eps0, pts, kmax=40):
    if len(crit.points) == 0:
        return SHELL_DIAMETER
    target = eps0 / 2.0
    dist = crit.distance(pts)
    ratio = _ratio(V, pts)
    for k in range(kmax + 1):
        rho = 2.0 ** (-k)
        near = dist <= rho
        if near.any() and ratio[near].min() < target:
            continue
        local = np.concatenate([_cap_samples(c, rho, V.d) for c in crit.points]) if V.d > 1 else crit.points
        if _ratio(V, local).min() >= target:
            return rho
    return 0.0


def _epsilon2(V, crit, eps1, pts, resolution):
    grad_norm = lambda p: np.linalg.norm(V.gradient(p), axis=-1)  # noqa: E731
    if V.d == 1:
        mask = crit.distance(pts) >= eps1
        return float(grad_norm(pts[mask]).min()) if mask.any() else math.inf
    admissible = None if len(crit.points) == 0 else (lambda p: crit.distance(p) >= eps1)
    best, _ = minimize_on_sphere(grad_norm, V.d, resolution, admissible=admissible)
    edge = _boundary_samples(crit, eps1, V.d)
    if len(edge):
        best = min(best, float(grad_norm(edge).min()))
    return best


def check_assumption(V, grid_resolution=1e-2, refine_tol=1e-10, convention="opnorm",
                     trace_tol=1e-9):
    """Decide whether grad V = 0 forces Tr_- > 0 and extract eps0..eps3.

    eps0 = min over critical points of Tr_-/(1+Tr_+) (inf if there are none);
    eps1 = largest 2^-k keeping that ratio >= eps0/2 within distance 2^-k;
    eps2 = min |grad V| at distance >= eps1; eps3 = (8/3)^(r-2) max_S Tr_-.
    """
    if V.r <= 2:
        raise ValueError("check_assumption requires r > 2")
    crit = find_critical_points(V, grid_resolution, refine_tol)
    pts = sphere_grid(V.d, grid_resolution)
    if len(crit.points):
        tp, tm, _ = trace_split_many(V, crit.points)
        hscale = max(1.0, float(np.abs(V.hessian(pts)).max()))
        bad = tm <= trace_tol * hscale
        failures = [p for p, b in zip(crit.points, bad) if b]
        eps0 = float((tm / (1.0 + tp)).min())
    else:
        failures, eps0 = [], math.inf
    eps1 = _epsilon1(V, crit, eps0, pts)
    eps2 = _epsilon2(V, crit, eps1, pts, grid_resolution)
    neg_trm = lambda p: -trace_split_many(V, p)[1]  # noqa: E731
    max_trm = -minimize_on_sphere(neg_trm, V.d, grid_resolution)[0] if V.d > 1 else float(-neg_trm(pts).min())
    eps3 = OUTER ** (V.r - 2) * max(max_trm, 0.0)
    return AssumptionReport(holds=not failures, critical_set=crit, epsilon0=eps0, epsilon1=eps1,
                            epsilon2=eps2, epsilon3=eps3, failures=failures,
                            convention=convention, resolution=grid_resolution)


@dataclass(frozen=True)
class CompactResolventReport:
    delta: float
    exponent: float
    m_delta: float
    worst_ratio: float
    violations: list
    convention: str

    @property
    def ok(self):
        return not self.violations and self.m_delta > 1e-12


def compact_resolvent_indicator(V, delta, ray_samples=256, lambdas=(2.0, 4.0, 8.0, 16.0),
                                convention="opnorm", tol=1e-9, resolution=1e-3):
    """Check f_delta(lam q) >= m_delta lam^e along sampled rays (e the growth exponent)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    exponent = growth_exponent_value(V.r, V.d, delta, convention)
    m = growth_exponent(V, delta, convention, resolution).m_delta
    dirs = sphere_grid(V.d, 2.0 * math.pi / ray_samples if V.d == 2 else math.sqrt(4 * math.pi / ray_samples))
    worst, violations = math.inf, []
    for lam in lambdas:
        ratios = f_delta(V, lam * dirs, delta, convention) / lam ** exponent
        worst = min(worst, float(np.min(ratios)))
        for q, rt in zip(dirs[ratios < m * (1 - tol)], ratios[ratios < m * (1 - tol)]):
            violations.append({"lambda": lam, "direction": [float(c) for c in q], "ratio": float(rt)})
    return CompactResolventReport(delta=delta, exponent=exponent, m_delta=m, worst_ratio=worst,
                                  violations=violations, convention=convention)
