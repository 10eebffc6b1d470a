"""Empirical constants for the subelliptic and lower-bound inequalities.

Every routine works on a fixed discretisation and, by default, on states
supported in the interior half of the q-box: quadratic forms are restricted to
principal submatrices on those degrees of freedom. The drift grad V is not
periodic, so the periodic wrap at the box edge would otherwise dominate.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy import optimize

from .errors import ClassificationAmbiguous, HypothesisViolated, NotFound
from .operators import (DENSE_LIMIT, Discretization, _fourier_symbol,
                        assemble_KV, assemble_Kj, assemble_Op, assemble_weight, assemble_XV,
                        drift_matrix, japanese, smallest_singular_value)
from .partition import (build_fine_partition, build_radial_pair, commutator_matrix,
                        semiclassical_parameters, select_nu)
from .potential import log_weight, paper_constants, taylor_linear, taylor_quadratic

log = logging.getLogger(__name__)

WEIGHTS = ("Op", "grad", "hess", "Dq")


@dataclass
class EstimateReport:
    inequality: str
    value: float
    value_name: str
    disc: dict
    per_term: dict = field(default_factory=dict)
    certificate: np.ndarray | None = None
    seed: int = 0
    runtime_ms: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_json(self):
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, np.floating):
                return clean(float(x))
            if isinstance(x, np.integer):
                return int(x)
            return x

        out = {
            "inequality": self.inequality,
            self.value_name: self.value,
            "per_term": self.per_term,
            "disc": self.disc,
            "seed": self.seed,
            "runtime_ms": self.runtime_ms,
        }
        out.update(self.extras)
        return clean(out)


def _columns(disc, interior):
    if interior is None or interior is False:
        return np.arange(disc.dim)
    fraction = 0.5 if interior is True else float(interior)
    return disc.interior_dofs(fraction)


def _dense_sub(M, cols):
    M = M.matrix if hasattr(M, "matrix") else M
    if sp.issparse(M):
        return M.tocsr()[cols][:, cols].toarray()
    return np.asarray(M)[np.ix_(cols, cols)]


def _gram(M, cols):
    """Principal submatrix of M^T M on ``cols`` (the form u -> ||M u||^2 restricted)."""
    M = M.matrix if hasattr(M, "matrix") else M
    Mc = M.tocsc()[:, cols]
    G = (Mc.T @ Mc).toarray()
    return 0.5 * (G + G.T)


def _lowest_pair(A, B=None):
    w, v = sla.eigh(A, B, subset_by_index=[0, 0])
    return float(w[0]), v[:, 0]


def _disc_meta(disc):
    return {"Nq": disc.Nq, "Np": disc.Np, "L": disc.L, "bc": disc.bc, "d": disc.d}


def _square_weight(W):
    M = W.matrix
    return (M @ M).tocsr()


# -- degree <= 2 bounds ------------------------------------------------------

def bnv_forms(V, disc, cols):
    """Left and right quadratic forms of the remainder estimate on ``cols``.

    left:  ||K u||^2 + A_V ||u||^2
    right: ||O_p u||^2 + ||X_V u||^2 + ||<grad V>^{2/3} u||^2 + ||<D_q>^{2/3} u||^2
    """
    consts = paper_constants(V)
    K = assemble_KV(V, disc)
    X = assemble_XV(V, disc)
    Op = assemble_Op(disc)
    g = japanese(np.linalg.norm(V.gradient(disc.points), axis=-1)) ** (2.0 / 3.0)
    Ip = sp.identity(disc.n_p, format="csr")
    G2 = sp.kron(sp.diags(g ** 2), Ip, format="csr")
    D2 = _fourier_symbol(disc, lambda k: japanese(k) ** (4.0 / 3.0))
    terms = {
        "Op": _gram(Op, cols),
        "XV": _gram(X, cols),
        "grad": _dense_sub(G2, cols),
        "Dq": np.kron(D2, np.eye(disc.n_p))[np.ix_(cols, cols)],
    }
    left = _gram(K, cols) + consts.a_v * np.eye(len(cols))
    right = sum(terms.values())
    return left, 0.5 * (right + right.T), terms, consts


def verify_bnv_remainder(V, disc, interior=True, seed=0):
    """Largest c with ||Ku||^2 + A_V||u||^2 >= c (sum of the four norms) on the grid."""
    t0 = time.perf_counter()
    if V.degree > 2:
        raise ValueError("verify_bnv_remainder needs a polynomial of degree <= 2")
    cols = _columns(disc, interior)
    left, right, terms, consts = bnv_forms(V, disc, cols)
    c, vec = _lowest_pair(left, right)
    vec = vec / math.sqrt(vec @ vec)
    per_term = {k: float(vec @ T @ vec) for k, T in terms.items()}
    return EstimateReport("bnv_remainder", c, "c_star", _disc_meta(disc), per_term, vec, seed,
                          1e3 * (time.perf_counter() - t0),
                          {"A_V": consts.a_v, "interior": bool(interior)})


def bnv_ratio(V, disc, u):
    """lhs/rhs of the remainder estimate for one full-grid state ``u``."""
    cols = np.arange(disc.dim)
    left, right, _, _ = bnv_forms(V, disc, cols)
    return float(u @ left @ u) / float(u @ right @ u)


def verify_bnv_lower(V, disc, interior=True, method="auto", seed=0):
    """sigma_min(K_V)^2 / B_V as the empirical constant of ||K_V u||^2 >= c B_V ||u||^2."""
    t0 = time.perf_counter()
    consts = paper_constants(V)
    if not consts.hypothesis_nondegenerate:
        raise HypothesisViolated("Tr_- + min|grad V| = 0: the lower bound has no content")
    K = assemble_KV(V, disc)
    cols = _columns(disc, interior)
    sigma = smallest_singular_value(K, columns=cols, method=method, seed=seed)
    c = sigma ** 2 / consts.b_v
    return EstimateReport("bnv_lower", c, "c_star", _disc_meta(disc), {}, None, seed,
                          1e3 * (time.perf_counter() - t0),
                          {"B_V": consts.b_v, "sigma_min": sigma, "interior": bool(interior)})


# -- main theorem ----------------------------------------------------------

def main_theorem_forms(V, disc, cols, weights=WEIGHTS, convention="opnorm", weight_scale=1.0):
    """(K^T K, {name: Lambda_i^2}) restricted to ``cols``; Lambda_i scaled by ``weight_scale``."""
    KK = _gram(assemble_KV(V, disc), cols)
    lam = {}
    for name in weights:
        if name not in WEIGHTS:
            raise ValueError(f"unknown weight {name!r}; expected a subset of {WEIGHTS}")
        W2 = _square_weight(assemble_weight(name, V, disc, convention))
        sub = _dense_sub(W2, cols)
        lam[name] = weight_scale ** 2 * 0.5 * (sub + sub.T)
    return KK, lam


def _min_eig(M):
    if M.shape[0] <= DENSE_LIMIT:
        return _lowest_pair(M)
    from scipy.sparse.linalg import eigsh

    w, v = eigsh(M, k=1, which="SA")
    return float(w[0]), v[:, 0]


def verify_main_theorem(V, disc, C_max=1e6, C_min=1.0, rtol=5e-4, weights=WEIGHTS,
                        convention="opnorm", weight_scale=1.0, interior=True, psd_tol=1e-9,
                        seed=0):
    """Smallest C in [C_min, C_max] with K^T K + C I - (1/C) sum Lambda_i^2 >= 0.

    The form is increasing in C, so bisection in log C applies. The bracket is
    refined until C_hi / C_lo < 1 + rtol; the default keeps 0.999 C* below the
    last rejected value. The certificate is the lowest eigenvector at 0.999 C*.
    """
    t0 = time.perf_counter()
    cols = _columns(disc, interior)
    KK, lam = main_theorem_forms(V, disc, cols, weights, convention, weight_scale)
    n = len(cols)
    S = sum(lam.values()) if lam else np.zeros((n, n))
    s_norm = float(np.abs(S).sum(axis=1).max()) if lam else 0.0

    def form(C):
        return KK + C * np.eye(n) - S / C

    def admissible(C):
        w, v = _min_eig(form(C))
        return w >= -psd_tol * (C + s_norm / C), w, v

    evaluations = 0
    ok, w_lo, _ = admissible(C_min)
    evaluations += 1
    meta = _disc_meta(disc)
    if ok:
        return EstimateReport("main_theorem", C_min, "C_star", meta, {k: 0.0 for k in lam}, None, seed,
                              1e3 * (time.perf_counter() - t0),
                              {"weights": list(lam), "evaluations": evaluations,
                               "lower_endpoint_admissible": True, "min_eigenvalue": w_lo})
    ok, w_hi, _ = admissible(C_max)
    evaluations += 1
    if not ok:
        raise NotFound(f"form is not PSD at C_max={C_max:g}", min_eigenvalue=w_hi)
    lo, hi = C_min, C_max
    while hi / lo >= 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        ok, _, _ = admissible(mid)
        evaluations += 1
        if ok:
            hi = mid
        else:
            lo = mid
    C_star = hi
    w_cert, cert = _min_eig(form(0.999 * C_star))
    cert = cert / math.sqrt(cert @ cert)
    per_term = {k: float(cert @ M @ cert) for k, M in lam.items()}
    extras = {
        "weights": list(lam),
        "evaluations": evaluations,
        "lower_endpoint_admissible": False,
        "certificate_value_below": float(cert @ form(0.999 * C_star) @ cert),
        "min_eigenvalue_above": float(_min_eig(form(1.001 * C_star))[0]),
        "psd_scale": C_star + s_norm / C_star,
        "interior": bool(interior),
        "convention": convention,
        "weight_scale": weight_scale,
    }
    return EstimateReport("main_theorem", C_star, "C_star", meta, per_term, cert, seed,
                          1e3 * (time.perf_counter() - t0), extras)


def quadratic_form_value(V, disc, u, C, weights=WEIGHTS, convention="opnorm", interior=True):
    """||K u||^2 + C ||u||^2 - (1/C) sum ||Lambda_i u||^2 for a state on the restricted columns."""
    cols = _columns(disc, interior)
    KK, lam = main_theorem_forms(V, disc, cols, weights, convention)
    S = sum(lam.values()) if lam else 0.0
    return float(u @ KK @ u + C * (u @ u) - (u @ S @ u if lam else 0.0) / C)


# -- inf inequality -----------------------------------------------------------

@dataclass(frozen=True)
class InfInequalityReport:
    x: np.ndarray
    t_star: np.ndarray
    infimum: np.ndarray
    ratio: np.ndarray

    @property
    def sup_ratio(self):
        return float(self.ratio.max())

    @property
    def argsup(self):
        return float(self.x[int(np.argmax(self.ratio))])


def inf_log_plus_t(x, t_min=2.0):
    """(t*, inf_{t >= t_min} x / log t + t) by bounded minimisation in log t."""
    if x < 1.0:
        raise ValueError("x must be >= 1")
    lo, hi = math.log(t_min), math.log(x + t_min)

    def obj(s):
        return x / s + math.exp(s)

    res = optimize.minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12 * max(1.0, hi)})
    cands = [(obj(lo), lo), (float(res.fun), float(res.x)), (obj(hi), hi)]
    val, s = min(cands)
    return math.exp(s), val


def verify_inf_inequality(x_samples, t_min=2.0):
    """Ratios L(x) / inf_{t >= t_min}(x/log t + t); their sup is the empirical constant."""
    x = np.asarray(sorted(float(v) for v in x_samples))
    ts, infs = zip(*(inf_log_plus_t(v, t_min) for v in x))
    infs = np.array(infs)
    ratio = log_weight(x) / infs
    ratio = np.atleast_1d(ratio)
    return InfInequalityReport(x=x, t_star=np.array(ts), infimum=infs, ratio=ratio)


# -- localisation pipeline -----------------------------------------------------

def error_ratios(r, nu, j):
    """Both error terms of the patch localisation divided by H / log(H)^2."""
    h, H = semiclassical_parameters(r, j)
    lnh = abs(math.log(h))
    scale = H / math.log(H) ** 2
    taylor = (lnh ** 2 * h ** (2 * nu)) ** 2 / h
    ims = lnh ** -2 * h ** (1.0 / (r - 1.0) - 2 * nu)
    return {"h": h, "H": H, "taylor_error": taylor, "ims_error": ims,
            "ratio_taylor": taylor / scale, "ratio_ims": ims / scale}


def _shell_distance(points, crit, inner, outer):
    """Euclidean distance to the cone segments {lam k : inner <= lam <= outer}."""
    points = np.atleast_2d(points)
    if len(crit) == 0:
        return np.full(len(points), np.inf), np.zeros_like(points)
    best = np.full(len(points), np.inf)
    nearest = np.zeros_like(points)
    for k in crit:
        lam = np.clip(points @ k, inner, outer)
        foot = lam[:, None] * k[None, :]
        dist = np.linalg.norm(points - foot, axis=1)
        better = dist < best
        best[better] = dist[better]
        nearest[better] = foot[better]
    return best, nearest


def classify_patches(partition, crit_points, eps1):
    """Case 1 (support meets d < eps1) or Case 2 (support inside d >= eps1) per patch.

    The distance to K_0 is 1-Lipschitz, so a ball of radius rho lies in
    {d >= eps1} iff its centre has d >= eps1 + rho. Straddling patches are
    Case 1 and are also listed as ambiguous.
    """
    inner, outer = partition.shell
    dist, nearest = _shell_distance(partition.centers, np.atleast_2d(crit_points).reshape(-1, partition.d),
                                    inner, outer)
    rho = partition.radius
    case = np.where(dist >= eps1 + rho, 2, 1)
    ambiguous = np.flatnonzero(np.abs(dist - eps1) < rho)
    return case, ambiguous, dist, nearest


def _shell_state(disc, modes=(1.0, 0.5)):
    pair = build_radial_pair()
    rho = np.linalg.norm(disc.points, axis=1)
    profile = pair.phi(rho)[0]
    coeffs = np.zeros(disc.Np ** disc.d)
    coeffs[: len(modes)] = modes
    u = disc.product_state(profile, coeffs)
    return u / disc.norm(u)


def localization_pipeline_trace(V, j, disc=None, report=None, nu=None, evaluate=True,
                                state=None, eps1=None):
    """Evaluate the patch-localisation chain for K_{j,V} on one shell state.

    ``report`` is an AssumptionReport (computed if omitted). Returned dict
    holds the classification, the two error ratios, and with ``evaluate``
    the slacks of the IMS step, of the 3/4-absorption step and of the
    surrogate-replacement step for each case.
    """
    from .assumption import check_assumption

    if j < 1:
        raise ValueError("the localisation pipeline needs j >= 1 (h = 1 gives |ln h| = 0)")
    r = V.r
    nu = select_nu(r) if nu is None else nu
    if report is None:
        report = check_assumption(V)
    eps1 = report.epsilon1 if eps1 is None else eps1
    h, H = semiclassical_parameters(r, j)
    part = build_fine_partition(h, nu, d=V.d)
    case, ambiguous, dist, nearest = classify_patches(part, report.critical_set.points, eps1)
    if len(ambiguous):
        warnings.warn(f"{len(ambiguous)} patches straddle the eps1 boundary; assigned to Case 1",
                      ClassificationAmbiguous, stacklevel=2)
    out = {
        "j": j, "r": r, "nu": nu, "patch_radius": part.radius, "n_patches": len(part.centers),
        "case1": int((case == 1).sum()), "case2": int((case == 2).sum()),
        "ambiguous": [int(k) for k in ambiguous], "epsilon1": eps1,
        "cases": case, "centers": part.centers,
    }
    out.update(error_ratios(r, nu, j))
    if not evaluate:
        return out

    if disc is None:
        disc = Discretization(d=V.d, Nq=256 if V.d == 1 else 48, Np=8 if V.d == 1 else 4, L=5.5)
    v = _shell_state(disc) if state is None else np.asarray(state, dtype=float)
    K = assemble_Kj(V, j, disc)
    t = 2.0 ** -j
    drift = 2.0 ** (j * (r - 1))
    pts = disc.points
    theta = part.values(pts)
    gtheta = part.gradients(pts)
    V_grid = disc.as_grid(v)
    grad_V = V.gradient(pts)

    lhs = disc.norm(K @ v) ** 2
    loc = comm = 0.0
    ims_err = 2.0 * abs(math.log(h)) ** -2 * h ** (1.0 / (r - 1) - 2 * nu)
    sums = {1: [0.0, 0.0, 0.0, 0.0], 2: [0.0, 0.0, 0.0, 0.0]}  # ||Kw||^2, ||K~w||^2, ||diff||^2, ||w||^2
    drift_err = {1: 0.0, 2: 0.0}
    lower_ratio = {1: math.inf, 2: math.inf}
    for k, (th, gth) in enumerate(zip(theta, gtheta)):
        if not th.any():
            continue
        w = (th[:, None] * V_grid).ravel()
        Kw = K @ w
        kw2 = disc.norm(Kw) ** 2
        w2 = disc.norm(w) ** 2
        loc += kw2
        comm += disc.norm(commutator_matrix(gth, disc, t) @ v) ** 2
        c = int(case[k])
        if c == 2:
            surrogate = taylor_linear(V, part.centers[k])
        else:
            q0 = part.centers[k]
            if dist[k] >= eps1:
                step = nearest[k] - q0
                q0 = q0 + part.radius * (1 - 1e-9) * step / np.linalg.norm(step)
            surrogate = taylor_quadratic(V, q0)
        diff = np.where(th[:, None] > 0, grad_V - surrogate.gradient(pts), 0.0)
        D = drift * drift_matrix(diff, disc)
        Dw = -(D @ w)  # K_{j,V} - K_{j,V~} = -drift (grad V - grad V~) . d_p
        Ktw = Kw - Dw
        s = sums[c]
        s[0] += kw2
        s[1] += disc.norm(Ktw) ** 2
        s[2] += disc.norm(Dw) ** 2
        s[3] += w2
        drift_err[c] = max(drift_err[c], float(np.abs(diff).max()))
        if w2 > 0:
            lower_ratio[c] = min(lower_ratio[c], disc.norm(Ktw) ** 2 / w2 / (H / math.log(H) ** 2))
    w_total = sums[1][3] + sums[2][3]
    out.update({
        "disc": _disc_meta(disc),
        "lhs": lhs,
        "ims_residual": abs(lhs - (loc - comm)) / lhs,
        "slack_absorption": lhs - (0.75 * loc - ims_err * w_total),
        "slack_surrogate": {c: sums[c][0] - (0.5 * sums[c][1] - sums[c][2]) for c in (1, 2)},
        "drift_error_sup": drift_err,
        "drift_error_scale": {1: part.radius ** 2, 2: part.radius},
        "surrogate_lower_ratio": lower_ratio,
        "patch_mass": {c: sums[c][3] for c in (1, 2)},
    })
    return out
