"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from kfp.assumption import check_assumption, compact_resolvent_indicator
from kfp.estimates import error_ratios, quadratic_form_value, verify_bnv_lower, verify_inf_inequality, \
    verify_main_theorem
from kfp.operators import Discretization, assemble_KV, assemble_Op
from kfp.partition import build_radial_pair, ims_residual, normalize_dyadic, nu_bounds, radial_cutoff, \
    scaled_norm_check, select_nu
from kfp.potential import HomogeneousPotential, Polynomial, f_delta, sphere_grid


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, f"criterion {n}: {detail}"

    return report


@pytest.fixture(scope="module")
def quartic():
    return HomogeneousPotential(1, [(1.0, (4,))])


def test_criterion_01_oscillator_exactness(verdict):
    t0 = time.perf_counter()
    disc = Discretization(d=1, Nq=4, Np=32)
    # each oscillator level repeats once per q node
    eig = np.linalg.eigvalsh(assemble_Op(disc).toarray())[::disc.n_q][:16]
    err = float(np.abs(eig - (np.arange(16) + 0.5)).max())
    elapsed = time.perf_counter() - t0
    verdict(1, err < 1e-10 and elapsed < 1.0, f"max |lambda_n - (n+1/2)| = {err:.2e} for n < 16 in {elapsed:.3f} s")


def test_criterion_02_accretivity_identity(verdict, quartic):
    t0 = time.perf_counter()
    disc = Discretization(Nq=64, Np=32, L=8)
    K = assemble_KV(quartic, disc)
    Op = assemble_Op(disc)
    rng = np.random.default_rng(2)
    q = disc.points[:, 0]
    worst = 0.0
    for _ in range(100):
        c = rng.uniform(-1.5, 1.5)
        prof = np.exp(-(q - c) ** 2 / (2 * rng.uniform(0.3, 0.8) ** 2)) * (1 + 0.3 * np.sin(rng.uniform(1, 3) * q))
        u = disc.product_state(prof, rng.standard_normal(8) / (1 + np.arange(8)))
        gap = abs(disc.inner(u, K @ u) - disc.inner(u, Op @ u)) / disc.norm(u) ** 2
        worst = max(worst, gap)
    elapsed = time.perf_counter() - t0
    verdict(2, worst < 1e-10 and elapsed < 5.0,
            f"max |Re<u,Ku> - <u,Op u>| / |u|^2 = {worst:.2e} over 100 states in {elapsed:.2f} s")


def test_criterion_03_partition_identities(verdict, quartic):
    part = normalize_dyadic(build_radial_pair(), radius=100.0)
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((10_000, 2))
    pts *= (rng.uniform(0, 100, 10_000) / np.linalg.norm(pts, axis=1))[:, None]
    sos = float(np.abs((part.values(pts) ** 2).sum(axis=0) - 1.0).max())

    # the interior half of an L = 3 box holds the whole chi_{-1} / chi_0 transition 3/4 < |q| < 4/3
    disc = Discretization(Nq=96, Np=16, L=3.0)
    K = assemble_KV(quartic, disc)
    q = disc.points[:, 0]
    residuals = []
    for center, radius in [(0.0, 1.4), (0.5, 0.9), (0.9, 0.55), (-0.8, 0.65), (1.0, 0.45)]:
        prof = radial_cutoff(np.abs(q - center), 0.0, radius)[0]
        u = disc.product_state(prof, rng.standard_normal(4) / (1 + np.arange(4)))
        residuals.append(ims_residual(K, part, u).residual)
    ims = max(residuals)
    verdict(3, sos < 1e-10 and ims < 1e-6,
            f"sum-of-squares error {sos:.2e} (10^4 points); IMS relative residual max {ims:.2e} at Nq=96 "
            f"(per state {', '.join(f'{r:.1e}' for r in residuals)})")


def test_criterion_04_scaling_law(verdict, quartic):
    pair = build_radial_pair()
    mismatches = []
    for j in (1, 2, 3):
        disc = Discretization(Nq=128, Np=12, L=3.0 * 2.0 ** j)
        qa = np.abs(disc.points[:, 0])
        u = disc.product_state(pair.phi(qa / 2.0 ** j)[0] * (1 + 0.2 * np.cos(qa)), [1.0, 0.5, 0.25])
        mismatches.append(scaled_norm_check(quartic, j, u, disc))
    verdict(4, max(mismatches) < 1e-8,
            "relative mismatch " + ", ".join(f"j={j}: {m:.2e}" for j, m in zip((1, 2, 3), mismatches)))


def test_criterion_05_assumption_checker(verdict):
    abstract = HomogeneousPotential(2, [(-1.0, (4, 0)), (-1.0, (2, 2))])
    t0 = time.perf_counter()
    rep = check_assumption(abstract, grid_resolution=1e-3)
    t_abstract = time.perf_counter() - t0
    pts = rep.critical_set.points
    targets = np.array([[0.0, 1.0], [0.0, -1.0]])
    exact = len(pts) == 2 and all(np.linalg.norm(pts - t, axis=1).min() < 1e-8 for t in targets)
    t0 = time.perf_counter()
    degenerate = check_assumption(HomogeneousPotential(2, [(1.0, (4, 0))]), grid_resolution=1e-3)
    t_degenerate = time.perf_counter() - t0
    ok = (exact and rep.holds and abs(rep.epsilon0 - 2.0) < 1e-6 and not degenerate.holds
          and t_abstract < 30 and t_degenerate < 30)
    verdict(5, ok, f"critical set {np.round(pts, 10).tolist()}, eps0 = {rep.epsilon0:.10f}, "
                   f"q1^4 holds = {degenerate.holds}; {t_abstract:.2f} s and {t_degenerate:.2f} s at resolution 1e-3")


def test_criterion_06_nu_selector(verdict):
    margins = []
    for r in range(3, 10):
        lo, hi = nu_bounds(r)
        nu = select_nu(r)
        margins.append(min(nu - lo, hi - nu))
    verdict(6, min(margins) > 1e-6, f"smallest margin {min(margins):.4g} over r = 3..9")


def test_criterion_07_error_domination(verdict):
    a, b = error_ratios(4, 11 / 32, 2), error_ratios(4, 11 / 32, 6)
    f_taylor = a["ratio_taylor"] / b["ratio_taylor"]
    f_ims = a["ratio_ims"] / b["ratio_ims"]
    verdict(7, f_taylor >= 2 and f_ims >= 2,
            f"r=4, nu=11/32, j=2 -> 6: Taylor ratio {a['ratio_taylor']:.4g} -> {b['ratio_taylor']:.4g} "
            f"(factor {f_taylor:.3g}); IMS ratio {a['ratio_ims']:.4g} -> {b['ratio_ims']:.4g} (factor {f_ims:.3g})")


def test_criterion_08_lower_bound(verdict):
    V = Polynomial(1, [(-0.5, (2,))])
    t0 = time.perf_counter()
    coarse = verify_bnv_lower(V, Discretization(Nq=64, Np=32, L=8), method="dense").value
    fine = verify_bnv_lower(V, Discretization(Nq=96, Np=48, L=8), method="dense").value
    elapsed = time.perf_counter() - t0
    drift = abs(fine - coarse) / coarse
    verdict(8, 0 < coarse < 10 and 0 < fine < 10 and drift < 0.2 and elapsed < 60,
            f"sigma_min^2 / B_V = {coarse:.4f} (Nq=64), {fine:.4f} (Nq=96), change {100 * drift:.2f}% "
            f"in {elapsed:.1f} s")


def test_criterion_09_main_theorem(verdict):
    V = HomogeneousPotential(1, [(-1.0, (4,))])
    disc = Discretization(Nq=64, Np=32, L=8)
    t0 = time.perf_counter()
    rep = verify_main_theorem(V, disc)
    elapsed = time.perf_counter() - t0
    C = rep.value
    below = quadratic_form_value(V, disc, rep.certificate, 0.999 * C)
    above = rep.extras["min_eigenvalue_above"]
    tol = 1e-9 * rep.extras["psd_scale"]
    ok = math.isfinite(C) and C < 1e6 and below < 0 and above >= -tol and elapsed < 300
    verdict(9, ok, f"C* = {C:.5g}; form at 0.999 C* on certificate {below:.3e}; "
                   f"min eigenvalue at 1.001 C* {above:.3e}; {elapsed:.1f} s")


def test_criterion_10_inf_inequality(verdict):
    base = [1.0, 10.0, 1e2, 1e3, 1e6]
    coarse = verify_inf_inequality(base)
    dense = verify_inf_inequality(np.geomspace(1.0, 1e6, 10 * len(base)))
    change = abs(dense.sup_ratio - coarse.sup_ratio) / coarse.sup_ratio
    verdict(10, math.isfinite(coarse.sup_ratio) and change < 0.05,
            f"sup L(x)/inf = {coarse.sup_ratio:.6f} at x = {coarse.argsup:g}; "
            f"tenfold densified {dense.sup_ratio:.6f} (change {100 * change:.3f}%)")


def test_criterion_11_compact_resolvent(verdict):
    V = HomogeneousPotential(2, [(-1.0, (4, 0)), (-1.0, (2, 2))])
    rep = compact_resolvent_indicator(V, 0.5)
    # independent re-evaluation on a finer direction set
    dirs = sphere_grid(2, 2 * math.pi / 1024)
    worst = min(float((f_delta(V, lam * dirs, 0.5) / lam ** rep.exponent).min()) for lam in (2, 4, 8, 16))
    ok = rep.ok and worst >= rep.m_delta * (1 - 1e-6)
    verdict(11, ok, f"exponent {rep.exponent:g}, m_delta = {rep.m_delta:.10f}, worst sampled ratio "
                    f"{min(worst, rep.worst_ratio):.10f}, violations {len(rep.violations)}")
