import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kfp.errors import SupportViolation
from kfp.operators import Discretization, assemble_Kj, assemble_KV
from kfp.partition import (INNER, OUTER, build_fine_partition, build_radial_pair, dyadic_shell, ims_residual,
                           normalize_dyadic, nu_bounds, patch_radius, radial_cutoff, scale_state,
                           scaled_norm_check, select_nu, semiclassical_parameters, smooth_step)
from kfp.potential import HomogeneousPotential


@pytest.fixture(scope="module")
def pair():
    return build_radial_pair()


@pytest.fixture(scope="module")
def dyadic(pair):
    return normalize_dyadic(pair, radius=100.0)


def random_points(rng, n, d, radius):
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * rng.uniform(0, radius, n)[:, None]


# -- profiles -----------------------------------------------------------------------

def test_smooth_step_limits_and_derivative():
    t = np.linspace(-0.5, 1.5, 401)
    val, der = smooth_step(t)
    assert np.all(val[t <= 0] == 0) and np.all(val[t >= 1] == 1)
    assert np.all(np.diff(val) >= 0)
    step = 1e-6
    inner = t[(t > 0.01) & (t < 0.99)]
    fd = (smooth_step(inner + step)[0] - smooth_step(inner - step)[0]) / (2 * step)
    np.testing.assert_allclose(smooth_step(inner)[1], fd, atol=1e-7)


def test_radial_cutoff_plateau_and_support():
    rho = np.array([0.0, 0.5, 0.75, 1.0, 4 / 3, 2.0])
    val, _ = radial_cutoff(rho, 0.75, 4 / 3)
    assert val[0] == val[1] == val[2] == 1.0
    assert 0 < val[3] < 1
    assert val[4] == val[5] == 0.0


def test_pair_examples(pair):
    assert pair.chi(0.0)[0] == 1.0 and pair.phi(0.0)[0] == 0.0
    x = 1.0
    assert pair.chi(x)[0] + pair.phi(x)[0] + pair.phi(x / 2)[0] == pytest.approx(1.0, abs=1e-14)
    assert pair.chi(8 / 3)[0] == 0.0 and pair.phi(8 / 3)[0] == 0.0 and pair.phi(0.75)[0] == 0.0


def test_dyadic_sum_is_one(pair, rng):
    x = np.concatenate([np.linspace(0, 50, 5001), rng.uniform(0, 1e3, 5000)])
    assert np.abs(pair.dyadic_sum(x) - 1.0).max() < 1e-10


def test_phi_derivative_against_difference_quotient(pair):
    x = np.linspace(0.8, 2.6, 200)
    step = 1e-6
    fd = (pair.phi(x + step)[0] - pair.phi(x - step)[0]) / (2 * step)
    np.testing.assert_allclose(pair.phi(x)[1], fd, atol=1e-7)


# -- normalised dyadic partition -------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 3])
def test_sum_of_squares_and_local_finiteness(dyadic, rng, d):
    q = random_points(rng, 10_000, d, 100.0)
    vals = dyadic.values(q)
    assert np.abs((vals ** 2).sum(axis=0) - 1.0).max() < 1e-10
    assert (vals != 0).sum(axis=0).max() <= 3
    assert vals.min() >= 0.0 and vals.max() <= 1.0 + 1e-15


def test_declared_supports(dyadic, rng):
    rho = rng.uniform(0, 100, 20_000)
    vals = dyadic.radial(rho)[0]
    for row, j in enumerate(dyadic.indices):
        lo, hi = dyadic.supports()[j]
        outside = (rho <= lo) | (rho >= hi)
        assert np.all(vals[row][outside] == 0.0)


def test_single_term_plateau_equals_one(dyadic):
    for j in range(1, 6):
        rho = 2.0 ** j * np.linspace(4 / 3, 1.5, 7)
        np.testing.assert_allclose(dyadic.radial(rho)[0][j + 1], 1.0, atol=1e-15)
    assert np.all(dyadic.radial(np.linspace(0, 0.75, 5))[0][0] == 1.0)


def test_scale_covariance(dyadic):
    # chi_j(q) = chi_1(2^{1-j} q) exactly for j >= 2
    rho = np.linspace(0.0, 90.0, 4001)
    vals = dyadic.radial(rho)[0]
    for j in range(2, 6):
        shifted = dyadic.radial(rho * 2.0 ** (1 - j))[0][2]
        np.testing.assert_allclose(vals[j + 1], shifted, atol=1e-14)
    # chi_j(q) = chi_0(2^-j q) holds once |2^-j q| >= 4/3
    for j in range(1, 5):
        far = rho[rho * 2.0 ** -j >= 4 / 3]
        np.testing.assert_allclose(dyadic.radial(far)[0][j + 1], dyadic.radial(far / 2.0 ** j)[0][1], atol=1e-14)


def test_dyadic_gradient_against_difference_quotient(dyadic, rng):
    q = random_points(rng, 200, 2, 20.0)
    step = 1e-6
    grads = dyadic.gradients(q)
    for a in range(2):
        e = np.zeros(2)
        e[a] = step
        fd = (dyadic.values(q + e) - dyadic.values(q - e)) / (2 * step)
        np.testing.assert_allclose(grads[..., a], fd, atol=1e-6)


# -- exponent selection and semiclassical parameters -----------------------------------

def test_select_nu_examples():
    assert select_nu(3) == pytest.approx(11 / 32)
    assert select_nu(10) == pytest.approx(5 / 24)
    assert select_nu(50) == pytest.approx(5 / 24)
    with pytest.raises(ValueError):
        select_nu(2)


@pytest.mark.parametrize("r", range(3, 10))
def test_select_nu_strictly_inside(r):
    lo, hi = nu_bounds(r)
    nu = select_nu(r)
    assert nu - lo > 1e-6 and hi - nu > 1e-6


@given(st.floats(2.05, 1e4))
def test_select_nu_inside_for_real_degrees(r):
    lo, hi = nu_bounds(r)
    assert lo < select_nu(r) < hi


@pytest.mark.parametrize("r", range(3, 10))
def test_semiclassical_bookkeeping(r):
    for j in range(1, 7):
        h, H = semiclassical_parameters(r, j)
        assert h == pytest.approx(2.0 ** (-2 * (r - 1) * j), rel=1e-12)
        assert H == pytest.approx(2.0 ** (j * (r - 2)), rel=1e-12)


# -- fine partition ------------------------------------------------------------------

def test_patch_radius_examples():
    assert patch_radius(2.0 ** -6, 11 / 32) == pytest.approx(0.99, abs=0.01)
    assert patch_radius(2.0 ** -12, 11 / 32) == pytest.approx(0.48, abs=0.01)


def _shell(rng, n, d, inner, outer):
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * rng.uniform(inner, outer, n)[:, None]


@pytest.mark.parametrize("d,h", [(1, 2.0 ** -12), (2, 2.0 ** -12), (2, 2.0 ** -20), (3, 2.0 ** -12)])
def test_fine_partition_properties(rng, d, h):
    fp = build_fine_partition(h, 11 / 32, d=d)
    q = _shell(rng, 2000, d, INNER, OUTER)
    vals = fp.values(q)
    assert np.abs((vals ** 2).sum(axis=0) - 1.0).max() < 1e-8
    assert (vals > 0).sum(axis=0).max() <= 3 ** d
    # plateau: theta_k = 1 on B(q_k, rho/2)
    central = fp.values(fp.centers[:50])
    np.testing.assert_allclose(central[np.arange(min(50, len(fp.centers))), np.arange(min(50, len(fp.centers)))],
                               1.0, atol=1e-15)
    assert fp.gradient_constant(q) < 20.0


def test_fine_gradient_constant_is_scale_free(rng):
    # G is a property of the unit profile and lattice, not of h
    q = _shell(rng, 20_000, 2, INNER, OUTER)
    gs = [build_fine_partition(h, 11 / 32, d=2).gradient_constant(q) for h in (2.0 ** -12, 2.0 ** -16, 2.0 ** -20)]
    assert max(gs) / min(gs) < 1.05


def test_fine_gradient_against_difference_quotient(rng):
    fp = build_fine_partition(2.0 ** -12, 11 / 32, d=2)
    q = _shell(rng, 100, 2, 1.0, 2.0)
    step = 1e-7
    grads = fp.gradients(q)
    for a in range(2):
        e = np.zeros(2)
        e[a] = step
        fd = (fp.values(q + e) - fp.values(q - e)) / (2 * step)
        np.testing.assert_allclose(grads[..., a], fd, atol=1e-5)


def test_fine_partition_rejects_wide_patches():
    with pytest.raises(ValueError, match="shell width"):
        build_fine_partition(0.05, 0.01)
    with pytest.raises(ValueError):
        build_fine_partition(1.5, 0.3)


# -- IMS localisation ----------------------------------------------------------------

def smooth_state(disc, width, modes=(1.0, 0.5, 0.2), center=0.0):
    q = disc.points[:, 0]
    prof = np.exp(-(q - center) ** 2 / (2 * width ** 2)) * (1 + 0.3 * np.sin(2 * q))
    return disc.product_state(prof, list(modes))


def test_ims_trivial_on_plateau(dyadic, quartic_1d):
    # u supported where chi_{-1} = 1: no commutator, identity is exact
    disc = Discretization(Nq=96, Np=16, L=3)
    u = smooth_state(disc, 0.1)
    rep = ims_residual(assemble_KV(quartic_1d, disc), dyadic, u)
    assert rep.commutator < 1e-20 * rep.lhs
    assert rep.residual < 1e-12


def gaussian_state(disc, width, center):
    q = disc.points[:, 0]
    return disc.product_state(np.exp(-(q - center) ** 2 / (2 * width ** 2)), [1.0, 0.5, 0.2])


def test_ims_identity_smooth_states(dyadic, quartic_1d):
    # states straddling the chi_{-1} / chi_0 transition; the cutoffs need ~250 points to resolve
    disc = Discretization(Nq=256, Np=16, L=3)
    K = assemble_KV(quartic_1d, disc)
    for width, center in [(0.1, 0.7), (0.12, -0.9), (0.08, 1.0)]:
        rep = ims_residual(K, dyadic, gaussian_state(disc, width, center))
        assert rep.residual < 1e-6
        assert rep.commutator > 1e-4 * rep.lhs
        assert rep.inequality_slack >= 0
        assert rep.nonzero_max <= 3


def test_ims_identity_scaled_operator(dyadic):
    V = HomogeneousPotential(1, [(-1.0, (4,))])
    disc = Discretization(Nq=256, Np=12, L=4)
    K = assemble_Kj(V, 1, disc)
    rep = ims_residual(K, dyadic, smooth_state(disc, 0.4, center=0.8))
    assert rep.residual < 1e-6 and rep.inequality_slack >= 0


# -- dyadic scaling ------------------------------------------------------------------

def shell_state(disc, j, pair):
    q = np.abs(disc.points[:, 0])
    prof = pair.phi(q / 2.0 ** j)[0] * (1 + 0.2 * np.cos(q))
    return disc.product_state(prof, [1.0, 0.5, 0.25])


@pytest.mark.parametrize("j", [1, 2, 3])
def test_scaling_law(quartic_1d, pair, j):
    disc = Discretization(Nq=128, Np=12, L=2.0 ** j * 3.0)
    u = shell_state(disc, j, pair)
    assert scaled_norm_check(quartic_1d, j, u, disc) < 1e-8


def test_scaling_preserves_l2_norm(pair):
    disc = Discretization(Nq=64, Np=6, L=12.0)
    u = shell_state(disc, 2, pair)
    v, vdisc = scale_state(u, 2, disc)
    assert vdisc.norm(v) == pytest.approx(disc.norm(u), rel=1e-14)


def test_scaling_rejects_unsupported_state(quartic_1d):
    disc = Discretization(Nq=64, Np=6, L=12.0)
    u = smooth_state(disc, 1.0)
    with pytest.raises(SupportViolation):
        scaled_norm_check(quartic_1d, 2, u, disc)


def test_dyadic_shell():
    assert dyadic_shell(0) == (0.75, 8 / 3)
    assert dyadic_shell(3) == (6.0, 64 / 3)
    assert math.isclose(dyadic_shell(1)[1] / dyadic_shell(1)[0], 32 / 9)
