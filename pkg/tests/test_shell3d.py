import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import fd_first, fd_frame, random_points
from confined_shell.errors import DegenerateFrame, InvalidLame
from confined_shell.geometry import BUILTIN_CHARTS, SurfaceDisplacementSample, builtin_chart, eval_frame
from confined_shell.shell3d import (VOIGT, elasticity_tensor, eval_shell_frame, expansion_residuals,
                                    kl_lift, limit_elasticity_tensor, reduced_membrane_tensor,
                                    scaled_strains, simpson_weights, transverse_average)


def plate_frame(n=1):
    return eval_frame(builtin_chart("plate"), np.full((n, 2), 0.5) if n > 1 else np.array([0.5, 0.5]))


# ------------------------------------------------------------- 3D frame

def test_plate_shell_frame_orthonormal():
    sf = eval_shell_frame(plate_frame(), 0.3, 0.7)
    assert np.allclose(sf.g_cov, np.eye(3))
    assert sf.vol == pytest.approx(1.0)
    assert np.all(sf.christoffel3 == 0)


@pytest.mark.parametrize("name", BUILTIN_CHARTS)
def test_midplane_frame_is_surface_frame(name):
    chart = builtin_chart(name)
    fr = eval_frame(chart, random_points(chart, 10, np.random.default_rng(0)))
    sf = eval_shell_frame(fr, 0.2, 0.0)
    assert np.allclose(sf.g_cov, fr.a_cov)
    assert np.allclose(sf.g_con, fr.a_con)


def test_cylinder_covariant_basis_at_top():
    chart = builtin_chart("cylinder")
    y = np.array([math.pi / 2, 0.0])
    fr = eval_frame(chart, y)
    sf = eval_shell_frame(fr, 0.1, 1.0)
    b11 = fd_frame(chart, y)["curv_mixed"][0, 0]
    assert np.allclose(sf.g_cov[0], fr.a_cov[0] * (1 - 0.1 * b11), atol=1e-9)


@pytest.mark.parametrize("name", ["cylinder", "hyperboloid", "sphere_cap"])
def test_shell_frame_matches_fd_of_position(name):
    chart = builtin_chart(name)
    y = random_points(chart, 5, np.random.default_rng(1))
    eps, x3 = 0.15, -0.6

    def Theta(z):
        fr = eval_frame(chart, z)
        return fr.theta + eps * x3 * fr.a_cov[..., 2, :]

    sf = eval_shell_frame(eval_frame(chart, y), eps, x3)
    assert np.allclose(sf.g_cov[..., :2, :], fd_first(Theta, y), atol=1e-8)
    # Christoffel symbols Gamma^p_{a b} = d_a g_b . g^p
    dg = fd_first(lambda z: eval_shell_frame(eval_frame(chart, z), eps, x3).g_cov[..., :2, :].reshape(
        z.shape[:-1] + (6,)), y).reshape(y.shape[:-1] + (2, 2, 3))
    ref = np.einsum("...abi,...pi->...pab", dg, sf.g_con)
    assert np.allclose(sf.christoffel3[..., :, :2, :2], ref, atol=1e-7)


def test_eps_too_large_is_degenerate():
    fr = eval_frame(builtin_chart("cylinder"), np.array([1.0, 1.0]))
    with pytest.raises(DegenerateFrame):
        eval_shell_frame(fr, 2.0, 1.0)


# ------------------------------------------------------------ tensors

def test_elasticity_tensor_plate_values():
    sf = eval_shell_frame(plate_frame(), 0.1, 0.0)
    A = elasticity_tensor(sf, (2.0, 3.0)).components
    assert A[2, 2, 2, 2] == pytest.approx(8.0)
    A = elasticity_tensor(sf, (0.0, 1.0)).components
    assert A[0, 0, 1, 1] == 0.0 and A[0, 1, 0, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("name", BUILTIN_CHARTS)
def test_elasticity_zero_blocks_exact(name):
    chart = builtin_chart(name)
    fr = eval_frame(chart, random_points(chart, 20, np.random.default_rng(2)))
    A = elasticity_tensor(eval_shell_frame(fr, 0.1, 0.8), (1.3, 0.7)).components
    assert np.all(A[..., :2, :2, :2, 2] == 0)
    assert np.all(A[..., :2, 2, 2, 2] == 0)


def test_limit_tensor_examples():
    fr = plate_frame()
    A = limit_elasticity_tensor(fr, (2.0, 3.0)).components
    for a in range(2):
        for s in range(2):
            assert A[a, 2, s, 2] == pytest.approx(3.0 * (a == s))
    A = limit_elasticity_tensor(fr, (1.0, 1.0)).components
    assert np.allclose(A[:2, :2, 2, 2], np.eye(2))


def test_reduced_tensor_examples():
    fr = plate_frame()
    a = reduced_membrane_tensor(fr, (2.0, 3.0))
    assert a[0, 0, 0, 0] == pytest.approx(15.0)
    a = reduced_membrane_tensor(fr, (0.0, 1.0))
    assert a[0, 0, 1, 1] == 0.0 and a[0, 1, 0, 1] == pytest.approx(2.0)
    assert a[0, 0, 0, 0] == pytest.approx(4.0)


@pytest.mark.parametrize("lame", [(0.0, 1.0), (1.0, 1.0), (2.5, 0.4)])
def test_pair_matrix_layout(lame):
    chart = builtin_chart("sphere_cap")
    fr = eval_frame(chart, np.array([0.4, 0.5]))
    T = elasticity_tensor(eval_shell_frame(fr, 0.1, 0.3), lame)
    for I, (i, j) in enumerate(VOIGT):
        for J, (k, l) in enumerate(VOIGT):
            assert T.pair[I, J] == T.components[i, j, k, l]


def test_invalid_lame():
    with pytest.raises(InvalidLame):
        elasticity_tensor(eval_shell_frame(plate_frame(), 0.1, 0.0), (1.0, 0.0))
    with pytest.raises(InvalidLame):
        reduced_membrane_tensor(plate_frame(), (-1.0, 1.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.1, 5.0), st.integers(0, 10_000))
def test_static_condensation_property(lam, mu, seed):
    """The reduced tensor is the condensed A(0) integrated over x3 in [-1, 1] (factor 2)."""
    chart = builtin_chart("hyperboloid")
    fr = eval_frame(chart, random_points(chart, 3, np.random.default_rng(seed)))
    A0 = limit_elasticity_tensor(fr, (lam, mu)).components
    cond = A0[..., :2, :2, :2, :2] - np.einsum("...ab,...st->...abst", A0[..., :2, :2, 2, 2],
                                               A0[..., 2, 2, :2, :2]) / A0[..., 2, 2, 2, 2, None, None, None, None]
    assert np.allclose(reduced_membrane_tensor(fr, (lam, mu)), 2.0 * cond, atol=1e-12 * (lam + mu + 1))


def test_coercivity_constant_stable_across_eps():
    chart = builtin_chart("cylinder")
    rng = np.random.default_rng(3)
    fr = eval_frame(chart, random_points(chart, 50, rng))
    x3 = rng.uniform(-1, 1, 50)
    W = np.array([1, 1, 1, 2, 2, 2.0])
    t = rng.normal(size=(1000, 6))

    def bound(A):
        # A^{ijkl} t_kl t_ij over |t|^2 for symmetric t stored in pair form
        q = np.einsum("pI,nIJ,pJ->np", t * W, A, t * W)
        return float(np.min(q / ((t * t) @ W)))

    limit = bound(limit_elasticity_tensor(fr, (1.0, 1.0)).pair)
    bounds = [bound(elasticity_tensor(eval_shell_frame(fr, e, x3), (1.0, 1.0)).pair)
              for e in (0.2, 0.1, 0.05, 0.01)]
    assert min(bounds) > 0.5 * limit > 0
    assert abs(bounds[-1] - limit) < 0.05 * limit


# ------------------------------------------------------------ strains

def test_scaled_strain_examples():
    sf = eval_shell_frame(plate_frame(), 0.5, 0.2)
    grad = np.zeros((3, 3))
    grad[2, 2] = 1.0
    e = scaled_strains(sf, 0.5, np.array([0, 0, 0.2]), grad)
    assert e[2, 2] == pytest.approx(2.0)
    assert np.count_nonzero(e) == 1
    grad = np.zeros((3, 3))
    grad[0, 2] = 1.0
    e = scaled_strains(sf, 0.5, np.array([0.2, 0, 0]), grad)
    assert e[0, 2] == pytest.approx(1.0) and e[2, 0] == pytest.approx(1.0)
    assert np.count_nonzero(e) == 2
    assert np.all(scaled_strains(sf, 0.5, np.zeros(3), np.zeros((3, 3))) == 0)


@pytest.mark.parametrize("eps", [0.3, 0.05])
def test_scaled_strains_compose_change_of_variables(eps):
    """Scaled strains of v(y, x3) = v_eps(y, eps x3) equal the physical strains of v_eps."""
    chart = builtin_chart("hyperboloid")
    rng = np.random.default_rng(4)
    y = random_points(chart, 8, rng)
    x3 = rng.uniform(-1, 1, 8)
    fr = eval_frame(chart, y)
    sf = eval_shell_frame(fr, eps, x3)
    c = rng.normal(size=(3, 3))

    def v_phys(z, t):  # analytic field in (y1, y2, unscaled transverse coordinate t)
        arg = c[:, 0] * z[..., 0, None] + c[:, 1] * z[..., 1, None] + c[:, 2] * t[..., None]
        return np.sin(arg)

    t = eps * x3
    val = v_phys(y, t)
    arg = c[:, 0] * y[:, 0, None] + c[:, 1] * y[:, 1, None] + c[:, 2] * t[:, None]
    grad_phys = np.cos(arg)[..., None] * c[None]          # d/dy1, d/dy2, d/dt
    grad_scaled = grad_phys.copy()
    grad_scaled[..., 2] *= eps                            # chain rule for x3 -> eps x3
    e_scaled = scaled_strains(sf, eps, val, grad_scaled)
    sym = 0.5 * (grad_phys + np.swapaxes(grad_phys, -1, -2))
    e_phys = sym - np.einsum("...pij,...p->...ij", sf.christoffel3, val)
    assert np.allclose(e_scaled, e_phys, atol=1e-13)


# --------------------------------------------------------- expansions

def _by_quantity(records):
    out = {}
    for r in records:
        out.setdefault(r["quantity"], []).append(r)
    return out


def test_expansions_on_cylinder():
    rec = _by_quantity(expansion_residuals(builtin_chart("cylinder"), (1.0, 1.0), [1e-1, 1e-2, 1e-3]))
    assert 0.9 <= rec["A"][0]["fitted_slope"] <= 1.1
    assert 0.9 <= rec["g"][0]["fitted_slope"] <= 1.1
    assert 1.8 <= rec["Gamma_sa3"][0]["fitted_slope"] <= 2.2
    for q in ("Gamma_sab", "Gamma_3ab", "g_a", "g_con"):
        assert rec[q][0]["fitted_slope"] >= 1.8 or rec[q][-1]["residual"] < 1e-12, q


def test_expansions_vanish_on_plate():
    recs = expansion_residuals(builtin_chart("plate"), (1.0, 1.0), [1e-1, 1e-2, 1e-3])
    assert all(r["residual"] == 0.0 for r in recs)
    assert all(math.isnan(r["fitted_slope"]) for r in recs)


# ----------------------------------------------------------- KL lift

def test_transverse_average_examples():
    assert transverse_average(lambda x: x) == pytest.approx(0.0, abs=1e-15)
    assert transverse_average(lambda x: x * x) == pytest.approx(1 / 3)
    assert transverse_average(lambda x: 7.0) == pytest.approx(7.0)
    z = np.linspace(-1, 1, 5)
    assert transverse_average(z**2) == pytest.approx(1 / 3)
    assert transverse_average(z) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        simpson_weights(3)


def test_kl_lift_of_zero_is_zero():
    chart = builtin_chart("cylinder")
    fr = eval_frame(chart, random_points(chart, 6, np.random.default_rng(5)))
    kl = kl_lift(fr, SurfaceDisplacementSample.zeros((6,)), 0.1)
    assert np.allclose(kl.a3_def, fr.a_cov[:, 2])
    for x3 in (-1.0, 0.3, 1.0):
        assert np.allclose(kl(x3), 0.0, atol=1e-15)


def test_kl_lift_plate_vertical_translation():
    fr = plate_frame(4)
    z = SurfaceDisplacementSample.zeros((4,))
    z.eta[:, 2] = 0.3
    kl = kl_lift(fr, z, 0.2)
    for x3 in (-1.0, 0.0, 0.5):
        assert np.allclose(kl(x3), [0, 0, 0.3])


def _random_sample(y, rng, amp=0.1):
    c = amp * rng.normal(size=3)
    k = rng.normal(size=(3, 2))
    s, cs = np.sin(y @ k.T), np.cos(y @ k.T)
    return SurfaceDisplacementSample(c * s, (c * cs)[..., None] * k,
                                     -(c[2] * s[..., 2])[..., None, None] * np.outer(k[2], k[2]))


def test_kl_lift_keeps_fibres_normal_and_unit_length():
    chart = builtin_chart("sphere_cap")
    rng = np.random.default_rng(6)
    fr = eval_frame(chart, random_points(chart, 10, rng))
    kl = kl_lift(fr, _random_sample(fr.y, rng), 0.1)
    mid = kl.position(0.0)
    for x3 in (-1.0, 0.5, 1.0):
        d = kl.position(x3) - mid
        assert np.allclose(d, 0.1 * x3 * kl.a3_def, atol=1e-13)


def test_kl_average_identities():
    chart = builtin_chart("cylinder")
    rng = np.random.default_rng(7)
    fr = eval_frame(chart, random_points(chart, 30, rng))
    eps = 0.05
    kl = kl_lift(fr, _random_sample(fr.y, rng), eps)
    avg = transverse_average(kl)
    mid = kl(0.0)
    assert np.allclose(avg[:, 2], mid[:, 2], atol=1e-14)
    # correction term with coefficient 1/3 under the normalised mean
    bterm = np.einsum("nbt,nt->nb", fr.curv_cov, np.einsum("ni,nti->nt", kl.a3_def, fr.a_con[:, :2]))
    assert np.allclose(avg[:, :2], mid[:, :2] - eps**2 / 3 * bterm, atol=1e-14)
    assert np.allclose(kl.closed_form_average(), avg, atol=1e-14)
