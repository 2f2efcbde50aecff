import math

import numpy as np
import pytest
import scipy.linalg as sla

from _oracles import fd_frame
from confined_shell.errors import EmptyGamma0, InfeasibleReference, OddLayers
from confined_shell.fem.assembly import (STRAIN_INTERPOLATIONS, ForceField, assemble_3d_form,
                                         assemble_3d_load, assemble_3d_system, assemble_constraints_2d,
                                         assemble_constraints_3d, assemble_flexural_form,
                                         assemble_h1_gram_3d, assemble_koiter_system,
                                         assemble_membrane_form, averaging_matrix, koiter_parts,
                                         make_space, membrane_load, phi_from_F, seminorm_distance,
                                         seminorm_gram, seminorm_gram_3d)
from confined_shell.fem.io import format_system, read_system, write_system
from confined_shell.fem.mesh import build_mesh2d, build_mesh3d
from confined_shell.geometry import HalfSpace, SurfaceDisplacementSample, builtin_chart, eval_frame, gamma
from confined_shell.shell3d import reduced_membrane_tensor

UP = HalfSpace(np.array([0.0, 0.0, 1.0]))
PLATE = builtin_chart("plate")
UNIT = (0.0, 1.0, 0.0, 1.0)


def membrane_vector(m2, fn):
    """Nodal interpolant of fn(y) -> (N, 3) on the membrane2d space."""
    return np.asarray(fn(m2.nodes), float).ravel()


# ---------------------------------------------------------------- meshes

def test_mesh2d_counts():
    m = build_mesh2d(UNIT, 2, 2, ("bottom",))
    assert m.n_nodes == 9 and len(m.clamped_nodes) == 3
    assert np.all(m.nodes[m.clamped_nodes, 1] == 0.0)
    m = build_mesh2d(UNIT, 3, 4, ("left", "right", "bottom", "top"))
    on_edge = (np.isclose(m.nodes[:, 0], 0) | np.isclose(m.nodes[:, 0], 1)
               | np.isclose(m.nodes[:, 1], 0) | np.isclose(m.nodes[:, 1], 1))
    assert set(m.clamped_nodes) == set(np.flatnonzero(on_edge))


def test_mesh2d_errors():
    with pytest.raises(ValueError):
        build_mesh2d(UNIT, 1, 4, ("left",))
    with pytest.raises(EmptyGamma0):
        build_mesh2d(UNIT, 2, 2, ())


def test_mesh3d_counts():
    m2 = build_mesh2d(UNIT, 2, 2, ("bottom",))
    m3 = build_mesh3d(m2, 2)
    assert m3.n_nodes == 27 and len(m3.clamped_nodes) == 9
    assert np.any(m3.x3_levels == 0.0)
    with pytest.raises(OddLayers):
        build_mesh3d(m2, 3)


# ------------------------------------------------------- membrane form

def _plane_stress_oracle(m2, lame):
    """Dense Q1 plane-stress stiffness with moduli of the reduced tensor (flat unit metric)."""
    a = reduced_membrane_tensor(eval_frame(PLATE, np.array([0.5, 0.5])), lame)
    D = np.array([[a[0, 0, 0, 0], a[0, 0, 1, 1], 0], [a[1, 1, 0, 0], a[1, 1, 1, 1], 0], [0, 0, a[0, 1, 0, 1]]])
    g = 1 / math.sqrt(3)
    K = np.zeros((3 * m2.n_nodes,) * 2)
    hx, hy = m2.hx, m2.hy
    for cell in m2.cells:
        for s in (-g, g):
            for t in (-g, g):
                sx, sy = np.array([-1, 1, 1, -1]), np.array([-1, -1, 1, 1])
                dNx = sx * (1 + sy * t) / 4 * 2 / hx
                dNy = sy * (1 + sx * s) / 4 * 2 / hy
                B = np.zeros((3, 12))
                B[0, 0::3] = dNx
                B[1, 1::3] = dNy
                B[2, 0::3] = dNy
                B[2, 1::3] = dNx
                idx = (3 * cell[:, None] + np.arange(3)).ravel()
                K[np.ix_(idx, idx)] += B.T @ D @ B * (hx * hy / 4)
    return K


@pytest.mark.parametrize("lame", [(0.0, 1.0), (1.5, 0.7)])
def test_membrane_form_matches_plane_stress(lame):
    m2 = build_mesh2d(UNIT, 2, 2, ("left",))
    K = assemble_membrane_form(m2, PLATE, lame).toarray()
    assert np.allclose(K, _plane_stress_oracle(m2, lame), atol=1e-12)


def test_membrane_form_hand_value():
    m2 = build_mesh2d(UNIT, 4, 4, ("left",))
    K = assemble_membrane_form(m2, PLATE, (0.0, 1.0))
    x = membrane_vector(m2, lambda y: np.column_stack([y[:, 0], 0 * y[:, 0], 0 * y[:, 0]]))
    # a^{1111} = 4 mu at lambda = 0 (the reduced tensor carries 2 mu)
    assert x @ K @ x == pytest.approx(4.0, rel=1e-13)
    assert np.zeros(K.shape[0]) @ K @ np.zeros(K.shape[0]) == 0.0


# ------------------------------------------------------- flexural form

def koiter_vector(m2, eta_t, w, dw1, dw2, dw12):
    N = m2.n_nodes
    x = np.zeros(6 * N)
    y = m2.nodes
    x[:2 * N] = np.asarray(eta_t(y), float).ravel()
    x[2 * N:] = np.column_stack([w(y), dw1(y), dw2(y), dw12(y)]).ravel()
    return x


def _zero(y):
    return np.zeros(len(y))


def test_flexural_form_hand_value():
    m2 = build_mesh2d(UNIT, 3, 3, ("left",))
    K = assemble_flexural_form(m2, PLATE, (0.0, 1.0))
    x = koiter_vector(m2, lambda y: np.zeros((len(y), 2)), lambda y: y[:, 0] ** 2, lambda y: 2 * y[:, 0],
                      _zero, _zero)
    # a^{1111} (d_11 eta_3)^2 = 4 * 4 over the unit square
    assert x @ K @ x == pytest.approx(16.0, rel=1e-12)


def test_flexural_form_kernel_on_plate():
    m2 = build_mesh2d(UNIT, 3, 3, ("left",))
    K = assemble_flexural_form(m2, PLATE, (1.0, 1.0))
    const = koiter_vector(m2, lambda y: np.zeros((len(y), 2)), lambda y: 0 * y[:, 0] + 1.0, _zero, _zero, _zero)
    lin = koiter_vector(m2, lambda y: np.zeros((len(y), 2)), lambda y: 2 * y[:, 0] - y[:, 1],
                        lambda y: 0 * y[:, 0] + 2, lambda y: 0 * y[:, 0] - 1, _zero)
    scale = np.abs(K).max()
    assert abs(const @ K @ const) < 1e-12 * scale
    assert abs(lin @ K @ lin) < 1e-12 * scale


def test_koiter_stiffness_scaling():
    m2 = build_mesh2d(builtin_chart("cylinder").bounds, 3, 3, ("bottom",))
    chart = builtin_chart("cylinder")
    F = ForceField.constant(F33=1.0)
    KM, KF, LM = koiter_parts(m2, chart, (1.0, 1.0), F)
    for eps in (1.0, 0.3):
        s = assemble_koiter_system(m2, chart, (1.0, 1.0), eps, F)
        assert np.allclose(s.stiffness.toarray(), (eps * KM + eps**3 / 3 * KF).toarray(), atol=1e-13)
        assert np.allclose(s.load, eps * LM, atol=1e-14)


def test_koiter_membrane_part_matches_membrane_space_on_plate():
    m2 = build_mesh2d(UNIT, 3, 3, ("left",))
    KM = assemble_membrane_form(m2, PLATE, (1.0, 1.0), "koiter2d").toarray()
    K2 = assemble_membrane_form(m2, PLATE, (1.0, 1.0)).toarray()
    N = m2.n_nodes
    t2 = (3 * np.arange(N)[:, None] + np.arange(2)).ravel()
    assert np.allclose(KM[:2 * N, :2 * N], K2[np.ix_(t2, t2)], atol=1e-13)
    assert np.allclose(KM[2 * N:], 0.0)  # eta_3 never enters gamma on a plate


# -------------------------------------------------------------- 3D form

def _classical_box_stiffness(m3, lame):
    """Trilinear 3D isotropic stiffness on the box (unit base, x3 in [-1, 1]) at eps = 1."""
    lam, mu = lame
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[np.arange(3), np.arange(3)] += 2 * mu
    C[3:, 3:] = mu * np.eye(3)
    m2 = m3.base
    hx, hy, hz = m2.hx, m2.hy, 2.0 / m3.nz
    corners = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]])
    g = 1 / math.sqrt(3)
    K = np.zeros((3 * m3.n_nodes,) * 2)
    for hexa in m3.hexes:
        idx = (3 * hexa[:, None] + np.arange(3)).ravel()
        for p in [(a, b, c) for a in (-g, g) for b in (-g, g) for c in (-g, g)]:
            p = np.array(p)
            dN = np.empty((8, 3))
            for n, cc in enumerate(corners):
                f = (1 + cc * p) / 2
                for d in range(3):
                    dN[n, d] = cc[d] / 2 * np.prod(np.delete(f, d)) * 2 / (hx, hy, hz)[d]
            B = np.zeros((6, 24))
            for n in range(8):
                B[0, 3 * n] = dN[n, 0]
                B[1, 3 * n + 1] = dN[n, 1]
                B[2, 3 * n + 2] = dN[n, 2]
                B[3, 3 * n + 1], B[3, 3 * n + 2] = dN[n, 2], dN[n, 1]
                B[4, 3 * n], B[4, 3 * n + 2] = dN[n, 2], dN[n, 0]
                B[5, 3 * n], B[5, 3 * n + 1] = dN[n, 1], dN[n, 0]
            K[np.ix_(idx, idx)] += B.T @ C @ B * (hx * hy * hz / 8)
    return K


def test_3d_form_equals_classical_elasticity_on_plate():
    m3 = build_mesh3d(build_mesh2d(UNIT, 2, 2, ("left",)), 2)
    K = assemble_3d_form(m3, PLATE, (1.2, 0.8), 1.0, interpolation="full").toarray()
    assert np.allclose(K, _classical_box_stiffness(m3, (1.2, 0.8)), atol=1e-12)


@pytest.mark.parametrize("interp", STRAIN_INTERPOLATIONS)
def test_3d_form_hand_value(interp):
    m3 = build_mesh3d(build_mesh2d(UNIT, 2, 2, ("left",)), 2)
    K = assemble_3d_form(m3, PLATE, (0.0, 1.0), 0.5, interp)
    v = np.zeros((m3.n_nodes, 3))
    v[:, 2] = m3.nodes[:, 2]
    v = v.ravel()
    # A^{3333} = 2, e_33 = 1 / eps = 2, volume 2
    assert v @ K @ v == pytest.approx(16.0, rel=1e-13)


def test_interpolations_agree_on_linear_fields_of_plate():
    m3 = build_mesh3d(build_mesh2d(UNIT, 3, 3, ("left",)), 2)
    rng = np.random.default_rng(0)
    G = rng.normal(size=(3, 3))
    v = (m3.nodes @ G.T).ravel()
    vals = [v @ assemble_3d_form(m3, PLATE, (1.0, 1.0), 0.3, k) @ v for k in STRAIN_INTERPOLATIONS]
    assert np.allclose(vals, vals[0], rtol=1e-12)


def test_3d_zero_load_and_zero_solution():
    m3 = build_mesh3d(build_mesh2d(UNIT, 2, 2, ("left",)), 2)
    F = ForceField({"33": "0"})
    assert F.is_zero
    assert np.all(assemble_3d_load(m3, PLATE, 0.2, F) == 0)


def test_force_field_validation():
    with pytest.raises(ValueError):
        ForceField({"44": 1.0})
    with pytest.raises(ValueError):
        ForceField({"33": "z * 2"})
    F = ForceField({"31": "y1 + x3"})
    Fv = F.evaluate(np.array([[0.5, 0.0]]), 0.25)
    assert Fv[0, 0, 2] == Fv[0, 2, 0] == pytest.approx(0.75)


# ----------------------------------------------------------------- loads

def test_phi_examples():
    fr = eval_frame(PLATE, np.array([[0.3, 0.3]]))
    phi = phi_from_F(ForceField.constant(F11=1.5, F12=0.5, F22=-1.0), fr, (1.0, 1.0))
    assert np.allclose(phi[0], 2 * np.array([[1.5, 0.5], [0.5, -1.0]]))
    phi = phi_from_F(ForceField.constant(F11=1.0, F33=7.0), fr, (0.0, 1.0))
    assert np.allclose(phi[0], [[2.0, 0.0], [0.0, 0.0]])
    phi = phi_from_F(ForceField.constant(F33=3.0), fr, (1.0, 1.0))
    assert phi[0, 0, 0] == pytest.approx(-2.0)


def test_membrane_load_pairs_phi_with_gamma():
    m2 = build_mesh2d(UNIT, 4, 4, ("left",))
    f = membrane_load(m2, PLATE, (1.0, 1.0), ForceField.constant(F11=1.0, F12=0.25))
    x = membrane_vector(m2, lambda y: np.column_stack([y[:, 0], y[:, 0], 0 * y[:, 0]]))
    # gamma_11 = 1, gamma_12 = 1/2: phi^{11} + 2 phi^{12} gamma_12 = 2 + 2 * 0.5 * 0.5
    assert f @ x == pytest.approx(2.5, rel=1e-13)


# ----------------------------------------------------------- constraints

def test_constraints_2d_plate():
    chart = builtin_chart("plate", offset=(0, 0, 1))
    m2 = build_mesh2d(chart.bounds, 3, 3, ("left",))
    c = assemble_constraints_2d(m2, chart, UP)
    assert len(c) == m2.n_nodes - len(m2.clamped_nodes)
    assert not set(c.node) & set(m2.clamped_nodes)
    assert np.allclose(c.coef, [0, 0, 1]) and np.allclose(c.bound, -1.0)
    assert np.all(c.dofs == 3 * c.node[:, None] + np.arange(3))


def test_constraints_2d_cylinder_node_from_oracle():
    chart = builtin_chart("cylinder", clamped_edges=("top",))
    m2 = build_mesh2d(chart.bounds, 4, 2, chart.clamped_edges)
    c = assemble_constraints_2d(m2, chart, UP)
    y0 = np.array([math.pi / 2, 0.0])
    node = int(np.flatnonzero(np.all(np.isclose(m2.nodes, y0), axis=1))[0])
    r = int(np.flatnonzero(c.node == node)[0])
    assert np.allclose(c.coef[r], fd_frame(chart, y0)["a_con"] @ UP.q, atol=1e-8)
    assert c.bound[r] == pytest.approx(-1.0)


def test_constraints_reject_infeasible_reference():
    m2 = build_mesh2d(UNIT, 2, 2, ("left",))
    with pytest.raises(InfeasibleReference):
        assemble_constraints_2d(m2, builtin_chart("plate", offset=(0, 0, -0.5)), UP)


def test_constraints_3d_plate_and_midplane_consistency():
    chart = builtin_chart("plate", offset=(0, 0, 1))
    m2 = build_mesh2d(chart.bounds, 2, 2, ("left",))
    m3 = build_mesh3d(m2, 4)
    c3 = assemble_constraints_3d(m3, chart, UP, 0.1)
    top = m3.nodes[c3.node, 2] == 1.0
    assert np.allclose(c3.bound[top], -1.1) and np.allclose(c3.coef[top], [0, 0, 1])
    ch = builtin_chart("cylinder")
    m2 = build_mesh2d(ch.bounds, 3, 3, ch.clamped_edges)
    q = HalfSpace.from_vector([0.05, -0.02, 1.0])
    c2 = assemble_constraints_2d(m2, ch, q)
    c3 = assemble_constraints_3d(build_mesh3d(m2, 2), ch, q, 0.1)
    mid = c3.node >= m2.n_nodes
    mid &= c3.node < 2 * m2.n_nodes
    assert np.array_equal(c3.coef[mid], c2.coef)
    assert np.array_equal(c3.bound[mid], c2.bound)


def test_constraints_3d_cylinder_rows_from_frame_oracle():
    chart = builtin_chart("cylinder", swap=True)
    m3 = build_mesh3d(build_mesh2d(chart.bounds, 2, 2, chart.clamped_edges), 2)
    eps = 0.1
    c3 = assemble_constraints_3d(m3, chart, UP, eps)
    r = int(np.flatnonzero(m3.nodes[c3.node, 2] == 1.0)[0])
    y = m3.nodes[c3.node[r], :2]
    ref = fd_frame(chart, y)
    pos = chart.theta(y) + eps * ref["a_cov"][2]
    # g^i(eps) at x3 = 1 via the shifter (I - eps b)^{-1} on the tangential duals
    shift = np.eye(2) - eps * ref["curv_mixed"]
    gcov = np.vstack([shift.T @ ref["a_cov"][:2], ref["a_cov"][2]])
    gcon = np.linalg.inv(gcov @ gcov.T) @ gcov
    assert np.allclose(c3.coef[r], gcon @ UP.q, atol=1e-7)
    assert c3.bound[r] == pytest.approx(-pos @ UP.q, abs=1e-12)


# ---------------------------------------------------------- Gram matrices

def test_seminorm_gram_hand_value_and_distance():
    m2 = build_mesh2d(UNIT, 4, 4, ("left",))
    G = seminorm_gram(m2, PLATE)
    x = membrane_vector(m2, lambda y: np.column_stack([y[:, 0], 0 * y[:, 0], 0 * y[:, 0]]))
    assert x @ G @ x == pytest.approx(1.0, rel=1e-13)
    sp_ = make_space(m2, "membrane2d")
    assert seminorm_distance(PLATE, (sp_, x), (sp_, 0 * x)) == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("name", ["cylinder", "hyperboloid", "sphere_cap"])
def test_seminorm_distance_matches_gram(name):
    chart = builtin_chart(name)
    m2 = build_mesh2d(chart.bounds, 4, 3, chart.clamped_edges)
    x = np.random.default_rng(1).normal(size=3 * m2.n_nodes)
    G = seminorm_gram(m2, chart, order=4)
    sp_ = make_space(m2, "membrane2d")
    assert seminorm_distance(chart, (sp_, x), (sp_, 0 * x)) ** 2 == pytest.approx(x @ G @ x, rel=1e-12)


@pytest.mark.parametrize("name", ["cylinder", "hyperboloid", "sphere_cap"])
def test_first_kind_gram_positive_on_clamped_space(name):
    chart = builtin_chart(name)
    m2 = build_mesh2d(chart.bounds, 5, 5, chart.clamped_edges)
    free = make_space(m2, "membrane2d").free_dofs
    G = seminorm_gram(m2, chart).toarray()[np.ix_(free, free)]
    assert sla.eigvalsh(G)[0] > 1e-10


def test_seminorm_gram_3d_examples():
    m3 = build_mesh3d(build_mesh2d(UNIT, 3, 3, ("left",)), 4)
    G = seminorm_gram_3d(m3, PLATE)
    v = np.zeros((m3.n_nodes, 3))
    v[:, 2] = m3.nodes[:, 2]
    assert v.ravel() @ G @ v.ravel() == pytest.approx(2.0, rel=1e-13)
    eta = np.column_stack([m3.base.nodes[:, 0] ** 2, m3.base.nodes[:, 1], 0 * m3.base.nodes[:, 0]])
    ext = np.tile(eta, (m3.nz + 1, 1)).ravel()
    G2 = seminorm_gram(m3.base, PLATE)
    assert ext @ G @ ext == pytest.approx(eta.ravel() @ G2 @ eta.ravel(), rel=1e-13)
    rigid = np.tile(np.column_stack([0 * eta[:, 0], 0 * eta[:, 0], 0 * eta[:, 0] + 1]), (m3.nz + 1, 1)).ravel()
    assert abs(rigid @ G @ rigid) < 1e-14


def test_averaging_matrix_examples():
    m3 = build_mesh3d(build_mesh2d(UNIT, 2, 2, ("left",)), 4)
    P = averaging_matrix(m3)
    const = np.tile(np.arange(3 * m3.base.n_nodes, dtype=float), m3.nz + 1)
    assert np.allclose(P @ const, np.arange(3 * m3.base.n_nodes))
    x3 = np.repeat(m3.nodes[:, 2], 3)
    assert np.allclose(P @ x3, 0.0, atol=1e-15)
    assert np.allclose(P @ x3**2, 1 / 3)


@pytest.mark.parametrize("name", ["plate", "cylinder", "sphere_cap", "hyperboloid"])
def test_matrices_symmetric_and_psd(name):
    chart = builtin_chart(name)
    m2 = build_mesh2d(chart.bounds, 3, 3, chart.clamped_edges)
    m3 = build_mesh3d(m2, 2)
    rng = np.random.default_rng(2)
    mats = [assemble_membrane_form(m2, chart, (1, 1)), assemble_flexural_form(m2, chart, (1, 1)),
            seminorm_gram(m2, chart), assemble_3d_form(m3, chart, (1, 1), 0.1),
            assemble_h1_gram_3d(m3), seminorm_gram_3d(m3, chart)]
    for K in mats:
        d = K.toarray()
        assert np.max(np.abs(d - d.T)) <= 1e-12 * np.max(np.abs(d))
        for _ in range(5):
            x = rng.normal(size=d.shape[0])
            assert x @ d @ x >= -1e-10 * np.max(np.abs(d)) * (x @ x)


def test_membrane_form_galerkin_consistency():
    """Discrete form on a 64 x 64 cylinder mesh vs an independent fine quadrature of the integral."""
    chart = builtin_chart("cylinder")
    lame = (1.0, 1.0)

    def field(y):
        y1, y2 = y[..., 0], y[..., 1]
        eta = np.stack([np.sin(y1) * y2, 0.5 * np.cos(y2) * y1, 0.3 * np.sin(2 * y1) * y2 ** 2], -1)
        grad = np.stack([
            np.stack([np.cos(y1) * y2, np.sin(y1)], -1),
            np.stack([0.5 * np.cos(y2), -0.5 * np.sin(y2) * y1], -1),
            np.stack([0.6 * np.cos(2 * y1) * y2 ** 2, 0.6 * np.sin(2 * y1) * y2], -1),
        ], -2)
        return eta, grad

    m2 = build_mesh2d(chart.bounds, 64, 64, chart.clamped_edges)
    K = assemble_membrane_form(m2, chart, lame)
    x = field(m2.nodes)[0].ravel()
    discrete = x @ K @ x

    n = 200
    g1, w1 = np.polynomial.legendre.leggauss(n)
    y1a, y1b, y2a, y2b = chart.bounds
    Y1 = (g1 + 1) / 2 * (y1b - y1a) + y1a
    Y2 = (g1 + 1) / 2 * (y2b - y2a) + y2a
    Y = np.stack(np.meshgrid(Y1, Y2, indexing="ij"), -1)
    W = np.outer(w1, w1) * (y1b - y1a) * (y2b - y2a) / 4
    fr = eval_frame(chart, Y)
    eta, grad = field(Y)
    g = gamma(fr, SurfaceDisplacementSample(eta, grad))
    a = reduced_membrane_tensor(fr, lame)
    exact = np.sum(W * fr.sqrt_a * np.einsum("...abst,...st,...ab->...", a, g, g))
    assert abs(discrete - exact) / exact < 1e-3


# ----------------------------------------------------------------- I/O

def test_system_roundtrip(tmp_path):
    chart = builtin_chart("cylinder", swap=True)
    m3 = build_mesh3d(build_mesh2d(chart.bounds, 2, 2, chart.clamped_edges), 2)
    qp = assemble_3d_system(m3, chart, (1, 1), 0.2, ForceField.constant(F33=1.0), UP).to_qp()
    path = tmp_path / "sys.txt"
    write_system(str(path), qp)
    back = read_system(str(path))
    assert (back.H != qp.H).nnz == 0
    assert np.array_equal(back.f, qp.f)
    for attr in ("node", "dofs", "coef", "bound"):
        assert np.array_equal(getattr(back.constraints, attr), getattr(qp.constraints, attr))
    assert format_system(back) == path.read_text()
    lines = path.read_text().splitlines()
    i = lines.index(next(ln for ln in lines if ln.startswith("H ")))
    trip = [tuple(map(int, ln.split()[:2])) for ln in lines[i + 1:i + 1 + qp.H.nnz]]
    assert trip == sorted(trip)
