import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvbolt import (AngularRule, WeightSpec, apply_C, apply_K, apply_Q,
                    build_linearized, collision_frequency, kernel_k, measure_CQ,
                    moments, project_Pi)
from dvbolt.collision import GAIN_CONST, LOSS_CONST, export_kernel_csv, export_nu_csv


def invariants(grid):
    return np.stack([np.ones(grid.size), grid.nodes[:, 0], grid.nodes[:, 1],
                     grid.nodes[:, 2], grid.speed2], axis=0)


def inner_H(grid, a, b):
    return float((grid.weights / grid.maxwellian() * a) @ b)


# ---- kernel -----------------------------------------------------------------


def test_kernel_plugin_value():
    # head-on pair: first exponent collapses since the speeds agree
    val = kernel_k([1, 0, 0], [-1, 0, 0])
    expect = GAIN_CONST * 0.5 * np.exp(-0.5) - LOSS_CONST * 2.0 * np.exp(-0.5)
    assert np.isclose(val, expect, rtol=1e-15)


def test_kernel_loss_term_nonpositive(rng):
    # the subtracted term is always a loss: k + loss >= gain-part >= 0
    for _ in range(100):
        v, vs = rng.normal(size=3), rng.normal(size=3)
        r = np.linalg.norm(v - vs)
        loss = LOSS_CONST * r * np.exp(-0.5 * v @ v)
        assert loss >= 0.0
        assert kernel_k(v, vs) + loss >= 0.0


def test_kernel_singular_diagonal():
    with pytest.raises(ValueError):
        kernel_k([1.0, 2.0, 0.5], [1.0, 2.0, 0.5])


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_kernel_symmetry_identity(vals):
    v = np.array(vals[:3])
    vs = np.array(vals[3:])
    if np.linalg.norm(v - vs) < 1e-6:
        return
    lhs = kernel_k(v, vs) * np.exp(0.5 * v @ v)
    rhs = kernel_k(vs, v) * np.exp(0.5 * vs @ vs)
    scale = max(abs(lhs), abs(rhs), 1e-30)
    assert abs(lhs - rhs) / scale < 1e-12


# ---- collision frequency ----------------------------------------------------


def test_nu_zero_against_monte_carlo():
    # odd lattice so the origin is an actual node
    from dvbolt import build_grid
    grid = build_grid(25, 6.0)
    nu, _, _ = collision_frequency(grid)
    i0 = np.argmin(grid.speed2)
    assert grid.speed2[i0] == 0.0
    # 2 pi E|v*| for a standard 3D Gaussian
    rng = np.random.default_rng(7)
    samples = rng.standard_normal((2_000_000, 3))
    mc = 2 * np.pi * np.linalg.norm(samples, axis=1).mean()
    assert abs(nu[i0] - mc) / mc < 5e-3
    assert abs(nu[i0] - 4 * np.sqrt(2 * np.pi)) / nu[i0] < 5e-3


def test_nu_even_symmetry(grid12):
    nu, _, _ = collision_frequency(grid12)
    flipped = nu.reshape(12, 12, 12)[::-1, ::-1, ::-1].ravel()
    assert np.allclose(nu, flipped, rtol=1e-12, atol=1e-12)


def test_nu_large_speed_asymptote(grid16):
    nu, nu0, nu1 = collision_frequency(grid16)
    edge = np.argmax(grid16.nodes[:, 0] * (np.abs(grid16.nodes[:, 1:]) < 1e-12).all(axis=1))
    speed = abs(grid16.nodes[edge, 0])
    assert speed == grid16.v_max
    assert abs(nu[edge] / speed - 2 * np.pi) / (2 * np.pi) < 0.05
    assert 0 < nu0 <= nu1
    assert np.all(nu > 0)


# ---- linearized operator ----------------------------------------------------


def test_apply_K_zero_and_linearity(op12, rng):
    g = rng.standard_normal(op12.grid.size)
    h = rng.standard_normal(op12.grid.size)
    assert np.all(apply_K(op12, np.zeros_like(g)) == 0.0)
    lhs = apply_K(op12, 1.3 * g - 0.4 * h)
    rhs = 1.3 * apply_K(op12, g) - 0.4 * apply_K(op12, h)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_apply_K_self_adjoint_against_double_sum(op8, rng):
    grid = op8.grid
    M = grid.maxwellian()
    g = rng.standard_normal(grid.size) * M
    h = rng.standard_normal(grid.size) * M
    lhs = inner_H(grid, apply_K(op8, g), h)
    rhs = inner_H(grid, g, apply_K(op8, h))
    # independent oracle: explicit double sum of w_i w_j k_ij g_j h_i / M_i
    K = op8.kernel_matrix
    direct = float(np.einsum("i,ij,j,j,i->", grid.weights / M, K, grid.weights, g, h))
    scale = max(abs(lhs), 1e-30)
    assert abs(lhs - rhs) / scale < 1e-10
    assert abs(lhs - direct) / scale < 1e-10


def test_apply_C_annihilates_equilibrium(op12):
    M = op12.grid.maxwellian()
    out = apply_C(op12, M)
    assert np.sqrt(inner_H(op12.grid, out, out)) < 1e-12
    assert op12.equilibrium_residual < 1e-12


def test_apply_C_conservation_exact(op12, rng):
    phis = invariants(op12.grid)
    for _ in range(10):
        g = rng.standard_normal(op12.grid.size) * op12.grid.maxwellian()
        c = apply_C(op12, g)
        assert np.abs(phis @ (op12.grid.weights * c)).max() < 1e-12


def test_apply_C_negative_and_coercive(op12, rng):
    grid = op12.grid
    M = grid.maxwellian()
    kappa = []
    for _ in range(50):
        g = rng.standard_normal(grid.size) * M
        val = -inner_H(grid, apply_C(op12, g), g)
        assert val >= 0.0
        gp = g - project_Pi(op12, g)
        kappa.append(-inner_H(grid, apply_C(op12, gp), gp) / inner_H(grid, gp, gp))
    assert min(kappa) > 0.0


def test_kernel_of_C_shrinks_under_refinement(op8, op12):
    # ||C(phi M)|| decreases from the coarse to the fine lattice
    for phi_idx in range(5):
        res = []
        for op in (op8, op12):
            grid = op.grid
            phi = invariants(grid)[phi_idx]
            f = phi * grid.maxwellian()
            c = apply_C(op, f)
            res.append(np.sqrt(inner_H(grid, c, c)))
        assert res[1] < res[0] or res[0] < 1e-12


def test_bounded_image_constant(op12, rng):
    grid = op12.grid
    M = grid.maxwellian()
    ratios = []
    for _ in range(20):
        g = rng.standard_normal(grid.size) * M
        Kg = apply_K(op12, g)
        ratios.append(np.sqrt(inner_H(grid, Kg, Kg) / inner_H(grid, g, g)))
    ck_hat = max(ratios)
    assert np.isfinite(ck_hat) and ck_hat > 0


# ---- projection -------------------------------------------------------------


def test_project_Pi_fixes_equilibrium(grid24):
    M = grid24.maxwellian()
    assert np.abs(project_Pi(grid24, M) - M).max() < 1e-6 * M.max()


def test_project_Pi_idempotent_and_complement(op12, rng):
    g = rng.standard_normal(op12.grid.size) * op12.grid.maxwellian()
    pg = project_Pi(op12, g)
    assert np.abs(project_Pi(op12, pg) - pg).max() < 1e-10 * max(np.abs(pg).max(), 1e-30)
    perp = g - pg
    assert np.abs(project_Pi(op12, perp)).max() < 1e-10 * np.abs(g).max()


def test_orthogonal_norm_decomposition(op12, rng):
    grid = op12.grid
    g = rng.standard_normal(grid.size) * grid.maxwellian()
    pg = project_Pi(op12, g)
    total = inner_H(grid, g, g)
    parts = inner_H(grid, pg, pg) + inner_H(grid, g - pg, g - pg)
    assert abs(total - parts) < 1e-8 * total


# ---- bilinear operator ------------------------------------------------------


@pytest.fixture(scope="module")
def rule():
    return AngularRule.product(4, 8)


def test_angular_rule_weights():
    r = AngularRule.product(8, 16)
    assert np.isclose(r.weights.sum(), 4 * np.pi)
    assert np.allclose(np.linalg.norm(r.points, axis=1), 1.0)
    with pytest.raises(ValueError):
        AngularRule.product(3, 8)


def test_Q_equilibrium_and_conservation(grid12, rule):
    M = grid12.maxwellian()
    q = apply_Q(grid12, M, M, rule=rule)
    phis = invariants(grid12)
    # exact zero along invariants, small interpolation residual pointwise
    assert np.abs(phis @ (grid12.weights * q)).max() < 1e-12
    assert np.abs(q).max() < 0.2 * float((collision_frequency(grid12)[0] * M).max())


def test_Q_conservation_random_fields(grid12, rule, rng):
    M = grid12.maxwellian()
    G = rng.standard_normal((6, grid12.size)) * M[None, :]
    q = apply_Q(grid12, G, G, rule=rule)
    phis = invariants(grid12)
    assert np.abs((q * grid12.weights[None, :]) @ phis.T).max() < 1e-12


def test_Q_symmetric_in_arguments(grid12, rule, rng):
    M = grid12.maxwellian()
    a = rng.standard_normal(grid12.size) * M
    b = rng.standard_normal(grid12.size) * M
    qa = apply_Q(grid12, a, b, rule=rule)
    qb = apply_Q(grid12, b, a, rule=rule)
    assert np.abs(qa - qb).max() < 1e-12 * max(np.abs(qa).max(), 1e-30)


def test_Q_energy_cutoff_keeps_conservation(grid12, rule, rng):
    M = grid12.maxwellian()
    a = rng.standard_normal(grid12.size) * M
    q = apply_Q(grid12, a, a, rule=rule, energy_cutoff=7.75)
    phis = invariants(grid12)
    assert np.abs(phis @ (grid12.weights * q)).max() < 1e-12


def test_Q_size_mismatch(grid12, rule):
    with pytest.raises(ValueError):
        apply_Q(grid12, np.zeros(5), np.zeros(5), rule=rule)


# ---- moments ----------------------------------------------------------------


def test_moments_of_equilibrium(grid24):
    m = moments(grid24, grid24.maxwellian())
    assert abs(m.rho[0] - 1.0) < 1e-6
    assert np.abs(m.mu).max() < 1e-9
    assert abs(m.energy[0]) < 1e-6
    assert np.abs(m.Mp).max() < 1e-6
    assert np.abs(m.Mq).max() < 1e-5


def test_moments_momentum_mode(grid24):
    g = grid24.nodes[:, 0] * grid24.maxwellian()
    m = moments(grid24, g)
    assert np.abs(m.mu[0] - np.array([1.0, 0, 0])).max() < 1e-6


def test_Mp_sees_only_microscopic_part(op12, rng):
    # M_p vanishes on the invariant span, so M_p[g] = M_p[g - Pi g]
    grid = op12.grid
    g = rng.standard_normal(grid.size) * grid.maxwellian()
    perp = g - project_Pi(op12, g)
    scale = np.abs(moments(grid, g).Mp).max() + 1e-30
    diff = np.abs(moments(grid, g).Mp - moments(grid, perp).Mp).max()
    assert diff < 2e-4 * max(1.0, scale)


def test_Mq_trace_relation(op12, rng):
    grid = op12.grid
    g = rng.standard_normal(grid.size) * grid.maxwellian()
    pg = project_Pi(op12, g)
    m = moments(grid, pg)
    expect = np.sqrt(2.0 / 3.0) * m.energy[0] * np.eye(3)
    assert np.abs(m.Mq[0] - expect).max() < 2e-4 * max(1.0, abs(m.energy[0]))


# ---- empirical bilinear bound ------------------------------------------------


def test_measure_CQ(grid12, rule, rng):
    w = WeightSpec(zeta=0.3, theta0=0.0)
    M = grid12.maxwellian()
    cq_mm = measure_CQ(grid12, w, [(M, M)], rule=rule)
    samples = [(rng.standard_normal(grid12.size) * M, rng.standard_normal(grid12.size) * M)
               for _ in range(5)]
    cq = measure_CQ(grid12, w, samples, rule=rule)
    assert np.isfinite(cq) and cq > 0
    # the equilibrium pair contributes (almost) nothing to the max
    assert cq_mm < 0.05 * cq
    # ratio invariant under g -> 2g
    g, h = samples[0]
    one = measure_CQ(grid12, w, [(g, h)], rule=rule)
    two = measure_CQ(grid12, w, [(2 * g, h)], rule=rule)
    assert np.isclose(one, two, rtol=1e-12)
    with pytest.raises(ValueError):
        measure_CQ(grid12, w, [(np.zeros(grid12.size), M)], rule=rule)
    with pytest.raises(ValueError):
        measure_CQ(grid12, w, [], rule=rule)


def test_exports(tmp_path, op8):
    kpath = tmp_path / "kernel.csv"
    npath = tmp_path / "nu.csv"
    export_kernel_csv(op8, kpath)
    export_nu_csv(op8, npath)
    k = np.loadtxt(kpath, delimiter=",", skiprows=1)
    assert k.shape == (op8.grid.size * (op8.grid.size - 1), 3)
    nu = np.loadtxt(npath, delimiter=",", skiprows=1)
    assert nu.shape == (op8.grid.size, 2)
    assert np.allclose(nu[:, 1], op8.nu_values)
