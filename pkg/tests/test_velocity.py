import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvbolt import (DistributionField, WeightSpec, build_grid, integrate,
                    maxwellian, norm_H, norm_Linf_omega)
from dvbolt.velocity import admissible_zeta_window, read_snapshot, write_snapshot

TWO_PI_POW = (2 * np.pi) ** -1.5


def test_corner_lattice():
    g = build_grid(2, 1.0)
    assert g.size == 8
    assert np.allclose(np.abs(g.nodes), 1.0)
    assert np.isclose(g.weights.sum(), 8.0)


def test_odd_grid_contains_origin():
    g = build_grid(3, 1.0)
    assert g.size == 27
    assert np.any(np.all(g.nodes == 0.0, axis=1))


def test_weights_tile_cube():
    g = build_grid(16, 6.0)
    assert abs(g.weights.sum() - 12.0**3) < 1e-12 * 12**3


def test_build_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        build_grid(1, 1.0)
    with pytest.raises(ValueError):
        build_grid(8, np.inf)
    with pytest.raises(ValueError):
        build_grid(8, -1.0)


def test_grid_symmetric_with_equal_weights(grid12):
    # for each node v there is a node -v carrying the same weight
    order = np.lexsort(grid12.nodes.T)
    neg = np.lexsort((-grid12.nodes).T)
    assert np.allclose(grid12.nodes[order], -grid12.nodes[neg])
    assert np.allclose(grid12.weights[order], grid12.weights[neg])


def test_maxwellian_at_origin():
    assert np.isclose(maxwellian(1.0, [0, 0, 0]), TWO_PI_POW)


def test_maxwellian_tail():
    assert maxwellian(1.0, [40.0, 0, 0]) < 1e-300


def test_maxwellian_rejects_nonpositive_temperature():
    with pytest.raises(ValueError):
        maxwellian(0.0, [0, 0, 0])
    with pytest.raises(ValueError):
        maxwellian(-1.0, [1, 0, 0])


def test_maxwellian_unit_mass(grid24):
    # quadrature oracle against the analytic unit mass
    assert abs(integrate(grid24, grid24.maxwellian()) - 1.0) < 1e-6


def test_integrate_zero_and_odd_moment(grid24):
    assert integrate(grid24, np.zeros(grid24.size)) == 0.0
    m = grid24.maxwellian()
    assert abs(integrate(grid24, grid24.nodes[:, 0] * m)) < 1e-12


def test_integrate_size_mismatch(grid12):
    with pytest.raises(ValueError):
        integrate(grid12, np.zeros(grid12.size - 1))


def test_quadrature_exact_on_linear_polynomials(grid8):
    # trapezoid weights integrate a + b.v exactly over the cube
    a, b = 0.7, np.array([0.3, -1.1, 2.0])
    f = a + grid8.nodes @ b
    exact = a * (2 * grid8.v_max) ** 3
    assert abs(integrate(grid8, f) - exact) < 1e-10 * abs(exact)


def test_gaussian_mass_converges_in_vmax():
    # fixed spacing h = 0.5, growing cutoff
    errs = []
    for vmax in (4.0, 5.0, 6.0, 7.0):
        n = int(round(2 * vmax / 0.5)) + 1
        g = build_grid(n, vmax)
        errs.append(abs(integrate(g, g.maxwellian()) - 1.0))
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_norm_H_basic(grid16):
    f0 = DistributionField(np.zeros((4, grid16.size)), grid16, 0.25)
    assert norm_H(f0) == 0.0
    # f = M on a unit-measure domain: ||f||_H^2 = int M dv ~ 1
    m = grid16.maxwellian()
    f = DistributionField(np.tile(m, (4, 1)), grid16, 0.25)
    assert abs(norm_H(f) - 1.0) < 1e-6


def test_norm_H_homogeneity(grid12, rng):
    vals = rng.standard_normal((3, grid12.size)) * grid12.maxwellian()
    f = DistributionField(vals, grid12, 0.1)
    g = DistributionField(-2.5 * vals, grid12, 0.1)
    assert np.isclose(norm_H(g), 2.5 * norm_H(f), rtol=1e-13)


def test_norm_H_rejects_nonfinite(grid8):
    vals = np.zeros((1, grid8.size))
    vals[0, 0] = np.nan
    with pytest.raises(ValueError):
        norm_H(DistributionField(vals, grid8, 1.0))


def test_norm_Linf_omega(grid16):
    w = WeightSpec(zeta=0.4, theta0=0.0)
    f0 = DistributionField(np.zeros((1, grid16.size)), grid16, 1.0)
    assert norm_Linf_omega(f0, w) == 0.0
    finv = DistributionField(1.0 / w.omega(grid16)[None, :], grid16, 1.0)
    assert np.isclose(norm_Linf_omega(finv, w), 1.0, rtol=1e-14)
    # weighted Maxwellian: scan oracle, peak near the origin since zeta < 1/2
    m = grid16.maxwellian()
    fm = DistributionField(m[None, :], grid16, 1.0)
    scan = np.max(w.omega(grid16) * m)
    got = norm_Linf_omega(fm, w)
    assert np.isclose(got, scan, rtol=1e-14)
    assert np.isclose(got, (2 * np.pi) ** -1.5, rtol=0.06)


def test_weighted_sqrt_maxwellian_bounded_on_grid(grid16):
    for theta0 in (0.0, 0.05, 0.125):
        lo, hi = admissible_zeta_window(theta0)
        for zeta in (lo * 1.01, 0.5 * (lo + hi), hi * 0.99):
            w = WeightSpec(zeta=zeta, theta0=theta0)
            vals = w.omega(grid16) * np.sqrt(grid16.maxwellian())
            assert np.all(np.isfinite(vals))


@settings(max_examples=30)
@given(theta0=st.floats(0.0, 0.125), u=st.floats(0.01, 0.99))
def test_weightspec_accepts_inside_window(theta0, u):
    lo, hi = admissible_zeta_window(theta0)
    WeightSpec(zeta=lo + u * (hi - lo), theta0=theta0)


@settings(max_examples=20)
@given(theta0=st.floats(0.0, 0.125), off=st.floats(0.001, 0.3))
def test_weightspec_rejects_outside_window(theta0, off):
    lo, hi = admissible_zeta_window(theta0)
    with pytest.raises(ValueError):
        WeightSpec(zeta=hi + off, theta0=theta0)
    with pytest.raises(ValueError):
        WeightSpec(zeta=lo - off, theta0=theta0)


def test_snapshot_roundtrip(tmp_path, grid8, rng):
    vals = rng.standard_normal((3, grid8.size))
    f = DistributionField(vals, grid8, 0.25)
    path = tmp_path / "snap.csv"
    write_snapshot(f, path, meta={"geometry": {"type": "slab", "L": 0.5}, "epsilon": 1.0})
    g, meta = read_snapshot(path)
    assert np.array_equal(g.values, vals)
    assert g.cell_measure == 0.25
    assert meta["geometry"]["type"] == "slab"
    sidecar = json.loads(path.with_suffix(".json").read_text())
    assert sidecar["n_per_axis"] == 8 and sidecar["v_max"] == 6.0
