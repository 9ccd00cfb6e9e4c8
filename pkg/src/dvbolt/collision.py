"""Hard-sphere collision operators on the velocity lattice.

Linearized part: C g = K g - nu g, with the explicit two-term kernel of the
gain/loss decomposition.  The prefactors used here are pinned by two exact
continuum identities rather than taken on faith:

  * nu(v) = 2 pi * integral |v - v*| M(v*) dv*   (sphere integral of the
    hard-sphere rate), which fixes nu(0) = 4 sqrt(2 pi);
  * K M = nu M (the equilibrium is in the kernel of C), which fixes the
    gain constant to 2 sqrt(2/pi) and the loss constant to (2 pi)^{-1/2}.

Discretization choices that matter:

  * The j == i node is excluded from the kernel sum; the 1/|v - v*| gain
    singularity is handled by replacing near-diagonal entries with cell
    averages of the full gain integrand (midpoint subgrid), symmetrized so
    the weighted-L2 self-adjointness of K is exact.
  * Because nu and the loss column discretize the *same* quadrature, the
    loss part of K M cancels nu M exactly; the remaining gain-side
    quadrature defect is removed by a symmetric positive rescaling of the
    gain matrix (Sinkhorn-type), which makes C M = 0 hold to round-off
    without touching self-adjointness or positivity.
  * apply_C / apply_Q project their output onto the orthogonal complement
    of the discrete collision invariants, so the five conservation laws
    hold exactly at any resolution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._qkernel import q_bilinear
from .velocity import VelocityGrid, WeightSpec, integrate, maxwellian

__all__ = [
    "GAIN_CONST",
    "LOSS_CONST",
    "LinearizedOperator",
    "MacroMoments",
    "AngularRule",
    "kernel_k",
    "collision_frequency",
    "build_linearized",
    "apply_K",
    "apply_C",
    "project_Pi",
    "apply_Q",
    "moments",
    "measure_CQ",
    "export_kernel_csv",
    "export_nu_csv",
]

GAIN_CONST = 2.0 * np.sqrt(2.0 / np.pi)
LOSS_CONST = (2.0 * np.pi) ** -0.5


def kernel_k(v, v_star):
    """Two-term kernel of the nonlocal part K of the linearized operator.

    Symmetry: k(v, v*) e^{|v|^2/2} = k(v*, v) e^{|v*|^2/2}.  The |v - v*|^-1
    pole makes coincident arguments a domain error.
    """
    v = np.asarray(v, dtype=float)
    vs = np.asarray(v_star, dtype=float)
    d = v - vs
    r2 = np.einsum("...i,...i->...", d, d)
    if np.any(r2 == 0.0):
        raise ValueError("kernel_k is singular at v == v_star")
    r = np.sqrt(r2)
    a2 = np.einsum("...i,...i->...", v, v)
    b2 = np.einsum("...i,...i->...", vs, vs)
    gain = GAIN_CONST / r * np.exp(
        -0.125 * (b2 - a2) ** 2 / r2 - 0.125 * r2 - 0.25 * a2 + 0.25 * b2
    )
    loss = LOSS_CONST * r * np.exp(-0.5 * a2)
    out = gain - loss
    return out if out.ndim else float(out)


def collision_frequency(grid: VelocityGrid) -> tuple[np.ndarray, float, float]:
    """nu(v_i) by direct quadrature of 2 pi |v - v*| M(v*); returns (nu, nu0_hat, nu1_hat).

    nu0_hat and nu1_hat bracket nu / <v> over the lattice (measured, not assumed).
    """
    M = grid.maxwellian(1.0)
    wm = grid.weights * M
    nu = np.empty(grid.size)
    B = 2048
    for a in range(0, grid.size, B):
        d = grid.nodes[None, :, :] - grid.nodes[a : a + B, None, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        nu[a : a + B] = 2.0 * np.pi * (r * wm[None, :]).sum(axis=1)
    bracket = nu / np.sqrt(1.0 + grid.speed2)
    return nu, float(bracket.min()), float(bracket.max())


@dataclass
class LinearizedOperator:
    """Assembled discrete linearized collision operator C = K - nu."""

    grid: VelocityGrid
    nu_values: np.ndarray          # (N,)
    kernel_matrix: np.ndarray      # (N, N), diagonal zero, weights NOT folded in
    nu0_hat: float
    nu1_hat: float
    # invariant-projection data: columns of inv_basis span {M, v M, |v|^2 M},
    # orthonormalized in the Maxwellian-weighted L2 inner product
    inv_basis: np.ndarray = field(repr=False, default=None)
    inv_dual: np.ndarray = field(repr=False, default=None)
    gain_scale_range: tuple[float, float] = (1.0, 1.0)
    equilibrium_residual: float = 0.0
    _kw: np.ndarray = field(repr=False, default=None)   # kernel_matrix * weights (cached)

    def kernel_weighted(self) -> np.ndarray:
        if self._kw is None:
            self._kw = np.ascontiguousarray(self.kernel_matrix * self.grid.weights[None, :])
        return self._kw


def _invariant_basis(grid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """Gram-Schmidt the collision-invariant span in the discrete weighted inner product."""
    M = grid.maxwellian(1.0)
    v = grid.nodes
    v2 = grid.speed2
    raw = np.stack([M, v[:, 0] * M, v[:, 1] * M, v[:, 2] * M, (v2 - 3.0) / np.sqrt(6.0) * M], axis=1)
    minv = 1.0 / M
    G = raw.T @ (grid.weights[:, None] * raw * minv[:, None])
    L = np.linalg.cholesky(G)
    basis = np.linalg.solve(L, raw.T).T          # orthonormal columns in H0
    dual = basis * (grid.weights * minv)[:, None]  # coefficients: c = dual.T @ g
    return basis, dual


def _near_field_average(grid: VelocityGrid, S: np.ndarray, radius: int, msub: int) -> None:
    """Replace near-diagonal entries of the symmetric gain matrix by cell averages.

    S holds the gain in symmetric form s_ij = gain_ij * e^{(|v_i|^2+|v_j|^2)/4} ... / M-scaling
    folded as assembled below; averaging is done on the one-sided integrand and
    then symmetrized by the caller.
    """
    h = grid.spacing
    nodes = grid.nodes
    v2 = grid.speed2
    ic = grid.index_coords()
    t = ((np.arange(msub) + 0.5) / msub - 0.5) * h
    SX, SY, SZ = np.meshgrid(t, t, t, indexing="ij")
    sub = np.stack([SX.ravel(), SY.ravel(), SZ.ravel()], axis=1)
    idx = np.arange(grid.size)
    for a in range(grid.size):
        da = ic - ic[a]
        near = (np.abs(da) <= radius).all(axis=1) & (idx != a)
        js = idx[near]
        if js.size == 0:
            continue
        u = (nodes[js] - nodes[a])[:, None, :] + sub[None, :, :]
        uu = np.einsum("kmi,kmi->km", u, u)
        vu = np.einsum("i,kmi->km", nodes[a], u)
        vs2 = v2[a] + 2.0 * vu + uu
        vals = GAIN_CONST * np.exp(
            -0.125 * (2.0 * vu + uu) ** 2 / uu - 0.125 * uu + 0.25 * (v2[a] + vs2)
        ) / np.sqrt(uu)
        S[a, js] = vals.mean(axis=1)


def _sinkhorn_gain_scale(S: np.ndarray, grid: VelocityGrid, nu: np.ndarray,
                         tol: float = 1e-14, max_iter: int = 500) -> np.ndarray:
    """Symmetric positive rescaling S <- diag(b) S diag(b) enforcing the gain identity.

    Target: e^{-|v_i|^2/2} sum_j S_ij w_j M_j b_i b_j = 2 nu_i M_i for every i,
    i.e. the rescaled gain reproduces its exact action on the equilibrium.
    Standard fixed point z <- sqrt(z c / (S z)) on z = b w M.
    """
    M = grid.maxwellian(1.0)
    c = 2.0 * nu * M * np.exp(0.5 * grid.speed2) * grid.weights * M
    z = grid.weights * M
    for _ in range(max_iter):
        Sz = S @ z
        z_new = np.sqrt(z * c / Sz)
        rel = np.abs(z_new / z - 1.0).max()
        z = z_new
        if rel < tol:
            break
    beta = z / (grid.weights * M)
    S *= beta[:, None] * beta[None, :]
    return beta


def build_linearized(grid: VelocityGrid, near_radius: int = 2, subsamples: int = 6,
                     scale_gain: bool = True) -> LinearizedOperator:
    """Assemble kernel matrix and collision frequency on a lattice."""
    N = grid.size
    v2 = grid.speed2
    nodes = grid.nodes
    S = np.empty((N, N))
    B = 2048
    for a in range(0, N, B):
        d = nodes[None, :, :] - nodes[a : a + B, None, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        r = np.sqrt(r2)
        dv2 = v2[None, :] - v2[a : a + B, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = GAIN_CONST / r * np.exp(
                -0.125 * dv2 ** 2 / r2 - 0.125 * r2 + 0.25 * (v2[a : a + B, None] + v2[None, :])
            )
        s[~np.isfinite(s)] = 0.0
        S[a : a + B] = s
    if near_radius > 0:
        _near_field_average(grid, S, near_radius, subsamples)
    S = 0.5 * (S + S.T)               # exact weighted-L2 self-adjointness of the gain
    np.fill_diagonal(S, 0.0)
    nu, nu0_hat, nu1_hat = collision_frequency(grid)
    beta_range = (1.0, 1.0)
    if scale_gain:
        beta = _sinkhorn_gain_scale(S, grid, nu)
        beta_range = (float(beta.min()), float(beta.max()))
    K = S * np.exp(-0.5 * v2)[:, None]
    for a in range(0, N, B):
        d = nodes[None, :, :] - nodes[a : a + B, None, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
        K[a : a + B] -= LOSS_CONST * r * np.exp(-0.5 * v2[a : a + B, None])
    np.fill_diagonal(K, 0.0)
    M = grid.maxwellian(1.0)
    eq_res = float(np.abs((K @ (grid.weights * M) - nu * M) / (nu * M)).max())
    basis, dual = _invariant_basis(grid)
    return LinearizedOperator(
        grid=grid, nu_values=nu, kernel_matrix=K,
        nu0_hat=nu0_hat, nu1_hat=nu1_hat,
        inv_basis=basis, inv_dual=dual,
        gain_scale_range=beta_range, equilibrium_residual=eq_res,
    )


def apply_K(op: LinearizedOperator, g: np.ndarray) -> np.ndarray:
    """(K g)(v_i) = sum_{j != i} w_j k(v_i, v_j) g(v_j); g may be (..., N)."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != op.grid.size:
        raise ValueError("size mismatch between g and grid")
    return g @ op.kernel_weighted().T


def project_Pi(op_or_grid, g: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the discrete collision-invariant span."""
    if isinstance(op_or_grid, LinearizedOperator):
        basis, dual = op_or_grid.inv_basis, op_or_grid.inv_dual
        n = op_or_grid.grid.size
    else:
        basis, dual = _invariant_basis(op_or_grid)
        n = op_or_grid.size
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != n:
        raise ValueError("size mismatch between g and grid")
    return (g @ dual) @ basis.T


def apply_C(op: LinearizedOperator, g: np.ndarray) -> np.ndarray:
    """C g = K g - nu g, with the residual along the discrete invariants removed
    so the five conservation laws hold exactly."""
    out = apply_K(op, g) - op.nu_values * np.asarray(g, dtype=float)
    return out - project_Pi(op, out)


@dataclass
class MacroMoments:
    """Per-cell macroscopic functionals of a velocity distribution."""

    rho: np.ndarray      # (n_cells,)
    mu: np.ndarray       # (n_cells, 3)
    energy: np.ndarray   # (n_cells,)
    Mp: np.ndarray       # (n_cells, 3): moments of v_i (|v|^2 - 5)/sqrt(6)
    Mq: np.ndarray       # (n_cells, 3, 3): moments of v_i v_j - delta_ij


def moments(grid: VelocityGrid, g: np.ndarray) -> MacroMoments:
    g = np.atleast_2d(np.asarray(g, dtype=float))
    w = grid.weights
    v = grid.nodes
    v2 = grid.speed2
    rho = g @ w
    mu = g @ (w[:, None] * v)
    energy = g @ (w * (v2 - 3.0) / np.sqrt(6.0))
    Mp = g @ (w[:, None] * v * ((v2 - 5.0) / np.sqrt(6.0))[:, None])
    qb = v[:, :, None] * v[:, None, :] - np.eye(3)[None, :, :]
    Mq = np.einsum("cn,n,nij->cij", g, w, qb)
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(Mq))):
        raise ValueError("non-finite moments")
    return MacroMoments(rho=rho, mu=mu, energy=energy, Mp=Mp, Mq=Mq)


@dataclass(frozen=True)
class AngularRule:
    """Product rule on the unit sphere: Gauss-Legendre in cos(theta) x uniform azimuth.

    Stored on the half sphere mu > 0 with doubled weights (the collision
    integrand is even under sigma -> -sigma); n_polar must be even.
    """

    points: np.ndarray   # (m, 3)
    weights: np.ndarray  # (m,), sum = 4 pi

    @classmethod
    def product(cls, n_polar: int = 8, n_azimuth: int = 16) -> "AngularRule":
        if n_polar < 2 or n_polar % 2:
            raise ValueError("n_polar must be even and >= 2")
        if n_azimuth < 2:
            raise ValueError("n_azimuth must be >= 2")
        mu, wmu = np.polynomial.legendre.leggauss(n_polar)
        keep = mu > 0
        mu, wmu = mu[keep], 2.0 * wmu[keep]
        phi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        wphi = 2.0 * np.pi / n_azimuth
        st = np.sqrt(1.0 - mu**2)
        pts = np.stack([
            np.repeat(mu, n_azimuth),
            (st[:, None] * np.cos(phi)[None, :]).ravel(),
            (st[:, None] * np.sin(phi)[None, :]).ravel(),
        ], axis=1)
        wts = np.repeat(wmu * wphi, n_azimuth)
        return cls(points=np.ascontiguousarray(pts), weights=np.ascontiguousarray(wts))


def apply_Q(grid: VelocityGrid, G: np.ndarray, H: np.ndarray,
            rule: AngularRule | None = None, energy_cutoff: float | None = None,
            conserve: bool = True) -> np.ndarray:
    """Half-symmetrized bilinear hard-sphere operator, cellwise.

    G, H indexed (n_cells, N) or (N,).  Off-lattice post-collision values are
    trilinearly interpolated (zero outside the cube); when `conserve` is set
    the discrete defect along the five collision invariants is projected out,
    making mass/momentum/energy conservation exact.
    """
    if rule is None:
        rule = AngularRule.product()
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if G.shape != H.shape or G.shape[1] != grid.size:
        raise ValueError("size mismatch among G, H, grid")
    ecut2 = np.inf if energy_cutoff is None else float(energy_cutoff) ** 2
    Gt = np.ascontiguousarray(G.T)
    Ht = np.ascontiguousarray(H.T)
    out = np.empty_like(Gt)
    q_bilinear(Gt, Ht, grid.nodes, grid.weights, rule.points, rule.weights,
               grid.v_max, grid.spacing, grid.n_per_axis, ecut2, out)
    q = out.T.copy()
    if conserve:
        q -= project_Pi(grid, q)
    return q if G.shape[0] > 1 else q[0]


def measure_CQ(grid: VelocityGrid, w: WeightSpec, samples, rule: AngularRule | None = None,
               energy_cutoff: float | None = None) -> float:
    """Empirical bilinear bound: max ||Q(g,h)||_{inf, omega/nu} / (||g|| ||h||)."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample pair")
    nu, _, _ = collision_frequency(grid)
    om = w.omega(grid)
    best = 0.0
    for g, h in samples:
        ng = np.abs(om * g).max()
        nh = np.abs(om * h).max()
        if ng == 0.0 or nh == 0.0:
            raise ValueError("zero-norm sample")
        q = apply_Q(grid, g, h, rule=rule, energy_cutoff=energy_cutoff)
        best = max(best, float(np.abs(om / nu * q).max() / (ng * nh)))
    return best


def export_kernel_csv(op: LinearizedOperator, path) -> None:
    """Dump (i, j, k_ij) rows for the off-diagonal kernel matrix."""
    N = op.grid.size
    ii, jj = np.nonzero(~np.eye(N, dtype=bool))
    np.savetxt(path, np.column_stack([ii, jj, op.kernel_matrix[ii, jj]]),
               delimiter=",", header="i,j,k_ij", comments="", fmt=["%d", "%d", "%.17g"])


def export_nu_csv(op: LinearizedOperator, path) -> None:
    np.savetxt(path, np.column_stack([np.arange(op.grid.size), op.nu_values]),
               delimiter=",", header="i,nu_i", comments="", fmt=["%d", "%.17g"])
