"""Structured-grid solvers for the Poisson and Lame problems feeding the norm audit.

Everything is assembled variationally with bilinear (Q1) elements on the
structured mesh, so the system matrices are symmetric by construction and the
discrete energy identity a(W, W) = (Xi, W) can be checked by independent
quadrature.  Boundary conditions:

  Poisson, mixed Robin:   (2 - a) dn_u + a u = g     (a = accommodation)
  Poisson, pure Neumann:  dn_u = 0 with the zero-mean gauge (bordered system)
  Lame:                   U.n = 0 strongly, (2 - a)[tangential traction] + a U_tan = g_tan

The disk cross-section uses the axis-aligned staircase of cells inside the
circle (first-order boundary geometry, accepted accuracy loss); interval and
rectangle meshes are second order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Interval",
    "Rect",
    "DiskMesh",
    "EllipticSolution",
    "solve_poisson",
    "solve_lame",
]


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    n: int

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.n) + 0.5) * self.h


@dataclass(frozen=True)
class Rect:
    ax: float
    bx: float
    ay: float
    by: float
    nx: int
    ny: int

    @property
    def hx(self) -> float:
        return (self.bx - self.ax) / self.nx

    @property
    def hy(self) -> float:
        return (self.by - self.ay) / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.linspace(self.ax, self.bx, self.nx + 1),
                np.linspace(self.ay, self.by, self.ny + 1))

    def node_index(self, i, j):
        return i * (self.ny + 1) + j


@dataclass(frozen=True)
class DiskMesh:
    """Staircase approximation of a disk of radius R: cells with centers inside."""

    R: float
    n: int   # cells across the diameter

    def rect(self) -> Rect:
        return Rect(-self.R, self.R, -self.R, self.R, self.n, self.n)

    def active_cells(self) -> np.ndarray:
        r = self.rect()
        xs = r.ax + (np.arange(r.nx) + 0.5) * r.hx
        ys = r.ay + (np.arange(r.ny) + 0.5) * r.hy
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return (X**2 + Y**2) < self.R**2


@dataclass
class EllipticSolution:
    values: np.ndarray       # nodal solution (1D vector; reshapeable via mesh.shape)
    gradient: np.ndarray     # cell-centered gradient(s)
    residual: float          # inf-norm residual of the discrete system (relative)
    bc_kind: str
    mean: float = 0.0


def _q1_element_matrices(hx: float, hy: float):
    """Stiffness integrals of Q1 shape-function gradients on one hx x hy cell."""
    g = np.array([-1, 1]) / np.sqrt(3.0)
    pts = [(0.5 * (1 + s), 0.5 * (1 + t)) for s in g for t in g]
    wq = 0.25 * hx * hy
    # shape function order: (0,0), (0,1), (1,0), (1,1) in (x, y) corners
    def grads(xi, eta):
        return np.array([
            [-(1 - eta) / hx, -(1 - xi) / hy],
            [-eta / hx, (1 - xi) / hy],
            [(1 - eta) / hx, -xi / hy],
            [eta / hx, xi / hy],
        ])
    Axx = np.zeros((4, 4))
    Ayy = np.zeros((4, 4))
    Axy = np.zeros((4, 4))   # integral of dN_i/dx * dN_j/dy
    for xi, eta in pts:
        G = grads(xi, eta)
        Axx += wq * np.outer(G[:, 0], G[:, 0])
        Ayy += wq * np.outer(G[:, 1], G[:, 1])
        Axy += wq * np.outer(G[:, 0], G[:, 1])
    return Axx, Ayy, Axy


def _rect_topology(mesh: Rect, active: np.ndarray | None = None):
    nx, ny = mesh.nx, mesh.ny
    cells = [(i, j) for i in range(nx) for j in range(ny)
             if active is None or active[i, j]]
    conn = np.array([
        [mesh.node_index(i, j), mesh.node_index(i, j + 1),
         mesh.node_index(i + 1, j), mesh.node_index(i + 1, j + 1)]
        for (i, j) in cells
    ])
    return cells, conn


def _assemble_scalar(mesh: Rect, active=None):
    Axx, Ayy, _ = _q1_element_matrices(mesh.hx, mesh.hy)
    Ke = Axx + Ayy
    cells, conn = _rect_topology(mesh, active)
    nn = (mesh.nx + 1) * (mesh.ny + 1)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    vals = np.tile(Ke.ravel(), len(cells))
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nn, nn)).tocsr()
    # lumped nodal volume weights
    lump = np.zeros(nn)
    for c in conn:
        lump[c] += 0.25 * mesh.hx * mesh.hy
    return A, lump, cells, conn


def _boundary_edges(mesh: Rect, cells) -> list:
    """(node_a, node_b, edge_len, side) for cell edges on the active boundary."""
    cellset = set(cells)
    edges = []
    for (i, j) in cells:
        if (i - 1, j) not in cellset and i == 0 or (i - 1, j) not in cellset and i > 0:
            if i == 0 or (i - 1, j) not in cellset:
                edges.append((mesh.node_index(i, j), mesh.node_index(i, j + 1), mesh.hy, "xlo"))
        if i == mesh.nx - 1 or (i + 1, j) not in cellset:
            edges.append((mesh.node_index(i + 1, j), mesh.node_index(i + 1, j + 1), mesh.hy, "xhi"))
        if j == 0 or (i, j - 1) not in cellset:
            edges.append((mesh.node_index(i, j), mesh.node_index(i + 1, j), mesh.hx, "ylo"))
        if j == mesh.ny - 1 or (i, j + 1) not in cellset:
            edges.append((mesh.node_index(i, j + 1), mesh.node_index(i + 1, j + 1), mesh.hx, "yhi"))
    return edges


def _nodal(values, nodes) -> np.ndarray:
    if callable(values):
        return np.asarray([values(x) for x in nodes], dtype=float)
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size != len(nodes):
        raise ValueError("nodal data size mismatch")
    return arr


def _cell_gradient_1d(mesh: Interval, u: np.ndarray) -> np.ndarray:
    return (u[1:] - u[:-1]) / mesh.h


def _cell_gradient_rect(mesh: Rect, u: np.ndarray) -> np.ndarray:
    U = u.reshape(mesh.shape)
    gx = ((U[1:, :-1] + U[1:, 1:]) - (U[:-1, :-1] + U[:-1, 1:])) / (2 * mesh.hx)
    gy = ((U[:-1, 1:] + U[1:, 1:]) - (U[:-1, :-1] + U[1:, :-1])) / (2 * mesh.hy)
    return np.stack([gx, gy], axis=-1)


def solve_poisson(mesh, xi, bc: str = "robin", alpha=None, bdata=None) -> EllipticSolution:
    """-Laplace u = xi with mixed Robin or zero-mean Neumann closure.

    xi and bdata may be callables of the node coordinate or nodal arrays;
    alpha gives the accommodation profile on the boundary (per-side dict for
    rectangles, (left, right) pair for intervals).
    """
    if bc not in ("robin", "neumann"):
        raise ValueError(f"unknown bc {bc!r}")
    if isinstance(mesh, Interval):
        return _poisson_1d(mesh, xi, bc, alpha, bdata)
    if isinstance(mesh, DiskMesh):
        return _poisson_rect(mesh.rect(), xi, bc, alpha, bdata, active=mesh.active_cells())
    return _poisson_rect(mesh, xi, bc, alpha, bdata)


def _poisson_1d(mesh: Interval, xi, bc, alpha, bdata) -> EllipticSolution:
    n = mesh.n
    x = mesh.nodes
    f = _nodal(xi, x)
    h = mesh.h
    main = np.full(n + 1, 2.0 / h)
    main[0] = main[-1] = 1.0 / h
    off = np.full(n, -1.0 / h)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    lump = np.full(n + 1, h)
    lump[0] = lump[-1] = h / 2
    b = lump * f
    if bc == "robin":
        al, ar = alpha if alpha is not None else (1.0, 1.0)
        gl, gr = bdata if bdata is not None else (0.0, 0.0)
        if al >= 2 or ar >= 2:
            raise ValueError("accommodation must be < 2")
        A[0, 0] += al / (2.0 - al)
        A[n, n] += ar / (2.0 - ar)
        b[0] += gl / (2.0 - al)
        b[n] += gr / (2.0 - ar)
        if al == 0.0 and ar == 0.0:
            raise ValueError("Robin problem with vanishing accommodation is singular; use bc='neumann'")
        A = A.tocsc()
        u = spla.spsolve(A, b)
        res = float(np.abs(A @ u - b).max() / max(1.0, np.abs(b).max()))
        return EllipticSolution(u, _cell_gradient_1d(mesh, u), res, "RobinP1")
    # zero-mean Neumann via symmetric bordered system
    if abs(float(lump @ f)) > 1e-10 * max(1.0, np.abs(f).max() * (mesh.b - mesh.a)):
        raise ValueError("Neumann source must have zero mean")
    A = A.tocsr()
    B = sp.bmat([[A, lump[:, None]], [lump[None, :], None]], format="csc")
    rhs = np.concatenate([b, [0.0]])
    sol = spla.spsolve(B, rhs)
    u = sol[:-1]
    res = float(np.abs(A @ u + lump * sol[-1] - b).max() / max(1.0, np.abs(b).max()))
    return EllipticSolution(u, _cell_gradient_1d(mesh, u), res, "NeumannP2",
                            mean=float(lump @ u / lump.sum()))


def _side_alpha(alpha, side, default=1.0):
    if alpha is None:
        return default
    if isinstance(alpha, dict):
        return float(alpha.get(side, default))
    return float(alpha)


def _poisson_rect(mesh: Rect, xi, bc, alpha, bdata, active=None) -> EllipticSolution:
    A, lump, cells, conn = _assemble_scalar(mesh, active)
    X, Y = np.meshgrid(*mesh.nodes(), indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    f = _nodal(xi, pts)
    b = lump * f
    used = lump > 0
    edges = _boundary_edges(mesh, cells)
    A = A.tolil()
    if bc == "robin":
        gfun = (lambda p: 0.0) if bdata is None else (bdata if callable(bdata) else lambda p: bdata)
        for na, nb, ln, side in edges:
            a = _side_alpha(alpha, side)
            if a == 0.0:
                continue
            coef = a / (2.0 - a) * ln / 2.0
            A[na, na] += coef
            A[nb, nb] += coef
            b[na] += gfun(pts[na]) / (2.0 - a) * ln / 2.0
            b[nb] += gfun(pts[nb]) / (2.0 - a) * ln / 2.0
        A = A.tocsc()[used][:, used]
        u = np.zeros(len(pts))
        u[used] = spla.spsolve(A, b[used])
        res = float(np.abs(A @ u[used] - b[used]).max() / max(1.0, np.abs(b).max()))
        return EllipticSolution(u, _cell_gradient_rect(mesh, u), res, "RobinP1")
    if abs(float(lump @ f)) > 1e-10 * max(1.0, np.abs(f).max() * lump.sum()):
        raise ValueError("Neumann source must have zero mean")
    A = A.tocsr()[used][:, used]
    lu = lump[used]
    B = sp.bmat([[A, lu[:, None]], [lu[None, :], None]], format="csc")
    sol = spla.spsolve(B, np.concatenate([b[used], [0.0]]))
    u = np.zeros(len(pts))
    u[used] = sol[:-1]
    res = float(np.abs(A @ sol[:-1] + lu * sol[-1] - b[used]).max() / max(1.0, np.abs(b).max()))
    return EllipticSolution(u, _cell_gradient_rect(mesh, u), res, "NeumannP2",
                            mean=float(lu @ sol[:-1] / lu.sum()))


def solve_lame(mesh: Rect, Xi, iota=None, bdata_tan=None) -> EllipticSolution:
    """-Div(symmetric gradient of U) = Xi for a 3-component field on a rectangle slice.

    The in-plane components (U1, U2) couple through the shear term; U3 sees
    half a Laplacian.  U.n = 0 is enforced strongly on the in-plane normal
    component; the tangential components carry the Robin traction condition
    with accommodation `iota` (per-side dict).  bdata_tan(point, comp) supplies
    inhomogeneous traction data for manufactured tests.
    """
    Axx, Ayy, Axy = _q1_element_matrices(mesh.hx, mesh.hy)
    cells, conn = _rect_topology(mesh)
    nn = (mesh.nx + 1) * (mesh.ny + 1)
    # component blocks of the symmetric-gradient energy
    K11 = Axx + 0.5 * Ayy
    K22 = Ayy + 0.5 * Axx
    K12 = 0.5 * Axy.T          # integral dN_j/dy dN_i/dx pairing U2-test V1 ... assembled below
    K33 = 0.5 * (Axx + Ayy)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()

    def block(Ke):
        return sp.coo_matrix((np.tile(Ke.ravel(), len(cells)), (rows, cols)),
                             shape=(nn, nn)).tocsr()

    B11, B22, B33 = block(K11), block(K22), block(K33)
    B12 = block(0.5 * Axy)     # couples dV1/dx with dU2/dy (plus transpose for symmetry)
    Z = sp.csr_matrix((nn, nn))
    A = sp.bmat([[B11, B12.T, Z], [B12, B22, Z], [Z, Z, B33]], format="lil")
    lump = np.zeros(nn)
    for c in conn:
        lump[c] += 0.25 * mesh.hx * mesh.hy
    X, Y = np.meshgrid(*mesh.nodes(), indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    if callable(Xi):
        F = np.asarray([Xi(p) for p in pts], dtype=float)
    else:
        F = np.asarray(Xi, dtype=float).reshape(nn, 3)
    b = np.concatenate([lump * F[:, 0], lump * F[:, 1], lump * F[:, 2]])
    edges = _boundary_edges(mesh, cells)
    # tangential Robin terms: on x-faces the tangential components are (U2, U3),
    # on y-faces (U1, U3)
    gfun = bdata_tan if bdata_tan is not None else (lambda p, comp: 0.0)
    for na, nb, ln, side in edges:
        a = _side_alpha(iota, side)
        tang = (1, 2) if side in ("xlo", "xhi") else (0, 2)
        if a > 0.0:
            coef = a / (2.0 - a) * ln / 2.0
            for comp in tang:
                A[comp * nn + na, comp * nn + na] += coef
                A[comp * nn + nb, comp * nn + nb] += coef
        for comp in tang:
            b[comp * nn + na] += gfun(pts[na], comp) / (2.0 - a) * ln / 2.0
            b[comp * nn + nb] += gfun(pts[nb], comp) / (2.0 - a) * ln / 2.0
    # strong constraint U.n = 0: U1 on x-faces, U2 on y-faces
    fixed = np.zeros(3 * nn, dtype=bool)
    for na, nb, ln, side in edges:
        comp = 0 if side in ("xlo", "xhi") else 1
        fixed[comp * nn + na] = True
        fixed[comp * nn + nb] = True
    A = A.tocsr()
    free = ~fixed
    Af = A[free][:, free].tocsc()
    sol = np.zeros(3 * nn)
    sol[free] = spla.spsolve(Af, b[free])
    res = float(np.abs(Af @ sol[free] - b[free]).max() / max(1.0, np.abs(b).max()))
    U = sol.reshape(3, nn).T
    grads = np.stack([_cell_gradient_rect(mesh, U[:, k]) for k in range(3)], axis=2)
    # cell-centered symmetric gradient, 3x3 with the third spatial direction frozen
    gsym = np.zeros(grads.shape[:2] + (3, 3))
    gsym[..., 0, 0] = grads[..., 0, 0]
    gsym[..., 1, 1] = grads[..., 1, 1]
    gsym[..., 0, 1] = gsym[..., 1, 0] = 0.5 * (grads[..., 1, 0] + grads[..., 0, 1])
    gsym[..., 0, 2] = gsym[..., 2, 0] = 0.5 * grads[..., 0, 2]
    gsym[..., 1, 2] = gsym[..., 2, 1] = 0.5 * grads[..., 1, 2]
    return EllipticSolution(U, gsym, res, "Lame")


def lame_energy(mesh: Rect, solution: EllipticSolution, iota=None) -> float:
    """Element-quadrature evaluation of the symmetric-gradient energy plus Robin term.

    Walks the elements and boundary edges directly (independent of the
    assembled system), using the same 2x2 Gauss rule, so the discrete energy
    identity against the load functional can be checked to round-off.
    """
    Axx, Ayy, Axy = _q1_element_matrices(mesh.hx, mesh.hy)
    K11 = Axx + 0.5 * Ayy
    K22 = Ayy + 0.5 * Axx
    K33 = 0.5 * (Axx + Ayy)
    K12 = 0.5 * Axy
    cells, conn = _rect_topology(mesh)
    U = solution.values
    en = 0.0
    for c in conn:
        u1, u2, u3 = U[c, 0], U[c, 1], U[c, 2]
        en += u1 @ K11 @ u1 + u2 @ K22 @ u2 + u3 @ K33 @ u3 + 2.0 * (u2 @ K12 @ u1)
    for na, nb, ln, side in _boundary_edges(mesh, cells):
        a = _side_alpha(iota, side)
        if a == 0.0:
            continue
        tang = (1, 2) if side in ("xlo", "xhi") else (0, 2)
        for comp in tang:
            en += a / (2.0 - a) * ln / 2.0 * (U[na, comp] ** 2 + U[nb, comp] ** 2)
    return float(en)
