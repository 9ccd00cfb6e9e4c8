"""Compiled inner loops for the bilinear hard-sphere collision operator.

The operator is evaluated in its half-symmetrized form over all ordered node
pairs and a product angular rule restricted to a half sphere (the integrand
is even under sigma -> -sigma, so half the directions with doubled weights
give the identical sum).  Post-collision velocities land off-lattice and are
trilinearly interpolated with zero extension outside the cube.

Determinism: the output node index i is the parallel loop variable and every
accumulation into out[i, :] happens inside its own iteration, so results are
independent of the thread count and scheduling.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, fastmath=True, inline="always")
def _gather8(arr, i000, i001, i010, i011, i100, i101, i110, i111,
             w000, w001, w010, w011, w100, w101, w110, w111, out):
    nc = arr.shape[1]
    for c in range(nc):
        out[c] = (w000 * arr[i000, c] + w001 * arr[i001, c]
                  + w010 * arr[i010, c] + w011 * arr[i011, c]
                  + w100 * arr[i100, c] + w101 * arr[i101, c]
                  + w110 * arr[i110, c] + w111 * arr[i111, c])


@njit(cache=True, fastmath=True, parallel=True)
def q_bilinear(G, H, nodes, weights, sigmas, wsig, v_max, h, n, ecut2, out):
    """out[i, c] = Q(G, H)(v_i) in cell c; G, H, out are (n_nodes, n_cells)."""
    N = nodes.shape[0]
    nc = G.shape[1]
    nsig = sigmas.shape[0]
    for i in prange(N):
        vix = nodes[i, 0]
        viy = nodes[i, 1]
        viz = nodes[i, 2]
        vi2 = vix * vix + viy * viy + viz * viz
        acc = np.zeros(nc)
        gp = np.empty(nc)
        hp = np.empty(nc)
        gs = np.empty(nc)
        hs = np.empty(nc)
        for j in range(N):
            if j == i:
                continue
            vjx = nodes[j, 0]
            vjy = nodes[j, 1]
            vjz = nodes[j, 2]
            if vi2 + vjx * vjx + vjy * vjy + vjz * vjz > ecut2:
                continue
            dx = vix - vjx
            dy = viy - vjy
            dz = viz - vjz
            wj = weights[j]
            for s in range(nsig):
                sx = sigmas[s, 0]
                sy = sigmas[s, 1]
                sz = sigmas[s, 2]
                c = dx * sx + dy * sy + dz * sz
                if c == 0.0:
                    continue
                B = abs(c) * wsig[s] * wj * 0.5
                # post-collision points: v' = v_i - c sigma, v*' = v_j + c sigma
                px = vix - c * sx
                py = viy - c * sy
                pz = viz - c * sz
                qx = vjx + c * sx
                qy = vjy + c * sy
                qz = vjz + c * sz
                # trilinear stencil for v'
                ux = (px + v_max) / h
                uy = (py + v_max) / h
                uz = (pz + v_max) / h
                inp = (0.0 <= ux <= n - 1.0) and (0.0 <= uy <= n - 1.0) and (0.0 <= uz <= n - 1.0)
                ux2 = (qx + v_max) / h
                uy2 = (qy + v_max) / h
                uz2 = (qz + v_max) / h
                ins = (0.0 <= ux2 <= n - 1.0) and (0.0 <= uy2 <= n - 1.0) and (0.0 <= uz2 <= n - 1.0)
                if inp:
                    ix = int(ux)
                    iy = int(uy)
                    iz = int(uz)
                    if ix > n - 2:
                        ix = n - 2
                    if iy > n - 2:
                        iy = n - 2
                    if iz > n - 2:
                        iz = n - 2
                    fx = ux - ix
                    fy = uy - iy
                    fz = uz - iz
                    base = (ix * n + iy) * n + iz
                    i000 = base
                    i001 = base + 1
                    i010 = base + n
                    i011 = base + n + 1
                    i100 = base + n * n
                    i101 = base + n * n + 1
                    i110 = base + n * n + n
                    i111 = base + n * n + n + 1
                    w111 = fx * fy * fz
                    w110 = fx * fy * (1 - fz)
                    w101 = fx * (1 - fy) * fz
                    w100 = fx * (1 - fy) * (1 - fz)
                    w011 = (1 - fx) * fy * fz
                    w010 = (1 - fx) * fy * (1 - fz)
                    w001 = (1 - fx) * (1 - fy) * fz
                    w000 = (1 - fx) * (1 - fy) * (1 - fz)
                    _gather8(G, i000, i001, i010, i011, i100, i101, i110, i111,
                             w000, w001, w010, w011, w100, w101, w110, w111, gp)
                    _gather8(H, i000, i001, i010, i011, i100, i101, i110, i111,
                             w000, w001, w010, w011, w100, w101, w110, w111, hp)
                else:
                    for cix in range(nc):
                        gp[cix] = 0.0
                        hp[cix] = 0.0
                if ins:
                    ix = int(ux2)
                    iy = int(uy2)
                    iz = int(uz2)
                    if ix > n - 2:
                        ix = n - 2
                    if iy > n - 2:
                        iy = n - 2
                    if iz > n - 2:
                        iz = n - 2
                    fx = ux2 - ix
                    fy = uy2 - iy
                    fz = uz2 - iz
                    base = (ix * n + iy) * n + iz
                    i000 = base
                    i001 = base + 1
                    i010 = base + n
                    i011 = base + n + 1
                    i100 = base + n * n
                    i101 = base + n * n + 1
                    i110 = base + n * n + n
                    i111 = base + n * n + n + 1
                    w111 = fx * fy * fz
                    w110 = fx * fy * (1 - fz)
                    w101 = fx * (1 - fy) * fz
                    w100 = fx * (1 - fy) * (1 - fz)
                    w011 = (1 - fx) * fy * fz
                    w010 = (1 - fx) * fy * (1 - fz)
                    w001 = (1 - fx) * (1 - fy) * fz
                    w000 = (1 - fx) * (1 - fy) * (1 - fz)
                    _gather8(G, i000, i001, i010, i011, i100, i101, i110, i111,
                             w000, w001, w010, w011, w100, w101, w110, w111, gs)
                    _gather8(H, i000, i001, i010, i011, i100, i101, i110, i111,
                             w000, w001, w010, w011, w100, w101, w110, w111, hs)
                else:
                    for cix in range(nc):
                        gs[cix] = 0.0
                        hs[cix] = 0.0
                for cix in range(nc):
                    gain = gs[cix] * hp[cix] + hs[cix] * gp[cix]
                    loss = G[j, cix] * H[i, cix] + G[i, cix] * H[j, cix]
                    acc[cix] += B * (gain - loss)
        for cix in range(nc):
            out[i, cix] = acc[cix]
    return out
