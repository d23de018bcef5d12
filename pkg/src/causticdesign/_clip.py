"""Numba kernel: clip a triangulated domain against a 3D power diagram.

Each source triangle is cut by successive half-space bisectors; the cells
present in a triangle are discovered by flood fill across cut edges, seeded
by the cell owning the triangle centroid. The kernel accumulates, per cell,
the exact integral of the per-triangle affine density (mass and first
moment) and, on the shared bisector edges, the line integrals that make up
the transport Jacobian.

Power comparisons use s_i(x) = C_i - 2 <x, p_i> with C_i = ||p_i||^2 + w_i
(the ||x||^2 term is common to all sites and drops out).
"""

from __future__ import annotations

import numpy as np
from numba import njit

INV_SQRT3 = 0.5773502691896258

# edge labels: >= 0 bisector with that cell, -1 source-triangle boundary
BOUNDARY = -1


@njit(cache=True)
def _score(x0, x1, x2, P, C, i):
    return C[i] - 2.0 * (x0 * P[i, 0] + x1 * P[i, 1] + x2 * P[i, 2])


@njit(cache=True)
def _brute_owner(x0, x1, x2, P, C, hidden):
    best = -1
    bs = 1e308
    for i in range(C.shape[0]):
        if hidden[i]:
            continue
        s = _score(x0, x1, x2, P, C, i)
        if s < bs:
            bs = s
            best = i
    return best


@njit(cache=True)
def _walk_owner(x0, x1, x2, P, C, indptr, indices, start):
    cur = start
    scur = _score(x0, x1, x2, P, C, cur)
    moved = True
    while moved:
        moved = False
        for k in range(indptr[cur], indptr[cur + 1]):
            j = indices[k]
            sj = _score(x0, x1, x2, P, C, j)
            if sj < scur:
                cur = j
                scur = sj
                moved = True
                break
    return cur


@njit(cache=True)
def _cut(bx, by, bz, blab, nv, w0, w1, w2, b, cutlab, ox, oy, oz, olab, eps, tie_keep):
    """Sutherland-Hodgman cut of the polygon by {x : <w, x> <= b}.

    Returns the new vertex count written into the output buffers. Edge k of
    the polygon runs from vertex k to k+1 (cyclic) and carries label blab[k].
    A degenerate cut plane (w ~ 0) keeps or empties the whole polygon based
    on the sign of b, with ties resolved by ``tie_keep``.
    """
    wn = abs(w0) + abs(w1) + abs(w2)
    if wn <= 1e-300:
        if b > eps or (b >= -eps and tie_keep):
            for k in range(nv):
                ox[k] = bx[k]
                oy[k] = by[k]
                oz[k] = bz[k]
                olab[k] = blab[k]
            return nv
        return 0

    n_in = 0
    for k in range(nv):
        if w0 * bx[k] + w1 * by[k] + w2 * bz[k] - b <= eps:
            n_in += 1
    if n_in == 0:
        return 0

    if n_in == nv:
        m = nv
        for k in range(nv):
            ox[k] = bx[k]
            oy[k] = by[k]
            oz[k] = bz[k]
            olab[k] = blab[k]
    else:
        m = 0
        ga = w0 * bx[nv - 1] + w1 * by[nv - 1] + w2 * bz[nv - 1] - b
        ka = nv - 1
        for k in range(nv):
            gb = w0 * bx[k] + w1 * by[k] + w2 * bz[k] - b
            a_in = ga <= eps
            b_in = gb <= eps
            if a_in:
                ox[m] = bx[ka]
                oy[m] = by[ka]
                oz[m] = bz[ka]
                olab[m] = blab[ka]
                m += 1
                if not b_in:
                    t = ga / (ga - gb)
                    ox[m] = bx[ka] + t * (bx[k] - bx[ka])
                    oy[m] = by[ka] + t * (by[k] - by[ka])
                    oz[m] = bz[ka] + t * (bz[k] - bz[ka])
                    olab[m] = cutlab
                    m += 1
            elif b_in:
                t = ga / (ga - gb)
                ox[m] = bx[ka] + t * (bx[k] - bx[ka])
                oy[m] = by[ka] + t * (by[k] - by[ka])
                oz[m] = bz[ka] + t * (bz[k] - bz[ka])
                olab[m] = blab[ka]
                m += 1
            ga = gb
            ka = k

    # an edge lying on the cut plane is shared boundary with the cut cell
    # even when the plane grazes the polygon (e.g. bisectors that coincide
    # with source-mesh edges); relabel it so the Jacobian sees it
    if m >= 3:
        gk = w0 * ox[m - 1] + w1 * oy[m - 1] + w2 * oz[m - 1] - b
        on_a = -eps <= gk <= eps
        ka = m - 1
        for k in range(m):
            gk = w0 * ox[k] + w1 * oy[k] + w2 * oz[k] - b
            on_b = -eps <= gk <= eps
            if on_a and on_b:
                olab[ka] = cutlab
            on_a = on_b
            ka = k
    return m


@njit(cache=True)
def clip_diagram(tri_pts, tri_grad, tri_off, tri_normal,
                 tri_order, tri_prev,
                 P, C, hidden, indptr, indices,
                 ps_mode, eps, want_jac, want_polys,
                 poly_verts, poly_labels, poly_cell, poly_tri, poly_len):
    """Clip every source triangle against the power diagram.

    Returns (G, moments, jac, realized, tri_cover, owner, n_poly, n_vert,
    overflow). ``jac`` is aligned with ``indices`` and holds the directed
    edge integrals d G_i / d phi_j (before symmetrization); ``realized``
    marks adjacency entries whose bisector actually appears in the diagram.
    """
    n_tri = tri_pts.shape[0]
    n = C.shape[0]
    G = np.zeros(n)
    MOM = np.zeros((n, 3))
    jac = np.zeros(indices.shape[0])
    realized = np.zeros(indices.shape[0], dtype=np.uint8)
    tri_cover = np.zeros(n_tri)
    owner = np.full(n_tri, -1, dtype=np.int32)

    # max polygon size: 3 triangle corners + one vertex per cut
    max_deg = 0
    for i in range(n):
        d = indptr[i + 1] - indptr[i]
        if d > max_deg:
            max_deg = d
    cap = 8 + 2 * (max_deg + 1)
    ax = np.empty(cap)
    ay = np.empty(cap)
    az = np.empty(cap)
    alab = np.empty(cap, dtype=np.int64)
    bx = np.empty(cap)
    by = np.empty(cap)
    bz = np.empty(cap)
    blab = np.empty(cap, dtype=np.int64)

    stack = np.empty(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)

    n_poly = 0
    n_vert = 0
    overflow = 0

    for oi in range(n_tri):
        t = tri_order[oi]
        cx = (tri_pts[t, 0, 0] + tri_pts[t, 1, 0] + tri_pts[t, 2, 0]) / 3.0
        cy = (tri_pts[t, 0, 1] + tri_pts[t, 1, 1] + tri_pts[t, 2, 1]) / 3.0
        cz = (tri_pts[t, 0, 2] + tri_pts[t, 1, 2] + tri_pts[t, 2, 2]) / 3.0
        prev = tri_prev[t]
        if prev >= 0 and owner[prev] >= 0:
            seed = _walk_owner(cx, cy, cz, P, C, indptr, indices, owner[prev])
        else:
            seed = _brute_owner(cx, cy, cz, P, C, hidden)
            seed = _walk_owner(cx, cy, cz, P, C, indptr, indices, seed)
        owner[t] = seed

        nx = tri_normal[t, 0]
        ny = tri_normal[t, 1]
        nz = tri_normal[t, 2]
        g0 = tri_grad[t, 0]
        g1 = tri_grad[t, 1]
        g2 = tri_grad[t, 2]
        h = tri_off[t]

        top = 0
        stack[top] = seed
        top += 1
        mark[seed] = t

        while top > 0:
            top -= 1
            i = stack[top]

            nv = 3
            for k in range(3):
                ax[k] = tri_pts[t, k, 0]
                ay[k] = tri_pts[t, k, 1]
                az[k] = tri_pts[t, k, 2]
                alab[k] = BOUNDARY

            use_a = True
            for ptr in range(indptr[i], indptr[i + 1]):
                j = indices[ptr]
                w0 = 2.0 * (P[j, 0] - P[i, 0])
                w1 = 2.0 * (P[j, 1] - P[i, 1])
                w2 = 2.0 * (P[j, 2] - P[i, 2])
                bb = C[j] - C[i]
                if use_a:
                    nv = _cut(ax, ay, az, alab, nv, w0, w1, w2, bb, j,
                              bx, by, bz, blab, eps, i < j)
                else:
                    nv = _cut(bx, by, bz, blab, nv, w0, w1, w2, bb, j,
                              ax, ay, az, alab, eps, i < j)
                use_a = not use_a
                if nv < 3:
                    nv = 0
                    break

            if nv < 3:
                continue
            if use_a:
                px, py, pz, plab = ax, ay, az, alab
            else:
                px, py, pz, plab = bx, by, bz, blab

            # signed area and affine-density integrals via a fan from vertex 0
            area = 0.0
            mass = 0.0
            m0 = 0.0
            m1 = 0.0
            m2 = 0.0
            r0 = g0 * px[0] + g1 * py[0] + g2 * pz[0] + h
            for k in range(1, nv - 1):
                e1x = px[k] - px[0]
                e1y = py[k] - py[0]
                e1z = pz[k] - pz[0]
                e2x = px[k + 1] - px[0]
                e2y = py[k + 1] - py[0]
                e2z = pz[k + 1] - pz[0]
                crx = e1y * e2z - e1z * e2y
                cry = e1z * e2x - e1x * e2z
                crz = e1x * e2y - e1y * e2x
                a_k = 0.5 * (crx * nx + cry * ny + crz * nz)
                area += a_k
                rk = g0 * px[k] + g1 * py[k] + g2 * pz[k] + h
                rk1 = g0 * px[k + 1] + g1 * py[k + 1] + g2 * pz[k + 1] + h
                mass += a_k * (r0 + rk + rk1) / 3.0
                vx = px[0] + px[k] + px[k + 1]
                vy = py[0] + py[k] + py[k + 1]
                vz = pz[0] + pz[k] + pz[k + 1]
                m0 += a_k / 12.0 * (r0 * (px[0] + vx) + rk * (px[k] + vx) + rk1 * (px[k + 1] + vx))
                m1 += a_k / 12.0 * (r0 * (py[0] + vy) + rk * (py[k] + vy) + rk1 * (py[k + 1] + vy))
                m2 += a_k / 12.0 * (r0 * (pz[0] + vz) + rk * (pz[k] + vz) + rk1 * (pz[k + 1] + vz))

            has_area = area > 0.0
            if has_area:
                G[i] += mass
                MOM[i, 0] += m0
                MOM[i, 1] += m1
                MOM[i, 2] += m2
                tri_cover[t] += area

            for k in range(nv):
                lab = plab[k]
                if lab < 0:
                    continue
                k1 = k + 1 if k + 1 < nv else 0
                # flood fill across this bisector (even through degenerate
                # slivers, so discovery cannot leak)
                if mark[lab] != t:
                    mark[lab] = t
                    stack[top] = lab
                    top += 1
                if not has_area:
                    continue
                # locate the adjacency slot (i -> lab)
                slot = -1
                for ptr in range(indptr[i], indptr[i + 1]):
                    if indices[ptr] == lab:
                        slot = ptr
                        break
                if slot >= 0:
                    realized[slot] = 1
                if want_jac and slot >= 0:
                    ex = px[k1] - px[k]
                    ey = py[k1] - py[k]
                    ez = pz[k1] - pz[k]
                    elen = np.sqrt(ex * ex + ey * ey + ez * ez)
                    if elen > 0.0:
                        w0 = 2.0 * (P[lab, 0] - P[i, 0])
                        w1 = 2.0 * (P[lab, 1] - P[i, 1])
                        w2 = 2.0 * (P[lab, 2] - P[i, 2])
                        wdn = w0 * nx + w1 * ny + w2 * nz
                        tw0 = w0 - wdn * nx
                        tw1 = w1 - wdn * ny
                        tw2 = w2 - wdn * nz
                        wt = np.sqrt(tw0 * tw0 + tw1 * tw1 + tw2 * tw2)
                        if wt > 1e-300:
                            mxx = 0.5 * (px[k] + px[k1])
                            mxy = 0.5 * (py[k] + py[k1])
                            mxz = 0.5 * (pz[k] + pz[k1])
                            dx = 0.5 * ex * INV_SQRT3
                            dy = 0.5 * ey * INV_SQRT3
                            dz = 0.5 * ez * INV_SQRT3
                            val = 0.0
                            for sgn in (-1.0, 1.0):
                                qx = mxx + sgn * dx
                                qy = mxy + sgn * dy
                                qz = mxz + sgn * dz
                                rho = g0 * qx + g1 * qy + g2 * qz + h
                                if ps_mode == 1:
                                    dcoef = abs(_score(qx, qy, qz, P, C, i))
                                else:
                                    dcoef = 2.0
                                val += rho * dcoef
                            jac[slot] += 0.5 * elen * val / wt

            if want_polys and has_area:
                if n_poly >= poly_cell.shape[0] or n_vert + nv > poly_verts.shape[0]:
                    overflow = 1
                else:
                    poly_cell[n_poly] = i
                    poly_tri[n_poly] = t
                    poly_len[n_poly] = nv
                    for k in range(nv):
                        poly_verts[n_vert + k, 0] = px[k]
                        poly_verts[n_vert + k, 1] = py[k]
                        poly_verts[n_vert + k, 2] = pz[k]
                        poly_labels[n_vert + k] = plab[k]
                    n_vert += nv
                    n_poly += 1

    return G, MOM, jac, realized, tri_cover, owner, n_poly, n_vert, overflow
