"""Numba kernel: first-hit BVH traversal with per-ray stacks."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def traverse(node_min, node_max, node_left, node_right, node_start, node_count,
             order, tri_a, tri_e1, tri_e2, origins, dirs, t_min):
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_f = np.full(n, -1, dtype=np.int64)
    best_u = np.zeros(n)
    best_v = np.zeros(n)
    stack = np.empty(128, dtype=np.int64)

    for r in range(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        ix = 1.0 / dx if abs(dx) > 1e-300 else 1e300
        iy = 1.0 / dy if abs(dy) > 1e-300 else 1e300
        iz = 1.0 / dz if abs(dz) > 1e-300 else 1e300
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            t0x = (node_min[node, 0] - ox) * ix
            t1x = (node_max[node, 0] - ox) * ix
            if t0x > t1x:
                t0x, t1x = t1x, t0x
            t0y = (node_min[node, 1] - oy) * iy
            t1y = (node_max[node, 1] - oy) * iy
            if t0y > t1y:
                t0y, t1y = t1y, t0y
            t0z = (node_min[node, 2] - oz) * iz
            t1z = (node_max[node, 2] - oz) * iz
            if t0z > t1z:
                t0z, t1z = t1z, t0z
            tn = max(t0x, max(t0y, t0z))
            tf = min(t1x, min(t1y, t1z))
            if tf < tn or tf < t_min or tn >= best_t[r]:
                continue
            left = node_left[node]
            if left >= 0:
                stack[top] = left
                top += 1
                stack[top] = node_right[node]
                top += 1
                continue
            s = node_start[node]
            for k in range(s, s + node_count[node]):
                ax, ay, az = tri_a[k, 0], tri_a[k, 1], tri_a[k, 2]
                e1x, e1y, e1z = tri_e1[k, 0], tri_e1[k, 1], tri_e1[k, 2]
                e2x, e2y, e2z = tri_e2[k, 0], tri_e2[k, 1], tri_e2[k, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if abs(det) < 1e-300:
                    continue
                inv = 1.0 / det
                tx, ty, tz = ox - ax, oy - ay, oz - az
                u = (tx * px + ty * py + tz * pz) * inv
                if u < -1e-12 or u > 1.0 + 1e-12:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv
                if v < -1e-12 or u + v > 1.0 + 1e-12:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv
                if t > t_min and t < best_t[r]:
                    best_t[r] = t
                    best_f[r] = order[k]
                    best_u[r] = u
                    best_v[r] = v
    return best_t, best_f, best_u, best_v
