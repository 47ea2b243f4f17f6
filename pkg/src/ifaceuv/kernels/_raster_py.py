"""Vectorized numpy fallback for the raster coverage kernels.

Semantics are shared with the compiled backend (``_raster_c``):

* Screen coordinates are normalized to [-1, 1]; the pixel at (row r, col c)
  has its center at x = (2c+1)/W - 1, y = (2r+1)/H - 1 with y growing
  downward with the row index.
* A triangle is front-facing iff its doubled signed area
  cross2d(a, b, c) = (b-a) x (c-a) is positive in these axes.
* Interior pixels are claimed by every triangle containing their center;
  boundary pixels (an edge function exactly zero) are claimed by exactly one
  of two edge-sharing triangles via a directional (top/left style) rule.
* The z-buffer keeps the largest depth (depth grows toward the camera);
  equal depths keep the earlier triangle, so output is deterministic.
* Barycentric weights are returned in triangle vertex order and sum to 1
  exactly on covered pixels.
"""

import numpy as np


def _edge_accepts(ex, ey):
    """Boundary ownership for an edge a->b with direction (ex, ey).

    Exactly one of (ex, ey) / (-ex, -ey) is accepted, so two positively
    oriented triangles sharing an edge claim each boundary pixel once.
    """
    return (ey > 0.0) | ((ey == 0.0) & (ex < 0.0))


def rasterize_barycentric(verts, tris, height, width, cull_backfaces=True):
    """Z-buffered triangle coverage over an height x width pixel grid.

    verts: (V, 3) float64, columns (x, y, depth), x/y in [-1, 1].
    tris:  (T, 3) int32 vertex indices.

    Returns (tri_id int32 (H, W) with -1 for empty, bary float64 (H, W, 3),
    zbuf float64 (H, W) with -inf for empty).
    """
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int32)
    tri_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    zbuf = np.full((height, width), -np.inf, dtype=np.float64)

    xs = (2.0 * np.arange(width) + 1.0) / width - 1.0
    ys = (2.0 * np.arange(height) + 1.0) / height - 1.0

    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t]
        ax, ay, az = verts[i0]
        bx, by, bz = verts[i1]
        cx, cy, cz = verts[i2]

        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        if cull_backfaces and area2 < 0.0:
            continue
        flipped = area2 < 0.0
        if flipped:
            # normalize winding so the inside tests below see a positive area
            bx, by, bz, cx, cy, cz = cx, cy, cz, bx, by, bz
            area2 = -area2

        # pixel-center bounding box, clipped to the grid
        xmin = min(ax, bx, cx)
        xmax = max(ax, bx, cx)
        ymin = min(ay, by, cy)
        ymax = max(ay, by, cy)
        c0 = max(int(np.floor((xmin + 1.0) * width / 2.0 - 0.5)), 0)
        c1 = min(int(np.ceil((xmax + 1.0) * width / 2.0 - 0.5)), width - 1)
        r0 = max(int(np.floor((ymin + 1.0) * height / 2.0 - 0.5)), 0)
        r1 = min(int(np.ceil((ymax + 1.0) * height / 2.0 - 0.5)), height - 1)
        if c0 > c1 or r0 > r1:
            continue

        px = xs[c0:c1 + 1][None, :]
        py = ys[r0:r1 + 1][:, None]

        e_ab = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        e_bc = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        e_ca = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)

        inside = (
            ((e_ab > 0.0) | ((e_ab == 0.0) & _edge_accepts(bx - ax, by - ay)))
            & ((e_bc > 0.0) | ((e_bc == 0.0) & _edge_accepts(cx - bx, cy - by)))
            & ((e_ca > 0.0) | ((e_ca == 0.0) & _edge_accepts(ax - cx, ay - cy)))
        )
        if not inside.any():
            continue

        w0 = e_bc / area2
        w1 = e_ca / area2
        w2 = 1.0 - w0 - w1
        depth = w0 * az + w1 * bz + w2 * cz
        if flipped:
            # report weights in the triangle's original vertex order
            w1, w2 = w2, w1

        sub = (slice(r0, r1 + 1), slice(c0, c1 + 1))
        win = inside & (depth > zbuf[sub])
        if not win.any():
            continue
        zbuf[sub] = np.where(win, depth, zbuf[sub])
        tri_id[sub] = np.where(win, t, tri_id[sub])
        bary[sub + (0,)] = np.where(win, w0, bary[sub + (0,)])
        bary[sub + (1,)] = np.where(win, w1, bary[sub + (1,)])
        bary[sub + (2,)] = np.where(win, w2, bary[sub + (2,)])

    return tri_id, bary, zbuf
