# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster coverage kernel.

Mirrors ``_raster_py.rasterize_barycentric`` exactly: same coordinate
convention, boundary rule, tie-breaking and arithmetic order, so both
backends produce identical buffers. Compiled with -O2 and no fast-math to
keep IEEE semantics aligned with numpy.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, floor

cnp.import_array()


cdef inline bint _edge_accepts(double ex, double ey) nogil:
    return ey > 0.0 or (ey == 0.0 and ex < 0.0)


def rasterize_barycentric(verts, tris, int height, int width,
                          bint cull_backfaces=True):
    """See _raster_py.rasterize_barycentric for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = \
        np.ascontiguousarray(verts, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] f = \
        np.ascontiguousarray(tris, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] tri_id = \
        np.full((height, width), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] bary = \
        np.zeros((height, width, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] zbuf = \
        np.full((height, width), -INFINITY, dtype=np.float64)

    cdef int T = f.shape[0]
    cdef int t, r, c, c0, c1, r0, r1, i0, i1, i2
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double area2, xmin, xmax, ymin, ymax
    cdef double px, py, e_ab, e_bc, e_ca, w0, w1, w2, depth
    cdef double tmpx, tmpy, tmpz
    cdef bint ok_ab, ok_bc, ok_ca, flipped

    for t in range(T):
        i0 = f[t, 0]
        i1 = f[t, 1]
        i2 = f[t, 2]
        ax = v[i0, 0]; ay = v[i0, 1]; az = v[i0, 2]
        bx = v[i1, 0]; by = v[i1, 1]; bz = v[i1, 2]
        cx = v[i2, 0]; cy = v[i2, 1]; cz = v[i2, 2]

        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        if cull_backfaces and area2 < 0.0:
            continue
        flipped = area2 < 0.0
        if flipped:
            tmpx = bx; tmpy = by; tmpz = bz
            bx = cx; by = cy; bz = cz
            cx = tmpx; cy = tmpy; cz = tmpz
            area2 = -area2

        xmin = min(ax, min(bx, cx))
        xmax = max(ax, max(bx, cx))
        ymin = min(ay, min(by, cy))
        ymax = max(ay, max(by, cy))
        c0 = <int>floor((xmin + 1.0) * width / 2.0 - 0.5)
        c1 = <int>ceil((xmax + 1.0) * width / 2.0 - 0.5)
        r0 = <int>floor((ymin + 1.0) * height / 2.0 - 0.5)
        r1 = <int>ceil((ymax + 1.0) * height / 2.0 - 0.5)
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > width - 1:
            c1 = width - 1
        if r1 > height - 1:
            r1 = height - 1
        if c0 > c1 or r0 > r1:
            continue

        for r in range(r0, r1 + 1):
            py = (2.0 * r + 1.0) / height - 1.0
            for c in range(c0, c1 + 1):
                px = (2.0 * c + 1.0) / width - 1.0

                e_ab = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                e_bc = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                e_ca = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)

                ok_ab = e_ab > 0.0 or (e_ab == 0.0 and
                                       _edge_accepts(bx - ax, by - ay))
                ok_bc = e_bc > 0.0 or (e_bc == 0.0 and
                                       _edge_accepts(cx - bx, cy - by))
                ok_ca = e_ca > 0.0 or (e_ca == 0.0 and
                                       _edge_accepts(ax - cx, ay - cy))
                if not (ok_ab and ok_bc and ok_ca):
                    continue

                w0 = e_bc / area2
                w1 = e_ca / area2
                w2 = 1.0 - w0 - w1
                depth = w0 * az + w1 * bz + w2 * cz
                if flipped:
                    # report weights in the original vertex order
                    tmpx = w1; w1 = w2; w2 = tmpx
                if depth > zbuf[r, c]:
                    zbuf[r, c] = depth
                    tri_id[r, c] = t
                    bary[r, c, 0] = w0
                    bary[r, c, 1] = w1
                    bary[r, c, 2] = w2

    return tri_id, bary, zbuf
