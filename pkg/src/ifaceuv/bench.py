"""Benchmark the raster coverage kernels: compiled extension vs numpy.

Measures the geometric pass on a projected synthetic head and on random
triangle soups, which dominate unwrap/render time at paper scale.
"""

import time

import numpy as np

from .facemodel import (CameraConfig, IdentityParams, MotionParams,
                        build_mesh, project_vertices, synthetic_basis)
from .kernels import _raster_py

try:
    from .kernels import _raster_c
except ImportError:
    _raster_c = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _scenes(resolution, n_triangles, seed):
    basis = synthetic_basis(seed=seed)
    mesh = build_mesh(basis, IdentityParams(np.zeros(basis.identity_dim)),
                      np.zeros(64))
    head = project_vertices(mesh, MotionParams.zero(), CameraConfig())

    rng = np.random.default_rng(seed)
    verts = rng.uniform(-1, 1, size=(3 * n_triangles, 3))
    tris = np.arange(3 * n_triangles, dtype=np.int32).reshape(-1, 3)
    return [("synthetic head", head, mesh.triangles),
            (f"{n_triangles} random triangles", verts, tris)]


def run_bench(resolution=128, n_triangles=2000, repeats=5, seed=0):
    rows = []
    for name, verts, tris in _scenes(resolution, n_triangles, seed):
        t_py = _time(lambda: _raster_py.rasterize_barycentric(
            verts, tris, resolution, resolution, False), repeats)
        row = {"scene": name, "resolution": resolution,
               "python_ms": t_py * 1e3}
        if _raster_c is not None:
            t_c = _time(lambda: _raster_c.rasterize_barycentric(
                verts, tris, resolution, resolution, False), repeats)
            row["compiled_ms"] = t_c * 1e3
            row["speedup"] = t_py / t_c
        rows.append(row)
    return rows


def print_bench(rows):
    if not rows:
        return
    if "compiled_ms" not in rows[0]:
        print("compiled kernel unavailable; timing python backend only")
    for row in rows:
        line = (f"{row['scene']:28s} @{row['resolution']}px  "
                f"python {row['python_ms']:8.2f} ms")
        if "compiled_ms" in row:
            line += (f"  compiled {row['compiled_ms']:8.2f} ms  "
                     f"({row['speedup']:.1f}x)")
        print(line)
