"""UV-textured rasterization and binary-mask compositing.

The geometric pass (per-pixel triangle id, barycentric weights, z-buffer)
runs in the raster kernels and carries no gradients; color comes from
bilinear UV sampling in torch, so gradients flow to the texture texels.
Pose gradients are intentionally absent: poses come from given 3DMM
parameters and only the texture is refined.
"""

from dataclasses import dataclass

import numpy as np
import torch

from . import kernels
from .facemodel import project_vertices
from .uvtex import UVTexture

BACKGROUND_FILL = 0.0


@dataclass
class RasterOutput:
    image: torch.Tensor      # (3, H, W)
    mask: torch.Tensor       # (H, W) in {0, 1}
    tri_id: np.ndarray       # (H, W) int32, -1 where empty
    bary: np.ndarray         # (H, W, 3)
    zbuf: np.ndarray         # (H, W), -inf where empty


def sample_texture(texture, u, v):
    """Bilinear UV sample, differentiable in the texel values.

    texture: (3, U, U); u, v: (N,) tensors in [0, 1] (border clamped).
    Texel centers sit at (i + 0.5) / U.
    """
    res = texture.shape[-1]
    gu = (u * res - 0.5).clamp(0.0, res - 1.0)
    gv = (v * res - 0.5).clamp(0.0, res - 1.0)
    u0 = gu.floor().long().clamp(0, max(res - 2, 0))
    v0 = gv.floor().long().clamp(0, max(res - 2, 0))
    fu = (gu - u0).to(texture.dtype)
    fv = (gv - v0).to(texture.dtype)
    u1 = (u0 + 1).clamp(0, res - 1)
    v1 = (v0 + 1).clamp(0, res - 1)
    c00 = texture[:, v0, u0]
    c01 = texture[:, v0, u1]
    c10 = texture[:, v1, u0]
    c11 = texture[:, v1, u1]
    top = c00 * (1 - fu) + c01 * fu
    bot = c10 * (1 - fu) + c11 * fu
    return top * (1 - fv) + bot * fv


def rasterize(mesh, projected, uv, resolution):
    """Render the posed mesh with the given UV texture.

    projected: (V, 3) array from project_vertices; uv: UVTexture or a
    (3, U, U) tensor. Uncovered pixels take the background fill.
    """
    texture = uv.color if isinstance(uv, UVTexture) else uv
    projected = np.asarray(projected, dtype=np.float64)
    if projected.shape[0] != mesh.vertices.shape[0]:
        raise ValueError("projected vertex count does not match the mesh")
    tri_id, bary, zbuf = kernels.rasterize_barycentric(
        projected, mesh.triangles, resolution, resolution,
        cull_backfaces=True)

    image = torch.full((3, resolution, resolution), BACKGROUND_FILL,
                       dtype=texture.dtype, device=texture.device)
    covered = tri_id >= 0
    if covered.any():
        rows, cols = np.nonzero(covered)
        tids = tri_id[rows, cols]
        wts = bary[rows, cols]                          # (N, 3)
        uv_corners = mesh.uv_coords[mesh.triangles[tids]]  # (N, 3, 2)
        pos = np.einsum("nk,nkd->nd", wts, uv_corners)  # (N, 2)
        u = torch.as_tensor(pos[:, 0], dtype=texture.dtype,
                            device=texture.device)
        v = torch.as_tensor(pos[:, 1], dtype=texture.dtype,
                            device=texture.device)
        colors = sample_texture(texture, u, v)          # (3, N)
        image[:, torch.as_tensor(rows, device=texture.device),
              torch.as_tensor(cols, device=texture.device)] = colors

    mask = torch.as_tensor(covered.astype(np.float32), device=texture.device)
    return RasterOutput(image, mask, tri_id, bary, zbuf)


def composite(background, rendered, mask):
    """Overlay: rendered where mask==1, background elsewhere.

    Accepts single images (3, H, W) with a (H, W) mask or batches
    (N, 3, H, W) with (N, H, W) masks.
    """
    if background.shape != rendered.shape:
        raise ValueError("background and rendered resolutions differ")
    expect = background.shape[-2:] if background.dim() == 3 \
        else (background.shape[0],) + tuple(background.shape[-2:])
    if tuple(mask.shape) != tuple(expect):
        raise ValueError("mask resolution does not match the images")
    m = mask.to(background.dtype)
    if not torch.logical_or(m == 0.0, m == 1.0).all():
        raise ValueError("mask must be binary")
    if background.dim() == 4:
        m = m[:, None]
    return (1.0 - m) * background + m * rendered


def target_mask(mesh, target_motion, camera=None, resolution=64):
    """Coverage of the mesh posed with the target motion."""
    projected = project_vertices(mesh, target_motion, camera)
    tri_id, _, _ = kernels.rasterize_barycentric(
        projected, mesh.triangles, resolution, resolution,
        cull_backfaces=True)
    return torch.as_tensor((tri_id >= 0).astype(np.float32))


def triangle_id_png(raster, path):
    """Debug dump: per-pixel triangle id (+1) as a 16-bit PNG."""
    from PIL import Image

    ids = (raster.tri_id.astype(np.int64) + 1)
    if ids.max() > 65535:
        raise ValueError("triangle id exceeds 16-bit range")
    Image.fromarray(ids.astype(np.uint16)).save(path)
