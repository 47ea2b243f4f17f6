"""UV texture extraction and refinement.

Unwrapping inverts rasterization: every texel covered by a triangle in UV
space interpolates that triangle's projected image position and samples the
image there. Texels that are back-facing, depth-occluded, or whose bilinear
support leaves the face coverage get validity 0 and color 0. The refinement
network hallucinates the invalid regions, conditioned on the motion latent.
"""

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import kernels
from .facemodel import project_vertices
from .motion import AdaInConvBlock, init_module
from .perceptual import perceptual_l1

INVALID_FILL = 0.0


@dataclass
class UVTexture:
    """Texel colors in [-1, 1] plus a binary observed-texel mask."""

    color: torch.Tensor     # (3, U, U)
    validity: torch.Tensor  # (U, U), values in {0, 1}

    @property
    def resolution(self):
        return self.color.shape[-1]


def _layout_key(uv_coords, triangles, resolution):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(uv_coords).tobytes())
    h.update(np.ascontiguousarray(triangles).tobytes())
    h.update(str(resolution).encode())
    return h.hexdigest()


@lru_cache(maxsize=16)
def _layout_cached(key, uv_bytes, uv_shape, tri_bytes, tri_shape, resolution):
    uv = np.frombuffer(uv_bytes, dtype=np.float64).reshape(uv_shape)
    tris = np.frombuffer(tri_bytes, dtype=np.int32).reshape(tri_shape)
    verts = np.zeros((uv.shape[0], 3))
    verts[:, 0] = 2.0 * uv[:, 0] - 1.0
    verts[:, 1] = 2.0 * uv[:, 1] - 1.0
    tri_id, bary, _ = kernels.rasterize_barycentric(
        verts, tris, resolution, resolution, cull_backfaces=False)
    return tri_id, bary


def uv_layout(mesh, resolution):
    """Texel-to-triangle coverage of the UV atlas (cached; pose-free)."""
    uv = np.ascontiguousarray(mesh.uv_coords, dtype=np.float64)
    tris = np.ascontiguousarray(mesh.triangles, dtype=np.int32)
    return _layout_cached(_layout_key(uv, tris, resolution),
                          uv.tobytes(), uv.shape, tris.tobytes(), tris.shape,
                          resolution)


def bilinear_sample_np(img, x, y):
    """Sample (C, H, W) numpy image at normalized coords, border clamped.

    Pixel centers sit at (2i+1)/W - 1; matches torch grid_sample with
    align_corners=False and padding_mode='border'.
    """
    c, h, w = img.shape
    gx = np.clip((np.asarray(x) + 1.0) * 0.5 * w - 0.5, 0.0, w - 1.0)
    gy = np.clip((np.asarray(y) + 1.0) * 0.5 * h - 0.5, 0.0, h - 1.0)
    x0 = np.clip(np.floor(gx).astype(int), 0, w - 2) if w > 1 else \
        np.zeros_like(gx, dtype=int)
    y0 = np.clip(np.floor(gy).astype(int), 0, h - 2) if h > 1 else \
        np.zeros_like(gy, dtype=int)
    fx = gx - x0
    fy = gy - y0
    c00 = img[:, y0, x0]
    c01 = img[:, y0, np.minimum(x0 + 1, w - 1)]
    c10 = img[:, np.minimum(y0 + 1, h - 1), x0]
    c11 = img[:, np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
    top = c00 * (1 - fx) + c01 * fx
    bot = c10 * (1 - fx) + c11 * fx
    return top * (1 - fy) + bot * fy


def unwrap_uv(image, mesh, motion, camera=None, resolution=64,
              occlusion_tol=1e-3):
    """Sample image colors into UV space for the mesh posed by motion."""
    img = image.detach().cpu().numpy() if torch.is_tensor(image) \
        else np.asarray(image)
    h, w = img.shape[1:]
    projected = project_vertices(mesh, motion, camera)
    tri_id_uv, bary_uv = uv_layout(mesh, resolution)

    raster_tri, _, zbuf = kernels.rasterize_barycentric(
        projected, mesh.triangles, h, w, cull_backfaces=True)
    coverage = (raster_tri >= 0).astype(np.float64)

    a, b, c = (projected[mesh.triangles[:, k]] for k in range(3))
    area2 = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
             - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    front = area2 > 0.0

    color = np.zeros((3, resolution, resolution), dtype=np.float64)
    validity = np.zeros((resolution, resolution), dtype=np.float64)

    covered = tri_id_uv >= 0
    if covered.any() and mesh.triangles.shape[0] > 0:
        rows, cols = np.nonzero(covered)
        tids = tri_id_uv[rows, cols]
        wts = bary_uv[rows, cols]                      # (N, 3)
        corners = projected[mesh.triangles[tids]]      # (N, 3, 3)
        pos = np.einsum("nk,nkd->nd", wts, corners)    # (N, 3): x, y, z
        px, py, pz = pos[:, 0], pos[:, 1], pos[:, 2]

        ok = front[tids]
        # full bilinear support must stay on the pixel grid
        ok &= (np.abs(px) <= 1.0 - 1.0 / w) & (np.abs(py) <= 1.0 - 1.0 / h)
        cov_s = bilinear_sample_np(coverage[None], px, py)[0]
        ok &= cov_s > 0.999
        zref = np.where(np.isfinite(zbuf), zbuf, 0.0)
        z_s = bilinear_sample_np(zref[None], px, py)[0]
        ok &= pz >= z_s - occlusion_tol

        if ok.any():
            cols_ok = bilinear_sample_np(img.astype(np.float64),
                                         px[ok], py[ok])
            color[:, rows[ok], cols[ok]] = cols_ok
            validity[rows[ok], cols[ok]] = 1.0

    return UVTexture(torch.as_tensor(color, dtype=torch.float32),
                     torch.as_tensor(validity, dtype=torch.float32))


class ConditionedUNet(nn.Module):
    """Encoder-decoder with skip connections and AdaIN-conditioned decoder."""

    def __init__(self, in_channels, base_channels=16, seed=0):
        super().__init__()
        c = base_channels
        self.enc0 = nn.Sequential(
            nn.Conv2d(in_channels, c, 3, padding=1), nn.GELU())
        self.enc1 = nn.Sequential(
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.GELU())
        self.enc2 = nn.Sequential(
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1), nn.GELU())
        self.mid = AdaInConvBlock(4 * c, 4 * c)
        self.dec1 = AdaInConvBlock(4 * c + 2 * c, 2 * c)
        self.dec0 = AdaInConvBlock(2 * c + c, c)
        self.head = nn.Conv2d(c, 3, 3, padding=1)
        gen = torch.Generator().manual_seed(seed)
        init_module(self, gen)

    def forward(self, x, latent):
        e0 = self.enc0(x)
        e1 = self.enc1(e0)
        e2 = self.enc2(e1)
        m = self.mid(e2, latent)
        u1 = F.interpolate(m, scale_factor=2, mode="nearest")
        d1 = self.dec1(torch.cat([u1, e1], dim=1), latent)
        u0 = F.interpolate(d1, scale_factor=2, mode="nearest")
        d0 = self.dec0(torch.cat([u0, e0], dim=1), latent)
        return torch.tanh(self.head(d0))


class UvRefiner(nn.Module):
    """Completes a partially observed UV map, conditioned on the latent.

    Input channels: source image (resized to the UV resolution), initial UV
    colors, and the validity mask so the network can tell observed texels
    from hallucinated ones.
    """

    def __init__(self, channels=16, seed=0):
        super().__init__()
        self.net = ConditionedUNet(7, channels, seed=seed)

    def forward(self, source, uv_color, uv_validity, latent):
        squeeze = source.dim() == 3
        if squeeze:
            source, uv_color = source[None], uv_color[None]
            uv_validity = uv_validity[None]
            latent = latent[None] if latent.dim() == 1 else latent
        u = uv_color.shape[-1]
        if uv_color.shape[-2] != u:
            raise ValueError("UV texture must be square")
        if u % 4:
            raise ValueError(f"UV resolution {u} not divisible by 4")
        if source.shape[-1] != u or source.shape[-2] != u:
            source = F.interpolate(source, size=(u, u), mode="bilinear",
                                   align_corners=False)
        x = torch.cat([source, uv_color, uv_validity[:, None]], dim=1)
        out = self.net(x, latent)
        return out[0] if squeeze else out


def refine_uv(source, initial_uv, latent, refiner):
    """Full-validity refined texture from a partial unwrap."""
    color = refiner(source, initial_uv.color, initial_uv.validity, latent)
    return UVTexture(color, torch.ones_like(initial_uv.validity))


def uvref_loss(target, combined, extractor):
    """Perceptual distance between the target frame and the composite."""
    return perceptual_l1(target, combined, extractor)


def _as_color(uv):
    return uv.color if isinstance(uv, UVTexture) else uv


def consistency_loss(uv_s, uv_t):
    """Symmetric pull of both textures toward their mean.

    Algebraically equals the mean L1 distance between the two textures.
    """
    a, b = _as_color(uv_s), _as_color(uv_t)
    if a.shape != b.shape:
        raise ValueError(f"texture shapes differ: {tuple(a.shape)} vs "
                         f"{tuple(b.shape)}")
    mid = (a + b) / 2.0
    return (a - mid).abs().mean() + (b - mid).abs().mean()
