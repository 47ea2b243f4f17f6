"""Quarter-resolution flow prediction and bilinear image warping.

Flow fields hold absolute sampling coordinates in the normalized [-1, 1]
grid (pixel centers at (2i+1)/H - 1), so upsampling needs no magnitude
rescale. Warping samples with border clamping; a freshly initialized
predictor is an exact no-op because its head starts at zero on top of an
identity base grid.
"""

import torch
import torch.nn.functional as F
from torch import nn

from .motion import AdaInConvBlock, init_module
from .perceptual import perceptual_l1

FLOW_FACTOR = 4


def identity_grid(height, width=None, dtype=torch.float32, device=None):
    """Pixel-center sampling grid, shape (H, W, 2), channels (x, y)."""
    width = height if width is None else width
    xs = (2.0 * torch.arange(width, dtype=dtype, device=device) + 1.0) \
        / width - 1.0
    ys = (2.0 * torch.arange(height, dtype=dtype, device=device) + 1.0) \
        / height - 1.0
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


def flow_identity_base(flow_h, image_h, dtype=torch.float32, device=None):
    """Flow-resolution grid whose x4 align-corners upsample is the identity.

    Linear ramp g(i) = a*i + b with a = 2(H-1)/(H(h-1)), b = 1/H - 1; align-
    corners interpolation of a linear ramp is exact, so warping with the
    upsampled grid reproduces the image.
    """
    if flow_h < 2:
        raise ValueError("flow resolution must be at least 2")
    h, H = flow_h, image_h
    a = 2.0 * (H - 1) / (H * (h - 1))
    b = 1.0 / H - 1.0
    ramp = a * torch.arange(h, dtype=dtype, device=device) + b
    gy, gx = torch.meshgrid(ramp, ramp, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


class FlowPredictor(nn.Module):
    """Auto-encoder from (image, latent) to a quarter-resolution flow."""

    def __init__(self, channels=16, seed=0):
        super().__init__()
        c = channels
        self.stem = nn.Sequential(nn.Conv2d(3, c, 3, padding=1), nn.GELU())
        self.down1 = nn.Sequential(
            nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), nn.GELU())
        self.down2 = nn.Sequential(
            nn.Conv2d(2 * c, 4 * c, 3, stride=2, padding=1), nn.GELU())
        self.block1 = AdaInConvBlock(4 * c, 4 * c)
        self.block2 = AdaInConvBlock(4 * c, 4 * c)
        self.head = nn.Conv2d(4 * c, 2, 1)
        gen = torch.Generator().manual_seed(seed)
        init_module(self, gen, zero_names=("head",))

    def forward(self, image, latent):
        squeeze = image.dim() == 3
        if squeeze:
            image = image[None]
            latent = latent[None] if latent.dim() == 1 else latent
        h, w = image.shape[-2:]
        if h != w:
            raise ValueError("input image must be square")
        if h % FLOW_FACTOR:
            raise ValueError(
                f"image side {h} not divisible by {FLOW_FACTOR}")
        x = self.stem(image)
        x = self.down1(x)
        x = self.down2(x)
        x = self.block1(x, latent)
        x = self.block2(x, latent)
        delta = self.head(x).permute(0, 2, 3, 1)
        base = flow_identity_base(h // FLOW_FACTOR, h,
                                  dtype=image.dtype, device=image.device)
        flow = base[None] + delta
        return flow[0] if squeeze else flow


def predict_flow(image, latent, predictor):
    return predictor(image, latent)


def upsample_flow(flow, factor=FLOW_FACTOR):
    """Bilinear align-corners upsampling of a channel-last flow field."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return flow
    squeeze = flow.dim() == 3
    if squeeze:
        flow = flow[None]
    up = F.interpolate(flow.permute(0, 3, 1, 2), scale_factor=factor,
                       mode="bilinear", align_corners=True)
    up = up.permute(0, 2, 3, 1)
    return up[0] if squeeze else up


def warp_image(image, flow):
    """Bilinearly sample image at the flow's coordinates (border clamp)."""
    squeeze = image.dim() == 3
    if squeeze:
        image = image[None]
        flow = flow[None]
    if flow.shape[1:3] != image.shape[2:4]:
        raise ValueError(
            f"flow resolution {tuple(flow.shape[1:3])} != image resolution "
            f"{tuple(image.shape[2:4])}")
    out = F.grid_sample(image, flow, mode="bilinear",
                        padding_mode="border", align_corners=False)
    return out[0] if squeeze else out


def warp_loss(target, warped, extractor):
    """Perceptual distance between the target and the warped image."""
    return perceptual_l1(target, warped, extractor)
